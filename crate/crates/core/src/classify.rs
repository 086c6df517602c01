//! Source diffing and observed-change categorization between consecutive versions.
//!
//! Function extraction is lexical: comments and string literals are blanked
//! out, then every `function name(...)` declaration is read with its
//! parameter type list and body. Anything the scanner cannot make sense of
//! still shows up in the line counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};

use crate::ingest::VulnFinding;

pub const DEFAULT_GAS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDiff {
    pub added_functions: BTreeSet<String>,
    pub removed_functions: BTreeSet<String>,
    pub modified_functions: BTreeSet<String>,
    pub lines_added: usize,
    pub lines_removed: usize,
}

impl SourceDiff {
    pub fn is_empty(&self) -> bool {
        self.added_functions.is_empty()
            && self.removed_functions.is_empty()
            && self.modified_functions.is_empty()
            && self.lines_added == 0
            && self.lines_removed == 0
    }
}

pub fn diff_sources(old_source: &str, new_source: &str) -> SourceDiff {
    let old_fns = extract_functions(old_source);
    let new_fns = extract_functions(new_source);

    let mut diff = SourceDiff::default();
    for (sig, body) in &new_fns {
        match old_fns.get(sig) {
            None => {
                diff.added_functions.insert(sig.clone());
            }
            Some(old_body) if old_body != body => {
                diff.modified_functions.insert(sig.clone());
            }
            Some(_) => {}
        }
    }
    for sig in old_fns.keys() {
        if !new_fns.contains_key(sig) {
            diff.removed_functions.insert(sig.clone());
        }
    }
    let (added, removed) = line_changes(old_source, new_source);
    diff.lines_added = added;
    diff.lines_removed = removed;
    diff
}

/// Inserted and deleted line counts of a minimal line diff.
pub fn line_changes(old: &str, new: &str) -> (usize, usize) {
    let old_lines: Vec<&str> = old.lines().collect();
    let new_lines: Vec<&str> = new.lines().collect();
    let mut added = 0;
    let mut removed = 0;
    for op in capture_diff_slices(Algorithm::Myers, &old_lines, &new_lines) {
        match op {
            DiffOp::Equal { .. } => {}
            DiffOp::Delete { old_len, .. } => removed += old_len,
            DiffOp::Insert { new_len, .. } => added += new_len,
            DiffOp::Replace { old_len, new_len, .. } => {
                removed += old_len;
                added += new_len;
            }
        }
    }
    (added, removed)
}

/// Function signature → whitespace-normalized body. Bodiless declarations map to "".
pub fn extract_functions(source: &str) -> BTreeMap<String, String> {
    let clean = blank_comments_and_strings(source);
    let bytes = clean.as_bytes();
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut i = 0;
    while let Some(found) = find_keyword(bytes, i, b"function") {
        i = found + "function".len();
        let Some((sig, next)) = read_declaration(&clean, i) else {
            continue;
        };
        i = next.0;
        out.entry(sig)
            .and_modify(|b| {
                b.push('\n');
                b.push_str(&next.1);
            })
            .or_insert(next.1);
    }
    out
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn find_keyword(bytes: &[u8], from: usize, kw: &[u8]) -> Option<usize> {
    let mut i = from;
    while i + kw.len() <= bytes.len() {
        if &bytes[i..i + kw.len()] == kw
            && (i == 0 || !is_ident(bytes[i - 1]))
            && bytes.get(i + kw.len()).map_or(true, |b| !is_ident(*b))
        {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

/// Index just past the bracket matching the opener at `open`.
fn matching(bytes: &[u8], open: usize, lhs: u8, rhs: u8) -> Option<usize> {
    let mut depth = 0usize;
    for (k, &b) in bytes.iter().enumerate().skip(open) {
        if b == lhs {
            depth += 1;
        } else if b == rhs {
            depth -= 1;
            if depth == 0 {
                return Some(k + 1);
            }
        }
    }
    None
}

/// Reads `name(params) ... { body }` after the `function` keyword.
/// Returns the signature and `(resume offset, normalized body)`.
fn read_declaration(clean: &str, after_kw: usize) -> Option<(String, (usize, String))> {
    let bytes = clean.as_bytes();
    let mut i = skip_ws(bytes, after_kw);
    let name_start = i;
    while i < bytes.len() && is_ident(bytes[i]) {
        i += 1;
    }
    let name = &clean[name_start..i];
    i = skip_ws(bytes, i);
    if name.is_empty() || bytes.get(i) != Some(&b'(') {
        return None;
    }
    let params_end = matching(bytes, i, b'(', b')')?;
    let params = &clean[i + 1..params_end - 1];
    let sig = format!("{name}({})", param_types(params).join(","));

    // header (visibility, modifiers, returns) runs to the first top-level `{` or `;`
    let mut k = params_end;
    let mut depth = 0i32;
    while k < bytes.len() {
        match bytes[k] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b';' if depth == 0 => return Some((sig, (k + 1, String::new()))),
            b'{' if depth == 0 => break,
            _ => {}
        }
        k += 1;
    }
    if k >= bytes.len() {
        return Some((sig, (k, String::new())));
    }
    let body_end = matching(bytes, k, b'{', b'}').unwrap_or(bytes.len());
    let body = clean[k..body_end].split_whitespace().collect::<Vec<_>>().join(" ");
    Some((sig, (body_end, body)))
}

fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn param_types(params: &str) -> Vec<String> {
    if params.trim().is_empty() {
        return Vec::new();
    }
    split_top_level(params)
        .into_iter()
        .map(|p| canonical_type(p.trim()))
        .collect()
}

/// Type part of one parameter declaration, in ABI-ish canonical spelling.
fn canonical_type(param: &str) -> String {
    let compact = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
    let ty = if param.starts_with("mapping") {
        let open = param.find('(').unwrap_or(param.len());
        let end = matching(param.as_bytes(), open, b'(', b')').unwrap_or(param.len());
        compact(&param[..end])
    } else {
        let mut tokens = param.split_whitespace();
        let mut ty = tokens.next().unwrap_or_default().to_string();
        // `uint256 [] memory x` and `uint256[2] [] x`
        for t in tokens {
            if t.starts_with('[') {
                ty.push_str(t);
            } else {
                break;
            }
        }
        compact(&ty)
    };
    let (base, dims) = match ty.find('[') {
        Some(p) if !ty.starts_with("mapping") => (&ty[..p], &ty[p..]),
        _ => (ty.as_str(), ""),
    };
    let base = match base {
        "uint" => "uint256",
        "int" => "int256",
        "byte" => "bytes1",
        "ufixed" => "ufixed128x18",
        "fixed" => "fixed128x18",
        other => other,
    };
    format!("{base}{dims}")
}

/// Replaces comments and string literals with spaces (newlines kept).
fn blank_comments_and_strings(source: &str) -> String {
    #[derive(PartialEq)]
    enum State {
        Code,
        Line,
        Block,
        Str(char),
    }
    let mut out = String::with_capacity(source.len());
    let mut state = State::Code;
    let mut chars = source.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    out.push_str("  ");
                    state = State::Line;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    out.push_str("  ");
                    state = State::Block;
                }
                '"' | '\'' => {
                    out.push(' ');
                    state = State::Str(c);
                }
                _ => out.push(c),
            },
            State::Line => {
                if c == '\n' {
                    out.push('\n');
                    state = State::Code;
                } else {
                    out.push(' ');
                }
            }
            State::Block => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    out.push_str("  ");
                    state = State::Code;
                } else {
                    out.push(if c == '\n' { '\n' } else { ' ' });
                }
            }
            State::Str(quote) => {
                if c == '\\' {
                    chars.next();
                    out.push_str("  ");
                } else if c == quote {
                    out.push(' ');
                    state = State::Code;
                } else {
                    out.push(if c == '\n' { '\n' } else { ' ' });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeCategory {
    VulnerabilityFix,
    FeatureModification,
    GasOptimization,
    Other,
}

impl ChangeCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChangeCategory::VulnerabilityFix => "VulnerabilityFix",
            ChangeCategory::FeatureModification => "FeatureModification",
            ChangeCategory::GasOptimization => "GasOptimization",
            ChangeCategory::Other => "Other",
        }
    }
}

impl fmt::Display for ChangeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeConfig {
    /// Minimum relative reduction in deployment gas that counts as an optimization.
    pub gas_threshold: f64,
}

impl Default for ChangeConfig {
    fn default() -> Self {
        ChangeConfig {
            gas_threshold: DEFAULT_GAS_THRESHOLD,
        }
    }
}

/// Categories and supporting evidence for one version transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeVerdict {
    pub categories: Vec<ChangeCategory>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub from_version: u32,
    pub to_version: u32,
    pub categories: Vec<ChangeCategory>,
    pub evidence: Vec<String>,
}

impl ChangeReport {
    pub fn new(from_version: u32, verdict: ChangeVerdict) -> Self {
        ChangeReport {
            from_version,
            to_version: from_version + 1,
            categories: verdict.categories,
            evidence: verdict.evidence,
        }
    }
}

fn finding_categories(findings: &[VulnFinding]) -> BTreeSet<String> {
    findings
        .iter()
        .map(|f| f.category.trim().to_ascii_lowercase())
        .filter(|c| !c.is_empty())
        .collect()
}

/// Applies the four rules independently:
///
/// * vulnerability fix: some finding category present before is gone after;
/// * feature modification: a function signature was added or removed;
/// * gas optimization: deployment gas dropped by at least `gas_threshold`
///   (relative) and no signature changed;
/// * otherwise `Other`, alone.
pub fn classify_change(
    diff: &SourceDiff,
    old_findings: &[VulnFinding],
    new_findings: &[VulnFinding],
    old_gas: Option<u64>,
    new_gas: Option<u64>,
    config: &ChangeConfig,
) -> ChangeVerdict {
    let mut categories = Vec::new();
    let mut evidence = Vec::new();

    let before = finding_categories(old_findings);
    let after = finding_categories(new_findings);
    let fixed: Vec<&String> = before.difference(&after).collect();
    if !fixed.is_empty() {
        categories.push(ChangeCategory::VulnerabilityFix);
        evidence.extend(fixed.iter().map(|c| format!("fixed:{c}")));
    }

    let signatures_changed =
        !diff.added_functions.is_empty() || !diff.removed_functions.is_empty();
    if signatures_changed {
        categories.push(ChangeCategory::FeatureModification);
        evidence.extend(diff.added_functions.iter().map(|s| format!("sig+:{s}")));
        evidence.extend(diff.removed_functions.iter().map(|s| format!("sig-:{s}")));
    }

    if let (Some(old), Some(new), false) = (old_gas, new_gas, signatures_changed) {
        if old > 0 && new <= old {
            let reduction = (old - new) as f64;
            if reduction >= config.gas_threshold * old as f64 {
                categories.push(ChangeCategory::GasOptimization);
                let pct = (new as f64 - old as f64) / old as f64 * 100.0;
                evidence.push(format!("gas:{pct:.1}%"));
            }
        }
    }

    if categories.is_empty() {
        categories.push(ChangeCategory::Other);
        evidence.extend(diff.modified_functions.iter().map(|s| format!("sig~:{s}")));
        if diff.lines_added + diff.lines_removed > 0 {
            evidence.push(format!("lines:+{}/-{}", diff.lines_added, diff.lines_removed));
        }
    }
    ChangeVerdict {
        categories,
        evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Severity;
    use crate::types::Address;
    use evochain_testkit as oracle;
    use proptest::prelude::*;

    const TOKEN_V1: &str = r#"pragma solidity ^0.8.0;
// Simple token
contract Token {
    mapping(address => uint) balances;
    function transfer(address to, uint amount) public returns (bool) {
        balances[msg.sender] -= amount;
        balances[to] += amount;
        return true;
    }
}
"#;

    fn finding(category: &str) -> VulnFinding {
        VulnFinding {
            address: Address::ZERO,
            detector: "slither".into(),
            category: category.into(),
            severity: Severity::High,
            source_location: String::new(),
        }
    }

    #[test]
    fn identical_sources_give_empty_diff() {
        assert!(diff_sources(TOKEN_V1, TOKEN_V1).is_empty());
        assert!(diff_sources("", "").is_empty());
    }

    #[test]
    fn added_pause_function() {
        let v2 = TOKEN_V1.replace(
            "}\n}\n",
            "}\n    function pause() public {\n        paused = true;\n    }\n}\n",
        );
        let d = diff_sources(TOKEN_V1, &v2);
        assert_eq!(d.added_functions, BTreeSet::from(["pause()".to_string()]));
        assert!(d.removed_functions.is_empty());
        assert!(d.modified_functions.is_empty());
        assert_eq!((d.lines_added, d.lines_removed), (3, 0));
    }

    #[test]
    fn edited_transfer_body() {
        let v2 = TOKEN_V1.replace(
            "        balances[msg.sender] -= amount;\n",
            "        require(balances[msg.sender] >= amount, \"low\");\n        balances[msg.sender] -= amount;\n",
        );
        let d = diff_sources(TOKEN_V1, &v2);
        assert_eq!(
            d.modified_functions,
            BTreeSet::from(["transfer(address,uint256)".to_string()])
        );
        assert!(d.added_functions.is_empty() && d.removed_functions.is_empty());
        assert_eq!((d.lines_added, d.lines_removed), (1, 0));
    }

    #[test]
    fn comments_and_strings_do_not_declare_functions() {
        let src = r#"
// function fake(uint a) public {}
/* function alsoFake() {} */
contract C {
    string s = "function nope() {}";
    function real(uint256[] memory xs, address payable to, mapping(uint => bool) storage m) internal {}
    function iface(bytes calldata) external;
}
"#;
        let fns = extract_functions(src);
        let keys: Vec<_> = fns.keys().cloned().collect();
        assert_eq!(
            keys,
            vec![
                "iface(bytes)".to_string(),
                "real(uint256[],address,mapping(uint=>bool))".to_string()
            ]
        );
    }

    #[test]
    fn modifiers_with_parens_before_body() {
        let src = "function f(uint a) external onlyRole(ADMIN) returns (uint b) { return a; }";
        let fns = extract_functions(src);
        assert_eq!(fns.get("f(uint256)").unwrap(), "{ return a; }");
    }

    #[test]
    fn unterminated_input_is_tolerated() {
        let fns = extract_functions("function broken(uint a");
        assert!(fns.is_empty());
        let fns = extract_functions("function open(uint a) public { if (x) {");
        assert!(fns.contains_key("open(uint256)"));
    }

    #[test]
    fn nothing_fires_gives_other() {
        let v = classify_change(
            &SourceDiff::default(),
            &[finding("reentrancy")],
            &[finding("reentrancy")],
            Some(100),
            Some(100),
            &ChangeConfig::default(),
        );
        assert_eq!(v.categories, vec![ChangeCategory::Other]);
    }

    #[test]
    fn vulnerability_fix_rule() {
        let v = classify_change(
            &SourceDiff::default(),
            &[finding("reentrancy")],
            &[],
            None,
            None,
            &ChangeConfig::default(),
        );
        assert_eq!(v.categories, vec![ChangeCategory::VulnerabilityFix]);
        assert_eq!(v.evidence, vec!["fixed:reentrancy".to_string()]);
    }

    #[test]
    fn gas_rule_at_ten_percent() {
        let v = classify_change(
            &SourceDiff::default(),
            &[],
            &[],
            Some(1_000_000),
            Some(900_000),
            &ChangeConfig::default(),
        );
        assert_eq!(v.categories, vec![ChangeCategory::GasOptimization]);
        assert_eq!(v.evidence, vec!["gas:-10.0%".to_string()]);
    }

    #[test]
    fn gas_threshold_boundary() {
        let cfg = ChangeConfig::default();
        let at = classify_change(&SourceDiff::default(), &[], &[], Some(100), Some(95), &cfg);
        assert_eq!(at.categories, vec![ChangeCategory::GasOptimization]);
        let below = classify_change(&SourceDiff::default(), &[], &[], Some(100), Some(96), &cfg);
        assert_eq!(below.categories, vec![ChangeCategory::Other]);
        let zero = classify_change(&SourceDiff::default(), &[], &[], Some(0), Some(0), &cfg);
        assert_eq!(zero.categories, vec![ChangeCategory::Other]);
    }

    #[test]
    fn feature_suppresses_gas_and_combines_with_fix() {
        let diff = SourceDiff {
            added_functions: BTreeSet::from(["pause()".to_string()]),
            ..Default::default()
        };
        let v = classify_change(
            &diff,
            &[finding("Reentrancy")],
            &[finding("overflow")],
            Some(1_000),
            Some(500),
            &ChangeConfig::default(),
        );
        assert_eq!(
            v.categories,
            vec![ChangeCategory::VulnerabilityFix, ChangeCategory::FeatureModification]
        );
        assert_eq!(v.evidence, vec!["fixed:reentrancy", "sig+:pause()"]);
    }

    #[test]
    fn line_diff_matches_lcs_on_fixture() {
        let old = "a\nb\nc\nd\n";
        let new = "a\nx\nc\nd\ny\n";
        assert_eq!(line_changes(old, new), (2, 1));
    }

    fn arb_source() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("function f(uint a) public { x = 1; }".to_string()),
                Just("function g() external;".to_string()),
                Just("// comment".to_string()),
                Just("}".to_string()),
                Just("{".to_string()),
                Just("string s = \"(\";".to_string()),
                "[a-z(){};\"/* ]{0,12}",
            ],
            0..25,
        )
        .prop_map(|lines| lines.join("\n"))
    }

    fn arb_findings() -> impl Strategy<Value = Vec<VulnFinding>> {
        proptest::collection::vec(
            prop_oneof![Just("reentrancy"), Just("overflow"), Just("tx-origin")].prop_map(finding),
            0..4,
        )
    }

    proptest! {
        #[test]
        fn self_diff_is_empty(src in arb_source()) {
            prop_assert!(diff_sources(&src, &src).is_empty());
        }

        #[test]
        fn line_counts_match_lcs_oracle(a in arb_source(), b in arb_source()) {
            let d = diff_sources(&a, &b);
            let al: Vec<&str> = a.lines().collect();
            let bl: Vec<&str> = b.lines().collect();
            let lcs = oracle::lcs_len(&al, &bl);
            prop_assert_eq!(d.lines_added, bl.len() - lcs);
            prop_assert_eq!(d.lines_removed, al.len() - lcs);
            prop_assert!(d.added_functions.is_disjoint(&d.removed_functions));
        }

        #[test]
        fn verdict_invariants(
            a in arb_source(), b in arb_source(),
            old in arb_findings(), new in arb_findings(),
            og in proptest::option::of(0u64..2_000_000), ng in proptest::option::of(0u64..2_000_000),
            drop in 0usize..4,
        ) {
            let diff = diff_sources(&a, &b);
            let cfg = ChangeConfig::default();
            let v = classify_change(&diff, &old, &new, og, ng, &cfg);
            prop_assert!(!v.categories.is_empty());
            if v.categories.contains(&ChangeCategory::Other) {
                prop_assert_eq!(v.categories.len(), 1);
            } else {
                prop_assert!(!v.evidence.is_empty());
            }
            let mut sorted = v.categories.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(&sorted, &v.categories);
            prop_assert_eq!(&classify_change(&diff, &old, &new, og, ng, &cfg), &v);

            // dropping a finding from the newer version never loses a fix
            if v.categories.contains(&ChangeCategory::VulnerabilityFix) && !new.is_empty() {
                let mut fewer = new.clone();
                fewer.remove(drop % new.len());
                let w = classify_change(&diff, &old, &fewer, og, ng, &cfg);
                prop_assert!(w.categories.contains(&ChangeCategory::VulnerabilityFix));
            }
        }
    }
}
