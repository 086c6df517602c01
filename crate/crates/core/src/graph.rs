//! Embedded property graph of proxies, their versions and observed changes.
//!
//! Nodes: [`ProxyNode`] keyed by address, [`VersionNode`] keyed by
//! `(proxy, version_number)`. Edges: IMPLEMENTS (proxy → each of its
//! versions, implied by the version key) and OBSERVED_CHANGE (version k →
//! version k+1 of the same proxy). Writes are last-write-wins by key and
//! validated eagerly, so the store never holds a dangling edge.
//!
//! Snapshot format is NDJSON: a header line, then proxies, versions and
//! changes each sorted by key, then a checksum line holding the SHA-256 of
//! every preceding byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::ChangeCategory;
use crate::types::Address;

pub const MAX_PAGE_LIMIT: usize = 500;
const SNAPSHOT_FORMAT: &str = "evochain-graph";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("referential integrity: {0}")]
    ReferentialIntegrity(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid query: {0}")]
    Validation(String),
    #[error("corrupt snapshot: {0}")]
    Corruption(String),
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyNode {
    pub address: Address,
    pub proxy_type: String,
    pub created_at: u64,
    /// Maintained by the store: number of IMPLEMENTS edges out of this proxy.
    pub total_versions: u32,
    #[serde(default)]
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VersionKey {
    pub proxy: Address,
    pub version_number: u32,
}

impl VersionKey {
    pub fn new(proxy: Address, version_number: u32) -> Self {
        VersionKey {
            proxy,
            version_number,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionNode {
    pub proxy: Address,
    pub version_number: u32,
    pub contract_address: Address,
    pub creation_timestamp: Option<u64>,
    pub last_tx_timestamp: Option<u64>,
    pub total_transactions: u64,
    pub vulnerabilities: Vec<String>,
}

impl VersionNode {
    pub fn key(&self) -> VersionKey {
        VersionKey::new(self.proxy, self.version_number)
    }
}

/// IMPLEMENTS relationship; derived from version keys rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplementsEdge {
    pub from: Address,
    pub to: VersionKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedChangeEdge {
    pub from: VersionKey,
    pub to: VersionKey,
    pub categories: Vec<ChangeCategory>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageItem {
    #[serde(flatten)]
    pub version: VersionNode,
    /// OBSERVED_CHANGE edge into this version, if any.
    pub change: Option<ObservedChangeEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lineage {
    pub found: bool,
    pub proxy: Option<ProxyNode>,
    pub items: Vec<LineageItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindFilter {
    pub proxy_type: Option<String>,
    pub min_versions: Option<u32>,
    pub vulnerability: Option<String>,
    /// Hex prefix matched against the proxy address or any of its version contracts.
    pub address_prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub limit: usize,
    pub offset: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page {
            limit: 50,
            offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FindPage {
    pub items: Vec<ProxyNode>,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub implements: usize,
    pub observed_change: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub proxy_count: usize,
    pub version_count: usize,
    pub edge_counts: EdgeCounts,
    pub by_type: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditIssue {
    pub kind: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphStore {
    proxies: BTreeMap<Address, ProxyNode>,
    versions: BTreeMap<VersionKey, VersionNode>,
    /// Keyed by the edge's target version: each version has at most one incoming change.
    changes: BTreeMap<VersionKey, ObservedChangeEdge>,
}

/// Single-writer, multi-reader handle. Readers holding the read guard see a
/// consistent store.
pub type SharedGraph = Arc<RwLock<GraphStore>>;

impl GraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_shared(self) -> SharedGraph {
        Arc::new(RwLock::new(self))
    }

    fn version_count_of(&self, proxy: &Address) -> u32 {
        self.versions
            .range(VersionKey::new(*proxy, 0)..=VersionKey::new(*proxy, u32::MAX))
            .count() as u32
    }

    pub fn upsert_proxy(&mut self, mut node: ProxyNode) -> Address {
        node.total_versions = self.version_count_of(&node.address);
        let key = node.address;
        self.proxies.insert(key, node);
        key
    }

    pub fn upsert_version(
        &mut self,
        node: VersionNode,
        implements_from: Address,
    ) -> Result<VersionKey, GraphError> {
        if node.proxy != implements_from {
            return Err(GraphError::Schema(format!(
                "version keyed under {} cannot be implemented by {implements_from}",
                node.proxy
            )));
        }
        if node.version_number == 0 {
            return Err(GraphError::Schema("version_number must be >= 1".into()));
        }
        if !self.proxies.contains_key(&implements_from) {
            return Err(GraphError::ReferentialIntegrity(format!(
                "proxy {implements_from} does not exist"
            )));
        }
        let key = node.key();
        if self.versions.insert(key, node).is_none() {
            if let Some(p) = self.proxies.get_mut(&implements_from) {
                p.total_versions += 1;
            }
        }
        Ok(key)
    }

    pub fn upsert_change(&mut self, edge: ObservedChangeEdge) -> Result<VersionKey, GraphError> {
        if edge.from.proxy != edge.to.proxy {
            return Err(GraphError::Schema(format!(
                "change edge crosses proxies {} and {}",
                edge.from.proxy, edge.to.proxy
            )));
        }
        if edge.to.version_number != edge.from.version_number.wrapping_add(1) {
            return Err(GraphError::Schema(format!(
                "change edge must join consecutive versions, got v{} -> v{}",
                edge.from.version_number, edge.to.version_number
            )));
        }
        if edge.categories.is_empty() {
            return Err(GraphError::Schema("change edge without categories".into()));
        }
        if edge.categories.contains(&ChangeCategory::Other) && edge.categories.len() > 1 {
            return Err(GraphError::Schema("Other must appear alone".into()));
        }
        for end in [&edge.from, &edge.to] {
            if !self.versions.contains_key(end) {
                return Err(GraphError::ReferentialIntegrity(format!(
                    "version {} of {} does not exist",
                    end.version_number, end.proxy
                )));
            }
        }
        let key = edge.to;
        self.changes.insert(key, edge);
        Ok(key)
    }

    pub fn proxy(&self, address: &Address) -> Option<&ProxyNode> {
        self.proxies.get(address)
    }

    pub fn proxies(&self) -> impl Iterator<Item = &ProxyNode> {
        self.proxies.values()
    }

    pub fn versions(&self) -> impl Iterator<Item = &VersionNode> {
        self.versions.values()
    }

    pub fn versions_of<'a>(&'a self, proxy: &Address) -> impl Iterator<Item = &'a VersionNode> + 'a {
        self.versions
            .range(VersionKey::new(*proxy, 0)..=VersionKey::new(*proxy, u32::MAX))
            .map(|(_, v)| v)
    }

    pub fn changes(&self) -> impl Iterator<Item = &ObservedChangeEdge> {
        self.changes.values()
    }

    pub fn implements_edges(&self) -> impl Iterator<Item = ImplementsEdge> + '_ {
        self.versions.keys().map(|k| ImplementsEdge {
            from: k.proxy,
            to: *k,
        })
    }

    pub fn get_lineage(&self, proxy: &Address) -> Lineage {
        let Some(node) = self.proxies.get(proxy) else {
            return Lineage {
                found: false,
                proxy: None,
                items: Vec::new(),
            };
        };
        let items = self
            .versions_of(proxy)
            .map(|v| LineageItem {
                version: v.clone(),
                change: self.changes.get(&v.key()).cloned(),
            })
            .collect();
        Lineage {
            found: true,
            proxy: Some(node.clone()),
            items,
        }
    }

    fn matches(&self, node: &ProxyNode, filter: &FindFilter, prefix: Option<&str>) -> bool {
        if let Some(t) = &filter.proxy_type {
            if !node.proxy_type.eq_ignore_ascii_case(t) {
                return false;
            }
        }
        if let Some(min) = filter.min_versions {
            if node.total_versions < min {
                return false;
            }
        }
        if let Some(vuln) = &filter.vulnerability {
            let hit = self
                .versions_of(&node.address)
                .any(|v| v.vulnerabilities.iter().any(|x| x.eq_ignore_ascii_case(vuln)));
            if !hit {
                return false;
            }
        }
        if let Some(prefix) = prefix {
            let hit = node.address.to_string()[2..].starts_with(prefix)
                || self
                    .versions_of(&node.address)
                    .any(|v| v.contract_address.to_string()[2..].starts_with(prefix));
            if !hit {
                return false;
            }
        }
        true
    }

    /// Conjunctive filter, ordered by address; `total` counts every match.
    pub fn find(&self, filter: &FindFilter, page: Page) -> Result<FindPage, GraphError> {
        if page.limit == 0 || page.limit > MAX_PAGE_LIMIT {
            return Err(GraphError::Validation(format!(
                "limit must be in 1..={MAX_PAGE_LIMIT}, got {}",
                page.limit
            )));
        }
        let prefix = match &filter.address_prefix {
            Some(p) => Some(normalize_prefix(p)?),
            None => None,
        };
        let mut total = 0;
        let mut items = Vec::new();
        for node in self.proxies.values() {
            if !self.matches(node, filter, prefix.as_deref()) {
                continue;
            }
            if total >= page.offset && items.len() < page.limit {
                items.push(node.clone());
            }
            total += 1;
        }
        Ok(FindPage {
            items,
            total,
            limit: page.limit,
            offset: page.offset,
        })
    }

    pub fn stats(&self) -> StoreStats {
        let mut by_type = BTreeMap::new();
        for p in self.proxies.values() {
            *by_type.entry(p.proxy_type.clone()).or_insert(0) += 1;
        }
        StoreStats {
            proxy_count: self.proxies.len(),
            version_count: self.versions.len(),
            edge_counts: EdgeCounts {
                implements: self.versions.len(),
                observed_change: self.changes.len(),
            },
            by_type,
        }
    }

    /// Full-store integrity check. Empty means sound.
    pub fn audit(&self) -> Vec<AuditIssue> {
        let mut issues = Vec::new();
        for key in self.versions.keys() {
            if !self.proxies.contains_key(&key.proxy) {
                issues.push(AuditIssue {
                    kind: "dangling_implements",
                    detail: format!("version {} of missing proxy {}", key.version_number, key.proxy),
                });
            }
        }
        for edge in self.changes.values() {
            if !self.versions.contains_key(&edge.from) || !self.versions.contains_key(&edge.to) {
                issues.push(AuditIssue {
                    kind: "dangling_change",
                    detail: format!(
                        "{} v{} -> v{}",
                        edge.from.proxy, edge.from.version_number, edge.to.version_number
                    ),
                });
            }
            if edge.from.proxy != edge.to.proxy
                || edge.to.version_number != edge.from.version_number + 1
            {
                issues.push(AuditIssue {
                    kind: "non_consecutive_change",
                    detail: format!(
                        "{} v{} -> {} v{}",
                        edge.from.proxy, edge.from.version_number, edge.to.proxy, edge.to.version_number
                    ),
                });
            }
        }
        for p in self.proxies.values() {
            let n = self.version_count_of(&p.address);
            if n != p.total_versions {
                issues.push(AuditIssue {
                    kind: "version_count_mismatch",
                    detail: format!("{} records {} versions, has {n}", p.address, p.total_versions),
                });
            }
        }
        issues
    }

    /// Canonical snapshot bytes; equal stores produce identical bytes.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let mut line = |record: &SnapshotLine| {
            serde_json::to_writer(&mut body, record).expect("snapshot records serialize");
            body.push(b'\n');
        };
        line(&SnapshotLine::Header {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
        });
        for p in self.proxies.values() {
            line(&SnapshotLine::Proxy(p.clone()));
        }
        for v in self.versions.values() {
            line(&SnapshotLine::Version(v.clone()));
        }
        for c in self.changes.values() {
            line(&SnapshotLine::Change(c.clone()));
        }
        let checksum = hex::encode(Sha256::digest(&body));
        body.extend_from_slice(checksum_line(&checksum).as_bytes());
        body
    }

    /// SHA-256 of the canonical snapshot (the value on its checksum line).
    pub fn digest(&self) -> String {
        let bytes = self.snapshot_bytes();
        let (body, _) = split_trailer(&bytes).expect("own snapshot is well formed");
        hex::encode(Sha256::digest(body))
    }

    pub fn snapshot(&self, path: &Path) -> Result<(), GraphError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.snapshot_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(&bytes)
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let (body, trailer) = split_trailer(bytes)
            .ok_or_else(|| GraphError::Corruption("missing checksum line".into()))?;
        let expected = checksum_line(&hex::encode(Sha256::digest(body)));
        if trailer != expected.as_bytes() {
            return Err(GraphError::Corruption("checksum mismatch".into()));
        }
        let text = std::str::from_utf8(body)
            .map_err(|_| GraphError::Corruption("snapshot is not UTF-8".into()))?;

        let corrupt = |n: usize, msg: String| GraphError::Corruption(format!("line {n}: {msg}"));
        let mut store = GraphStore::new();
        let mut stage = 0u8;
        let mut recorded_totals = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let record: SnapshotLine =
                serde_json::from_str(raw).map_err(|e| corrupt(n, e.to_string()))?;
            let this_stage = match &record {
                SnapshotLine::Header { .. } => 0,
                SnapshotLine::Proxy(_) => 1,
                SnapshotLine::Version(_) => 2,
                SnapshotLine::Change(_) => 3,
            };
            if (n == 1) != (this_stage == 0) || this_stage < stage {
                return Err(corrupt(n, "section out of order".into()));
            }
            stage = this_stage;
            match record {
                SnapshotLine::Header { format, version } => {
                    if format != SNAPSHOT_FORMAT || version != SNAPSHOT_VERSION {
                        return Err(corrupt(n, format!("unsupported format {format} v{version}")));
                    }
                }
                SnapshotLine::Proxy(p) => {
                    recorded_totals.push((p.address, p.total_versions));
                    store.upsert_proxy(p);
                }
                SnapshotLine::Version(v) => {
                    let from = v.proxy;
                    store.upsert_version(v, from).map_err(|e| corrupt(n, e.to_string()))?;
                }
                SnapshotLine::Change(c) => {
                    store.upsert_change(c).map_err(|e| corrupt(n, e.to_string()))?;
                }
            }
        }
        if stage == 0 && text.is_empty() {
            return Err(GraphError::Corruption("missing header".into()));
        }
        for (addr, total) in recorded_totals {
            if store.proxies.get(&addr).map(|p| p.total_versions) != Some(total) {
                return Err(GraphError::Corruption(format!(
                    "proxy {addr} records {total} versions"
                )));
            }
        }
        if let Some(issue) = store.audit().into_iter().next() {
            return Err(GraphError::Corruption(format!("{}: {}", issue.kind, issue.detail)));
        }
        Ok(store)
    }
}

fn checksum_line(hex_digest: &str) -> String {
    format!("{{\"section\":\"checksum\",\"sha256\":\"{hex_digest}\"}}\n")
}

/// Splits off the final line (the checksum line, newline included).
fn split_trailer(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    if bytes.last() != Some(&b'\n') {
        return None;
    }
    let start = bytes[..bytes.len() - 1]
        .iter()
        .rposition(|b| *b == b'\n')
        .map_or(0, |p| p + 1);
    Some((&bytes[..start], &bytes[start..]))
}

fn normalize_prefix(prefix: &str) -> Result<String, GraphError> {
    let p = prefix.trim();
    let digits = p
        .strip_prefix("0x")
        .or_else(|| p.strip_prefix("0X"))
        .unwrap_or(p)
        .to_ascii_lowercase();
    if digits.len() > 40 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(GraphError::Validation(format!(
            "address prefix {prefix:?} is not hex"
        )));
    }
    Ok(digits)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "section", content = "record", rename_all = "snake_case")]
enum SnapshotLine {
    Header { format: String, version: u32 },
    Proxy(ProxyNode),
    Version(VersionNode),
    Change(ObservedChangeEdge),
}

/// Writes audit issues as NDJSON.
pub fn write_audit_report(path: &Path, issues: &[AuditIssue]) -> Result<(), GraphError> {
    let mut out = String::new();
    for issue in issues {
        out.push_str(&serde_json::to_string(issue).expect("audit issues serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn addr(b: u8) -> Address {
        Address::from_bytes([b; 20])
    }

    fn proxy(a: Address, kind: &str) -> ProxyNode {
        ProxyNode {
            address: a,
            proxy_type: kind.into(),
            created_at: 100,
            total_versions: 0,
            evidence: vec![],
        }
    }

    fn version(p: Address, n: u32, contract: Address) -> VersionNode {
        VersionNode {
            proxy: p,
            version_number: n,
            contract_address: contract,
            creation_timestamp: Some(10 * n as u64),
            last_tx_timestamp: None,
            total_transactions: n as u64,
            vulnerabilities: vec![],
        }
    }

    fn change(p: Address, from: u32, to: u32) -> ObservedChangeEdge {
        ObservedChangeEdge {
            from: VersionKey::new(p, from),
            to: VersionKey::new(p, to),
            categories: vec![ChangeCategory::Other],
            evidence: vec![],
        }
    }

    /// proxy 0x01 with [A, B, A], proxy 0x02 with two versions.
    fn fixture() -> GraphStore {
        let mut g = GraphStore::new();
        let p1 = addr(1);
        let p2 = addr(2);
        g.upsert_proxy(proxy(p1, "Eip1967"));
        g.upsert_proxy(proxy(p2, "UupsLike"));
        for (n, c) in [(1, 0xa), (2, 0xb), (3, 0xa)] {
            g.upsert_version(version(p1, n, addr(c)), p1).unwrap();
        }
        g.upsert_version(version(p2, 1, addr(0xc)), p2).unwrap();
        let mut v = version(p2, 2, addr(0xd));
        v.vulnerabilities = vec!["reentrancy".into()];
        g.upsert_version(v, p2).unwrap();
        g.upsert_change(change(p1, 1, 2)).unwrap();
        g.upsert_change(change(p1, 2, 3)).unwrap();
        g.upsert_change(change(p2, 1, 2)).unwrap();
        g
    }

    #[test]
    fn version_without_proxy_is_rejected() {
        let mut g = GraphStore::new();
        let err = g.upsert_version(version(addr(1), 1, addr(2)), addr(1)).unwrap_err();
        assert!(matches!(err, GraphError::ReferentialIntegrity(_)));
    }

    #[test]
    fn proxy_upsert_is_last_write_wins() {
        let mut g = GraphStore::new();
        g.upsert_proxy(proxy(addr(1), "Eip1967"));
        g.upsert_proxy(proxy(addr(1), "BeaconLike"));
        assert_eq!(g.proxies().count(), 1);
        assert_eq!(g.proxy(&addr(1)).unwrap().proxy_type, "BeaconLike");
    }

    #[test]
    fn non_consecutive_change_is_schema_error() {
        let mut g = fixture();
        assert!(matches!(
            g.upsert_change(change(addr(1), 1, 3)),
            Err(GraphError::Schema(_))
        ));
        let mut cross = change(addr(1), 1, 2);
        cross.to.proxy = addr(2);
        assert!(matches!(g.upsert_change(cross), Err(GraphError::Schema(_))));
        assert!(matches!(
            g.upsert_change(change(addr(1), 3, 4)),
            Err(GraphError::ReferentialIntegrity(_))
        ));
        let mut mixed = change(addr(1), 1, 2);
        mixed.categories.push(ChangeCategory::GasOptimization);
        assert!(matches!(g.upsert_change(mixed), Err(GraphError::Schema(_))));
    }

    #[test]
    fn total_versions_tracks_edges_even_if_caller_lies() {
        let mut g = fixture();
        let mut p = proxy(addr(1), "Eip1967");
        p.total_versions = 99;
        g.upsert_proxy(p);
        assert_eq!(g.proxy(&addr(1)).unwrap().total_versions, 3);
        g.upsert_version(version(addr(1), 2, addr(0xe)), addr(1)).unwrap();
        assert_eq!(g.proxy(&addr(1)).unwrap().total_versions, 3);
        assert!(g.audit().is_empty());
    }

    #[test]
    fn lineage_cases() {
        let g = fixture();
        let unknown = g.get_lineage(&addr(9));
        assert!(!unknown.found && unknown.items.is_empty());

        let l = g.get_lineage(&addr(1));
        assert_eq!(l.items.len(), 3);
        assert_eq!(
            l.items.iter().map(|i| i.version.version_number).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert!(l.items[0].change.is_none());
        assert!(l.items[1].change.is_some() && l.items[2].change.is_some());

        let mut single = GraphStore::new();
        single.upsert_proxy(proxy(addr(3), "MinimalEip1167"));
        single.upsert_version(version(addr(3), 1, addr(4)), addr(3)).unwrap();
        let l = single.get_lineage(&addr(3));
        assert_eq!(l.items.len(), 1);
        assert!(l.items[0].change.is_none());
    }

    #[test]
    fn find_cases() {
        let empty = GraphStore::new();
        let r = empty.find(&FindFilter::default(), Page::default()).unwrap();
        assert_eq!((r.items.len(), r.total), (0, 0));

        let mut g = fixture();
        g.upsert_proxy(proxy(addr(3), "Eip1967"));
        let f = FindFilter {
            proxy_type: Some("Eip1967".into()),
            ..Default::default()
        };
        let r = g.find(&f, Page::default()).unwrap();
        assert_eq!(r.total, 2);
        let second = g.find(&f, Page { limit: 1, offset: 1 }).unwrap();
        assert_eq!(second.items[0].address, addr(3));
        assert_eq!(second.total, 2);

        assert!(matches!(
            g.find(&f, Page { limit: 0, offset: 0 }),
            Err(GraphError::Validation(_))
        ));
        assert!(g.find(&f, Page { limit: 501, offset: 0 }).is_err());
        assert!(g.find(&f, Page { limit: 500, offset: 0 }).is_ok());

        let by_vuln = FindFilter {
            vulnerability: Some("REENTRANCY".into()),
            ..Default::default()
        };
        assert_eq!(g.find(&by_vuln, Page::default()).unwrap().items[0].address, addr(2));

        let by_impl = FindFilter {
            address_prefix: Some("0x0b0b".into()),
            ..Default::default()
        };
        assert_eq!(g.find(&by_impl, Page::default()).unwrap().items[0].address, addr(1));
        let bad = FindFilter {
            address_prefix: Some("zz".into()),
            ..Default::default()
        };
        assert!(g.find(&bad, Page::default()).is_err());

        let min = FindFilter {
            min_versions: Some(3),
            ..Default::default()
        };
        assert_eq!(g.find(&min, Page::default()).unwrap().total, 1);
    }

    #[test]
    fn stats_cases() {
        assert_eq!(GraphStore::new().stats(), StoreStats::default());
        let s = fixture().stats();
        assert_eq!((s.proxy_count, s.version_count), (2, 5));
        assert_eq!(s.edge_counts, EdgeCounts { implements: 5, observed_change: 3 });
        assert_eq!(s.by_type.values().sum::<usize>(), s.proxy_count);
    }

    #[test]
    fn empty_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ndjson");
        GraphStore::new().snapshot(&path).unwrap();
        assert_eq!(GraphStore::load(&path).unwrap(), GraphStore::new());
    }

    #[test]
    fn snapshot_round_trip_and_determinism() {
        let g = fixture();
        let bytes = g.snapshot_bytes();
        let back = GraphStore::from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.snapshot_bytes(), bytes);
        assert_eq!(back.digest(), g.digest());
    }

    #[test]
    fn partial_snapshot_is_corrupt() {
        let bytes = fixture().snapshot_bytes();
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                GraphStore::from_snapshot_bytes(&bytes[..cut]),
                Err(GraphError::Corruption(_))
            ));
        }
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let bytes = fixture().snapshot_bytes();
        for i in 0..bytes.len() {
            for mask in [0x01u8, 0x20, 0x80] {
                let mut m = bytes.clone();
                m[i] ^= mask;
                assert!(
                    matches!(GraphStore::from_snapshot_bytes(&m), Err(GraphError::Corruption(_))),
                    "flip at {i} mask {mask:#x} undetected"
                );
            }
        }
    }

    pub(crate) fn random_store(seed: u64, nodes: usize) -> GraphStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GraphStore::new();
        let kinds = ["Eip1967", "UupsLike", "BeaconLike", "MinimalEip1167"];
        let mut made = 0;
        while made < nodes {
            let p = Address::from_bytes(rng.gen());
            g.upsert_proxy(proxy(p, kinds[rng.gen_range(0..kinds.len())]));
            made += 1;
            let n = rng.gen_range(0..5u32).min((nodes - made) as u32);
            for v in 1..=n {
                let mut node = version(p, v, Address::from_bytes(rng.gen()));
                if rng.gen_bool(0.3) {
                    node.vulnerabilities.push("reentrancy".into());
                }
                g.upsert_version(node, p).unwrap();
                made += 1;
                if v > 1 {
                    g.upsert_change(change(p, v - 1, v)).unwrap();
                }
            }
        }
        g
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pagination_is_complete(seed in any::<u64>(), limit in 1usize..7) {
            let g = random_store(seed, 40);
            let f = FindFilter { min_versions: Some(1), ..Default::default() };
            let all = g.find(&f, Page { limit: 500, offset: 0 }).unwrap();
            let mut union = Vec::new();
            let mut offset = 0;
            loop {
                let page = g.find(&f, Page { limit, offset }).unwrap();
                prop_assert_eq!(page.total, all.total);
                if page.items.is_empty() { break; }
                offset += page.items.len();
                union.extend(page.items);
            }
            prop_assert_eq!(union, all.items);
        }

        #[test]
        fn lineage_length_matches_total_versions(seed in any::<u64>()) {
            let g = random_store(seed, 60);
            for p in g.proxies() {
                prop_assert_eq!(g.get_lineage(&p.address).items.len(), p.total_versions as usize);
            }
            prop_assert!(g.audit().is_empty());
        }
    }
}
