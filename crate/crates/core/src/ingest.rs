//! Newline-delimited JSON ingestion of chain export files.
//!
//! Field names follow the usual ETL export layout (`address`, `topics`,
//! `data`, `block_number`, `log_index`, `transaction_hash`, `bytecode`,
//! `block_timestamp`, ...). Hex fields accept any case and an optional `0x`
//! prefix; everything is stored in canonical lowercase form. Unknown fields
//! are ignored.
//!
//! A [`Dataset`] keeps each record family keyed by its primary key, so the
//! canonical serialization (and [`Dataset::digest`]) does not depend on the
//! order in which files or lines arrived.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::ValidationError;
use crate::types::{Address, Bytes, TxHash, Word};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
}

impl IngestError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Which record family a file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Logs,
    Creations,
    Transactions,
    VulnFindings,
}

impl RecordKind {
    pub const ALL: [RecordKind; 4] = [
        RecordKind::Logs,
        RecordKind::Creations,
        RecordKind::Transactions,
        RecordKind::VulnFindings,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Logs => "logs",
            RecordKind::Creations => "creations",
            RecordKind::Transactions => "transactions",
            RecordKind::VulnFindings => "vuln_findings",
        }
    }

    /// File name used inside a persisted dataset directory.
    pub fn file_name(&self) -> String {
        format!("{}.ndjson", self.as_str())
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logs" => Ok(RecordKind::Logs),
            "creations" => Ok(RecordKind::Creations),
            "transactions" => Ok(RecordKind::Transactions),
            "vuln_findings" | "vulns" => Ok(RecordKind::VulnFindings),
            other => Err(format!("unknown record kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub address: Address,
    pub topics: Vec<Word>,
    pub data: Bytes,
    pub block_number: u64,
    pub log_index: u64,
    #[serde(rename = "transaction_hash")]
    pub tx_hash: TxHash,
}

impl LogRecord {
    pub fn position(&self) -> (u64, u64) {
        (self.block_number, self.log_index)
    }

    pub fn topic0(&self) -> Option<&Word> {
        self.topics.first()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractCreation {
    pub address: Address,
    pub creator: Address,
    #[serde(rename = "bytecode")]
    pub runtime_bytecode: Bytes,
    pub block_number: u64,
    pub block_timestamp: u64,
    #[serde(rename = "transaction_hash")]
    pub tx_hash: TxHash,
    pub gas_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxSummary {
    /// Absent for contract-creation transactions.
    pub to: Option<Address>,
    pub block_number: u64,
    pub block_timestamp: u64,
    #[serde(rename = "transaction_hash")]
    pub tx_hash: TxHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Severity::Low),
            "medium" => Ok(Severity::Medium),
            "high" => Ok(Severity::High),
            other => Err(format!("severity must be low, medium or high, got {other:?}")),
        }
    }
}

/// A vulnerability finding produced by an external detector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VulnFinding {
    pub address: Address,
    pub detector: String,
    pub category: String,
    pub severity: Severity,
    pub source_location: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Log(LogRecord),
    Creation(ContractCreation),
    Transaction(TxSummary),
    Finding(VulnFinding),
}

/// One rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub records_read: usize,
    pub records_accepted: usize,
    pub records_rejected: usize,
    pub first_error: Option<String>,
    #[serde(skip)]
    pub rejections: Vec<Rejection>,
}

impl IngestStats {
    fn reject(&mut self, rejection: Rejection) {
        tracing::warn!(file = %rejection.file, line = rejection.line, reason = %rejection.reason, "record rejected");
        self.records_rejected += 1;
        if self.first_error.is_none() {
            self.first_error = Some(format!("line {}: {}", rejection.line, rejection.reason));
        }
        self.rejections.push(rejection);
    }
}

/// Records parsed from one file, not yet merged into a dataset.
#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub kind: RecordKind,
    pub file: String,
    pub records: Vec<(usize, Record)>,
    pub rejections: Vec<Rejection>,
    pub lines_read: usize,
}

/// Parses a file without touching any dataset; safe to run for many files in parallel.
pub fn parse_file(path: &Path, kind: RecordKind) -> Result<ParsedFile, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let label = path.display().to_string();
    let mut parsed = ParsedFile {
        kind,
        file: label.clone(),
        records: Vec::new(),
        rejections: Vec::new(),
        lines_read: 0,
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                parsed.lines_read += 1;
                parsed.rejections.push(Rejection {
                    file: label.clone(),
                    line: line_no,
                    reason: "line is not valid UTF-8".into(),
                });
                continue;
            }
            Err(e) => return Err(IngestError::io(path, e)),
        };
        if line.trim().is_empty() {
            continue;
        }
        parsed.lines_read += 1;
        match parse_line(&line, kind) {
            Ok(record) => parsed.records.push((line_no, record)),
            Err(reason) => parsed.rejections.push(Rejection {
                file: label.clone(),
                line: line_no,
                reason,
            }),
        }
    }
    Ok(parsed)
}

/// Parses one NDJSON line of the given kind.
pub fn parse_line(line: &str, kind: RecordKind) -> Result<Record, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "line is not a JSON object".to_string())?;
    let fields = Fields(obj);
    let record = match kind {
        RecordKind::Logs => {
            let topics = fields.topics()?;
            if topics.len() > 4 {
                return Err(format!("{} topics, at most 4 allowed", topics.len()));
            }
            Record::Log(LogRecord {
                address: fields.address("address")?,
                topics,
                data: fields.bytes_or_empty("data")?,
                block_number: fields.uint("block_number")?,
                log_index: fields.uint("log_index")?,
                tx_hash: fields.word(&["transaction_hash", "tx_hash"])?,
            })
        }
        RecordKind::Creations => Record::Creation(ContractCreation {
            address: fields.address("address")?,
            creator: fields.address_any(&["creator", "from_address", "from"])?,
            runtime_bytecode: fields.bytes_any(&["bytecode", "runtime_bytecode"])?,
            block_number: fields.uint("block_number")?,
            block_timestamp: fields.uint("block_timestamp")?,
            tx_hash: fields.word(&["transaction_hash", "tx_hash"])?,
            gas_used: fields.uint_any(&["gas_used", "receipt_gas_used"])?,
        }),
        RecordKind::Transactions => Record::Transaction(TxSummary {
            to: fields.optional_address(&["to", "to_address"])?,
            block_number: fields.uint("block_number")?,
            block_timestamp: fields.uint("block_timestamp")?,
            tx_hash: fields.word(&["transaction_hash", "hash", "tx_hash"])?,
        }),
        RecordKind::VulnFindings => Record::Finding(VulnFinding {
            address: fields.address("address")?,
            detector: fields.text("detector")?,
            category: fields.text("category")?,
            severity: fields
                .text("severity")?
                .parse()
                .map_err(|e: String| field_err("severity", e))?,
            source_location: fields.text_or_empty("source_location")?,
        }),
    };
    Ok(record)
}

fn field_err(field: &'static str, reason: impl Into<String>) -> String {
    ValidationError::Field {
        field,
        reason: reason.into(),
    }
    .to_string()
}

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn get_any(&self, names: &[&'static str]) -> Option<(&'static str, &Value)> {
        names
            .iter()
            .find_map(|n| self.0.get(*n).filter(|v| !v.is_null()).map(|v| (*n, v)))
    }

    fn str_any(&self, names: &[&'static str]) -> Result<(&'static str, &str), String> {
        match self.get_any(names) {
            None => Err(ValidationError::MissingField(names[0]).to_string()),
            Some((name, Value::String(s))) => Ok((name, s.as_str())),
            Some((name, _)) => Err(field_err(name, "expected a string")),
        }
    }

    fn address(&self, name: &'static str) -> Result<Address, String> {
        self.address_any(&[name])
    }

    fn address_any(&self, names: &[&'static str]) -> Result<Address, String> {
        let (_, s) = self.str_any(names)?;
        Address::normalize(s).map_err(|e| e.to_string())
    }

    fn optional_address(&self, names: &[&'static str]) -> Result<Option<Address>, String> {
        match self.get_any(names) {
            None => Ok(None),
            Some((_, Value::String(s))) if s.is_empty() => Ok(None),
            Some((_, Value::String(s))) => Address::normalize(s).map(Some).map_err(|e| e.to_string()),
            Some((name, _)) => Err(field_err(name, "expected a string")),
        }
    }

    fn word(&self, names: &[&'static str]) -> Result<Word, String> {
        let (_, s) = self.str_any(names)?;
        Word::parse(s).map_err(|e| e.to_string())
    }

    fn bytes_any(&self, names: &[&'static str]) -> Result<Bytes, String> {
        let (_, s) = self.str_any(names)?;
        Bytes::parse(s).map_err(|e| e.to_string())
    }

    fn bytes_or_empty(&self, name: &'static str) -> Result<Bytes, String> {
        match self.get_any(&[name]) {
            None => Ok(Bytes::default()),
            Some(_) => self.bytes_any(&[name]),
        }
    }

    fn uint(&self, name: &'static str) -> Result<u64, String> {
        self.uint_any(&[name])
    }

    fn uint_any(&self, names: &[&'static str]) -> Result<u64, String> {
        match self.get_any(names) {
            None => Err(ValidationError::MissingField(names[0]).to_string()),
            Some((name, Value::Number(n))) => n
                .as_u64()
                .ok_or_else(|| field_err(name, format!("expected a non-negative integer, got {n}"))),
            Some((name, Value::String(s))) => s
                .parse::<u64>()
                .map_err(|_| field_err(name, format!("expected a non-negative integer, got {s:?}"))),
            Some((name, _)) => Err(field_err(name, "expected a non-negative integer")),
        }
    }

    fn text(&self, name: &'static str) -> Result<String, String> {
        self.str_any(&[name]).map(|(_, s)| s.to_string())
    }

    fn text_or_empty(&self, name: &'static str) -> Result<String, String> {
        match self.get_any(&[name]) {
            None => Ok(String::new()),
            Some(_) => self.text(name),
        }
    }

    /// `topics` as a JSON array of hex strings, or the comma-separated string some exporters emit.
    fn topics(&self) -> Result<Vec<Word>, String> {
        let raw: Vec<&str> = match self.get_any(&["topics"]) {
            None => return Err(ValidationError::MissingField("topics").to_string()),
            Some((_, Value::Array(items))) => items
                .iter()
                .map(|v| v.as_str().ok_or_else(|| field_err("topics", "entries must be strings")))
                .collect::<Result<_, _>>()?,
            Some((_, Value::String(s))) if s.is_empty() => Vec::new(),
            Some((_, Value::String(s))) => s.split(',').map(str::trim).collect(),
            Some(_) => return Err(field_err("topics", "expected an array")),
        };
        raw.into_iter()
            .map(|t| Word::parse(t).map_err(|e| e.to_string()))
            .collect()
    }
}

/// Normalized, deduplicated chain records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    logs: BTreeMap<(u64, u64), LogRecord>,
    creations: BTreeMap<Address, ContractCreation>,
    transactions: BTreeMap<TxHash, TxSummary>,
    findings: BTreeSet<VulnFinding>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses and merges one file. Unreadable files are fatal; bad lines are not.
    pub fn ingest_file(&mut self, path: &Path, kind: RecordKind) -> Result<IngestStats, IngestError> {
        let parsed = parse_file(path, kind)?;
        Ok(self.absorb(parsed))
    }

    /// Parses files concurrently, then merges them in the given order.
    pub fn ingest_files(
        &mut self,
        files: &[(PathBuf, RecordKind)],
    ) -> Result<Vec<IngestStats>, IngestError> {
        let parsed: Vec<ParsedFile> = files
            .par_iter()
            .map(|(path, kind)| parse_file(path, *kind))
            .collect::<Result<_, _>>()?;
        Ok(parsed.into_iter().map(|p| self.absorb(p)).collect())
    }

    /// Merges a parsed file. Records whose primary key is already present are
    /// rejected as duplicates; the first record wins.
    pub fn absorb(&mut self, parsed: ParsedFile) -> IngestStats {
        let mut stats = IngestStats {
            records_read: parsed.lines_read,
            ..Default::default()
        };
        let mut pending: Vec<(usize, Rejection)> = parsed
            .rejections
            .into_iter()
            .map(|r| (r.line, r))
            .collect();
        for (line, record) in parsed.records {
            if let Err(reason) = self.insert(record) {
                pending.push((
                    line,
                    Rejection {
                        file: parsed.file.clone(),
                        line,
                        reason,
                    },
                ));
            } else {
                stats.records_accepted += 1;
            }
        }
        pending.sort_by_key(|(line, _)| *line);
        for (_, rejection) in pending {
            stats.reject(rejection);
        }
        stats
    }

    /// Inserts one record, enforcing primary-key uniqueness.
    pub fn insert(&mut self, record: Record) -> Result<(), String> {
        match record {
            Record::Log(log) => {
                let key = log.position();
                if self.logs.contains_key(&key) {
                    return Err(format!(
                        "duplicate log at block {} index {}",
                        key.0, key.1
                    ));
                }
                self.logs.insert(key, log);
            }
            Record::Creation(c) => {
                if self.creations.contains_key(&c.address) {
                    return Err(format!("duplicate creation for {}", c.address));
                }
                self.creations.insert(c.address, c);
            }
            Record::Transaction(tx) => {
                if self.transactions.contains_key(&tx.tx_hash) {
                    return Err(format!("duplicate transaction {}", tx.tx_hash));
                }
                self.transactions.insert(tx.tx_hash, tx);
            }
            Record::Finding(f) => {
                if self.findings.contains(&f) {
                    return Err(format!("duplicate finding {} for {}", f.category, f.address));
                }
                self.findings.insert(f);
            }
        }
        Ok(())
    }

    pub fn logs(&self) -> impl Iterator<Item = &LogRecord> {
        self.logs.values()
    }

    pub fn creations(&self) -> impl Iterator<Item = &ContractCreation> {
        self.creations.values()
    }

    pub fn creation(&self, address: &Address) -> Option<&ContractCreation> {
        self.creations.get(address)
    }

    pub fn transactions(&self) -> impl Iterator<Item = &TxSummary> {
        self.transactions.values()
    }

    pub fn findings(&self) -> impl Iterator<Item = &VulnFinding> {
        self.findings.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len(&self) -> usize {
        self.logs.len() + self.creations.len() + self.transactions.len() + self.findings.len()
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        match kind {
            RecordKind::Logs => self.logs.len(),
            RecordKind::Creations => self.creations.len(),
            RecordKind::Transactions => self.transactions.len(),
            RecordKind::VulnFindings => self.findings.len(),
        }
    }

    /// Logs grouped by emitter, each group in (block, log_index) order.
    pub fn logs_by_address(&self) -> HashMap<Address, Vec<LogRecord>> {
        let mut out: HashMap<Address, Vec<LogRecord>> = HashMap::new();
        for log in self.logs.values() {
            out.entry(log.address).or_default().push(log.clone());
        }
        out
    }

    /// Transactions grouped by recipient; creation transactions are skipped.
    pub fn transactions_by_recipient(&self) -> HashMap<Address, Vec<TxSummary>> {
        let mut out: HashMap<Address, Vec<TxSummary>> = HashMap::new();
        for tx in self.transactions.values() {
            if let Some(to) = tx.to {
                out.entry(to).or_default().push(tx.clone());
            }
        }
        out
    }

    pub fn findings_for(&self, address: &Address) -> Vec<VulnFinding> {
        self.findings
            .iter()
            .filter(|f| &f.address == address)
            .cloned()
            .collect()
    }

    /// Canonical NDJSON lines for one record family, sorted by primary key.
    pub fn canonical_lines(&self, kind: RecordKind) -> Vec<String> {
        fn lines<'a, T: Serialize + 'a>(items: impl Iterator<Item = &'a T>) -> Vec<String> {
            items
                .map(|r| serde_json::to_string(r).expect("records serialize"))
                .collect()
        }
        match kind {
            RecordKind::Logs => lines(self.logs.values()),
            RecordKind::Creations => lines(self.creations.values()),
            RecordKind::Transactions => lines(self.transactions.values()),
            RecordKind::VulnFindings => lines(self.findings.iter()),
        }
    }

    /// SHA-256 over the canonical serialization: each family's name, then its sorted lines.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for kind in RecordKind::ALL {
            hasher.update(kind.as_str().as_bytes());
            hasher.update(b"\n");
            for line in self.canonical_lines(kind) {
                hasher.update(line.as_bytes());
                hasher.update(b"\n");
            }
        }
        hasher.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }

    /// Writes one normalized NDJSON file per family plus a `DIGEST` file.
    pub fn save_dir(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            let mut out = std::io::BufWriter::new(
                fs::File::create(&path).map_err(|e| IngestError::io(&path, e))?,
            );
            for line in self.canonical_lines(kind) {
                writeln!(out, "{line}").map_err(|e| IngestError::io(&path, e))?;
            }
            out.flush().map_err(|e| IngestError::io(&path, e))?;
        }
        let digest_path = dir.join(DIGEST_FILE);
        fs::write(&digest_path, format!("{}\n", self.digest_hex()))
            .map_err(|e| IngestError::io(&digest_path, e))?;
        Ok(())
    }

    /// Loads a directory written by [`Dataset::save_dir`], verifying every
    /// line parses and the recomputed digest matches the stored one.
    pub fn load_dir(dir: &Path) -> Result<Self, IngestError> {
        let digest_path = dir.join(DIGEST_FILE);
        let expected = fs::read_to_string(&digest_path).map_err(|e| IngestError::io(&digest_path, e))?;
        let mut dataset = Dataset::new();
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            let stats = dataset.ingest_file(&path, kind)?;
            if let Some(err) = stats.first_error {
                return Err(IngestError::Corrupt(format!("{}: {err}", path.display())));
            }
        }
        let actual = dataset.digest_hex();
        if expected.trim() != actual {
            return Err(IngestError::Corrupt(format!(
                "digest mismatch: stored {}, computed {actual}",
                expected.trim()
            )));
        }
        Ok(dataset)
    }
}

pub const DIGEST_FILE: &str = "DIGEST";

/// Writes rejections as NDJSON `{file, line, reason}` objects.
pub fn write_rejections(path: &Path, rejections: &[Rejection]) -> Result<(), IngestError> {
    let mut out = String::new();
    for r in rejections {
        out.push_str(&serde_json::to_string(r).expect("rejections serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "0x00000000000000000000000000000000000000aa";
    const TX: &str = "0x1111111111111111111111111111111111111111111111111111111111111111";

    fn log_line(block: u64, index: u64) -> String {
        format!(
            r#"{{"address":"{A}","topics":["0xBC7CD75A20EE27FD9ADEBAB32041F755214DBC6BFFA90CC0225B39DA2E5C2D3B"],"data":"0x","block_number":{block},"log_index":{index},"transaction_hash":"{TX}","extra":true}}"#
        )
    }

    fn creation_line(addr_byte: u8, block: u64) -> String {
        format!(
            r#"{{"address":"0x{:040x}","creator":"{A}","bytecode":"0x6080","block_number":{block},"block_timestamp":{},"transaction_hash":"{TX}","gas_used":21000}}"#,
            addr_byte,
            1_600_000_000 + block
        )
    }

    fn write(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn three_valid_logs() {
        let f = write(&[log_line(1, 0), log_line(1, 1), log_line(2, 0)]);
        let mut ds = Dataset::new();
        let stats = ds.ingest_file(f.path(), RecordKind::Logs).unwrap();
        assert_eq!(
            (stats.records_read, stats.records_accepted, stats.records_rejected),
            (3, 3, 0)
        );
        let log = ds.logs().next().unwrap();
        assert_eq!(
            log.topics[0].to_string(),
            "0xbc7cd75a20ee27fd9adebab32041f755214dbc6bffa90cc0225b39da2e5c2d3b"
        );
    }

    #[test]
    fn missing_address_is_rejected_with_line_number() {
        let bad = log_line(3, 0).replace(&format!(r#""address":"{A}","#), "");
        let f = write(&[log_line(1, 0), bad]);
        let mut ds = Dataset::new();
        let stats = ds.ingest_file(f.path(), RecordKind::Logs).unwrap();
        assert_eq!(
            (stats.records_read, stats.records_accepted, stats.records_rejected),
            (2, 1, 1)
        );
        assert_eq!(stats.rejections[0].line, 2);
        assert!(stats.first_error.unwrap().contains("address"));
    }

    #[test]
    fn malformed_lines_do_not_stop_ingestion() {
        let f = write(&[
            "{not json".to_string(),
            "[1,2]".to_string(),
            log_line(1, 0).replace("\"log_index\":0", "\"log_index\":-1"),
            log_line(5, 5),
        ]);
        let mut ds = Dataset::new();
        let stats = ds.ingest_file(f.path(), RecordKind::Logs).unwrap();
        assert_eq!(stats.records_read, 4);
        assert_eq!(stats.records_accepted, 1);
        assert_eq!(stats.records_rejected, 3);
    }

    #[test]
    fn too_many_topics_rejected() {
        let t = format!("\"{TX}\"");
        let five = format!("[{t},{t},{t},{t},{t}]");
        let line = log_line(1, 0).replacen(
            r#"["0xBC7CD75A20EE27FD9ADEBAB32041F755214DBC6BFFA90CC0225B39DA2E5C2D3B"]"#,
            &five,
            1,
        );
        assert!(parse_line(&line, RecordKind::Logs).unwrap_err().contains("topics"));
        let short = log_line(1, 0).replace("2D3B\"", "\"");
        assert!(parse_line(&short, RecordKind::Logs).is_err());
    }

    #[test]
    fn topics_as_comma_separated_string() {
        let line = format!(
            r#"{{"address":"{A}","topics":"{TX},{TX}","data":"","block_number":1,"log_index":0,"transaction_hash":"{TX}"}}"#
        );
        match parse_line(&line, RecordKind::Logs).unwrap() {
            Record::Log(l) => assert_eq!(l.topics.len(), 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn reingesting_creations_rejects_everything_as_duplicate() {
        let f = write(&[creation_line(1, 10), creation_line(2, 11)]);
        let mut ds = Dataset::new();
        ds.ingest_file(f.path(), RecordKind::Creations).unwrap();
        let before = ds.digest();
        let snapshot = ds.clone();
        let stats = ds.ingest_file(f.path(), RecordKind::Creations).unwrap();
        assert_eq!(stats.records_rejected, 2);
        assert_eq!(stats.records_accepted, 0);
        assert!(stats.rejections.iter().all(|r| r.reason.contains("duplicate")));
        assert_eq!(ds.digest(), before);
        assert_eq!(ds, snapshot);
    }

    #[test]
    fn empty_dataset_digest_is_constant() {
        let expected: [u8; 32] =
            Sha256::digest(b"logs\ncreations\ntransactions\nvuln_findings\n").into();
        assert_eq!(Dataset::new().digest(), expected);
    }

    #[test]
    fn digest_is_order_independent_and_field_sensitive() {
        let lines: Vec<String> = (0..10).map(|i| log_line(i / 3, i % 3)).collect();
        let mut forward = Dataset::new();
        forward
            .ingest_file(write(&lines).path(), RecordKind::Logs)
            .unwrap();

        // permuted across two files, reversed within each
        let mut rev = lines.clone();
        rev.reverse();
        let (first, second) = rev.split_at(4);
        let f2 = write(second);
        let f1 = write(first);
        let mut permuted = Dataset::new();
        permuted.ingest_file(f2.path(), RecordKind::Logs).unwrap();
        permuted.ingest_file(f1.path(), RecordKind::Logs).unwrap();
        assert_eq!(forward.digest(), permuted.digest());

        let mut flipped_lines = lines.clone();
        flipped_lines[9] = log_line(3, 7);
        let mut flipped = Dataset::new();
        flipped
            .ingest_file(write(&flipped_lines).path(), RecordKind::Logs)
            .unwrap();
        assert_ne!(forward.digest(), flipped.digest());
    }

    #[test]
    fn save_and_load_dir_round_trip() {
        let mut ds = Dataset::new();
        ds.ingest_file(write(&[log_line(1, 0)]).path(), RecordKind::Logs).unwrap();
        ds.ingest_file(write(&[creation_line(9, 1)]).path(), RecordKind::Creations).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save_dir(dir.path()).unwrap();
        let loaded = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(loaded, ds);

        let logs = dir.path().join("logs.ndjson");
        let text = fs::read_to_string(&logs).unwrap().replace("\"log_index\":0", "\"log_index\":1");
        fs::write(&logs, text).unwrap();
        assert!(matches!(Dataset::load_dir(dir.path()), Err(IngestError::Corrupt(_))));
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let mut ds = Dataset::new();
        let err = ds
            .ingest_file(Path::new("/definitely/not/here.ndjson"), RecordKind::Logs)
            .unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn findings_and_transactions_parse() {
        let finding = format!(
            r#"{{"address":"{A}","detector":"slither","category":"reentrancy","severity":"HIGH","source_location":"L10"}}"#
        );
        assert!(matches!(
            parse_line(&finding, RecordKind::VulnFindings).unwrap(),
            Record::Finding(VulnFinding { severity: Severity::High, .. })
        ));
        let bad = finding.replace("HIGH", "critical");
        assert!(parse_line(&bad, RecordKind::VulnFindings).is_err());

        let tx = format!(
            r#"{{"hash":"{TX}","to_address":null,"block_number":"12","block_timestamp":5}}"#
        );
        match parse_line(&tx, RecordKind::Transactions).unwrap() {
            Record::Transaction(t) => {
                assert!(t.to.is_none());
                assert_eq!(t.block_number, 12);
            }
            _ => unreachable!(),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stats_always_balance(lines in proptest::collection::vec(
                prop_oneof![
                    (0u64..4, 0u64..4).prop_map(|(b, i)| log_line(b, i)),
                    Just("{}".to_string()),
                    Just("garbage".to_string()),
                ], 0..20))
            {
                let f = write(&lines);
                let mut ds = Dataset::new();
                let stats = ds.ingest_file(f.path(), RecordKind::Logs).unwrap();
                prop_assert_eq!(stats.records_read, stats.records_accepted + stats.records_rejected);
                prop_assert_eq!(stats.records_accepted, ds.count(RecordKind::Logs));
            }
        }
    }
}
