//! Upgrade-event decoding and per-proxy version lineage.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ContractCreation, LogRecord, TxSummary};
use crate::types::{event_topic, Address, TxHash, Word};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("event for proxy {found} passed to the chain of {expected}")]
    ProxyMismatch { expected: Address, found: Address },
    #[error("signature table line {line}: {reason}")]
    SignatureTable { line: usize, reason: String },
    #[error("cannot read signature table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One entry of the upgrade-event signature table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSignature {
    pub name: String,
    /// Canonical signature, e.g. `Upgraded(address)`.
    pub signature: String,
    /// Which parameter carries the new implementation. For indexed parameters
    /// this counts among indexed parameters (topic `1 + index`); otherwise it
    /// is the 32-byte word index into `data`.
    pub impl_param_index: usize,
    pub indexed: bool,
}

#[derive(Debug, Clone)]
pub struct SignatureTable {
    entries: HashMap<Word, EventSignature>,
}

impl Default for SignatureTable {
    fn default() -> Self {
        let mut table = SignatureTable {
            entries: HashMap::new(),
        };
        table.register(EventSignature {
            name: "Upgraded".into(),
            signature: "Upgraded(address)".into(),
            impl_param_index: 0,
            indexed: true,
        });
        table.register(EventSignature {
            name: "ImplementationUpdated".into(),
            signature: "ImplementationUpdated(address,address,address)".into(),
            impl_param_index: 1,
            indexed: false,
        });
        table
    }
}

impl SignatureTable {
    pub fn empty() -> Self {
        SignatureTable {
            entries: HashMap::new(),
        }
    }

    /// Adds or replaces the entry for this signature's topic0.
    pub fn register(&mut self, sig: EventSignature) {
        self.entries.insert(event_topic(&sig.signature), sig);
    }

    pub fn lookup(&self, topic0: &Word) -> Option<&EventSignature> {
        self.entries.get(topic0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Extends the table with NDJSON entries like
    /// `{"name": "Upgraded", "signature": "Upgraded(address)", "impl_param_index": 0, "indexed": true}`.
    pub fn extend_from_ndjson(&mut self, text: &str) -> Result<(), TraceError> {
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sig: EventSignature =
                serde_json::from_str(line).map_err(|e| TraceError::SignatureTable {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if !sig.signature.contains('(') || !sig.signature.ends_with(')') {
                return Err(TraceError::SignatureTable {
                    line: idx + 1,
                    reason: format!("{:?} is not a canonical signature", sig.signature),
                });
            }
            self.register(sig);
        }
        Ok(())
    }

    pub fn extend_from_file(&mut self, path: &Path) -> Result<(), TraceError> {
        let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.extend_from_ndjson(&text)
    }
}

/// A (block, log index) point in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub block_number: u64,
    pub log_index: u64,
}

impl Position {
    pub fn new(block_number: u64, log_index: u64) -> Self {
        Position {
            block_number,
            log_index,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block_number, self.log_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpgradeEvent {
    pub proxy: Address,
    pub new_implementation: Address,
    pub block_number: u64,
    pub log_index: u64,
    pub tx_hash: TxHash,
    pub event_name: String,
}

impl UpgradeEvent {
    pub fn position(&self) -> Position {
        Position::new(self.block_number, self.log_index)
    }

    /// Upgrade to the zero address: the proxy was deactivated.
    pub fn is_bricking(&self) -> bool {
        self.new_implementation.is_zero()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedEvents {
    pub events: Vec<UpgradeEvent>,
    /// Logs whose topic0 matched but which carried no implementation argument.
    pub malformed: usize,
}

pub fn decode_upgrade_events(logs: &[LogRecord], table: &SignatureTable) -> DecodedEvents {
    let mut out = DecodedEvents::default();
    for log in logs {
        let Some(sig) = log.topic0().and_then(|t| table.lookup(t)) else {
            continue;
        };
        match implementation_argument(log, sig) {
            Some(new_implementation) => out.events.push(UpgradeEvent {
                proxy: log.address,
                new_implementation,
                block_number: log.block_number,
                log_index: log.log_index,
                tx_hash: log.tx_hash,
                event_name: sig.name.clone(),
            }),
            None => out.malformed += 1,
        }
    }
    out.events.sort_by_key(|e| e.position());
    out
}

/// Reads the configured location first, then falls back to the other
/// encoding, since the same signature is emitted both indexed and not.
fn implementation_argument(log: &LogRecord, sig: &EventSignature) -> Option<Address> {
    let from_topic = |i: usize| log.topics.get(1 + i).map(Address::from_word);
    let from_data = |i: usize| {
        let start = i * 32;
        log.data.0.get(start..start + 32).map(|chunk| {
            let mut w = [0u8; 32];
            w.copy_from_slice(chunk);
            Address::from_word(&Word(w))
        })
    };
    if sig.indexed {
        from_topic(sig.impl_param_index).or_else(|| from_data(0))
    } else {
        from_data(sig.impl_param_index).or_else(|| from_topic(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub version_number: u32,
    pub implementation: Address,
    pub active_from: Position,
    pub active_until: Option<Position>,
    pub tx_count: u64,
    pub creation_timestamp: Option<u64>,
    pub last_tx_timestamp: Option<u64>,
    /// Upgrade events that re-set this same implementation.
    pub noop_upgrades: u32,
}

impl VersionEntry {
    pub fn is_deactivated(&self) -> bool {
        self.implementation.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionChain {
    pub proxy: Address,
    pub entries: Vec<VersionEntry>,
}

impl VersionChain {
    pub fn empty(proxy: Address) -> Self {
        VersionChain {
            proxy,
            entries: Vec::new(),
        }
    }

    pub fn implementations(&self) -> Vec<Address> {
        self.entries.iter().map(|e| e.implementation).collect()
    }

    pub fn noop_upgrades(&self) -> u32 {
        self.entries.iter().map(|e| e.noop_upgrades).sum()
    }

    /// Opens version 1 for an implementation known from the bytecode (e.g. a
    /// minimal proxy target) when no upgrade event exists.
    pub fn seeded(proxy: Address, implementation: Address, creation: &ContractCreation) -> Self {
        VersionChain {
            proxy,
            entries: vec![new_entry(1, implementation, creation_point(creation))],
        }
    }
}

fn creation_point(creation: &ContractCreation) -> Position {
    Position::new(creation.block_number, 0)
}

fn new_entry(version_number: u32, implementation: Address, from: Position) -> VersionEntry {
    VersionEntry {
        version_number,
        implementation,
        active_from: from,
        active_until: None,
        tx_count: 0,
        creation_timestamp: None,
        last_tx_timestamp: None,
        noop_upgrades: 0,
    }
}

/// Segments the upgrade events of one proxy into versions.
///
/// Each event whose implementation differs from the current one closes the
/// current version and opens the next; repeats are counted as no-op upgrades.
/// When the first event was emitted by the proxy's creation transaction,
/// version 1 is backdated to the creation block.
pub fn build_version_chain(
    proxy: Address,
    events: &[UpgradeEvent],
    creation: Option<&ContractCreation>,
) -> Result<VersionChain, TraceError> {
    if let Some(e) = events.iter().find(|e| e.proxy != proxy) {
        return Err(TraceError::ProxyMismatch {
            expected: proxy,
            found: e.proxy,
        });
    }
    let mut ordered: Vec<&UpgradeEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.position());

    let mut chain = VersionChain::empty(proxy);
    for (i, event) in ordered.iter().enumerate() {
        let pos = event.position();
        match chain.entries.last_mut() {
            Some(current) if current.implementation == event.new_implementation => {
                current.noop_upgrades += 1;
            }
            Some(current) => {
                current.active_until = Some(pos);
                let n = current.version_number + 1;
                chain.entries.push(new_entry(n, event.new_implementation, pos));
            }
            None => {
                let from = match creation {
                    Some(c) if i == 0 && c.tx_hash == event.tx_hash && c.address == proxy => {
                        creation_point(c).min(pos)
                    }
                    _ => pos,
                };
                chain.entries.push(new_entry(1, event.new_implementation, from));
            }
        }
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ActivityStats {
    pub attributed: usize,
    /// Transactions before version 1 opened, or addressed elsewhere.
    pub unattributed: usize,
}

/// Assigns each transaction sent to the proxy to the version active in its block.
///
/// A transaction is placed at `(block, +inf)`, so in a block where a version
/// opens it belongs to the newly opened version. Counts are recomputed from
/// scratch.
pub fn attach_activity(chain: &VersionChain, txs: &[TxSummary]) -> (VersionChain, ActivityStats) {
    let mut out = chain.clone();
    for e in &mut out.entries {
        e.tx_count = 0;
        e.last_tx_timestamp = None;
    }
    let mut stats = ActivityStats::default();
    for tx in txs {
        if tx.to != Some(chain.proxy) {
            stats.unattributed += 1;
            continue;
        }
        let idx = out
            .entries
            .partition_point(|e| e.active_from.block_number <= tx.block_number);
        if idx == 0 {
            stats.unattributed += 1;
            continue;
        }
        let entry = &mut out.entries[idx - 1];
        entry.tx_count += 1;
        entry.last_tx_timestamp = Some(
            entry
                .last_tx_timestamp
                .map_or(tx.block_timestamp, |t| t.max(tx.block_timestamp)),
        );
        stats.attributed += 1;
    }
    (out, stats)
}
