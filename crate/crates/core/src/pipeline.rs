//! Dataset → graph build: detect proxies, trace versions, classify changes.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classify::{classify_change, diff_sources, ChangeConfig, SourceDiff};
use crate::detect::{classify_proxy, scan_bytecode, ProxyClassification, ProxyKind};
use crate::explorer::{ExplorerClient, ExplorerError, SourceBundle};
use crate::graph::{GraphError, GraphStore, ObservedChangeEdge, ProxyNode, VersionKey, VersionNode};
use crate::ingest::{ContractCreation, Dataset, LogRecord, TxSummary, VulnFinding};
use crate::trace::{attach_activity, build_version_chain, decode_upgrade_events, SignatureTable, VersionChain};
use crate::types::Address;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub signatures: SignatureTable,
    pub change: ChangeConfig,
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            signatures: SignatureTable::default(),
            change: ChangeConfig::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub creations_scanned: usize,
    pub proxies: usize,
    pub versions: usize,
    pub changes: usize,
    pub by_type: BTreeMap<String, usize>,
    pub upgrade_events: usize,
    pub noop_upgrades: u32,
    pub malformed_events: usize,
    pub unattributed_transactions: usize,
    /// Version transitions classified without source on at least one side.
    pub transitions_without_source: usize,
    pub explorer_errors: usize,
}

struct Detected<'a> {
    creation: &'a ContractCreation,
    classification: ProxyClassification,
    minimal_target: Option<Address>,
}

struct Traced {
    proxy: ProxyNode,
    versions: Vec<VersionNode>,
    changes: Vec<ObservedChangeEdge>,
    upgrade_events: usize,
    noop_upgrades: u32,
    malformed_events: usize,
    unattributed: usize,
    without_source: usize,
    explorer_errors: usize,
}

/// Runs detection on every creation, traces each detected proxy and
/// classifies consecutive versions. Output is independent of `jobs`.
pub fn build_graph(
    dataset: &Dataset,
    explorer: Option<&ExplorerClient>,
    options: &BuildOptions,
) -> Result<(GraphStore, BuildReport), PipelineError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.jobs {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(|| run(dataset, explorer, options))
}

fn run(
    dataset: &Dataset,
    explorer: Option<&ExplorerClient>,
    options: &BuildOptions,
) -> Result<(GraphStore, BuildReport), PipelineError> {
    let logs = dataset.logs_by_address();
    let txs = dataset.transactions_by_recipient();
    let creations: Vec<&ContractCreation> = dataset.creations().collect();
    let no_logs: Vec<LogRecord> = Vec::new();

    let detected: Vec<Detected> = creations
        .par_iter()
        .filter_map(|c| {
            let scan = scan_bytecode(&c.runtime_bytecode.0);
            let address_logs = logs.get(&c.address).unwrap_or(&no_logs);
            let classification = classify_proxy(&scan, address_logs);
            classification.kind.is_proxy().then_some(Detected {
                creation: c,
                classification,
                minimal_target: scan.eip1167_target,
            })
        })
        .collect();

    let ctx = Context {
        dataset,
        explorer,
        options,
        logs: &logs,
        txs: &txs,
    };
    let mut traced: Vec<Traced> = detected
        .par_iter()
        .map(|d| ctx.trace(d))
        .collect();
    traced.sort_by_key(|t| t.proxy.address);

    let mut store = GraphStore::new();
    let mut report = BuildReport {
        creations_scanned: creations.len(),
        ..Default::default()
    };
    for t in traced {
        *report.by_type.entry(t.proxy.proxy_type.clone()).or_default() += 1;
        report.proxies += 1;
        report.versions += t.versions.len();
        report.changes += t.changes.len();
        report.upgrade_events += t.upgrade_events;
        report.noop_upgrades += t.noop_upgrades;
        report.malformed_events += t.malformed_events;
        report.unattributed_transactions += t.unattributed;
        report.transitions_without_source += t.without_source;
        report.explorer_errors += t.explorer_errors;

        let proxy = store.upsert_proxy(t.proxy);
        for v in t.versions {
            store.upsert_version(v, proxy)?;
        }
        for c in t.changes {
            store.upsert_change(c)?;
        }
    }
    Ok((store, report))
}

struct Context<'a> {
    dataset: &'a Dataset,
    explorer: Option<&'a ExplorerClient>,
    options: &'a BuildOptions,
    logs: &'a HashMap<Address, Vec<LogRecord>>,
    txs: &'a HashMap<Address, Vec<TxSummary>>,
}

impl Context<'_> {
    fn trace(&self, d: &Detected) -> Traced {
        let address = d.creation.address;
        let decoded = self
            .logs
            .get(&address)
            .map(|l| decode_upgrade_events(l, &self.options.signatures))
            .unwrap_or_default();
        let mut chain = build_version_chain(address, &decoded.events, Some(d.creation))
            .expect("events are grouped by emitting address");
        if chain.entries.is_empty() {
            if let (ProxyKind::MinimalEip1167, Some(target)) = (d.classification.kind, d.minimal_target) {
                chain = VersionChain::seeded(address, target, d.creation);
            }
        }
        let (chain, activity) = match self.txs.get(&address) {
            Some(txs) => attach_activity(&chain, txs),
            None => attach_activity(&chain, &[]),
        };

        let versions: Vec<VersionNode> = chain
            .entries
            .iter()
            .map(|e| VersionNode {
                proxy: address,
                version_number: e.version_number,
                contract_address: e.implementation,
                creation_timestamp: self.dataset.creation(&e.implementation).map(|c| c.block_timestamp),
                last_tx_timestamp: e.last_tx_timestamp,
                total_transactions: e.tx_count,
                vulnerabilities: vulnerability_categories(&self.dataset.findings_for(&e.implementation)),
            })
            .collect();

        let mut traced = Traced {
            proxy: ProxyNode {
                address,
                proxy_type: d.classification.kind.as_str().to_string(),
                created_at: d.creation.block_timestamp,
                total_versions: 0,
                evidence: d.classification.evidence.iter().map(|e| e.as_str().to_string()).collect(),
            },
            versions: Vec::new(),
            changes: Vec::new(),
            upgrade_events: decoded.events.len(),
            noop_upgrades: chain.noop_upgrades(),
            malformed_events: decoded.malformed,
            unattributed: activity.unattributed,
            without_source: 0,
            explorer_errors: 0,
        };

        let mut sources: HashMap<Address, Option<SourceBundle>> = HashMap::new();
        for pair in chain.entries.windows(2) {
            let (old, new) = (&pair[0], &pair[1]);
            let old_src = self.source(old.implementation, &mut sources, &mut traced.explorer_errors);
            let new_src = self.source(new.implementation, &mut sources, &mut traced.explorer_errors);
            let diff = match (&old_src, &new_src) {
                (Some(a), Some(b)) => diff_sources(&a.source_text, &b.source_text),
                _ => {
                    traced.without_source += 1;
                    SourceDiff::default()
                }
            };
            let gas = |a: &Address| self.dataset.creation(a).map(|c| c.gas_used);
            let mut verdict = classify_change(
                &diff,
                &self.dataset.findings_for(&old.implementation),
                &self.dataset.findings_for(&new.implementation),
                gas(&old.implementation),
                gas(&new.implementation),
                &self.options.change,
            );
            if old_src.is_none() || new_src.is_none() {
                verdict.evidence.push("source:unavailable".into());
            }
            traced.changes.push(ObservedChangeEdge {
                from: VersionKey::new(address, old.version_number),
                to: VersionKey::new(address, new.version_number),
                categories: verdict.categories,
                evidence: verdict.evidence,
            });
        }
        traced.versions = versions;
        traced
    }

    /// Verified source of `address`, memoized per proxy; explorer failures
    /// degrade to "no source" so a flaky upstream cannot abort a build.
    fn source(
        &self,
        address: Address,
        memo: &mut HashMap<Address, Option<SourceBundle>>,
        errors: &mut usize,
    ) -> Option<SourceBundle> {
        if let Some(hit) = memo.get(&address) {
            return hit.clone();
        }
        let fetched = match self.explorer {
            Some(client) if !address.is_zero() => match client.fetch_verified_source(&address) {
                Ok(b) if b.verified => Some(b),
                Ok(_) => None,
                Err(e) => {
                    log_explorer_error(&address, &e);
                    *errors += 1;
                    None
                }
            },
            _ => None,
        };
        memo.insert(address, fetched.clone());
        fetched
    }
}

fn log_explorer_error(address: &Address, e: &ExplorerError) {
    tracing::warn!(%address, error = %e, "source lookup failed");
}

fn vulnerability_categories(findings: &[VulnFinding]) -> Vec<String> {
    let mut out: Vec<String> = findings
        .iter()
        .map(|f| f.category.trim().to_ascii_lowercase())
        .filter(|c| !c.is_empty())
        .collect();
    out.sort();
    out.dedup();
    out
}
