//! Seeded synthetic corpus with known ground truth.
//!
//! The generator builds proxies of every kind with scripted upgrade
//! histories, implementation contracts with fixture sources, and
//! non-proxies that carry decoys (0xf4 inside PUSH data, slot constants
//! without DELEGATECALL). The manifest records what a correct build must
//! recover.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{eip1167_runtime, slot_constants, upgraded_topic, ProxyKind, OP_DELEGATECALL, OP_PUSH1, OP_PUSH32};
use crate::explorer::FixtureRecord;
use crate::ingest::{ContractCreation, Dataset, IngestError, LogRecord, Record, RecordKind, Severity, TxSummary, VulnFinding};
use crate::types::{event_topic, Address, Bytes, Word};

pub const CONTRACTS: usize = 100;
pub const PROXIES: usize = 40;
pub const VERSIONS: usize = 85;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SOURCES_DIR: &str = "sources";

const PROXY_MIX: [(ProxyKind, usize); 5] = [
    (ProxyKind::Eip1967, 12),
    (ProxyKind::MinimalEip1167, 8),
    (ProxyKind::UupsLike, 10),
    (ProxyKind::BeaconLike, 4),
    (ProxyKind::DelegatecallGeneric, 6),
];
const IMPLEMENTATIONS: usize = 45;
const UNVERIFIED_IMPLEMENTATIONS: usize = 5;
const GENESIS_TIMESTAMP: u64 = 1_600_000_000;
const BLOCK_TIME: u64 = 12;
const MAX_VERSIONS_PER_PROXY: usize = 6;

const FINDING_CATEGORIES: [&str; 5] = ["reentrancy", "unchecked-call", "tx-origin", "arithmetic", "access-control"];
const FUNCTIONS: [&str; 12] = [
    "transfer(address to, uint256 amount) public returns (bool)",
    "approve(address spender, uint256 amount) public returns (bool)",
    "balanceOf(address owner) public view returns (uint256)",
    "mint(address to, uint256 amount) public",
    "burn(uint256 amount) public",
    "pause() public",
    "unpause() public",
    "setFee(uint256 bps) public",
    "withdraw(uint256 amount) public",
    "deposit() public payable",
    "claim(uint256 id, bytes32[] proof) public",
    "upgradeTo(address next) public",
];
const BODIES: [&str; 4] = [
    "require(msg.sender != address(0)); counter += 1;",
    "counter = counter + 1; emit Touched(msg.sender);",
    "unchecked { counter++; }",
    "if (counter > 0) { counter -= 1; }",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub contracts: usize,
    pub proxies: usize,
    pub versions: usize,
    pub upgrade_events: usize,
    pub noop_upgrades: usize,
    /// Expected detection result for every contract in the corpus.
    pub kinds: BTreeMap<Address, ProxyKind>,
    /// Implementation sequence per proxy, one entry per version.
    pub chains: BTreeMap<Address, Vec<Address>>,
    /// Transactions placed inside each version's active interval.
    pub tx_counts: BTreeMap<Address, Vec<u64>>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| IngestError::Corrupt(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: Dataset,
    /// Fixture entries for verified implementations, keyed by address.
    pub sources: BTreeMap<Address, FixtureRecord>,
    pub manifest: Manifest,
}

impl Corpus {
    /// Writes the four input NDJSON files, `sources/<address>.json` and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<(), IngestError> {
        let sources = dir.join(SOURCES_DIR);
        fs::create_dir_all(&sources).map_err(|e| IngestError::io(&sources, e))?;
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            let mut text = self.dataset.canonical_lines(kind).join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            fs::write(&path, text).map_err(|e| IngestError::io(&path, e))?;
        }
        for (address, fixture) in &self.sources {
            let path = FixtureRecord::path(&sources, address);
            let json = serde_json::to_string_pretty(fixture).expect("fixture serializes");
            fs::write(&path, json).map_err(|e| IngestError::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| IngestError::io(&path, e))
    }
}

struct Builder {
    rng: ChaCha8Rng,
    dataset: Dataset,
    used: BTreeSet<Address>,
    block: u64,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dataset: Dataset::new(),
            used: BTreeSet::new(),
            block: 1_000,
        }
    }

    fn address(&mut self) -> Address {
        loop {
            let a = Address::from_bytes(self.rng.gen());
            if self.used.insert(a) {
                return a;
            }
        }
    }

    fn hash(&mut self) -> Word {
        Word(self.rng.gen())
    }

    fn insert(&mut self, record: Record) {
        self.dataset.insert(record).expect("generated records are unique");
    }

    fn advance(&mut self, lo: u64, hi: u64) -> u64 {
        self.block += self.rng.gen_range(lo..=hi);
        self.block
    }

    fn create(&mut self, address: Address, code: Vec<u8>, gas_used: u64) -> ContractCreation {
        let block = self.advance(1, 5);
        let creation = ContractCreation {
            address,
            creator: Address::from_bytes([0xee; 20]),
            runtime_bytecode: Bytes(code),
            block_number: block,
            block_timestamp: timestamp(block),
            tx_hash: self.hash(),
            gas_used,
        };
        self.insert(Record::Creation(creation.clone()));
        creation
    }

    fn tx(&mut self, to: Address, block: u64) {
        let tx_hash = self.hash();
        self.insert(Record::Transaction(TxSummary {
            to: Some(to),
            block_number: block,
            block_timestamp: timestamp(block),
            tx_hash,
        }));
    }

    fn log(&mut self, address: Address, topics: Vec<Word>, data: Vec<u8>, block: u64, tx_hash: Option<Word>) {
        let tx_hash = tx_hash.unwrap_or_else(|| self.hash());
        let log_index = self.rng.gen_range(0..4);
        self.insert(Record::Log(LogRecord {
            address,
            topics,
            data: Bytes(data),
            block_number: block,
            log_index,
            tx_hash,
        }));
    }

    /// Random straight-line code without a DELEGATECALL opcode; PUSH
    /// immediates are random and may contain 0xf4.
    fn filler(&mut self, ops: usize) -> Vec<u8> {
        const PLAIN: [u8; 16] = [
            0x01, 0x02, 0x03, 0x04, 0x10, 0x11, 0x14, 0x15, 0x35, 0x36, 0x50, 0x54, 0x55, 0x80, 0x90, 0x5b,
        ];
        let mut code = Vec::new();
        for _ in 0..ops {
            if self.rng.gen_bool(0.3) {
                let n = self.rng.gen_range(1..=32usize);
                code.push(OP_PUSH1 + (n as u8 - 1));
                code.extend((0..n).map(|_| self.rng.gen::<u8>()));
            } else {
                code.push(*PLAIN.choose(&mut self.rng).unwrap());
            }
        }
        code
    }

    fn code_with(&mut self, parts: &[Part]) -> Vec<u8> {
        let mut code = self.filler(8);
        for part in parts {
            match part {
                Part::Slot(w) => {
                    code.push(OP_PUSH32);
                    code.extend_from_slice(&w.0);
                }
                Part::Delegatecall => code.push(OP_DELEGATECALL),
                Part::F4InPushData => code.extend_from_slice(&[OP_PUSH1 + 1, OP_DELEGATECALL, OP_DELEGATECALL]),
            }
            let n = self.rng.gen_range(2..8);
            code.extend(self.filler(n));
        }
        code.extend_from_slice(&[0x3d, 0xf3]);
        code
    }
}

enum Part {
    Slot(Word),
    Delegatecall,
    F4InPushData,
}

fn timestamp(block: u64) -> u64 {
    GENESIS_TIMESTAMP + block * BLOCK_TIME
}

fn source_text(name: &str, functions: &[(usize, usize)]) -> String {
    let mut s = format!(
        "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.19;\n\ncontract {name} {{\n    uint256 private counter;\n    event Touched(address who);\n"
    );
    for (f, b) in functions {
        s.push_str(&format!("\n    function {} {{\n        {}\n    }}\n", FUNCTIONS[*f], BODIES[*b]));
    }
    s.push_str("}\n");
    s
}

fn upgraded_log(implementation: &Address) -> (Vec<Word>, Vec<u8>) {
    (vec![upgraded_topic(), implementation.to_word()], Vec::new())
}

fn implementation_updated_log(proxy: &Address, implementation: &Address) -> (Vec<Word>, Vec<u8>) {
    let topic = event_topic("ImplementationUpdated(address,address,address)");
    let mut data = Vec::with_capacity(96);
    data.extend_from_slice(&proxy.to_word().0);
    data.extend_from_slice(&implementation.to_word().0);
    data.extend_from_slice(&Address::from_bytes([0xee; 20]).to_word().0);
    (vec![topic], data)
}

/// Generates the 100-contract corpus (40 proxies, 85 versions) for `seed`.
pub fn generate(seed: u64) -> Corpus {
    let mut b = Builder::new(seed);
    let mut kinds = BTreeMap::new();
    let mut sources = BTreeMap::new();

    // implementation contracts come first so every version has a creation record
    let mut implementations = Vec::with_capacity(IMPLEMENTATIONS);
    for i in 0..IMPLEMENTATIONS {
        let address = b.address();
        let code = b.code_with(&[]);
        let gas = b.rng.gen_range(200_000..2_000_000);
        b.create(address, code, gas);
        kinds.insert(address, ProxyKind::NotProxy);
        implementations.push(address);

        let mut fns: Vec<usize> = (0..FUNCTIONS.len()).collect();
        fns.shuffle(&mut b.rng);
        let count = b.rng.gen_range(2..6);
        let mut chosen: Vec<(usize, usize)> = fns[..count]
            .iter()
            .map(|f| (*f, b.rng.gen_range(0..BODIES.len())))
            .collect();
        chosen.sort();
        if i >= UNVERIFIED_IMPLEMENTATIONS {
            let name = format!("Logic{i}");
            sources.insert(
                address,
                FixtureRecord {
                    verified: Some(true),
                    source_text: source_text(&name, &chosen),
                    compiler_version: "v0.8.19+commit.7dd6d404".into(),
                    contract_name: name,
                    file_count: Some(1),
                    ..Default::default()
                },
            );
        }
        if b.rng.gen_bool(0.3) {
            let category = FINDING_CATEGORIES.choose(&mut b.rng).unwrap().to_string();
            let line = b.rng.gen_range(10..200);
            b.insert(Record::Finding(VulnFinding {
                address,
                detector: "synthetic".into(),
                category,
                severity: Severity::Medium,
                source_location: format!("Logic{i}.sol:{line}"),
            }));
        }
    }

    let mut proxy_kinds: Vec<ProxyKind> = PROXY_MIX
        .iter()
        .flat_map(|(k, n)| std::iter::repeat(*k).take(*n))
        .collect();
    proxy_kinds.shuffle(&mut b.rng);

    // every proxy gets one version; the remainder is spread over upgradeable ones
    let mut version_counts = vec![1usize; PROXIES];
    let upgradeable: Vec<usize> = (0..PROXIES)
        .filter(|i| proxy_kinds[*i] != ProxyKind::MinimalEip1167)
        .collect();
    let mut extra = VERSIONS - PROXIES;
    while extra > 0 {
        let i = *upgradeable.choose(&mut b.rng).unwrap();
        if version_counts[i] < MAX_VERSIONS_PER_PROXY {
            version_counts[i] += 1;
            extra -= 1;
        }
    }

    let decoys = CONTRACTS - PROXIES - IMPLEMENTATIONS;
    let mut order: Vec<Option<usize>> = (0..PROXIES).map(Some).chain((0..decoys).map(|_| None)).collect();
    order.shuffle(&mut b.rng);

    let slots = slot_constants();
    let transfer = event_topic("Transfer(address,address,uint256)");
    let mut chains = BTreeMap::new();
    let mut tx_counts = BTreeMap::new();
    let mut upgrade_events = 0;
    let mut noop_upgrades = 0;
    let mut decoy_index = 0;

    for slot in order {
        let address = b.address();
        let Some(p) = slot else {
            let parts: Vec<Part> = match decoy_index % 3 {
                0 => vec![Part::F4InPushData],
                1 => vec![Part::Slot(slots.implementation_slot)],
                _ => vec![Part::F4InPushData, Part::Slot(slots.beacon_slot)],
            };
            decoy_index += 1;
            let code = b.code_with(&parts);
            let gas = b.rng.gen_range(100_000..900_000);
            let creation = b.create(address, code, gas);
            kinds.insert(address, ProxyKind::NotProxy);
            for _ in 0..b.rng.gen_range(0..4) {
                let block = b.advance(1, 3).max(creation.block_number + 1);
                let from = b.address();
                let data = Word(b.rng.gen()).0.to_vec();
                b.log(address, vec![transfer, from.to_word(), address.to_word()], data, block, None);
                b.tx(address, block);
            }
            continue;
        };

        let kind = proxy_kinds[p];
        let k = version_counts[p];
        let mut chain: Vec<Address> = Vec::with_capacity(k);
        for v in 0..k {
            let next = loop {
                let candidate = if v >= 2 && b.rng.gen_bool(0.2) {
                    chain[v - 2]
                } else {
                    *implementations.choose(&mut b.rng).unwrap()
                };
                if chain.last() != Some(&candidate) {
                    break candidate;
                }
            };
            chain.push(next);
        }

        let code = match kind {
            ProxyKind::MinimalEip1167 => eip1167_runtime(&chain[0]),
            ProxyKind::Eip1967 if b.rng.gen_bool(0.5) => {
                b.code_with(&[Part::Slot(slots.implementation_slot), Part::Slot(slots.admin_slot), Part::Delegatecall])
            }
            ProxyKind::Eip1967 => b.code_with(&[Part::Slot(slots.implementation_slot), Part::Delegatecall]),
            ProxyKind::BeaconLike => b.code_with(&[Part::Slot(slots.beacon_slot), Part::Delegatecall]),
            ProxyKind::DelegatecallGeneric => b.code_with(&[Part::Delegatecall]),
            ProxyKind::UupsLike if b.rng.gen_bool(0.5) => b.code_with(&[Part::Slot(slots.implementation_slot)]),
            ProxyKind::UupsLike => b.code_with(&[Part::F4InPushData]),
            ProxyKind::NotProxy => unreachable!("mix contains proxies only"),
        };
        let gas = b.rng.gen_range(100_000..400_000);
        let creation = b.create(address, code, gas);
        kinds.insert(address, kind);

        // version i opens at boundaries[i]; transactions go strictly between boundaries
        let mut boundaries = Vec::with_capacity(k);
        let mut counts = vec![0u64; k];
        for (v, implementation) in chain.iter().enumerate() {
            let in_creation_tx = v == 0 && kind == ProxyKind::Eip1967 && b.rng.gen_bool(0.5);
            let block = if kind == ProxyKind::MinimalEip1167 || in_creation_tx {
                creation.block_number
            } else {
                b.advance(2, 6)
            };
            boundaries.push(block);
            if kind != ProxyKind::MinimalEip1167 {
                let tx_hash = in_creation_tx.then_some(creation.tx_hash);
                let (topics, data) = match kind {
                    ProxyKind::DelegatecallGeneric => implementation_updated_log(&address, implementation),
                    _ => upgraded_log(implementation),
                };
                b.log(address, topics.clone(), data.clone(), block, tx_hash);
                upgrade_events += 1;
                if b.rng.gen_bool(0.25) {
                    let again = b.advance(2, 4);
                    b.log(address, topics, data, again, None);
                    upgrade_events += 1;
                    noop_upgrades += 1;
                }
            }
            for _ in 0..b.rng.gen_range(0..5) {
                let block = b.advance(1, 3);
                b.tx(address, block);
                counts[v] += 1;
            }
            // leave a gap so the next boundary is strictly after the last transaction
            b.advance(1, 2);
        }
        chains.insert(address, chain);
        tx_counts.insert(address, counts);
    }

    let manifest = Manifest {
        seed,
        contracts: kinds.len(),
        proxies: chains.len(),
        versions: chains.values().map(Vec::len).sum(),
        upgrade_events,
        noop_upgrades,
        kinds,
        chains,
        tx_counts,
    };
    debug_assert_eq!(manifest.contracts, CONTRACTS);
    Corpus {
        dataset: b.dataset,
        sources,
        manifest,
    }
}

pub fn aba_proxy() -> Address {
    Address::from_bytes([0x11; 20])
}

pub fn second_proxy() -> Address {
    Address::from_bytes([0x22; 20])
}

/// Two proxies, five versions: an EIP-1967 proxy upgraded A → B → A and a
/// UUPS-style proxy upgraded C → D.
///
/// A → B removes a reentrancy finding and adds `mint`; B → A drops `mint`
/// again; C → D keeps every signature and cuts deployment gas by 10%.
pub fn aba_fixture() -> Corpus {
    let [a, bb, c, d] = [0xaa, 0xbb, 0xcc, 0xdd].map(|x| Address::from_bytes([x; 20]));
    let (p1, p2) = (aba_proxy(), second_proxy());
    let mut ds = Dataset::new();
    let mut put = |r: Record| ds.insert(r).expect("fixture records are unique");
    let mut tx_no = 0u8;
    let mut hash = || {
        tx_no += 1;
        Word([tx_no; 32])
    };

    for (i, (addr, gas)) in [(a, 1_200_000), (bb, 1_300_000), (c, 1_000_000), (d, 900_000)]
        .into_iter()
        .enumerate()
    {
        let block = 100 + i as u64;
        put(Record::Creation(ContractCreation {
            address: addr,
            creator: Address::from_bytes([0xee; 20]),
            runtime_bytecode: Bytes(vec![0x60, 0x00, 0x60, 0x00, 0xf3]),
            block_number: block,
            block_timestamp: timestamp(block),
            tx_hash: hash(),
            gas_used: gas,
        }));
    }

    let slots = slot_constants();
    let mut p1_code = vec![OP_PUSH32];
    p1_code.extend_from_slice(&slots.implementation_slot.0);
    p1_code.extend_from_slice(&[0x54, 0x36, 0x3d, 0x3d, 0x37, OP_DELEGATECALL, 0x3d, 0xf3]);
    let p1_tx = hash();
    put(Record::Creation(ContractCreation {
        address: p1,
        creator: Address::from_bytes([0xee; 20]),
        runtime_bytecode: Bytes(p1_code),
        block_number: 110,
        block_timestamp: timestamp(110),
        tx_hash: p1_tx,
        gas_used: 350_000,
    }));
    put(Record::Creation(ContractCreation {
        address: p2,
        creator: Address::from_bytes([0xee; 20]),
        runtime_bytecode: Bytes(vec![0x60, 0x01, 0x54, 0x3d, 0xf3]),
        block_number: 120,
        block_timestamp: timestamp(120),
        tx_hash: hash(),
        gas_used: 250_000,
    }));

    let upgrades = [(p1, a, 110, Some(p1_tx)), (p1, bb, 200, None), (p1, a, 300, None), (p2, c, 130, None), (p2, d, 400, None)];
    for (proxy, implementation, block, tx) in upgrades {
        let (topics, data) = upgraded_log(&implementation);
        let tx_hash = tx.unwrap_or_else(&mut hash);
        put(Record::Log(LogRecord {
            address: proxy,
            topics,
            data: Bytes(data),
            block_number: block,
            log_index: 1,
            tx_hash,
        }));
    }

    for (to, block) in [(p1, 150), (p1, 160), (p1, 250), (p1, 350), (p1, 360), (p1, 370), (p2, 140), (p2, 450)] {
        put(Record::Transaction(TxSummary {
            to: Some(to),
            block_number: block,
            block_timestamp: timestamp(block),
            tx_hash: hash(),
        }));
    }
    put(Record::Finding(VulnFinding {
        address: a,
        detector: "synthetic".into(),
        category: "reentrancy".into(),
        severity: Severity::High,
        source_location: "Vault.sol:42".into(),
    }));

    let base = [(0, 0), (2, 0)];
    let with_mint = [(0, 0), (2, 0), (3, 1)];
    let fixture = |name: &str, fns: &[(usize, usize)]| FixtureRecord {
        verified: Some(true),
        source_text: source_text(name, fns),
        compiler_version: "v0.8.19+commit.7dd6d404".into(),
        contract_name: name.into(),
        file_count: Some(1),
        ..Default::default()
    };
    let sources = BTreeMap::from([
        (a, fixture("Vault", &base)),
        (bb, fixture("Vault", &with_mint)),
        (c, fixture("Token", &[(0, 0), (1, 0)])),
        (d, fixture("Token", &[(0, 2), (1, 2)])),
    ]);

    let manifest = Manifest {
        seed: 0,
        contracts: 6,
        proxies: 2,
        versions: 5,
        upgrade_events: 5,
        noop_upgrades: 0,
        kinds: BTreeMap::from([
            (a, ProxyKind::NotProxy),
            (bb, ProxyKind::NotProxy),
            (c, ProxyKind::NotProxy),
            (d, ProxyKind::NotProxy),
            (p1, ProxyKind::Eip1967),
            (p2, ProxyKind::UupsLike),
        ]),
        chains: BTreeMap::from([(p1, vec![a, bb, a]), (p2, vec![c, d])]),
        tx_counts: BTreeMap::from([(p1, vec![2, 1, 3]), (p2, vec![1, 1])]),
    };
    Corpus {
        dataset: ds,
        sources,
        manifest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ChangeCategory;
    use crate::detect::{classify_proxy, scan_bytecode};
    use crate::explorer::{ClientConfig, ExplorerClient};
    use crate::pipeline::{build_graph, BuildOptions};

    #[test]
    fn corpus_shape_is_fixed() {
        let c = generate(7);
        let m = &c.manifest;
        assert_eq!((m.contracts, m.proxies, m.versions), (CONTRACTS, PROXIES, VERSIONS));
        assert_eq!(c.dataset.count(RecordKind::Creations), CONTRACTS);
        for (kind, n) in PROXY_MIX {
            assert_eq!(m.kinds.values().filter(|k| **k == kind).count(), n, "{kind}");
        }
        for chain in m.chains.values() {
            assert!(chain.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let (a, b) = (generate(42), generate(42));
        assert_eq!(a.dataset.digest(), b.dataset.digest());
        assert_eq!(a.manifest, b.manifest);
        assert_ne!(a.dataset.digest(), generate(43).dataset.digest());
    }

    #[test]
    fn written_inputs_reingest_identically() {
        let c = generate(5);
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let files: Vec<_> = RecordKind::ALL.iter().map(|k| (dir.path().join(k.file_name()), *k)).collect();
        let mut ds = Dataset::new();
        let stats = ds.ingest_files(&files).unwrap();
        assert!(stats.iter().all(|s| s.records_rejected == 0));
        assert_eq!(ds.digest(), c.dataset.digest());
        assert_eq!(Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap(), c.manifest);
    }

    #[test]
    fn detection_matches_manifest() {
        let c = generate(1);
        let logs = c.dataset.logs_by_address();
        for creation in c.dataset.creations() {
            let scan = scan_bytecode(&creation.runtime_bytecode.0);
            let got = classify_proxy(&scan, logs.get(&creation.address).map_or(&[][..], |l| l));
            assert_eq!(got.kind, c.manifest.kinds[&creation.address], "{}", creation.address);
        }
    }

    fn build(c: &Corpus) -> crate::graph::GraphStore {
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let client = ExplorerClient::new(ClientConfig::offline(dir.path().join(SOURCES_DIR))).unwrap();
        build_graph(&c.dataset, Some(&client), &BuildOptions::default()).unwrap().0
    }

    #[test]
    fn build_recovers_chains_and_counts() {
        let c = generate(3);
        let store = build(&c);
        let stats = store.stats();
        assert_eq!((stats.proxy_count, stats.version_count), (PROXIES, VERSIONS));
        for (proxy, chain) in &c.manifest.chains {
            let lineage = store.get_lineage(proxy);
            let got: Vec<Address> = lineage.items.iter().map(|i| i.version.contract_address).collect();
            assert_eq!(&got, chain, "{proxy}");
            let txs: Vec<u64> = lineage.items.iter().map(|i| i.version.total_transactions).collect();
            assert_eq!(&txs, &c.manifest.tx_counts[proxy], "{proxy}");
        }
    }

    #[test]
    fn aba_fixture_lineage() {
        let c = aba_fixture();
        let store = build(&c);
        let lineage = store.get_lineage(&aba_proxy());
        assert_eq!(lineage.items.len(), 3);
        assert!(lineage.items[0].change.is_none());
        let first = lineage.items[1].change.as_ref().unwrap();
        assert_eq!(
            first.categories,
            vec![ChangeCategory::VulnerabilityFix, ChangeCategory::FeatureModification]
        );
        assert!(first.evidence.contains(&"fixed:reentrancy".to_string()));
        let second = lineage.items[2].change.as_ref().unwrap();
        assert_eq!(second.categories, vec![ChangeCategory::FeatureModification]);
        let gas = store.get_lineage(&second_proxy()).items[1].change.clone().unwrap();
        assert_eq!(gas.categories, vec![ChangeCategory::GasOptimization]);
        assert_eq!(lineage.items[0].version.vulnerabilities, vec!["reentrancy".to_string()]);
        let txs: Vec<u64> = lineage.items.iter().map(|i| i.version.total_transactions).collect();
        assert_eq!(txs, vec![2, 1, 3]);
    }

    #[test]
    fn build_is_independent_of_job_count() {
        let c = generate(9);
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let client = ExplorerClient::new(ClientConfig::offline(dir.path().join(SOURCES_DIR))).unwrap();
        let digest = |jobs| {
            let opts = BuildOptions {
                jobs: Some(jobs),
                ..Default::default()
            };
            build_graph(&c.dataset, Some(&client), &opts).unwrap().0.digest()
        };
        assert_eq!(digest(1), digest(4));
    }

    #[test]
    fn no_proxies_gives_empty_graph() {
        let mut ds = Dataset::new();
        ds.insert(Record::Creation(ContractCreation {
            address: Address::from_bytes([1; 20]),
            creator: Address::from_bytes([2; 20]),
            runtime_bytecode: Bytes(vec![0x61, 0xf4, 0xf4, 0x00]),
            block_number: 1,
            block_timestamp: 1,
            tx_hash: Word([3; 32]),
            gas_used: 1,
        }))
        .unwrap();
        let (store, report) = build_graph(&ds, None, &BuildOptions::default()).unwrap();
        assert_eq!(store.stats().proxy_count, 0);
        assert_eq!(report.creations_scanned, 1);
    }
}
