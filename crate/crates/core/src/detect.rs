//! Proxy detection from runtime bytecode and emitted events.
//!
//! The bytecode scan is a linear sweep: PUSH1..PUSH32 (0x60..=0x7f) consume
//! their 1..32 immediate bytes so that data is never read as an instruction.
//! No jump-destination or reachability analysis is done.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::ingest::LogRecord;
use crate::types::{event_topic, keccak256, Address, Word};

pub const OP_PUSH1: u8 = 0x60;
pub const OP_PUSH20: u8 = 0x73;
pub const OP_PUSH32: u8 = 0x7f;
pub const OP_DELEGATECALL: u8 = 0xf4;

/// ERC-1167 runtime code before the embedded 20-byte target.
pub const EIP1167_PREFIX: [u8; 10] = [0x36, 0x3d, 0x3d, 0x37, 0x3d, 0x3d, 0x3d, 0x36, 0x3d, 0x73];
/// ERC-1167 runtime code after the embedded target.
pub const EIP1167_SUFFIX: [u8; 15] = [
    0x5a, 0xf4, 0x3d, 0x82, 0x80, 0x3e, 0x90, 0x3d, 0x91, 0x60, 0x2b, 0x57, 0xfd, 0x5b, 0xf3,
];
pub const EIP1167_LEN: usize = EIP1167_PREFIX.len() + 20 + EIP1167_SUFFIX.len();

/// Canonical signature of the standard upgrade event.
pub const UPGRADED_SIGNATURE: &str = "Upgraded(address)";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpcodeScan {
    pub has_delegatecall: bool,
    /// Byte offsets of DELEGATECALL instructions in the executable stream.
    pub delegatecall_offsets: Vec<usize>,
    /// Every full 32-byte PUSH32 immediate.
    pub pushed_constants: BTreeSet<Word>,
    pub eip1167_target: Option<Address>,
    pub code_size: usize,
}

/// Immediate byte count of `opcode`; non-zero only for PUSH1..PUSH32.
pub fn push_len(opcode: u8) -> usize {
    if (OP_PUSH1..=OP_PUSH32).contains(&opcode) {
        (opcode - OP_PUSH1 + 1) as usize
    } else {
        0
    }
}

pub fn scan_bytecode(code: &[u8]) -> OpcodeScan {
    let mut scan = OpcodeScan {
        code_size: code.len(),
        ..Default::default()
    };
    let mut pc = 0;
    while pc < code.len() {
        let op = code[pc];
        let n = push_len(op);
        if op == OP_DELEGATECALL {
            scan.delegatecall_offsets.push(pc);
        } else if op == OP_PUSH32 && pc + 1 + 32 <= code.len() {
            let mut word = [0u8; 32];
            word.copy_from_slice(&code[pc + 1..pc + 33]);
            scan.pushed_constants.insert(Word(word));
        }
        pc += 1 + n;
    }
    scan.has_delegatecall = !scan.delegatecall_offsets.is_empty();
    scan.eip1167_target = eip1167_target(code);
    scan
}

/// Extracts the target of an ERC-1167 minimal proxy whose runtime code starts
/// with the canonical 45-byte pattern.
pub fn eip1167_target(code: &[u8]) -> Option<Address> {
    if code.len() < EIP1167_LEN
        || code[..10] != EIP1167_PREFIX
        || code[30..EIP1167_LEN] != EIP1167_SUFFIX
    {
        return None;
    }
    let mut target = [0u8; 20];
    target.copy_from_slice(&code[10..30]);
    Some(Address::from_bytes(target))
}

/// Assembles canonical ERC-1167 runtime code for `target`.
pub fn eip1167_runtime(target: &Address) -> Vec<u8> {
    let mut code = Vec::with_capacity(EIP1167_LEN);
    code.extend_from_slice(&EIP1167_PREFIX);
    code.extend_from_slice(target.as_bytes());
    code.extend_from_slice(&EIP1167_SUFFIX);
    code
}

/// The three EIP-1967 storage slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotConstants {
    pub implementation_slot: Word,
    pub admin_slot: Word,
    pub beacon_slot: Word,
}

pub fn slot_constants() -> &'static SlotConstants {
    static SLOTS: OnceLock<SlotConstants> = OnceLock::new();
    SLOTS.get_or_init(|| SlotConstants {
        implementation_slot: keccak256("eip1967.proxy.implementation").wrapping_dec(),
        admin_slot: keccak256("eip1967.proxy.admin").wrapping_dec(),
        beacon_slot: keccak256("eip1967.proxy.beacon").wrapping_dec(),
    })
}

/// topic0 of `Upgraded(address)`.
pub fn upgraded_topic() -> Word {
    static TOPIC: OnceLock<Word> = OnceLock::new();
    *TOPIC.get_or_init(|| event_topic(UPGRADED_SIGNATURE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProxyKind {
    Eip1967,
    UupsLike,
    BeaconLike,
    MinimalEip1167,
    DelegatecallGeneric,
    NotProxy,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 6] = [
        ProxyKind::Eip1967,
        ProxyKind::UupsLike,
        ProxyKind::BeaconLike,
        ProxyKind::MinimalEip1167,
        ProxyKind::DelegatecallGeneric,
        ProxyKind::NotProxy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProxyKind::Eip1967 => "Eip1967",
            ProxyKind::UupsLike => "UupsLike",
            ProxyKind::BeaconLike => "BeaconLike",
            ProxyKind::MinimalEip1167 => "MinimalEip1167",
            ProxyKind::DelegatecallGeneric => "DelegatecallGeneric",
            ProxyKind::NotProxy => "NotProxy",
        }
    }

    pub fn is_proxy(&self) -> bool {
        *self != ProxyKind::NotProxy
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProxyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProxyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown proxy kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    MinimalPatternMatch,
    SlotConstantInCode,
    BeaconSlotInCode,
    UpgradeEventEmitted,
    /// EIP-1967 admin slot pushed alongside DELEGATECALL: the transparent-proxy layout.
    AdminSlotInCode,
    DelegatecallOpcode,
}

impl Evidence {
    pub fn as_str(&self) -> &'static str {
        match self {
            Evidence::MinimalPatternMatch => "minimal-pattern-match",
            Evidence::SlotConstantInCode => "slot-constant-in-code",
            Evidence::BeaconSlotInCode => "beacon-slot-in-code",
            Evidence::UpgradeEventEmitted => "upgrade-event-emitted",
            Evidence::AdminSlotInCode => "admin-slot-in-code",
            Evidence::DelegatecallOpcode => "delegatecall-opcode",
        }
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyClassification {
    pub kind: ProxyKind,
    pub evidence: Vec<Evidence>,
}

/// Decides the proxy mechanism. The first matching rule picks the kind:
///
/// 1. ERC-1167 target extracted → `MinimalEip1167`
/// 2. implementation slot pushed and DELEGATECALL present → `Eip1967`
/// 3. beacon slot pushed and DELEGATECALL present → `BeaconLike`
/// 4. an `Upgraded(address)` log → `Eip1967` with DELEGATECALL, else `UupsLike`
/// 5. DELEGATECALL present → `DelegatecallGeneric`
/// 6. otherwise `NotProxy`
///
/// Evidence lists every one of rules 1–4 that matched (plus the admin-slot
/// tag); the bare-DELEGATECALL tag is only recorded when rule 5 decides.
pub fn classify_proxy(scan: &OpcodeScan, address_logs: &[LogRecord]) -> ProxyClassification {
    let slots = slot_constants();
    let upgraded = upgraded_topic();
    let delegates = scan.has_delegatecall;

    let minimal = scan.eip1167_target.is_some();
    let impl_slot = delegates && scan.pushed_constants.contains(&slots.implementation_slot);
    let beacon_slot = delegates && scan.pushed_constants.contains(&slots.beacon_slot);
    let admin_slot = delegates && scan.pushed_constants.contains(&slots.admin_slot);
    let upgrade_event = address_logs.iter().any(|l| l.topic0() == Some(&upgraded));

    let mut evidence = Vec::new();
    if minimal {
        evidence.push(Evidence::MinimalPatternMatch);
    }
    if impl_slot {
        evidence.push(Evidence::SlotConstantInCode);
    }
    if beacon_slot {
        evidence.push(Evidence::BeaconSlotInCode);
    }
    if upgrade_event {
        evidence.push(Evidence::UpgradeEventEmitted);
    }
    if admin_slot {
        evidence.push(Evidence::AdminSlotInCode);
    }

    let kind = if minimal {
        ProxyKind::MinimalEip1167
    } else if impl_slot {
        ProxyKind::Eip1967
    } else if beacon_slot {
        ProxyKind::BeaconLike
    } else if upgrade_event {
        if delegates {
            ProxyKind::Eip1967
        } else {
            ProxyKind::UupsLike
        }
    } else if delegates {
        ProxyKind::DelegatecallGeneric
    } else {
        ProxyKind::NotProxy
    };
    if kind == ProxyKind::DelegatecallGeneric && evidence.is_empty() {
        evidence.push(Evidence::DelegatecallOpcode);
    }
    ProxyClassification { kind, evidence }
}
