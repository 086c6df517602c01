//! Reference oracles for the evochain test suites.
//!
//! Everything here is written directly from first principles (the Keccak
//! permutation, the EVM opcode table, plain dynamic programming) and shares
//! no code with the crates it is used to check.

/// Keccak-256 as used by Ethereum (original Keccak padding `0x01`, not SHA3's `0x06`).
pub fn keccak256(input: &[u8]) -> [u8; 32] {
    const RATE: usize = 136;
    let mut state = [0u64; 25];

    let mut padded = input.to_vec();
    padded.push(0x01);
    while padded.len() % RATE != 0 {
        padded.push(0);
    }
    let last = padded.len() - 1;
    padded[last] |= 0x80;

    for block in padded.chunks(RATE) {
        for (i, lane) in block.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word.copy_from_slice(lane);
            state[i] ^= u64::from_le_bytes(word);
        }
        keccak_f1600(&mut state);
    }

    let mut out = [0u8; 32];
    for (i, chunk) in out.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&state[i].to_le_bytes());
    }
    out
}

fn keccak_f1600(a: &mut [u64; 25]) {
    const RC: [u64; 24] = [
        0x0000000000000001,
        0x0000000000008082,
        0x800000000000808a,
        0x8000000080008000,
        0x000000000000808b,
        0x0000000080000001,
        0x8000000080008081,
        0x8000000000008009,
        0x000000000000008a,
        0x0000000000000088,
        0x0000000080008009,
        0x000000008000000a,
        0x000000008000808b,
        0x800000000000008b,
        0x8000000000008089,
        0x8000000000008003,
        0x8000000000008002,
        0x8000000000000080,
        0x000000000000800a,
        0x800000008000000a,
        0x8000000080008081,
        0x8000000000008080,
        0x0000000080000001,
        0x8000000080008008,
    ];
    // rotation offsets r[x][y], lane index x + 5y
    const ROT: [[u32; 5]; 5] = [
        [0, 36, 3, 41, 18],
        [1, 44, 10, 45, 2],
        [62, 6, 43, 15, 61],
        [28, 55, 25, 21, 56],
        [27, 20, 39, 8, 14],
    ];

    for rc in RC {
        // theta
        let mut c = [0u64; 5];
        for x in 0..5 {
            c[x] = a[x] ^ a[x + 5] ^ a[x + 10] ^ a[x + 15] ^ a[x + 20];
        }
        for x in 0..5 {
            let d = c[(x + 4) % 5] ^ c[(x + 1) % 5].rotate_left(1);
            for y in 0..5 {
                a[x + 5 * y] ^= d;
            }
        }
        // rho + pi
        let mut b = [0u64; 25];
        for x in 0..5 {
            for y in 0..5 {
                let nx = y;
                let ny = (2 * x + 3 * y) % 5;
                b[nx + 5 * ny] = a[x + 5 * y].rotate_left(ROT[x][y]);
            }
        }
        // chi
        for y in 0..5 {
            for x in 0..5 {
                a[x + 5 * y] = b[x + 5 * y] ^ (!b[(x + 1) % 5 + 5 * y] & b[(x + 2) % 5 + 5 * y]);
            }
        }
        // iota
        a[0] ^= rc;
    }
}

/// Big-endian 256-bit decrement, wrapping at zero.
pub fn minus_one(mut value: [u8; 32]) -> [u8; 32] {
    for byte in value.iter_mut().rev() {
        let (v, borrow) = byte.overflowing_sub(1);
        *byte = v;
        if !borrow {
            break;
        }
    }
    value
}

/// One decoded instruction of the reference disassembler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefInstruction {
    pub offset: usize,
    pub opcode: u8,
    /// Immediate bytes actually present (may be shorter than declared at end of code).
    pub immediate: Vec<u8>,
}

/// Number of immediate bytes that follow `opcode` in the EVM instruction stream.
///
/// Written from the EVM opcode table: only PUSH1 (0x60) through
/// PUSH32 (0x7f) carry inline data, `opcode - 0x5f` bytes of it.
pub fn immediate_len(opcode: u8) -> usize {
    match opcode {
        0x60..=0x7f => (opcode - 0x5f) as usize,
        _ => 0,
    }
}

/// Linear sweep disassembly with push-immediate skipping.
pub fn disassemble(code: &[u8]) -> Vec<RefInstruction> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let opcode = code[pc];
        let n = immediate_len(opcode);
        let start = pc + 1;
        let end = (start + n).min(code.len());
        out.push(RefInstruction {
            offset: pc,
            opcode,
            immediate: code[start..end].to_vec(),
        });
        pc = start + n;
    }
    out
}

/// Offsets of every DELEGATECALL (0xf4) instruction in the executable stream.
pub fn delegatecall_offsets(code: &[u8]) -> Vec<usize> {
    disassemble(code)
        .into_iter()
        .filter(|i| i.opcode == 0xf4)
        .map(|i| i.offset)
        .collect()
}

/// Offsets of bytes that are push-immediate data rather than instructions.
pub fn push_data_offsets(code: &[u8]) -> Vec<usize> {
    disassemble(code)
        .into_iter()
        .flat_map(|i| (i.offset + 1)..(i.offset + 1 + i.immediate.len()))
        .collect()
}

/// Run-length segmentation: collapses adjacent equal items, keeping the first of each run.
/// Returns `(segments, collapsed_count)`.
pub fn run_length_segments<T: PartialEq + Clone>(items: &[T]) -> (Vec<T>, usize) {
    let mut segments: Vec<T> = Vec::new();
    let mut collapsed = 0;
    for item in items {
        match segments.last() {
            Some(last) if last == item => collapsed += 1,
            _ => segments.push(item.clone()),
        }
    }
    (segments, collapsed)
}

/// Textbook O(n·m) longest common subsequence length over lines.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn keccak_known_vectors() {
        assert_eq!(
            hex(&keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
        assert_eq!(
            hex(&keccak256(b"transfer(address,uint256)"))[..8],
            *"a9059cbb"
        );
        // crosses the 136-byte rate boundary
        let long = vec![b'a'; 200];
        assert_eq!(keccak256(&long).len(), 32);
    }

    #[test]
    fn minus_one_borrows() {
        let mut v = [0u8; 32];
        v[31] = 0x00;
        v[30] = 0x01;
        let r = minus_one(v);
        assert_eq!(r[30], 0x00);
        assert_eq!(r[31], 0xff);
    }

    #[test]
    fn disassembler_skips_push_data() {
        assert!(delegatecall_offsets(&[0x60, 0xf4]).is_empty());
        assert_eq!(delegatecall_offsets(&[0x60, 0x00, 0xf4]), vec![2]);
        assert_eq!(push_data_offsets(&[0x61, 0x01]), vec![1]);
    }

    #[test]
    fn segments() {
        assert_eq!(run_length_segments(&[1, 1, 2, 1]), (vec![1, 2, 1], 1));
        assert_eq!(lcs_len(&["a", "b", "c"], &["a", "c"]), 2);
    }
}
