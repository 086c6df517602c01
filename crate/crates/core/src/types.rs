//! Hex-encoded primitive values shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest, Keccak256};

use crate::error::ValidationError;

/// A 20-byte account address. Text form is always `0x` + 40 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address([u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 20]
    }

    /// Low 20 bytes of a 32-byte word (ABI encoding of an address argument).
    pub fn from_word(word: &Word) -> Self {
        let mut out = [0u8; 20];
        out.copy_from_slice(&word.0[12..]);
        Address(out)
    }

    /// Left-pads the address to a 32-byte word.
    pub fn to_word(&self) -> Word {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&self.0);
        Word(out)
    }

    /// Parses `^(0x)?[0-9a-fA-F]{40}$` into canonical form.
    pub fn normalize(text: &str) -> Result<Self, ValidationError> {
        let bytes = decode_fixed::<20>(text).map_err(|reason| ValidationError::Address {
            input: text.to_string(),
            reason,
        })?;
        Ok(Address(bytes))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = ValidationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::normalize(s)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Address::normalize(&text).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`Address::normalize`].
pub fn normalize_address(text: &str) -> Result<Address, ValidationError> {
    Address::normalize(text)
}

/// A 32-byte value: topics, hashes, storage slots.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub [u8; 32]);

impl Word {
    pub fn parse(text: &str) -> Result<Self, ValidationError> {
        decode_fixed::<32>(text)
            .map(Word)
            .map_err(|reason| ValidationError::Word {
                input: text.to_string(),
                reason,
            })
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Big-endian 256-bit `self - 1`, wrapping at zero.
    pub fn wrapping_dec(mut self) -> Self {
        for byte in self.0.iter_mut().rev() {
            let (v, borrow) = byte.overflowing_sub(1);
            *byte = v;
            if !borrow {
                break;
            }
        }
        self
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Word::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Transaction hash.
pub type TxHash = Word;

/// Arbitrary-length byte string with `0x`-hex text form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn parse(text: &str) -> Result<Self, ValidationError> {
        let digits = strip_prefix(text);
        hex::decode(digits)
            .map(Bytes)
            .map_err(|e| ValidationError::Hex {
                input: truncate(text),
                reason: e.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0))
    }
}

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({})", truncate(&self.to_string()))
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Bytes::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Ethereum Keccak-256.
pub fn keccak256(data: impl AsRef<[u8]>) -> Word {
    let digest = Keccak256::digest(data.as_ref());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    Word(out)
}

/// topic0 of an event with the given canonical signature, e.g. `Upgraded(address)`.
pub fn event_topic(signature: &str) -> Word {
    keccak256(signature.as_bytes())
}

fn strip_prefix(text: &str) -> &str {
    text.strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text)
}

fn decode_fixed<const N: usize>(text: &str) -> Result<[u8; N], String> {
    let digits = strip_prefix(text);
    if digits.len() != N * 2 {
        return Err(format!(
            "expected {} hex digits, found {}",
            N * 2,
            digits.len()
        ));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(digits, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn truncate(text: &str) -> String {
    if text.len() > 80 {
        format!("{}…", &text[..80])
    } else {
        text.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_folds_case() {
        let a = normalize_address("0xABCDEF0000000000000000000000000000000001").unwrap();
        assert_eq!(a.to_string(), "0xabcdef0000000000000000000000000000000001");
    }

    #[test]
    fn normalize_inserts_prefix() {
        let a = normalize_address("abcdef0000000000000000000000000000000001").unwrap();
        assert_eq!(a.to_string(), "0xabcdef0000000000000000000000000000000001");
    }

    #[test]
    fn normalize_rejects_short_and_non_hex() {
        let err = normalize_address("0x1234").unwrap_err();
        assert!(err.to_string().contains("0x1234"));
        assert!(normalize_address("0xZZcdef0000000000000000000000000000000001").is_err());
        assert!(normalize_address("").is_err());
    }

    #[test]
    fn word_round_trip_and_dec() {
        let a = normalize_address("0x00000000000000000000000000000000000000ff").unwrap();
        let w = a.to_word();
        assert_eq!(Address::from_word(&w), a);
        let mut zero = Word::default();
        zero = zero.wrapping_dec();
        assert_eq!(zero.0, [0xff; 32]);
    }

    #[test]
    fn bytes_accept_empty_and_unprefixed() {
        assert!(Bytes::parse("0x").unwrap().is_empty());
        assert_eq!(Bytes::parse("60F4").unwrap().0, vec![0x60, 0xf4]);
        assert!(Bytes::parse("0x6").is_err());
    }

    proptest::proptest! {
        #[test]
        fn address_text_round_trip(bytes in proptest::array::uniform20(proptest::num::u8::ANY)) {
            let a = Address::from_bytes(bytes);
            let text = a.to_string();
            proptest::prop_assert!(text.len() == 42 && text.starts_with("0x"));
            proptest::prop_assert!(text[2..].chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)));
            proptest::prop_assert_eq!(normalize_address(&text).unwrap(), a);
            proptest::prop_assert_eq!(normalize_address(&text.to_uppercase().replace("0X", "0x")).unwrap(), a);
        }
    }
}
