//! Digests, addresses and the canonical encoding used for everything that
//! gets hashed.
//!
//! Canonical encoding is bincode 1.x with its default options: integers are
//! fixed-width little-endian, sequences and strings carry a `u64` LE length
//! prefix, enum variants a `u32` LE tag, `Option` a one-byte tag. See
//! `docs/encoding.md` for the per-structure layouts.

use std::fmt;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

/// A 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

/// A 160-bit account or contract address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// Deterministic address for a named off-chain actor (user, relayer, provider).
    pub fn for_actor(name: &str) -> Address {
        Address::from_digest(&hash_parts(&[b"actor", name.as_bytes()]))
    }

    pub fn from_digest(d: &Digest) -> Address {
        let mut out = [0u8; 20];
        out.copy_from_slice(&d.0[12..]);
        Address(out)
    }

    /// Contract address: `H(chain_id, deployer, nonce)` truncated to 20 bytes.
    pub fn contract(chain_id: u32, deployer: &Address, nonce: u64) -> Address {
        Address::from_digest(&hash_parts(&[b"create", &chain_id.to_le_bytes(), &deployer.0, &nonce.to_le_bytes()]))
    }

    /// Map keys in contract storage are 64-bit; accounts map onto their low bytes.
    pub fn as_key(&self) -> u64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.0[12..]);
        u64::from_le_bytes(b)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0[..4]))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Hash of the concatenation of `parts`, each prefixed with its `u64` LE length.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    Digest(h.finalize().into())
}

pub fn encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    bincode::serialize(value).expect("canonical encoding of in-memory value")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Option<T> {
    bincode::deserialize(bytes).ok()
}

pub fn hash_of<T: Serialize + ?Sized>(value: &T) -> Digest {
    sha256(&encode(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_little_endian_length_prefixed() {
        let bytes = encode(&(7u32, String::from("ab"), vec![1u64]));
        assert_eq!(
            bytes,
            vec![7, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, b'a', b'b', 1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn contract_addresses_differ_by_nonce_and_chain() {
        let d = Address::for_actor("deployer");
        assert_ne!(Address::contract(1, &d, 0), Address::contract(1, &d, 1));
        assert_ne!(Address::contract(1, &d, 0), Address::contract(2, &d, 0));
    }

    #[test]
    fn hash_parts_is_not_plain_concatenation() {
        assert_ne!(hash_parts(&[b"ab", b"c"]), hash_parts(&[b"a", b"bc"]));
    }
}
