use std::cmp::Ordering;

use super::{sha256d, ChainError, Hash256};

pub const HEADER_LEN: usize = 80;

/// Compact encoding whose expansion overflows 256 bits; it saturates to
/// `2^256 - 1`, so every header satisfies it.
pub const BITS_ALWAYS: u32 = 0x2200_ffff;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct BlockHeader {
    pub version: i32,
    pub prev_hash: Hash256,
    pub merkle_root: Hash256,
    pub timestamp: u32,
    pub bits: u32,
    pub pow_nonce: u32,
}

impl BlockHeader {
    pub fn hash(&self) -> Hash256 {
        header_hash(self)
    }

    pub fn target(&self) -> Result<Target, ChainError> {
        Target::from_compact(self.bits)
    }

    /// True when the header hash, read as a little-endian integer, is at most
    /// the target expanded from `bits`.
    pub fn meets_target(&self) -> bool {
        match self.target() {
            Ok(t) => t.is_met_by(&self.hash()),
            Err(_) => false,
        }
    }
}

/// Bitcoin field order, integers little-endian, digests in internal order.
pub fn serialize_header(h: &BlockHeader) -> [u8; HEADER_LEN] {
    let mut out = [0u8; HEADER_LEN];
    out[0..4].copy_from_slice(&h.version.to_le_bytes());
    out[4..36].copy_from_slice(&h.prev_hash.0);
    out[36..68].copy_from_slice(&h.merkle_root.0);
    out[68..72].copy_from_slice(&h.timestamp.to_le_bytes());
    out[72..76].copy_from_slice(&h.bits.to_le_bytes());
    out[76..80].copy_from_slice(&h.pow_nonce.to_le_bytes());
    out
}

pub fn deserialize_header(bytes: &[u8]) -> Result<BlockHeader, ChainError> {
    if bytes.len() != HEADER_LEN {
        return Err(ChainError::HeaderLength(bytes.len()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let digest_at = |i: usize| Hash256(bytes[i..i + 32].try_into().unwrap());
    Ok(BlockHeader {
        version: i32::from_le_bytes(bytes[0..4].try_into().unwrap()),
        prev_hash: digest_at(4),
        merkle_root: digest_at(36),
        timestamp: u32_at(68),
        bits: u32_at(72),
        pow_nonce: u32_at(76),
    })
}

pub fn header_hash(h: &BlockHeader) -> Hash256 {
    sha256d(&serialize_header(h))
}

/// A 256-bit proof-of-work threshold stored big-endian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Target(pub [u8; 32]);

impl Target {
    pub const MAX: Target = Target([0xff; 32]);

    /// `2^exp` for `exp < 256`.
    pub fn pow2(exp: u32) -> Target {
        assert!(exp < 256);
        let mut be = [0u8; 32];
        let byte = 31 - (exp / 8) as usize;
        be[byte] = 1 << (exp % 8);
        Target(be)
    }

    /// Expands Bitcoin's compact `bits` form: `mantissa * 256^(exponent - 3)`.
    /// Negative encodings are rejected; expansions wider than 256 bits
    /// saturate to [`Target::MAX`].
    pub fn from_compact(bits: u32) -> Result<Target, ChainError> {
        let exponent = (bits >> 24) as i32;
        let mantissa = bits & 0x007f_ffff;
        if bits & 0x0080_0000 != 0 && mantissa != 0 {
            return Err(ChainError::BadCompactTarget(bits));
        }
        let mut be = [0u8; 32];
        let m = mantissa.to_be_bytes(); // m[0] is always zero
        // byte k of the 3-byte mantissa (most significant first) lands at
        // little-endian byte position exponent - 1 - k
        for (k, &b) in m[1..].iter().enumerate() {
            if b == 0 {
                continue;
            }
            let pos = exponent - 1 - k as i32;
            if pos >= 32 {
                return Ok(Target::MAX);
            }
            if pos >= 0 {
                be[31 - pos as usize] = b;
            }
        }
        Ok(Target(be))
    }

    /// Compact encoding in Bitcoin's normalized form. Lossy for targets with
    /// more than 23 significant bits.
    pub fn to_compact(&self) -> u32 {
        let first = match self.0.iter().position(|&b| b != 0) {
            Some(i) => i,
            None => return 0,
        };
        let mut size = (32 - first) as u32;
        let mut mant = [0u8; 4];
        for k in 0..3 {
            mant[1 + k] = *self.0.get(first + k).unwrap_or(&0);
        }
        let mut mantissa = u32::from_be_bytes(mant);
        if mantissa & 0x0080_0000 != 0 {
            mantissa >>= 8;
            size += 1;
        }
        (size << 24) | mantissa
    }

    /// Compares the hash interpreted as a little-endian 256-bit integer.
    pub fn is_met_by(&self, hash: &Hash256) -> bool {
        let mut be = hash.0;
        be.reverse();
        be.cmp(&self.0) != Ordering::Greater
    }

    /// Target as an `f64`, for work estimates.
    pub fn to_f64(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, &b| acc * 256.0 + b as f64)
    }

    /// Expected number of hash attempts to meet this target: `2^256 / (target + 1)`.
    pub fn expected_attempts(&self) -> f64 {
        2f64.powi(256) / (self.to_f64() + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BlockHeader {
        let mut prev = [0u8; 32];
        let mut root = [0u8; 32];
        for i in 0..32 {
            prev[i] = i as u8;
            root[i] = 32 + i as u8;
        }
        BlockHeader {
            version: 1,
            prev_hash: Hash256(prev),
            merkle_root: Hash256(root),
            timestamp: 1_231_006_505,
            bits: 0x1d00ffff,
            pow_nonce: 2_083_236_893,
        }
    }

    #[test]
    fn zero_header_serializes_to_zero_bytes() {
        assert_eq!(serialize_header(&BlockHeader::default()), [0u8; 80]);
    }

    #[test]
    fn zero_header_hash_matches_reference() {
        // python: hashlib.sha256(hashlib.sha256(bytes(80)).digest()).hexdigest()
        assert_eq!(
            header_hash(&BlockHeader::default()).to_hex(),
            "4be7570e8f70eb093640c8468274ba759745a7aa2b7d25ab1e0421b259845014"
        );
    }

    #[test]
    fn sample_header_bytes_and_hash_match_reference() {
        let h = sample();
        assert_eq!(
            hex::encode(serialize_header(&h)),
            "01000000000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f\
             202122232425262728292a2b2c2d2e2f303132333435363738393a3b3c3d3e3f\
             29ab5f49ffff001d1dac2b7c"
        );
        assert_eq!(
            header_hash(&h).to_hex(),
            "683c020bc1a9c0ada61ae47f55599a2510e804881d324cb0b3317b34adbdcc91"
        );
    }

    #[test]
    fn mainnet_genesis_hash() {
        let mut root = hex::decode("4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b")
            .unwrap();
        root.reverse();
        let h = BlockHeader {
            version: 1,
            prev_hash: Hash256::ZERO,
            merkle_root: Hash256(root.try_into().unwrap()),
            timestamp: 1_231_006_505,
            bits: 0x1d00ffff,
            pow_nonce: 2_083_236_893,
        };
        let mut id = h.hash().0;
        id.reverse();
        assert_eq!(
            hex::encode(id),
            "000000000019d6689c085ae165831e934ff763ae46a2a6c172b3f1b60a8ce26f"
        );
        assert!(h.meets_target());
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert_eq!(deserialize_header(&[0u8; 79]), Err(ChainError::HeaderLength(79)));
        assert_eq!(deserialize_header(&[0u8; 81]), Err(ChainError::HeaderLength(81)));
    }

    #[test]
    fn nonce_changes_digest() {
        let a = sample();
        let mut b = a;
        b.pow_nonce ^= 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn compact_round_trips() {
        assert_eq!(Target::from_compact(0x1f01_0000).unwrap(), Target::pow2(240));
        assert_eq!(Target::from_compact(0x1f10_0000).unwrap(), Target::pow2(244));
        assert_eq!(Target::from_compact(0x1e10_0000).unwrap(), Target::pow2(236));
        assert_eq!(Target::pow2(240).to_compact(), 0x1f01_0000);
        assert_eq!(Target::pow2(244).to_compact(), 0x1f10_0000);
        let mainnet = Target::from_compact(0x1d00_ffff).unwrap();
        assert_eq!(mainnet.to_compact(), 0x1d00_ffff);
        assert_eq!(&mainnet.0[4..6], &[0xff, 0xff]);
        assert!(mainnet.0[..4].iter().all(|&b| b == 0));
    }

    #[test]
    fn compact_saturates_and_rejects_negative() {
        assert_eq!(Target::from_compact(BITS_ALWAYS).unwrap(), Target::MAX);
        assert!(Target::from_compact(0x0480_0001).is_err());
        assert!(Target::MAX.is_met_by(&Hash256([0xff; 32])));
    }

    #[test]
    fn target_comparison_is_little_endian() {
        let t = Target::pow2(240);
        // little-endian value 2^240 exactly: byte 30 = 1
        let mut eq = [0u8; 32];
        eq[30] = 1;
        assert!(t.is_met_by(&Hash256(eq)));
        eq[0] = 1;
        assert!(!t.is_met_by(&Hash256(eq)));
        let mut low = [0xffu8; 32];
        low[30] = 0;
        low[31] = 0;
        assert!(t.is_met_by(&Hash256(low)));
    }

    #[test]
    fn expected_attempts_for_pow2_targets() {
        let e = Target::pow2(240).expected_attempts();
        assert!((e - 65536.0).abs() < 1e-6);
    }
}
