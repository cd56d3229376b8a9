//! Key material shared by the enclave, the file engine and the release
//! verifiers.
//!
//! Victim keys are P-256 pairs. A per-file key is wrapped by ephemeral ECDH
//! against the victim public key, HKDF-SHA-256, and AES-256-GCM:
//!
//! ```text
//! wrapped = eph_pub (33, SEC1 compressed) | nonce (12) | ct+tag (48)
//! kek     = HKDF-SHA256(salt = eph_pub | vk_pub, ikm = ecdh_x, info = "escrowsim-wrap-v1")
//! ```
//!
//! Attacker keys are RSA-2048 with PKCS#1 v1.5 signatures over SHA-256.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use hkdf::Hkdf;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use ripemd::Ripemd160;
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey};
use rsa::{Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::chainkit::Address;

pub const FINGERPRINT_LEN: usize = 20;
pub const WRAPPED_KEY_LEN: usize = 33 + 12 + 32 + 16;
pub const ATTACKER_KEY_BITS: usize = 2048;

const WRAP_INFO: &[u8] = b"escrowsim-wrap-v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("malformed key encoding")]
    Encoding,
    #[error("wrapped key must be {WRAPPED_KEY_LEN} bytes, got {0}")]
    WrappedLength(usize),
    #[error("key unwrap failed authentication")]
    Unwrap,
    #[error("RSA failure: {0}")]
    Rsa(String),
}

/// Truncated SHA-256 identifying a public key inside an OP_RETURN payload.
pub type Fingerprint = [u8; FINGERPRINT_LEN];

pub fn fingerprint(encoded_key: &[u8]) -> Fingerprint {
    Sha256::digest(encoded_key)[..FINGERPRINT_LEN].try_into().unwrap()
}

#[derive(Clone, PartialEq, Eq)]
pub struct VictimPublicKey(p256::PublicKey);

impl VictimPublicKey {
    /// SEC1 compressed point, 33 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_encoded_point(true).as_bytes().to_vec()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, KeyError> {
        p256::PublicKey::from_sec1_bytes(b).map(VictimPublicKey).map_err(|_| KeyError::Encoding)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(&self.to_bytes())
    }
}

impl fmt::Debug for VictimPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VictimPublicKey({})", hex::encode(self.to_bytes()))
    }
}

#[derive(Clone)]
pub struct VictimSecretKey(p256::SecretKey);

impl VictimSecretKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        VictimSecretKey(p256::SecretKey::random(rng))
    }

    pub fn public_key(&self) -> VictimPublicKey {
        VictimPublicKey(self.0.public_key())
    }

    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(self.0.to_bytes().to_vec())
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, KeyError> {
        p256::SecretKey::from_slice(b).map(VictimSecretKey).map_err(|_| KeyError::Encoding)
    }
}

impl fmt::Debug for VictimSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VictimSecretKey(..)")
    }
}

fn wrap_cipher(eph_pub: &[u8], vk_pub: &[u8], shared: &[u8]) -> Aes256Gcm {
    let mut salt = Vec::with_capacity(eph_pub.len() + vk_pub.len());
    salt.extend_from_slice(eph_pub);
    salt.extend_from_slice(vk_pub);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut kek = Zeroizing::new([0u8; 32]);
    hk.expand(WRAP_INFO, kek.as_mut()).expect("32 bytes is a valid HKDF length");
    Aes256Gcm::new_from_slice(kek.as_ref()).unwrap()
}

/// Wraps a 32-byte key under `vk_pub`.
pub fn wrap_key<R: RngCore + CryptoRng>(
    key: &[u8; 32],
    vk_pub: &VictimPublicKey,
    rng: &mut R,
) -> Vec<u8> {
    let eph = p256::ecdh::EphemeralSecret::random(rng);
    let eph_pub = eph.public_key().to_encoded_point(true).as_bytes().to_vec();
    let shared = eph.diffie_hellman(&vk_pub.0);
    let cipher = wrap_cipher(&eph_pub, &vk_pub.to_bytes(), shared.raw_secret_bytes());
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(&Nonce::from(nonce), Payload { msg: key, aad: &eph_pub })
        .expect("in-memory AES-GCM encryption");
    let mut out = eph_pub;
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn unwrap_key(wrapped: &[u8], vk_prv: &VictimSecretKey) -> Result<Zeroizing<[u8; 32]>, KeyError> {
    if wrapped.len() != WRAPPED_KEY_LEN {
        return Err(KeyError::WrappedLength(wrapped.len()));
    }
    let (eph_pub, rest) = wrapped.split_at(33);
    let (nonce, ct) = rest.split_at(12);
    let eph = p256::PublicKey::from_sec1_bytes(eph_pub).map_err(|_| KeyError::Unwrap)?;
    let shared = p256::ecdh::diffie_hellman(vk_prv.0.to_nonzero_scalar(), eph.as_affine());
    let cipher = wrap_cipher(eph_pub, &vk_prv.public_key().to_bytes(), shared.raw_secret_bytes());
    let pt = Zeroizing::new(
        cipher
            .decrypt(&Nonce::from(<[u8; 12]>::try_from(nonce).unwrap()), Payload { msg: ct, aad: eph_pub })
            .map_err(|_| KeyError::Unwrap)?,
    );
    let mut key = Zeroizing::new([0u8; 32]);
    key.copy_from_slice(&pt);
    Ok(key)
}

#[derive(Clone, PartialEq, Eq)]
pub struct AttackerPublicKey(RsaPublicKey);

impl AttackerPublicKey {
    /// PKCS#1 DER encoding.
    pub fn to_der(&self) -> Vec<u8> {
        self.0.to_pkcs1_der().expect("RSA public key encodes").as_bytes().to_vec()
    }

    pub fn from_der(der: &[u8]) -> Result<Self, KeyError> {
        RsaPublicKey::from_pkcs1_der(der).map(AttackerPublicKey).map_err(|_| KeyError::Encoding)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(&self.to_der())
    }

    /// RIPEMD-160 of SHA-256 of the DER public key.
    pub fn wallet_address(&self) -> Address {
        let sha = Sha256::digest(self.to_der());
        Address(Ripemd160::digest(sha).into())
    }

    /// Verifies a PKCS#1 v1.5 signature over `SHA-256(message)`.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let digest = Sha256::digest(message);
        self.0.verify(Pkcs1v15Sign::new::<Sha256>(), &digest, signature).is_ok()
    }
}

impl fmt::Debug for AttackerPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AttackerPublicKey({})", hex::encode(self.fingerprint()))
    }
}

#[derive(Clone)]
pub struct AttackerKeyPair(RsaPrivateKey);

impl AttackerKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, KeyError> {
        RsaPrivateKey::new(rng, ATTACKER_KEY_BITS)
            .map(AttackerKeyPair)
            .map_err(|e| KeyError::Rsa(e.to_string()))
    }

    /// Deterministic key for seeded simulations. RSA generation is slow, so
    /// results are cached per seed for the life of the process.
    pub fn from_seed(seed: u64) -> Self {
        static CACHE: OnceLock<Mutex<HashMap<u64, AttackerKeyPair>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(k) = cache.lock().unwrap().get(&seed) {
            return k.clone();
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6174_7461_636b_6572);
        let key = Self::generate(&mut rng).expect("RSA generation with a working RNG");
        cache.lock().unwrap().entry(seed).or_insert(key).clone()
    }

    pub fn public_key(&self) -> AttackerPublicKey {
        AttackerPublicKey(self.0.to_public_key())
    }

    /// PKCS#1 v1.5 signature over `SHA-256(message)`.
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        let digest = Sha256::digest(message);
        self.0.sign(Pkcs1v15Sign::new::<Sha256>(), &digest).expect("RSA signing")
    }

    pub fn to_der(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(self.0.to_pkcs1_der().expect("RSA key encodes").as_bytes().to_vec())
    }

    pub fn from_der(der: &[u8]) -> Result<Self, KeyError> {
        RsaPrivateKey::from_pkcs1_der(der).map(AttackerKeyPair).map_err(|_| KeyError::Encoding)
    }
}

impl fmt::Debug for AttackerKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AttackerKeyPair({:?})", self.public_key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_round_trip_and_wrong_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let vk = VictimSecretKey::generate(&mut rng);
        let other = VictimSecretKey::generate(&mut rng);
        let mut ek = [0u8; 32];
        rng.fill_bytes(&mut ek);
        let w = wrap_key(&ek, &vk.public_key(), &mut rng);
        assert_eq!(w.len(), WRAPPED_KEY_LEN);
        assert_eq!(*unwrap_key(&w, &vk).unwrap(), ek);
        assert_eq!(unwrap_key(&w, &other), Err(KeyError::Unwrap));
        let mut t = w.clone();
        t[50] ^= 1;
        assert_eq!(unwrap_key(&t, &vk), Err(KeyError::Unwrap));
    }

    #[test]
    fn victim_keys_encode() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let vk = VictimSecretKey::generate(&mut rng);
        assert_eq!(vk.to_bytes().len(), 32);
        let pk = vk.public_key();
        assert_eq!(pk.to_bytes().len(), 33);
        assert_eq!(VictimPublicKey::from_bytes(&pk.to_bytes()).unwrap(), pk);
        assert_eq!(VictimSecretKey::from_bytes(&vk.to_bytes()).unwrap().public_key(), pk);
    }

    #[test]
    fn rsa_sign_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ak = AttackerKeyPair::generate(&mut rng).unwrap();
        let sig = ak.sign(b"metadata");
        assert_eq!(sig.len(), 256);
        assert!(ak.public_key().verify(b"metadata", &sig));
        assert!(!ak.public_key().verify(b"metadatb", &sig));
        let pk = AttackerPublicKey::from_der(&ak.public_key().to_der()).unwrap();
        assert_eq!(pk, ak.public_key());
        assert_eq!(pk.wallet_address(), ak.public_key().wallet_address());
    }
}
