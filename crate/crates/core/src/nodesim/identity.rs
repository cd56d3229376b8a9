//! Simplified certificates standing in for TLS server authentication.
//!
//! An anchor (CA) signs `"escrowsim-cert-v1" | len:u8 | subject | endpoint_key`
//! with ECDSA P-256. A client accepts a certificate only if its issuer key is
//! in the pinned anchor set and the signature verifies; the endpoint then
//! proves possession of its key by signing the client's challenge.

use std::fmt;
use std::path::Path;

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroizing;

pub const KEY_LEN: usize = 33;
pub const SIG_LEN: usize = 64;
const CERT_DOMAIN: &[u8] = b"escrowsim-cert-v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("issuer is not a pinned trust anchor")]
    UnpinnedIssuer,
    #[error("certificate signature does not verify")]
    BadSignature,
    #[error("malformed certificate or key encoding")]
    Malformed,
    #[error("anchor file line {0}: expected a 33-byte hex public key")]
    AnchorLine(usize),
    #[error("cannot read anchor file: {0}")]
    Io(String),
}

fn encode_key(k: &VerifyingKey) -> [u8; KEY_LEN] {
    k.to_encoded_point(true).as_bytes().try_into().unwrap()
}

fn decode_key(b: &[u8]) -> Result<VerifyingKey, CertError> {
    VerifyingKey::from_sec1_bytes(b).map_err(|_| CertError::Malformed)
}

/// Certificate authority key used to issue endpoint identities.
pub struct AnchorKey(SigningKey);

impl AnchorKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        AnchorKey(SigningKey::random(rng))
    }

    pub fn public(&self) -> [u8; KEY_LEN] {
        encode_key(self.0.verifying_key())
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes().into()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CertError> {
        SigningKey::from_slice(b).map(AnchorKey).map_err(|_| CertError::Malformed)
    }

    /// Issues a fresh endpoint identity for `subject`.
    pub fn issue<R: RngCore + CryptoRng>(&self, subject: &str, rng: &mut R) -> EndpointIdentity {
        let key = SigningKey::random(rng);
        let public_key = encode_key(key.verifying_key());
        let issuer = self.public();
        let tbs = Certificate::to_be_signed(subject, &public_key);
        let sig: Signature = self.0.sign(&tbs);
        EndpointIdentity {
            certificate: Certificate {
                subject: subject.to_string(),
                public_key,
                issuer,
                signature: sig.to_bytes().into(),
            },
            key,
        }
    }
}

impl fmt::Debug for AnchorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnchorKey({})", hex::encode(self.public()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub subject: String,
    pub public_key: [u8; KEY_LEN],
    pub issuer: [u8; KEY_LEN],
    pub signature: [u8; SIG_LEN],
}

impl Certificate {
    fn to_be_signed(subject: &str, public_key: &[u8; KEY_LEN]) -> Vec<u8> {
        let mut m = CERT_DOMAIN.to_vec();
        m.push(subject.len() as u8);
        m.extend_from_slice(subject.as_bytes());
        m.extend_from_slice(public_key);
        m
    }

    /// `len:u8 | subject | public_key:33 | issuer:33 | signature:64`
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = vec![self.subject.len() as u8];
        out.extend_from_slice(self.subject.as_bytes());
        out.extend_from_slice(&self.public_key);
        out.extend_from_slice(&self.issuer);
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, CertError> {
        let n = *buf.first().ok_or(CertError::Malformed)? as usize;
        if buf.len() != 1 + n + KEY_LEN * 2 + SIG_LEN {
            return Err(CertError::Malformed);
        }
        let subject = String::from_utf8(buf[1..1 + n].to_vec()).map_err(|_| CertError::Malformed)?;
        let rest = &buf[1 + n..];
        Ok(Certificate {
            subject,
            public_key: rest[..KEY_LEN].try_into().unwrap(),
            issuer: rest[KEY_LEN..2 * KEY_LEN].try_into().unwrap(),
            signature: rest[2 * KEY_LEN..].try_into().unwrap(),
        })
    }

    pub fn endpoint_key(&self) -> Result<VerifyingKey, CertError> {
        decode_key(&self.public_key)
    }
}

/// Certificate plus the endpoint's private key.
pub struct EndpointIdentity {
    pub certificate: Certificate,
    key: SigningKey,
}

impl EndpointIdentity {
    pub fn sign(&self, message: &[u8]) -> [u8; SIG_LEN] {
        let sig: Signature = self.key.sign(message);
        sig.to_bytes().into()
    }

    /// `secret:32 | certificate`
    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(self.key.to_bytes().to_vec());
        out.extend_from_slice(&self.certificate.serialize());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CertError> {
        if buf.len() < 32 {
            return Err(CertError::Malformed);
        }
        let key = SigningKey::from_slice(&buf[..32]).map_err(|_| CertError::Malformed)?;
        let certificate = Certificate::deserialize(&buf[32..])?;
        if certificate.public_key != encode_key(key.verifying_key()) {
            return Err(CertError::Malformed);
        }
        Ok(EndpointIdentity { certificate, key })
    }
}

impl Clone for EndpointIdentity {
    fn clone(&self) -> Self {
        EndpointIdentity { certificate: self.certificate.clone(), key: self.key.clone() }
    }
}

impl fmt::Debug for EndpointIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EndpointIdentity({:?})", self.certificate.subject)
    }
}

/// Verifies an ECDSA signature made by `key_bytes`.
pub fn verify_signature(key_bytes: &[u8; KEY_LEN], message: &[u8], sig: &[u8; SIG_LEN]) -> bool {
    let Ok(key) = decode_key(key_bytes) else { return false };
    let Ok(sig) = Signature::from_slice(sig) else { return false };
    key.verify(message, &sig).is_ok()
}

/// Pinned set of anchor public keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrustAnchors(Vec<[u8; KEY_LEN]>);

impl TrustAnchors {
    pub fn new(keys: Vec<[u8; KEY_LEN]>) -> Self {
        TrustAnchors(keys)
    }

    pub fn keys(&self) -> &[[u8; KEY_LEN]] {
        &self.0
    }

    pub fn is_pinned(&self, issuer: &[u8; KEY_LEN]) -> bool {
        self.0.contains(issuer)
    }

    pub fn verify(&self, cert: &Certificate) -> Result<(), CertError> {
        if !self.is_pinned(&cert.issuer) {
            return Err(CertError::UnpinnedIssuer);
        }
        let tbs = Certificate::to_be_signed(&cert.subject, &cert.public_key);
        if verify_signature(&cert.issuer, &tbs, &cert.signature) {
            Ok(())
        } else {
            Err(CertError::BadSignature)
        }
    }

    /// One hex-encoded compressed key per line; blank lines and `#` comments
    /// are ignored.
    pub fn parse(text: &str) -> Result<Self, CertError> {
        let mut keys = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bytes = hex::decode(line).map_err(|_| CertError::AnchorLine(i + 1))?;
            let key: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CertError::AnchorLine(i + 1))?;
            decode_key(&key).map_err(|_| CertError::AnchorLine(i + 1))?;
            keys.push(key);
        }
        Ok(TrustAnchors(keys))
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|k| format!("{}\n", hex::encode(k))).collect()
    }

    pub fn load(path: &Path) -> Result<Self, CertError> {
        let text = std::fs::read_to_string(path).map_err(|e| CertError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// `count:u8 | key:33 *`
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = vec![self.0.len() as u8];
        for k in &self.0 {
            out.extend_from_slice(k);
        }
        out
    }

    pub fn deserialize_prefix(buf: &[u8]) -> Result<(Self, usize), CertError> {
        let n = *buf.first().ok_or(CertError::Malformed)? as usize;
        let end = 1 + n * KEY_LEN;
        let body = buf.get(1..end).ok_or(CertError::Malformed)?;
        let keys = body.chunks_exact(KEY_LEN).map(|c| c.try_into().unwrap()).collect();
        Ok((TrustAnchors(keys), end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pinned_issuer_verifies_and_foreign_does_not() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let ca = AnchorKey::generate(&mut rng);
        let rogue = AnchorKey::generate(&mut rng);
        let anchors = TrustAnchors::new(vec![ca.public()]);
        let good = ca.issue("explorer.local", &mut rng);
        let bad = rogue.issue("explorer.local", &mut rng);
        assert_eq!(anchors.verify(&good.certificate), Ok(()));
        assert_eq!(anchors.verify(&bad.certificate), Err(CertError::UnpinnedIssuer));
        // rogue signature presented under the pinned issuer's name
        let mut forged = bad.certificate.clone();
        forged.issuer = ca.public();
        assert_eq!(anchors.verify(&forged), Err(CertError::BadSignature));
    }

    #[test]
    fn anchor_file_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = TrustAnchors::new(vec![AnchorKey::generate(&mut rng).public(), AnchorKey::generate(&mut rng).public()]);
        let text = format!("# pinned\n{}\n", a.to_text());
        assert_eq!(TrustAnchors::parse(&text).unwrap(), a);
        assert_eq!(TrustAnchors::parse("zz\n"), Err(CertError::AnchorLine(1)));
    }

    #[test]
    fn certificate_encoding_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let id = AnchorKey::generate(&mut rng).issue("x", &mut rng);
        let c = Certificate::deserialize(&id.certificate.serialize()).unwrap();
        assert_eq!(c, id.certificate);
        let sig = id.sign(b"challenge");
        assert!(verify_signature(&c.public_key, b"challenge", &sig));
        assert!(!verify_signature(&c.public_key, b"challengf", &sig));
    }
}
