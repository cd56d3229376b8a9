use std::fmt;
use std::path::Path;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use zeroize::{Zeroize, Zeroizing};

use super::EnclaveError;

pub const DEVICE_SECRET_LEN: usize = 32;
pub const SEAL_NONCE_LEN: usize = 12;
const SEAL_SALT: &[u8] = b"escrowsim-seal-v1";

/// Stand-in for the processor-fused base seal key.
#[derive(Clone)]
pub struct DeviceSecret([u8; DEVICE_SECRET_LEN]);

impl DeviceSecret {
    pub fn from_bytes(bytes: [u8; DEVICE_SECRET_LEN]) -> Self {
        DeviceSecret(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut b = [0u8; DEVICE_SECRET_LEN];
        rng.fill_bytes(&mut b);
        DeviceSecret(b)
    }

    /// Reads exactly 32 raw bytes.
    pub fn load(path: &Path) -> Result<Self, EnclaveError> {
        let bytes = Zeroizing::new(std::fs::read(path)?);
        let arr: [u8; DEVICE_SECRET_LEN] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| EnclaveError::DeviceSecretLength(bytes.len()))?;
        Ok(DeviceSecret(arr))
    }

    pub fn expose(&self) -> &[u8; DEVICE_SECRET_LEN] {
        &self.0
    }
}

impl Drop for DeviceSecret {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for DeviceSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DeviceSecret(..)")
    }
}

/// HKDF-SHA-256 with a fixed salt, the device secret as input keying
/// material and the label as context info.
pub fn derive_seal_key(device: &DeviceSecret, label: &[u8]) -> Zeroizing<[u8; 32]> {
    let hk = Hkdf::<Sha256>::new(Some(SEAL_SALT), &device.0);
    let mut key = Zeroizing::new([0u8; 32]);
    hk.expand(label, key.as_mut()).expect("32 bytes is a valid HKDF length");
    key
}

/// Authenticated ciphertext bound to a device secret and a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedBlob {
    pub label: Vec<u8>,
    pub nonce: [u8; SEAL_NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl SealedBlob {
    /// `label_len:u8 | label | nonce:12 | ct_len:u32le | ct`
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.label.len() + 16 + self.ciphertext.len());
        out.push(self.label.len() as u8);
        out.extend_from_slice(&self.label);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    /// Parses a blob from the front of `buf`; returns it and the bytes used.
    pub fn deserialize_prefix(buf: &[u8]) -> Result<(Self, usize), EnclaveError> {
        let bad = || EnclaveError::MalformedBlob;
        let label_len = *buf.first().ok_or_else(bad)? as usize;
        let mut pos = 1;
        let label = buf.get(pos..pos + label_len).ok_or_else(bad)?.to_vec();
        pos += label_len;
        let nonce: [u8; SEAL_NONCE_LEN] =
            buf.get(pos..pos + SEAL_NONCE_LEN).ok_or_else(bad)?.try_into().unwrap();
        pos += SEAL_NONCE_LEN;
        let ct_len = u32::from_le_bytes(buf.get(pos..pos + 4).ok_or_else(bad)?.try_into().unwrap()) as usize;
        pos += 4;
        let ciphertext = buf.get(pos..pos + ct_len).ok_or_else(bad)?.to_vec();
        pos += ct_len;
        Ok((SealedBlob { label, nonce, ciphertext }, pos))
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, EnclaveError> {
        let (blob, used) = Self::deserialize_prefix(buf)?;
        if used != buf.len() {
            return Err(EnclaveError::MalformedBlob);
        }
        Ok(blob)
    }
}

fn cipher_for(device: &DeviceSecret, label: &[u8]) -> Aes256Gcm {
    let key = derive_seal_key(device, label);
    Aes256Gcm::new_from_slice(key.as_ref()).unwrap()
}

/// AES-256-GCM under the derived seal key; the label is also bound as
/// associated data.
pub fn seal<R: RngCore + CryptoRng>(
    device: &DeviceSecret,
    label: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> SealedBlob {
    assert!(label.len() <= u8::MAX as usize, "seal label too long");
    let mut nonce = [0u8; SEAL_NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ciphertext = cipher_for(device, label)
        .encrypt(&Nonce::from(nonce), Payload { msg: plaintext, aad: label })
        .expect("in-memory AES-GCM encryption");
    SealedBlob { label: label.to_vec(), nonce, ciphertext }
}

pub fn unseal(device: &DeviceSecret, blob: &SealedBlob) -> Result<Zeroizing<Vec<u8>>, EnclaveError> {
    cipher_for(device, &blob.label)
        .decrypt(&Nonce::from(blob.nonce), Payload { msg: &blob.ciphertext, aad: &blob.label })
        .map(Zeroizing::new)
        .map_err(|_| EnclaveError::Authentication)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn device(b: u8) -> DeviceSecret {
        DeviceSecret::from_bytes([b; 32])
    }

    #[test]
    fn derivation_is_deterministic_and_label_separated() {
        let d = device(1);
        assert_eq!(*derive_seal_key(&d, b"seal-v1"), *derive_seal_key(&d, b"seal-v1"));
        assert_ne!(*derive_seal_key(&d, b"seal-v1"), *derive_seal_key(&d, b"seal-v2"));
    }

    #[test]
    fn derivation_matches_reference_hkdf() {
        // python hmac-based HKDF(salt=b"escrowsim-seal-v1", ikm=bytes(range(32)), info=b"seal-v1")
        let mut b = [0u8; 32];
        for (i, x) in b.iter_mut().enumerate() {
            *x = i as u8;
        }
        let key = derive_seal_key(&DeviceSecret::from_bytes(b), b"seal-v1");
        assert_eq!(
            hex::encode(*key),
            "7db4361d1d6c9c4d6cbdaca2c7f3d86399ed681fddb8595e529f093419d28895"
        );
    }

    #[test]
    fn seal_round_trip_and_failures() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let d = device(2);
        let blob = seal(&d, b"vk", b"secret bytes", &mut rng);
        assert_eq!(unseal(&d, &blob).unwrap().as_slice(), b"secret bytes");
        assert_eq!(unseal(&device(3), &blob), Err(EnclaveError::Authentication));
        let mut relabeled = blob.clone();
        relabeled.label = b"vl".to_vec();
        assert_eq!(unseal(&d, &relabeled), Err(EnclaveError::Authentication));
        let mut flipped = blob.clone();
        flipped.ciphertext[0] ^= 0x80;
        assert_eq!(unseal(&d, &flipped), Err(EnclaveError::Authentication));
    }

    #[test]
    fn blob_serialization_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let blob = seal(&device(2), b"label", &[9; 40], &mut rng);
        assert_eq!(SealedBlob::deserialize(&blob.serialize()).unwrap(), blob);
        let bytes = blob.serialize();
        assert!(SealedBlob::deserialize(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn load_rejects_wrong_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dev");
        std::fs::write(&p, [1u8; 31]).unwrap();
        assert!(matches!(DeviceSecret::load(&p), Err(EnclaveError::DeviceSecretLength(31))));
        std::fs::write(&p, [1u8; 32]).unwrap();
        assert_eq!(DeviceSecret::load(&p).unwrap().expose(), &[1u8; 32]);
    }
}
