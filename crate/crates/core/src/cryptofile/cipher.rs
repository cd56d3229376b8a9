use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};

/// Plaintext bytes per chunk.
pub const CHUNK_SIZE: usize = 64 * 1024;
pub const TAG_LEN: usize = 16;

/// AES-256-GCM over fixed-size chunks. Chunk `i` uses the base nonce with its
/// last eight bytes XORed with `i` (little-endian); the associated data is
/// `i:u64le | last:u8`, so reordering, truncation and extension all fail
/// authentication.
pub struct ChunkCipher {
    aead: Aes256Gcm,
    base_nonce: [u8; 12],
}

impl ChunkCipher {
    pub fn new(key: &[u8; 32], base_nonce: [u8; 12]) -> Self {
        ChunkCipher { aead: Aes256Gcm::new(key.into()), base_nonce }
    }

    fn nonce(&self, index: u64) -> Nonce<aes_gcm::aead::consts::U12> {
        let mut n = self.base_nonce;
        for (b, i) in n[4..].iter_mut().zip(index.to_le_bytes()) {
            *b ^= i;
        }
        Nonce::from(n)
    }

    fn aad(index: u64, last: bool) -> [u8; 9] {
        let mut a = [0u8; 9];
        a[..8].copy_from_slice(&index.to_le_bytes());
        a[8] = last as u8;
        a
    }

    pub fn seal_chunk(&self, index: u64, last: bool, plaintext: &[u8]) -> Vec<u8> {
        debug_assert!(plaintext.len() <= CHUNK_SIZE);
        self.aead
            .encrypt(&self.nonce(index), Payload { msg: plaintext, aad: &Self::aad(index, last) })
            .expect("in-memory AES-GCM encryption")
    }

    pub fn open_chunk(&self, index: u64, last: bool, ciphertext: &[u8]) -> Option<Vec<u8>> {
        self.aead
            .decrypt(&self.nonce(index), Payload { msg: ciphertext, aad: &Self::aad(index, last) })
            .ok()
    }
}

/// Number of chunks for a plaintext of `len` bytes. An empty file still has
/// one (empty) final chunk.
pub fn chunk_count(len: usize) -> usize {
    len.div_ceil(CHUNK_SIZE).max(1)
}
