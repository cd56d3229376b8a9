use super::hash::sha256d_pair;
use super::{BlockHeader, ChainError, Hash256, Transaction};

/// Which side of the running hash a sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Explicit Merkle path from a transaction to its block's root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MerkleProof {
    pub leaf_txid: Hash256,
    pub siblings: Vec<(Hash256, Side)>,
    pub block_hash: Hash256,
}

impl MerkleProof {
    /// `leaf:32 | block_hash:32 | count:u8 | { side:u8 (0 left, 1 right) | digest:32 }*`
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(65 + 33 * self.siblings.len());
        out.extend_from_slice(&self.leaf_txid.0);
        out.extend_from_slice(&self.block_hash.0);
        out.push(self.siblings.len() as u8);
        for (digest, side) in &self.siblings {
            out.push(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
            out.extend_from_slice(&digest.0);
        }
        out
    }

    pub fn deserialize(buf: &[u8]) -> Result<Self, ChainError> {
        if buf.len() < 65 {
            return Err(ChainError::Decode("truncated merkle proof"));
        }
        let leaf_txid = Hash256(buf[0..32].try_into().unwrap());
        let block_hash = Hash256(buf[32..64].try_into().unwrap());
        let count = buf[64] as usize;
        if buf.len() != 65 + 33 * count {
            return Err(ChainError::Decode("merkle proof length mismatch"));
        }
        let mut siblings = Vec::with_capacity(count);
        for chunk in buf[65..].chunks_exact(33) {
            let side = match chunk[0] {
                0 => Side::Left,
                1 => Side::Right,
                _ => return Err(ChainError::Decode("bad sibling side")),
            };
            siblings.push((Hash256(chunk[1..].try_into().unwrap()), side));
        }
        Ok(MerkleProof { leaf_txid, siblings, block_hash })
    }
}

/// Bitcoin Merkle root: pairwise double-SHA-256, duplicating the last
/// element of odd-length levels.
pub fn merkle_root(txids: &[Hash256]) -> Result<Hash256, ChainError> {
    if txids.is_empty() {
        return Err(ChainError::EmptyBlock);
    }
    let mut level = txids.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

fn next_level(level: &[Hash256]) -> Vec<Hash256> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => sha256d_pair(l, r),
            [only] => sha256d_pair(only, only),
            _ => unreachable!(),
        })
        .collect()
}

/// Builds the sibling path for `txid` in `body`. `block_hash` is the hash of
/// the header committing to `body`.
pub fn build_proof(
    body: &[Transaction],
    txid: &Hash256,
    block_hash: Hash256,
) -> Result<MerkleProof, ChainError> {
    let mut level: Vec<Hash256> = body.iter().map(Transaction::txid).collect();
    let mut index = level
        .iter()
        .position(|t| t == txid)
        .ok_or(ChainError::TxNotFound(*txid))?;
    let mut siblings = Vec::new();
    while level.len() > 1 {
        let sibling = if index % 2 == 0 {
            (*level.get(index + 1).unwrap_or(&level[index]), Side::Right)
        } else {
            (level[index - 1], Side::Left)
        };
        siblings.push(sibling);
        level = next_level(&level);
        index /= 2;
    }
    Ok(MerkleProof { leaf_txid: *txid, siblings, block_hash })
}

/// Folds the leaf through the siblings and compares with `root`.
///
/// A left sibling equal to the running hash is rejected: duplication only
/// ever happens for a right sibling, and accepting it would let a flipped
/// side bit go unnoticed.
pub fn verify_proof(root: &Hash256, proof: &MerkleProof) -> bool {
    let mut acc = proof.leaf_txid;
    for (sibling, side) in &proof.siblings {
        acc = match side {
            Side::Left if *sibling == acc => return false,
            Side::Left => sha256d_pair(sibling, &acc),
            Side::Right => sha256d_pair(&acc, sibling),
        };
    }
    acc == *root
}

/// [`verify_proof`] against a header, additionally binding the proof's block
/// hash to that header.
pub fn verify_proof_in_header(header: &BlockHeader, proof: &MerkleProof) -> bool {
    proof.block_hash == header.hash() && verify_proof(&header.merkle_root, proof)
}
