//! Miniature Bitcoin-shaped chain: 80-byte headers, output-only transactions
//! with OP_RETURN payloads, Merkle trees, proof-of-work mining and
//! confirmation counting.
//!
//! Difficulty is fixed per chain. There is no retargeting, no UTXO set and no
//! script interpreter beyond the two output kinds.

mod chain;
mod error;
mod hash;
mod header;
mod merkle;
mod mining;
mod store;
mod tx;

pub use chain::{confirmations, Block, Chain, Checkpoint, SimClock};
pub use error::ChainError;
pub use hash::{sha256d, Hash256};
pub use header::{
    deserialize_header, header_hash, serialize_header, BlockHeader, Target, BITS_ALWAYS,
    HEADER_LEN,
};
pub use merkle::{build_proof, merkle_root, verify_proof, verify_proof_in_header, MerkleProof, Side};
pub use mining::{mine, mine_fake_chain, FakeChain, Mined};
pub use store::{read_chain, write_chain, ChainFileError, CHAIN_MAGIC, CHAIN_VERSION};
pub use tx::{build_payment_tx, Address, Output, Script, Transaction, MAX_OP_RETURN};
