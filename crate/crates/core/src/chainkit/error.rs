use thiserror::Error;

use super::Hash256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("header must be exactly 80 bytes, got {0}")]
    HeaderLength(usize),
    #[error("merkle root of an empty transaction list is undefined")]
    EmptyBlock,
    #[error("transaction {0} not found in block")]
    TxNotFound(Hash256),
    #[error("OP_RETURN payload of {0} bytes exceeds the 80-byte limit")]
    OpReturnTooLarge(usize),
    #[error("a transaction may carry at most one OP_RETURN output")]
    MultipleOpReturn,
    #[error("transaction has no outputs")]
    NoOutputs,
    #[error("compact target {0:#010x} is negative or malformed")]
    BadCompactTarget(u32),
    #[error("mining exhausted after {attempts} attempts")]
    Exhausted { attempts: u64 },
    #[error("block at height {height} does not link to its parent")]
    BrokenLink { height: u64 },
    #[error("block at height {height} fails its proof-of-work target")]
    InsufficientWork { height: u64 },
    #[error("block at height {height} uses bits {found:#010x}, chain requires {expected:#010x}")]
    WrongBits { height: u64, expected: u32, found: u32 },
    #[error("block at height {height} has a body whose merkle root does not match its header")]
    MerkleMismatch { height: u64 },
    #[error("unknown block {0}")]
    UnknownBlock(Hash256),
    #[error("malformed encoding: {0}")]
    Decode(&'static str),
}
