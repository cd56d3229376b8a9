use std::collections::HashMap;

use super::{
    merkle_root, mine, Address, BlockHeader, ChainError, Hash256, Transaction,
};

/// Deterministic clock: every tick advances by a fixed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimClock {
    now: u32,
    step: u32,
}

impl SimClock {
    pub fn new(start: u32, step: u32) -> Self {
        SimClock { now: start, step }
    }

    pub fn now(&self) -> u32 {
        self.now
    }

    pub fn tick(&mut self) -> u32 {
        self.now = self.now.wrapping_add(self.step);
        self.now
    }
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock::new(1_700_000_000, 600)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

impl Block {
    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    pub fn txids(&self) -> Vec<Hash256> {
        self.txs.iter().map(Transaction::txid).collect()
    }
}

/// A trusted point on the chain, fixed when the verifier is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub hash: Hash256,
    pub height: u64,
    /// Difficulty every later header must carry.
    pub bits: u32,
}

/// Validated chain snapshot. Every header links to its parent, meets its
/// target, carries the chain's fixed `bits`, and commits to its body.
#[derive(Clone, Debug)]
pub struct Chain {
    bits: u32,
    headers: Vec<BlockHeader>,
    hashes: Vec<Hash256>,
    bodies: HashMap<Hash256, Vec<Transaction>>,
    heights: HashMap<Hash256, u64>,
    tx_heights: HashMap<Hash256, u64>,
}

pub const GENESIS_MINER: Address = Address([0u8; 20]);

impl Chain {
    /// Mines a genesis block (all-zero parent) at the given difficulty.
    pub fn genesis(bits: u32, clock: &mut SimClock) -> Result<Chain, ChainError> {
        let coinbase = Transaction::coinbase(GENESIS_MINER, 0, b"escrowsim genesis");
        let template = BlockHeader {
            version: 1,
            prev_hash: Hash256::ZERO,
            merkle_root: coinbase.txid(),
            timestamp: clock.now(),
            bits,
            pow_nonce: 0,
        };
        let mined = mine(template, u64::MAX)?;
        let mut chain = Chain {
            bits,
            headers: Vec::new(),
            hashes: Vec::new(),
            bodies: HashMap::new(),
            heights: HashMap::new(),
            tx_heights: HashMap::new(),
        };
        chain.push(Block { header: mined.header, txs: vec![coinbase] })?;
        Ok(chain)
    }

    /// Rebuilds and validates a chain from its blocks, genesis first.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Chain, ChainError> {
        let bits = blocks.first().map(|b| b.header.bits).ok_or(ChainError::EmptyBlock)?;
        let mut chain = Chain {
            bits,
            headers: Vec::new(),
            hashes: Vec::new(),
            bodies: HashMap::new(),
            heights: HashMap::new(),
            tx_heights: HashMap::new(),
        };
        for b in blocks {
            chain.push(b)?;
        }
        Ok(chain)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn height(&self) -> u64 {
        self.headers.len() as u64 - 1
    }

    pub fn tip(&self) -> &BlockHeader {
        self.headers.last().expect("chain has a genesis block")
    }

    pub fn tip_hash(&self) -> Hash256 {
        *self.hashes.last().expect("chain has a genesis block")
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn header_at(&self, height: u64) -> Option<&BlockHeader> {
        self.headers.get(height as usize)
    }

    pub fn hash_at(&self, height: u64) -> Option<Hash256> {
        self.hashes.get(height as usize).copied()
    }

    pub fn height_of(&self, hash: &Hash256) -> Option<u64> {
        self.heights.get(hash).copied()
    }

    pub fn body(&self, hash: &Hash256) -> Option<&[Transaction]> {
        self.bodies.get(hash).map(Vec::as_slice)
    }

    pub fn block_at(&self, height: u64) -> Option<Block> {
        let hash = self.hash_at(height)?;
        Some(Block { header: self.headers[height as usize], txs: self.bodies[&hash].clone() })
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        (0..=self.height()).map(move |h| self.block_at(h).unwrap())
    }

    pub fn checkpoint_at(&self, height: u64) -> Option<Checkpoint> {
        Some(Checkpoint { hash: self.hash_at(height)?, height, bits: self.bits })
    }

    pub fn tip_checkpoint(&self) -> Checkpoint {
        self.checkpoint_at(self.height()).unwrap()
    }

    /// Headers strictly after the block with hash `from`, or `None` if `from`
    /// is not on this chain.
    pub fn headers_after(&self, from: &Hash256) -> Option<&[BlockHeader]> {
        let h = self.height_of(from)?;
        Some(&self.headers[h as usize + 1..])
    }

    /// Height of the block containing `txid`, and the transaction.
    pub fn find_tx(&self, txid: &Hash256) -> Option<(u64, &Transaction)> {
        let height = *self.tx_heights.get(txid)?;
        let hash = self.hashes[height as usize];
        let tx = self.bodies[&hash].iter().find(|t| t.txid() == *txid)?;
        Some((height, tx))
    }

    pub fn confirmations(&self, txid: &Hash256) -> u64 {
        match self.tx_heights.get(txid) {
            Some(&h) => self.height() - h + 1,
            None => 0,
        }
    }

    /// Appends a block after full validation against the current tip.
    pub fn push(&mut self, block: Block) -> Result<(), ChainError> {
        let height = self.headers.len() as u64;
        let expected_prev = self.hashes.last().copied().unwrap_or(Hash256::ZERO);
        let h = &block.header;
        if h.prev_hash != expected_prev {
            return Err(ChainError::BrokenLink { height });
        }
        if h.bits != self.bits {
            return Err(ChainError::WrongBits { height, expected: self.bits, found: h.bits });
        }
        if !h.meets_target() {
            return Err(ChainError::InsufficientWork { height });
        }
        if merkle_root(&block.txids())? != h.merkle_root {
            return Err(ChainError::MerkleMismatch { height });
        }
        let hash = h.hash();
        for tx in &block.txs {
            self.tx_heights.entry(tx.txid()).or_insert(height);
        }
        self.headers.push(block.header);
        self.hashes.push(hash);
        self.heights.insert(hash, height);
        self.bodies.insert(hash, block.txs);
        Ok(())
    }

    /// New snapshot with `block` appended; `self` is untouched.
    pub fn extended(&self, block: Block) -> Result<Chain, ChainError> {
        let mut next = self.clone();
        next.push(block)?;
        Ok(next)
    }

    /// Snapshot truncated to `height` (inclusive).
    pub fn truncated(&self, height: u64) -> Chain {
        let blocks: Vec<Block> = (0..=height.min(self.height()))
            .map(|h| self.block_at(h).unwrap())
            .collect();
        Chain::from_blocks(blocks).expect("prefix of a valid chain is valid")
    }

    /// Mines a block on the tip holding a coinbase followed by `txs`.
    /// Returns the number of hash attempts.
    pub fn mine_block(
        &mut self,
        txs: Vec<Transaction>,
        miner: Address,
        clock: &mut SimClock,
        max_iters: u64,
    ) -> Result<u64, ChainError> {
        let height = self.height() + 1;
        let mut body = vec![Transaction::coinbase(miner, height, b"")];
        body.extend(txs);
        let ids: Vec<Hash256> = body.iter().map(Transaction::txid).collect();
        let template = BlockHeader {
            version: 1,
            prev_hash: self.tip_hash(),
            merkle_root: merkle_root(&ids)?,
            timestamp: clock.tick(),
            bits: self.bits,
            pow_nonce: 0,
        };
        let mined = mine(template, max_iters)?;
        self.push(Block { header: mined.header, txs: body })?;
        Ok(mined.attempts)
    }

    /// Mines `n` coinbase-only blocks.
    pub fn mine_empty(&mut self, n: u64, miner: Address, clock: &mut SimClock) -> Result<u64, ChainError> {
        let mut attempts = 0;
        for _ in 0..n {
            attempts += self.mine_block(Vec::new(), miner, clock, u64::MAX)?;
        }
        Ok(attempts)
    }
}

/// `tip_height - containing_height + 1`, or 0 when `txid` is absent.
pub fn confirmations(chain: &Chain, txid: &Hash256) -> u64 {
    chain.confirmations(txid)
}
