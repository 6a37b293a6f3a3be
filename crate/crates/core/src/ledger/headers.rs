use std::collections::BTreeMap;

use crate::hash::Digest;

use super::types::ChainConfig;

#[derive(Clone, Debug, Default)]
pub struct ChainView {
    pub block_time_ms: u64,
    pub confirmation_depth: u64,
    pub hashes: Vec<Digest>,
}

/// Every chain's canonical header hashes, as bridges observe them through the
/// simulator. Index `h` holds the hash of the block at height `h`.
#[derive(Clone, Debug, Default)]
pub struct HeaderBook {
    chains: BTreeMap<u32, ChainView>,
}

impl HeaderBook {
    pub fn add_chain(&mut self, config: &ChainConfig, genesis: Digest) {
        self.chains.insert(
            config.chain_id,
            ChainView {
                block_time_ms: config.block_time_ms,
                confirmation_depth: config.confirmation_depth,
                hashes: vec![genesis],
            },
        );
    }

    pub fn push(&mut self, chain: u32, hash: Digest) {
        if let Some(v) = self.chains.get_mut(&chain) {
            v.hashes.push(hash);
        }
    }

    pub fn view(&self, chain: u32) -> Option<&ChainView> {
        self.chains.get(&chain)
    }

    pub fn head(&self, chain: u32) -> Option<u64> {
        self.chains.get(&chain).map(|v| v.hashes.len() as u64 - 1)
    }

    pub fn block_time(&self, chain: u32) -> Option<u64> {
        self.chains.get(&chain).map(|v| v.block_time_ms)
    }

    pub fn is_canonical(&self, chain: u32, height: u64, hash: &Digest) -> bool {
        self.chains.get(&chain).and_then(|v| v.hashes.get(height as usize)).is_some_and(|h| h == hash)
    }

    /// `None` when the height does not exist yet.
    pub fn is_finalized(&self, chain: u32, height: u64) -> Option<bool> {
        let v = self.chains.get(&chain)?;
        let head = v.hashes.len() as u64 - 1;
        (height <= head).then(|| head - height >= v.confirmation_depth)
    }

    pub fn chain_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.chains.keys().copied()
    }
}
