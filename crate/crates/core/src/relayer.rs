//! Off-chain relayers: watch bridge events, carry them with receipt proofs,
//! and clone logic programs when asked. Some misbehave on purpose.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{bridge_address, BridgeCall};
use crate::hash::{encode, hash_parts, Address, Digest};
use crate::ledger::{Chain, Transaction, TxStatus};
use crate::runtime::{Artifact, Call};
use crate::vm::instr::{decode_code, encode_code, Instr};
use crate::wire::{message_id, CrossChainMessage, Envelope, Payload, CLONE_REQ, RELAYED};

pub const RELAYER_GAS_LIMIT: u64 = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Behavior {
    Honest,
    /// Skips each message with probability p.
    Drop(f64),
    /// Corrupts each message or clone with probability p.
    Tamper(f64),
    /// Deploys clones on its own before any request and never registers them.
    PrematureClone,
}

impl Behavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, Behavior::Honest)
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Honest => write!(f, "honest"),
            Behavior::Drop(p) => write!(f, "drop({p})"),
            Behavior::Tamper(p) => write!(f, "tamper({p})"),
            Behavior::PrematureClone => write!(f, "premature_clone"),
        }
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let prob = |inner: &str| -> Result<f64, String> {
            let p: f64 = inner.trim().parse().map_err(|_| format!("bad probability `{inner}`"))?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(format!("probability {p} outside [0, 1]"))
            }
        };
        match s {
            "honest" => Ok(Behavior::Honest),
            "premature_clone" => Ok(Behavior::PrematureClone),
            _ => {
                if let Some(inner) = s.strip_prefix("drop(").and_then(|r| r.strip_suffix(')')) {
                    Ok(Behavior::Drop(prob(inner)?))
                } else if let Some(inner) = s.strip_prefix("tamper(").and_then(|r| r.strip_suffix(')')) {
                    Ok(Behavior::Tamper(prob(inner)?))
                } else {
                    Err(format!("unknown relayer behavior `{s}`"))
                }
            }
        }
    }
}

impl TryFrom<String> for Behavior {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Behavior> for String {
    fn from(b: Behavior) -> String {
        b.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayerConfig {
    pub id: String,
    #[serde(default = "honest")]
    pub behavior: Behavior,
    /// Defaults to half the shortest block time.
    #[serde(default)]
    pub poll_interval_ms: Option<u64>,
}

fn honest() -> Behavior {
    Behavior::Honest
}

impl RelayerConfig {
    pub fn new(id: &str, behavior: Behavior) -> Self {
        RelayerConfig { id: id.to_string(), behavior, poll_interval_ms: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayerStats {
    pub relayed: u64,
    pub dropped: u64,
    pub tampered: u64,
    pub clone_attempts: u64,
    pub premature_deploys: u64,
    pub submit_errors: u64,
}

#[derive(Clone, Debug)]
pub struct Relayer {
    pub config: RelayerConfig,
    pub addr: Address,
    pub interval_ms: u64,
    pub offset_ms: u64,
    pub stats: RelayerStats,
    /// Transactions sent, per destination chain.
    pub sent: Vec<(u32, Digest)>,
    /// Message ids this relayer sent tampered.
    pub tampered_ids: BTreeSet<Digest>,
    cursors: BTreeMap<u32, u64>,
    handled: BTreeSet<Digest>,
    rng: ChaCha8Rng,
    premature_done: bool,
}

impl Relayer {
    pub fn new(config: RelayerConfig, default_interval: u64, seed: u64) -> Self {
        let addr = Address::for_actor(&format!("relayer:{}", config.id));
        let stream = hash_parts(&[b"relayer", config.id.as_bytes(), &seed.to_le_bytes()]);
        let mut rng = ChaCha8Rng::from_seed(stream.0);
        let interval_ms = config.poll_interval_ms.unwrap_or(default_interval).max(1);
        let offset_ms = rng.gen_range(0..interval_ms);
        Relayer {
            config,
            addr,
            interval_ms,
            offset_ms,
            stats: RelayerStats::default(),
            sent: Vec::new(),
            tampered_ids: BTreeSet::new(),
            cursors: BTreeMap::new(),
            handled: BTreeSet::new(),
            rng,
            premature_done: false,
        }
    }

    fn roll(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen_bool(p)
    }

    fn submit(&mut self, chains: &mut BTreeMap<u32, Chain>, dest: u32, call: &Call) {
        let Some(chain) = chains.get_mut(&dest) else { return };
        let tx = Transaction {
            sender: self.addr,
            nonce: chain.next_nonce(&self.addr),
            target: bridge_address(dest),
            calldata: encode(call),
            gas_limit: RELAYER_GAS_LIMIT,
            fee: RELAYER_GAS_LIMIT,
        };
        match chain.submit_tx(tx) {
            Ok(h) => self.sent.push((dest, h)),
            Err(_) => self.stats.submit_errors += 1,
        }
    }

    /// One polling round over every chain's newly finalized blocks.
    pub fn poll(&mut self, chains: &mut BTreeMap<u32, Chain>) {
        if self.config.behavior == Behavior::PrematureClone && !self.premature_done {
            self.premature_done = true;
            self.clone_early(chains);
        }
        let ids: Vec<u32> = chains.keys().copied().collect();
        for src in ids {
            let chain = &chains[&src];
            let head = chain.height();
            let depth = chain.config.confirmation_depth;
            if head < depth {
                continue;
            }
            let last = head - depth;
            let from = self.cursors.get(&src).copied().unwrap_or(1);
            let mut work = Vec::new();
            for h in from..=last {
                for r in chain.receipts(h).unwrap_or_default() {
                    if r.status != TxStatus::Success {
                        continue;
                    }
                    for (i, log) in r.logs.iter().enumerate() {
                        if log.emitter == bridge_address(src) {
                            if let Some(env) = Envelope::decode(log) {
                                work.push((r.tx_hash, i as u32, env));
                            }
                        }
                    }
                }
            }
            self.cursors.insert(src, last + 1);
            for (tx_hash, index, env) in work {
                if env.payload.topic() == CLONE_REQ {
                    self.on_clone_req(chains, src, &env.payload);
                } else if RELAYED.contains(&env.payload.topic()) {
                    self.relay(chains, src, tx_hash, index, env.dest_chain);
                }
            }
        }
    }

    fn relay(&mut self, chains: &mut BTreeMap<u32, Chain>, src: u32, tx_hash: Digest, index: u32, dest: u32) {
        let id = message_id(src, &tx_hash, index);
        let Some(dest_chain) = chains.get(&dest) else { return };
        if self.handled.contains(&id) || dest_chain.state.bridge.seen.contains(&id) {
            return;
        }
        self.handled.insert(id);
        if let Behavior::Drop(p) = self.config.behavior {
            if self.roll(p) {
                self.stats.dropped += 1;
                return;
            }
        }
        let Ok((header, receipt, proof)) = chains[&src].get_receipt_proof(&tx_hash) else { return };
        let mut msg =
            CrossChainMessage { source_chain: src, header, receipt, proof, event_index: index, relayer: self.addr };
        if let Behavior::Tamper(p) = self.config.behavior {
            if self.roll(p) {
                if let Some(b) = msg.receipt.logs[index as usize].payload.last_mut() {
                    *b ^= 0x01;
                }
                self.stats.tampered += 1;
                self.tampered_ids.insert(id);
            }
        }
        self.stats.relayed += 1;
        self.submit(chains, dest, &Call::Bridge(BridgeCall::Relay(Box::new(msg))));
    }

    fn on_clone_req(&mut self, chains: &mut BTreeMap<u32, Chain>, exec: u32, payload: &Payload) {
        let Payload::CloneReq { job, invoked_chain, targets } = payload else { return };
        if self.config.behavior == Behavior::PrematureClone {
            return;
        }
        for t in targets {
            if let Behavior::Drop(p) = self.config.behavior {
                if self.roll(p) {
                    self.stats.dropped += 1;
                    continue;
                }
            }
            let pending = chains[&exec].state.bridge.deploy.pending.get(&t.service) == Some(job);
            if !pending {
                continue;
            }
            let Some(mut bytecode) = chains.get(invoked_chain).and_then(|c| c.state.getcode(&t.logic_addr)) else {
                continue;
            };
            if let Behavior::Tamper(p) = self.config.behavior {
                if self.roll(p) {
                    bytecode = tamper_bytecode(&bytecode);
                    self.stats.tampered += 1;
                }
            }
            self.stats.clone_attempts += 1;
            let call = Call::Bridge(BridgeCall::CloneDeploy { job: job.clone(), service: t.service.clone(), bytecode });
            self.submit(chains, exec, &call);
        }
    }

    fn clone_early(&mut self, chains: &mut BTreeMap<u32, Chain>) {
        let mut deploys = Vec::new();
        for (id, chain) in chains.iter() {
            for rec in chain.state.bridge.dapps.values() {
                for s in &rec.analysis.clone_list {
                    let home = &rec.homes[s];
                    if let Some(code) = chains.get(&home.chain).and_then(|c| c.state.getcode(&home.logic_addr)) {
                        let artifact = Artifact::Logic {
                            name: s.clone(),
                            bytecode: code,
                            params: home.logic_params.clone(),
                            returns: home.logic_returns.clone(),
                        };
                        deploys.push((*id, Call::Deploy(artifact)));
                    }
                }
            }
        }
        for (dest, call) in deploys {
            self.stats.premature_deploys += 1;
            self.submit(chains, dest, &call);
        }
    }
}

/// A still-valid program that computes something else: the first constant is
/// bumped, or the last byte flipped when there is none.
pub fn tamper_bytecode(bytes: &[u8]) -> Vec<u8> {
    if bytes.len() > 3 {
        if let Ok(mut code) = decode_code(&bytes[3..]) {
            if let Some(Instr::Push(k)) = code.iter_mut().find(|i| matches!(i, Instr::Push(_))) {
                *k = k.wrapping_add(1);
                let mut out = bytes[..3].to_vec();
                out.extend(encode_code(&code));
                return out;
            }
        }
    }
    let mut out = bytes.to_vec();
    if let Some(b) = out.last_mut() {
        *b ^= 0x01;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn behavior_round_trips() {
        for s in ["honest", "drop(1)", "tamper(0.5)", "premature_clone"] {
            let b: Behavior = s.parse().unwrap();
            assert_eq!(b.to_string().parse::<Behavior>().unwrap(), b);
        }
        assert!("drop(1.5)".parse::<Behavior>().is_err());
        assert!("lazy".parse::<Behavior>().is_err());
    }

    #[test]
    fn tampered_bytecode_differs_but_decodes() {
        let code = samples::hotel_logic().bytecode();
        let bad = tamper_bytecode(&code);
        assert_ne!(bad, code);
        assert!(crate::vm::program::LogicProgram::from_bytecode("x", &bad, vec!["a".into(); 3], vec!["b".into(); 2])
            .is_ok());
    }

    #[test]
    fn offsets_are_seeded() {
        let a = Relayer::new(RelayerConfig::new("r1", Behavior::Honest), 2500, 7);
        let b = Relayer::new(RelayerConfig::new("r1", Behavior::Honest), 2500, 7);
        assert_eq!(a.offset_ms, b.offset_ms);
        assert!(a.offset_ms < 2500);
    }
}
