//! State contracts: storage, view functions and the bridge-gated lock pool.
//!
//! A slot's committed value only changes through a commit. Fine-grained
//! (amount) locks move part of a scalar slot into the lock pool, so at all
//! times `committed = available + sum(pooled amounts)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gas::{GasMeter, GasSchedule};
use super::interp::{run, VmError};
use super::program::{contract_bytecode, Function, LogicProgram, SlotDecl, SlotKey, StorageHost};
use crate::hash::{Address, Digest};

const STATE_MAGIC: u8 = b'S';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockMode {
    /// Read-only snapshot; excludes writers but not other readers.
    Shared,
    /// Exclusive lock on one slot.
    Whole,
    /// Fine-grained lock on part of a scalar slot.
    Amount(u64),
    /// Exclusive lock on every slot of the contract.
    Contract,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockRequest {
    pub slot: SlotKey,
    pub mode: LockMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockBag {
    pub invocation_id: Digest,
    pub slot: SlotKey,
    pub mode: LockMode,
    pub expiry_height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOutcome {
    Commit(Vec<(SlotKey, u64)>),
    Abort,
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockError {
    #[error("caller is not the registered bridge")]
    Unauthorized,
    #[error("{slot} already locked by invocation {holder:?}")]
    AlreadyLocked { slot: String, holder: Digest },
    #[error("{slot}: requested {requested}, available {available}")]
    InsufficientAvailable { slot: String, available: u64, requested: u64 },
    #[error("{0} is not a scalar integer slot")]
    NotDecomposable(String),
    #[error("unknown slot {0}")]
    UnknownSlot(String),
    #[error("lock amount must be positive")]
    InvalidAmount,
    #[error("no locks recorded for invocation")]
    UnknownInvocation,
    #[error("locks for invocation expired before commit")]
    Expired,
    #[error("write to {0} without an exclusive or amount lock")]
    WriteWithoutLock(String),
    #[error("contract has outstanding locks")]
    Locked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateContract {
    pub name: String,
    pub slots: Vec<SlotDecl>,
    pub functions: Vec<Function>,
    pub storage: BTreeMap<SlotKey, u64>,
    pub logic_addr: Address,
    pub bridge_addr: Address,
    pub deployer: Address,
    pub lock_size: u64,
    pub lockpool: BTreeMap<Digest, Vec<LockBag>>,
    settled: BTreeSet<Digest>,
    expired: BTreeSet<Digest>,
    staged: BTreeMap<Digest, BTreeMap<SlotKey, u64>>,
}

impl StateContract {
    pub fn new(name: &str, slots: Vec<SlotDecl>, functions: Vec<Function>) -> Self {
        StateContract {
            name: name.to_string(),
            slots,
            functions,
            storage: BTreeMap::new(),
            logic_addr: Address::ZERO,
            bridge_addr: Address::ZERO,
            deployer: Address::ZERO,
            lock_size: 1,
            lockpool: BTreeMap::new(),
            settled: BTreeSet::new(),
            expired: BTreeSet::new(),
            staged: BTreeMap::new(),
        }
    }

    /// Storage layout including the locking and pairing slots every state contract carries.
    pub fn declared_slots(&self) -> Vec<String> {
        let base = self.name.strip_prefix('S').unwrap_or(&self.name).to_lowercase();
        self.slots
            .iter()
            .map(|s| s.name.clone())
            .chain(["lock_size".to_string(), "lockpool".to_string(), format!("addr_l{base}")])
            .collect()
    }

    pub fn bytecode(&self) -> Vec<u8> {
        contract_bytecode(STATE_MAGIC, &self.slots, &self.functions)
    }

    pub fn slot_decl(&self, slot: &SlotKey) -> Option<&SlotDecl> {
        self.slots.iter().find(|d| d.name == slot.name)
    }

    fn check_slot(&self, slot: &SlotKey) -> Result<&SlotDecl, LockError> {
        match self.slot_decl(slot) {
            Some(d) if d.kind.is_map() == slot.key.is_some() => Ok(d),
            _ => Err(LockError::UnknownSlot(slot.to_string())),
        }
    }

    pub fn value(&self, slot: &SlotKey) -> u64 {
        self.storage.get(slot).copied().unwrap_or(0)
    }

    pub fn set_value(&mut self, slot: SlotKey, value: u64) {
        self.storage.insert(slot, value);
    }

    fn bags(&self) -> impl Iterator<Item = &LockBag> {
        self.lockpool.values().flatten()
    }

    pub fn pooled(&self, slot: &SlotKey) -> u64 {
        self.bags()
            .filter(|b| &b.slot == slot)
            .map(|b| match b.mode {
                LockMode::Amount(n) => n,
                _ => 0,
            })
            .sum()
    }

    pub fn available(&self, slot: &SlotKey) -> u64 {
        self.value(slot) - self.pooled(slot)
    }

    /// No locks held and nothing staged.
    pub fn is_idle(&self) -> bool {
        self.lockpool.is_empty() && self.staged.is_empty()
    }

    pub fn is_locked(&self) -> bool {
        !self.lockpool.is_empty()
    }

    /// `committed == available + pooled` for every slot with an amount bag.
    pub fn conservation_holds(&self) -> bool {
        self.bags().all(|b| self.pooled(&b.slot) <= self.value(&b.slot))
    }

    pub fn set_lock_size(&mut self, caller: &Address, size: u64) -> Result<(), LockError> {
        if *caller != self.deployer {
            return Err(LockError::Unauthorized);
        }
        if size == 0 {
            return Err(LockError::InvalidAmount);
        }
        self.lock_size = size;
        Ok(())
    }

    fn conflict(&self, inv: &Digest, req: &LockRequest) -> Option<&LockBag> {
        self.bags().filter(|b| b.invocation_id != *inv).find(|b| {
            if b.mode == LockMode::Contract || req.mode == LockMode::Contract {
                return true;
            }
            if b.slot != req.slot {
                return false;
            }
            !matches!(
                (b.mode, req.mode),
                (LockMode::Shared, LockMode::Shared) | (LockMode::Amount(_), LockMode::Amount(_))
            )
        })
    }

    /// Takes every requested lock or none of them and returns the snapshot values
    /// to transport: the pooled amount for amount locks, the committed value otherwise.
    pub fn lock_state(
        &mut self,
        caller: &Address,
        inv: Digest,
        requests: &[LockRequest],
        expiry_height: u64,
    ) -> Result<Vec<(SlotKey, u64)>, LockError> {
        if *caller != self.bridge_addr {
            return Err(LockError::Unauthorized);
        }
        let mut extra: BTreeMap<&SlotKey, u64> = BTreeMap::new();
        for req in requests {
            if req.mode != LockMode::Contract {
                let decl = self.check_slot(&req.slot)?;
                if let LockMode::Amount(n) = req.mode {
                    if !decl.kind.is_uint() {
                        return Err(LockError::NotDecomposable(req.slot.to_string()));
                    }
                    if n == 0 {
                        return Err(LockError::InvalidAmount);
                    }
                    let want = extra.get(&req.slot).copied().unwrap_or(0) + n;
                    let available = self.available(&req.slot);
                    if want > available {
                        return Err(LockError::InsufficientAvailable {
                            slot: req.slot.to_string(),
                            available,
                            requested: n,
                        });
                    }
                    extra.insert(&req.slot, want);
                }
            }
            if let Some(holder) = self.conflict(&inv, req) {
                return Err(LockError::AlreadyLocked { slot: req.slot.to_string(), holder: holder.invocation_id });
            }
        }
        let mut snapshot = Vec::with_capacity(requests.len());
        for req in requests {
            let value = match req.mode {
                LockMode::Amount(n) => n,
                LockMode::Contract => continue,
                _ => self.value(&req.slot),
            };
            snapshot.push((req.slot.clone(), value));
        }
        self.lockpool.entry(inv).or_default().extend(requests.iter().map(|r| LockBag {
            invocation_id: inv,
            slot: r.slot.clone(),
            mode: r.mode,
            expiry_height,
        }));
        Ok(snapshot)
    }

    /// Unlocks, applying `outcome`. Idempotent per invocation.
    pub fn update_state(&mut self, caller: &Address, inv: Digest, outcome: &UpdateOutcome) -> Result<(), LockError> {
        if *caller != self.bridge_addr {
            return Err(LockError::Unauthorized);
        }
        let Some(bags) = self.lockpool.get(&inv) else {
            if self.settled.contains(&inv) {
                return Ok(());
            }
            if self.expired.contains(&inv) {
                return match outcome {
                    UpdateOutcome::Abort => Ok(()),
                    UpdateOutcome::Commit(_) => Err(LockError::Expired),
                };
            }
            return Err(LockError::UnknownInvocation);
        };
        let mut next = self.storage.clone();
        if let UpdateOutcome::Commit(writes) = outcome {
            let staged = self.staged.get(&inv).into_iter().flatten().map(|(k, v)| (k.clone(), *v));
            let all: Vec<(SlotKey, u64)> = writes.iter().cloned().chain(staged).collect();
            for (slot, v) in &all {
                let mode = bags
                    .iter()
                    .find(|b| &b.slot == slot && b.mode != LockMode::Shared)
                    .or_else(|| bags.iter().find(|b| b.mode == LockMode::Contract))
                    .map(|b| b.mode)
                    .ok_or_else(|| LockError::WriteWithoutLock(slot.to_string()))?;
                let current = next.get(slot).copied().unwrap_or(0);
                let new = match mode {
                    LockMode::Amount(_) => {
                        let pooled: u64 = bags
                            .iter()
                            .filter(|b| &b.slot == slot)
                            .map(|b| if let LockMode::Amount(n) = b.mode { n } else { 0 })
                            .sum();
                        current - pooled + v
                    }
                    _ => *v,
                };
                next.insert(slot.clone(), new);
            }
        }
        self.storage = next;
        self.lockpool.remove(&inv);
        self.staged.remove(&inv);
        self.settled.insert(inv);
        Ok(())
    }

    /// Releases bags whose expiry height is below `height`; returns the affected invocations.
    pub fn expire(&mut self, height: u64) -> Vec<Digest> {
        let due: Vec<Digest> = self
            .lockpool
            .iter()
            .filter(|(_, bags)| bags.iter().all(|b| b.expiry_height < height))
            .map(|(id, _)| *id)
            .collect();
        for id in &due {
            self.lockpool.remove(id);
            self.staged.remove(id);
            self.expired.insert(*id);
        }
        due
    }

    /// Value seen by `inv`: its tentative write if it staged one, else the committed value.
    pub fn read_for(&self, inv: &Digest, slot: &SlotKey) -> u64 {
        self.staged.get(inv).and_then(|m| m.get(slot)).copied().unwrap_or_else(|| self.value(slot))
    }

    /// Records tentative writes; they apply on a later commit.
    pub fn stage(&mut self, caller: &Address, inv: Digest, writes: &[(SlotKey, u64)]) -> Result<(), LockError> {
        if *caller != self.bridge_addr {
            return Err(LockError::Unauthorized);
        }
        if !self.lockpool.contains_key(&inv) {
            return Err(LockError::UnknownInvocation);
        }
        let entry = self.staged.entry(inv).or_default();
        for (slot, v) in writes {
            entry.insert(slot.clone(), *v);
        }
        Ok(())
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Runs one of the contract's own functions locally, delegating to the
    /// paired logic program. Refused while any lock is outstanding.
    pub fn call(
        &mut self,
        function: &str,
        args: &[u64],
        logic: Option<&LogicProgram>,
        gas: &GasSchedule,
        meter: &mut GasMeter,
    ) -> Result<Vec<u64>, VmError> {
        let f = self.function(function).cloned().ok_or_else(|| VmError::Call(format!("no function {function}")))?;
        if !f.view && self.is_locked() {
            return Err(VmError::Call(LockError::Locked.to_string()));
        }
        if args.len() != f.params.len() {
            return Err(VmError::AbiMismatch { expected: f.params.len(), got: args.len() });
        }
        let mut storage = self.storage.clone();
        let mut host = StorageHost {
            slots: &self.slots,
            storage: &mut storage,
            call: |a: &[u64], m: &mut GasMeter| match logic {
                Some(l) => l.execute(a, gas, m),
                None => Err(VmError::Call("no paired logic".into())),
            },
        };
        let out = run(&f.code, args, &mut host, gas, meter)?;
        if !f.view {
            self.storage = storage;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::program::SlotKind;

    fn inv(n: u8) -> Digest {
        Digest([n; 32])
    }

    fn hotel() -> (StateContract, Address) {
        let bridge = Address([7; 20]);
        let mut c = StateContract::new(
            "SHotel",
            vec![
                SlotDecl { name: "price".into(), kind: SlotKind::Uint },
                SlotDecl { name: "remain".into(), kind: SlotKind::Uint },
                SlotDecl { name: "accounts".into(), kind: SlotKind::Map },
            ],
            vec![],
        );
        c.bridge_addr = bridge;
        c.set_value(SlotKey::scalar("price"), 5);
        c.set_value(SlotKey::scalar("remain"), 10);
        (c, bridge)
    }

    fn amount(n: u64) -> Vec<LockRequest> {
        vec![LockRequest { slot: SlotKey::scalar("remain"), mode: LockMode::Amount(n) }]
    }

    fn whole() -> Vec<LockRequest> {
        vec![LockRequest { slot: SlotKey::scalar("remain"), mode: LockMode::Whole }]
    }

    #[test]
    fn amount_lock_moves_into_pool() {
        let (mut c, b) = hotel();
        let snap = c.lock_state(&b, inv(1), &amount(3), 100).unwrap();
        assert_eq!(snap, vec![(SlotKey::scalar("remain"), 3)]);
        assert_eq!(c.available(&SlotKey::scalar("remain")), 7);
        assert_eq!(c.value(&SlotKey::scalar("remain")), 10);
        assert_eq!(c.lockpool[&inv(1)].len(), 1);
    }

    #[test]
    fn concurrent_amount_locks_coexist() {
        let (mut c, b) = hotel();
        c.lock_state(&b, inv(1), &amount(3), 100).unwrap();
        c.lock_state(&b, inv(2), &amount(3), 100).unwrap();
        assert_eq!(c.available(&SlotKey::scalar("remain")), 4);
        assert!(matches!(
            c.lock_state(&b, inv(3), &amount(5), 100),
            Err(LockError::InsufficientAvailable { available: 4, requested: 5, .. })
        ));
    }

    #[test]
    fn whole_lock_excludes_everything_else() {
        let (mut c, b) = hotel();
        c.lock_state(&b, inv(1), &whole(), 100).unwrap();
        assert_eq!(
            c.lock_state(&b, inv(2), &amount(1), 100),
            Err(LockError::AlreadyLocked { slot: "remain".into(), holder: inv(1) })
        );
        assert!(matches!(c.lock_state(&b, inv(2), &whole(), 100), Err(LockError::AlreadyLocked { .. })));
        // A whole lock cannot be taken over outstanding amount bags either.
        let (mut c, b) = hotel();
        c.lock_state(&b, inv(1), &amount(1), 100).unwrap();
        assert!(matches!(c.lock_state(&b, inv(2), &whole(), 100), Err(LockError::AlreadyLocked { .. })));
    }

    #[test]
    fn shared_readers_coexist() {
        let (mut c, b) = hotel();
        let read = vec![LockRequest { slot: SlotKey::scalar("price"), mode: LockMode::Shared }];
        c.lock_state(&b, inv(1), &read, 100).unwrap();
        c.lock_state(&b, inv(2), &read, 100).unwrap();
        let write = vec![LockRequest { slot: SlotKey::scalar("price"), mode: LockMode::Whole }];
        assert!(c.lock_state(&b, inv(3), &write, 100).is_err());
    }

    #[test]
    fn failed_batch_takes_nothing() {
        let (mut c, b) = hotel();
        let reqs = vec![
            LockRequest { slot: SlotKey::scalar("price"), mode: LockMode::Shared },
            LockRequest { slot: SlotKey::scalar("remain"), mode: LockMode::Amount(11) },
        ];
        assert!(c.lock_state(&b, inv(1), &reqs, 100).is_err());
        assert!(c.lockpool.is_empty());
    }

    #[test]
    fn only_the_bridge_may_lock_or_update() {
        let (mut c, _) = hotel();
        let stranger = Address([1; 20]);
        assert_eq!(c.lock_state(&stranger, inv(1), &amount(1), 100), Err(LockError::Unauthorized));
        assert_eq!(c.update_state(&stranger, inv(1), &UpdateOutcome::Abort), Err(LockError::Unauthorized));
    }

    #[test]
    fn abort_restores_and_commit_applies_delta() {
        let (mut c, b) = hotel();
        c.lock_state(&b, inv(1), &amount(3), 100).unwrap();
        c.update_state(&b, inv(1), &UpdateOutcome::Abort).unwrap();
        assert_eq!(c.value(&SlotKey::scalar("remain")), 10);
        assert!(c.lockpool.is_empty());

        c.lock_state(&b, inv(2), &amount(3), 100).unwrap();
        // booking 1 out of the 3 pooled leaves 2 in the pool, which returns to the slot
        c.update_state(&b, inv(2), &UpdateOutcome::Commit(vec![(SlotKey::scalar("remain"), 2)])).unwrap();
        assert_eq!(c.value(&SlotKey::scalar("remain")), 9);
        assert!(c.lockpool.is_empty());
        // duplicate commit is a no-op
        c.update_state(&b, inv(2), &UpdateOutcome::Commit(vec![(SlotKey::scalar("remain"), 0)])).unwrap();
        assert_eq!(c.value(&SlotKey::scalar("remain")), 9);
    }

    #[test]
    fn unknown_and_expired_invocations() {
        let (mut c, b) = hotel();
        assert_eq!(c.update_state(&b, inv(9), &UpdateOutcome::Abort), Err(LockError::UnknownInvocation));
        c.lock_state(&b, inv(1), &amount(4), 10).unwrap();
        assert!(c.expire(10).is_empty());
        assert_eq!(c.expire(11), vec![inv(1)]);
        assert_eq!(c.available(&SlotKey::scalar("remain")), 10);
        assert_eq!(c.update_state(&b, inv(1), &UpdateOutcome::Abort), Ok(()));
        assert_eq!(c.update_state(&b, inv(1), &UpdateOutcome::Commit(vec![])), Err(LockError::Expired));
    }

    #[test]
    fn write_needs_exclusive_lock() {
        let (mut c, b) = hotel();
        let read = vec![LockRequest { slot: SlotKey::scalar("price"), mode: LockMode::Shared }];
        c.lock_state(&b, inv(1), &read, 100).unwrap();
        assert_eq!(
            c.update_state(&b, inv(1), &UpdateOutcome::Commit(vec![(SlotKey::scalar("price"), 1)])),
            Err(LockError::WriteWithoutLock("price".into()))
        );
        assert_eq!(c.lockpool.len(), 1);
    }

    #[test]
    fn amount_on_map_entry_is_not_decomposable() {
        let (mut c, b) = hotel();
        let req = vec![LockRequest { slot: SlotKey::entry("accounts", 3), mode: LockMode::Amount(1) }];
        assert_eq!(c.lock_state(&b, inv(1), &req, 9), Err(LockError::NotDecomposable("accounts[3]".into())));
        let bad = vec![LockRequest { slot: SlotKey::scalar("accounts"), mode: LockMode::Whole }];
        assert_eq!(c.lock_state(&b, inv(1), &bad, 9), Err(LockError::UnknownSlot("accounts".into())));
    }

    #[test]
    fn contract_lock_and_staged_writes() {
        let (mut c, b) = hotel();
        let all = vec![LockRequest { slot: SlotKey::scalar("*"), mode: LockMode::Contract }];
        c.lock_state(&b, inv(1), &all, 100).unwrap();
        assert!(c.lock_state(&b, inv(2), &amount(1), 100).is_err());
        c.stage(&b, inv(1), &[(SlotKey::scalar("remain"), 4)]).unwrap();
        assert_eq!(c.read_for(&inv(1), &SlotKey::scalar("remain")), 4);
        assert_eq!(c.value(&SlotKey::scalar("remain")), 10);
        c.update_state(&b, inv(1), &UpdateOutcome::Commit(vec![])).unwrap();
        assert_eq!(c.value(&SlotKey::scalar("remain")), 4);
    }

    #[test]
    fn lock_size_is_deployer_only() {
        let (mut c, _) = hotel();
        c.deployer = Address([3; 20]);
        assert_eq!(c.set_lock_size(&Address([4; 20]), 5), Err(LockError::Unauthorized));
        c.set_lock_size(&Address([3; 20]), 5).unwrap();
        assert_eq!(c.lock_size, 5);
    }
}
