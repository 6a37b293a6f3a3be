use std::collections::BTreeMap;

use proptest::prelude::*;

use xcsim::hash::{hash_parts, Address, Digest};
use xcsim::samples;
use xcsim::vm::lsd::lsd_transform;
use xcsim::vm::program::SlotKey;
use xcsim::vm::state::{LockError, LockMode, LockRequest, StateContract, UpdateOutcome};

#[derive(Clone, Debug)]
enum Op {
    Amount(u8, u64),
    Whole(u8),
    Commit(u8, u64),
    Abort(u8),
    Expire(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..6u8, 1..40u64).prop_map(|(i, n)| Op::Amount(i, n)),
        1 => (6..9u8).prop_map(Op::Whole),
        3 => (0..9u8, any::<u64>()).prop_map(|(i, r)| Op::Commit(i, r)),
        2 => (0..9u8).prop_map(Op::Abort),
        1 => (0..30u64).prop_map(Op::Expire),
    ]
}

fn inv(i: u8) -> Digest {
    hash_parts(&[b"inv", &[i]])
}

fn bridge() -> Address {
    Address::for_actor("bridge")
}

fn remain() -> SlotKey {
    SlotKey::scalar("remain")
}

fn hotel_state(remain_value: u64) -> StateContract {
    let mut s = lsd_transform(&samples::hotel_contract()).unwrap().state;
    s.bridge_addr = bridge();
    s.set_value(remain(), remain_value);
    s
}

/// What the lock pool should hold: per invocation, its pooled amount and
/// expiry, or a whole-slot lock.
#[derive(Default)]
struct Model {
    value: u64,
    amounts: BTreeMap<Digest, (u64, u64)>,
    whole: Option<(Digest, u64)>,
}

impl Model {
    fn pooled(&self) -> u64 {
        self.amounts.values().map(|(a, _)| a).sum()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn committed_equals_available_plus_pooled(start in 0..200u64, ops in proptest::collection::vec(op(), 1..60)) {
        let mut s = hotel_state(start);
        let mut m = Model { value: start, ..Model::default() };
        let b = bridge();
        for (step, op) in ops.into_iter().enumerate() {
            let expiry = step as u64 + 5;
            match op {
                Op::Amount(i, n) => {
                    let id = inv(i);
                    let r = s.lock_state(&b, id, &[LockRequest { slot: remain(), mode: LockMode::Amount(n) }], expiry);
                    let fits = m.value - m.pooled() >= n;
                    // an invocation never conflicts with its own bags
                    prop_assert_eq!(r.is_ok(), fits && m.whole.is_none(), "{:?}", r);
                    if r.is_ok() {
                        let e = m.amounts.entry(id).or_insert((0, expiry));
                        *e = (e.0 + n, expiry);
                    }
                }
                Op::Whole(i) => {
                    let id = inv(i);
                    let r = s.lock_state(&b, id, &[LockRequest { slot: remain(), mode: LockMode::Whole }], expiry);
                    let free = m.whole.is_none_or(|w| w.0 == id) && m.amounts.is_empty();
                    prop_assert_eq!(r.is_ok(), free);
                    if free {
                        m.whole = Some((id, expiry));
                    }
                }
                Op::Commit(i, r) => {
                    let id = inv(i);
                    if let Some(&(pooled, _)) = m.amounts.get(&id) {
                        let left = r % (pooled + 1);
                        s.update_state(&b, id, &UpdateOutcome::Commit(vec![(remain(), left)])).unwrap();
                        m.value = m.value - pooled + left;
                        m.amounts.remove(&id);
                    } else if m.whole.map(|w| w.0) == Some(id) {
                        let v = r % 500;
                        s.update_state(&b, id, &UpdateOutcome::Commit(vec![(remain(), v)])).unwrap();
                        m.value = v;
                        m.whole = None;
                    }
                }
                Op::Abort(i) => {
                    let id = inv(i);
                    let held = m.amounts.remove(&id).is_some() || m.whole.map(|w| w.0) == Some(id);
                    if m.whole.map(|w| w.0) == Some(id) {
                        m.whole = None;
                    }
                    let r = s.update_state(&b, id, &UpdateOutcome::Abort);
                    if held {
                        prop_assert!(r.is_ok());
                    }
                }
                Op::Expire(h) => {
                    s.expire(h);
                    m.amounts.retain(|_, (_, e)| *e >= h);
                    if m.whole.is_some_and(|(_, e)| e < h) {
                        m.whole = None;
                    }
                }
            }
            prop_assert!(s.conservation_holds());
            prop_assert_eq!(s.value(&remain()), m.value);
            prop_assert_eq!(s.pooled(&remain()), m.pooled());
            prop_assert_eq!(s.value(&remain()), s.available(&remain()) + s.pooled(&remain()));
        }
    }

    #[test]
    fn strangers_cannot_lock_or_update(seed in any::<u64>(), n in 1..10u64) {
        let caller = Address::for_actor(&format!("caller-{seed}"));
        prop_assume!(caller != bridge());
        let mut s = hotel_state(50);
        let id = inv(0);
        s.lock_state(&bridge(), id, &[LockRequest { slot: remain(), mode: LockMode::Amount(n) }], 10).unwrap();
        let before = s.clone();
        let req = [LockRequest { slot: remain(), mode: LockMode::Amount(1) }];
        prop_assert_eq!(s.lock_state(&caller, inv(1), &req, 10), Err(LockError::Unauthorized));
        prop_assert_eq!(s.update_state(&caller, id, &UpdateOutcome::Abort), Err(LockError::Unauthorized));
        prop_assert_eq!(s.update_state(&caller, id, &UpdateOutcome::Commit(vec![(remain(), 0)])), Err(LockError::Unauthorized));
        prop_assert_eq!(s.stage(&caller, id, &[(remain(), 0)]), Err(LockError::Unauthorized));
        prop_assert_eq!(s, before);
    }

    #[test]
    fn abort_after_expiry_restores(start in 1..100u64, amounts in proptest::collection::vec(1..10u64, 1..5)) {
        let mut s = hotel_state(start);
        let mut taken = Vec::new();
        for (i, a) in amounts.iter().enumerate() {
            let id = inv(i as u8);
            if s.lock_state(&bridge(), id, &[LockRequest { slot: remain(), mode: LockMode::Amount(*a) }], 3).is_ok() {
                taken.push(id);
            }
        }
        s.expire(4);
        for id in taken {
            prop_assert!(s.update_state(&bridge(), id, &UpdateOutcome::Abort).is_ok());
            prop_assert!(s.update_state(&bridge(), id, &UpdateOutcome::Commit(vec![(remain(), 0)])).is_err());
        }
        prop_assert!(s.is_idle() && s.conservation_holds());
        prop_assert_eq!(s.available(&remain()), start);
    }
}
