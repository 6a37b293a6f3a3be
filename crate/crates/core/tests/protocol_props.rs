mod common;

use proptest::prelude::*;

use common::{plans, random_case, rounds};
use xcsim::bridge::compare_bytes;
use xcsim::hash::sha256;
use xcsim::runner::{build_world, execute};
use xcsim::scenario::Overrides;
use xcsim::world::{Protocol, ReqState, RequestSpec, DEFAULT_EXEC_GAS};

/// Calls whose service lives off the execution chain.
fn remote_calls(case: &common::RandomCase) -> Vec<u32> {
    case.dapp
        .calls
        .iter()
        .map(|c| case.services.iter().find(|s| s.id == c.service).unwrap().chain)
        .filter(|c| *c != case.dapp.exec_chain)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integrated_rounds_do_not_depend_on_the_tree(seed in 0..10_000u64) {
        let case = random_case(seed, 8, Protocol::Integratex);
        prop_assume!(!remote_calls(&case).is_empty());
        let out = execute(&case.plan).unwrap();
        let a = out.world.requests[0].attempts.last().unwrap();
        prop_assert_eq!(&out.world.requests[0].state, &ReqState::Committed);
        prop_assert_eq!(rounds(a), Some(10));
    }

    #[test]
    fn baseline_pays_a_round_trip_per_remote_call(seed in 0..10_000u64) {
        let case = random_case(seed, 8, Protocol::Baseline);
        let remote = remote_calls(&case).len() as u64;
        let out = execute(&case.plan).unwrap();
        let a = out.world.requests[0].attempts.last().unwrap();
        prop_assert_eq!(&out.world.requests[0].state, &ReqState::Committed);
        let want = if remote == 0 { 1 } else { 1 + 4 * remote + 4 };
        prop_assert_eq!(rounds(a), Some(want));
    }

    #[test]
    fn relayer_fees_match_accepted_messages(seed in 0..10_000u64, baseline in any::<bool>()) {
        let p = if baseline { Protocol::Baseline } else { Protocol::Integratex };
        let case = random_case(seed, 8, p);
        let out = execute(&case.plan).unwrap();
        let fee = case.plan.params.relay_fee;
        for c in out.world.chains.values() {
            let b = &c.state.bridge;
            prop_assert_eq!(b.total_fees(), b.accepted.len() as u64 * fee);
        }
    }

    #[test]
    fn one_flipped_byte_never_verifies(pos in any::<prop::sample::Index>(), mask in 1..=255u8) {
        let plan = plans("train-hotel", &Overrides::default()).remove(0);
        let world = build_world(&plan).unwrap();
        for s in world.services.values() {
            let state = &world.chain(s.chain).state;
            let code = state.getcode(&s.logic_addr).unwrap();
            prop_assert_eq!(compare_bytes(state, &s.logic_addr, &sha256(&code)), Ok(true));
            let mut bad = code.clone();
            let i = pos.index(bad.len());
            bad[i] ^= mask;
            prop_assert_eq!(compare_bytes(state, &s.logic_addr, &sha256(&bad)), Ok(false));
        }
    }
}

#[test]
fn unverified_logic_is_refused() {
    let plan =
        plans("train-hotel", &Overrides { protocol: Some(Protocol::Integratex), ..Default::default() }).remove(0);
    let mut world = build_world(&plan).unwrap();
    world
        .add_request(RequestSpec {
            dapp: "train-hotel".into(),
            args: plan.workload[0].args.clone(),
            protocol: Protocol::Integratex,
            at_ms: 0,
            exec_gas: DEFAULT_EXEC_GAS,
            after: None,
            retry: false,
        })
        .unwrap();
    world.run(plan.limit_ms);
    match &world.requests[0].state {
        ReqState::Rejected(why) => assert!(why.contains("not verified"), "{why}"),
        s => panic!("ran without verified logic: {s:?}"),
    }
    assert!(world.chains.values().all(|c| c.state.states().all(|(_, s)| s.is_idle())));
}

#[test]
fn fine_grained_locks_let_six_bookings_through() {
    let o = Overrides { concurrency: Some(6), ..Default::default() };
    for plan in plans("concurrency-sweep", &o) {
        let out = execute(&plan).unwrap();
        let committed_first_try =
            out.world.requests.iter().filter(|r| r.state == ReqState::Committed && r.attempts.len() == 1).count();
        if plan.params.fgsl {
            assert_eq!(committed_first_try, 6, "{}", plan.variant);
        } else {
            assert!(committed_first_try < 6, "{}", plan.variant);
        }
        assert!(out.audit.ok());
    }
}
