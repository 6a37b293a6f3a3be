use xcsim::runner::execute;
use xcsim::scenario::{builtin, Overrides};
use xcsim::world::{Protocol, ReqState, RunEnd};

#[test]
fn train_hotel_both_protocols() {
    for plan in builtin("train-hotel", &Overrides::default()).unwrap().plans {
        let out = execute(&plan).unwrap();
        let r = &out.world.requests[0];
        let a = r.attempts.last().unwrap();
        assert_eq!(out.end, RunEnd::Quiescent);
        assert_eq!(r.state, ReqState::Committed);
        let rounds = a.end_height.unwrap() - a.submit_height;
        assert_eq!(rounds, if plan.protocol == Protocol::Integratex { 10 } else { 17 });
        assert!(out.audit.ok(), "{:?}", out.audit.violations);
    }
}
