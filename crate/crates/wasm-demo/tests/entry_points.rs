use xcsim_wasm::{depth_sweep, fault_run, train_hotel};

fn rows(csv: &str) -> usize {
    csv.lines().count() - 1
}

#[test]
fn train_hotel_runs_both_protocols() {
    let t = train_hotel(5000, 2, true).ok().unwrap();
    assert!(t.passed());
    assert_eq!(rows(&t.summary()), 2);
    assert!(t.summary().lines().skip(1).all(|l| l.contains(",2,2,")), "{}", t.summary());
    assert!(rows(&t.comparisons()) > 0);
}

#[test]
fn depth_sweep_has_a_variant_per_depth() {
    let t = depth_sweep(3).ok().unwrap();
    for d in 1..=3 {
        assert!(t.summary().contains(&format!(",d={d},")));
    }
    assert_eq!(rows(&t.summary()), 6);
}

#[test]
fn fault_run_uses_the_given_probability() {
    let t = fault_run(3, 1.0).ok().unwrap();
    assert!(t.passed());
    assert!(t.relayers().contains("tamper(1)"));
}
