//! Browser bindings. Each entry point runs a small experiment to completion
//! and hands the CSV tables back to the page.

use wasm_bindgen::prelude::*;
use xcsim::metrics::Report;
use xcsim::relayer::Behavior;
use xcsim::runner::run_suite;
use xcsim::scenario::{builtin, Overrides, Suite};

#[wasm_bindgen]
pub struct Tables {
    report: Report,
}

#[wasm_bindgen]
impl Tables {
    fn csv(&self, file: &str) -> String {
        self.report.to_csv().into_iter().find(|(f, _)| *f == file).map(|(_, t)| t).unwrap_or_default()
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.csv("summary.csv")
    }

    #[wasm_bindgen(getter)]
    pub fn comparisons(&self) -> String {
        self.csv("comparisons.csv")
    }

    #[wasm_bindgen(getter)]
    pub fn relayers(&self) -> String {
        self.csv("relayers.csv")
    }

    #[wasm_bindgen(getter)]
    pub fn invocations(&self) -> String {
        self.csv("invocations.csv")
    }

    /// False if any scenario check failed.
    #[wasm_bindgen(getter)]
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn run(suite: Result<Suite, impl ToString>) -> Result<Tables, JsError> {
    let suite = suite.map_err(|e| JsError::new(&e.to_string()))?;
    let (_, report) = run_suite(&suite, 1).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(Tables { report })
}

/// `bookings` concurrent train-hotel trips under both protocols.
#[wasm_bindgen]
pub fn train_hotel(block_time_ms: u32, bookings: u32, fgsl: bool) -> Result<Tables, JsError> {
    let o = Overrides { block_times: vec![block_time_ms as u64], fgsl: Some(fgsl), ..Overrides::default() };
    run(builtin("train-hotel", &o).map(|mut s| {
        for p in &mut s.plans {
            p.workload[0].count = bookings.max(1) as usize;
        }
        s
    }))
}

/// Linear call chains of depth 1 up to `max_depth`.
#[wasm_bindgen]
pub fn depth_sweep(max_depth: u32) -> Result<Tables, JsError> {
    let mut all = Vec::new();
    let mut asserts = Vec::new();
    for d in 1..=max_depth.max(1) as usize {
        let s = builtin("depth-sweep", &Overrides { depth: Some(d), ..Overrides::default() })
            .map_err(|e| JsError::new(&e.to_string()))?;
        all.extend(s.plans);
        asserts.extend(s.asserts);
    }
    run(Ok::<_, String>(Suite { name: "depth-sweep".into(), plans: all, asserts }))
}

/// The fault suite with the tampering relayer set to probability `tamper`.
#[wasm_bindgen]
pub fn fault_run(seed: u64, tamper: f64) -> Result<Tables, JsError> {
    if !(0.0..=1.0).contains(&tamper) {
        return Err(JsError::new("tamper probability must be in [0, 1]"));
    }
    run(builtin("fault-suite", &Overrides { seed: Some(seed), ..Overrides::default() }).map(|mut s| {
        for p in &mut s.plans {
            for r in &mut p.relayers {
                if matches!(r.behavior, Behavior::Tamper(_)) {
                    r.behavior = Behavior::Tamper(tamper);
                }
            }
        }
        s
    }))
}
