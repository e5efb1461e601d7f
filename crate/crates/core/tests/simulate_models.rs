//! Numeric validation of the simulator against independently derived
//! closed forms.
//!
//! For the reversible reaction A' = -A*kf + B*kr, B' = A*kf - B*kr with
//! A(0) = A0 and B(0) = 0, conservation of mass (B = A0 - A) reduces the
//! system to the linear scalar ODE A' = -(kf+kr)*A + A0*kr, whose solution
//! through A0 is
//!
//!     A(t) = Aeq + (A0 - Aeq) * exp(-(kf+kr) * t),   Aeq = A0*kr/(kf+kr).
//!
//! These expected values are frozen here, not read back from the simulator.

use dlcheck_core::parser::parse_model;
use dlcheck_core::simulate::{simulate, DurationPolicy, SimConfig, StopReason};
use std::collections::HashMap;
use std::path::PathBuf;

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus")
}

fn load(name: &str) -> dlcheck_core::parser::Model {
    let text =
        std::fs::read_to_string(corpus_root().join(name).join("model.dlm")).unwrap();
    parse_model(&text).unwrap()
}

fn closed_form_a(t: f64, a0: f64, kf: f64, kr: f64) -> f64 {
    let aeq = a0 * kr / (kf + kr);
    aeq + (a0 - aeq) * (-(kf + kr) * t).exp()
}

fn sample_at(
    trace: &dlcheck_core::simulate::Trace,
    t: f64,
) -> &dlcheck_core::simulate::Sample {
    trace
        .samples
        .iter()
        .min_by(|a, b| {
            (a.time - t)
                .abs()
                .partial_cmp(&(b.time - t).abs())
                .unwrap()
        })
        .unwrap()
}

#[test]
fn reversible_matches_closed_form() {
    let model = load("rev_basic");
    let params = HashMap::from([
        ("kf".to_string(), 1.0),
        ("kr".to_string(), 1.0),
        ("A0".to_string(), 1.0),
    ]);
    let cfg = SimConfig {
        horizon: 2.5,
        ..SimConfig::default()
    };
    let trace = simulate(&model, &params, &cfg).unwrap();
    for t in [0.5, 1.0, 2.0] {
        let s = sample_at(&trace, t);
        assert!((s.time - t).abs() < 1e-9);
        let a = trace.value(s, "A").unwrap();
        let expect = closed_form_a(s.time, 1.0, 1.0, 1.0);
        assert!(
            (a - expect).abs() <= 1e-6,
            "A({t}) = {a}, closed form {expect}"
        );
    }
}

#[test]
fn rk4_is_fourth_order_on_the_reversible_system() {
    let model = load("rev_basic");
    let params = HashMap::from([
        ("kf".to_string(), 1.0),
        ("kr".to_string(), 1.0),
        ("A0".to_string(), 1.0),
    ]);
    let max_err = |dt: f64| -> f64 {
        let cfg = SimConfig {
            dt,
            horizon: 2.0,
            ..SimConfig::default()
        };
        let trace = simulate(&model, &params, &cfg).unwrap();
        trace
            .samples
            .iter()
            .map(|s| {
                let a = trace.value(s, "A").unwrap();
                (a - closed_form_a(s.time, 1.0, 1.0, 1.0)).abs()
            })
            .fold(0.0, f64::max)
    };
    let coarse = max_err(2e-3);
    let fine = max_err(1e-3);
    let factor = coarse / fine;
    assert!(
        (8.0..=32.0).contains(&factor),
        "halving dt changed the max error by {factor}x (coarse {coarse:e}, fine {fine:e})"
    );
}

#[test]
fn energy_conserved_within_rk4_error() {
    let model = load("conserve");
    let mut params: HashMap<String, f64> = [
        ("kA", 1.0),
        ("kB", 1.0),
        ("kC", 1.0),
        ("kT", 1.0),
        ("kr1", 1.0),
        ("kr2", 0.0),
        ("hT", 1.0),
        ("A0", 1.0),
        ("B0", 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    // Start from a state with real energy content.
    params.insert("A".to_string(), 1.0);
    params.insert("B".to_string(), 1.0);
    params.insert("C".to_string(), 0.0);
    params.insert("T".to_string(), 1.0);
    let cfg = SimConfig {
        horizon: 5.0,
        ..SimConfig::default()
    };
    let trace = simulate(&model, &params, &cfg).unwrap();
    let energy = |s: &dlcheck_core::simulate::Sample| -> f64 {
        let a = trace.value(s, "A").unwrap();
        let b = trace.value(s, "B").unwrap();
        let t = trace.value(s, "T").unwrap();
        t + a.min(b)
    };
    let e0 = energy(&trace.samples[0]);
    assert!((e0 - 2.0).abs() < 1e-12);
    for s in &trace.samples {
        assert!(
            (energy(s) - e0).abs() <= 1e-6 * e0.abs(),
            "energy drifted at t = {}",
            s.time
        );
    }
}

#[test]
fn conserve_runs_from_the_stated_parameter_set() {
    // Parameters alone (no explicit initial state): unpinned state defaults
    // to zero, the initial energy is solved from the antecedent equation,
    // and conservation still holds sample for sample.
    let model = load("conserve");
    let params: HashMap<String, f64> = [
        ("kA", 1.0),
        ("kB", 1.0),
        ("kC", 1.0),
        ("kT", 1.0),
        ("kr1", 1.0),
        ("kr2", 0.0),
        ("hT", 1.0),
        ("A0", 1.0),
        ("B0", 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let cfg = SimConfig {
        horizon: 5.0,
        ..SimConfig::default()
    };
    let trace = simulate(&model, &params, &cfg).unwrap();
    assert_eq!(trace.samples.last().unwrap().time, trace.samples[0].time + 5.0);
    let e0 = trace.params["E0"];
    for s in &trace.samples {
        let a = trace.value(s, "A").unwrap();
        let b = trace.value(s, "B").unwrap();
        let t = trace.value(s, "T").unwrap();
        let e = t + a.min(b);
        assert!((e - e0).abs() <= 1e-6 * e0.abs().max(1e-12));
    }
}

#[test]
fn bangbang_constants_are_satisfiably_sampled() {
    let model = load("bangbang");
    let params = dlcheck_core::simulate::sample_params(&model.constants, 42).unwrap();
    for k in ["kr1", "kA", "kB", "kC", "kT"] {
        assert!(params[k] > 0.0);
    }
    assert!(params["kr2"] >= 0.0);
}

#[test]
fn bangbang_controller_never_overheats() {
    let model = load("bangbang");
    let params: HashMap<String, f64> = [
        ("kr1", 1.0),
        ("kr2", 0.1),
        ("kA", 0.3),
        ("kB", 0.3),
        ("kC", 0.3),
        ("kT", 1.0),
        ("hT", 1.0),
        ("A0", 1.0),
        ("B0", 1.0),
        ("eps", 0.05),
        ("Tmax", 2.0),
        ("T", 1.0),
        ("A", 1.0),
        ("B", 1.0),
        ("C", 0.0),
        ("isOn", 0.0),
        ("t", 0.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let cfg = SimConfig {
        horizon: 3.0,
        max_iterations: 200,
        ..SimConfig::default()
    };
    let trace = simulate(&model, &params, &cfg).unwrap();
    assert!(trace.samples.len() > 100);
    let tmax = 2.0;
    let rate = 1.0 * 1.0 * 1.0 * 1.0 + 0.1;
    let eps = 0.05;

    let mut saw_on = false;
    let mut saw_off = false;
    for s in &trace.samples {
        let temp = trace.value(s, "T").unwrap();
        assert!(
            temp <= tmax + 1e-9,
            "temperature {temp} exceeded Tmax at t = {}",
            s.time
        );
        let is_on = trace.value(s, "isOn").unwrap();
        if is_on > 0.5 {
            saw_on = true;
        } else {
            saw_off = true;
        }
    }
    assert!(saw_on, "controller never ran the reaction");
    assert!(saw_off, "controller never shut the reaction off");

    // At each iteration boundary the controller decision matches the guard
    // evaluated on the pre-control state.
    for pair in trace.samples.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.iteration == prev.iteration + 1 {
            let temp = trace.value(prev, "T").unwrap();
            let fires = tmax - temp <= eps * rate * 1.0;
            let is_on = trace.value(next, "isOn").unwrap();
            if fires {
                assert!(is_on < 0.5, "guard fired but reactor stayed on");
            } else {
                assert!(is_on > 0.5, "guard clear but reactor stayed off");
            }
        }
    }
    assert_eq!(trace.stop_reason, StopReason::HorizonReached);
}

#[test]
fn dynexp_runs_and_respects_domain() {
    let model = load("dynexp");
    let params: HashMap<String, f64> = [
        ("kA", 0.5),
        ("kB", 0.5),
        ("kC", 0.5),
        ("kT", 1.0),
        ("eps", 1.0),
        ("A0", 1.0),
        ("B0", 1.0),
        ("Tmax", 3.0),
        ("T", 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let cfg = SimConfig {
        horizon: 2.0,
        max_iterations: 100,
        ..SimConfig::default()
    };
    let trace = simulate(&model, &params, &cfg).unwrap();
    for s in &trace.samples {
        let temp = trace.value(s, "T").unwrap();
        let a = trace.value(s, "A").unwrap();
        let b = trace.value(s, "B").unwrap();
        assert!(temp <= 3.0 + 1e-9);
        assert!(a >= -1e-9 && b >= -1e-9);
        // Domain: t <= eps, up to event tolerance.
        let timer = trace.value(s, "t").unwrap();
        let eps_now = trace.value(s, "eps").unwrap();
        assert!(timer <= eps_now + 1e-6, "t = {timer} > eps = {eps_now}");
    }
}

#[test]
fn uniform_random_durations_stay_deterministic() {
    let model = load("rev_basic");
    let params = HashMap::from([
        ("kf".to_string(), 2.0),
        ("kr".to_string(), 1.0),
        ("A0".to_string(), 1.5),
    ]);
    let cfg = SimConfig {
        horizon: 1.0,
        duration_policy: DurationPolicy::UniformRandom,
        seed: 7,
        ..SimConfig::default()
    };
    let a = simulate(&model, &params, &cfg).unwrap();
    let b = simulate(&model, &params, &cfg).unwrap();
    assert_eq!(a.samples.len(), b.samples.len());
    assert_eq!(
        a.samples.last().unwrap().state,
        b.samples.last().unwrap().state
    );
    assert!(a.samples.last().unwrap().time <= 1.0 + 1e-12);
}
