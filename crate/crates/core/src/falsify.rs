//! Trace monitoring and randomized counterexample search.
//!
//! Monitoring is the numeric shadow of postconditions: it evaluates a
//! modal-free formula at every sample with one-sided tolerance slack, so
//! float noise can never contradict a symbolic `Proved` verdict. Symbolic
//! checking remains the ground truth; the falsifier exists to catch broken
//! models and certificates, not to certify anything.

use crate::ast::{CmpOp, Formula, Term};
use crate::parser::Model;
use crate::rng::mix;
use crate::simulate::{
    sample_scenario, simulate, DurationPolicy, Sample, SimConfig, SimError, Trace,
};
use num_traits::ToPrimitive;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FalsifyError {
    #[error("missing variable `{0}` in trace")]
    MissingVariable(String),
    #[error("unsupported formula for monitoring: `{0}`")]
    Unsupported(String),
}

/// A property violation observed at one trace sample.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub sample_index: usize,
    pub time: f64,
    pub formula: String,
    /// How far false, scaled; larger is a clearer violation.
    pub residual: f64,
}

/// A falsification hit: the sampled scenario plus the violation.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub trial: u32,
    pub assignment: HashMap<String, f64>,
    pub violation: Violation,
}

impl Counterexample {
    /// One JSON line per violation, the falsifier's reporting format.
    /// Non-finite residuals clamp to the largest finite double.
    pub fn json_line(&self) -> String {
        let residual = if self.violation.residual.is_finite() {
            self.violation.residual
        } else {
            f64::MAX
        };
        serde_json::json!({
            "trial": self.trial,
            "time": self.violation.time,
            "formula": self.violation.formula,
            "residual": residual,
        })
        .to_string()
    }
}

/// Severity of falsehood of `f` at a sample: `Some(r)` with `r > 0` when
/// violated beyond tolerance. Comparisons get one-sided slack scaled by the
/// operand magnitudes; disequalities are never flagged, since float equality
/// is not sound evidence that the reals are equal.
fn violation_residual(
    f: &Formula,
    trace: &Trace,
    sample: &Sample,
    tol: f64,
) -> Result<Option<f64>, FalsifyError> {
    let value = |t: &Term| -> Result<f64, FalsifyError> { eval_term(t, trace, sample) };
    match f {
        Formula::True => Ok(None),
        Formula::False => Ok(Some(f64::INFINITY)),
        Formula::Cmp(op, l, r) => {
            let (lv, rv) = (value(l)?, value(r)?);
            let scale = 1.0f64.max(lv.abs()).max(rv.abs());
            let slack = tol * scale;
            let deficit = match op {
                CmpOp::Ge | CmpOp::Gt => rv - lv,
                CmpOp::Le | CmpOp::Lt => lv - rv,
                CmpOp::Eq => (lv - rv).abs(),
                CmpOp::Ne => return Ok(None),
            };
            if deficit > slack {
                Ok(Some(deficit / scale))
            } else {
                Ok(None)
            }
        }
        Formula::Not(x) => match x.as_ref() {
            Formula::Cmp(op, l, r) => violation_residual(
                &Formula::Cmp(op.negate(), l.clone(), r.clone()),
                trace,
                sample,
                tol,
            ),
            inner => match violation_residual(inner, trace, sample, tol)? {
                // The inner formula is clearly false, so its negation holds.
                Some(_) => Ok(None),
                // Not confidently false; treat the negation as unviolated
                // rather than flag on noise.
                None => Ok(None),
            },
        },
        Formula::And(l, r) => {
            let a = violation_residual(l, trace, sample, tol)?;
            let b = violation_residual(r, trace, sample, tol)?;
            Ok(match (a, b) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (Some(x), None) | (None, Some(x)) => Some(x),
                (None, None) => None,
            })
        }
        Formula::Or(l, r) => {
            let a = violation_residual(l, trace, sample, tol)?;
            let b = violation_residual(r, trace, sample, tol)?;
            Ok(match (a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                _ => None,
            })
        }
        Formula::Implies(l, r) => violation_residual(
            &Formula::or(Formula::not((**l).clone()), (**r).clone()),
            trace,
            sample,
            tol,
        ),
        Formula::Box_(..) | Formula::Diamond(..) => {
            Err(FalsifyError::Unsupported(f.to_string()))
        }
    }
}

fn eval_term(t: &Term, trace: &Trace, sample: &Sample) -> Result<f64, FalsifyError> {
    Ok(match t {
        Term::Var(v) => trace
            .value(sample, v)
            .ok_or_else(|| FalsifyError::MissingVariable(v.clone()))?,
        Term::Lit(q) => q.to_f64().unwrap_or(f64::NAN),
        Term::Add(l, r) => eval_term(l, trace, sample)? + eval_term(r, trace, sample)?,
        Term::Sub(l, r) => eval_term(l, trace, sample)? - eval_term(r, trace, sample)?,
        Term::Neg(x) => -eval_term(x, trace, sample)?,
        Term::Mul(l, r) => eval_term(l, trace, sample)? * eval_term(r, trace, sample)?,
        Term::Div(l, r) => eval_term(l, trace, sample)? / eval_term(r, trace, sample)?,
        Term::Pow(b, e) => eval_term(b, trace, sample)?.powi(*e as i32),
        Term::Min(l, r) => eval_term(l, trace, sample)?.min(eval_term(r, trace, sample)?),
        Term::Max(l, r) => eval_term(l, trace, sample)?.max(eval_term(r, trace, sample)?),
    })
}

/// Evaluate a modal-free formula at every sample of a trace; return the
/// violations found.
pub fn monitor(trace: &Trace, f: &Formula, tol: f64) -> Result<Vec<Violation>, FalsifyError> {
    let mut out = Vec::new();
    for (i, s) in trace.samples.iter().enumerate() {
        if let Some(residual) = violation_residual(f, trace, s, tol)? {
            out.push(Violation {
                sample_index: i,
                time: s.time,
                formula: f.to_string(),
                residual,
            });
        }
    }
    Ok(out)
}

/// Default tolerance for falsification monitoring.
pub const MONITOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FalsifyConfig {
    pub trials: u32,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub max_iterations: u32,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            trials: 500,
            seed: 0,
            dt: 1e-3,
            horizon: 5.0,
            max_iterations: 200,
        }
    }
}

/// Search for a trace violating `property` over randomly sampled scenarios
/// and evolution durations. Deterministic per seed; simulator errors skip
/// the trial without aborting the search.
pub fn falsify(
    model: &Model,
    property: &Formula,
    cfg: &FalsifyConfig,
) -> Result<Option<Counterexample>, FalsifyError> {
    for trial in 0..cfg.trials {
        let trial_seed = mix(cfg.seed, trial as u64);
        let assignment = match sample_scenario(model, trial_seed) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let sim_cfg = SimConfig {
            dt: cfg.dt,
            horizon: cfg.horizon,
            max_iterations: cfg.max_iterations,
            seed: trial_seed,
            duration_policy: if trial % 2 == 0 {
                DurationPolicy::MaxDomain
            } else {
                DurationPolicy::UniformRandom
            },
        };
        let trace = match simulate(model, &assignment, &sim_cfg) {
            Ok(t) => t,
            Err(SimError::NumericBlowup) | Err(SimError::PreconditionViolated(_)) => continue,
            Err(SimError::SamplingExhausted(_)) => continue,
            Err(e) => {
                return Err(FalsifyError::Unsupported(e.to_string()));
            }
        };
        let violations = monitor(&trace, property, MONITOR_TOL)?;
        if let Some(v) = violations.into_iter().next() {
            return Ok(Some(Counterexample {
                trial,
                assignment,
                violation: v,
            }));
        }
    }
    Ok(None)
}

/// Earliest sample time after which `goal` holds at every later sample.
pub fn empirical_persistence(
    trace: &Trace,
    goal: &Formula,
    tol: f64,
) -> Result<Option<f64>, FalsifyError> {
    let mut crossing: Option<f64> = None;
    for s in &trace.samples {
        let violated = violation_residual(goal, trace, s, tol)?.is_some();
        if violated {
            crossing = None;
        } else if crossing.is_none() {
            crossing = Some(s.time);
        }
    }
    Ok(crossing)
}
