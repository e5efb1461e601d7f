//! Numeric execution of models: discrete statements run exactly, ODE
//! segments integrate with fixed-step classic Runge-Kutta, and evolution
//! domain exits are located by bisection on the constraint residual.
//!
//! Runs are deterministic given (model, params, config); all randomness
//! (duration policy, parameter sampling) flows from the seed.

use crate::ast::{CmpOp, Formula, HybridProgram, Term};
use crate::parser::Model;
use crate::rng::{mix, Rng};
use num_traits::ToPrimitive;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("precondition violated: `{0}`")]
    PreconditionViolated(String),
    #[error("numeric blowup (|state| > 1e12 or non-finite value)")]
    NumericBlowup,
    #[error("sampling exhausted after {0} rejections")]
    SamplingExhausted(u32),
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("unsupported for simulation: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationPolicy {
    /// Evolve until the domain exits or the horizon is reached.
    MaxDomain,
    /// Evolve for a uniformly random fraction of the maximal duration.
    UniformRandom,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub max_iterations: u32,
    pub seed: u64,
    pub duration_policy: DurationPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 5.0,
            max_iterations: 100,
            seed: 0,
            duration_policy: DurationPolicy::MaxDomain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    HorizonReached,
    DomainExit,
    LoopBudgetExhausted,
    /// A test failed mid-run: the attempted run has no final states.
    ExecutionFailed,
    /// The program ran to completion (e.g. a randomly chosen evolution
    /// duration ended before the horizon).
    Completed,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub time: f64,
    pub iteration: u32,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    /// State variables (written by the program), in declaration order.
    pub vars: Vec<String>,
    /// Constant parameters for this run.
    pub params: HashMap<String, f64>,
    pub samples: Vec<Sample>,
    pub stop_reason: StopReason,
}

impl Trace {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Value of a variable or parameter at a sample.
    pub fn value(&self, sample: &Sample, name: &str) -> Option<f64> {
        match self.var_index(name) {
            Some(i) => sample.state.get(i).copied(),
            None => self.params.get(name).copied(),
        }
    }

    /// CSV: `time,iteration,<vars...>`, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time,iteration")?;
        for v in &self.vars {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(w, "{:.16e},{}", s.time, s.iteration)?;
            for x in &s.state {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// The theorem split into simulation-relevant parts.
#[derive(Debug, Clone)]
pub struct TheoremParts {
    pub antecedent: Formula,
    pub program: HybridProgram,
    pub post: Formula,
    /// True for `[...]` conclusions: every run must satisfy `post`.
    pub box_theorem: bool,
}

pub fn theorem_parts(model: &Model) -> Result<TheoremParts, SimError> {
    let (antecedent, modal) = match &model.theorem {
        Formula::Implies(p, q) => ((**p).clone(), q.as_ref()),
        other => (Formula::True, other),
    };
    match modal {
        Formula::Box_(prog, post) => Ok(TheoremParts {
            antecedent,
            program: (**prog).clone(),
            post: (**post).clone(),
            box_theorem: true,
        }),
        Formula::Diamond(prog, post) => {
            let post = match post.as_ref() {
                Formula::Box_(_, inner) => (**inner).clone(),
                other => other.clone(),
            };
            Ok(TheoremParts {
                antecedent,
                program: (**prog).clone(),
                post,
                box_theorem: false,
            })
        }
        other => Err(SimError::Unsupported(format!(
            "theorem conclusion `{other}` is not a modality"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Compiled expressions
// ---------------------------------------------------------------------------

enum CExpr {
    Var(usize),
    Const(f64),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Div(Box<CExpr>, Box<CExpr>),
    Pow(Box<CExpr>, i32),
    Min(Box<CExpr>, Box<CExpr>),
    Max(Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn eval(&self, env: &[f64]) -> f64 {
        match self {
            CExpr::Var(i) => env[*i],
            CExpr::Const(c) => *c,
            CExpr::Add(l, r) => l.eval(env) + r.eval(env),
            CExpr::Sub(l, r) => l.eval(env) - r.eval(env),
            CExpr::Neg(x) => -x.eval(env),
            CExpr::Mul(l, r) => l.eval(env) * r.eval(env),
            CExpr::Div(l, r) => l.eval(env) / r.eval(env),
            CExpr::Pow(b, e) => b.eval(env).powi(*e),
            CExpr::Min(l, r) => l.eval(env).min(r.eval(env)),
            CExpr::Max(l, r) => l.eval(env).max(r.eval(env)),
        }
    }
}

enum CFormula {
    True,
    False,
    Cmp(CmpOp, CExpr, CExpr),
    Not(Box<CFormula>),
    And(Box<CFormula>, Box<CFormula>),
    Or(Box<CFormula>, Box<CFormula>),
    Implies(Box<CFormula>, Box<CFormula>),
}

impl CFormula {
    fn eval(&self, env: &[f64]) -> bool {
        match self {
            CFormula::True => true,
            CFormula::False => false,
            CFormula::Cmp(op, l, r) => op.eval(l.eval(env), r.eval(env)),
            CFormula::Not(x) => !x.eval(env),
            CFormula::And(l, r) => l.eval(env) && r.eval(env),
            CFormula::Or(l, r) => l.eval(env) || r.eval(env),
            CFormula::Implies(l, r) => !l.eval(env) || r.eval(env),
        }
    }

    /// Signed satisfaction margin: positive inside, negative outside.
    fn margin(&self, env: &[f64]) -> f64 {
        match self {
            CFormula::True => f64::INFINITY,
            CFormula::False => f64::NEG_INFINITY,
            CFormula::Cmp(op, l, r) => {
                let (lv, rv) = (l.eval(env), r.eval(env));
                match op {
                    CmpOp::Ge | CmpOp::Gt => lv - rv,
                    CmpOp::Le | CmpOp::Lt => rv - lv,
                    CmpOp::Eq => -(lv - rv).abs(),
                    CmpOp::Ne => (lv - rv).abs(),
                }
            }
            CFormula::Not(x) => -x.margin(env),
            CFormula::And(l, r) => l.margin(env).min(r.margin(env)),
            CFormula::Or(l, r) => l.margin(env).max(r.margin(env)),
            CFormula::Implies(l, r) => (-l.margin(env)).max(r.margin(env)),
        }
    }
}

enum CProg {
    Test(CFormula),
    Assign(usize, CExpr),
    Ode {
        vars: Vec<usize>,
        rhs: Vec<CExpr>,
        domain: CFormula,
    },
    Choice(Box<CProg>, Box<CProg>),
    Seq(Box<CProg>, Box<CProg>),
    Loop(Box<CProg>),
}

struct Compiler<'a> {
    index: &'a HashMap<String, usize>,
}

impl<'a> Compiler<'a> {
    fn expr(&self, t: &Term) -> Result<CExpr, SimError> {
        Ok(match t {
            Term::Var(v) => CExpr::Var(
                *self
                    .index
                    .get(v)
                    .ok_or_else(|| SimError::MissingVariable(v.clone()))?,
            ),
            Term::Lit(q) => CExpr::Const(q.to_f64().unwrap_or(f64::NAN)),
            Term::Add(l, r) => CExpr::Add(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Term::Sub(l, r) => CExpr::Sub(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Term::Neg(x) => CExpr::Neg(Box::new(self.expr(x)?)),
            Term::Mul(l, r) => CExpr::Mul(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Term::Div(l, r) => CExpr::Div(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Term::Pow(b, e) => CExpr::Pow(Box::new(self.expr(b)?), *e as i32),
            Term::Min(l, r) => CExpr::Min(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Term::Max(l, r) => CExpr::Max(Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
        })
    }

    fn formula(&self, f: &Formula) -> Result<CFormula, SimError> {
        Ok(match f {
            Formula::True => CFormula::True,
            Formula::False => CFormula::False,
            Formula::Cmp(op, l, r) => CFormula::Cmp(*op, self.expr(l)?, self.expr(r)?),
            Formula::Not(x) => CFormula::Not(Box::new(self.formula(x)?)),
            Formula::And(l, r) => {
                CFormula::And(Box::new(self.formula(l)?), Box::new(self.formula(r)?))
            }
            Formula::Or(l, r) => {
                CFormula::Or(Box::new(self.formula(l)?), Box::new(self.formula(r)?))
            }
            Formula::Implies(l, r) => {
                CFormula::Implies(Box::new(self.formula(l)?), Box::new(self.formula(r)?))
            }
            Formula::Box_(..) | Formula::Diamond(..) => {
                return Err(SimError::Unsupported(
                    "modal formula in executable position".to_string(),
                ))
            }
        })
    }

    fn prog(&self, p: &HybridProgram) -> Result<CProg, SimError> {
        Ok(match p {
            HybridProgram::Test(f) => CProg::Test(self.formula(f)?),
            HybridProgram::Assign(x, e) => CProg::Assign(
                *self
                    .index
                    .get(x)
                    .ok_or_else(|| SimError::MissingVariable(x.clone()))?,
                self.expr(e)?,
            ),
            HybridProgram::Ode(eqs, dom) => CProg::Ode {
                vars: eqs
                    .iter()
                    .map(|(x, _)| {
                        self.index
                            .get(x)
                            .copied()
                            .ok_or_else(|| SimError::MissingVariable(x.clone()))
                    })
                    .collect::<Result<_, _>>()?,
                rhs: eqs
                    .iter()
                    .map(|(_, e)| self.expr(e))
                    .collect::<Result<_, _>>()?,
                domain: self.formula(dom)?,
            },
            HybridProgram::Choice(l, r) => {
                CProg::Choice(Box::new(self.prog(l)?), Box::new(self.prog(r)?))
            }
            HybridProgram::Seq(l, r) => {
                CProg::Seq(Box::new(self.prog(l)?), Box::new(self.prog(r)?))
            }
            HybridProgram::Loop(b) => CProg::Loop(Box::new(self.prog(b)?)),
        })
    }
}

// ---------------------------------------------------------------------------
// Interpreter
// ---------------------------------------------------------------------------

const BLOWUP: f64 = 1e12;
const EVENT_TOL: f64 = 1e-9;

struct Runner<'a> {
    cfg: &'a SimConfig,
    values: Vec<f64>,
    time: f64,
    iteration: u32,
    state_cols: Vec<usize>,
    samples: Vec<Sample>,
    rng: Rng,
    stop: Option<StopReason>,
}

enum Flow {
    Ok,
    Failed,
    Stopped,
}

impl<'a> Runner<'a> {
    fn snapshot(&self) -> Vec<f64> {
        self.state_cols.iter().map(|&i| self.values[i]).collect()
    }

    fn emit(&mut self) {
        let state = self.snapshot();
        if let Some(last) = self.samples.last() {
            if last.time == self.time
                && last.iteration == self.iteration
                && last.state == state
            {
                return;
            }
        }
        self.samples.push(Sample {
            time: self.time,
            iteration: self.iteration,
            state,
        });
    }

    fn check_finite(&self) -> Result<(), SimError> {
        for v in &self.values {
            if !v.is_finite() || v.abs() > BLOWUP {
                return Err(SimError::NumericBlowup);
            }
        }
        Ok(())
    }

    fn exec(&mut self, p: &CProg) -> Result<Flow, SimError> {
        if self.stop.is_some() {
            return Ok(Flow::Stopped);
        }
        match p {
            CProg::Test(f) => {
                if f.eval(&self.values) {
                    Ok(Flow::Ok)
                } else {
                    Ok(Flow::Failed)
                }
            }
            CProg::Assign(i, e) => {
                let v = e.eval(&self.values);
                if !v.is_finite() {
                    return Err(SimError::NumericBlowup);
                }
                self.values[*i] = v;
                self.check_finite()?;
                Ok(Flow::Ok)
            }
            CProg::Seq(l, r) => match self.exec(l)? {
                Flow::Ok => self.exec(r),
                other => Ok(other),
            },
            CProg::Choice(l, r) => {
                let saved = (self.values.clone(), self.time, self.iteration);
                match self.exec(l)? {
                    Flow::Failed => {
                        self.values = saved.0;
                        self.time = saved.1;
                        self.iteration = saved.2;
                        self.exec(r)
                    }
                    other => Ok(other),
                }
            }
            CProg::Loop(body) => {
                loop {
                    if self.stop.is_some() {
                        return Ok(Flow::Stopped);
                    }
                    if self.iteration >= self.cfg.max_iterations {
                        self.stop = Some(StopReason::LoopBudgetExhausted);
                        return Ok(Flow::Stopped);
                    }
                    let saved = (self.values.clone(), self.time);
                    self.iteration += 1;
                    match self.exec(body)? {
                        Flow::Ok => continue,
                        Flow::Failed => {
                            // Zero more repetitions: revert the attempt.
                            self.values = saved.0;
                            self.time = saved.1;
                            self.iteration -= 1;
                            return Ok(Flow::Ok);
                        }
                        Flow::Stopped => return Ok(Flow::Stopped),
                    }
                }
            }
            CProg::Ode { vars, rhs, domain } => self.integrate(vars, rhs, domain),
        }
    }

    fn integrate(
        &mut self,
        vars: &[usize],
        rhs: &[CExpr],
        domain: &CFormula,
    ) -> Result<Flow, SimError> {
        self.emit();
        if domain.margin(&self.values) < -EVENT_TOL {
            // No evolution possible; a zero-duration run is still a run.
            return Ok(Flow::Ok);
        }
        let remaining = self.cfg.horizon - self.time;
        if remaining <= 0.0 {
            self.stop = Some(StopReason::HorizonReached);
            return Ok(Flow::Stopped);
        }
        let target = match self.cfg.duration_policy {
            DurationPolicy::MaxDomain => remaining,
            DurationPolicy::UniformRandom => {
                let u = self.rng.next_f64();
                let max = self.probe_duration(vars, rhs, domain, remaining)?;
                u * max
            }
        };

        let mut elapsed = 0.0f64;
        loop {
            let left = target - elapsed;
            if left <= self.cfg.dt * 1e-9 {
                // Reached the chosen duration.
                return if (self.time - self.cfg.horizon).abs() <= self.cfg.dt * 1e-9
                    || self.time >= self.cfg.horizon
                {
                    self.stop = Some(StopReason::HorizonReached);
                    Ok(Flow::Stopped)
                } else {
                    Ok(Flow::Ok)
                };
            }
            let h = self.cfg.dt.min(left);
            let next = rk4_step(&self.values, vars, rhs, h);
            if domain.margin(&next) < -EVENT_TOL {
                // Locate the exit time within this step.
                let (state, dt_cross) =
                    self.bisect_exit(&self.values, vars, rhs, domain, h);
                self.values = state;
                self.time += dt_cross;
                self.check_finite()?;
                self.emit();
                return Ok(Flow::Ok); // DomainExit ends the segment
            }
            self.values = next;
            self.time += h;
            elapsed += h;
            self.check_finite()?;
            self.emit();
        }
    }

    /// How long the segment could run before domain exit, up to `cap`.
    fn probe_duration(
        &self,
        vars: &[usize],
        rhs: &[CExpr],
        domain: &CFormula,
        cap: f64,
    ) -> Result<f64, SimError> {
        let mut values = self.values.clone();
        let mut elapsed = 0.0f64;
        loop {
            let left = cap - elapsed;
            if left <= self.cfg.dt * 1e-9 {
                return Ok(cap);
            }
            let h = self.cfg.dt.min(left);
            let next = rk4_step(&values, vars, rhs, h);
            if domain.margin(&next) < -EVENT_TOL {
                let (_, dt_cross) = self.bisect_exit(&values, vars, rhs, domain, h);
                return Ok(elapsed + dt_cross);
            }
            values = next;
            elapsed += h;
            for v in &values {
                if !v.is_finite() || v.abs() > BLOWUP {
                    return Err(SimError::NumericBlowup);
                }
            }
        }
    }

    /// Bisect the step size until the domain residual is within tolerance.
    fn bisect_exit(
        &self,
        from: &[f64],
        vars: &[usize],
        rhs: &[CExpr],
        domain: &CFormula,
        h_bad: f64,
    ) -> (Vec<f64>, f64) {
        let mut lo = 0.0f64;
        let mut hi = h_bad;
        let mut best = (from.to_vec(), 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let state = rk4_step(from, vars, rhs, mid);
            let m = domain.margin(&state);
            let close = m.abs() <= EVENT_TOL || (hi - lo) < f64::EPSILON * h_bad.max(1.0);
            if close && m >= -EVENT_TOL {
                return (state, mid);
            }
            if m >= 0.0 {
                best = (state, mid);
                lo = mid;
            } else {
                hi = mid;
            }
            if close {
                break;
            }
        }
        best
    }
}

fn rk4_step(values: &[f64], vars: &[usize], rhs: &[CExpr], h: f64) -> Vec<f64> {
    let deriv = |env: &[f64]| -> Vec<f64> { rhs.iter().map(|e| e.eval(env)).collect() };
    let shifted = |base: &[f64], k: &[f64], scale: f64| -> Vec<f64> {
        let mut env = base.to_vec();
        for (j, &i) in vars.iter().enumerate() {
            env[i] = base[i] + scale * k[j];
        }
        env
    };
    let k1 = deriv(values);
    let k2 = deriv(&shifted(values, &k1, h / 2.0));
    let k3 = deriv(&shifted(values, &k2, h / 2.0));
    let k4 = deriv(&shifted(values, &k3, h));
    let mut out = values.to_vec();
    for (j, &i) in vars.iter().enumerate() {
        out[i] = values[i] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    out
}

// ---------------------------------------------------------------------------
// Building runs
// ---------------------------------------------------------------------------

fn model_vars(model: &Model) -> Vec<String> {
    // Declaration order: program variables first, then constants/theorem.
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let push = |v: &str, out: &mut Vec<String>, seen: &mut BTreeSet<String>| {
        if seen.insert(v.to_string()) {
            out.push(v.to_string());
        }
    };
    for (_, p) in &model.programs {
        let mut vs = BTreeSet::new();
        p.collect_vars(&mut vs);
        for (x, _) in bound_in_order(p) {
            push(&x, &mut out, &mut seen);
        }
        for v in vs {
            push(&v, &mut out, &mut seen);
        }
    }
    for v in model.constants.vars() {
        push(&v, &mut out, &mut seen);
    }
    for v in model.theorem.vars() {
        push(&v, &mut out, &mut seen);
    }
    out
}

fn bound_in_order(p: &HybridProgram) -> Vec<(String, ())> {
    let mut out = Vec::new();
    fn go(p: &HybridProgram, out: &mut Vec<(String, ())>) {
        match p {
            HybridProgram::Assign(x, _) => out.push((x.clone(), ())),
            HybridProgram::Ode(eqs, _) => {
                for (x, _) in eqs {
                    out.push((x.clone(), ()));
                }
            }
            HybridProgram::Choice(l, r) | HybridProgram::Seq(l, r) => {
                go(l, out);
                go(r, out);
            }
            HybridProgram::Loop(b) => go(b, out),
            HybridProgram::Test(_) => {}
        }
    }
    go(p, &mut out);
    out
}

/// Pin variables from antecedent equations `x = rhs` whose right-hand side
/// is already determined; iterate to a fixpoint.
fn solve_equations(
    antecedent: &Formula,
    values: &mut HashMap<String, f64>,
) {
    let conjs = antecedent.conjuncts();
    for _ in 0..conjs.len() + 1 {
        let mut progress = false;
        for c in &conjs {
            if let Formula::Cmp(CmpOp::Eq, l, r) = c {
                let (target, expr) = match (l, r) {
                    (Term::Var(x), e) => (x, e),
                    (e, Term::Var(x)) => (x, e),
                    _ => continue,
                };
                if values.contains_key(target) {
                    continue;
                }
                if let Some(v) = eval_term_map(expr, values) {
                    values.insert(target.clone(), v);
                    progress = true;
                }
            }
        }
        if !progress {
            break;
        }
    }
}

fn eval_term_map(t: &Term, values: &HashMap<String, f64>) -> Option<f64> {
    Some(match t {
        Term::Var(v) => *values.get(v)?,
        Term::Lit(q) => q.to_f64()?,
        Term::Add(l, r) => eval_term_map(l, values)? + eval_term_map(r, values)?,
        Term::Sub(l, r) => eval_term_map(l, values)? - eval_term_map(r, values)?,
        Term::Neg(x) => -eval_term_map(x, values)?,
        Term::Mul(l, r) => eval_term_map(l, values)? * eval_term_map(r, values)?,
        Term::Div(l, r) => eval_term_map(l, values)? / eval_term_map(r, values)?,
        Term::Pow(b, e) => eval_term_map(b, values)?.powi(*e as i32),
        Term::Min(l, r) => eval_term_map(l, values)?.min(eval_term_map(r, values)?),
        Term::Max(l, r) => eval_term_map(l, values)?.max(eval_term_map(r, values)?),
    })
}

fn eval_formula_map(f: &Formula, values: &HashMap<String, f64>, eq_tol: f64) -> Option<bool> {
    Some(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, l, r) => {
            let (lv, rv) = (eval_term_map(l, values)?, eval_term_map(r, values)?);
            match op {
                CmpOp::Eq if eq_tol > 0.0 => {
                    (lv - rv).abs() <= eq_tol * (1.0 + lv.abs().max(rv.abs()))
                }
                CmpOp::Ne if eq_tol > 0.0 => {
                    (lv - rv).abs() > eq_tol * (1.0 + lv.abs().max(rv.abs()))
                }
                _ => op.eval(lv, rv),
            }
        }
        Formula::Not(x) => !eval_formula_map(x, values, eq_tol)?,
        Formula::And(l, r) => {
            eval_formula_map(l, values, eq_tol)? && eval_formula_map(r, values, eq_tol)?
        }
        Formula::Or(l, r) => {
            eval_formula_map(l, values, eq_tol)? || eval_formula_map(r, values, eq_tol)?
        }
        Formula::Implies(l, r) => {
            !eval_formula_map(l, values, eq_tol)? || eval_formula_map(r, values, eq_tol)?
        }
        Formula::Box_(..) | Formula::Diamond(..) => return None,
    })
}

/// Simulate the model's theorem program from the given parameter/initial
/// values. Unassigned state variables are pinned by antecedent equations
/// where possible, then default to zero; the `const` assumptions are checked
/// numerically before the run.
pub fn simulate(
    model: &Model,
    params: &HashMap<String, f64>,
    cfg: &SimConfig,
) -> Result<Trace, SimError> {
    let parts = theorem_parts(model)?;
    let names = model_vars(model);
    let index: HashMap<String, usize> =
        names.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();

    let mut values_map: HashMap<String, f64> = params.clone();
    solve_equations(&parts.antecedent, &mut values_map);
    let state_names: Vec<String> = {
        let bound = parts.program.bound_vars();
        names.iter().filter(|n| bound.contains(*n)).cloned().collect()
    };
    for s in &state_names {
        values_map.entry(s.clone()).or_insert(0.0);
    }
    solve_equations(&parts.antecedent, &mut values_map);

    for name in &names {
        if !values_map.contains_key(name) {
            return Err(SimError::MissingVariable(name.clone()));
        }
    }

    // Precondition: the const assumptions must hold numerically.
    for c in model.constants.conjuncts() {
        match eval_formula_map(c, &values_map, 1e-9) {
            Some(true) => {}
            Some(false) => {
                return Err(SimError::PreconditionViolated(c.to_string()))
            }
            None => {
                return Err(SimError::Unsupported(format!(
                    "cannot evaluate const conjunct `{c}`"
                )))
            }
        }
    }

    let compiler = Compiler { index: &index };
    let cprog = compiler.prog(&parts.program)?;

    let mut values = vec![0.0f64; names.len()];
    for (name, &i) in &index {
        values[i] = values_map[name];
    }
    let state_cols: Vec<usize> = state_names.iter().map(|s| index[s]).collect();
    let param_map: HashMap<String, f64> = values_map
        .iter()
        .filter(|(k, _)| !state_names.contains(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect();

    let mut runner = Runner {
        cfg,
        values,
        time: 0.0,
        iteration: 0,
        state_cols,
        samples: Vec::new(),
        rng: Rng::new(mix(cfg.seed, 0x0de)),
        stop: None,
    };
    runner.emit();
    if cfg.horizon <= 0.0 {
        return Ok(Trace {
            vars: state_names,
            params: param_map,
            samples: runner.samples,
            stop_reason: StopReason::HorizonReached,
        });
    }
    let flow = runner.exec(&cprog)?;
    let stop_reason = match (runner.stop, flow) {
        (Some(r), _) => r,
        (None, Flow::Failed) => StopReason::ExecutionFailed,
        (None, _) => {
            // The program finished. A trailing ODE segment that exited its
            // domain is the natural stop for unlooped models.
            if runner.time >= cfg.horizon - cfg.dt * 1e-9 {
                StopReason::HorizonReached
            } else if cfg.duration_policy == DurationPolicy::UniformRandom {
                StopReason::Completed
            } else {
                StopReason::DomainExit
            }
        }
    };
    Ok(Trace {
        vars: state_names,
        params: param_map,
        samples: runner.samples,
        stop_reason,
    })
}

/// Rejection-sample parameter values satisfying a conjunction of
/// comparisons, log-uniform in [1e-2, 1e2] per variable. Deterministic per
/// seed; fails after 10,000 rejections.
pub fn sample_params(
    constants: &Formula,
    seed: u64,
) -> Result<HashMap<String, f64>, SimError> {
    let vars: Vec<String> = constants.vars().into_iter().collect();
    for attempt in 0..10_000u32 {
        let mut rng = Rng::new(mix(seed, attempt as u64));
        let mut values = HashMap::new();
        for v in &vars {
            values.insert(v.clone(), rng.log_uniform());
        }
        match eval_formula_map(constants, &values, 0.0) {
            Some(true) => return Ok(values),
            Some(false) | None => continue,
        }
    }
    Err(SimError::SamplingExhausted(10_000))
}

/// Sample a full scenario: parameters and initial state satisfying the
/// theorem's antecedent. Equational conjuncts pin variables; the rest are
/// sampled log-uniform and rejection-filtered.
pub fn sample_scenario(
    model: &Model,
    seed: u64,
) -> Result<HashMap<String, f64>, SimError> {
    let parts = theorem_parts(model)?;
    let names = model_vars(model);
    // Variables pinned by antecedent equations (left side preferred).
    let mut pinned: BTreeSet<String> = BTreeSet::new();
    for c in parts.antecedent.conjuncts() {
        if let Formula::Cmp(CmpOp::Eq, l, r) = c {
            match (l, r) {
                (Term::Var(x), _) => {
                    pinned.insert(x.clone());
                }
                (_, Term::Var(x)) => {
                    pinned.insert(x.clone());
                }
                _ => {}
            }
        }
    }
    for attempt in 0..10_000u32 {
        let mut rng = Rng::new(mix(seed, attempt as u64));
        let mut values = HashMap::new();
        for v in &names {
            if !pinned.contains(v) {
                values.insert(v.clone(), rng.log_uniform());
            }
        }
        solve_equations(&parts.antecedent, &mut values);
        if names.iter().any(|n| !values.contains_key(n)) {
            continue;
        }
        match eval_formula_map(&parts.antecedent, &values, 1e-9) {
            Some(true) => return Ok(values),
            Some(false) | None => continue,
        }
    }
    Err(SimError::SamplingExhausted(10_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;

    #[test]
    fn horizon_zero_single_sample() {
        let model = parse_model(
            "model m\nconst k > 0\nprogram ode = { x' = k }\ntheorem const & x = 1 -> [ode] x >= 1",
        )
        .unwrap();
        let params = HashMap::from([("k".to_string(), 1.0)]);
        let cfg = SimConfig {
            horizon: 0.0,
            ..SimConfig::default()
        };
        let trace = simulate(&model, &params, &cfg).unwrap();
        assert_eq!(trace.samples.len(), 1);
        assert_eq!(trace.stop_reason, StopReason::HorizonReached);
    }

    #[test]
    fn precondition_checked() {
        let model = parse_model(
            "model m\nconst k > 0\nprogram ode = { x' = k }\ntheorem const & x = 1 -> [ode] x >= 1",
        )
        .unwrap();
        let params = HashMap::from([("k".to_string(), -1.0)]);
        match simulate(&model, &params, &SimConfig::default()) {
            Err(SimError::PreconditionViolated(c)) => assert_eq!(c, "k > 0"),
            other => panic!("expected precondition violation, got {other:?}"),
        }
    }

    #[test]
    fn exponential_decay_accuracy() {
        // x' = -x from 1: x(t) = exp(-t).
        let model = parse_model(
            "model m\nconst x0 > 0\nprogram ode = { x' = -x }\ntheorem const & x = x0 -> [ode] x >= 0",
        )
        .unwrap();
        let params = HashMap::from([("x0".to_string(), 1.0)]);
        let cfg = SimConfig {
            horizon: 2.0,
            ..SimConfig::default()
        };
        let trace = simulate(&model, &params, &cfg).unwrap();
        let last = trace.samples.last().unwrap();
        assert!((last.time - 2.0).abs() < 1e-9);
        let x = trace.value(last, "x").unwrap();
        assert!((x - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn domain_exit_located() {
        // x' = 1 with domain x <= 2, from 0: exits at t = 2.
        let model = parse_model(
            "model m\nconst lim > 0\nprogram ode = { x' = 1 & x <= lim }\ntheorem const & x = 0 -> [ode] x <= lim",
        )
        .unwrap();
        let params = HashMap::from([("lim".to_string(), 2.0)]);
        let cfg = SimConfig {
            horizon: 10.0,
            ..SimConfig::default()
        };
        let trace = simulate(&model, &params, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::DomainExit);
        let last = trace.samples.last().unwrap();
        let x = trace.value(last, "x").unwrap();
        assert!((x - 2.0).abs() <= 1e-9, "x = {x}");
        assert!((last.time - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn deterministic_traces() {
        let model = parse_model(
            "model m\nconst k > 0\nprogram ode = { x' = -k*x }\ntheorem const & x = 1 -> [ode] x >= 0",
        )
        .unwrap();
        let params = HashMap::from([("k".to_string(), 0.7)]);
        let cfg = SimConfig {
            horizon: 1.0,
            duration_policy: DurationPolicy::UniformRandom,
            seed: 9,
            ..SimConfig::default()
        };
        let a = simulate(&model, &params, &cfg).unwrap();
        let b = simulate(&model, &params, &cfg).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.time, sb.time);
            assert_eq!(sa.state, sb.state);
        }
    }

    #[test]
    fn sample_params_examples() {
        let f = crate::parser::parse_formula_str("kf > 0 & kr > 0 & A0 > 0").unwrap();
        let p = sample_params(&f, 42).unwrap();
        assert!(p["kf"] > 0.0 && p["kr"] > 0.0 && p["A0"] > 0.0);

        let unsat = crate::parser::parse_formula_str("eps > 0 & eps < 0").unwrap();
        match sample_params(&unsat, 0) {
            Err(SimError::SamplingExhausted(_)) => {}
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_exact() {
        let model = parse_model(
            "model m\nconst k > 0\nprogram ode = { x' = -k*x }\ntheorem const & x = 1 -> [ode] x >= 0",
        )
        .unwrap();
        let params = HashMap::from([("k".to_string(), 3.0)]);
        let cfg = SimConfig {
            horizon: 0.01,
            ..SimConfig::default()
        };
        let trace = simulate(&model, &params, &cfg).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,iteration,x");
        let first_data = lines.next().unwrap();
        let cols: Vec<&str> = first_data.split(',').collect();
        let x: f64 = cols[2].parse().unwrap();
        assert_eq!(x, trace.samples[0].state[0]);
    }
}
