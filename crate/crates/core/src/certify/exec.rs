//! Symbolic execution of loop-free discrete program fragments.
//!
//! Each nondeterministic choice forks a path; tests join the path condition;
//! assignments build a substitution over the pre-state. A test that reduces
//! to literal `false` kills its path (no final states).

use crate::ast::{Formula, HybridProgram, Term};
use std::collections::HashMap;

use super::CertifyError;

/// One discrete execution path.
#[derive(Debug, Clone)]
pub struct ExecPath {
    /// Test conditions encountered, expressed over the pre-state.
    pub conditions: Vec<Formula>,
    /// Final values of assigned variables, expressed over the pre-state.
    pub sigma: Vec<(String, Term)>,
    /// The postcondition with the substitution applied (capture-avoiding:
    /// occurrences bound inside modalities are left alone).
    pub post: Formula,
}

impl ExecPath {
    pub fn sigma_map(&self) -> HashMap<String, Term> {
        self.sigma.iter().cloned().collect()
    }

    pub fn lookup(&self, var: &str) -> Option<&Term> {
        self.sigma
            .iter()
            .rev()
            .find(|(v, _)| v == var)
            .map(|(_, t)| t)
    }
}

/// Apply a simultaneous substitution to a term.
pub fn apply_sigma_term(t: &Term, sigma: &HashMap<String, Term>) -> Term {
    match t {
        Term::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::Lit(_) => t.clone(),
        Term::Add(l, r) => Term::add(apply_sigma_term(l, sigma), apply_sigma_term(r, sigma)),
        Term::Sub(l, r) => Term::sub(apply_sigma_term(l, sigma), apply_sigma_term(r, sigma)),
        Term::Neg(x) => Term::neg(apply_sigma_term(x, sigma)),
        Term::Mul(l, r) => Term::mul(apply_sigma_term(l, sigma), apply_sigma_term(r, sigma)),
        Term::Div(l, r) => Term::div(apply_sigma_term(l, sigma), apply_sigma_term(r, sigma)),
        Term::Pow(b, e) => Term::Pow(Box::new(apply_sigma_term(b, sigma)), *e),
        Term::Min(l, r) => Term::Min(
            Box::new(apply_sigma_term(l, sigma)),
            Box::new(apply_sigma_term(r, sigma)),
        ),
        Term::Max(l, r) => Term::Max(
            Box::new(apply_sigma_term(l, sigma)),
            Box::new(apply_sigma_term(r, sigma)),
        ),
    }
}

/// Apply a simultaneous substitution to a formula. Variables bound by a
/// program under a modality are not substituted inside it.
pub fn apply_sigma_formula(f: &Formula, sigma: &HashMap<String, Term>) -> Formula {
    if sigma.is_empty() {
        return f.clone();
    }
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, l, r) => Formula::Cmp(
            *op,
            apply_sigma_term(l, sigma),
            apply_sigma_term(r, sigma),
        ),
        Formula::Not(x) => Formula::not(apply_sigma_formula(x, sigma)),
        Formula::And(l, r) => Formula::and(
            apply_sigma_formula(l, sigma),
            apply_sigma_formula(r, sigma),
        ),
        Formula::Or(l, r) => Formula::or(
            apply_sigma_formula(l, sigma),
            apply_sigma_formula(r, sigma),
        ),
        Formula::Implies(l, r) => Formula::implies(
            apply_sigma_formula(l, sigma),
            apply_sigma_formula(r, sigma),
        ),
        Formula::Box_(prog, post) | Formula::Diamond(prog, post) => {
            let bound = prog.bound_vars();
            let filtered: HashMap<String, Term> = sigma
                .iter()
                .filter(|(k, _)| !bound.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            let prog2 = {
                let mut p = (**prog).clone();
                for (k, v) in &filtered {
                    p = p.subst(k, v);
                }
                p
            };
            let post2 = apply_sigma_formula(post, &filtered);
            match f {
                Formula::Box_(..) => Formula::Box_(Box::new(prog2), Box::new(post2)),
                _ => Formula::Diamond(Box::new(prog2), Box::new(post2)),
            }
        }
    }
}

/// Execute a loop-free discrete fragment symbolically against a
/// postcondition. Returns one entry per feasible discrete path.
pub fn symbolic_exec(
    prog: &HybridProgram,
    post: &Formula,
) -> Result<Vec<ExecPath>, CertifyError> {
    let mut paths = Vec::new();
    let init = (Vec::new(), HashMap::new(), Vec::new());
    go(prog, init, &mut paths)?;
    Ok(paths
        .into_iter()
        .map(|(conditions, sigma_map, order)| {
            let sigma: Vec<(String, Term)> = order
                .iter()
                .map(|v: &String| (v.clone(), sigma_map[v].clone()))
                .collect();
            ExecPath {
                conditions,
                post: apply_sigma_formula(post, &sigma_map),
                sigma,
            }
        })
        .collect())
}

type State = (Vec<Formula>, HashMap<String, Term>, Vec<String>);

fn go(prog: &HybridProgram, state: State, out: &mut Vec<State>) -> Result<(), CertifyError> {
    match prog {
        HybridProgram::Test(f) => {
            let (mut pc, sigma, order) = state;
            let cond = apply_sigma_formula(f, &sigma);
            if cond == Formula::False {
                return Ok(()); // no final states
            }
            if cond != Formula::True {
                pc.push(cond);
            }
            out.push((pc, sigma, order));
            Ok(())
        }
        HybridProgram::Assign(x, e) => {
            let (pc, mut sigma, mut order) = state;
            let value = apply_sigma_term(e, &sigma);
            if !sigma.contains_key(x) {
                order.push(x.clone());
            }
            sigma.insert(x.clone(), value);
            out.push((pc, sigma, order));
            Ok(())
        }
        HybridProgram::Seq(l, r) => {
            let mut mid = Vec::new();
            go(l, state, &mut mid)?;
            for s in mid {
                go(r, s, out)?;
            }
            Ok(())
        }
        HybridProgram::Choice(l, r) => {
            go(l, state.clone(), out)?;
            go(r, state, out)
        }
        HybridProgram::Ode(..) => Err(CertifyError::UnsupportedConstruct(
            "differential equation in discrete fragment".to_string(),
        )),
        HybridProgram::Loop(_) => Err(CertifyError::UnsupportedConstruct(
            "loop in discrete fragment".to_string(),
        )),
    }
}
