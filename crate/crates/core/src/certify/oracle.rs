//! The restricted arithmetic oracle.
//!
//! Three stages, deliberately incomplete:
//!
//! 1. identity — the goal polynomial is canonically zero or constant;
//! 2. sign calculus — per-monomial signs from assumption-derived variable
//!    signs, assumption subtraction, equational substitution, and bounded
//!    single-variable interval-endpoint elimination on the linear parts;
//! 3. sampling — 10,000 seeded points in the assumption region; candidate
//!    violations are re-verified in exact rational arithmetic before a
//!    `Refuted` verdict is reported, so refutations are never float noise.
//!
//! `Proved` is symbolic and seed-independent; only `Refuted`/`Unknown` can
//! depend on the sampling seed.

use super::obligation::{split_min_max, Obligation};
use crate::ast::{CmpOp, Formula, Rat};
use crate::poly::{to_ratpoly, Polynomial, VarCtx};
use crate::rng::{mix, Rng};
use num_traits::{Signed, Zero};
use std::cell::{Cell, RefCell};
use std::collections::HashMap;

/// A concrete rational point witnessing a refutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub point: Vec<(String, Rat)>,
}

impl Witness {
    pub fn render(&self) -> String {
        let parts: Vec<String> = self
            .point
            .iter()
            .map(|(n, v)| {
                if v.is_integer() {
                    format!("{n} = {}", v.numer())
                } else {
                    format!("{n} = {}/{}", v.numer(), v.denom())
                }
            })
            .collect();
        parts.join(", ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleVerdict {
    Proved,
    Refuted(Witness),
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomOp {
    /// `p >= 0`
    Ge,
    /// `p > 0`
    Gt,
    /// `p = 0`
    Eq,
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub poly: Polynomial,
    pub op: AtomOp,
}

#[derive(Debug, Clone)]
enum Goal {
    Cmp(Atom),
    /// `p != 0`: proved via `p > 0` or `p < 0`; never refutable by sampling.
    Ne(Polynomial),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarSign {
    Pos,
    Nonneg,
    Neg,
    Nonpos,
    Zero,
    Unknown,
}

struct ProveState {
    atoms: Vec<Atom>,
    var_signs: Vec<VarSign>,
    /// Successes hold at any depth; failures only preclude retries with the
    /// same or less depth budget.
    memo: RefCell<HashMap<(Polynomial, bool), MemoEntry>>,
    budget: Cell<u32>,
}

#[derive(Clone, Copy)]
struct MemoEntry {
    success: bool,
    depth: u32,
}

const PROVE_BUDGET: u32 = 60_000;
const MAX_DEPTH: u32 = 9;
const SAMPLES: u32 = 10_000;

/// Decide the validity of a polynomial-arithmetic obligation.
pub fn arith_oracle(ob: &Obligation, ctx: &mut VarCtx, seed: u64) -> OracleVerdict {
    let branches = match split_min_max(&ob.assumptions, &ob.goal, 4) {
        Ok(b) => b,
        Err(e) => return OracleVerdict::Unknown(e),
    };
    let mut unknown: Option<String> = None;
    for (bi, case) in branches.iter().enumerate() {
        let mut formulas = case.conditions.clone();
        formulas.extend(case.assumptions.iter().cloned());
        let branch_seed = mix(seed, bi as u64);
        match solve_branch(&formulas, &case.goal, ctx, branch_seed) {
            OracleVerdict::Proved => {}
            OracleVerdict::Refuted(w) => return OracleVerdict::Refuted(w),
            OracleVerdict::Unknown(r) => {
                if unknown.is_none() {
                    let tag = if branches.len() > 1 {
                        format!("case {}: {r}", bi + 1)
                    } else {
                        r
                    };
                    unknown = Some(tag);
                }
            }
        }
    }
    match unknown {
        None => OracleVerdict::Proved,
        Some(r) => OracleVerdict::Unknown(r),
    }
}

/// Prove `p > 0` (`Some(true)`) or `p < 0` (`Some(false)`) from assumptions,
/// symbolically only. Used for denominator clearing.
pub fn decide_sign(
    p: &Polynomial,
    assumptions: &[Formula],
    ctx: &mut VarCtx,
) -> Option<bool> {
    let (atoms, _, contradiction) = atomize_all(assumptions, ctx);
    if contradiction {
        return Some(true);
    }
    let st = make_state(atoms, ctx);
    if prove(p, true, &st, 4) {
        return Some(true);
    }
    if prove(&p.neg(), true, &st, 4) {
        return Some(false);
    }
    None
}

fn solve_branch(
    assumptions: &[Formula],
    goal: &Formula,
    ctx: &mut VarCtx,
    seed: u64,
) -> OracleVerdict {
    let (mut atoms, _dropped, contradiction) = atomize_all(assumptions, ctx);
    if contradiction {
        return OracleVerdict::Proved;
    }
    let goal = match atomize_goal(goal, &atoms, ctx) {
        Ok(g) => g,
        Err(e) => return OracleVerdict::Unknown(e),
    };

    // Equational substitution: eliminate variables bound by equalities that
    // are linear with a rational coefficient.
    let mut goals = goal;
    let mut bindings: Vec<(usize, Polynomial)> = Vec::new();
    loop {
        let mut found = None;
        'outer: for (i, a) in atoms.iter().enumerate() {
            if a.op != AtomOp::Eq {
                continue;
            }
            for x in a.poly.var_indices() {
                if a.poly.degree_in(x) == 1 {
                    if let Some((c, b)) = a.poly.linear_split(x) {
                        if let Some(cv) = c.constant_value() {
                            if !cv.is_zero() {
                                let repl = b.scale(&(-Rat::from_integer(1.into()) / cv));
                                found = Some((i, x, repl));
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        match found {
            None => break,
            Some((i, x, repl)) => {
                atoms.remove(i);
                for a in &mut atoms {
                    a.poly = a.poly.subst_var(x, &repl);
                }
                goals = goals
                    .into_iter()
                    .map(|g| match g {
                        Goal::Cmp(a) => Goal::Cmp(Atom {
                            poly: a.poly.subst_var(x, &repl),
                            op: a.op,
                        }),
                        Goal::Ne(p) => Goal::Ne(p.subst_var(x, &repl)),
                    })
                    .collect();
                bindings.push((x, repl));
            }
        }
    }
    atoms.retain(|a| !(a.op == AtomOp::Eq && a.poly.is_zero()));
    // A substitution may expose a contradictory assumption.
    for a in &atoms {
        if let Some(c) = a.poly.constant_value() {
            let ok = match a.op {
                AtomOp::Ge => !c.is_negative(),
                AtomOp::Gt => c.is_positive(),
                AtomOp::Eq => c.is_zero(),
            };
            if !ok {
                return OracleVerdict::Proved;
            }
        }
    }

    let st = make_state(atoms, ctx);
    let mut failed: Option<&Goal> = None;
    let goals_ref = &goals;
    for g in goals_ref {
        let ok = match g {
            Goal::Cmp(a) => match a.op {
                AtomOp::Eq => prove_eq(&a.poly, &st),
                AtomOp::Ge => prove(&a.poly, false, &st, MAX_DEPTH),
                AtomOp::Gt => prove(&a.poly, true, &st, MAX_DEPTH),
            },
            Goal::Ne(p) => {
                prove(p, true, &st, MAX_DEPTH) || prove(&p.neg(), true, &st, MAX_DEPTH)
            }
        };
        if !ok {
            failed = Some(g);
            break;
        }
    }
    let failed = match failed {
        None => return OracleVerdict::Proved,
        Some(g) => g,
    };

    // Stage 3: sampling.
    match failed {
        Goal::Ne(_) => OracleVerdict::Unknown(
            "cannot decide disequality symbolically".to_string(),
        ),
        Goal::Cmp(a) => match sample_refute(&st.atoms, a, &bindings, ctx, seed) {
            Some(w) => OracleVerdict::Refuted(w),
            None => OracleVerdict::Unknown(format!(
                "not provable by sign calculus or linear elimination: {} {} 0",
                a.poly.to_string_in(ctx),
                match a.op {
                    AtomOp::Ge => ">=",
                    AtomOp::Gt => ">",
                    AtomOp::Eq => "=",
                }
            )),
        },
    }
}

fn make_state(atoms: Vec<Atom>, ctx: &VarCtx) -> ProveState {
    let mut var_signs = vec![VarSign::Unknown; ctx.len()];
    for a in &atoms {
        let vars = a.poly.var_indices();
        if vars.len() != 1 {
            continue;
        }
        let x = vars[0];
        if a.poly.degree_in(x) != 1 {
            continue;
        }
        let (c, d) = match a.poly.linear_split(x) {
            Some(v) => v,
            None => continue,
        };
        let (c, d) = match (c.constant_value(), d.constant_value()) {
            (Some(c), Some(d)) => (c, d),
            _ => continue,
        };
        if c.is_zero() {
            continue;
        }
        // c*x + d (op) 0  =>  x (op') bound, with op' flipped when c < 0.
        let bound = -&d / &c;
        let lower = c.is_positive();
        let sign = match (a.op, lower) {
            (AtomOp::Eq, _) => {
                if bound.is_zero() {
                    VarSign::Zero
                } else if bound.is_positive() {
                    VarSign::Pos
                } else {
                    VarSign::Neg
                }
            }
            (AtomOp::Ge, true) => {
                if bound.is_positive() {
                    VarSign::Pos
                } else if bound.is_zero() {
                    VarSign::Nonneg
                } else {
                    VarSign::Unknown
                }
            }
            (AtomOp::Gt, true) => {
                if !bound.is_negative() {
                    VarSign::Pos
                } else {
                    VarSign::Unknown
                }
            }
            (AtomOp::Ge, false) => {
                if bound.is_negative() {
                    VarSign::Neg
                } else if bound.is_zero() {
                    VarSign::Nonpos
                } else {
                    VarSign::Unknown
                }
            }
            (AtomOp::Gt, false) => {
                if !bound.is_positive() {
                    VarSign::Neg
                } else {
                    VarSign::Unknown
                }
            }
        };
        if x < var_signs.len() {
            var_signs[x] = merge_signs(var_signs[x], sign);
        }
    }
    ProveState {
        atoms,
        var_signs,
        memo: RefCell::new(HashMap::new()),
        budget: Cell::new(PROVE_BUDGET),
    }
}

fn merge_signs(a: VarSign, b: VarSign) -> VarSign {
    use VarSign::*;
    match (a, b) {
        (Unknown, s) | (s, Unknown) => s,
        (Zero, _) | (_, Zero) => Zero,
        (Pos, _) | (_, Pos) => Pos,
        (Neg, _) | (_, Neg) => Neg,
        (Nonneg, Nonpos) | (Nonpos, Nonneg) => Zero,
        (s, _) => s,
    }
}

// ---------------------------------------------------------------------------
// Atomization with denominator clearing
// ---------------------------------------------------------------------------

fn atomize_all(formulas: &[Formula], ctx: &mut VarCtx) -> (Vec<Atom>, Vec<String>, bool) {
    let mut atoms: Vec<Atom> = Vec::new();
    let mut dropped = Vec::new();
    let mut contradiction = false;
    let mut pending: Vec<Formula> = Vec::new();
    for f in formulas {
        flatten_assumption(f, &mut pending, &mut dropped, &mut contradiction);
    }
    // Iterate: comparisons whose denominators cannot be sign-checked yet are
    // retried after more atoms become available.
    loop {
        let mut next = Vec::new();
        let mut progress = false;
        for f in pending {
            if let Formula::Cmp(op, l, r) = &f {
                match clear_comparison(*op, l, r, &atoms, ctx) {
                    Ok(Some(atom)) => {
                        if let Some(c) = atom.poly.constant_value() {
                            let ok = match atom.op {
                                AtomOp::Ge => !c.is_negative(),
                                AtomOp::Gt => c.is_positive(),
                                AtomOp::Eq => c.is_zero(),
                            };
                            if !ok {
                                contradiction = true;
                            }
                        } else {
                            atoms.push(atom);
                        }
                        progress = true;
                    }
                    Ok(None) => next.push(f),
                    Err(e) => {
                        dropped.push(e);
                        progress = true;
                    }
                }
            } else {
                unreachable!("pending holds comparisons only");
            }
        }
        pending = next;
        if pending.is_empty() || !progress {
            break;
        }
    }
    for f in pending {
        dropped.push(format!("cannot clear denominator in `{f}`"));
    }
    (atoms, dropped, contradiction)
}

fn flatten_assumption(
    f: &Formula,
    pending: &mut Vec<Formula>,
    dropped: &mut Vec<String>,
    contradiction: &mut bool,
) {
    match f {
        Formula::True => {}
        Formula::False => *contradiction = true,
        Formula::And(l, r) => {
            flatten_assumption(l, pending, dropped, contradiction);
            flatten_assumption(r, pending, dropped, contradiction);
        }
        Formula::Cmp(CmpOp::Ne, _, _) => {
            dropped.push(format!("disequality assumption `{f}` unused"));
        }
        Formula::Cmp(..) => pending.push(f.clone()),
        Formula::Not(inner) => match inner.as_ref() {
            Formula::Cmp(op, l, r) => flatten_assumption(
                &Formula::Cmp(op.negate(), l.clone(), r.clone()),
                pending,
                dropped,
                contradiction,
            ),
            Formula::True => *contradiction = true,
            Formula::False => {}
            Formula::Not(x) => flatten_assumption(x, pending, dropped, contradiction),
            Formula::Or(l, r) => {
                flatten_assumption(&Formula::not((**l).clone()), pending, dropped, contradiction);
                flatten_assumption(&Formula::not((**r).clone()), pending, dropped, contradiction);
            }
            Formula::Implies(l, r) => {
                flatten_assumption(l, pending, dropped, contradiction);
                flatten_assumption(&Formula::not((**r).clone()), pending, dropped, contradiction);
            }
            _ => dropped.push(format!("assumption `{f}` unused")),
        },
        Formula::Or(..) | Formula::Implies(..) | Formula::Box_(..) | Formula::Diamond(..) => {
            dropped.push(format!("assumption `{f}` unused"));
        }
    }
}

/// Normalize `l op r` to an atom `p op' 0`, clearing denominators with
/// sign-tracked multiplication. `Ok(None)` means the denominator's sign is
/// not yet decidable from the current atoms.
fn clear_comparison(
    op: CmpOp,
    l: &crate::ast::Term,
    r: &crate::ast::Term,
    atoms: &[Atom],
    ctx: &mut VarCtx,
) -> Result<Option<Atom>, String> {
    let lp = to_ratpoly(l, ctx).map_err(|e| e.to_string())?;
    let rp = to_ratpoly(r, ctx).map_err(|e| e.to_string())?;
    let diff = lp.sub(&rp);
    let (num, den) = (diff.num, diff.den);
    let positive = if den.is_one() {
        true
    } else {
        let st = make_state(atoms.to_vec(), ctx);
        if prove(&den, true, &st, 4) {
            true
        } else if prove(&den.neg(), true, &st, 4) {
            false
        } else {
            return Ok(None);
        }
    };
    let num = if positive { num } else { num.neg() };
    let atom = match op {
        CmpOp::Ge => Atom {
            poly: num,
            op: AtomOp::Ge,
        },
        CmpOp::Gt => Atom {
            poly: num,
            op: AtomOp::Gt,
        },
        CmpOp::Le => Atom {
            poly: num.neg(),
            op: AtomOp::Ge,
        },
        CmpOp::Lt => Atom {
            poly: num.neg(),
            op: AtomOp::Gt,
        },
        CmpOp::Eq => Atom {
            poly: num,
            op: AtomOp::Eq,
        },
        CmpOp::Ne => return Err("disequality in assumption".to_string()),
    };
    Ok(Some(atom))
}

fn atomize_goal(
    goal: &Formula,
    atoms: &[Atom],
    ctx: &mut VarCtx,
) -> Result<Vec<Goal>, String> {
    match goal {
        Formula::True => Ok(vec![]),
        Formula::False => Ok(vec![Goal::Cmp(Atom {
            poly: Polynomial::constant(Rat::from_integer((-1).into())),
            op: AtomOp::Ge,
        })]),
        Formula::And(l, r) => {
            let mut out = atomize_goal(l, atoms, ctx)?;
            out.extend(atomize_goal(r, atoms, ctx)?);
            Ok(out)
        }
        Formula::Not(inner) => match inner.as_ref() {
            Formula::Cmp(op, l, r) => {
                atomize_goal(&Formula::Cmp(op.negate(), l.clone(), r.clone()), atoms, ctx)
            }
            _ => Err(format!("unsupported goal `{goal}`")),
        },
        Formula::Cmp(CmpOp::Ne, l, r) => {
            match clear_comparison(CmpOp::Eq, l, r, atoms, ctx) {
                Ok(Some(a)) => Ok(vec![Goal::Ne(a.poly)]),
                Ok(None) => Err(format!("cannot clear denominator in goal `{goal}`")),
                Err(e) => Err(e),
            }
        }
        Formula::Cmp(op, l, r) => match clear_comparison(*op, l, r, atoms, ctx) {
            Ok(Some(a)) => Ok(vec![Goal::Cmp(a)]),
            Ok(None) => Err(format!("cannot clear denominator in goal `{goal}`")),
            Err(e) => Err(e),
        },
        _ => Err(format!("unsupported goal `{goal}`")),
    }
}

// ---------------------------------------------------------------------------
// Symbolic proving
// ---------------------------------------------------------------------------

fn prove_eq(p: &Polynomial, st: &ProveState) -> bool {
    if p.is_zero() {
        return true;
    }
    // A rational multiple of an assumed equality.
    for a in &st.atoms {
        if a.op == AtomOp::Eq && !a.poly.is_zero() {
            if let Some(q) = p.exact_div(&a.poly) {
                if q.constant_value().is_some() {
                    return true;
                }
            }
        }
    }
    false
}

/// Prove `p >= 0` (or `p > 0` when `strict`).
fn prove(p: &Polynomial, strict: bool, st: &ProveState, depth: u32) -> bool {
    if st.budget.get() == 0 {
        return false;
    }
    st.budget.set(st.budget.get() - 1);

    if let Some(c) = p.constant_value() {
        return if strict {
            c.is_positive()
        } else {
            !c.is_negative()
        };
    }
    let key = (p.clone(), strict);
    if let Some(&hit) = st.memo.borrow().get(&key) {
        if hit.success || hit.depth >= depth {
            return hit.success;
        }
    }

    let result = prove_stages(p, strict, st, depth);
    let mut memo = st.memo.borrow_mut();
    let entry = memo.entry(key).or_insert(MemoEntry {
        success: result,
        depth,
    });
    if result {
        entry.success = true;
    } else if !entry.success {
        entry.depth = entry.depth.max(depth);
    }
    drop(memo);
    result
}

fn prove_stages(p: &Polynomial, strict: bool, st: &ProveState, depth: u32) -> bool {
    if monomial_sign_proof(p, strict, st) {
        return true;
    }
    if depth == 0 {
        return false;
    }

    // Subtract an assumption and recurse on the remainder. Admitted when the
    // remainder eliminates a goal variable or shrinks the monomial count.
    let goal_vars = p.var_indices();
    for a in &st.atoms {
        let candidates: Vec<Polynomial> = match a.op {
            AtomOp::Eq => vec![a.poly.clone(), a.poly.neg()],
            _ => vec![a.poly.clone()],
        };
        for q in &candidates {
            let rem = p.sub(q);
            let drops_var = goal_vars.iter().any(|&v| !rem.mentions(v));
            if !(drops_var || rem.num_terms() < p.num_terms()) {
                continue;
            }
            let ok = match (strict, a.op) {
                (false, _) => prove(&rem, false, st, depth - 1),
                (true, AtomOp::Gt) => prove(&rem, false, st, depth - 1),
                (true, _) => prove(&rem, true, st, depth - 1),
            };
            if ok {
                return true;
            }
        }
    }

    // Interval-endpoint elimination for a variable the goal is linear in.
    for &x in &goal_vars {
        if p.degree_in(x) != 1 {
            continue;
        }
        let (a, b) = match p.linear_split(x) {
            Some(v) => v,
            None => continue,
        };
        let mut lowers: Vec<(Polynomial, Polynomial)> = Vec::new();
        let mut uppers: Vec<(Polynomial, Polynomial)> = Vec::new();
        for atom in &st.atoms {
            if atom.poly.degree_in(x) != 1 {
                continue;
            }
            let (c, d) = match atom.poly.linear_split(x) {
                Some(v) => v,
                None => continue,
            };
            if c.is_zero() {
                continue;
            }
            let c_pos = cheap_sign(&c, true, st);
            let c_neg = !c_pos && cheap_sign(&c.neg(), true, st);
            match (atom.op, c_pos, c_neg) {
                // c*x + d >= 0, c > 0: x >= -d/c  (lower bound, scale c)
                (AtomOp::Ge | AtomOp::Gt, true, _) => lowers.push((c, d)),
                // c*x + d >= 0, c < 0: x <= -d/c = d/(-c)  (upper, scale -c)
                (AtomOp::Ge | AtomOp::Gt, _, true) => uppers.push((c.neg(), d.neg())),
                (AtomOp::Eq, true, _) => {
                    lowers.push((c.clone(), d.clone()));
                    uppers.push((c, d));
                }
                (AtomOp::Eq, _, true) => {
                    lowers.push((c.clone().neg(), d.clone().neg()));
                    uppers.push((c.neg(), d.neg()));
                }
                _ => {}
            }
        }
        if lowers.is_empty() && uppers.is_empty() {
            continue;
        }
        // Value at a lower endpoint x = -d/c (c > 0), scaled by c:
        //   (a*x + b)*c  ->  b*c - a*d.
        let lower_goal = |c: &Polynomial, d: &Polynomial| b.mul(c).sub(&a.mul(d));
        // Value at an upper endpoint x = -d/c with stored (c', d') = (-c, -d),
        // scaled by c' > 0:  b*c' - a*d' as well.
        let upper_goal = lower_goal;

        let a_nonneg = cheap_sign(&a, false, st);
        let a_nonpos = !a_nonneg && cheap_sign(&a.neg(), false, st);

        if a_nonneg {
            for (c, d) in &lowers {
                if prove(&lower_goal(c, d), strict, st, depth - 1) {
                    return true;
                }
            }
        } else if a_nonpos {
            for (c, d) in &uppers {
                if prove(&upper_goal(c, d), strict, st, depth - 1) {
                    return true;
                }
            }
        } else {
            for (cl, dl) in &lowers {
                for (cu, du) in &uppers {
                    if prove(&lower_goal(cl, dl), strict, st, depth - 1)
                        && prove(&upper_goal(cu, du), strict, st, depth - 1)
                    {
                        return true;
                    }
                }
            }
        }
    }

    false
}

/// Constant/monomial-level sign check; used for the side probes of the
/// endpoint elimination so they cannot blow up the search.
fn cheap_sign(p: &Polynomial, strict: bool, st: &ProveState) -> bool {
    if let Some(c) = p.constant_value() {
        return if strict {
            c.is_positive()
        } else {
            !c.is_negative()
        };
    }
    monomial_sign_proof(p, strict, st)
}

fn monomial_sign_proof(p: &Polynomial, strict: bool, st: &ProveState) -> bool {
    let mut some_strict = false;
    for (m, c) in p.terms() {
        let mut sign = if c.is_positive() {
            VarSign::Pos
        } else {
            VarSign::Neg
        };
        for (i, e) in m.vars() {
            let vs = st.var_signs.get(i).copied().unwrap_or(VarSign::Unknown);
            let factor = if e % 2 == 0 {
                match vs {
                    VarSign::Zero => VarSign::Zero,
                    VarSign::Pos | VarSign::Neg => VarSign::Pos,
                    _ => VarSign::Nonneg,
                }
            } else {
                vs
            };
            sign = sign_mul(sign, factor);
            if sign == VarSign::Unknown {
                break;
            }
        }
        match sign {
            VarSign::Pos => some_strict = true,
            VarSign::Nonneg | VarSign::Zero => {}
            _ => return false,
        }
    }
    !strict || some_strict
}

fn sign_mul(a: VarSign, b: VarSign) -> VarSign {
    use VarSign::*;
    match (a, b) {
        (Zero, _) | (_, Zero) => Zero,
        (Unknown, _) | (_, Unknown) => Unknown,
        (Pos, s) | (s, Pos) => s,
        (Neg, Neg) => Pos,
        (Neg, Nonneg) | (Nonneg, Neg) => Nonpos,
        (Neg, Nonpos) | (Nonpos, Neg) => Nonneg,
        (Nonneg, Nonneg) | (Nonpos, Nonpos) => Nonneg,
        (Nonneg, Nonpos) | (Nonpos, Nonneg) => Nonpos,
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

fn sample_refute(
    atoms: &[Atom],
    goal: &Atom,
    bindings: &[(usize, Polynomial)],
    ctx: &VarCtx,
    seed: u64,
) -> Option<Witness> {
    let mut vars = std::collections::BTreeSet::new();
    for a in atoms {
        vars.extend(a.poly.var_indices());
    }
    vars.extend(goal.poly.var_indices());
    let vars: Vec<usize> = vars.into_iter().collect();

    // Plan: solve one variable per usable equality, sample the rest.
    let mut solved: Vec<(usize, Polynomial, Polynomial)> = Vec::new(); // (x, c, d): c*x + d = 0
    let mut solved_set = std::collections::BTreeSet::new();
    for a in atoms {
        if a.op != AtomOp::Eq {
            continue;
        }
        let mut choice = None;
        for x in a.poly.var_indices() {
            if a.poly.degree_in(x) == 1 && !solved_set.contains(&x) {
                choice = Some(x);
                break;
            }
        }
        if let Some(x) = choice {
            let (c, d) = a.poly.linear_split(x).expect("linear");
            solved_set.insert(x);
            solved.push((x, c, d));
        }
    }
    let sampled: Vec<usize> = vars
        .iter()
        .copied()
        .filter(|v| !solved_set.contains(v))
        .collect();

    let st = make_state(atoms.to_vec(), ctx);
    let n_iters = if vars.is_empty() { 1 } else { SAMPLES };
    for iter in 0..n_iters {
        let mut rng = Rng::new(mix(seed, iter as u64));
        let mut point = vec![0.0f64; ctx.len()];
        for &v in &sampled {
            let mag = rng.log_uniform();
            let sign = match st.var_signs.get(v).copied().unwrap_or(VarSign::Unknown) {
                VarSign::Pos | VarSign::Nonneg => 1.0,
                VarSign::Neg | VarSign::Nonpos => -1.0,
                VarSign::Zero => 0.0,
                VarSign::Unknown => {
                    if rng.next_bool() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            point[v] = sign * mag;
        }
        let mut feasible = true;
        for (x, c, d) in &solved {
            let cv = c.eval_f64(&point);
            let dv = d.eval_f64(&point);
            if cv == 0.0 || !cv.is_finite() {
                feasible = false;
                break;
            }
            point[*x] = -dv / cv;
        }
        if !feasible {
            continue;
        }
        // Cheap float screen before the exact check.
        let screen = |a: &Atom, v: f64| -> bool {
            match a.op {
                AtomOp::Ge => v >= -1e-9 * (1.0 + v.abs()),
                AtomOp::Gt => v > 0.0,
                AtomOp::Eq => v.abs() <= 1e-6 * (1.0 + v.abs()),
            }
        };
        if !atoms.iter().all(|a| screen(a, a.poly.eval_f64(&point))) {
            continue;
        }
        let gv = goal.poly.eval_f64(&point);
        let violated = match goal.op {
            AtomOp::Ge => gv < -1e-9 * (1.0 + gv.abs()),
            AtomOp::Gt => gv <= 0.0,
            AtomOp::Eq => gv.abs() > 1e-9 * (1.0 + gv.abs()),
        };
        if !violated {
            continue;
        }
        // Exact verification.
        let mut exact: Vec<Rat> = Vec::with_capacity(ctx.len());
        for (i, v) in point.iter().enumerate() {
            if solved_set.contains(&i) {
                exact.push(Rat::zero());
            } else {
                match Rat::from_float(*v) {
                    Some(r) => exact.push(r),
                    None => exact.push(Rat::zero()),
                }
            }
        }
        let mut ok = true;
        for (x, c, d) in &solved {
            let cv = c.eval_exact(&exact);
            let dv = d.eval_exact(&exact);
            if cv.is_zero() {
                ok = false;
                break;
            }
            exact[*x] = -dv / cv;
        }
        if !ok {
            continue;
        }
        if !exact_point_refutes(atoms, goal, &exact) {
            continue;
        }
        let minimized = minimize_witness(atoms, goal, &solved, exact, &vars);
        return Some(build_witness(&minimized, bindings, &vars, ctx));
    }
    None
}

fn exact_point_refutes(atoms: &[Atom], goal: &Atom, point: &[Rat]) -> bool {
    for a in atoms {
        let v = a.poly.eval_exact(point);
        let ok = match a.op {
            AtomOp::Ge => !v.is_negative(),
            AtomOp::Gt => v.is_positive(),
            AtomOp::Eq => v.is_zero(),
        };
        if !ok {
            return false;
        }
    }
    let gv = goal.poly.eval_exact(point);
    match goal.op {
        AtomOp::Ge => gv.is_negative(),
        AtomOp::Gt => !gv.is_positive(),
        AtomOp::Eq => !gv.is_zero(),
    }
}

/// Greedy readability pass: try round values per coordinate, then halve
/// toward zero while the exact refutation persists.
fn minimize_witness(
    atoms: &[Atom],
    goal: &Atom,
    solved: &[(usize, Polynomial, Polynomial)],
    mut point: Vec<Rat>,
    vars: &[usize],
) -> Vec<Rat> {
    let resolve = |point: &mut Vec<Rat>| -> bool {
        for (x, c, d) in solved {
            let cv = c.eval_exact(point);
            if cv.is_zero() {
                return false;
            }
            let dv = d.eval_exact(point);
            point[*x] = -dv / cv;
        }
        true
    };
    let solved_set: std::collections::BTreeSet<usize> =
        solved.iter().map(|(x, _, _)| *x).collect();
    let candidates: Vec<Rat> = vec![
        Rat::zero(),
        Rat::from_integer(1.into()),
        Rat::from_integer((-1).into()),
        Rat::new(1.into(), 2.into()),
        Rat::from_integer(2.into()),
    ];
    for &v in vars {
        if solved_set.contains(&v) {
            continue;
        }
        let mut rounded = false;
        for cand in &candidates {
            if point[v] == *cand {
                rounded = true;
                break;
            }
            let mut trial = point.clone();
            trial[v] = cand.clone();
            if resolve(&mut trial) && exact_point_refutes(atoms, goal, &trial) {
                point = trial;
                rounded = true;
                break;
            }
        }
        if rounded {
            continue;
        }
        for _ in 0..12 {
            let half = &point[v] / Rat::from_integer(2.into());
            if half == point[v] {
                break;
            }
            let mut trial = point.clone();
            trial[v] = half;
            if resolve(&mut trial) && exact_point_refutes(atoms, goal, &trial) {
                point = trial;
            } else {
                break;
            }
        }
    }
    point
}

fn build_witness(
    point: &[Rat],
    bindings: &[(usize, Polynomial)],
    vars: &[usize],
    ctx: &VarCtx,
) -> Witness {
    let mut full = point.to_vec();
    // Variables eliminated by equational substitution are reconstructed in
    // reverse order of elimination.
    for (x, repl) in bindings.iter().rev() {
        let v = repl.eval_exact(&full);
        if *x >= full.len() {
            full.resize(x + 1, Rat::zero());
        }
        full[*x] = v;
    }
    let mut named: Vec<(String, Rat)> = Vec::new();
    let mut listed: std::collections::BTreeSet<usize> = vars.iter().copied().collect();
    for (x, _) in bindings {
        listed.insert(*x);
    }
    for i in listed {
        if i < ctx.len() {
            named.push((ctx.name(i).to_string(), full.get(i).cloned().unwrap_or_default()));
        }
    }
    Witness { point: named }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_formula_str;

    fn ob(assumptions: &[&str], goal: &str) -> Obligation {
        Obligation {
            origin: "test".to_string(),
            assumptions: assumptions
                .iter()
                .map(|s| parse_formula_str(s).unwrap())
                .collect(),
            goal: parse_formula_str(goal).unwrap(),
        }
    }

    #[test]
    fn sign_calculus_example() {
        let mut ctx = VarCtx::new();
        let o = ob(&["A >= 0", "B >= 0", "kr > 0"], "A*kr + B*kr >= 0");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn identity_example() {
        let mut ctx = VarCtx::new();
        let o = ob(&[], "0 >= 0");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn forced_witness() {
        let mut ctx = VarCtx::new();
        let o = ob(&["A >= 0"], "A - 1 >= 0");
        match arith_oracle(&o, &mut ctx, 0) {
            OracleVerdict::Refuted(w) => {
                assert_eq!(w.point.len(), 1);
                assert_eq!(w.point[0].0, "A");
                // Minimization drives A to 0.
                assert!(w.point[0].1.is_zero());
            }
            other => panic!("expected refutation, got {other:?}"),
        }
    }

    #[test]
    fn endpoint_elimination_taylor_shape() {
        // amts*Told*(1 - 2*amts*t) >= 0 given bounds on t.
        let mut ctx = VarCtx::new();
        let o = ob(
            &["Told >= 0", "amts > 0", "t >= 0", "1 - 2*amts*t >= 0"],
            "amts*Told - 2*amts^2*Told*t >= 0",
        );
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn equational_substitution() {
        let mut ctx = VarCtx::new();
        // Conservation of mass rewrites the goal to B >= 0.
        let o = ob(&["A + B = A0", "B >= 0"], "A0 - A >= 0");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn polynomial_coefficient_equality_elimination() {
        let mut ctx = VarCtx::new();
        // 2*M*eps = 1 with M > 0 bounds eps both ways.
        let o = ob(
            &[
                "Amid > 0",
                "kT > 0",
                "2*Amid*kT*eps = 1",
                "eps - t >= 0",
                "t >= 0",
            ],
            "1 - 2*Amid*kT*t >= 0",
        );
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn vacuous_on_contradiction() {
        let mut ctx = VarCtx::new();
        let o = ob(&["1 < 0"], "A >= 1");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn min_obligation_branches() {
        let mut ctx = VarCtx::new();
        // min(a, b) <= a regardless of the branch.
        let o = ob(&[], "a - min(a, b) >= 0");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn min_goal_needs_both_branches() {
        // min(a, b) >= 0 needs a sign for each arm; with only `a >= 0` the
        // b-arm branch cannot prove, so the whole obligation does not.
        let mut ctx = VarCtx::new();
        let o = ob(&["a >= 0"], "min(a, b) >= 0");
        assert!(!matches!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved));
        let mut ctx = VarCtx::new();
        let o = ob(&["a >= 0", "b >= 0"], "min(a, b) >= 0");
        assert_eq!(arith_oracle(&o, &mut ctx, 0), OracleVerdict::Proved);
    }

    #[test]
    fn seed_independent_proofs() {
        let mut ctx = VarCtx::new();
        let o = ob(&["x >= 0"], "x + 1 > 0");
        let a = arith_oracle(&o, &mut ctx, 1);
        let b = arith_oracle(&o, &mut ctx, 99);
        assert_eq!(a, OracleVerdict::Proved);
        assert_eq!(a, b);
    }

    #[test]
    fn denominator_clearing_with_sign() {
        let mut ctx = VarCtx::new();
        // A/kA <= B/kB with kA, kB > 0 clears to A*kB <= B*kA; combined with
        // A*kB >= B*kA only equality survives, so A*kB - B*kA = 0 is entailed.
        let o = ob(
            &["kA > 0", "kB > 0", "A/kA <= B/kB", "A*kB - B*kA >= 0"],
            "A*kB - B*kA = 0",
        );
        // Equality goals need the zero polynomial after substitution; here the
        // two inequalities do not combine into an equation, so the oracle
        // reports Unknown rather than guessing.
        match arith_oracle(&o, &mut ctx, 0) {
            OracleVerdict::Unknown(_) => {}
            other => panic!("expected Unknown, got {other:?}"),
        }
    }
}
