//! Proof obligations: an assumption set and a goal, both plain formulas.
//!
//! Min/max terms are eliminated by case split before polynomialization:
//! `min(a,b)` forks into a branch assuming `a <= b` where the term becomes
//! `a`, and a branch assuming `b <= a` where it becomes `b`. Obligations are
//! duplicated per branch and every branch must prove.

use crate::ast::{CmpOp, Formula, Rat, Term};
use crate::poly::{Monomial, Polynomial, VarCtx};
use num_traits::{One, Signed, Zero};

/// A single arithmetic proof obligation over one state.
#[derive(Debug, Clone)]
pub struct Obligation {
    pub origin: String,
    pub assumptions: Vec<Formula>,
    pub goal: Formula,
}

/// One min/max case of an obligation.
#[derive(Debug, Clone)]
pub struct BranchCase {
    /// Comparisons characterizing the branch (e.g. `a <= b`).
    pub conditions: Vec<Formula>,
    pub assumptions: Vec<Formula>,
    pub goal: Formula,
}

fn find_min_max_term(f: &Formula) -> Option<Term> {
    fn in_term(t: &Term) -> Option<Term> {
        match t {
            Term::Min(l, r) | Term::Max(l, r) => {
                // Prefer an inner occurrence so replacement converges.
                in_term(l).or_else(|| in_term(r)).or(Some(t.clone()))
            }
            Term::Add(l, r)
            | Term::Sub(l, r)
            | Term::Mul(l, r)
            | Term::Div(l, r) => in_term(l).or_else(|| in_term(r)),
            Term::Neg(x) => in_term(x),
            Term::Pow(b, _) => in_term(b),
            Term::Var(_) | Term::Lit(_) => None,
        }
    }
    match f {
        Formula::True | Formula::False => None,
        Formula::Cmp(_, l, r) => in_term(l).or_else(|| in_term(r)),
        Formula::Not(x) => find_min_max_term(x),
        Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
            find_min_max_term(l).or_else(|| find_min_max_term(r))
        }
        // Modalities never reach the arithmetic layer.
        Formula::Box_(..) | Formula::Diamond(..) => None,
    }
}

fn replace_term_in_term(t: &Term, target: &Term, repl: &Term) -> Term {
    if t == target {
        return repl.clone();
    }
    match t {
        Term::Var(_) | Term::Lit(_) => t.clone(),
        Term::Add(l, r) => Term::add(
            replace_term_in_term(l, target, repl),
            replace_term_in_term(r, target, repl),
        ),
        Term::Sub(l, r) => Term::sub(
            replace_term_in_term(l, target, repl),
            replace_term_in_term(r, target, repl),
        ),
        Term::Neg(x) => Term::neg(replace_term_in_term(x, target, repl)),
        Term::Mul(l, r) => Term::mul(
            replace_term_in_term(l, target, repl),
            replace_term_in_term(r, target, repl),
        ),
        Term::Div(l, r) => Term::div(
            replace_term_in_term(l, target, repl),
            replace_term_in_term(r, target, repl),
        ),
        Term::Pow(b, e) => Term::Pow(Box::new(replace_term_in_term(b, target, repl)), *e),
        Term::Min(l, r) => Term::Min(
            Box::new(replace_term_in_term(l, target, repl)),
            Box::new(replace_term_in_term(r, target, repl)),
        ),
        Term::Max(l, r) => Term::Max(
            Box::new(replace_term_in_term(l, target, repl)),
            Box::new(replace_term_in_term(r, target, repl)),
        ),
    }
}

pub fn replace_term_in_formula(f: &Formula, target: &Term, repl: &Term) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, l, r) => Formula::Cmp(
            *op,
            replace_term_in_term(l, target, repl),
            replace_term_in_term(r, target, repl),
        ),
        Formula::Not(x) => Formula::not(replace_term_in_formula(x, target, repl)),
        Formula::And(l, r) => Formula::and(
            replace_term_in_formula(l, target, repl),
            replace_term_in_formula(r, target, repl),
        ),
        Formula::Or(l, r) => Formula::or(
            replace_term_in_formula(l, target, repl),
            replace_term_in_formula(r, target, repl),
        ),
        Formula::Implies(l, r) => Formula::implies(
            replace_term_in_formula(l, target, repl),
            replace_term_in_formula(r, target, repl),
        ),
        Formula::Box_(..) | Formula::Diamond(..) => f.clone(),
    }
}

/// Split min/max occurrences across an assumption set and a goal into
/// branch cases. At most `2^limit` branches; deeper nesting fails.
pub fn split_min_max(
    assumptions: &[Formula],
    goal: &Formula,
    limit: u32,
) -> Result<Vec<BranchCase>, String> {
    let mut done = Vec::new();
    let mut work = vec![BranchCase {
        conditions: Vec::new(),
        assumptions: assumptions.to_vec(),
        goal: goal.clone(),
    }];
    let mut splits = 0u32;
    while let Some(case) = work.pop() {
        let target = case
            .assumptions
            .iter()
            .find_map(find_min_max_term)
            .or_else(|| find_min_max_term(&case.goal));
        match target {
            None => done.push(case),
            Some(t) => {
                splits += 1;
                if splits > limit {
                    return Err("too many min/max case splits".to_string());
                }
                let (l, r, is_min) = match &t {
                    Term::Min(l, r) => (l.as_ref().clone(), r.as_ref().clone(), true),
                    Term::Max(l, r) => (l.as_ref().clone(), r.as_ref().clone(), false),
                    _ => unreachable!(),
                };
                for (value, cond) in [
                    (
                        l.clone(),
                        if is_min {
                            Formula::cmp(CmpOp::Le, l.clone(), r.clone())
                        } else {
                            Formula::cmp(CmpOp::Ge, l.clone(), r.clone())
                        },
                    ),
                    (
                        r.clone(),
                        if is_min {
                            Formula::cmp(CmpOp::Le, r.clone(), l.clone())
                        } else {
                            Formula::cmp(CmpOp::Ge, r.clone(), l.clone())
                        },
                    ),
                ] {
                    let mut conditions = case.conditions.clone();
                    conditions.push(cond);
                    work.push(BranchCase {
                        conditions,
                        assumptions: case
                            .assumptions
                            .iter()
                            .map(|a| replace_term_in_formula(a, &t, &value))
                            .collect(),
                        goal: replace_term_in_formula(&case.goal, &t, &value),
                    });
                }
            }
        }
    }
    // Deterministic order.
    done.reverse();
    Ok(done)
}

/// Rebuild a term from a polynomial (for goal formulas and reports).
pub fn poly_to_term(p: &Polynomial, ctx: &VarCtx) -> Term {
    if p.is_zero() {
        return Term::int(0);
    }
    let mut acc: Option<Term> = None;
    for (m, c) in p.terms() {
        let mono = monomial_term(m, c, ctx);
        acc = Some(match acc {
            None => mono,
            Some(prev) => {
                if c.is_negative() {
                    // monomial_term already carries the sign; display as sum.
                    Term::add(prev, mono)
                } else {
                    Term::add(prev, mono)
                }
            }
        });
    }
    acc.unwrap()
}

fn monomial_term(m: &Monomial, c: &Rat, ctx: &VarCtx) -> Term {
    let mut factors: Vec<Term> = Vec::new();
    for (i, e) in m.vars() {
        let v = Term::var(ctx.name(i));
        factors.push(if e == 1 {
            v
        } else {
            Term::Pow(Box::new(v), e)
        });
    }
    let coeff_abs = c.abs();
    let mut acc = if factors.is_empty() || !coeff_abs.is_one() {
        Some(Term::Lit(coeff_abs))
    } else {
        None
    };
    for f in factors {
        acc = Some(match acc {
            None => f,
            Some(prev) => Term::mul(prev, f),
        });
    }
    let body = acc.expect("nonempty");
    if c.is_negative() {
        Term::neg(body)
    } else {
        body
    }
}

/// `p op 0` as a formula.
pub fn poly_cmp_formula(op: CmpOp, p: &Polynomial, ctx: &VarCtx) -> Formula {
    Formula::cmp(op, poly_to_term(p, ctx), Term::int(0))
}

#[allow(dead_code)]
fn rat_is_one(q: &Rat) -> bool {
    q.is_one()
}

#[allow(dead_code)]
fn rat_is_zero(q: &Rat) -> bool {
    q.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula_str, parse_term_str};
    use crate::poly::to_polynomial;

    #[test]
    fn min_splits_into_two_cases() {
        let goal = parse_formula_str("E0 = T + min(A/kA, B/kB)*kT").unwrap();
        let cases = split_min_max(&[], &goal, 3).unwrap();
        assert_eq!(cases.len(), 2);
        for case in &cases {
            assert_eq!(case.conditions.len(), 1);
            assert!(find_min_max_term(&case.goal).is_none());
        }
    }

    #[test]
    fn shared_min_replaced_consistently() {
        let a = parse_formula_str("x = min(u, v)").unwrap();
        let goal = parse_formula_str("min(u, v) >= 0").unwrap();
        let cases = split_min_max(&[a], &goal, 3).unwrap();
        assert_eq!(cases.len(), 2);
        for case in &cases {
            // The same arm must appear in assumption and goal.
            let arm = match &case.goal {
                Formula::Cmp(_, l, _) => l.clone(),
                _ => panic!(),
            };
            assert_eq!(case.assumptions[0], Formula::cmp(CmpOp::Eq, Term::var("x"), arm));
        }
    }

    #[test]
    fn poly_term_round_trip() {
        let mut ctx = VarCtx::new();
        let p = to_polynomial(&parse_term_str("3*A^2*B - 1/2*C + 4").unwrap(), &mut ctx).unwrap();
        let t = poly_to_term(&p, &ctx);
        let p2 = to_polynomial(&t, &mut ctx).unwrap();
        assert_eq!(p, p2);
    }
}
