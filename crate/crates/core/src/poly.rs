//! Exact multivariate polynomial algebra over the rationals.
//!
//! Polynomials are canonical by construction: a sorted map from monomials
//! (graded-lexicographic order over a per-model variable ordering) to nonzero
//! rational coefficients. Equality of canonical forms is mathematical
//! equality. `RatPoly` layers quotients on top for division handling; actual
//! denominator clearing happens at the comparison level in the checker.

use crate::ast::{Rat, Term};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("not a polynomial: division in `{0}`")]
    Division(String),
    #[error("not a polynomial: min/max in `{0}`")]
    MinMax(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("missing variable `{0}`")]
    MissingVariable(String),
}

/// Per-model variable ordering. Indices are stable once interned; the
/// context only grows, and polynomials pad implicitly.
#[derive(Debug, Clone, Default)]
pub struct VarCtx {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VarCtx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Exponent vector with trailing zeros trimmed, so representation is
/// canonical independent of how many variables have been interned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Box<[u32]>);

impl Monomial {
    pub fn unit() -> Monomial {
        Monomial(Box::new([]))
    }

    pub fn var(idx: usize) -> Monomial {
        let mut v = vec![0u32; idx + 1];
        v[idx] = 1;
        Monomial(v.into_boxed_slice())
    }

    fn from_vec(mut v: Vec<u32>) -> Monomial {
        while v.last() == Some(&0) {
            v.pop();
        }
        Monomial(v.into_boxed_slice())
    }

    pub fn exp(&self, idx: usize) -> u32 {
        self.0.get(idx).copied().unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let n = self.0.len().max(other.0.len());
        let mut v = vec![0u32; n];
        for (i, item) in v.iter_mut().enumerate() {
            *item = self.exp(i) + other.exp(i);
        }
        Monomial::from_vec(v)
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().enumerate().all(|(i, &e)| e <= other.exp(i))
    }

    /// `other / self`, assuming divisibility.
    pub fn div_into(&self, other: &Monomial) -> Monomial {
        let n = self.0.len().max(other.0.len());
        let mut v = vec![0u32; n];
        for (i, item) in v.iter_mut().enumerate() {
            *item = other.exp(i) - self.exp(i);
        }
        Monomial::from_vec(v)
    }

    pub fn vars(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| (i, e))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Graded lexicographic: total degree first, then exponents.
        self.degree().cmp(&other.degree()).then_with(|| {
            let n = self.0.len().max(other.0.len());
            for i in 0..n {
                match self.exp(i).cmp(&other.exp(i)) {
                    std::cmp::Ordering::Equal => continue,
                    ord => return ord,
                }
            }
            std::cmp::Ordering::Equal
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical sparse polynomial: monomial -> nonzero coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, Rat>,
}

impl Polynomial {
    pub fn zero() -> Polynomial {
        Polynomial::default()
    }

    pub fn one() -> Polynomial {
        Polynomial::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Polynomial {
        let mut p = Polynomial::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::unit(), c);
        }
        p
    }

    pub fn var(idx: usize) -> Polynomial {
        let mut p = Polynomial::zero();
        p.terms.insert(Monomial::var(idx), Rat::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.constant_value().map(|c| c.is_one()).unwrap_or(false)
    }

    /// `Some(c)` iff the polynomial is the constant `c` (including zero).
    pub fn constant_value(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 => self.terms.get(&Monomial::unit()).cloned(),
            _ => None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rat) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero();
        }
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &Rat) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m0, c0)| (m0.mul(m), c0 * c))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut result = Polynomial::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn leading(&self) -> Option<(&Monomial, &Rat)> {
        self.terms.iter().next_back()
    }

    /// Exact division: `Some(q)` with `self == q * d`, or `None`.
    pub fn exact_div(&self, d: &Polynomial) -> Option<Polynomial> {
        if d.is_zero() {
            return None;
        }
        let (dm, dc) = d.leading().expect("nonzero");
        let mut rem = self.clone();
        let mut q = Polynomial::zero();
        while !rem.is_zero() {
            let (rm, rc) = rem.leading().expect("nonzero");
            if !dm.divides(rm) {
                return None;
            }
            let m = dm.div_into(rm);
            let c = rc / dc;
            rem = rem.sub(&d.mul_monomial(&m, &c));
            q.add_term(m, c);
        }
        Some(q)
    }

    pub fn partial_derivative(&self, idx: usize) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let e = m.exp(idx);
            if e == 0 {
                continue;
            }
            let mut v: Vec<u32> = (0..m.0.len().max(idx + 1)).map(|i| m.exp(i)).collect();
            v[idx] = e - 1;
            out.add_term(Monomial::from_vec(v), c * Rat::from_integer(e.into()));
        }
        out
    }

    pub fn degree_in(&self, idx: usize) -> u32 {
        self.terms.keys().map(|m| m.exp(idx)).max().unwrap_or(0)
    }

    pub fn mentions(&self, idx: usize) -> bool {
        self.degree_in(idx) > 0
    }

    pub fn var_indices(&self) -> Vec<usize> {
        let mut seen = std::collections::BTreeSet::new();
        for m in self.terms.keys() {
            for (i, _) in m.vars() {
                seen.insert(i);
            }
        }
        seen.into_iter().collect()
    }

    /// Split `p = a*x + b` when `p` is linear in `x`.
    pub fn linear_split(&self, idx: usize) -> Option<(Polynomial, Polynomial)> {
        if self.degree_in(idx) > 1 {
            return None;
        }
        let mut a = Polynomial::zero();
        let mut b = Polynomial::zero();
        for (m, c) in &self.terms {
            if m.exp(idx) == 1 {
                let mut v: Vec<u32> = (0..m.0.len()).map(|i| m.exp(i)).collect();
                v[idx] = 0;
                a.add_term(Monomial::from_vec(v), c.clone());
            } else {
                b.add_term(m.clone(), c.clone());
            }
        }
        Some((a, b))
    }

    /// Substitute a polynomial for a variable.
    pub fn subst_var(&self, idx: usize, repl: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let e = m.exp(idx);
            let mut v: Vec<u32> = (0..m.0.len()).map(|i| m.exp(i)).collect();
            if e > 0 {
                v[idx] = 0;
            }
            let rest = Polynomial {
                terms: BTreeMap::from([(Monomial::from_vec(v), c.clone())]),
            };
            if e > 0 {
                out = out.add(&rest.mul(&repl.pow(e)));
            } else {
                out = out.add(&rest);
            }
        }
        out
    }

    pub fn eval_exact(&self, point: &[Rat]) -> Rat {
        let mut acc = Rat::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (i, e) in m.vars() {
                let v = point.get(i).cloned().unwrap_or_else(Rat::zero);
                for _ in 0..e {
                    term *= &v;
                }
            }
            acc += term;
        }
        acc
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut term = c.to_f64().unwrap_or(f64::NAN);
            for (i, e) in m.vars() {
                let v = point.get(i).copied().unwrap_or(0.0);
                term *= v.powi(e as i32);
            }
            acc += term;
        }
        acc
    }

    /// Largest total degree counting only the given variables; used for the
    /// affine (global-solution) side condition.
    pub fn degree_in_vars(&self, vars: &[usize]) -> u32 {
        self.terms
            .keys()
            .map(|m| vars.iter().map(|&i| m.exp(i)).sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn to_string_in(&self, ctx: &VarCtx) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    out.push('-');
                }
            } else if neg {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let coeff_is_one = abs.is_one();
            if m.is_unit() {
                let _ = write!(out, "{}", fmt_rat(&abs));
            } else {
                if !coeff_is_one {
                    let _ = write!(out, "{}*", fmt_rat(&abs));
                }
                let mut first = true;
                for (i, e) in m.vars() {
                    if !first {
                        out.push('*');
                    }
                    first = false;
                    let _ = write!(out, "{}", ctx.name(i));
                    if e > 1 {
                        let _ = write!(out, "^{e}");
                    }
                }
            }
        }
        out
    }
}

fn fmt_rat(q: &Rat) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Quotient of polynomials. Kept reduced opportunistically (constant and
/// exact-divisor folding, common monomial content); denominators only have
/// to be sign-checkable, not fully reduced.
#[derive(Debug, Clone, PartialEq)]
pub struct RatPoly {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl RatPoly {
    pub fn from_poly(p: Polynomial) -> RatPoly {
        RatPoly {
            num: p,
            den: Polynomial::one(),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    fn simplify(mut self) -> RatPoly {
        if self.num.is_zero() {
            return RatPoly::from_poly(Polynomial::zero());
        }
        if let Some(c) = self.den.constant_value() {
            if !c.is_zero() {
                return RatPoly::from_poly(self.num.scale(&(Rat::one() / c)));
            }
        }
        if let Some(q) = self.num.exact_div(&self.den) {
            return RatPoly::from_poly(q);
        }
        // Common monomial content.
        let mut min_exps: Option<Vec<u32>> = None;
        for m in self.num.terms.keys().chain(self.den.terms.keys()) {
            let v: Vec<u32> = match &min_exps {
                None => (0..m.0.len()).map(|i| m.exp(i)).collect(),
                Some(prev) => (0..prev.len()).map(|i| prev[i].min(m.exp(i))).collect(),
            };
            min_exps = Some(v);
        }
        if let Some(exps) = min_exps {
            let content = Monomial::from_vec(exps);
            if !content.is_unit() {
                let strip = |p: &Polynomial| Polynomial {
                    terms: p
                        .terms
                        .iter()
                        .map(|(m, c)| (content.div_into(m), c.clone()))
                        .collect(),
                };
                self.num = strip(&self.num);
                self.den = strip(&self.den);
                if let Some(q) = self.num.exact_div(&self.den) {
                    return RatPoly::from_poly(q);
                }
            }
        }
        self
    }

    pub fn add(&self, other: &RatPoly) -> RatPoly {
        RatPoly {
            num: self
                .num
                .mul(&other.den)
                .add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
        .simplify()
    }

    pub fn neg(&self) -> RatPoly {
        RatPoly {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, other: &RatPoly) -> RatPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &RatPoly) -> RatPoly {
        RatPoly {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
        .simplify()
    }

    pub fn div(&self, other: &RatPoly) -> Result<RatPoly, PolyError> {
        if other.num.is_zero() {
            return Err(PolyError::DivisionByZero("denominator is zero".into()));
        }
        Ok(RatPoly {
            num: self.num.mul(&other.den),
            den: self.den.mul(&other.num),
        }
        .simplify())
    }

    pub fn pow(&self, n: u32) -> RatPoly {
        RatPoly {
            num: self.num.pow(n),
            den: self.den.pow(n),
        }
        .simplify()
    }
}

/// Convert a term to a polynomial. Division and min/max are rejected;
/// quotients are handled at the comparison level (see the checker) and
/// min/max by upstream case splits.
pub fn to_polynomial(t: &Term, ctx: &mut VarCtx) -> Result<Polynomial, PolyError> {
    let rp = to_ratpoly(t, ctx)?;
    if rp.is_polynomial() {
        Ok(rp.num)
    } else {
        Err(PolyError::Division(t.to_string()))
    }
}

/// Convert a term to a polynomial quotient. Min/max are rejected here.
pub fn to_ratpoly(t: &Term, ctx: &mut VarCtx) -> Result<RatPoly, PolyError> {
    match t {
        Term::Var(v) => {
            let i = ctx.intern(v);
            Ok(RatPoly::from_poly(Polynomial::var(i)))
        }
        Term::Lit(q) => Ok(RatPoly::from_poly(Polynomial::constant(q.clone()))),
        Term::Add(l, r) => Ok(to_ratpoly(l, ctx)?.add(&to_ratpoly(r, ctx)?)),
        Term::Sub(l, r) => Ok(to_ratpoly(l, ctx)?.sub(&to_ratpoly(r, ctx)?)),
        Term::Neg(x) => Ok(to_ratpoly(x, ctx)?.neg()),
        Term::Mul(l, r) => Ok(to_ratpoly(l, ctx)?.mul(&to_ratpoly(r, ctx)?)),
        Term::Div(l, r) => {
            let lp = to_ratpoly(l, ctx)?;
            let rp = to_ratpoly(r, ctx)?;
            if rp.num.is_zero() {
                return Err(PolyError::DivisionByZero(t.to_string()));
            }
            lp.div(&rp)
        }
        Term::Pow(b, e) => Ok(to_ratpoly(b, ctx)?.pow(*e)),
        Term::Min(..) | Term::Max(..) => Err(PolyError::MinMax(t.to_string())),
    }
}

/// Like [`to_polynomial`] but refuses to introduce new variables.
pub fn to_polynomial_frozen(t: &Term, ctx: &VarCtx) -> Result<Polynomial, PolyError> {
    for v in t.vars() {
        if ctx.get(&v).is_none() {
            return Err(PolyError::UnboundVariable(v));
        }
    }
    let mut scratch = ctx.clone();
    to_polynomial(t, &mut scratch)
}

/// An ODE system `x' = f(x)` with polynomial right-hand sides. Variables not
/// on a left-hand side are parameters: constant during evolution.
#[derive(Debug, Clone)]
pub struct VectorField {
    /// (variable index, right-hand side), in declaration order.
    pub eqs: Vec<(usize, Polynomial)>,
    pub domain: crate::ast::Formula,
}

impl VectorField {
    pub fn is_ode_var(&self, idx: usize) -> bool {
        self.eqs.iter().any(|(i, _)| *i == idx)
    }

    pub fn rhs(&self, idx: usize) -> Option<&Polynomial> {
        self.eqs.iter().find(|(i, _)| *i == idx).map(|(_, p)| p)
    }

    /// True when every right-hand side is affine in the ODE variables
    /// (parameters are free); such systems have global solutions.
    pub fn is_affine(&self) -> bool {
        let vars: Vec<usize> = self.eqs.iter().map(|(i, _)| *i).collect();
        self.eqs.iter().all(|(_, p)| p.degree_in_vars(&vars) <= 1)
    }
}

/// Lie derivative of `p` along the field: sum of (dp/dx_i) * f_i, with
/// parameters treated as constants.
pub fn lie_derivative(p: &Polynomial, vf: &VectorField) -> Polynomial {
    let mut out = Polynomial::zero();
    for (idx, rhs) in &vf.eqs {
        let dp = p.partial_derivative(*idx);
        if !dp.is_zero() {
            out = out.add(&dp.mul(rhs));
        }
    }
    out
}

/// Evaluate a polynomial at a named point, exactly.
pub fn evaluate_exact(
    p: &Polynomial,
    ctx: &VarCtx,
    point: &HashMap<String, Rat>,
) -> Result<Rat, PolyError> {
    let mut vals = vec![Rat::zero(); ctx.len()];
    for i in p.var_indices() {
        let name = ctx.name(i);
        match point.get(name) {
            Some(v) => vals[i] = v.clone(),
            None => return Err(PolyError::MissingVariable(name.to_string())),
        }
    }
    Ok(p.eval_exact(&vals))
}

/// Evaluate a polynomial at a named point in double precision.
pub fn evaluate_f64(
    p: &Polynomial,
    ctx: &VarCtx,
    point: &HashMap<String, f64>,
) -> Result<f64, PolyError> {
    let mut vals = vec![0.0; ctx.len()];
    for i in p.var_indices() {
        let name = ctx.name(i);
        match point.get(name) {
            Some(v) => vals[i] = *v,
            None => return Err(PolyError::MissingVariable(name.to_string())),
        }
    }
    Ok(p.eval_f64(&vals))
}
