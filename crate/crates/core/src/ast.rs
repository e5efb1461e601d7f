//! Abstract syntax for terms, hybrid programs and formulas.
//!
//! Values are immutable trees with structural equality. Pretty-printing
//! follows the concrete grammar in [`crate::parser`]; for any tree the
//! parser can produce, `parse(pretty_print(x)) == x`.

use num_rational::BigRational;
use std::collections::BTreeSet;
use std::fmt;

pub type Rat = BigRational;

/// Comparison operators. All six are first-class even though `>=` would
/// suffice to define the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum CmpOp {
    Ge,
    Gt,
    Eq,
    Ne,
    Le,
    Lt,
}

impl CmpOp {
    /// The operator satisfied by swapped operands: `a op b  <=>  b op.flip() a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
        }
    }

    /// The operator holding exactly when `self` does not.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
        }
    }

    pub fn eval(self, l: f64, r: f64) -> bool {
        match self {
            CmpOp::Ge => l >= r,
            CmpOp::Gt => l > r,
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Le => l <= r,
            CmpOp::Lt => l < r,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        })
    }
}

/// Arithmetic terms. Literals are exact rationals, never floats. `Pow`
/// exponents are nonnegative integers by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Lit(Rat),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Div(Box<Term>, Box<Term>),
    Pow(Box<Term>, u32),
    Min(Box<Term>, Box<Term>),
    Max(Box<Term>, Box<Term>),
}

#[allow(clippy::should_implement_trait)] // constructor helpers, not operators
impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn int(n: i64) -> Term {
        Term::Lit(Rat::from_integer(n.into()))
    }

    pub fn add(l: Term, r: Term) -> Term {
        Term::Add(Box::new(l), Box::new(r))
    }

    pub fn sub(l: Term, r: Term) -> Term {
        Term::Sub(Box::new(l), Box::new(r))
    }

    pub fn mul(l: Term, r: Term) -> Term {
        Term::Mul(Box::new(l), Box::new(r))
    }

    pub fn div(l: Term, r: Term) -> Term {
        Term::Div(Box::new(l), Box::new(r))
    }

    pub fn neg(t: Term) -> Term {
        Term::Neg(Box::new(t))
    }

    /// Replace every occurrence of `var` by `repl`.
    pub fn subst(&self, var: &str, repl: &Term) -> Term {
        match self {
            Term::Var(v) if v == var => repl.clone(),
            Term::Var(_) | Term::Lit(_) => self.clone(),
            Term::Add(l, r) => Term::add(l.subst(var, repl), r.subst(var, repl)),
            Term::Sub(l, r) => Term::sub(l.subst(var, repl), r.subst(var, repl)),
            Term::Neg(t) => Term::neg(t.subst(var, repl)),
            Term::Mul(l, r) => Term::mul(l.subst(var, repl), r.subst(var, repl)),
            Term::Div(l, r) => Term::div(l.subst(var, repl), r.subst(var, repl)),
            Term::Pow(b, e) => Term::Pow(Box::new(b.subst(var, repl)), *e),
            Term::Min(l, r) => Term::Min(
                Box::new(l.subst(var, repl)),
                Box::new(r.subst(var, repl)),
            ),
            Term::Max(l, r) => Term::Max(
                Box::new(l.subst(var, repl)),
                Box::new(r.subst(var, repl)),
            ),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Lit(_) => {}
            Term::Add(l, r)
            | Term::Sub(l, r)
            | Term::Mul(l, r)
            | Term::Div(l, r)
            | Term::Min(l, r)
            | Term::Max(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Term::Neg(t) => t.collect_vars(out),
            Term::Pow(b, _) => b.collect_vars(out),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    fn prec(&self) -> u8 {
        match self {
            Term::Add(..) | Term::Sub(..) => 1,
            Term::Mul(..) | Term::Div(..) => 2,
            // A fractional literal prints as `p/q`, so it binds like division.
            Term::Lit(q) if !q.is_integer() => 2,
            Term::Neg(_) => 3,
            Term::Lit(q) if q.is_negative() => 3,
            Term::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Term::Var(v) => write!(f, "{v}")?,
            Term::Lit(q) => {
                if q.is_integer() {
                    write!(f, "{}", q.numer())?;
                } else {
                    write!(f, "{}/{}", q.numer(), q.denom())?;
                }
            }
            Term::Add(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                r.fmt_prec(f, 2)?;
            }
            Term::Sub(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                r.fmt_prec(f, 2)?;
            }
            Term::Mul(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "*")?;
                r.fmt_prec(f, 3)?;
            }
            Term::Div(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "/")?;
                r.fmt_prec(f, 3)?;
            }
            Term::Neg(t) => {
                write!(f, "-")?;
                t.fmt_prec(f, 3)?;
            }
            Term::Pow(b, e) => {
                b.fmt_prec(f, 5)?;
                write!(f, "^{e}")?;
            }
            Term::Min(l, r) => {
                write!(f, "min(")?;
                l.fmt_prec(f, 1)?;
                write!(f, ", ")?;
                r.fmt_prec(f, 1)?;
                write!(f, ")")?;
            }
            Term::Max(l, r) => {
                write!(f, "max(")?;
                l.fmt_prec(f, 1)?;
                write!(f, ", ")?;
                r.fmt_prec(f, 1)?;
                write!(f, ")")?;
            }
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Hybrid programs: discrete statements plus differential equations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HybridProgram {
    /// `?F;` — no effect if `F` holds, no final states otherwise.
    Test(Formula),
    /// `x := e;`
    Assign(String, Term),
    /// `{x' = e, ... & Q}` with evolution domain `Q` (`true` if omitted).
    Ode(Vec<(String, Term)>, Formula),
    /// `{a ++ b}` — nondeterministic choice.
    Choice(Box<HybridProgram>, Box<HybridProgram>),
    /// `a b` — run `a`, then `b`.
    Seq(Box<HybridProgram>, Box<HybridProgram>),
    /// `{a}*` — nondeterministically many repetitions.
    Loop(Box<HybridProgram>),
}

impl HybridProgram {
    pub fn seq(l: HybridProgram, r: HybridProgram) -> HybridProgram {
        HybridProgram::Seq(Box::new(l), Box::new(r))
    }

    pub fn choice(l: HybridProgram, r: HybridProgram) -> HybridProgram {
        HybridProgram::Choice(Box::new(l), Box::new(r))
    }

    /// Variables written by this program (assignment targets and ODE
    /// left-hand sides).
    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.collect_bound(&mut s);
        s
    }

    fn collect_bound(&self, out: &mut BTreeSet<String>) {
        match self {
            HybridProgram::Test(_) => {}
            HybridProgram::Assign(x, _) => {
                out.insert(x.clone());
            }
            HybridProgram::Ode(eqs, _) => {
                for (x, _) in eqs {
                    out.insert(x.clone());
                }
            }
            HybridProgram::Choice(l, r) | HybridProgram::Seq(l, r) => {
                l.collect_bound(out);
                r.collect_bound(out);
            }
            HybridProgram::Loop(b) => b.collect_bound(out),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            HybridProgram::Test(fm) => fm.collect_vars(out),
            HybridProgram::Assign(x, e) => {
                out.insert(x.clone());
                e.collect_vars(out);
            }
            HybridProgram::Ode(eqs, dom) => {
                for (x, e) in eqs {
                    out.insert(x.clone());
                    e.collect_vars(out);
                }
                dom.collect_vars(out);
            }
            HybridProgram::Choice(l, r) | HybridProgram::Seq(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            HybridProgram::Loop(b) => b.collect_vars(out),
        }
    }

    /// Substitute `var := repl` in embedded terms/formulas. Purely
    /// syntactic; callers must ensure `var` is not rebound where that
    /// would change meaning (the checker tracks assignments separately).
    pub fn subst(&self, var: &str, repl: &Term) -> HybridProgram {
        match self {
            HybridProgram::Test(fm) => HybridProgram::Test(fm.subst(var, repl)),
            HybridProgram::Assign(x, e) => HybridProgram::Assign(x.clone(), e.subst(var, repl)),
            HybridProgram::Ode(eqs, dom) => HybridProgram::Ode(
                eqs.iter()
                    .map(|(x, e)| (x.clone(), e.subst(var, repl)))
                    .collect(),
                dom.subst(var, repl),
            ),
            HybridProgram::Choice(l, r) => {
                HybridProgram::choice(l.subst(var, repl), r.subst(var, repl))
            }
            HybridProgram::Seq(l, r) => HybridProgram::seq(l.subst(var, repl), r.subst(var, repl)),
            HybridProgram::Loop(b) => HybridProgram::Loop(Box::new(b.subst(var, repl))),
        }
    }

    /// Flatten the `Seq` spine into a statement list.
    pub fn flatten_seq(&self) -> Vec<&HybridProgram> {
        let mut out = Vec::new();
        fn go<'a>(p: &'a HybridProgram, out: &mut Vec<&'a HybridProgram>) {
            match p {
                HybridProgram::Seq(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    fn fmt_stmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HybridProgram::Test(fm) => write!(f, "?{fm};"),
            HybridProgram::Assign(x, e) => write!(f, "{x} := {e};"),
            HybridProgram::Ode(eqs, dom) => {
                write!(f, "{{")?;
                for (i, (x, e)) in eqs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}' = {e}")?;
                }
                if *dom != Formula::True {
                    write!(f, " & {dom}")?;
                }
                write!(f, "}}")
            }
            HybridProgram::Choice(l, r) => write!(f, "{{{l} ++ {r}}}"),
            HybridProgram::Seq(..) => {
                let stmts = self.flatten_seq();
                for (i, s) in stmts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    s.fmt_stmt(f)?;
                }
                Ok(())
            }
            HybridProgram::Loop(b) => write!(f, "{{{b}}}*"),
        }
    }
}

impl fmt::Display for HybridProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_stmt(f)
    }
}

/// Formulas of differential dynamic logic, restricted to the quantifier-free
/// fragment with box and diamond modalities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Box_(Box<HybridProgram>, Box<Formula>),
    Diamond(Box<HybridProgram>, Box<Formula>),
}

impl Formula {
    pub fn cmp(op: CmpOp, l: Term, r: Term) -> Formula {
        Formula::Cmp(op, l, r)
    }

    pub fn and(l: Formula, r: Formula) -> Formula {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Formula {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Formula {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(fm: Formula) -> Formula {
        Formula::Not(Box::new(fm))
    }

    /// Split a conjunction into its leaves.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn go<'a>(fm: &'a Formula, out: &mut Vec<&'a Formula>) {
            match fm {
                Formula::And(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                Formula::True => {}
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn conjoin(parts: Vec<Formula>) -> Formula {
        let mut it = parts.into_iter().filter(|p| *p != Formula::True);
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }

    pub fn subst(&self, var: &str, repl: &Term) -> Formula {
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Cmp(op, l, r) => {
                Formula::Cmp(*op, l.subst(var, repl), r.subst(var, repl))
            }
            Formula::Not(fm) => Formula::not(fm.subst(var, repl)),
            Formula::And(l, r) => Formula::and(l.subst(var, repl), r.subst(var, repl)),
            Formula::Or(l, r) => Formula::or(l.subst(var, repl), r.subst(var, repl)),
            Formula::Implies(l, r) => {
                Formula::implies(l.subst(var, repl), r.subst(var, repl))
            }
            // Occurrences bound by the program are left untouched
            // (capture-avoiding): an assignment before an ODE does not
            // rewrite the evolving variable inside the modality.
            Formula::Box_(prog, post) => {
                if prog.bound_vars().contains(var) {
                    self.clone()
                } else {
                    Formula::Box_(
                        Box::new(prog.subst(var, repl)),
                        Box::new(post.subst(var, repl)),
                    )
                }
            }
            Formula::Diamond(prog, post) => {
                if prog.bound_vars().contains(var) {
                    self.clone()
                } else {
                    Formula::Diamond(
                        Box::new(prog.subst(var, repl)),
                        Box::new(post.subst(var, repl)),
                    )
                }
            }
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Formula::Not(fm) => fm.collect_vars(out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Formula::Box_(prog, post) | Formula::Diamond(prog, post) => {
                prog.collect_vars(out);
                post.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    fn prec(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) | Formula::Box_(..) | Formula::Diamond(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            Formula::True => write!(f, "true")?,
            Formula::False => write!(f, "false")?,
            Formula::Cmp(op, l, r) => write!(f, "{l} {op} {r}")?,
            Formula::Not(fm) => {
                write!(f, "!")?;
                fm.fmt_prec(f, 4)?;
            }
            Formula::And(l, r) => {
                l.fmt_prec(f, 3)?;
                write!(f, " & ")?;
                r.fmt_prec(f, 4)?;
            }
            Formula::Or(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, " | ")?;
                r.fmt_prec(f, 3)?;
            }
            Formula::Implies(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, " -> ")?;
                r.fmt_prec(f, 1)?;
            }
            Formula::Box_(prog, post) => {
                write!(f, "[{prog}] ")?;
                post.fmt_prec(f, 4)?;
            }
            Formula::Diamond(prog, post) => {
                write!(f, "<{prog}> ")?;
                post.fmt_prec(f, 4)?;
            }
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// `if (P) {a} else {b}` desugars to `{?P; a} ++ {?!P; b}`.
pub fn desugar_if(cond: Formula, then_p: HybridProgram, else_p: HybridProgram) -> HybridProgram {
    HybridProgram::choice(
        HybridProgram::seq(HybridProgram::Test(cond.clone()), then_p),
        HybridProgram::seq(HybridProgram::Test(Formula::not(cond)), else_p),
    )
}

/// `while (P) {a}` desugars to `{?P; a}*; ?!P;`.
pub fn desugar_while(cond: Formula, body: HybridProgram) -> HybridProgram {
    HybridProgram::seq(
        HybridProgram::Loop(Box::new(HybridProgram::seq(
            HybridProgram::Test(cond.clone()),
            body,
        ))),
        HybridProgram::Test(Formula::not(cond)),
    )
}

trait IsNegative {
    fn is_negative(&self) -> bool;
}

impl IsNegative for Rat {
    fn is_negative(&self) -> bool {
        use num_traits::Signed;
        Signed::is_negative(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretty_mul() {
        let t = Term::mul(Term::int(2), Term::var("A"));
        assert_eq!(t.to_string(), "2*A");
    }

    #[test]
    fn pretty_min_of_quotients() {
        let t = Term::Min(
            Box::new(Term::div(Term::var("A"), Term::var("kA"))),
            Box::new(Term::div(Term::var("B"), Term::var("kB"))),
        );
        assert_eq!(t.to_string(), "min(A/kA, B/kB)");
    }

    #[test]
    fn pretty_box_ode() {
        let ode = HybridProgram::Ode(
            vec![("A".to_string(), Term::neg(Term::var("A")))],
            Formula::True,
        );
        let fm = Formula::Box_(
            Box::new(ode),
            Box::new(Formula::cmp(CmpOp::Ge, Term::var("A"), Term::int(0))),
        );
        assert_eq!(fm.to_string(), "[{A' = -A}] A >= 0");
    }

    #[test]
    fn neg_of_product_parenthesized() {
        let t = Term::neg(Term::mul(Term::var("a"), Term::var("b")));
        assert_eq!(t.to_string(), "-(a*b)");
    }

    #[test]
    fn subtraction_not_reassociated() {
        let t = Term::sub(
            Term::var("a"),
            Term::sub(Term::var("b"), Term::var("c")),
        );
        assert_eq!(t.to_string(), "a - (b - c)");
    }

    #[test]
    fn subst_skips_ode_bound_occurrences() {
        let ode = HybridProgram::Ode(
            vec![("t".to_string(), Term::int(1))],
            Formula::True,
        );
        let fm = Formula::Box_(
            Box::new(ode),
            Box::new(Formula::cmp(CmpOp::Ge, Term::var("t"), Term::int(0))),
        );
        assert_eq!(fm.subst("t", &Term::int(0)), fm);
    }
}
