//! Certificate checking.
//!
//! `check_theorem` decomposes a theorem of one of the shapes
//!
//! * `P -> [ode] Q`
//! * `P -> [ctrl; ode] Q`
//! * `P -> [{ctrl; ode}*] Q`   (loop rule with the certificate's invariant)
//! * `P -> <ode> Q`            (differential variant)
//! * `P -> <ode> [ode] Q`      (variant, then invariant from the reached region)
//!
//! into arithmetic obligations discharged by the restricted oracle. ODE
//! obligations use differential-invariant, Darboux and differential-variant
//! premises over exact polynomials; proved cuts accumulate into the
//! assumption set in order, per differential-cut semantics.
//!
//! Within `check_theorem`, a cut whose obligations fail on some path or
//! phase is dropped there (reported as skipped) and checking continues;
//! the path verdict is carried by the invariant/postcondition obligations.
//! The standalone `check_cut_chain` keeps strict all-steps semantics.

pub mod exec;
pub mod obligation;
pub mod oracle;

use crate::ast::{CmpOp, Formula, HybridProgram, Term};
use crate::parser::{Certificate, CutMethod, CutStep, Model};
use crate::poly::{
    lie_derivative, to_polynomial, to_ratpoly, Polynomial, VarCtx, VectorField,
};
use crate::rng::mix;
use exec::{apply_sigma_formula, apply_sigma_term, symbolic_exec, ExecPath};
use obligation::{poly_cmp_formula, Obligation};
use oracle::{arith_oracle, decide_sign, OracleVerdict, Witness};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("theorem shape unsupported: {0}")]
    ShapeUnsupported(String),
    #[error("side condition unsupported: {0}")]
    SideConditionUnsupported(String),
    #[error("certificate is for model `{expected}`, not `{got}`")]
    ModelMismatch { expected: String, got: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Proved,
    Refuted,
    Unknown,
    Skipped,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::Proved => "proved",
            VerdictKind::Refuted => "refuted",
            VerdictKind::Unknown => "unknown",
            VerdictKind::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObligationReport {
    pub origin: String,
    pub verdict: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<BTreeMap<String, String>>,
}

/// Result of checking one theorem against one certificate.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub obligations: Vec<ObligationReport>,
    pub verdict: VerdictKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TheoremReport {
    pub fn is_proved(&self) -> bool {
        self.verdict == VerdictKind::Proved
    }
}

/// Outcome of a standalone checker operation.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Proved,
    Refuted { witness: Witness, obligation: String },
    Unknown { reason: String, obligation: String },
}

impl CheckOutcome {
    pub fn is_proved(&self) -> bool {
        matches!(self, CheckOutcome::Proved)
    }
}

fn witness_map(w: &Witness) -> BTreeMap<String, String> {
    w.point
        .iter()
        .map(|(n, v)| {
            let s = if v.is_integer() {
                v.numer().to_string()
            } else {
                format!("{}/{}", v.numer(), v.denom())
            };
            (n.clone(), s)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Checker
// ---------------------------------------------------------------------------

struct Checker {
    ctx: VarCtx,
    root_seed: u64,
    counter: u64,
    reports: Vec<ObligationReport>,
    first_refuted: Option<String>,
    first_unknown: Option<String>,
}

struct OracleRun {
    verdict: VerdictKind,
    detail: Option<String>,
    witness: Option<Witness>,
}

impl Checker {
    fn new(model: &Model, cert: &Certificate, seed: u64) -> Self {
        let mut ctx = VarCtx::new();
        let mut seen = HashSet::new();
        for (_, prog) in &model.programs {
            collect_prog_vars(prog, &mut ctx, &mut seen);
        }
        collect_formula_vars(&model.constants, &mut ctx, &mut seen);
        collect_formula_vars(&model.theorem, &mut ctx, &mut seen);
        if let Some(j) = &cert.loop_invariant {
            collect_formula_vars(j, &mut ctx, &mut seen);
        }
        for cut in &cert.cuts {
            collect_formula_vars(&cut.formula, &mut ctx, &mut seen);
            if let CutMethod::Darboux(g) = &cut.method {
                collect_term_vars(g, &mut ctx, &mut seen);
            }
        }
        if let Some((p, d)) = &cert.variant {
            collect_term_vars(p, &mut ctx, &mut seen);
            collect_term_vars(d, &mut ctx, &mut seen);
        }
        Checker {
            ctx,
            root_seed: seed,
            counter: 0,
            reports: Vec::new(),
            first_refuted: None,
            first_unknown: None,
        }
    }

    fn oracle(&mut self, origin: &str, assumptions: Vec<Formula>, goal: Formula) -> OracleRun {
        let seed = mix(self.root_seed, self.counter);
        self.counter += 1;
        let ob = Obligation {
            origin: origin.to_string(),
            assumptions,
            goal,
        };
        match arith_oracle(&ob, &mut self.ctx, seed) {
            OracleVerdict::Proved => OracleRun {
                verdict: VerdictKind::Proved,
                detail: None,
                witness: None,
            },
            OracleVerdict::Refuted(w) => OracleRun {
                verdict: VerdictKind::Refuted,
                detail: Some(format!("counterexample: {}", w.render())),
                witness: Some(w),
            },
            OracleVerdict::Unknown(r) => OracleRun {
                verdict: VerdictKind::Unknown,
                detail: Some(r),
                witness: None,
            },
        }
    }

    /// Run an obligation the theorem requires; its verdict feeds the total.
    fn required(&mut self, origin: String, assumptions: Vec<Formula>, goal: Formula) -> bool {
        let run = self.oracle(&origin, assumptions, goal);
        let ok = run.verdict == VerdictKind::Proved;
        self.count(&origin, run.verdict, run.detail.clone());
        self.reports.push(ObligationReport {
            origin,
            verdict: run.verdict,
            detail: run.detail,
            witness: run.witness.as_ref().map(witness_map),
        });
        ok
    }

    fn record(&mut self, origin: String, verdict: VerdictKind, detail: Option<String>) {
        self.count(&origin, verdict, detail.clone());
        self.reports.push(ObligationReport {
            origin,
            verdict,
            detail,
            witness: None,
        });
    }

    fn count(&mut self, origin: &str, verdict: VerdictKind, detail: Option<String>) {
        let tag = || match &detail {
            Some(d) => format!("{origin}: {d}"),
            None => origin.to_string(),
        };
        match verdict {
            VerdictKind::Refuted if self.first_refuted.is_none() => {
                self.first_refuted = Some(tag());
            }
            VerdictKind::Unknown if self.first_unknown.is_none() => {
                self.first_unknown = Some(tag());
            }
            _ => {}
        }
    }

    fn finish(self) -> TheoremReport {
        let (verdict, failure) = if let Some(f) = self.first_refuted {
            (VerdictKind::Refuted, Some(f))
        } else if let Some(f) = self.first_unknown {
            (VerdictKind::Unknown, Some(f))
        } else {
            (VerdictKind::Proved, None)
        };
        TheoremReport {
            obligations: self.reports,
            verdict,
            failure,
        }
    }

    // -- the ODE stage: per-path cut chain plus throughout-invariants -------

    #[allow(clippy::too_many_arguments)]
    fn ode_stage(
        &mut self,
        where_: &str,
        base_facts: &[Formula],
        ctrl: Option<&HybridProgram>,
        ode_eqs: &[(String, Term)],
        domain: &Formula,
        cuts: &[CutStep],
        posts: &[Formula],
    ) -> Result<Vec<Formula>, CertifyError> {
        let paths: Vec<ExecPath> = match ctrl {
            Some(c) => symbolic_exec(c, &Formula::True)?,
            None => vec![ExecPath {
                conditions: Vec::new(),
                sigma: Vec::new(),
                post: Formula::True,
            }],
        };
        if paths.is_empty() {
            // The discrete fragment has no runs: the box holds vacuously.
            self.record(
                format!("{where_}discrete fragment has no runs"),
                VerdictKind::Proved,
                None,
            );
            return Ok(Vec::new());
        }
        let multi = paths.len() > 1;
        let mut first_cuts: Vec<Formula> = Vec::new();

        for (pi, path) in paths.iter().enumerate() {
            let tag = if multi {
                format!("{where_}path {} {}: ", pi + 1, path_label(path))
            } else {
                where_.to_string()
            };

            // Literal assignments to non-ODE variables are substituted into
            // the dynamics, the domain, cut formulas and cofactors. An
            // assignment to an ODE variable only sets its initial value and
            // must not rewrite the evolving symbol.
            let ode_lhs: HashSet<&str> = ode_eqs.iter().map(|(x, _)| x.as_str()).collect();
            let lit: HashMap<String, Term> = path
                .sigma
                .iter()
                .filter(|(v, t)| matches!(t, Term::Lit(_)) && !ode_lhs.contains(v.as_str()))
                .cloned()
                .collect();

            let mut eqs: Vec<(usize, Polynomial)> = Vec::new();
            let mut setup_error: Option<String> = None;
            for (x, rhs) in ode_eqs {
                let xi = self.ctx.intern(x);
                let rhs_l = apply_sigma_term(rhs, &lit);
                match to_polynomial(&rhs_l, &mut self.ctx) {
                    Ok(p) => eqs.push((xi, p)),
                    Err(e) => {
                        setup_error = Some(format!("{x}' = {rhs_l}: {e}"));
                        break;
                    }
                }
            }
            if let Some(e) = setup_error {
                self.record(
                    format!("{tag}vector field"),
                    VerdictKind::Unknown,
                    Some(e),
                );
                continue;
            }
            // Variables whose right-hand side vanishes on this path are
            // constant: treat them as parameters.
            let evolving_names: BTreeSet<String> = eqs
                .iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|(i, _)| self.ctx.name(*i).to_string())
                .collect();
            let vf = VectorField {
                eqs: eqs.into_iter().filter(|(_, p)| !p.is_zero()).collect(),
                domain: apply_sigma_formula(domain, &lit),
            };

            // Snapshot parameters: `v := x` makes `v` hold x's pre-state
            // value, so pre-state facts rewrite through it.
            let mut snapshot: HashMap<String, String> = HashMap::new();
            for (v, t) in &path.sigma {
                if let Term::Var(x) = t {
                    if v != x && !evolving_names.contains(v) {
                        snapshot.entry(x.clone()).or_insert_with(|| v.clone());
                    }
                }
            }
            let assigned: HashSet<String> =
                path.sigma.iter().map(|(v, _)| v.clone()).collect();
            // A pre-state fact rewrites into the evolution context when each
            // of its variables is constant on this path (neither assigned
            // nor evolving) or has a snapshot parameter holding its
            // pre-state value.
            let rewrite_map = |vars: BTreeSet<String>| -> Option<HashMap<String, Term>> {
                let mut map = HashMap::new();
                for w in vars {
                    if !assigned.contains(&w) && !evolving_names.contains(&w) {
                        continue;
                    }
                    let s = snapshot.get(&w)?;
                    map.insert(w.clone(), Term::var(s));
                }
                Some(map)
            };
            let rewrite = |t: &Term| -> Option<Term> {
                rewrite_map(t.vars()).map(|m| apply_sigma_term(t, &m))
            };
            let rewrite_formula = |f: &Formula| -> Option<Formula> {
                rewrite_map(f.vars()).map(|m| apply_sigma_formula(f, &m))
            };

            // Facts available throughout the evolution.
            let mut evo: Vec<Formula> =
                vf.domain.conjuncts().into_iter().cloned().collect();
            for f in base_facts.iter().chain(path.conditions.iter()) {
                if let Some(g) = rewrite_formula(f) {
                    evo.push(g);
                }
            }
            for (v, t) in &path.sigma {
                if evolving_names.contains(v) || matches!(t, Term::Lit(_)) {
                    continue;
                }
                if let Some(t2) = rewrite(t) {
                    if t2 != Term::var(v) {
                        evo.push(Formula::Cmp(CmpOp::Eq, Term::var(v), t2));
                    }
                }
            }

            // Facts available at the start of the evolution.
            let full_sigma = path.sigma_map();
            let mut init: Vec<Formula> = base_facts.to_vec();
            init.extend(path.conditions.iter().cloned());
            init.push(apply_sigma_formula(&vf.domain, &full_sigma));

            // Cut chain, lenient: failing cuts are dropped on this path.
            let mut proved: Vec<Formula> = Vec::new();
            for (ci, step) in cuts.iter().enumerate() {
                let formula_l = apply_sigma_formula(&step.formula, &lit);
                let cut_tag = format!("{tag}cut {} `{formula_l}`", ci + 1);
                let mut runs: Vec<(String, OracleRun)> = Vec::new();

                if !matches!(step.method, CutMethod::Domain) {
                    let mut a = init.clone();
                    for p in &proved {
                        a.push(apply_sigma_formula(p, &full_sigma));
                    }
                    let goal = apply_sigma_formula(&formula_l, &full_sigma);
                    let origin = format!("{cut_tag} initially");
                    let run = self.oracle(&origin, a, goal);
                    runs.push((origin, run));
                }

                let step_l = CutStep {
                    formula: formula_l.clone(),
                    method: match &step.method {
                        CutMethod::Darboux(g) => {
                            CutMethod::Darboux(apply_sigma_term(g, &lit))
                        }
                        m => m.clone(),
                    },
                };
                let mut premise_assumptions = evo.clone();
                premise_assumptions.extend(proved.iter().cloned());
                match self.cut_premise_obligations(&step_l, &formula_l, &vf, &premise_assumptions)
                {
                    Ok(obls) => {
                        for (sub, extra, goal) in obls {
                            let origin = format!("{cut_tag} {sub}");
                            let mut a = premise_assumptions.clone();
                            a.extend(extra);
                            let run = self.oracle(&origin, a, goal);
                            runs.push((origin, run));
                        }
                    }
                    Err(reason) => {
                        runs.push((
                            format!("{cut_tag} setup"),
                            OracleRun {
                                verdict: VerdictKind::Unknown,
                                detail: Some(reason),
                                witness: None,
                            },
                        ));
                    }
                }

                let ok = runs.iter().all(|(_, r)| r.verdict == VerdictKind::Proved);
                for (origin, run) in runs {
                    let (verdict, detail) = if ok || run.verdict == VerdictKind::Proved {
                        (run.verdict, run.detail)
                    } else {
                        // Dropped: the failure does not decide the theorem.
                        let d = match run.detail {
                            Some(d) => format!("cut dropped here ({}): {d}", run.verdict),
                            None => format!("cut dropped here ({})", run.verdict),
                        };
                        (VerdictKind::Skipped, Some(d))
                    };
                    self.reports.push(ObligationReport {
                        origin,
                        verdict,
                        detail,
                        witness: run.witness.as_ref().map(witness_map),
                    });
                }
                if ok {
                    proved.push(formula_l);
                }
            }

            // The invariants to establish throughout the evolution.
            for q in posts {
                let q_l = apply_sigma_formula(q, &lit);
                let mut a = evo.clone();
                a.extend(proved.iter().cloned());
                self.required(format!("{tag}invariant `{q_l}`"), a, q_l);
            }

            if pi == 0 {
                first_cuts = proved;
            }
        }
        Ok(first_cuts)
    }

    /// Build the differential premise obligations for one cut, split per
    /// min/max case. Branch conditions enter pointwise obligations only;
    /// they are not invariant along the flow, so differential premises must
    /// hold without them.
    fn cut_premise_obligations(
        &mut self,
        step: &CutStep,
        formula: &Formula,
        vf: &VectorField,
        assumptions: &[Formula],
    ) -> Result<Vec<(String, Vec<Formula>, Formula)>, String> {
        if matches!(step.method, CutMethod::Domain) {
            return Ok(vec![(
                "pointwise".to_string(),
                Vec::new(),
                formula.clone(),
            )]);
        }
        let branches = obligation::split_min_max(&[], formula, 4)?;
        let multi = branches.len() > 1;
        let mut out = Vec::new();
        for (bi, br) in branches.iter().enumerate() {
            let sub = if multi {
                format!("derivative (case {})", bi + 1)
            } else {
                "derivative".to_string()
            };
            let (op, l, r) = match &br.goal {
                Formula::Cmp(op, l, r) => (*op, l, r),
                other => return Err(format!("cut formula `{other}` is not a comparison")),
            };
            let (p, kind) = self.normalize_comparison(op, l, r, assumptions, vf)?;
            let goal = match &step.method {
                CutMethod::DiEq => {
                    if kind != CmpKind::Eq {
                        return Err("di_eq requires an equality".to_string());
                    }
                    let lie = lie_derivative(&p, vf);
                    poly_cmp_formula(CmpOp::Eq, &lie, &self.ctx)
                }
                CutMethod::DiIneq => {
                    if kind == CmpKind::Eq {
                        return Err("di_ineq requires an inequality".to_string());
                    }
                    let lie = lie_derivative(&p, vf);
                    poly_cmp_formula(CmpOp::Ge, &lie, &self.ctx)
                }
                CutMethod::Darboux(cof) => {
                    if kind == CmpKind::Eq {
                        return Err("darboux requires an inequality".to_string());
                    }
                    let g = to_polynomial(cof, &mut self.ctx)
                        .map_err(|e| format!("cofactor: {e}"))?;
                    let lie = lie_derivative(&p, vf);
                    let premise = lie.sub(&g.mul(&p));
                    poly_cmp_formula(CmpOp::Ge, &premise, &self.ctx)
                }
                CutMethod::Domain => unreachable!(),
            };
            out.push((sub, Vec::new(), goal));
        }
        Ok(out)
    }

    /// Normalize `l op r` into a cleared polynomial and comparison kind for
    /// invariant reasoning. The denominator must be constant during the
    /// evolution (no ODE variables) and of provable sign.
    fn normalize_comparison(
        &mut self,
        op: CmpOp,
        l: &Term,
        r: &Term,
        assumptions: &[Formula],
        vf: &VectorField,
    ) -> Result<(Polynomial, CmpKind), String> {
        let lp = to_ratpoly(l, &mut self.ctx).map_err(|e| e.to_string())?;
        let rp = to_ratpoly(r, &mut self.ctx).map_err(|e| e.to_string())?;
        let diff = lp.sub(&rp);
        let (num, den) = (diff.num, diff.den);
        let positive = if den.is_one() {
            true
        } else {
            for i in den.var_indices() {
                if vf.is_ode_var(i) {
                    return Err(format!(
                        "denominator `{}` involves an evolving variable",
                        den.to_string_in(&self.ctx)
                    ));
                }
            }
            match decide_sign(&den, assumptions, &mut self.ctx) {
                Some(pos) => pos,
                None => {
                    return Err(format!(
                        "cannot determine the sign of denominator `{}`",
                        den.to_string_in(&self.ctx)
                    ))
                }
            }
        };
        let num = if positive { num } else { num.neg() };
        let (p, kind) = match op {
            CmpOp::Ge => (num, CmpKind::Ge),
            CmpOp::Gt => (num, CmpKind::Gt),
            CmpOp::Le => (num.neg(), CmpKind::Ge),
            CmpOp::Lt => (num.neg(), CmpKind::Gt),
            CmpOp::Eq => (num, CmpKind::Eq),
            CmpOp::Ne => return Err("disequality cut unsupported".to_string()),
        };
        Ok((p, kind))
    }

    // -- diamond stage -------------------------------------------------------

    #[allow(clippy::too_many_arguments)]
    fn diamond_stage(
        &mut self,
        p_facts: &[Formula],
        persistent: &[Formula],
        ode_eqs: &[(String, Term)],
        domain: &Formula,
        cert: &Certificate,
        goal: &Formula,
    ) -> Result<Vec<Formula>, CertifyError> {
        if *domain != Formula::True {
            self.record(
                "diamond: global-solution side condition".to_string(),
                VerdictKind::Unknown,
                Some("differential variants require an unconstrained ODE".to_string()),
            );
            return Ok(Vec::new());
        }
        let proved =
            self.ode_stage("diamond ", p_facts, None, ode_eqs, domain, &cert.cuts, &[])?;

        let mut eqs = Vec::new();
        for (x, rhs) in ode_eqs {
            let xi = self.ctx.intern(x);
            match to_polynomial(rhs, &mut self.ctx) {
                Ok(p) => eqs.push((xi, p)),
                Err(e) => {
                    self.record(
                        "diamond: vector field".to_string(),
                        VerdictKind::Unknown,
                        Some(e.to_string()),
                    );
                    return Ok(proved);
                }
            }
        }
        let vf = VectorField {
            eqs,
            domain: Formula::True,
        };
        if !vf.is_affine() {
            self.record(
                "diamond: global-solution side condition".to_string(),
                VerdictKind::Unknown,
                Some(
                    "right-hand sides are not affine in the ODE variables".to_string(),
                ),
            );
            return Ok(proved);
        }
        self.record(
            "diamond: global-solution side condition (affine system)".to_string(),
            VerdictKind::Proved,
            None,
        );

        let (progress_term, bound_term) = match &cert.variant {
            Some(v) => v.clone(),
            None => {
                self.record(
                    "diamond: variant".to_string(),
                    VerdictKind::Unknown,
                    Some("certificate provides no variant".to_string()),
                );
                return Ok(proved);
            }
        };

        let mut context = persistent.to_vec();
        context.extend(proved.iter().cloned());

        // The goal comparison and the variant's progress must clear to the
        // same polynomial claim `p >= 0` (or `> 0`).
        let (qp, qkind) = match goal {
            Formula::Cmp(op, l, r) => {
                match self.normalize_comparison(*op, l, r, &context, &vf) {
                    Ok(v) => v,
                    Err(e) => {
                        self.record(
                            "diamond: goal".to_string(),
                            VerdictKind::Unknown,
                            Some(e),
                        );
                        return Ok(proved);
                    }
                }
            }
            other => {
                self.record(
                    "diamond: goal".to_string(),
                    VerdictKind::Unknown,
                    Some(format!("goal `{other}` is not a comparison")),
                );
                return Ok(proved);
            }
        };
        if qkind == CmpKind::Eq {
            self.record(
                "diamond: goal".to_string(),
                VerdictKind::Unknown,
                Some("differential variants prove inequalities".to_string()),
            );
            return Ok(proved);
        }

        let rp = match to_ratpoly(&progress_term, &mut self.ctx) {
            Ok(v) => v,
            Err(e) => {
                self.record(
                    "diamond: variant progress".to_string(),
                    VerdictKind::Unknown,
                    Some(e.to_string()),
                );
                return Ok(proved);
            }
        };
        let (pnum, pden) = (rp.num, rp.den);
        let (ptilde, scale) = if pden.is_one() {
            (pnum, Polynomial::one())
        } else {
            if pden.var_indices().iter().any(|&i| vf.is_ode_var(i)) {
                self.record(
                    "diamond: variant progress".to_string(),
                    VerdictKind::Unknown,
                    Some("progress denominator involves an evolving variable".to_string()),
                );
                return Ok(proved);
            }
            match decide_sign(&pden, &context, &mut self.ctx) {
                Some(true) => (pnum, pden),
                Some(false) => (pnum.neg(), pden.neg()),
                None => {
                    self.record(
                        "diamond: variant progress".to_string(),
                        VerdictKind::Unknown,
                        Some("cannot determine the progress denominator's sign".to_string()),
                    );
                    return Ok(proved);
                }
            }
        };
        if ptilde != qp {
            self.record(
                "diamond: variant progress".to_string(),
                VerdictKind::Unknown,
                Some(format!(
                    "variant `{}` does not match the goal `{}`",
                    ptilde.to_string_in(&self.ctx),
                    qp.to_string_in(&self.ctx)
                )),
            );
            return Ok(proved);
        }

        let d_poly = match to_polynomial(&bound_term, &mut self.ctx) {
            Ok(p) => p,
            Err(e) => {
                self.record(
                    "diamond: variant bound".to_string(),
                    VerdictKind::Unknown,
                    Some(e.to_string()),
                );
                return Ok(proved);
            }
        };
        if d_poly.var_indices().iter().any(|&i| vf.is_ode_var(i)) {
            self.record(
                "diamond: variant bound".to_string(),
                VerdictKind::Unknown,
                Some("progress bound mentions ODE variables".to_string()),
            );
            return Ok(proved);
        }

        // d > 0 under the constant assumptions.
        self.required(
            format!("diamond: progress bound `{bound_term}` positive"),
            persistent.to_vec(),
            poly_cmp_formula(CmpOp::Gt, &d_poly, &self.ctx),
        );

        // Outside the goal region, progress is at least d (denominators
        // cleared consistently against the same positive scale).
        let lie = lie_derivative(&ptilde, &vf);
        let premise = lie.sub(&d_poly.mul(&scale));
        let mut a = context.clone();
        a.push(poly_cmp_formula(CmpOp::Lt, &ptilde, &self.ctx));
        self.required(
            "diamond: progress rate premise".to_string(),
            a,
            poly_cmp_formula(CmpOp::Ge, &premise, &self.ctx),
        );
        Ok(proved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpKind {
    Ge,
    Gt,
    Eq,
}

fn path_label(path: &ExecPath) -> String {
    let lits: Vec<String> = path
        .sigma
        .iter()
        .filter(|(_, t)| matches!(t, Term::Lit(_)))
        .map(|(v, t)| format!("{v} := {t}"))
        .collect();
    if lits.is_empty() {
        "[.]".to_string()
    } else {
        format!("[{}]", lits.join(", "))
    }
}

// Ordered variable interning, so canonical polynomial forms are reproducible.
fn collect_term_vars(t: &Term, ctx: &mut VarCtx, seen: &mut HashSet<String>) {
    match t {
        Term::Var(v) => {
            if seen.insert(v.clone()) {
                ctx.intern(v);
            }
        }
        Term::Lit(_) => {}
        Term::Add(l, r)
        | Term::Sub(l, r)
        | Term::Mul(l, r)
        | Term::Div(l, r)
        | Term::Min(l, r)
        | Term::Max(l, r) => {
            collect_term_vars(l, ctx, seen);
            collect_term_vars(r, ctx, seen);
        }
        Term::Neg(x) => collect_term_vars(x, ctx, seen),
        Term::Pow(b, _) => collect_term_vars(b, ctx, seen),
    }
}

fn collect_formula_vars(f: &Formula, ctx: &mut VarCtx, seen: &mut HashSet<String>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Cmp(_, l, r) => {
            collect_term_vars(l, ctx, seen);
            collect_term_vars(r, ctx, seen);
        }
        Formula::Not(x) => collect_formula_vars(x, ctx, seen),
        Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
            collect_formula_vars(l, ctx, seen);
            collect_formula_vars(r, ctx, seen);
        }
        Formula::Box_(p, post) | Formula::Diamond(p, post) => {
            collect_prog_vars(p, ctx, seen);
            collect_formula_vars(post, ctx, seen);
        }
    }
}

fn collect_prog_vars(p: &HybridProgram, ctx: &mut VarCtx, seen: &mut HashSet<String>) {
    match p {
        HybridProgram::Test(f) => collect_formula_vars(f, ctx, seen),
        HybridProgram::Assign(x, e) => {
            if seen.insert(x.clone()) {
                ctx.intern(x);
            }
            collect_term_vars(e, ctx, seen);
        }
        HybridProgram::Ode(eqs, dom) => {
            for (x, _) in eqs {
                if seen.insert(x.clone()) {
                    ctx.intern(x);
                }
            }
            for (_, rhs) in eqs {
                collect_term_vars(rhs, ctx, seen);
            }
            collect_formula_vars(dom, ctx, seen);
        }
        HybridProgram::Choice(l, r) | HybridProgram::Seq(l, r) => {
            collect_prog_vars(l, ctx, seen);
            collect_prog_vars(r, ctx, seen);
        }
        HybridProgram::Loop(b) => collect_prog_vars(b, ctx, seen),
    }
}

// ---------------------------------------------------------------------------
// Theorem shapes
// ---------------------------------------------------------------------------

enum Shape {
    BoxOde {
        ode: (Vec<(String, Term)>, Formula),
        post: Formula,
    },
    BoxSeq {
        ctrl: HybridProgram,
        ode: (Vec<(String, Term)>, Formula),
        post: Formula,
        looped: bool,
    },
    Dia {
        ode: (Vec<(String, Term)>, Formula),
        post: Formula,
        boxed: Option<Formula>,
    },
}

type OdeParts = (Vec<(String, Term)>, Formula);

fn split_discrete_ode(
    prog: &HybridProgram,
) -> Result<(Option<HybridProgram>, OdeParts), CertifyError> {
    let stmts = prog.flatten_seq();
    let (last, prefix) = stmts.split_last().ok_or_else(|| {
        CertifyError::ShapeUnsupported("empty program".to_string())
    })?;
    let ode = match last {
        HybridProgram::Ode(eqs, dom) => (eqs.clone(), dom.clone()),
        _ => {
            return Err(CertifyError::ShapeUnsupported(
                "program does not end with an ODE".to_string(),
            ))
        }
    };
    let ctrl = if prefix.is_empty() {
        None
    } else {
        let mut it = prefix.iter();
        let first = (*it.next().unwrap()).clone();
        Some(it.fold(first, |acc, s| HybridProgram::seq(acc, (*s).clone())))
    };
    Ok((ctrl, ode))
}

fn classify(theorem: &Formula) -> Result<(Vec<Formula>, Shape), CertifyError> {
    let (p, modal) = match theorem {
        Formula::Implies(p, q) => (p.conjuncts().into_iter().cloned().collect(), q.as_ref()),
        other => (Vec::new(), other),
    };
    let shape = match modal {
        Formula::Box_(prog, post) => match prog.as_ref() {
            HybridProgram::Loop(body) => {
                let (ctrl, ode) = split_discrete_ode(body)?;
                let ctrl = ctrl.unwrap_or(HybridProgram::Test(Formula::True));
                Shape::BoxSeq {
                    ctrl,
                    ode,
                    post: (**post).clone(),
                    looped: true,
                }
            }
            _ => {
                let (ctrl, ode) = split_discrete_ode(prog)?;
                match ctrl {
                    None => Shape::BoxOde {
                        ode,
                        post: (**post).clone(),
                    },
                    Some(c) => Shape::BoxSeq {
                        ctrl: c,
                        ode,
                        post: (**post).clone(),
                        looped: false,
                    },
                }
            }
        },
        Formula::Diamond(prog, post) => {
            let (ctrl, ode) = split_discrete_ode(prog)?;
            if ctrl.is_some() {
                return Err(CertifyError::ShapeUnsupported(
                    "diamond over a composite program".to_string(),
                ));
            }
            match post.as_ref() {
                Formula::Box_(prog2, inner) => {
                    let (ctrl2, ode2) = split_discrete_ode(prog2)?;
                    if ctrl2.is_some() || ode2 != ode {
                        return Err(CertifyError::ShapeUnsupported(
                            "diamond-box over differing systems".to_string(),
                        ));
                    }
                    Shape::Dia {
                        ode,
                        post: (**inner).clone(),
                        boxed: Some((**inner).clone()),
                    }
                }
                other => Shape::Dia {
                    ode,
                    post: other.clone(),
                    boxed: None,
                },
            }
        }
        other => {
            return Err(CertifyError::ShapeUnsupported(format!(
                "expected a box or diamond conclusion, found `{other}`"
            )))
        }
    };
    Ok((p, shape))
}

/// Check a certificate against a model's theorem.
pub fn check_theorem(
    model: &Model,
    cert: &Certificate,
    seed: u64,
) -> Result<TheoremReport, CertifyError> {
    if cert.model != model.name {
        return Err(CertifyError::ModelMismatch {
            expected: cert.model.clone(),
            got: model.name.clone(),
        });
    }
    let (p_facts, shape) = classify(&model.theorem)?;
    let mut ck = Checker::new(model, cert, seed);

    match shape {
        Shape::BoxOde { ode, post } => {
            let posts: Vec<Formula> = post.conjuncts().into_iter().cloned().collect();
            ck.ode_stage("", &p_facts, None, &ode.0, &ode.1, &cert.cuts, &posts)?;
        }
        Shape::BoxSeq {
            ctrl,
            ode,
            post,
            looped,
        } => {
            if looped {
                let j = match &cert.loop_invariant {
                    Some(j) => j.clone(),
                    None => {
                        ck.record(
                            "loop invariant".to_string(),
                            VerdictKind::Unknown,
                            Some("certificate provides no loop invariant".to_string()),
                        );
                        return Ok(ck.finish());
                    }
                };
                let j_conjs: Vec<Formula> =
                    j.conjuncts().into_iter().cloned().collect();
                let mut body_bound = ctrl.bound_vars();
                for (x, _) in &ode.0 {
                    body_bound.insert(x.clone());
                }
                let persistent: Vec<Formula> = p_facts
                    .iter()
                    .filter(|f| f.vars().is_disjoint(&body_bound))
                    .cloned()
                    .collect();

                for jc in &j_conjs {
                    ck.required(
                        format!("init: precondition establishes `{jc}`"),
                        p_facts.clone(),
                        jc.clone(),
                    );
                }
                let mut base = j_conjs.clone();
                base.extend(persistent.iter().cloned());
                ck.ode_stage(
                    "step ",
                    &base,
                    Some(&ctrl),
                    &ode.0,
                    &ode.1,
                    &cert.cuts,
                    &j_conjs,
                )?;
                for qc in post.conjuncts() {
                    let mut a = j_conjs.clone();
                    a.extend(persistent.iter().cloned());
                    ck.required(
                        format!("post: invariant implies `{qc}`"),
                        a,
                        qc.clone(),
                    );
                }
            } else {
                let posts: Vec<Formula> =
                    post.conjuncts().into_iter().cloned().collect();
                ck.ode_stage(
                    "",
                    &p_facts,
                    Some(&ctrl),
                    &ode.0,
                    &ode.1,
                    &cert.cuts,
                    &posts,
                )?;
            }
        }
        Shape::Dia { ode, post, boxed } => {
            let mut ode_bound: BTreeSet<String> = BTreeSet::new();
            for (x, _) in &ode.0 {
                ode_bound.insert(x.clone());
            }
            let persistent: Vec<Formula> = p_facts
                .iter()
                .filter(|f| f.vars().is_disjoint(&ode_bound))
                .cloned()
                .collect();
            let proved =
                ck.diamond_stage(&p_facts, &persistent, &ode.0, &ode.1, cert, &post)?;
            if let Some(q) = boxed {
                // Hand off: constants persist, proved invariants persist,
                // and the diamond delivered the goal region.
                let mut base = persistent.clone();
                base.extend(proved.iter().cloned());
                base.push(q.clone());
                let posts: Vec<Formula> = q.conjuncts().into_iter().cloned().collect();
                ck.ode_stage("box ", &base, None, &ode.0, &ode.1, &cert.cuts, &posts)?;
            }
        }
    }
    Ok(ck.finish())
}

// ---------------------------------------------------------------------------
// Standalone checker operations
// ---------------------------------------------------------------------------

fn outcome_of(verdict: OracleVerdict, obligation: String) -> CheckOutcome {
    match verdict {
        OracleVerdict::Proved => CheckOutcome::Proved,
        OracleVerdict::Refuted(w) => CheckOutcome::Refuted {
            witness: w,
            obligation,
        },
        OracleVerdict::Unknown(r) => CheckOutcome::Unknown {
            reason: r,
            obligation,
        },
    }
}

/// Differential invariant for an equation: `p = 0` stays true along the flow
/// iff its Lie derivative vanishes on the constrained region.
pub fn check_di_eq(
    p: &Polynomial,
    vf: &VectorField,
    assumptions: &[Formula],
    ctx: &mut VarCtx,
    seed: u64,
) -> CheckOutcome {
    let lie = lie_derivative(p, vf);
    let goal = poly_cmp_formula(CmpOp::Eq, &lie, ctx);
    let mut a: Vec<Formula> = vf.domain.conjuncts().into_iter().cloned().collect();
    a.extend(assumptions.iter().cloned());
    let ob = Obligation {
        origin: "di_eq premise".to_string(),
        assumptions: a,
        goal: goal.clone(),
    };
    outcome_of(arith_oracle(&ob, ctx, seed), goal.to_string())
}

/// Darboux (in)equality premise: `lie(p) - g*p >= 0` on the constrained
/// region certifies `p >= 0` (or `p > 0`) as invariant.
pub fn check_darboux(
    p: &Polynomial,
    g: &Polynomial,
    _strict: bool,
    vf: &VectorField,
    assumptions: &[Formula],
    ctx: &mut VarCtx,
    seed: u64,
) -> CheckOutcome {
    let premise = lie_derivative(p, vf).sub(&g.mul(p));
    let goal = poly_cmp_formula(CmpOp::Ge, &premise, ctx);
    let mut a: Vec<Formula> = vf.domain.conjuncts().into_iter().cloned().collect();
    a.extend(assumptions.iter().cloned());
    let ob = Obligation {
        origin: "darboux premise".to_string(),
        assumptions: a,
        goal: goal.clone(),
    };
    outcome_of(arith_oracle(&ob, ctx, seed), goal.to_string())
}

/// Differential variant premise: outside the goal region the progress rate
/// is at least `d`, and `d` is a positive constant of the motion.
pub fn check_dv(
    progress: &Polynomial,
    d: &Term,
    vf: &VectorField,
    assumptions: &[Formula],
    ctx: &mut VarCtx,
    seed: u64,
) -> Result<CheckOutcome, CertifyError> {
    if vf.domain != Formula::True {
        return Err(CertifyError::SideConditionUnsupported(
            "differential variants require an unconstrained ODE".to_string(),
        ));
    }
    if !vf.is_affine() {
        return Err(CertifyError::SideConditionUnsupported(
            "cannot establish global solutions: right-hand sides are not affine".to_string(),
        ));
    }
    let d_poly = {
        let mut scratch = ctx.clone();
        let p = to_polynomial(d, &mut scratch)
            .map_err(|e| CertifyError::SideConditionUnsupported(e.to_string()))?;
        *ctx = scratch;
        p
    };
    if d_poly.var_indices().iter().any(|&i| vf.is_ode_var(i)) {
        return Err(CertifyError::SideConditionUnsupported(
            "progress bound mentions ODE variables".to_string(),
        ));
    }
    let pos_goal = poly_cmp_formula(CmpOp::Gt, &d_poly, ctx);
    let ob = Obligation {
        origin: "dv bound".to_string(),
        assumptions: assumptions.to_vec(),
        goal: pos_goal.clone(),
    };
    match arith_oracle(&ob, ctx, mix(seed, 0)) {
        OracleVerdict::Proved => {}
        other => return Ok(outcome_of(other, pos_goal.to_string())),
    }
    let premise = lie_derivative(progress, vf).sub(&d_poly);
    let goal = poly_cmp_formula(CmpOp::Ge, &premise, ctx);
    let mut a = assumptions.to_vec();
    a.push(poly_cmp_formula(CmpOp::Lt, progress, ctx));
    let ob = Obligation {
        origin: "dv premise".to_string(),
        assumptions: a,
        goal: goal.clone(),
    };
    Ok(outcome_of(arith_oracle(&ob, ctx, mix(seed, 1)), goal.to_string()))
}

/// Strict cut chain: every step must prove; the first non-proved step is
/// reported with its index. Initial conditions are taken from the base
/// assumptions and the evolution domain; differential premises see only
/// facts that survive the evolution (domain, earlier cuts, parameter facts).
pub fn check_cut_chain(
    cuts: &[CutStep],
    vf: &VectorField,
    base_assumptions: &[Formula],
    ctx: &mut VarCtx,
    seed: u64,
) -> CheckOutcome {
    let ode_vars: BTreeSet<String> = vf
        .eqs
        .iter()
        .map(|(i, _)| ctx.name(*i).to_string())
        .collect();
    let persistent: Vec<Formula> = base_assumptions
        .iter()
        .filter(|f| f.vars().is_disjoint(&ode_vars))
        .cloned()
        .collect();
    let domain_conjs: Vec<Formula> = vf.domain.conjuncts().into_iter().cloned().collect();

    let mut proved: Vec<Formula> = Vec::new();
    for (ci, step) in cuts.iter().enumerate() {
        let tag = format!("cut {} `{}`", ci + 1, step.formula);

        if !matches!(step.method, CutMethod::Domain) {
            let mut init = base_assumptions.to_vec();
            init.extend(domain_conjs.iter().cloned());
            init.extend(proved.iter().cloned());
            let ob = Obligation {
                origin: format!("{tag} initially"),
                assumptions: init,
                goal: step.formula.clone(),
            };
            match arith_oracle(&ob, ctx, mix(seed, (ci * 2) as u64)) {
                OracleVerdict::Proved => {}
                other => return outcome_of(other, format!("{tag} initially")),
            }
        }

        let mut evo = domain_conjs.clone();
        evo.extend(persistent.iter().cloned());
        evo.extend(proved.iter().cloned());

        let outcome = check_single_cut_premise(step, vf, &evo, ctx, mix(seed, (ci * 2 + 1) as u64));
        match outcome {
            CheckOutcome::Proved => proved.push(step.formula.clone()),
            other => {
                return match other {
                    CheckOutcome::Refuted { witness, .. } => CheckOutcome::Refuted {
                        witness,
                        obligation: format!("{tag} derivative"),
                    },
                    CheckOutcome::Unknown { reason, .. } => CheckOutcome::Unknown {
                        reason,
                        obligation: format!("{tag} derivative"),
                    },
                    CheckOutcome::Proved => unreachable!(),
                }
            }
        }
    }
    CheckOutcome::Proved
}

fn check_single_cut_premise(
    step: &CutStep,
    vf: &VectorField,
    evo: &[Formula],
    ctx: &mut VarCtx,
    seed: u64,
) -> CheckOutcome {
    if matches!(step.method, CutMethod::Domain) {
        let ob = Obligation {
            origin: "domain cut".to_string(),
            assumptions: evo.to_vec(),
            goal: step.formula.clone(),
        };
        return outcome_of(arith_oracle(&ob, ctx, seed), step.formula.to_string());
    }
    let branches = match obligation::split_min_max(&[], &step.formula, 4) {
        Ok(b) => b,
        Err(e) => {
            return CheckOutcome::Unknown {
                reason: e,
                obligation: step.formula.to_string(),
            }
        }
    };
    for (bi, br) in branches.iter().enumerate() {
        let (op, l, r) = match &br.goal {
            Formula::Cmp(op, l, r) => (*op, l, r),
            other => {
                return CheckOutcome::Unknown {
                    reason: format!("cut formula `{other}` is not a comparison"),
                    obligation: step.formula.to_string(),
                }
            }
        };
        let lp = match to_ratpoly(l, ctx).and_then(|lp| Ok(lp.sub(&to_ratpoly(r, ctx)?))) {
            Ok(v) => v,
            Err(e) => {
                return CheckOutcome::Unknown {
                    reason: e.to_string(),
                    obligation: step.formula.to_string(),
                }
            }
        };
        let (num, den) = (lp.num, lp.den);
        let positive = if den.is_one() {
            true
        } else {
            match decide_sign(&den, evo, ctx) {
                Some(s) => s,
                None => {
                    return CheckOutcome::Unknown {
                        reason: "cannot clear denominator".to_string(),
                        obligation: step.formula.to_string(),
                    }
                }
            }
        };
        let num = if positive { num } else { num.neg() };
        let (p, eq) = match op {
            CmpOp::Ge | CmpOp::Gt => (num, false),
            CmpOp::Le | CmpOp::Lt => (num.neg(), false),
            CmpOp::Eq => (num, true),
            CmpOp::Ne => {
                return CheckOutcome::Unknown {
                    reason: "disequality cut unsupported".to_string(),
                    obligation: step.formula.to_string(),
                }
            }
        };
        let outcome = match (&step.method, eq) {
            (CutMethod::DiEq, true) => check_di_eq(&p, vf, evo, ctx, mix(seed, bi as u64)),
            (CutMethod::DiEq, false) => CheckOutcome::Unknown {
                reason: "di_eq requires an equality".to_string(),
                obligation: step.formula.to_string(),
            },
            (CutMethod::DiIneq, false) => {
                check_darboux(&p, &Polynomial::zero(), false, vf, evo, ctx, mix(seed, bi as u64))
            }
            (CutMethod::Darboux(cof), false) => {
                let g = match to_polynomial(cof, ctx) {
                    Ok(g) => g,
                    Err(e) => {
                        return CheckOutcome::Unknown {
                            reason: e.to_string(),
                            obligation: step.formula.to_string(),
                        }
                    }
                };
                check_darboux(&p, &g, op == CmpOp::Gt, vf, evo, ctx, mix(seed, bi as u64))
            }
            (_, true) => CheckOutcome::Unknown {
                reason: "inequality method applied to an equality".to_string(),
                obligation: step.formula.to_string(),
            },
            (CutMethod::Domain, _) => unreachable!(),
        };
        if !outcome.is_proved() {
            return outcome;
        }
    }
    CheckOutcome::Proved
}
