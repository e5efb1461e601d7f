//! Direct exercises of the standalone checker operations and their edge
//! cases: differential invariants, Darboux premises, differential variants,
//! strict cut chains, and the subsumption/monotonicity properties.

use dlcheck_core::ast::{Formula, Term};
use dlcheck_core::certify::oracle::decide_sign;
use dlcheck_core::certify::{
    check_cut_chain, check_darboux, check_di_eq, check_dv, check_theorem, CheckOutcome,
    VerdictKind,
};
use dlcheck_core::parser::{
    bind_certificate, parse_certificate, parse_formula_str, parse_model, parse_term_str,
    CutMethod, CutStep,
};
use dlcheck_core::poly::{lie_derivative, to_polynomial, Polynomial, VarCtx, VectorField};
use std::path::PathBuf;

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus")
}

fn load_model(name: &str) -> dlcheck_core::parser::Model {
    parse_model(
        &std::fs::read_to_string(corpus_root().join(name).join("model.dlm")).unwrap(),
    )
    .unwrap()
}

fn reversible_field(ctx: &mut VarCtx) -> VectorField {
    let a = ctx.intern("A");
    let b = ctx.intern("B");
    let a_rhs = to_polynomial(&parse_term_str("-A*kf + B*kr").unwrap(), ctx).unwrap();
    let b_rhs = to_polynomial(&parse_term_str("A*kf - B*kr").unwrap(), ctx).unwrap();
    VectorField {
        eqs: vec![(a, a_rhs), (b, b_rhs)],
        domain: Formula::True,
    }
}

fn poly(s: &str, ctx: &mut VarCtx) -> Polynomial {
    to_polynomial(&parse_term_str(s).unwrap(), ctx).unwrap()
}

#[test]
fn mass_conservation_is_a_differential_invariant() {
    let mut ctx = VarCtx::new();
    let vf = reversible_field(&mut ctx);
    let p = poly("A + B - A0", &mut ctx);
    assert!(check_di_eq(&p, &vf, &[], &mut ctx, 0).is_proved());
}

#[test]
fn non_invariant_equation_refuted_with_checkable_witness() {
    let mut ctx = VarCtx::new();
    let vf = reversible_field(&mut ctx);
    let p = poly("A - A0", &mut ctx);
    match check_di_eq(&p, &vf, &[], &mut ctx, 0) {
        CheckOutcome::Refuted { witness, .. } => {
            // The witness must make the Lie derivative exactly nonzero.
            let lie = lie_derivative(&p, &vf);
            let mut vals = vec![dlcheck_core::ast::Rat::from_integer(0.into()); ctx.len()];
            for (name, v) in &witness.point {
                if let Some(i) = ctx.get(name) {
                    vals[i] = v.clone();
                }
            }
            let value = lie.eval_exact(&vals);
            assert!(!num_traits::Zero::is_zero(&value), "witness not refuting");
        }
        other => panic!("expected refutation, got {other:?}"),
    }
}

#[test]
fn darboux_discharges_the_decreasing_reactant() {
    let mut ctx = VarCtx::new();
    let vf = reversible_field(&mut ctx);
    let p = poly("A", &mut ctx);
    let g = poly("-(kf + kr)", &mut ctx);
    let assumptions: Vec<Formula> = ["A >= 0", "B >= 0", "kf > 0", "kr > 0"]
        .iter()
        .map(|s| parse_formula_str(s).unwrap())
        .collect();
    assert!(check_darboux(&p, &g, false, &vf, &assumptions, &mut ctx, 0).is_proved());
}

#[test]
fn plain_di_fails_where_darboux_is_needed() {
    // p = A with A' = -A and no sign context: the premise -A >= 0 is
    // refuted, minimized to the unit point.
    let mut ctx = VarCtx::new();
    let a = ctx.intern("A");
    let vf = VectorField {
        eqs: vec![(a, poly("-A", &mut ctx))],
        domain: Formula::True,
    };
    let p = poly("A", &mut ctx);
    match check_darboux(&p, &Polynomial::zero(), false, &vf, &[], &mut ctx, 0) {
        CheckOutcome::Refuted { witness, .. } => {
            assert_eq!(witness.point.len(), 1);
            assert_eq!(witness.point[0].0, "A");
            assert_eq!(
                witness.point[0].1,
                dlcheck_core::ast::Rat::from_integer(1.into())
            );
        }
        other => panic!("expected refutation, got {other:?}"),
    }
}

#[test]
fn darboux_with_zero_cofactor_subsumes_di_eq() {
    // Any equality proved by check_di_eq holds as two Darboux inequalities
    // with cofactor zero.
    let mut ctx = VarCtx::new();
    let vf = reversible_field(&mut ctx);
    for s in ["A + B - A0", "2*A + 2*B"] {
        let p = poly(s, &mut ctx);
        assert!(check_di_eq(&p, &vf, &[], &mut ctx, 0).is_proved());
        assert!(
            check_darboux(&p, &Polynomial::zero(), false, &vf, &[], &mut ctx, 0).is_proved()
        );
        assert!(check_darboux(
            &p.neg(),
            &Polynomial::zero(),
            false,
            &vf,
            &[],
            &mut ctx,
            0
        )
        .is_proved());
    }
}

#[test]
fn clock_makes_progress() {
    let mut ctx = VarCtx::new();
    let t = ctx.intern("t");
    let vf = VectorField {
        eqs: vec![(t, Polynomial::one())],
        domain: Formula::True,
    };
    let progress = poly("t - 1", &mut ctx);
    let outcome = check_dv(&progress, &Term::int(1), &vf, &[], &mut ctx, 0).unwrap();
    assert!(outcome.is_proved());
}

#[test]
fn stationary_system_never_progresses() {
    let mut ctx = VarCtx::new();
    let a = ctx.intern("A");
    let vf = VectorField {
        eqs: vec![(a, Polynomial::zero())],
        domain: Formula::True,
    };
    let progress = poly("-A", &mut ctx);
    match check_dv(&progress, &Term::int(1), &vf, &[], &mut ctx, 0).unwrap() {
        CheckOutcome::Refuted { .. } => {}
        other => panic!("expected refutation, got {other:?}"),
    }
}

#[test]
fn dv_side_conditions() {
    let mut ctx = VarCtx::new();
    let a = ctx.intern("A");
    // Quadratic right-hand side: no global-solution argument.
    let vf = VectorField {
        eqs: vec![(a, poly("A^2", &mut ctx))],
        domain: Formula::True,
    };
    let progress = poly("A", &mut ctx);
    match check_dv(&progress, &Term::int(1), &vf, &[], &mut ctx, 0) {
        Err(dlcheck_core::certify::CertifyError::SideConditionUnsupported(_)) => {}
        other => panic!("expected side-condition error, got {other:?}"),
    }
    // Constrained ODE: differential variants do not apply.
    let vf = VectorField {
        eqs: vec![(a, Polynomial::one())],
        domain: parse_formula_str("A <= 1").unwrap(),
    };
    match check_dv(&progress, &Term::int(1), &vf, &[], &mut ctx, 0) {
        Err(dlcheck_core::certify::CertifyError::SideConditionUnsupported(_)) => {}
        other => panic!("expected side-condition error, got {other:?}"),
    }
    // A bound that is not constant along the flow is rejected.
    let vf = VectorField {
        eqs: vec![(a, Polynomial::one())],
        domain: Formula::True,
    };
    match check_dv(&progress, &Term::var("A"), &vf, &[], &mut ctx, 0) {
        Err(dlcheck_core::certify::CertifyError::SideConditionUnsupported(_)) => {}
        other => panic!("expected side-condition error, got {other:?}"),
    }
}

#[test]
fn strict_chain_reports_the_failing_step() {
    let mut ctx = VarCtx::new();
    let a = ctx.intern("A");
    let vf = VectorField {
        eqs: vec![(a, poly("-A", &mut ctx))],
        domain: Formula::True,
    };
    let cuts = vec![
        CutStep {
            formula: parse_formula_str("A >= 0").unwrap(),
            method: CutMethod::DiIneq,
        },
    ];
    let base = vec![parse_formula_str("A = 1").unwrap()];
    match check_cut_chain(&cuts, &vf, &base, &mut ctx, 0) {
        CheckOutcome::Refuted { obligation, .. } => {
            assert!(obligation.contains("cut 1"), "{obligation}");
        }
        other => panic!("expected refutation, got {other:?}"),
    }
}

#[test]
fn strict_chain_accumulates_assumptions_in_order() {
    let mut ctx = VarCtx::new();
    let vf = reversible_field(&mut ctx);
    let model = load_model("rev_basic");
    let base: Vec<Formula> = match &model.theorem {
        Formula::Implies(p, _) => p.conjuncts().into_iter().cloned().collect(),
        _ => unreachable!(),
    };
    let cuts = vec![
        CutStep {
            formula: parse_formula_str("A + B = A0").unwrap(),
            method: CutMethod::DiEq,
        },
        CutStep {
            formula: parse_formula_str("A > 0").unwrap(),
            method: CutMethod::Darboux(parse_term_str("-(kf + kr)").unwrap()),
        },
        CutStep {
            formula: parse_formula_str("B >= 0").unwrap(),
            method: CutMethod::Darboux(parse_term_str("-kr").unwrap()),
        },
    ];
    assert!(check_cut_chain(&cuts, &vf, &base, &mut ctx, 0).is_proved());

    // Reversed, the positivity cut loses its conservation-of-mass
    // prerequisite and the chain stops at step 1.
    let reversed: Vec<CutStep> = cuts.iter().rev().cloned().collect();
    match check_cut_chain(&reversed, &vf, &base, &mut ctx, 0) {
        CheckOutcome::Proved => panic!("reversed chain should not prove"),
        CheckOutcome::Refuted { obligation, .. }
        | CheckOutcome::Unknown { obligation, .. } => {
            assert!(obligation.contains("cut 1"), "{obligation}");
        }
    }
}

#[test]
fn adding_a_proved_cut_preserves_later_verdicts() {
    // Cut accumulation is monotone: duplicating an established cut in front
    // never turns a later proved step into a failure.
    let model = load_model("rev_avoid");
    let raw = parse_certificate(
        &std::fs::read_to_string(corpus_root().join("rev_avoid").join("cert.cert")).unwrap(),
    )
    .unwrap();
    let cert = bind_certificate(&raw, &model).unwrap();
    let baseline = check_theorem(&model, &cert, 0).unwrap();
    assert_eq!(baseline.verdict, VerdictKind::Proved);

    let mut padded = cert.clone();
    padded.cuts.insert(
        0,
        CutStep {
            formula: parse_formula_str("A + B = A0").unwrap(),
            method: CutMethod::DiEq,
        },
    );
    let report = check_theorem(&model, &padded, 0).unwrap();
    assert_eq!(report.verdict, VerdictKind::Proved);
}

#[test]
fn weakened_dynexp_invariant_fails_at_the_step() {
    let model = load_model("dynexp");
    let raw = parse_certificate(
        &std::fs::read_to_string(
            corpus_root()
                .join("dynexp")
                .join("mutants/invariant_weakened/cert.cert"),
        )
        .unwrap(),
    )
    .unwrap();
    let cert = bind_certificate(&raw, &model).unwrap();
    let report = check_theorem(&model, &cert, 0).unwrap();
    assert_ne!(report.verdict, VerdictKind::Proved);
    let failure = report.failure.unwrap();
    assert!(failure.contains("step"), "{failure}");
}

#[test]
fn conserve_rate_lie_derivative_matches_the_expanded_rate() {
    // Along the constant-rate irreversible system, the temperature's Lie
    // derivative is the expanded rate times kT.
    let model = load_model("conserve");
    let (eqs, _) = model.unique_ode().unwrap();
    let mut ctx = VarCtx::new();
    let idx: Vec<(usize, Polynomial)> = eqs
        .iter()
        .map(|(x, rhs)| {
            let i = ctx.intern(x);
            (i, to_polynomial(rhs, &mut ctx).unwrap())
        })
        .collect();
    let vf = VectorField {
        eqs: idx,
        domain: Formula::True,
    };
    let temp = poly("T", &mut ctx);
    let lie = lie_derivative(&temp, &vf);
    let expected = poly("(hT*A0*B0*kr1 + kr2)*kT", &mut ctx);
    assert_eq!(lie, expected);
}

#[test]
fn denominator_sign_is_decided_from_assumptions() {
    let mut ctx = VarCtx::new();
    let den = poly("kf + kr", &mut ctx);
    let pos: Vec<Formula> = ["kf > 0", "kr > 0"]
        .iter()
        .map(|s| parse_formula_str(s).unwrap())
        .collect();
    assert_eq!(decide_sign(&den, &pos, &mut ctx), Some(true));
    let neg: Vec<Formula> = ["kf < 0", "kr < 0"]
        .iter()
        .map(|s| parse_formula_str(s).unwrap())
        .collect();
    assert_eq!(decide_sign(&den, &neg, &mut ctx), Some(false));
    assert_eq!(decide_sign(&den, &[], &mut ctx), None);
}
