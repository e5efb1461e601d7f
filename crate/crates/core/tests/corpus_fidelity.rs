//! Fidelity of the bundled corpus: theorem statements match the source
//! figures under the ASCII renaming table (see corpus/README.md), and
//! certificate contents carry the proof data stated there.

use dlcheck_core::corpus::load_corpus;
use dlcheck_core::parser::{parse_formula_str, parse_term_str, CutMethod};
use dlcheck_core::poly::{to_polynomial, VarCtx};
use std::path::PathBuf;

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus")
}

fn theorem_line(name: &str) -> String {
    let text =
        std::fs::read_to_string(corpus_root().join(name).join("model.dlm")).unwrap();
    text.lines()
        .find(|l| l.trim_start().starts_with("theorem "))
        .unwrap()
        .trim()
        .trim_start_matches("theorem ")
        .to_string()
}

#[test]
fn theorem_statements_match_the_figures() {
    let expected = [
        ("conserve", "const & E0 = E -> [ode] E0 = E"),
        ("bangbang", "const & T <= Tmax -> [{ctrl; ode}*] T <= Tmax"),
        (
            "fixedexp",
            "const & T > 0 & T <= Tmax & A = A0 & B = B0 -> [{ctrl; ode}*] T <= Tmax",
        ),
        (
            "dynexp",
            "const & T > 0 & T <= Tmax & A = A0 & B = B0 -> [{ctrl; ode}*] T <= Tmax",
        ),
        ("rev_basic", "const & A = A0 & B = 0 -> [ode] A <= A0"),
        ("rev_avoid", "const & A = A0 & B = 0 -> [ode] A != Aeq"),
        (
            "rev_approach",
            "const & A = A0 & B = 0 -> <ode> A <= Aeq + eps",
        ),
        (
            "rev_persist",
            "const & A = A0 & B = 0 -> <ode> [ode] A <= Aeq + eps",
        ),
    ];
    for (name, line) in expected {
        assert_eq!(theorem_line(name), line, "{name}");
    }
}

#[test]
fn ode_systems_match_the_figures() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    let rev = corpus.iter().find(|e| e.name == "rev_basic").unwrap();
    let (eqs, dom) = rev.model.unique_ode().unwrap();
    assert_eq!(dom, dlcheck_core::ast::Formula::True);
    assert_eq!(eqs.len(), 2);
    assert_eq!(eqs[0].0, "A");
    assert_eq!(eqs[0].1, parse_term_str("-A*kf + B*kr").unwrap());
    assert_eq!(eqs[1].0, "B");
    assert_eq!(eqs[1].1, parse_term_str("A*kf - B*kr").unwrap());
}

fn cut_polys(
    cert: &dlcheck_core::parser::Certificate,
    ctx: &mut VarCtx,
) -> Vec<(dlcheck_core::poly::Polynomial, Option<dlcheck_core::poly::Polynomial>)> {
    cert.cuts
        .iter()
        .map(|c| {
            let (l, r) = match &c.formula {
                dlcheck_core::ast::Formula::Cmp(_, l, r) => (l, r),
                other => panic!("non-comparison cut {other}"),
            };
            let lp = dlcheck_core::poly::to_ratpoly(l, ctx).unwrap();
            let rp = dlcheck_core::poly::to_ratpoly(r, ctx).unwrap();
            let diff = lp.sub(&rp);
            let g = match &c.method {
                CutMethod::Darboux(cof) => Some(to_polynomial(cof, ctx).unwrap()),
                _ => None,
            };
            (diff.num, g)
        })
        .collect()
}

#[test]
fn certificate_contents_match_the_proof_data() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    let entry = |n: &str| corpus.iter().find(|e| e.name == n).unwrap();
    let mut ctx = VarCtx::new();

    // Bang-bang: the single margin cut.
    let bb = entry("bangbang");
    assert_eq!(bb.certificate.cuts.len(), 1);
    assert_eq!(
        bb.certificate.cuts[0].formula,
        parse_formula_str("Tmax - T > (eps - t)*(hT*A0*B0*kr1 + kr2)*kT").unwrap()
    );
    assert_eq!(
        bb.certificate.loop_invariant,
        Some(parse_formula_str("T <= Tmax").unwrap())
    );

    // Fixed exponent: t >= 0, the rate-sign cut, and the Taylor bound with
    // cofactor A0*B0*kT.
    let fx = entry("fixedexp");
    let polys = cut_polys(&fx.certificate, &mut ctx);
    let want_t = to_polynomial(&parse_term_str("t").unwrap(), &mut ctx).unwrap();
    let want_rate =
        to_polynomial(&parse_term_str("A0*B0*T*kT").unwrap(), &mut ctx).unwrap();
    assert!(polys.iter().any(|(p, _)| *p == want_t));
    assert!(polys.iter().any(|(p, _)| *p == want_rate));
    let want_cof = to_polynomial(&parse_term_str("A0*B0*kT").unwrap(), &mut ctx).unwrap();
    let want_taylor = to_polynomial(
        &parse_term_str("(1 + 2*t*kT*A0*B0)*Told - T").unwrap(),
        &mut ctx,
    )
    .unwrap();
    assert!(polys
        .iter()
        .any(|(p, g)| *p == want_taylor && g.as_ref() == Some(&want_cof)));

    // Dynamic exponent: the concentration cuts and the documented loop
    // invariant conjuncts are all present.
    let dx = entry("dynexp");
    let j = dx.certificate.loop_invariant.clone().unwrap();
    let j_conjs: Vec<String> = j.conjuncts().iter().map(|c| c.to_string()).collect();
    for want in ["0 <= T", "T <= Tmax", "A <= A0", "B <= B0"] {
        assert!(j_conjs.iter().any(|c| c == want), "missing `{want}` in {j_conjs:?}");
    }
    for want in ["A <= Amid", "Amid <= A0", "B <= Bmid", "Bmid <= B0"] {
        let f = parse_formula_str(want).unwrap();
        assert!(
            dx.certificate.cuts.iter().any(|c| c.formula == f),
            "missing concentration cut `{want}`"
        );
    }
    // The Taylor cut's cofactor is the period-start instantiation of the
    // concentration-product cofactor.
    let dyn_cof =
        to_polynomial(&parse_term_str("Amid*Bmid*kT").unwrap(), &mut ctx).unwrap();
    let dyn_polys = cut_polys(&dx.certificate, &mut ctx);
    assert!(dyn_polys.iter().any(|(_, g)| g.as_ref() == Some(&dyn_cof)));

    // Equilibrium avoidance: displacement, mass, and sign cuts with the
    // decay cofactor -(kf+kr).
    let av = entry("rev_avoid");
    let av_polys = cut_polys(&av.certificate, &mut ctx);
    let mass = to_polynomial(&parse_term_str("A + B - A0").unwrap(), &mut ctx).unwrap();
    assert!(av_polys.iter().any(|(p, _)| *p == mass));
    // A - Aeq clears against kf + kr to A*(kf+kr) - A0*kr.
    let displacement =
        to_polynomial(&parse_term_str("A*(kf + kr) - A0*kr").unwrap(), &mut ctx).unwrap();
    let decay =
        to_polynomial(&parse_term_str("-(kf + kr)").unwrap(), &mut ctx).unwrap();
    assert!(av_polys
        .iter()
        .any(|(p, g)| *p == displacement && g.as_ref() == Some(&decay)));

    // Approach: the variant bound is eps*(kf + kr).
    let ap = entry("rev_approach");
    let (progress, bound) = ap.certificate.variant.clone().unwrap();
    assert_eq!(progress, parse_term_str("A0*(kr/(kf + kr)) + eps - A").unwrap());
    assert_eq!(bound, parse_term_str("eps*(kf + kr)").unwrap());
}
