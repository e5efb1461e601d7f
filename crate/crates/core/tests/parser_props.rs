//! Grammar properties: pretty-printed trees re-parse to structurally equal
//! trees, and the if/while sugar desugars exactly.

use dlcheck_core::ast::{desugar_if, desugar_while, CmpOp, Formula, HybridProgram, Rat, Term};
use dlcheck_core::parser::{parse_formula_str, parse_program_str, parse_term_str};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("z".to_string()),
        Just("kA".to_string()),
        Just("T0".to_string()),
        Just("_u".to_string()),
    ]
}

fn literal() -> impl Strategy<Value = Term> {
    (0i64..200, 1i64..12).prop_map(|(n, d)| Term::Lit(Rat::new(n.into(), d.into())))
}

fn term(depth: u32) -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![ident().prop_map(Term::Var), literal()];
    leaf.prop_recursive(depth, 64, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::add(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::sub(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Term::mul(l, r)),
            // The parser folds literal quotients into exact rationals, so
            // the generator does too (round-trip is over the parser image).
            (inner.clone(), inner.clone()).prop_map(|(l, r)| match (&l, &r) {
                (Term::Lit(a), Term::Lit(b)) if !num_traits::Zero::is_zero(b) => {
                    Term::Lit(a / b)
                }
                _ => Term::div(l, r),
            }),
            inner.clone().prop_map(Term::neg),
            (inner.clone(), 0u32..4).prop_map(|(b, e)| Term::Pow(Box::new(b), e)),
            (inner.clone(), inner.clone())
                .prop_map(|(l, r)| Term::Min(Box::new(l), Box::new(r))),
            (inner.clone(), inner).prop_map(|(l, r)| Term::Max(Box::new(l), Box::new(r))),
        ]
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Ge),
        Just(CmpOp::Gt),
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Le),
        Just(CmpOp::Lt),
    ]
}

fn comparison() -> impl Strategy<Value = Formula> {
    (cmp_op(), term(2), term(2)).prop_map(|(op, l, r)| Formula::Cmp(op, l, r))
}

fn plain_formula(depth: u32) -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![Just(Formula::True), Just(Formula::False), comparison()];
    leaf.prop_recursive(depth, 32, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            inner.prop_map(Formula::not),
        ]
    })
    .boxed()
}

fn ode() -> impl Strategy<Value = HybridProgram> {
    (
        prop::sample::subsequence(vec!["x", "y", "z"], 1..=3),
        prop::collection::vec(term(2), 3),
        prop_oneof![Just(Formula::True), comparison()],
    )
        .prop_map(|(vars, rhs, dom)| {
            HybridProgram::Ode(
                vars.into_iter()
                    .zip(rhs)
                    .map(|(v, e)| (v.to_string(), e))
                    .collect(),
                dom,
            )
        })
}

/// Programs in parser-canonical shape: sequences are left-nested.
fn program(depth: u32) -> BoxedStrategy<HybridProgram> {
    let leaf = prop_oneof![
        plain_formula(1).prop_map(HybridProgram::Test),
        (ident(), term(2)).prop_map(|(x, e)| HybridProgram::Assign(x, e)),
        ode(),
    ];
    leaf.prop_recursive(depth, 24, 3, |inner| {
        prop_oneof![
            // Sequences print flattened and re-parse left-nested, so the
            // generator builds them in that canonical shape.
            prop::collection::vec(inner.clone(), 2..4).prop_map(|stmts| {
                let mut flat = Vec::new();
                for s in stmts {
                    for part in s.flatten_seq() {
                        flat.push(part.clone());
                    }
                }
                let mut it = flat.into_iter();
                let first = it.next().unwrap();
                it.fold(first, HybridProgram::seq)
            }),
            (inner.clone(), inner.clone())
                .prop_map(|(l, r)| HybridProgram::choice(l, r)),
            inner.prop_map(|b| HybridProgram::Loop(Box::new(b))),
        ]
    })
    .boxed()
}

fn formula(depth: u32) -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![Just(Formula::True), comparison()];
    leaf.prop_recursive(depth, 32, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            inner.clone().prop_map(Formula::not),
            (program(2), inner.clone())
                .prop_map(|(p, f)| Formula::Box_(Box::new(p), Box::new(f))),
            (program(2), inner)
                .prop_map(|(p, f)| Formula::Diamond(Box::new(p), Box::new(f))),
        ]
    })
    .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn term_round_trip(t in term(8)) {
        let printed = t.to_string();
        let reparsed = parse_term_str(&printed)
            .unwrap_or_else(|e| panic!("`{printed}`: {e}"));
        prop_assert_eq!(reparsed, t);
    }

    #[test]
    fn formula_round_trip(f in formula(6)) {
        let printed = f.to_string();
        let reparsed = parse_formula_str(&printed)
            .unwrap_or_else(|e| panic!("`{printed}`: {e}"));
        prop_assert_eq!(reparsed, f);
    }

    #[test]
    fn program_round_trip(p in program(6)) {
        let printed = p.to_string();
        let reparsed = parse_program_str(&printed)
            .unwrap_or_else(|e| panic!("`{printed}`: {e}"));
        prop_assert_eq!(reparsed, p);
    }

    #[test]
    fn if_else_desugars_to_choice(
        cond in comparison(),
        a in program(3),
        b in program(3),
    ) {
        let text = format!("if ({cond}) {{{a}}} else {{{b}}}");
        let parsed = parse_program_str(&text)
            .unwrap_or_else(|e| panic!("`{text}`: {e}"));
        prop_assert_eq!(parsed, desugar_if(cond, a, b));
    }

    #[test]
    fn while_desugars_to_loop(cond in comparison(), a in program(3)) {
        let text = format!("while ({cond}) {{{a}}}");
        let parsed = parse_program_str(&text)
            .unwrap_or_else(|e| panic!("`{text}`: {e}"));
        prop_assert_eq!(parsed, desugar_while(cond, a));
    }

    #[test]
    fn parsing_is_deterministic(f in formula(5)) {
        let printed = f.to_string();
        let a = parse_formula_str(&printed).unwrap();
        let b = parse_formula_str(&printed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn corpus_files_parse_and_round_trip() {
    // Grammar totality over the bundled corpus: every model parses, and the
    // pretty-printed theorem re-parses to the same tree.
    let root = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus");
    let corpus = dlcheck_core::corpus::load_corpus(&root).unwrap();
    assert_eq!(corpus.len(), 8);
    for entry in &corpus {
        let printed = entry.model.theorem.to_string();
        let reparsed = parse_formula_str(&printed)
            .unwrap_or_else(|e| panic!("{}: `{printed}`: {e}", entry.name));
        assert_eq!(reparsed, entry.model.theorem, "{}", entry.name);
    }
}
