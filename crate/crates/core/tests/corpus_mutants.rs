//! Corpus loading and mutation sensitivity: every bundled mutant must be
//! caught, by the certificate checker or by falsification.

use dlcheck_core::certify::check_theorem;
use dlcheck_core::corpus::{load_corpus, MutantExpectation};
use dlcheck_core::falsify::{falsify, FalsifyConfig};
use dlcheck_core::simulate::theorem_parts;
use std::path::PathBuf;

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus")
}

#[test]
fn corpus_has_the_eight_entries() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    let names: Vec<&str> = corpus.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(
        names,
        vec![
            "bangbang",
            "conserve",
            "dynexp",
            "fixedexp",
            "rev_approach",
            "rev_avoid",
            "rev_basic",
            "rev_persist"
        ]
    );
    assert!(corpus.iter().all(|e| !e.figure_tag.is_empty()));
    let total_mutants: usize = corpus.iter().map(|e| e.mutants.len()).sum();
    assert!(total_mutants >= 10, "only {total_mutants} mutants bundled");
}

#[test]
fn every_mutant_is_caught() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    for entry in &corpus {
        for mutant in &entry.mutants {
            let label = format!("{}/{}", entry.name, mutant.name);
            let report = check_theorem(&mutant.model, &mutant.certificate, 0)
                .unwrap_or_else(|e| panic!("{label}: {e}"));
            let caught_by_checker = !report.is_proved();
            match mutant.expected {
                MutantExpectation::NonProved => {
                    assert!(
                        caught_by_checker,
                        "{label}: checker proved a mutant expected non-proved"
                    );
                }
                MutantExpectation::FalsifiedOrNonProved => {
                    if caught_by_checker {
                        continue;
                    }
                    let parts = theorem_parts(&mutant.model).unwrap();
                    assert!(
                        parts.box_theorem,
                        "{label}: falsification only applies to box theorems"
                    );
                    let cfg = FalsifyConfig {
                        trials: 500,
                        seed: 0,
                        ..FalsifyConfig::default()
                    };
                    let hit = falsify(&mutant.model, &parts.post, &cfg).unwrap();
                    assert!(hit.is_some(), "{label}: neither detector fired");
                }
            }
        }
    }
}

#[test]
fn falsifier_catches_the_underpredicting_guard() {
    // Independently of the checker, the halved-guard controller must
    // overheat within the trial budget.
    let corpus = load_corpus(&corpus_root()).unwrap();
    let entry = corpus.iter().find(|e| e.name == "bangbang").unwrap();
    let mutant = entry
        .mutants
        .iter()
        .find(|m| m.name == "guard_halved")
        .unwrap();
    let parts = theorem_parts(&mutant.model).unwrap();
    let cfg = FalsifyConfig {
        trials: 500,
        seed: 0,
        ..FalsifyConfig::default()
    };
    let hit = falsify(&mutant.model, &parts.post, &cfg)
        .unwrap()
        .expect("overheating run not found in 500 trials");
    assert!(hit.violation.residual > 0.0);

    // The unmutated controller survives the same budget.
    let parts = theorem_parts(&entry.model).unwrap();
    let none = falsify(&entry.model, &parts.post, &cfg).unwrap();
    assert!(none.is_none(), "false alarm on the proved controller");
}
