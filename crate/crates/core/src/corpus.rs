//! The bundled model corpus: eight reactor models with proof certificates,
//! plus mutants that the checker or the falsifier must catch.
//!
//! Layout: `corpus/<name>/model.dlm`, `corpus/<name>/cert.cert`, and
//! optionally `corpus/<name>/mutants/<mutant>/{model.dlm, cert.cert, expect}`
//! where `expect` holds `non_proved` or `falsified_or_non_proved`.

use crate::parser::{bind_certificate, parse_certificate, parse_model, Certificate, Model};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: crate::parser::ParseError,
    },
    #[error("{path}: invalid expectation `{value}` (use `non_proved` or `falsified_or_non_proved`)")]
    BadExpectation { path: PathBuf, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutantExpectation {
    /// The certificate checker must return a non-Proved verdict.
    NonProved,
    /// Either the checker rejects it or falsification finds a violation.
    FalsifiedOrNonProved,
}

#[derive(Debug)]
pub struct Mutant {
    pub name: String,
    pub model_file: PathBuf,
    pub cert_file: PathBuf,
    pub model: Model,
    pub certificate: Certificate,
    pub expected: MutantExpectation,
}

#[derive(Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub figure_tag: String,
    pub model_file: PathBuf,
    pub cert_file: PathBuf,
    pub model: Model,
    pub certificate: Certificate,
    pub mutants: Vec<Mutant>,
}

fn figure_tag(name: &str) -> String {
    match name {
        "conserve" => "basic irreversible model conserves energy",
        "bangbang" => "bang-bang irreversible model safe",
        "fixedexp" => "bang-bang irreversible model safe with fixed exponent",
        "dynexp" => "bang-bang irreversible model safe with dynamic exponent",
        "rev_basic" => "reversible model decreases",
        "rev_avoid" => "reversible model never at equilibrium",
        "rev_approach" => "reversible model approaches equilibrium",
        "rev_persist" => "reversible model is stable",
        other => other,
    }
    .to_string()
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_pair(dir: &Path) -> Result<(PathBuf, PathBuf, Model, Certificate), CorpusError> {
    let model_file = dir.join("model.dlm");
    let cert_file = dir.join("cert.cert");
    let model = parse_model(&read(&model_file)?).map_err(|source| CorpusError::Parse {
        path: model_file.clone(),
        source,
    })?;
    let raw = parse_certificate(&read(&cert_file)?).map_err(|source| CorpusError::Parse {
        path: cert_file.clone(),
        source,
    })?;
    let certificate = bind_certificate(&raw, &model).map_err(|source| CorpusError::Parse {
        path: cert_file.clone(),
        source,
    })?;
    Ok((model_file, cert_file, model, certificate))
}

/// Load and validate every corpus entry under `root` (sorted by name).
pub fn load_corpus(root: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut names = Vec::new();
    let rd = match std::fs::read_dir(root) {
        Ok(rd) => rd,
        Err(source) => {
            return Err(CorpusError::Io {
                path: root.to_path_buf(),
                source,
            })
        }
    };
    for entry in rd {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() && path.join("model.dlm").exists() {
            names.push(path);
        }
    }
    names.sort();

    let mut out = Vec::new();
    for dir in names {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let (model_file, cert_file, model, certificate) = load_pair(&dir)?;

        let mut mutants = Vec::new();
        let mdir = dir.join("mutants");
        if mdir.is_dir() {
            let mut mdirs: Vec<PathBuf> = std::fs::read_dir(&mdir)
                .map_err(|source| CorpusError::Io {
                    path: mdir.clone(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            mdirs.sort();
            for md in mdirs {
                let mname = md
                    .file_name()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_default();
                let (mmodel_file, mcert_file, mmodel, mcert) = load_pair(&md)?;
                let expect_file = md.join("expect");
                let raw = read(&expect_file)?;
                let expected = match raw.trim() {
                    "non_proved" => MutantExpectation::NonProved,
                    "falsified_or_non_proved" => MutantExpectation::FalsifiedOrNonProved,
                    other => {
                        return Err(CorpusError::BadExpectation {
                            path: expect_file,
                            value: other.to_string(),
                        })
                    }
                };
                mutants.push(Mutant {
                    name: mname,
                    model_file: mmodel_file,
                    cert_file: mcert_file,
                    model: mmodel,
                    certificate: mcert,
                    expected,
                });
            }
        }
        out.push(CorpusEntry {
            figure_tag: figure_tag(&name),
            name,
            model_file,
            cert_file,
            model,
            certificate,
            mutants,
        });
    }
    Ok(out)
}
