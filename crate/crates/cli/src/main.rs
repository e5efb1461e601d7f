//! `dlcheck` — check proof certificates for hybrid-program models, simulate
//! them numerically, and search for counterexamples.
//!
//! Exit codes: 0 proved / no violation, 1 refuted / violation found,
//! 2 unknown, 3 usage or parse error.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dlcheck_core::ast::{Formula, Term};
use dlcheck_core::certify::{check_theorem, TheoremReport, VerdictKind};
use dlcheck_core::corpus::{load_corpus, CorpusEntry, Mutant, MutantExpectation};
use dlcheck_core::falsify::{falsify, FalsifyConfig};
use dlcheck_core::parser::{
    bind_certificate, parse_certificate, parse_formula_str, parse_model, parse_term_in_model,
    Model,
};
use dlcheck_core::poly::{lie_derivative, to_ratpoly, Polynomial, VarCtx, VectorField};
use dlcheck_core::simulate::{
    simulate, theorem_parts, DurationPolicy, SimConfig,
};
use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "dlcheck",
    about = "Certificate checking, simulation and falsification for hybrid-program models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a proof certificate against a model's theorem.
    Check {
        /// Model file (.dlm)
        model: PathBuf,
        /// Certificate file (.cert)
        #[arg(long)]
        cert: PathBuf,
        /// Root seed for the oracle's sampling stage
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the report as JSON
        #[arg(long)]
        json: bool,
    },
    /// Integrate the model's program numerically and write a trace.
    Simulate {
        /// Model file (.dlm)
        model: PathBuf,
        /// Comma-separated assignments, e.g. kf=1,kr=1,A0=1
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
        /// Integration step
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Time horizon
        #[arg(long, default_value_t = 5.0)]
        horizon: f64,
        /// Seed for nondeterministic durations
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evolution duration policy
        #[arg(long, value_enum, default_value_t = PolicyArg::Max)]
        policy: PolicyArg,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for a counterexample over sampled scenarios.
    Falsify {
        /// Model file (.dlm)
        model: PathBuf,
        /// Property to monitor (defaults to a box theorem's postcondition)
        #[arg(long)]
        property: Option<String>,
        /// Number of trials
        #[arg(long, default_value_t = 500)]
        trials: u32,
        /// Root seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the Lie derivative of a term along the model's ODE.
    Lie {
        /// Model file (.dlm)
        model: PathBuf,
        /// A definition name or a term expression
        #[arg(long)]
        term: String,
    },
    /// Check every corpus entry and mutant; print a table.
    Corpus {
        /// Corpus directory
        #[arg(long, default_value = "corpus")]
        root: PathBuf,
        /// Root seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Max,
    Random,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors; this tool reserves 2
            // for unknown verdicts, so usage problems exit 3.
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load_model_file(path: &PathBuf) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Check {
            model,
            cert,
            seed,
            json,
        } => cmd_check(&model, &cert, seed, json),
        Command::Simulate {
            model,
            params,
            dt,
            horizon,
            seed,
            policy,
            out,
        } => cmd_simulate(&model, &params, dt, horizon, seed, policy, &out),
        Command::Falsify {
            model,
            property,
            trials,
            seed,
        } => cmd_falsify(&model, property.as_deref(), trials, seed),
        Command::Lie { model, term } => cmd_lie(&model, &term),
        Command::Corpus { root, seed } => cmd_corpus(&root, seed),
    }
}

fn verdict_code(v: VerdictKind) -> u8 {
    match v {
        VerdictKind::Proved => 0,
        VerdictKind::Refuted => 1,
        VerdictKind::Unknown => 2,
        VerdictKind::Skipped => 2,
    }
}

fn print_report(report: &TheoremReport) {
    for ob in &report.obligations {
        let detail = ob
            .detail
            .as_ref()
            .map(|d| format!("  -- {d}"))
            .unwrap_or_default();
        println!("[{}] {}{detail}", ob.verdict, ob.origin);
    }
    match &report.failure {
        Some(f) => println!("verdict: {}  ({f})", report.verdict),
        None => println!("verdict: {}", report.verdict),
    }
}

fn cmd_check(model: &PathBuf, cert: &PathBuf, seed: u64, json: bool) -> Result<u8> {
    let m = load_model_file(model)?;
    let raw_text = std::fs::read_to_string(cert)
        .with_context(|| format!("reading {}", cert.display()))?;
    let raw =
        parse_certificate(&raw_text).map_err(|e| anyhow!("{}: {e}", cert.display()))?;
    let c = bind_certificate(&raw, &m).map_err(|e| anyhow!("{}: {e}", cert.display()))?;
    let report = check_theorem(&m, &c, seed)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    Ok(verdict_code(report.verdict))
}

fn parse_assignments(items: &[String]) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("expected name=value, got `{item}`"))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("invalid number `{v}` for `{k}`"))?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

fn cmd_simulate(
    model: &PathBuf,
    params: &[String],
    dt: f64,
    horizon: f64,
    seed: u64,
    policy: PolicyArg,
    out: &PathBuf,
) -> Result<u8> {
    if dt <= 0.0 {
        bail!("--dt must be positive");
    }
    if horizon < 0.0 {
        bail!("--horizon must be nonnegative");
    }
    let m = load_model_file(model)?;
    let assignment = parse_assignments(params)?;
    let cfg = SimConfig {
        dt,
        horizon,
        max_iterations: 200,
        seed,
        duration_policy: match policy {
            PolicyArg::Max => DurationPolicy::MaxDomain,
            PolicyArg::Random => DurationPolicy::UniformRandom,
        },
    };
    let trace = simulate(&m, &assignment, &cfg)?;
    let file = std::fs::File::create(out)
        .with_context(|| format!("creating {}", out.display()))?;
    trace
        .write_csv(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} samples to {} (stop: {:?})",
        trace.samples.len(),
        out.display(),
        trace.stop_reason
    );
    Ok(0)
}

fn cmd_falsify(
    model: &PathBuf,
    property: Option<&str>,
    trials: u32,
    seed: u64,
) -> Result<u8> {
    let m = load_model_file(model)?;
    let parts = theorem_parts(&m)?;
    let prop: Formula = match property {
        Some(text) => parse_formula_str(text).map_err(|e| anyhow!("--property: {e}"))?,
        None => {
            if !parts.box_theorem {
                bail!(
                    "the theorem is not a box property; provide --property explicitly"
                );
            }
            parts.post.clone()
        }
    };
    let cfg = FalsifyConfig {
        trials,
        seed,
        ..FalsifyConfig::default()
    };
    match falsify(&m, &prop, &cfg)? {
        Some(hit) => {
            println!("{}", hit.json_line());
            let mut names: Vec<&String> = hit.assignment.keys().collect();
            names.sort();
            let listing: Vec<String> = names
                .iter()
                .map(|k| format!("{k}={}", hit.assignment[*k]))
                .collect();
            println!("scenario: {}", listing.join(", "));
            Ok(1)
        }
        None => {
            println!("no violation in {trials} trials (seed {seed})");
            Ok(0)
        }
    }
}

fn cmd_lie(model: &PathBuf, term: &str) -> Result<u8> {
    let m = load_model_file(model)?;
    let t: Term = match m.def(term.trim()) {
        Some((_, params, body)) if params.is_empty() => body.clone(),
        _ => parse_term_in_model(term, &m).map_err(|e| anyhow!("--term: {e}"))?,
    };
    let (eqs, _domain) = m
        .unique_ode()
        .ok_or_else(|| anyhow!("the model does not have a unique ODE system"))?;
    let mut ctx = VarCtx::new();
    let mut vf_eqs = Vec::new();
    for (x, rhs) in &eqs {
        let i = ctx.intern(x);
        let p = dlcheck_core::poly::to_polynomial(rhs, &mut ctx)
            .map_err(|e| anyhow!("{x}': {e}"))?;
        vf_eqs.push((i, p));
    }
    let vf = VectorField {
        eqs: vf_eqs,
        domain: Formula::True,
    };

    // Min/max terms are reported per branch.
    let goal = Formula::Cmp(dlcheck_core::ast::CmpOp::Eq, t, Term::int(0));
    let branches = dlcheck_core::certify::obligation::split_min_max(&[], &goal, 4)
        .map_err(|e| anyhow!(e))?;
    let multi = branches.len() > 1;
    for br in &branches {
        let arm = match &br.goal {
            Formula::Cmp(_, l, _) => l.clone(),
            _ => unreachable!(),
        };
        let rp = to_ratpoly(&arm, &mut ctx).map_err(|e| anyhow!("{e}"))?;
        for i in rp.den.var_indices() {
            if vf.is_ode_var(i) {
                bail!(
                    "cannot differentiate: denominator `{}` involves an ODE variable",
                    rp.den.to_string_in(&ctx)
                );
            }
        }
        let lie = lie_derivative(&rp.num, &vf);
        let rendered = render_quotient(&lie, &rp.den, &ctx);
        if multi {
            let conds: Vec<String> =
                br.conditions.iter().map(|c| c.to_string()).collect();
            println!("case {}: {rendered}", conds.join(" & "));
        } else {
            println!("{rendered}");
        }
    }
    Ok(0)
}

fn render_quotient(num: &Polynomial, den: &Polynomial, ctx: &VarCtx) -> String {
    if num.is_zero() {
        return "0".to_string();
    }
    if den.is_one() {
        num.to_string_in(ctx)
    } else {
        format!("({})/({})", num.to_string_in(ctx), den.to_string_in(ctx))
    }
}

fn cmd_corpus(root: &std::path::Path, seed: u64) -> Result<u8> {
    let started = Instant::now();
    let corpus = load_corpus(root).map_err(|e| anyhow!("{e}"))?;
    if corpus.is_empty() {
        println!("no corpus entries under {}", root.display());
        return Ok(0);
    }
    let mut worst = VerdictKind::Proved;
    let mut mutant_failure = false;

    println!(
        "{:<14} {:<9} {:>10} {:>9}   figure",
        "entry", "verdict", "proved", "time"
    );
    let mut entry_reports = Vec::new();
    for entry in &corpus {
        let t0 = Instant::now();
        let report = check_theorem(&entry.model, &entry.certificate, seed)?;
        let proved = report
            .obligations
            .iter()
            .filter(|o| o.verdict == VerdictKind::Proved)
            .count();
        println!(
            "{:<14} {:<9} {:>6}/{:<3} {:>7.1?}   {}",
            entry.name,
            report.verdict.to_string(),
            proved,
            report.obligations.len(),
            t0.elapsed(),
            entry.figure_tag
        );
        if report.verdict != VerdictKind::Proved {
            if let Some(f) = &report.failure {
                println!("{:<14} ^ {f}", "");
            }
            if verdict_code(report.verdict) > verdict_code(worst)
                || (report.verdict == VerdictKind::Refuted
                    && worst != VerdictKind::Refuted)
            {
                worst = report.verdict;
            }
        }
        entry_reports.push(report);
    }

    let mut total_mutants = 0;
    let mut caught = 0;
    println!();
    println!("{:<38} {:<24} result", "mutant", "expected");
    for entry in &corpus {
        for mutant in &entry.mutants {
            total_mutants += 1;
            let (ok, how) = check_mutant(entry, mutant, seed)?;
            if ok {
                caught += 1;
            } else {
                mutant_failure = true;
            }
            println!(
                "{:<38} {:<24} {}",
                format!("{}/{}", entry.name, mutant.name),
                match mutant.expected {
                    MutantExpectation::NonProved => "non_proved",
                    MutantExpectation::FalsifiedOrNonProved => "falsified_or_non_proved",
                },
                how
            );
        }
    }
    println!();
    println!(
        "{} entries, {caught}/{total_mutants} mutants caught, {:?} total",
        corpus.len(),
        started.elapsed()
    );

    if mutant_failure {
        return Ok(1);
    }
    Ok(match worst {
        VerdictKind::Proved => 0,
        VerdictKind::Refuted => 1,
        _ => 2,
    })
}

fn check_mutant(
    _entry: &CorpusEntry,
    mutant: &Mutant,
    seed: u64,
) -> Result<(bool, String)> {
    let report = check_theorem(&mutant.model, &mutant.certificate, seed)?;
    if report.verdict != VerdictKind::Proved {
        return Ok((true, format!("caught (checker: {})", report.verdict)));
    }
    match mutant.expected {
        MutantExpectation::NonProved => {
            Ok((false, "NOT CAUGHT (checker proved it)".to_string()))
        }
        MutantExpectation::FalsifiedOrNonProved => {
            let parts = theorem_parts(&mutant.model)?;
            if !parts.box_theorem {
                return Ok((false, "NOT CAUGHT (not falsifiable)".to_string()));
            }
            let cfg = FalsifyConfig {
                trials: 500,
                seed,
                ..FalsifyConfig::default()
            };
            match falsify(&mutant.model, &parts.post, &cfg)? {
                Some(hit) => Ok((
                    true,
                    format!("caught (falsified at trial {})", hit.trial),
                )),
                None => Ok((false, "NOT CAUGHT".to_string())),
            }
        }
    }
}
