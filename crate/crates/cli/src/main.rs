//! Command-line experiments on random finite relational structures: sample
//! fixed-class ensembles, check extension axioms, estimate almost-sure
//! probabilities, count and classify, expand by imaginaries, and audit
//! divisibility laws.
//!
//! Every stochastic subcommand takes an explicit `--seed` and embeds its
//! configuration in the output, so published numbers are reproducible bit
//! for bit. Exit codes: 0 on success, 1 when a validation or check fails
//! (or data cannot be read), 2 on usage errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zeroone::classify::classify_theory;
use zeroone::delta::{ClassAssignment, DeltaSystem};
use zeroone::divisibility::check_divisibility;
use zeroone::extension::{
    back_and_forth, check_sigma_xi, check_tau, estimate_almost_sure, profiles, AxiomVerdict,
    BackAndForth, Property, Side,
};
use zeroone::json as wire;
use zeroone::logic::{parse, Formula};
use zeroone::meq::expand;
use zeroone::sample::{count_age, sample_kn};
use zeroone::structure::FiniteStructure;

#[derive(Parser)]
#[command(name = "zeroone", version, about = "experiments on random finite structures")]
struct Cli {
    /// Worker threads for trial-parallel commands (outputs do not depend
    /// on this).
    #[arg(long, global = true, env = "ASYM_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the four compatibility rules of a system.
    Validate { ds: PathBuf },
    /// Draw structures from the ensemble at size n (newline-delimited
    /// JSON, preceded by a config line).
    Sample {
        ds: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Check extension axioms (sigma, xi, and all tau instances at arity
    /// k) on sampled structures.
    Axioms {
        ds: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Estimate the probability of a sentence over the ensemble (CSV).
    Estimate {
        ds: PathBuf,
        /// A formula, or a path to a file containing one.
        #[arg(long)]
        sentence: String,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grow a partial isomorphism between two structures over a shared
    /// system.
    Efgame {
        a: PathBuf,
        b: PathBuf,
        ds: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Expand a structure by imaginary elements for definable equivalence
    /// relations (name=formula).
    Meq {
        s: PathBuf,
        #[arg(long = "rel", required = true)]
        rels: Vec<String>,
    },
    /// Audit the gcd-divides-target law for a definable relation.
    Divides {
        s: PathBuf,
        #[arg(long)]
        phi: String,
        #[arg(long)]
        psi: String,
        #[arg(long)]
        xi: Option<String>,
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Exact age counts by size (newline-delimited JSON).
    Count {
        ds: PathBuf,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Classify the limiting theory of a system.
    Classify { ds: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .ok();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_system(path: &Path) -> Result<DeltaSystem> {
    wire::delta_from_value(&load_value(path)?)
        .with_context(|| format!("loading system from {}", path.display()))
}

fn load_structure(path: &Path) -> Result<FiniteStructure> {
    wire::structure_from_value(&load_value(path)?)
        .with_context(|| format!("loading structure from {}", path.display()))
}

fn load_valid_system(path: &Path) -> Result<DeltaSystem> {
    let ds = load_system(path)?;
    let violations = ds.validate();
    if !violations.is_empty() {
        bail!(
            "system {} fails validation: {}",
            path.display(),
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
        );
    }
    Ok(ds)
}

/// Formula argument: a literal formula, or a path to a file holding one.
fn formula_arg(text: &str, ds_vocab: &zeroone::Vocabulary) -> Result<Formula> {
    let source = if Path::new(text).exists() {
        fs::read_to_string(text).with_context(|| format!("reading {text}"))?
    } else {
        text.to_string()
    };
    parse(source.trim(), ds_vocab).map_err(|e| anyhow!("parsing {source:?}: {e}"))
}

/// Recover the class of every element by matching unary diagrams against
/// the system's rows; requires unary-separated classes.
fn derive_assignment(s: &FiniteStructure, ds: &DeltaSystem) -> Result<ClassAssignment> {
    let l = ds.num_classes();
    let mut cls = Vec::with_capacity(s.size());
    for e in 0..s.size() {
        let ud = s.unary_diagram(e);
        let matches: Vec<usize> = (0..l).filter(|&c| *ds.row_unary(c) == ud).collect();
        match matches.as_slice() {
            [c] => cls.push(*c),
            [] => bail!("element {e} carries a unary diagram outside every class"),
            _ => bail!(
                "element {e}'s class is ambiguous; classes must have distinct unary diagrams"
            ),
        }
    }
    let ca = ClassAssignment::new(cls, l);
    ca.check(s, ds).map_err(|e| anyhow!("{e}"))?;
    Ok(ca)
}

fn print_line(value: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Validate { ds } => {
            let system = load_system(&ds)?;
            let violations = system.validate();
            print_line(&wire::violations_to_value(&violations))?;
            Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Sample { ds, n, seed, count } => {
            let system = load_valid_system(&ds)?;
            print_line(&json!({
                "command": "sample",
                "input": ds.display().to_string(),
                "n": n,
                "seed": seed,
                "count": count,
            }))?;
            for i in 0..count {
                let (s, _) = sample_kn(&system, n, seed.wrapping_add(i as u64))?;
                print_line(&wire::structure_to_value(&s))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Axioms { ds, n, k, trials, seed } => {
            let system = load_valid_system(&ds)?;
            let mut sigma_holds = 0usize;
            let mut xi_holds = 0usize;
            let mut tau_all_hold = 0usize;
            let mut tau_vacuous = 0usize;
            let ps = profiles(&system, k)?;
            for trial in 0..trials {
                let trial_seed = seed.wrapping_add(trial as u64);
                let (s, ca) = sample_kn(&system, n, trial_seed)?;
                let (sigma, xi) = check_sigma_xi(&s, &system, &ca, k)?;
                if sigma.holds() {
                    sigma_holds += 1;
                }
                if xi.holds() {
                    xi_holds += 1;
                }
                let mut failed = false;
                for p in &ps {
                    for q in p.extensions(&system) {
                        match check_tau(&s, &system, &ca, p, &q)?.verdict {
                            AxiomVerdict::Fails => failed = true,
                            AxiomVerdict::Vacuous => tau_vacuous += 1,
                            AxiomVerdict::Holds => {}
                        }
                    }
                }
                if !failed {
                    tau_all_hold += 1;
                }
            }
            print_line(&json!({
                "config": {
                    "command": "axioms",
                    "input": ds.display().to_string(),
                    "n": n, "k": k, "trials": trials, "seed": seed,
                },
                "sigma_holds": sigma_holds,
                "xi_holds": xi_holds,
                "tau_all_hold": tau_all_hold,
                "tau_vacuous_instances": tau_vacuous,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Estimate { ds, sentence, n_list, trials, seed, output } => {
            let system = load_valid_system(&ds)?;
            let formula = formula_arg(&sentence, system.vocab())?;
            if !formula.is_sentence() {
                bail!("estimate needs a sentence; {formula} has free variables");
            }
            let property = Property::Sentence(formula);
            let rows = estimate_almost_sure(&system, &property, &n_list, trials, seed)?;
            let mut csv = String::from("n,trials,successes,estimate,lo,hi,property_id,seed\n");
            let id = property.id().replace('"', "\"\"");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},\"{}\",{}\n",
                    r.n, r.trials, r.successes, r.estimate, r.lo, r.hi, id, seed
                ));
            }
            match output {
                Some(path) => fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Efgame { a, b, ds, target, seed } => {
            let system = load_valid_system(&ds)?;
            let sa = load_structure(&a)?;
            let sb = load_structure(&b)?;
            let ca = derive_assignment(&sa, &system)?;
            let cb = derive_assignment(&sb, &system)?;
            let outcome = back_and_forth(&sa, &ca, &sb, &cb, target, seed, &[])?;
            let config = json!({
                "command": "efgame",
                "a": a.display().to_string(),
                "b": b.display().to_string(),
                "system": ds.display().to_string(),
                "target": target,
                "seed": seed,
            });
            match outcome {
                BackAndForth::Map(map) => {
                    print_line(&json!({
                        "config": config,
                        "outcome": "map",
                        "map": map.iter().map(|&(x, y)| json!([x, y])).collect::<Vec<_>>(),
                    }))?;
                    Ok(ExitCode::SUCCESS)
                }
                BackAndForth::Stuck { side, map, element } => {
                    print_line(&json!({
                        "config": config,
                        "outcome": "stuck",
                        "map": map.iter().map(|&(x, y)| json!([x, y])).collect::<Vec<_>>(),
                        "stuck_side": match side { Side::Left => "left", Side::Right => "right" },
                        "stuck_element": element,
                    }))?;
                    Ok(ExitCode::from(1))
                }
            }
        }
        Cmd::Meq { s, rels } => {
            let base = load_structure(&s)?;
            let mut named = Vec::new();
            for entry in &rels {
                let (name, formula) = entry
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--rel takes name=formula, got {entry:?}"))?;
                let f = parse(formula.trim(), base.vocab())
                    .map_err(|e| anyhow!("parsing relation {name:?}: {e}"))?;
                named.push((name.trim().to_string(), f));
            }
            let expanded = expand(&base, &named)?;
            print_line(&wire::expanded_to_value(&expanded))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Divides { s, phi, psi, xi, format } => {
            let structure = load_structure(&s)?;
            let phi = formula_arg(&phi, structure.vocab())?;
            let psi = formula_arg(&psi, structure.vocab())?;
            let xi = xi.map(|t| formula_arg(&t, structure.vocab())).transpose()?;
            let report = check_divisibility(&structure, xi.as_ref(), &phi, &psi)?;
            match format.as_str() {
                "json" => {
                    for value in wire::divisibility_to_values(&report) {
                        print_line(&value)?;
                    }
                }
                "table" => {
                    println!("{:<16} {:>6} {:>5} {:<20} verdict", "params", "target", "gcd", "class sizes");
                    for e in &report.entries {
                        println!(
                            "{:<16} {:>6} {:>5} {:<20} {}",
                            format!("{:?}", e.params),
                            e.target_size,
                            e.gcd,
                            format!("{:?}", e.class_sizes),
                            if e.holds { "holds" } else { "FAILS" }
                        );
                    }
                }
                other => bail!("unknown format {other:?} (expected json or table)"),
            }
            Ok(if report.holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Count { ds, n_list } => {
            let system = load_valid_system(&ds)?;
            for n in n_list {
                let counts = count_age(&system, n)?;
                print_line(&wire::age_count_to_value(&counts))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Classify { ds } => {
            let system = load_valid_system(&ds)?;
            print_line(&wire::classification_to_value(&classify_theory(&system)))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
