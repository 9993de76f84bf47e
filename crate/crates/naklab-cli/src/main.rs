//! Command-line surface for the exact Heisenberg-action calculator.
//!
//! Machine-readable JSON goes to stdout, human summaries to stderr, and the
//! exit code tells CI what happened: 0 pass, 1 verification failure, 2
//! input error, 3 generation-rank failure.  All sampled checks are seeded,
//! so identical invocations produce byte-identical output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use naklab::fock::FockVector;
use naklab::frobenius::{fixtures, ModelError};
use naklab::operators::{
    extract_universal_f, gtilde_operator, ok_operator, unit_power_class, ExtractError,
};
use naklab::parse::{parse_expr, parse_modes, Expr};
use naklab::rings::{build_ring, RingError, Side};
use naklab::scalar::rational_file_string;
use naklab::suites::{run_suite, SuiteConfig, SuiteError, DEFAULT_SEED, SUITE_NAMES};
use naklab::{AlgebraElement, GeneralizedPartition, GradedFrobeniusAlgebra, Scalar};

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_GENERATION: u8 = 3;

/// Exact calculator for Heisenberg actions on surface models: verification
/// suites, ring structure tables, single products and universal-coefficient
/// extraction.
#[derive(Parser)]
#[command(name = "naklab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file against the algebra invariants.
    Validate {
        /// Path to a model JSON file.
        model: String,
    },
    /// Run one verification suite, or all of them.
    Verify {
        /// Suite name, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Fixture name or model file path.
        #[arg(long, default_value = "p2")]
        model: String,
        /// Level bound for states, rings and pairings.
        #[arg(long = "max-n", default_value_t = 4)]
        max_n: u32,
        /// Order bound for operator families and mode magnitudes.
        #[arg(long = "max-k", default_value_t = 3)]
        max_k: u32,
        /// Seed for sampled checks.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Swap in the deliberately wrong quantum-corrected operators
        /// (negative control: the iso suite must then fail).
        #[arg(long)]
        mutated: bool,
    },
    /// Export the structure constants of one ring.
    Tables {
        /// Which product structure to build.
        #[arg(long, value_enum)]
        side: SideArg,
        /// Level of the ring.
        #[arg(long)]
        n: u32,
        /// Fixture name or model file path.
        #[arg(long, default_value = "p2")]
        model: String,
        /// Output format.
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Multiply two expressions in the level-n ring and echo the class.
    ///
    /// The left argument is a generator chain like "O[1](h)" or a state;
    /// the right argument is a state.  States below level n are padded
    /// with unit creators, so "p[-2](1)|0>" at n = 3 means the class
    /// supported on one double point.
    Product {
        left: String,
        right: String,
        /// Level of the ring.
        #[arg(long)]
        n: u32,
        /// Fixture name or model file path.
        #[arg(long, default_value = "p2")]
        model: String,
    },
    /// Fit the universal canonical-divisor coefficient of one slot of the
    /// divisor-derivative tower and print its model-independent value.
    ExtractF {
        /// Tower order (number of divisor commutators).
        #[arg(long)]
        k: u32,
        /// Slot partition, e.g. "(-3)" or "(-1,-2)".
        #[arg(long)]
        lambda: String,
        /// Comma-separated fixture names or model file paths.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Extra probe levels beyond the minimum.
        #[arg(long = "extra-levels", default_value_t = 2)]
        extra_levels: u32,
    },
    /// Write the built-in models to a directory as canonical JSON.
    Fixtures {
        #[arg(long, default_value = "models")]
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Orbifold,
    Quantum,
}

impl SideArg {
    fn side(self) -> Side {
        match self {
            SideArg::Orbifold => Side::Orbifold,
            SideArg::Quantum => Side::QuantumCorrected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_workers().and_then(|()| run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// Bound the rayon pool when NAKLAB_WORKERS is set.
fn configure_workers() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("NAKLAB_WORKERS") else {
        return Ok(());
    };
    let workers: usize = raw
        .parse()
        .ok()
        .filter(|&w| w >= 1)
        .ok_or_else(|| anyhow!("NAKLAB_WORKERS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("rayon pool already initialized")?;
    Ok(())
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Verify {
            suite,
            model,
            max_n,
            max_k,
            seed,
            mutated,
        } => cmd_verify(&suite, &model, max_n, max_k, seed, mutated),
        Command::Tables {
            side,
            n,
            model,
            out,
            path,
        } => cmd_tables(side.side(), n, &model, out, path.as_deref()),
        Command::Product {
            left,
            right,
            n,
            model,
        } => cmd_product(&left, &right, n, &model),
        Command::ExtractF {
            k,
            lambda,
            models,
            extra_levels,
        } => cmd_extract_f(k, &lambda, &models, extra_levels),
        Command::Fixtures { dir } => cmd_fixtures(&dir),
    }
}

/// A model argument is a built-in fixture name or a file path.
fn resolve_model(arg: &str) -> anyhow::Result<Arc<GradedFrobeniusAlgebra>> {
    if let Some(alg) = fixtures::by_name(arg) {
        return Ok(alg);
    }
    if Path::new(arg).exists() {
        return GradedFrobeniusAlgebra::load_file(arg)
            .map_err(|e| anyhow!("model file {arg:?}: {e}"));
    }
    bail!(
        "unknown model {arg:?}: not a file, and the fixtures are {}",
        fixtures::names().join(", ")
    )
}

fn emit(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn cmd_validate(path: &str) -> anyhow::Result<u8> {
    match GradedFrobeniusAlgebra::load_file(path) {
        Ok(alg) => {
            emit(&json!({
                "model": alg.name(),
                "status": "ok",
                "dim": alg.dim(),
                "top_degree": alg.top_degree(),
            }));
            eprintln!("model {} ok ({} basis classes)", alg.name(), alg.dim());
            Ok(EXIT_PASS)
        }
        Err(ModelError::Invalid(defects)) => {
            let listed: Vec<String> = defects.iter().map(|d| d.to_string()).collect();
            emit(&json!({ "status": "invalid", "defects": listed }));
            eprintln!("model {path} violates {} invariant(s)", defects.len());
            Ok(EXIT_FAIL)
        }
        Err(err) => bail!("cannot load {path}: {err}"),
    }
}

fn cmd_verify(
    suite: &str,
    model: &str,
    max_n: u32,
    max_k: u32,
    seed: u64,
    mutated: bool,
) -> anyhow::Result<u8> {
    let names: Vec<&str> = if suite == "all" {
        SUITE_NAMES.to_vec()
    } else {
        vec![suite]
    };
    let alg = resolve_model(model)?;
    let cfg = SuiteConfig {
        alg,
        max_n,
        max_k,
        seed,
        mutated,
    };
    let mut reports = Vec::new();
    for name in names {
        match run_suite(name, &cfg) {
            Ok(report) => {
                eprintln!(
                    "suite {}: {} checks, {} failed ({})",
                    report.suite,
                    report.checks,
                    report.failed,
                    if report.pass() { "pass" } else { "FAIL" }
                );
                reports.push(report);
            }
            Err(SuiteError::Unknown(name)) => {
                return Err(anyhow!(SuiteError::Unknown(name)));
            }
            Err(SuiteError::Ring(err)) => {
                emit(&json!({ "suite": name, "error": err.to_string() }));
                eprintln!("suite {name}: {err}");
                return Ok(EXIT_GENERATION);
            }
        }
    }
    let all_pass = reports.iter().all(|r| r.pass());
    if suite == "all" {
        emit(&serde_json::to_value(&reports)?);
    } else {
        emit(&serde_json::to_value(&reports[0])?);
    }
    Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
}

fn cmd_tables(
    side: Side,
    n: u32,
    model: &str,
    out: OutFormat,
    path: Option<&Path>,
) -> anyhow::Result<u8> {
    let alg = resolve_model(model)?;
    let ring = match build_ring(&alg, side, n) {
        Ok(ring) => ring,
        Err(err @ RingError::GenerationFailure { .. }) => {
            emit(&json!({ "error": err.to_string() }));
            eprintln!("{err}");
            return Ok(EXIT_GENERATION);
        }
        Err(err) => return Err(anyhow!(err)),
    };
    let table = ring.structure_constants();
    let text = match out {
        OutFormat::Csv => table.to_csv(),
        OutFormat::Json => table.to_json(),
    };
    match path {
        Some(file) => {
            std::fs::write(file, &text)
                .with_context(|| format!("cannot write {}", file.display()))?;
            eprintln!(
                "wrote {} ({} entries, {} basis vectors)",
                file.display(),
                table.entries.len(),
                table.basis.len()
            );
        }
        None => print!("{text}"),
    }
    Ok(EXIT_PASS)
}

/// Pad every term of a state with unit creators up to level `n`.
fn pad_to_level(
    alg: &GradedFrobeniusAlgebra,
    v: &FockVector,
    n: u32,
) -> anyhow::Result<FockVector> {
    let mut out = FockVector::zero();
    for (mono, c) in v.terms() {
        let level = mono.level();
        if level > n {
            bail!(
                "term {} has level {level}, above the ring level {n}",
                mono.display_with(alg, 'p')
            );
        }
        let padded = naklab::operators::prepend_unit_power(
            alg,
            (n - level) as i64,
            &FockVector::monomial(mono.clone(), c.clone()),
        );
        out.add_scaled(&padded, &Scalar::one());
    }
    Ok(out)
}

fn cmd_product(left: &str, right: &str, n: u32, model: &str) -> anyhow::Result<u8> {
    if n == 0 {
        bail!("the ring level must be at least 1");
    }
    let alg = resolve_model(model)?;
    let left_expr = parse_expr(&alg, left).with_context(|| format!("left argument {left:?}"))?;
    let right_expr =
        parse_expr(&alg, right).with_context(|| format!("right argument {right:?}"))?;
    let Expr::State {
        letter: right_letter,
        vector: right_vector,
    } = right_expr
    else {
        bail!("the right argument must be a state, like \"p[-2](1)|0>\"");
    };

    // The letters fix the side; `O`/`p` live on the orbifold, `G`/`a` on
    // the quantum-corrected resolution.
    let side = match (&left_expr, right_letter) {
        (Expr::Chain { letter: 'O', .. }, Some('a'))
        | (Expr::Chain { letter: 'G', .. }, Some('p')) => {
            bail!("mixed sides: O goes with p states, G with a states")
        }
        (Expr::Chain { letter: 'O', .. }, _) => Side::Orbifold,
        (Expr::Chain { letter: 'G', .. }, _) => Side::QuantumCorrected,
        (Expr::State { letter, .. }, right_letter) => match (letter, right_letter) {
            (Some('a'), Some('p')) | (Some('p'), Some('a')) => {
                bail!("mixed sides: both states must use the same letter")
            }
            (Some('a'), _) | (None, Some('a')) => Side::QuantumCorrected,
            _ => Side::Orbifold,
        },
        (Expr::Chain { .. }, _) => unreachable!("chains only carry O or G"),
    };

    let right_padded = pad_to_level(&alg, &right_vector, n)?;
    let left_class = match &left_expr {
        Expr::Chain { factors, .. } => {
            // The chain acts as multiplication operators on the unit class;
            // orders above n-1 are legal, they just land in classes the
            // reduction never needs.
            let mut class = unit_power_class(&alg, n);
            for &(order, basis) in factors.iter().rev() {
                let alpha = AlgebraElement::basis(basis);
                let op = match side {
                    Side::Orbifold => ok_operator(&alg, order, &alpha, false),
                    Side::QuantumCorrected => gtilde_operator(&alg, order, &alpha, false),
                };
                class = op.apply(&class);
            }
            class
        }
        Expr::State { vector, .. } => pad_to_level(&alg, vector, n)?,
    };

    let ring = match build_ring(&alg, side, n) {
        Ok(ring) => ring,
        Err(err @ RingError::GenerationFailure { .. }) => {
            emit(&json!({ "error": err.to_string() }));
            eprintln!("{err}");
            return Ok(EXIT_GENERATION);
        }
        Err(err) => return Err(anyhow!(err)),
    };
    let product = ring
        .ring_product(&left_class, &right_padded)
        .map_err(|e| anyhow!(e))?;

    let letter = side.letter();
    let terms: Vec<serde_json::Value> = product
        .terms()
        .map(|(mono, c)| {
            json!({
                "monomial": mono.display_with(&alg, letter),
                "re": rational_file_string(&c.re),
                "im": rational_file_string(&c.im),
            })
        })
        .collect();
    emit(&json!({
        "model": alg.name(),
        "side": side.name(),
        "n": n,
        "left": left,
        "right": right,
        "product": product.display_with(&alg, letter),
        "terms": terms,
    }));
    eprintln!("{}", product.display_with(&alg, letter));
    Ok(EXIT_PASS)
}

fn cmd_extract_f(
    k: u32,
    lambda: &str,
    models: &[String],
    extra_levels: u32,
) -> anyhow::Result<u8> {
    if k == 0 {
        bail!("the order-0 tower has no canonical corrections; use k >= 1");
    }
    let modes = parse_modes(lambda)?;
    if modes.iter().any(|&m| m > 0) {
        bail!("slot partitions consist of creation modes, so all parts must be negative");
    }
    let part = GeneralizedPartition::new(&modes).expect("parse_modes rejects zero");
    let slot = if part.length() == k as usize {
        "K"
    } else if k >= 2 && part.length() == k as usize - 1 {
        "K^2"
    } else {
        bail!(
            "a K-slot at order {k} has {k} parts and a K^2-slot has {}; {} has {}",
            k - 1,
            part.text(),
            part.length()
        );
    };
    let names: Vec<String> = if models.is_empty() {
        ["p2", "p1xp1", "p2-blowup-2"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        models.to_vec()
    };
    let algs: Vec<Arc<GradedFrobeniusAlgebra>> = names
        .iter()
        .map(|name| resolve_model(name))
        .collect::<anyhow::Result<_>>()?;

    let extraction = match extract_universal_f(&algs, k, part.weight(), extra_levels) {
        Ok(e) => e,
        Err(err @ (ExtractError::Inconsistent { .. } | ExtractError::ModelDisagreement { .. })) => {
            emit(&json!({ "error": err.to_string() }));
            eprintln!("{err}");
            return Ok(EXIT_FAIL);
        }
        Err(err) => return Err(anyhow!(err)),
    };
    let table = if slot == "K" {
        &extraction.canonical
    } else {
        &extraction.canonical_squared
    };
    let value = table.get(&part.text()).ok_or_else(|| {
        anyhow!(
            "slot {} is outside the probe budget; raise --extra-levels",
            part.text()
        )
    })?;
    let model_names: Vec<&str> = algs.iter().map(|a| a.name()).collect();
    emit(&json!({
        "k": k,
        "lambda": part.text(),
        "slot": slot,
        "mode": part.weight(),
        "value": value.compact_string(),
        "models": model_names,
        "extra_levels": extra_levels,
    }));
    eprintln!("f_{slot}({}) = {}", part.text(), value.compact_string());
    Ok(EXIT_PASS)
}

fn cmd_fixtures(dir: &Path) -> anyhow::Result<u8> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    for name in fixtures::names() {
        let alg = fixtures::by_name(name).expect("names() lists fixtures");
        let path = dir.join(format!("{name}.json"));
        alg.save_file(&path)
            .map_err(|e| anyhow!("writing {}: {e}", path.display()))?;
        eprintln!("wrote {}", path.display());
        written.push(path.display().to_string());
    }
    emit(&json!({ "written": written }));
    Ok(EXIT_PASS)
}
