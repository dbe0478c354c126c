//! spdelab: command-line front end for the laboratory.
//!
//! Subcommands: `run` (one configured experiment), `verify` (the pinned
//! acceptance suites), `catalog` (built-in fields, forcings,
//! nonlinearities, the default model), and direct solver probes
//! `resolvent`, `evolve`, `schvar`.
//!
//! Exit codes: 0 all declared checks passed; 1 numeric failure (a scored
//! metric missed its tolerance, or an estimator/simulation error); 2
//! configuration or argument errors. Thread budget precedence:
//! `--threads` flag, then the SPDELAB_THREADS environment variable, then
//! the config's run block, then all available cores.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use spdelab_core::acceptance::{run_criterion, suite_criteria};
use spdelab_core::config::{content_hash, ExperimentConfig};
use spdelab_core::error::{Error, Result};
use spdelab_core::experiments::run_experiment;
use spdelab_core::fields::{catalog, parse_field, parse_time_field};
use spdelab_core::model::SpectralModel;
use spdelab_core::nonlin::Nonlinearity;
use spdelab_core::report::{fmt_float, MetricRow, ResultRecord};
use spdelab_core::semigroup::McParams;
use spdelab_core::solvers::{
    evolve, resolvent, resolvent_d, schvar_solve, DirSpec, QuadratureScheme, SchvarOptions,
    VecFieldR,
};

#[derive(Parser)]
#[command(
    name = "spdelab",
    version,
    about = "A numerical laboratory for regularity estimates of stochastic evolution semigroups"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configured experiment and write its result files.
    Run {
        /// Path to the experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores). Overrides SPDELAB_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// Run an acceptance suite at pinned seeds and print the criteria table.
    Verify {
        /// Suite: all, bounds, martingale, bel-oracle, decay, envelope,
        /// interp, resolvent, schvar, determinism.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long)]
        threads: Option<usize>,
        /// Directory for the criteria results.csv/json (default "out").
        #[arg(long)]
        out: Option<String>,
    },
    /// List built-in scalar fields, forcings, nonlinearities, and the
    /// default model.
    Catalog,
    /// Estimate the resolvent R(lambda)f at probe points, with the
    /// truncation tail bound; with --alpha, also the first derivative
    /// along the leading frame direction on the alpha-graded mesh.
    Resolvent {
        #[arg(long)]
        lambda: f64,
        /// Hölder grading for the derivative mesh (in (0, 1]).
        #[arg(long)]
        alpha: Option<f64>,
        /// Field spec from the catalog.
        #[arg(long, default_value = "sin:omega=1")]
        field: String,
        /// File of probe points: one point per line, comma- or
        /// whitespace-separated coordinates (default: a built-in probe).
        #[arg(long)]
        probe_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        /// Write results.csv/json here as well as printing.
        #[arg(long)]
        out: Option<String>,
    },
    /// Estimate the inhomogeneous evolution value v(t) at probe points.
    Evolve {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "sin:omega=1")]
        field: String,
        /// Forcing spec: zero, const:c=<v>, sindecay:omega=<w>,rate=<r>.
        #[arg(long, default_value = "sindecay:omega=1,rate=0.3")]
        forcing: String,
        #[arg(long)]
        probe_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Solve the perturbed-resolvent fixed point on the lattice and
    /// report its contraction diagnostics.
    Schvar {
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        /// Strength of the constant first-order coefficient field.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Argument(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Run {
            config,
            seed,
            threads,
            out,
        } => cmd_run(&config, seed, threads, out.as_deref()),
        Cmd::Verify {
            suite,
            threads,
            out,
        } => cmd_verify(&suite, threads, out.as_deref()),
        Cmd::Catalog => cmd_catalog(),
        Cmd::Resolvent {
            lambda,
            alpha,
            field,
            probe_file,
            seed,
            threads,
            out,
        } => cmd_resolvent(lambda, alpha, &field, probe_file.as_deref(), seed, threads, out.as_deref()),
        Cmd::Evolve {
            t,
            field,
            forcing,
            probe_file,
            seed,
            threads,
            out,
        } => cmd_evolve(t, &field, &forcing, probe_file.as_deref(), seed, threads, out.as_deref()),
        Cmd::Schvar {
            lambda,
            delta,
            seed,
            threads,
            out,
        } => cmd_schvar(lambda, delta, seed, threads, out.as_deref()),
    }
}

/// SPDELAB_THREADS, when set, must parse as a nonnegative integer.
fn env_threads() -> Result<Option<usize>> {
    match std::env::var("SPDELAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::argument(format!("SPDELAB_THREADS = '{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Install the global worker pool. 0 keeps rayon's default (all cores).
fn init_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

fn resolve_threads(flag: Option<usize>, cfg_threads: usize) -> Result<usize> {
    Ok(flag.or(env_threads()?).unwrap_or(cfg_threads))
}

fn print_metrics(rec: &ResultRecord) {
    println!(
        "{:<34} {:>20} {:>20} {:>20} {:>20} {:>7}",
        "metric", "value", "std_error", "target", "tolerance", "status"
    );
    for m in &rec.metrics {
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_else(|| "-".to_string());
        let status = match m.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        println!(
            "{:<34} {:>20} {:>20} {:>20} {:>20} {:>7}",
            m.name,
            fmt_float(m.value),
            opt(m.std_error),
            opt(m.target),
            opt(m.tolerance),
            status
        );
    }
}

fn finish(rec: &ResultRecord, dir: &str, formats: &[String]) -> Result<i32> {
    rec.write(Path::new(dir), formats)?;
    println!();
    for f in formats {
        match f.as_str() {
            "csv" => println!("wrote {dir}/results.csv"),
            "json" => println!("wrote {dir}/results.json"),
            "plotdata" => {
                for s in &rec.series {
                    println!("wrote {dir}/plotdata/{}.csv", s.name);
                }
            }
            _ => {}
        }
    }
    if rec.passed() {
        println!("PASS: all declared checks within tolerance");
        Ok(0)
    } else {
        let failing: Vec<&str> = rec
            .metrics
            .iter()
            .filter(|m| m.pass == Some(false))
            .map(|m| m.name.as_str())
            .collect();
        println!("FAIL: {}", failing.join(", "));
        Ok(1)
    }
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<&str>,
) -> Result<i32> {
    let raw = std::fs::read_to_string(config)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::from_toml_str(&raw)?;
    cfg.apply_overrides(seed, threads, env_threads()?, out);
    init_threads(cfg.run.threads)?;

    let mut rec = run_experiment(&cfg)?;
    rec.input_hash = content_hash(&raw);
    println!(
        "experiment {}  seed {}  config {}",
        rec.experiment, rec.seed, &rec.config_hash[..12]
    );
    print_metrics(&rec);
    finish(&rec, &cfg.output.dir, &cfg.output.formats)
}

fn cmd_verify(suite: &str, threads: Option<usize>, out: Option<&str>) -> Result<i32> {
    let ids = suite_criteria(suite)?;
    init_threads(threads.or(env_threads()?).unwrap_or(0))?;
    println!("acceptance suite '{suite}' ({} criteria)", ids.len());

    let mut rec = ResultRecord::new(format!("verify-{suite}"));
    rec.input_hash = content_hash(suite);
    rec.config_hash = content_hash(suite);
    let mut all_ok = true;
    let mut total = 0.0;
    for id in ids {
        let r = run_criterion(id);
        println!(
            "AC{:<2} {:<36} {}  [{:>6.1}s]  {}",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.wall_s,
            r.details
        );
        all_ok &= r.passed;
        total += r.wall_s;
        rec.metrics
            .push(MetricRow::check(format!("AC{}_{}", r.id, r.name), r.passed));
    }
    println!(
        "{}: {} in {:.1}s",
        suite,
        if all_ok { "all criteria passed" } else { "criteria FAILED" },
        total
    );
    let dir = out.unwrap_or("out");
    let formats = vec!["csv".to_string(), "json".to_string()];
    rec.write(Path::new(dir), &formats)?;
    println!("wrote {dir}/results.csv");
    Ok(if all_ok { 0 } else { 1 })
}

fn cmd_catalog() -> Result<i32> {
    let model = SpectralModel::default_desk();
    println!("scalar fields (spec -> class):");
    for e in catalog() {
        println!("  {:<22} {:<8} {}", e.pattern, e.class, e.what);
    }
    println!();
    println!("forcings: zero | const:c=<v> | sindecay:omega=<w>,rate=<r>");
    println!("nonlinearities: zero | radial-fixed:m=<v> | radial-state:m=<v>");
    println!();
    println!(
        "default model: {} modes, q_k = k^-2, beta = {}, rho = {}, trace exponent = {}, noise scale = {}",
        model.dim(),
        model.beta(),
        model.rho(),
        model.trace_exponent(),
        model.noise_scale()
    );
    println!(
        "  a_k in [{:.4}, {:.4}], r_k in [{:.4}, {:.4}]",
        model.a_eigs()[model.dim() - 1],
        model.a_eigs()[0],
        model.r_eigs()[model.dim() - 1],
        model.r_eigs()[0]
    );
    Ok(0)
}

/// Parse a probe file: one point per line, comma- or whitespace-separated
/// coordinates, `#` comments allowed. Every point must match the model
/// dimension.
fn read_probes(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::argument(format!("cannot read probe file {}: {e}", path.display())))?;
    let mut probes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords: Result<Vec<f64>> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::argument(format!("probe line {}: bad number '{s}'", i + 1)))
            })
            .collect();
        let coords = coords?;
        if coords.len() != dim {
            return Err(Error::argument(format!(
                "probe line {}: {} coordinates, model needs {dim}",
                i + 1,
                coords.len()
            )));
        }
        probes.push(coords);
    }
    if probes.is_empty() {
        return Err(Error::argument(format!(
            "probe file {} holds no probe points",
            path.display()
        )));
    }
    Ok(probes)
}

fn default_probes(model: &SpectralModel) -> Vec<Vec<f64>> {
    vec![(0..model.dim()).map(|k| 0.3 / (k as f64 + 1.0)).collect()]
}

fn probe_label(p: &[f64]) -> String {
    // first two coordinates identify a probe in the printouts
    format!("({:.3},{:.3},..)", p[0], p.get(1).copied().unwrap_or(0.0))
}

#[allow(clippy::too_many_arguments)]
fn cmd_resolvent(
    lambda: f64,
    alpha: Option<f64>,
    field: &str,
    probe_file: Option<&Path>,
    seed: u64,
    threads: Option<usize>,
    out: Option<&str>,
) -> Result<i32> {
    init_threads(resolve_threads(threads, 0)?)?;
    let model = SpectralModel::default_desk();
    let g = Nonlinearity::zero();
    let f = parse_field(field, &model)?;
    let consts = model.compute_constants(0.0)?;
    let scheme = QuadratureScheme::for_value(lambda, &consts, 12)?;
    let probes = match probe_file {
        Some(p) => read_probes(p, model.dim())?,
        None => default_probes(&model),
    };
    let mc = McParams::new(0.01, 4000, 1, seed);

    let mut rec = ResultRecord::new("resolvent");
    rec.seed = seed;
    rec.input_hash = content_hash(&format!("{lambda}:{alpha:?}:{field}"));
    rec.config_hash = rec.input_hash.clone();
    if scheme.small_lambda_caveat {
        println!(
            "note: lambda = {lambda} leaves no comfortable decay margin; the tail bound uses the capped cut t = {:.2}",
            scheme.t_cut
        );
    }
    for (i, x) in probes.iter().enumerate() {
        let res = resolvent(&model, &g, &f, x, &scheme, &mc)?;
        println!(
            "u{} = R({lambda}){field} at {}: {:.6} +- {:.2e}  (tail bound {}, mass defect {:.1e})",
            i,
            probe_label(x),
            res.estimate.value,
            res.estimate.std_error,
            res.tail_bound
                .map(|t| format!("{t:.2e}"))
                .unwrap_or_else(|| "n/a".to_string()),
            res.mass_defect
        );
        rec.metrics.push(
            MetricRow::info(format!("u_probe{i}"), res.estimate.value)
                .with_se(res.estimate.std_error),
        );
        if let Some(a) = alpha {
            let d_scheme = QuadratureScheme::for_derivative(lambda, &consts, a, 12)?;
            let mut h = vec![0.0; model.dim()];
            h[0] = model.r_eigs()[0];
            let d = resolvent_d(&model, &g, &f, x, &DirSpec::First(&h), &d_scheme, &mc)?;
            println!(
                "  D_1 u{} (alpha = {a} mesh): {:.6} +- {:.2e}",
                i, d.estimate.value, d.estimate.std_error
            );
            rec.metrics.push(
                MetricRow::info(format!("d1_probe{i}"), d.estimate.value)
                    .with_se(d.estimate.std_error),
            );
        }
    }
    match out {
        Some(dir) => finish(&rec, dir, &["csv".to_string(), "json".to_string()]),
        None => Ok(0),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_evolve(
    t: f64,
    field: &str,
    forcing: &str,
    probe_file: Option<&Path>,
    seed: u64,
    threads: Option<usize>,
    out: Option<&str>,
) -> Result<i32> {
    if !(t > 0.0) {
        return Err(Error::argument("evolve: t must be > 0".to_string()));
    }
    init_threads(resolve_threads(threads, 0)?)?;
    let model = SpectralModel::default_desk();
    let g = Nonlinearity::zero();
    let f = parse_field(field, &model)?;
    let tf = parse_time_field(forcing)?;
    let probes = match probe_file {
        Some(p) => read_probes(p, model.dim())?,
        None => default_probes(&model),
    };
    let mc = McParams::new(0.005, 6000, 1, seed);

    let mut rec = ResultRecord::new("evolve");
    rec.seed = seed;
    rec.input_hash = content_hash(&format!("{t}:{field}:{forcing}"));
    rec.config_hash = rec.input_hash.clone();
    for (i, x) in probes.iter().enumerate() {
        let est = evolve(&model, &g, &f, &tf, t, x, &mc, 16)?;
        println!(
            "v({t}) at {}: {:.6} +- {:.2e}",
            probe_label(x),
            est.value,
            est.std_error
        );
        rec.metrics
            .push(MetricRow::info(format!("v_probe{i}"), est.value).with_se(est.std_error));
    }
    match out {
        Some(dir) => finish(&rec, dir, &["csv".to_string(), "json".to_string()]),
        None => Ok(0),
    }
}

fn cmd_schvar(
    lambda: f64,
    delta: f64,
    seed: u64,
    threads: Option<usize>,
    out: Option<&str>,
) -> Result<i32> {
    init_threads(resolve_threads(threads, 0)?)?;
    let model = SpectralModel::default_desk();
    let g = Nonlinearity::zero();
    let f = parse_field("sin:omega=1", &model)?;
    let force = VecFieldR::constant_axis(&model, delta, 0)?;
    let mc = McParams::new(0.02, 600, 1, seed);
    let opts = SchvarOptions {
        lattice_n: 5,
        max_iters: 24,
        tol: 1e-10,
        ..SchvarOptions::modest()
    };
    let outp = schvar_solve(&model, &g, &f, &force, lambda, &mc, &opts)?;
    println!(
        "fixed point after {} iterations: converged = {}, contraction = {:.4}, residual rms z = {:.2}",
        outp.iterations, outp.converged, outp.contraction, outp.residual_rms_z
    );
    println!(
        "sup-gaps: [{}]",
        outp.sup_diffs
            .iter()
            .map(|d| format!("{d:.2e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );

    let mut rec = ResultRecord::new("schvar");
    rec.seed = seed;
    rec.input_hash = content_hash(&format!("{lambda}:{delta}"));
    rec.config_hash = rec.input_hash.clone();
    rec.metrics.push(MetricRow::check("converged", outp.converged));
    rec.metrics
        .push(MetricRow::info("contraction", outp.contraction));
    rec.metrics
        .push(MetricRow::at_most("residual_rms_z", outp.residual_rms_z, 3.0));
    match out {
        Some(dir) => finish(&rec, dir, &["csv".to_string(), "json".to_string()]),
        None => Ok(if rec.passed() { 0 } else { 1 }),
    }
}
