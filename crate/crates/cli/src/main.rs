//! `bbm`: batch front end for the oscillation-seminorm toolkit.
//!
//! One subcommand per computation: `gen` (synthetic grids), `norm`, `curve`,
//! `bmo`, `bv-compare`, `atom-validate`, `atom-pair`, `mollify`, `distance`,
//! and `oracle-check`. Exit codes: 0 success, 2 usage error, 3 numerical
//! inconsistency under `--strict`. Every artifact echoes the effective
//! configuration; same config and seed reproduce outputs byte for byte at
//! any `--threads` setting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use bbm_core::atoms;
use bbm_core::distance;
use bbm_core::error::Error;
use bbm_core::grid::GridFunction;
use bbm_core::io;
use bbm_core::mollifier::{self, MollifierParams};
use bbm_core::oscillation::{self, SelectMode};
use bbm_core::synth;

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "bbm", version, about = "Oscillation seminorms, cube-family brackets, atoms, and mollified approximants on grid functions")]
struct Cli {
    /// Worker threads (fallback: BBM_THREADS, then all cores). Results are
    /// identical at any setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON config file with defaults for mode/s/eps-cut/t/supersample/seed;
    /// command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Exit with code 3 when a numerical inconsistency flag fires.
    #[arg(long, global = true)]
    strict: bool,

    /// Emit machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    /// Family selection mode: exact (d=1), bnb, or greedy.
    #[arg(long)]
    mode: Option<String>,

    /// Anchor refinement: candidate anchors sit on the step eps/s lattice.
    #[arg(long)]
    s: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid function file.
    Gen {
        /// constant|step|checkerboard|indicator|cascade|random|smooth|logsing
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Seed for the random generator kinds.
        #[arg(long)]
        seed: Option<u64>,
        /// Value of the constant kind.
        #[arg(long, default_value_t = 1.0)]
        value: f64,
        /// Block side for checkerboard (fraction of the domain).
        #[arg(long, default_value_t = 0.25)]
        scale: f64,
        /// Indicator box, per-axis lo:hi pairs, comma separated
        /// (e.g. 0:0.5,0:0.5).
        #[arg(long)]
        rect: Option<String>,
        /// Cascade depth (default: every dyadic scale down to 2-cell blocks).
        #[arg(long)]
        depth: Option<usize>,
        /// Center of the log singularity, comma separated.
        #[arg(long)]
        center: Option<String>,
        /// Store values in a little-endian binary sidecar instead of inline.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// B-norm: max of the bracket over the full eps sweep.
    Norm {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Full oscillation curve (eps, value, cap, witness) as CSV.
    Curve {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the witness families as JSON.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Discrete BMO norm (sup of mean oscillation over all candidate cubes).
    Bmo {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        s: Option<usize>,
    },
    /// Unconstrained BV-type functional against the discrete total variation.
    BvCompare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        s: Option<usize>,
    },
    /// Check the atom conditions of an atom file.
    AtomValidate {
        #[arg(long)]
        atom: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Pair a grid function against an atom or an atomic functional.
    AtomPair {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, conflicts_with = "functional")]
        atom: Option<PathBuf>,
        #[arg(long)]
        functional: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Mollified approximant (or its intermediate stages) as a grid file.
    Mollify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t: Option<f64>,
        /// Kernel family; only the tensor-product tent is implemented.
        #[arg(long, default_value = "tent")]
        kernel: String,
        #[arg(long)]
        supersample: Option<usize>,
        /// rescale|mollify|approximant
        #[arg(long, default_value = "approximant")]
        stage: String,
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-sided distance estimate to the vanishing subspace.
    Distance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps_cut: Option<f64>,
        /// Comma-separated shrink factors for the approximant family.
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        supersample: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check a solver against the exhaustive oracle.
    OracleCheck {
        /// Grid file for a single-instance check; omit for a random battery.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        s: Option<usize>,
        /// Drop the cardinality cap in both the solver and the oracle.
        #[arg(long)]
        unconstrained: bool,
        #[arg(long)]
        mode: Option<String>,
        /// Number of random tiny instances for the battery form.
        #[arg(long)]
        random_instances: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Optional defaults loaded from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    s: Option<usize>,
    eps_cut: Option<f64>,
    t_grid: Option<Vec<f64>>,
    t: Option<f64>,
    supersample: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    inconsistency_tolerance: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Argument(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn parse_mode(cli: &Option<String>, file: &Option<String>, default: &str) -> Result<SelectMode> {
    SelectMode::from_str(cli.as_deref().or(file.as_deref()).unwrap_or(default))
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Argument(format!("bad number '{tok}': {e}")))
        })
        .collect()
}

fn parse_rect(text: &str, d: usize) -> Result<Vec<(f64, f64)>> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != d {
        return Err(Error::Argument(format!(
            "rect has {} axes, expected {d}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            let (lo, hi) = p
                .split_once(':')
                .ok_or_else(|| Error::Argument(format!("rect axis '{p}' is not lo:hi")))?;
            Ok((
                lo.trim().parse::<f64>().map_err(|e| Error::Argument(e.to_string()))?,
                hi.trim().parse::<f64>().map_err(|e| Error::Argument(e.to_string()))?,
            ))
        })
        .collect()
}

fn init_threads(cli_threads: Option<usize>, file_threads: Option<usize>) -> Result<usize> {
    let requested = cli_threads
        .or(file_threads)
        .or_else(|| std::env::var("BBM_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = requested {
        if t == 0 {
            return Err(Error::Argument("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
        Ok(t)
    } else {
        Ok(rayon::current_num_threads())
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: &Cli) -> Result<u8> {
    let file_cfg = load_config(cli.config.as_deref())?;
    let threads = init_threads(cli.threads, file_cfg.threads)?;

    match &cli.command {
        Command::Gen {
            kind,
            d,
            n,
            seed,
            value,
            scale,
            rect,
            depth,
            center,
            binary,
            out,
        } => {
            let seed = seed.or(file_cfg.seed).unwrap_or(0);
            let (d, n) = (*d, *n);
            let f: GridFunction<f64> = match kind.as_str() {
                "constant" => synth::constant(d, n, *value)?,
                "step" => synth::step(d, n)?,
                "checkerboard" => synth::checkerboard(d, n, *scale)?,
                "indicator" => {
                    let r = match rect {
                        Some(text) => parse_rect(text, d)?,
                        None => vec![(0.0, 0.5); d],
                    };
                    synth::indicator(d, n, &r)?
                }
                "cascade" => synth::cascade(d, n, depth.unwrap_or_else(|| synth::cascade_depth(n)))?,
                "random" => synth::random(d, n, seed)?,
                "smooth" => synth::smooth(d, n)?,
                "logsing" => {
                    let c = center.as_deref().map(parse_f64_list).transpose()?;
                    synth::log_singularity(d, n, c.as_deref())?
                }
                other => {
                    return Err(Error::Argument(format!(
                        "unknown kind '{other}' (expected constant|step|checkerboard|indicator|cascade|random|smooth|logsing)"
                    )))
                }
            };
            let cfg = json!({
                "command": "gen", "kind": kind, "d": d, "n": n, "seed": seed,
                "value": value, "scale": scale, "rect": rect, "depth": depth,
                "center": center, "threads": threads,
            });
            io::write_grid(out, &f, *binary, Some(&cfg))?;
            Ok(0)
        }

        Command::Norm { input, solver } => {
            let f = io::read_grid(input)?;
            let mode = parse_mode(&solver.mode, &file_cfg.mode, default_mode(f.d()))?;
            let s = solver.s.or(file_cfg.s).unwrap_or(2);
            let (norm, curve) = oscillation::b_norm(&f, mode, s)?;
            let witness_eps = curve.argmax().map(|e| e.epsilon);
            let cfg = json!({
                "command": "norm", "input": input, "mode": mode.to_string(), "s": s,
                "threads": threads,
            });
            print_json(&json!({
                "b_norm": norm,
                "witness_epsilon": witness_eps,
                "config": cfg,
            }));
            Ok(0)
        }

        Command::Curve {
            input,
            solver,
            out,
            witness,
        } => {
            let f = io::read_grid(input)?;
            let mode = parse_mode(&solver.mode, &file_cfg.mode, default_mode(f.d()))?;
            let s = solver.s.or(file_cfg.s).unwrap_or(2);
            let (_, curve) = oscillation::b_norm(&f, mode, s)?;
            let cfg = json!({
                "command": "curve", "input": input, "mode": mode.to_string(), "s": s,
                "threads": threads,
            });
            io::atomic_write(out, io::curve_csv(&curve, Some(&cfg)).as_bytes())?;
            if let Some(wpath) = witness {
                let mut w = io::curve_witness_json(&curve);
                w = json!({"config": cfg, "entries": w});
                io::atomic_write(wpath, serde_json::to_string_pretty(&w)?.as_bytes())?;
            }
            Ok(0)
        }

        Command::Bmo { input, s } => {
            let f = io::read_grid(input)?;
            let s = s.or(file_cfg.s).unwrap_or(2);
            let norm = oscillation::bmo_norm(&f, s)?;
            print_json(&json!({
                "bmo_norm": norm,
                "config": {"command": "bmo", "input": input, "s": s, "threads": threads},
            }));
            Ok(0)
        }

        Command::BvCompare { input, s } => {
            let f = io::read_grid(input)?;
            let s = s.or(file_cfg.s).unwrap_or(2);
            let bv = oscillation::bv_functional(&f, s)?;
            let tv = oscillation::discrete_tv(&f);
            let ratio = if tv > 0.0 { Some(bv / tv) } else { None };
            print_json(&json!({
                "bv_functional": bv,
                "discrete_tv": tv,
                "ratio": ratio,
                "config": {"command": "bv-compare", "input": input, "s": s, "threads": threads},
            }));
            Ok(0)
        }

        Command::AtomValidate { atom, tol } => {
            let a = io::read_atom(atom)?;
            let report = atoms::validate_atom(&a, *tol);
            print_json(&json!({
                "valid": report.valid,
                "support_violation": report.support_violation,
                "bound_excess": report.bound_excess,
                "mean_violation": report.mean_violation,
                "tol": report.tol,
                "config": {"command": "atom-validate", "atom": atom, "tol": tol},
            }));
            Ok(if !report.valid && cli.strict { 3 } else { 0 })
        }

        Command::AtomPair {
            input,
            atom,
            functional,
            solver,
        } => {
            let f = io::read_grid(input)?;
            let mode = parse_mode(&solver.mode, &file_cfg.mode, default_mode(f.d()))?;
            let s = solver.s.or(file_cfg.s).unwrap_or(2);
            let cfg = json!({
                "command": "atom-pair", "input": input, "mode": mode.to_string(), "s": s,
                "threads": threads,
            });
            match (atom, functional) {
                (Some(apath), None) => {
                    let a = io::read_atom(apath)?;
                    let value = atoms::pair(&f, &a)?;
                    let fv = oscillation::family_value(&f, a.family())?;
                    print_json(&json!({
                        "pair": value,
                        "family_value": fv,
                        "config": cfg,
                    }));
                }
                (None, Some(ppath)) => {
                    let phi = io::read_functional(ppath)?;
                    let value = atoms::functional_value(&f, &phi)?;
                    let (norm, _) = oscillation::b_norm(&f, mode, s)?;
                    print_json(&json!({
                        "functional_value": value,
                        "coefficient_l1": phi.coefficient_l1(),
                        "b_norm": norm,
                        "upper_bound": phi.coefficient_l1() * norm,
                        "config": cfg,
                    }));
                }
                _ => {
                    return Err(Error::Argument(
                        "atom-pair needs exactly one of --atom or --functional".into(),
                    ))
                }
            }
            Ok(0)
        }

        Command::Mollify {
            input,
            t,
            kernel,
            supersample,
            stage,
            binary,
            out,
        } => {
            if kernel != "tent" {
                return Err(Error::Argument(format!(
                    "unknown kernel '{kernel}' (only 'tent' is implemented)"
                )));
            }
            let f = io::read_grid(input)?;
            let t = t
                .or(file_cfg.t)
                .ok_or_else(|| Error::Argument("mollify needs --t".into()))?;
            let supersample = supersample
                .or(file_cfg.supersample)
                .unwrap_or(mollifier::DEFAULT_SUPERSAMPLE);
            let params = MollifierParams::new(t, supersample)?;
            let result = match stage.as_str() {
                "rescale" => mollifier::rescale(&f, t)?.values().clone(),
                "mollify" => mollifier::mollify(&mollifier::rescale(&f, t)?, &params)?,
                "approximant" => mollifier::approximant(&f, &params)?,
                other => {
                    return Err(Error::Argument(format!(
                        "unknown stage '{other}' (expected rescale|mollify|approximant)"
                    )))
                }
            };
            let cfg = json!({
                "command": "mollify", "input": input, "t": t, "kernel": kernel,
                "supersample": supersample, "stage": stage, "threads": threads,
            });
            io::write_grid(out, &result, *binary, Some(&cfg))?;
            Ok(0)
        }

        Command::Distance {
            input,
            eps_cut,
            t,
            supersample,
            solver,
            out,
        } => {
            let f = io::read_grid(input)?;
            let mode = parse_mode(&solver.mode, &file_cfg.mode, default_mode(f.d()))?;
            let s = solver.s.or(file_cfg.s).unwrap_or(2);
            let eps_cut = eps_cut.or(file_cfg.eps_cut).unwrap_or(0.25);
            let t_grid = match t {
                Some(text) => parse_f64_list(text)?,
                None => file_cfg
                    .t_grid
                    .clone()
                    .unwrap_or_else(|| vec![0.125, 0.0625, 0.03125]),
            };
            let supersample = supersample
                .or(file_cfg.supersample)
                .unwrap_or(mollifier::DEFAULT_SUPERSAMPLE);
            let tolerance = file_cfg.inconsistency_tolerance.unwrap_or(0.05);
            let report =
                distance::distance_report(&f, eps_cut, &t_grid, supersample, mode, s, tolerance)?;
            let cfg = json!({
                "command": "distance", "input": input, "eps_cut": eps_cut,
                "t_grid": t_grid, "supersample": supersample,
                "mode": mode.to_string(), "s": s, "threads": threads,
                "tolerance": tolerance,
            });
            let value = io::distance_report_json(&report, Some(&cfg));
            match out {
                Some(path) => io::atomic_write(path, serde_json::to_string_pretty(&value)?.as_bytes())?,
                None => print_json(&value),
            }
            Ok(if report.inconsistent && cli.strict { 3 } else { 0 })
        }

        Command::OracleCheck {
            input,
            eps,
            s,
            unconstrained,
            mode,
            random_instances,
            seed,
        } => {
            let s_val = s.or(file_cfg.s).unwrap_or(1);
            match (input, random_instances) {
                (Some(path), None) => {
                    let f = io::read_grid(path)?;
                    let eps = eps.ok_or_else(|| Error::Argument("oracle-check needs --eps".into()))?;
                    let mode = parse_mode(mode, &file_cfg.mode, exact_mode(f.d()))?;
                    let oracle = oscillation::oracle_family_value(&f, eps, !unconstrained, s_val)?;
                    let solver = if *unconstrained {
                        oscillation::bv_functional(&f, s_val)?
                    } else {
                        oscillation::bracket_epsilon(&f, eps, mode, s_val)?.0
                    };
                    let matches = if *unconstrained {
                        solver >= oracle - 1e-12
                    } else {
                        (oracle - solver).abs() <= 1e-12
                    };
                    print_json(&json!({
                        "oracle": oracle,
                        "solver": solver,
                        "matches": matches,
                        "config": {"command": "oracle-check", "input": path, "eps": eps,
                                   "s": s_val, "mode": mode.to_string(),
                                   "constrained": !unconstrained, "threads": threads},
                    }));
                    Ok(if !matches && cli.strict { 3 } else { 0 })
                }
                (None, Some(count)) => {
                    let seed = seed.or(file_cfg.seed).unwrap_or(0);
                    let (checked, mismatches) = oracle_battery(*count, seed, s_val)?;
                    print_json(&json!({
                        "instances": checked,
                        "mismatches": mismatches,
                        "config": {"command": "oracle-check", "random_instances": count,
                                   "seed": seed, "s": s_val, "threads": threads},
                    }));
                    Ok(if mismatches > 0 && cli.strict { 3 } else { 0 })
                }
                _ => Err(Error::Argument(
                    "oracle-check needs either --input (single instance) or --random-instances".into(),
                )),
            }
        }
    }
}

fn default_mode(d: usize) -> &'static str {
    if d == 1 {
        "exact"
    } else {
        "greedy"
    }
}

fn exact_mode(d: usize) -> &'static str {
    if d == 1 {
        "exact"
    } else {
        "bnb"
    }
}

/// Random tiny instances comparing the exact solver against the oracle,
/// mirroring the solver-exactness acceptance setup.
fn oracle_battery(count: usize, seed: u64, s: usize) -> Result<(usize, usize)> {
    use rand::Rng;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    while checked < count {
        let d = rng.gen_range(1..=2usize);
        let n = if d == 1 {
            rng.gen_range(2..=16usize)
        } else {
            rng.gen_range(2..=6usize)
        };
        let m = rng.gen_range(1..=n);
        let f: GridFunction<f64> = synth::random(d, n, rng.gen())?;
        let eps = m as f64 / n as f64;
        let oracle = match oscillation::oracle_family_value(&f, eps, true, s) {
            Ok(v) => v,
            Err(Error::Capacity { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mode = if d == 1 { SelectMode::Exact } else { SelectMode::Bnb };
        let solver = oscillation::bracket_epsilon(&f, eps, mode, s)?.0;
        if (oracle - solver).abs() > 1e-12 {
            mismatches += 1;
        }
        checked += 1;
    }
    Ok((checked, mismatches))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if cli.json_errors {
                let kind = match e {
                    Error::Domain(_) => "domain",
                    Error::Shape { .. } => "shape",
                    Error::Family(_) => "family",
                    Error::Capacity { .. } => "capacity",
                    Error::Argument(_) => "argument",
                    Error::Io(_) => "io",
                    Error::Format(_) => "format",
                };
                eprintln!(
                    "{}",
                    json!({"error": kind, "message": e.to_string()})
                );
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}
