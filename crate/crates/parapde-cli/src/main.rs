//! `parapde` — scheme verification, parareal convergence-factor analysis and
//! experiment presets for parabolic problems.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verification mismatch.

mod config;
mod experiments;

use clap::{Parser, Subcommand};
use config::{ExperimentConfig, GuessKind, InitialData, Preset};
use parapde::analysis::{find_threshold, kappa, kappa_curve, parareal_factor, SupLocation};
use parapde::schemes::{
    builtin, verify_order, verify_p1, verify_p3, verify_strict_accuracy, SCHEME_NAMES,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "parapde",
    version,
    about = "parareal solvers for 1D parabolic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check stability, accuracy order and strict accuracy of the catalog
    /// schemes.
    Verify {
        /// Scheme name; omit to verify the whole catalog.
        #[arg(long)]
        scheme: Option<String>,
        /// Sample count for the stability grid.
        #[arg(long, default_value_t = 400)]
        samples: usize,
        /// Emit machine-readable JSON lines instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Convergence-factor table Φ(J), threshold J_* and optional per-J
    /// profile for a scheme.
    Analyze {
        #[arg(long)]
        scheme: String,
        /// Contraction target γ for the threshold search.
        #[arg(long, default_value_t = 0.31)]
        gamma: f64,
        /// Largest ratio J to scan.
        #[arg(long, default_value_t = 64)]
        j_max: u32,
        /// Also write the (s, factor) profile for this ratio.
        #[arg(long)]
        j: Option<u32>,
        /// Also write the κ_α curve with this many points.
        #[arg(long)]
        kappa_curve: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the κ_α curve for α in [0, 2].
    KappaCurve {
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Output CSV path.
        #[arg(long, default_value = "out/kappa_curve.csv")]
        out: PathBuf,
    },
    /// Run an experiment preset or a config file.
    Run {
        /// ex1a (smooth linear), ex1b (nonsmooth linear), ex2 (Allen-Cahn)
        /// or custom.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Config file with one or more [run] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to these schemes (repeatable).
        #[arg(long)]
        scheme: Vec<String>,
        /// Restrict to these coarse-to-fine ratios (repeatable).
        #[arg(long)]
        j: Vec<usize>,
        #[arg(long)]
        m_intervals: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<String>,
        /// constant-u0 or coarse-sweep.
        #[arg(long)]
        initial_guess: Option<String>,
        /// step, smooth-compatible, smooth-verbatim or cosine.
        #[arg(long)]
        u0: Option<String>,
        /// Reserved; all algorithms are deterministic.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit a gnuplot script stub next to each CSV.
        #[arg(long)]
        gnuplot: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Verify {
            scheme,
            samples,
            json,
        } => cmd_verify(scheme, samples, json),
        Command::Analyze {
            scheme,
            gamma,
            j_max,
            j,
            kappa_curve,
            out,
        } => cmd_analyze(&scheme, gamma, j_max, j, kappa_curve, &out),
        Command::KappaCurve { points, out } => cmd_kappa_curve(points, &out),
        Command::Run {
            preset,
            config,
            scheme,
            j,
            m_intervals,
            k_max,
            threads,
            out,
            initial_guess,
            u0,
            seed,
            gnuplot,
        } => cmd_run(RunArgs {
            preset,
            config,
            scheme,
            j,
            m_intervals,
            k_max,
            threads,
            out,
            initial_guess,
            u0,
            seed,
            gnuplot,
        }),
    };
    std::process::exit(code);
}

fn cmd_verify(scheme: Option<String>, samples: usize, json: bool) -> i32 {
    let names: Vec<String> = match scheme {
        Some(s) => vec![s],
        None => SCHEME_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let mut all_ok = true;
    for name in names {
        let spec = match builtin(&name) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
        let p1 = verify_p1(&spec, samples);
        let p3 = verify_p3(&spec);
        let strict = verify_strict_accuracy(&spec);
        let strict_ok = strict == spec.strictly_accurate_order;
        let (order_ok, measured, slope, quad_order) = match verify_order(&spec) {
            Ok(rep) => (true, rep.measured, rep.slope, rep.quadrature_order),
            Err(parapde::schemes::SchemeError::OrderMismatch {
                measured, slope, ..
            }) => (false, measured, slope, 0),
            Err(e) => {
                eprintln!("error: {e}");
                return 3;
            }
        };
        let r_inf = spec.r_at_minus_infinity();
        let pass = p1.pass && p3.pass && order_ok && strict_ok;
        all_ok &= pass;
        if json {
            println!(
                "{{\"scheme\":\"{}\",\"stages\":{},\"declared_order\":{},\"measured_order\":{},\"slope\":{:.4},\"quadrature_order\":{},\"strict_order\":{},\"r_at_minus_inf\":{:.12},\"p1\":{},\"p3\":{},\"pass\":{}}}",
                spec.name,
                spec.stages(),
                spec.declared_order,
                measured,
                slope,
                quad_order,
                strict,
                r_inf,
                p1.pass,
                p3.pass,
                pass
            );
        } else {
            let stability = if r_inf.abs() < 1e-10 {
                "L-stable".to_string()
            } else {
                format!("A-stable, |r(-inf)| = {:.6}", r_inf.abs())
            };
            println!(
                "scheme {:14} stages {}  order {} (slope {:.2})  quadrature order {}  strictly accurate order {}  {}  P1 {}  P3 {}  -> {}",
                spec.name,
                spec.stages(),
                measured,
                slope,
                quad_order,
                strict,
                stability,
                if p1.pass { "pass" } else { "FAIL" },
                if p3.pass { "pass" } else { "FAIL" },
                if pass { "PASS" } else { "FAIL" }
            );
        }
    }
    if all_ok {
        0
    } else {
        4
    }
}

fn cmd_analyze(
    scheme: &str,
    gamma: f64,
    j_max: u32,
    profile_j: Option<u32>,
    curve_points: Option<usize>,
    out: &PathBuf,
) -> i32 {
    let spec = match builtin(scheme) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 2;
    }

    let report = match find_threshold(&spec.r, gamma, j_max) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let mut csv = String::from("j,phi,argmax_s,tail_bound_used\n");
    for f in &report.table {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            f.j, f.phi, f.argmax_s, f.tail_bound_used
        ));
    }
    let table_path = out.join(format!("factors_{scheme}.csv"));
    if let Err(e) = std::fs::write(&table_path, csv) {
        eprintln!("error: cannot write {}: {e}", table_path.display());
        return 2;
    }
    println!("wrote {}", table_path.display());

    if let Some(j) = profile_j {
        let s_max = 1e4f64.max(100.0 * j as f64);
        let mut csv = String::from("s,factor\n");
        for i in 0..2000 {
            let s = (1e-6f64.ln() + (s_max / 1e-6).ln() * i as f64 / 1999.0).exp();
            let rho = spec.r.eval_real(-s / j as f64).unwrap_or(f64::NAN);
            let factor = ((1.0 + s) * rho.powi(j as i32) - 1.0) / s;
            csv.push_str(&format!("{s},{factor}\n"));
        }
        let profile_path = out.join(format!("profile_{scheme}_J{j}.csv"));
        if let Err(e) = std::fs::write(&profile_path, csv) {
            eprintln!("error: cannot write {}: {e}", profile_path.display());
            return 2;
        }
        match parareal_factor(&spec.r, j) {
            Ok(f) => println!(
                "scheme {scheme}: Phi({j}) = {:.6} (argmax s = {:.4}{})",
                f.phi,
                f.argmax_s,
                if f.tail_bound_used {
                    ", tail bound"
                } else {
                    ""
                }
            ),
            Err(e) => {
                eprintln!("error: {e}");
                return 3;
            }
        }
    }

    if let Some(n) = curve_points {
        if let Err(code) = write_kappa_curve(n, &out.join("kappa_curve.csv")) {
            return code;
        }
    }

    let limit = kappa(1.0).expect("alpha = 1 in range").kappa;
    match report.j_star {
        Some(j_star) => {
            println!(
                "scheme {scheme}: J* = {j_star} for gamma = {gamma} (scanned J <= {j_max}); limiting factor kappa_1 = {limit:.4}"
            );
            0
        }
        None => {
            eprintln!(
                "scheme {scheme}: no J in [2, {j_max}] keeps the factor below {gamma} (table written)"
            );
            3
        }
    }
}

fn write_kappa_curve(points: usize, path: &PathBuf) -> Result<(), i32> {
    let curve = match kappa_curve(points) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(2);
        }
    };
    if let Some(parent) = path.parent() {
        if let Err(e) = std::fs::create_dir_all(parent) {
            eprintln!("error: cannot create {}: {e}", parent.display());
            return Err(2);
        }
    }
    let mut csv = String::from("alpha,kappa,argsup_s,zero_limit\n");
    for k in curve {
        let (s, zero) = match k.argsup {
            SupLocation::At(s) => (s, false),
            SupLocation::ZeroLimit => (0.0, true),
        };
        csv.push_str(&format!("{},{},{},{}\n", k.alpha, k.kappa, s, zero));
    }
    if let Err(e) = std::fs::write(path, csv) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return Err(2);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_kappa_curve(points: usize, out: &PathBuf) -> i32 {
    match write_kappa_curve(points, out) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

struct RunArgs {
    preset: Option<String>,
    config: Option<PathBuf>,
    scheme: Vec<String>,
    j: Vec<usize>,
    m_intervals: Option<usize>,
    k_max: Option<usize>,
    threads: Option<usize>,
    out: Option<String>,
    initial_guess: Option<String>,
    u0: Option<String>,
    seed: Option<u64>,
    gnuplot: bool,
}

fn cmd_run(args: RunArgs) -> i32 {
    let mut configs: Vec<ExperimentConfig> = if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return 2;
            }
        };
        match ExperimentConfig::parse_file(&text) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return 2;
            }
        }
    } else {
        let preset = match args.preset.as_deref().map(Preset::parse).transpose() {
            Ok(p) => p.unwrap_or(Preset::Ex1b),
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
        vec![ExperimentConfig::preset_defaults(preset)]
    };

    // command-line overrides
    for cfg in &mut configs {
        if !args.scheme.is_empty() {
            cfg.schemes = args.scheme.clone();
        }
        if !args.j.is_empty() {
            cfg.js = args.j.clone();
        }
        if let Some(m) = args.m_intervals {
            cfg.m_intervals = m;
        }
        if let Some(k) = args.k_max {
            cfg.k_max = k;
        }
        if let Some(t) = args.threads {
            cfg.threads = t;
        }
        if let Some(out) = &args.out {
            cfg.out = out.clone();
        }
        if let Some(g) = &args.initial_guess {
            cfg.initial_guess = match g.as_str() {
                "constant-u0" => GuessKind::ConstantU0,
                "coarse-sweep" => GuessKind::CoarseSweep,
                other => {
                    eprintln!("error: unknown initial guess `{other}`");
                    return 2;
                }
            };
        }
        if let Some(u0) = &args.u0 {
            cfg.u0 = match u0.as_str() {
                "step" => InitialData::Step,
                "smooth-compatible" => InitialData::SmoothCompatible,
                "smooth-verbatim" => InitialData::SmoothVerbatim,
                "cosine" => InitialData::Cosine,
                other => {
                    eprintln!("error: unknown initial data `{other}`");
                    return 2;
                }
            };
        }
        cfg.seed = args.seed;
    }

    for cfg in &configs {
        match experiments::execute(cfg, args.gnuplot) {
            Ok(outcomes) => {
                for o in outcomes {
                    let factor = o
                        .factor
                        .map(|f| format!("{f:.4}"))
                        .unwrap_or_else(|| "n/a".into());
                    println!(
                        "run {:28} factor {:>7}  iterations {:3}  wall {:7.2}s  -> {}",
                        o.name,
                        factor,
                        o.iterations,
                        o.wall_secs,
                        o.csv_path.display()
                    );
                }
            }
            Err(e) => {
                eprintln!("error: {}", e.message());
                return e.code();
            }
        }
    }
    0
}
