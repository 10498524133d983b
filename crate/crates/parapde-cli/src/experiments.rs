//! Builds problems from an [`ExperimentConfig`] and runs the parareal
//! iteration, writing one CSV + config echo per (scheme, ratio) pair.

use crate::config::{ExperimentConfig, GuessKind, InitialData, Preset, ProblemKind};
use parapde::fem1d::{interpolate, project_indicator, BoundaryCondition, FemSystem, StateVector};
use parapde::parareal::{
    measured_factor, run, sequential_fine_reference, InitialGuess, PararealConfig, StopRule,
};
use parapde::propagators::{
    BackwardEulerCoarse, ForcingFn, IrkFineLinear, IrkFineSemilinear, LinearProblem, NewtonConfig,
    SemiImplicitEulerCoarse, SemilinearProblem,
};
use parapde::schemes::builtin;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }
}

pub struct RunOutcome {
    pub name: String,
    pub factor: Option<f64>,
    pub iterations: usize,
    pub wall_secs: f64,
    pub csv_path: PathBuf,
}

/// One concrete (scheme, J, dt) execution derived from a config.
struct RunSpec {
    scheme: String,
    j: usize,
    dt_fine: f64,
    n_coarse: usize,
    name: String,
}

fn expand(cfg: &ExperimentConfig) -> Result<Vec<RunSpec>, CliError> {
    let mut specs = Vec::new();
    match cfg.preset {
        Preset::Ex1a => {
            // fixed ratio, three coarse step sizes ΔT = 1/100, 1/300, 1/600
            let j = cfg.js[0];
            for scheme in &cfg.schemes {
                for n_coarse in [100usize, 300, 600] {
                    let dt_fine = cfg.t_final / (n_coarse * j) as f64;
                    specs.push(RunSpec {
                        scheme: scheme.clone(),
                        j,
                        dt_fine,
                        n_coarse,
                        name: format!("ex1a_{scheme}_J{j}_N{n_coarse}"),
                    });
                }
            }
        }
        _ => {
            for scheme in &cfg.schemes {
                for &j in &cfg.js {
                    let n_coarse = (cfg.t_final / (j as f64 * cfg.dt_fine)).round() as usize;
                    specs.push(RunSpec {
                        scheme: scheme.clone(),
                        j,
                        dt_fine: cfg.dt_fine,
                        n_coarse,
                        name: format!("{}_{scheme}_J{j}", cfg.preset.as_str()),
                    });
                }
            }
        }
    }
    Ok(specs)
}

fn initial_state(cfg: &ExperimentConfig, fem: &FemSystem) -> Result<StateVector, CliError> {
    let state = match cfg.u0 {
        InitialData::Step => project_indicator(&fem.mesh, &fem.mass, PI / 2.0)
            .map_err(|e| CliError::Numerical(e.to_string()))?,
        InitialData::SmoothCompatible => interpolate(
            &fem.mesh,
            |x| x.powi(5) * (PI - x).powi(5) / (PI / 2.0).powi(10),
            0.0,
        ),
        InitialData::SmoothVerbatim => interpolate(
            &fem.mesh,
            |x| x.powi(5) * (1.0 - x).powi(5) / (PI / 2.0).powi(10),
            0.0,
        ),
        InitialData::Cosine => interpolate(&fem.mesh, |x| x.cos(), 0.0),
    };
    Ok(state)
}

fn forcing_for(preset: Preset) -> Option<Arc<ForcingFn>> {
    match preset {
        Preset::Ex1a => None,
        _ => Some(Arc::new(|x: f64, t: f64| t.cos() * x.sin())),
    }
}

fn artifact_stamp(cfg: &ExperimentConfig, spec: &RunSpec, outcome: &RunOutcome) -> String {
    let mut echo = ExperimentConfig {
        schemes: vec![spec.scheme.clone()],
        js: vec![spec.j],
        dt_fine: spec.dt_fine,
        ..cfg.clone()
    }
    .emit();
    let factor = outcome
        .factor
        .map(|f| format!("{f:.6}"))
        .unwrap_or_else(|| "n/a".into());
    echo.push_str(&format!(
        "# provenance: parapde {} scheme={} build=cli-{}\n# summary: factor={} iterations={} wall_s={:.3}\n",
        env!("CARGO_PKG_VERSION"),
        spec.scheme,
        env!("CARGO_PKG_VERSION"),
        factor,
        outcome.iterations,
        outcome.wall_secs
    ));
    echo
}

fn gnuplot_stub(name: &str) -> String {
    format!(
        "set datafile separator ','\nset logscale y\nset xlabel 'iteration k'\nset ylabel 'max error'\nplot '{name}.csv' using 1:2 with linespoints title '{name}'\n"
    )
}

pub fn execute(cfg: &ExperimentConfig, gnuplot: bool) -> Result<Vec<RunOutcome>, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let out_dir = Path::new(&cfg.out);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut outcomes = Vec::new();
    for spec in expand(cfg)? {
        let scheme = Arc::new(builtin(&spec.scheme).map_err(|e| CliError::Config(e.to_string()))?);
        let par_cfg = PararealConfig {
            coarse_intervals: spec.n_coarse,
            fine_steps_per_interval: spec.j,
            dt_fine: spec.dt_fine,
            k_max: cfg.k_max,
            stop: StopRule::FixedBudget,
            initial_guess: match cfg.initial_guess {
                GuessKind::ConstantU0 => InitialGuess::ConstantU0,
                GuessKind::CoarseSweep => InitialGuess::CoarseSweep,
            },
            threads: cfg.threads,
        };

        let started = Instant::now();
        let history = match cfg.problem {
            ProblemKind::LinearDiffusion => {
                let fem = Arc::new(
                    FemSystem::new(cfg.m_intervals, BoundaryCondition::Dirichlet)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                );
                let problem = LinearProblem::new(fem.clone(), forcing_for(cfg.preset), cfg.t_final);
                let coarse = BackwardEulerCoarse::new(problem.clone());
                let fine = IrkFineLinear::new(problem, scheme)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let u0 = initial_state(cfg, &fem)?;
                let reference = sequential_fine_reference(&u0, &fine, &par_cfg)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                run(&u0, &coarse, &fine, &par_cfg, &fem.mass, &reference)
                    .map_err(|e| CliError::Numerical(e.to_string()))?
            }
            ProblemKind::AllenCahn => {
                let fem = Arc::new(
                    FemSystem::new(cfg.m_intervals, BoundaryCondition::Neumann)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                );
                let problem = SemilinearProblem::new(fem.clone(), cfg.epsilon, cfg.t_final);
                let coarse = SemiImplicitEulerCoarse::new(problem.clone());
                let fine = IrkFineSemilinear::new(problem, scheme, NewtonConfig::default())
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let u0 = initial_state(cfg, &fem)?;
                let reference = sequential_fine_reference(&u0, &fine, &par_cfg)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                run(&u0, &coarse, &fine, &par_cfg, &fem.mass, &reference)
                    .map_err(|e| CliError::Numerical(e.to_string()))?
            }
        };
        let wall_secs = started.elapsed().as_secs_f64();

        let csv_path = out_dir.join(format!("{}.csv", spec.name));
        std::fs::write(&csv_path, history.to_csv())
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", csv_path.display())))?;
        let outcome = RunOutcome {
            name: spec.name.clone(),
            factor: measured_factor(&history).ok(),
            iterations: history.records.len() - 1,
            wall_secs,
            csv_path,
        };
        let echo_path = out_dir.join(format!("{}.cfg", spec.name));
        std::fs::write(&echo_path, artifact_stamp(cfg, &spec, &outcome))
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", echo_path.display())))?;
        if gnuplot {
            let gp_path = out_dir.join(format!("{}.gp", spec.name));
            std::fs::write(&gp_path, gnuplot_stub(&spec.name)).map_err(|e| {
                CliError::Config(format!("cannot write {}: {e}", gp_path.display()))
            })?;
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
