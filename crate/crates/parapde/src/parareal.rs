//! The parareal iteration.
//!
//! One iteration runs the fine propagator over all coarse subintervals in
//! parallel (J serial fine steps per subinterval), then sweeps the coarse
//! propagator sequentially through the correction
//!
//! ```text
//! U_{k+1}^{n+1} = 𝒢(T_n, ΔT, U_{k+1}^n) + ℱ^J(T_n, U_k^n) − 𝒢(T_n, ΔT, U_k^n)
//! ```
//!
//! with `U_{k+1}^0 = u⁰` pinned every iteration. The coarse values of the
//! previous iterate are cached from the preceding sweep, so each iteration
//! costs one fine sweep plus one coarse sweep. Errors are tracked against the
//! sequential fine solution in the discrete L² (mass) norm.

use crate::fem1d::{mass_norm, StateVector, TriMatrix};
use crate::propagators::{Propagator, PropagatorError};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("only {usable} iterations in the linear regime; need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },
}

/// How U_0 is seeded before the first correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// Sequential coarse sweep from u⁰.
    CoarseSweep,
    /// U_0^n = u⁰ for every coarse node.
    ConstantU0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run exactly `k_max` corrections.
    FixedBudget,
    /// Stop once the successive-iterate change max_n ‖U_{k+1}^n − U_k^n‖_M
    /// drops below the tolerance; `k_max` stays the hard budget.
    SuccessiveTolerance(f64),
}

#[derive(Debug, Clone)]
pub struct PararealConfig {
    /// Number of coarse subintervals N_c.
    pub coarse_intervals: usize,
    /// Fine steps per coarse interval, J ≥ 1 (ΔT = J·Δt).
    pub fine_steps_per_interval: usize,
    pub dt_fine: f64,
    /// Maximum number of corrections.
    pub k_max: usize,
    pub stop: StopRule,
    pub initial_guess: InitialGuess,
    pub threads: usize,
}

impl PararealConfig {
    pub fn coarse_dt(&self) -> f64 {
        self.fine_steps_per_interval as f64 * self.dt_fine
    }

    pub fn final_time(&self) -> f64 {
        self.coarse_intervals as f64 * self.coarse_dt()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.coarse_intervals == 0 {
            return Err(EngineError::InvalidConfig("no coarse intervals".into()));
        }
        if self.fine_steps_per_interval == 0 {
            return Err(EngineError::InvalidConfig("J must be >= 1".into()));
        }
        if !(self.dt_fine > 0.0) {
            return Err(EngineError::InvalidConfig("dt must be positive".into()));
        }
        if self.k_max == 0 {
            return Err(EngineError::InvalidConfig("k_max must be >= 1".into()));
        }
        if let StopRule::SuccessiveTolerance(tol) = self.stop {
            if !(tol > 0.0) {
                return Err(EngineError::InvalidConfig(
                    "tolerance must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// max_n ‖U_k^n − u^{nJ}‖_M over the coarse nodes n ≥ 1.
    pub max_error: f64,
    /// per-node errors, index n − 1.
    pub error_profile: Vec<f64>,
    pub fine_sweep_ms: f64,
}

#[derive(Debug, Clone)]
pub struct IterationHistory {
    pub records: Vec<IterationRecord>,
    /// Iteration at which the successive-change tolerance was met.
    pub converged_at: Option<usize>,
    /// True when a tolerance stop rule exhausted `k_max` without converging.
    pub budget_exceeded: bool,
}

impl IterationHistory {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.max_error).collect()
    }

    /// CSV with the per-iteration summary. `factor_estimate` is the ratio of
    /// successive max errors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,max_error,factor_estimate,fine_sweep_ms\n");
        for (i, rec) in self.records.iter().enumerate() {
            let factor = if i == 0 {
                String::new()
            } else {
                let prev = self.records[i - 1].max_error;
                if prev > 0.0 {
                    format!("{}", rec.max_error / prev)
                } else {
                    String::new()
                }
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                rec.k, rec.max_error, factor, rec.fine_sweep_ms
            ));
        }
        out
    }
}

/// Runs the fine propagator serially over the whole horizon and keeps the
/// states at the coarse nodes (the reference `u^{nJ}`).
pub fn sequential_fine_reference(
    u0: &StateVector,
    fine: &dyn Propagator,
    cfg: &PararealConfig,
) -> Result<Vec<StateVector>, EngineError> {
    cfg.validate()?;
    let j = cfg.fine_steps_per_interval;
    let mut out = Vec::with_capacity(cfg.coarse_intervals + 1);
    let mut state = u0.clone();
    out.push(state.clone());
    for n in 0..cfg.coarse_intervals {
        for step in 0..j {
            let t = ((n * j + step) as f64) * cfg.dt_fine;
            state = fine.step(t, cfg.dt_fine, &state)?;
        }
        out.push(state.clone());
    }
    Ok(out)
}

fn fine_sweep(
    fine: &dyn Propagator,
    u: &[StateVector],
    cfg: &PararealConfig,
) -> Result<Vec<StateVector>, PropagatorError> {
    let n_c = cfg.coarse_intervals;
    let j = cfg.fine_steps_per_interval;
    let dt = cfg.dt_fine;
    let run_range = |lo: usize, hi: usize| -> Result<Vec<StateVector>, PropagatorError> {
        let mut out = Vec::with_capacity(hi - lo);
        for n in lo..hi {
            let mut state = u[n].clone();
            for step in 0..j {
                let t = ((n * j + step) as f64) * dt;
                state = fine.step(t, dt, &state)?;
            }
            out.push(state);
        }
        Ok(out)
    };

    let threads = cfg.threads.max(1).min(n_c);
    if threads == 1 {
        return run_range(0, n_c);
    }
    let chunk = n_c.div_ceil(threads);
    let parts = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..threads {
            let lo = w * chunk;
            let hi = ((w + 1) * chunk).min(n_c);
            if lo >= hi {
                break;
            }
            let run = &run_range;
            handles.push(scope.spawn(move || run(lo, hi)));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("fine sweep worker"))
            .collect::<Vec<_>>()
    });
    let mut tilde = Vec::with_capacity(n_c);
    for part in parts {
        tilde.extend(part?);
    }
    Ok(tilde)
}

/// Runs the parareal iteration and records the error history against the
/// supplied sequential fine reference (length N_c + 1, including t = 0).
pub fn run(
    u0: &StateVector,
    coarse: &dyn Propagator,
    fine: &dyn Propagator,
    cfg: &PararealConfig,
    mass: &TriMatrix,
    reference: &[StateVector],
) -> Result<IterationHistory, EngineError> {
    cfg.validate()?;
    let n_c = cfg.coarse_intervals;
    if reference.len() != n_c + 1 {
        return Err(EngineError::InvalidConfig(format!(
            "reference has {} states, expected {}",
            reference.len(),
            n_c + 1
        )));
    }
    let j = cfg.fine_steps_per_interval;
    let dt = cfg.dt_fine;
    let coarse_dt = cfg.coarse_dt();
    let t_of = |n: usize| (n * j) as f64 * dt;

    let errors_of = |u: &[StateVector]| -> (f64, Vec<f64>) {
        let mut profile = Vec::with_capacity(n_c);
        let mut max = 0.0f64;
        for n in 1..=n_c {
            let diff: Vec<f64> = u[n]
                .values
                .iter()
                .zip(&reference[n].values)
                .map(|(a, b)| a - b)
                .collect();
            let e = mass_norm(mass, &diff);
            profile.push(e);
            max = max.max(e);
        }
        (max, profile)
    };

    // initialization sweep
    let mut u: Vec<StateVector> = Vec::with_capacity(n_c + 1);
    u.push(u0.clone());
    let mut g_prev: Vec<StateVector> = Vec::with_capacity(n_c);
    match cfg.initial_guess {
        InitialGuess::CoarseSweep => {
            for n in 0..n_c {
                let g = coarse.step(t_of(n), coarse_dt, &u[n])?;
                g_prev.push(g.clone());
                u.push(g);
            }
        }
        InitialGuess::ConstantU0 => {
            for n in 0..n_c {
                u.push(StateVector::new(u0.values.clone(), t_of(n + 1)));
                let g = coarse.step(t_of(n), coarse_dt, &u[n])?;
                g_prev.push(g);
            }
        }
    }

    let mut records = Vec::with_capacity(cfg.k_max + 1);
    let (max0, profile0) = errors_of(&u);
    records.push(IterationRecord {
        k: 0,
        max_error: max0,
        error_profile: profile0,
        fine_sweep_ms: 0.0,
    });

    let mut converged_at = None;
    for k in 1..=cfg.k_max {
        let sweep_start = Instant::now();
        let tilde = fine_sweep(fine, &u, cfg)?;
        let fine_sweep_ms = sweep_start.elapsed().as_secs_f64() * 1e3;

        // sequential corrections; U^0 is pinned to u0
        let mut next: Vec<StateVector> = Vec::with_capacity(n_c + 1);
        next.push(u0.clone());
        let mut change = 0.0f64;
        for n in 0..n_c {
            let g_new = coarse.step(t_of(n), coarse_dt, &next[n])?;
            let values: Vec<f64> = g_new
                .values
                .iter()
                .zip(&tilde[n].values)
                .zip(&g_prev[n].values)
                .map(|((g, f), gp)| g + f - gp)
                .collect();
            let state = StateVector::new(values, t_of(n + 1));
            let diff: Vec<f64> = state
                .values
                .iter()
                .zip(&u[n + 1].values)
                .map(|(a, b)| a - b)
                .collect();
            change = change.max(mass_norm(mass, &diff));
            g_prev[n] = g_new;
            next.push(state);
        }
        u = next;

        let (max_err, profile) = errors_of(&u);
        records.push(IterationRecord {
            k,
            max_error: max_err,
            error_profile: profile,
            fine_sweep_ms,
        });

        if let StopRule::SuccessiveTolerance(tol) = cfg.stop {
            if change <= tol {
                converged_at = Some(k);
                break;
            }
        }
    }

    let budget_exceeded =
        matches!(cfg.stop, StopRule::SuccessiveTolerance(_)) && converged_at.is_none();
    Ok(IterationHistory {
        records,
        converged_at,
        budget_exceeded,
    })
}

/// Least-squares contraction factor exp(slope of log error vs k) over the
/// linear regime (errors within [1e-11, 1e-1]).
pub fn measured_factor(history: &IterationHistory) -> Result<f64, EngineError> {
    let pts: Vec<(f64, f64)> = history
        .records
        .iter()
        .filter(|r| r.max_error >= 1e-11 && r.max_error <= 1e-1)
        .map(|r| (r.k as f64, r.max_error.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(EngineError::InsufficientData {
            usable: pts.len(),
            needed: 4,
        });
    }
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(slope.exp())
}
