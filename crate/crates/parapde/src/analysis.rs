//! Contraction-factor analysis for the parareal iteration.
//!
//! The iteration with a backward-Euler coarse propagator and a single-step
//! fine propagator with stability function `r` contracts each spectral mode
//! by at most
//!
//! ```text
//! Φ(J) = sup_{s > 0} | ((1 + s) r(-s/J)^J - 1) / s |
//! ```
//!
//! where `J` is the coarse-to-fine step ratio. Replacing `r(-s/J)^J` by its
//! `J → ∞` limit `e^{-s}` (or by a sandwich bound `e^{-βs} ≤ r(-s) ≤ e^{-αs}`)
//! reduces everything to the one-parameter family
//!
//! ```text
//! κ_α = sup_{s > 0} | ((1 + s) e^{-αs} - 1) / s |,   α ∈ [0, 2],
//! ```
//!
//! with κ₁ ≈ 0.2984 the limiting factor. This module computes κ_α, Φ(J),
//! threshold ratios J_* with Φ(J) ≤ γ for all J ≥ J_*, and the sandwich and
//! tail bounds used to certify those thresholds.
//!
//! Suprema over the half-line are computed by a log-grid scan plus
//! golden-section refinement of the grid maximum; the unbounded tail is
//! covered by the explicit bound `(1+s)/s · |r(-s/J)|^J + 1/s`, so the
//! reported value dominates every sample by construction.

use crate::poly::RationalFn;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("alpha = {alpha} outside [0, 2]")]
    DomainError { alpha: f64 },
    #[error("factor {phi:.3e} exceeds 1e3; the scheme/ratio pair is not contracting")]
    DivergentFactor { phi: f64 },
    #[error("no ratio J in [2, {j_max}] has factor <= {gamma}")]
    NoThreshold { gamma: f64, j_max: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Where a supremum over (0, ∞) is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupLocation {
    /// Interior point.
    At(f64),
    /// Attained only in the limit s → 0⁺.
    ZeroLimit,
}

impl SupLocation {
    pub fn as_f64(&self) -> f64 {
        match self {
            SupLocation::At(s) => *s,
            SupLocation::ZeroLimit => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KappaValue {
    pub alpha: f64,
    pub kappa: f64,
    pub argsup: SupLocation,
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `f` on `[a, b]` down to |Δs| < `tol`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN_INV * (b - a);
    let mut x2 = a + GOLDEN_INV * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN_INV * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN_INV * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
}

/// Scans `f` on a log grid and refines the positive and negative envelopes
/// separately (the absolute value has a kink wherever `f` changes sign, so a
/// single refinement of |f| could straddle it). Returns `(sup |f|, argmax)`
/// over grid + refinement.
fn sup_abs_refined(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let xs: Vec<f64> = log_grid(lo, hi, n).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();

    let mut best = (0.0f64, xs[0]);
    let consider = |v: f64, x: f64, best: &mut (f64, f64)| {
        if v > best.0 {
            *best = (v, x);
        }
    };

    for (i, &v) in vals.iter().enumerate() {
        consider(v.abs(), xs[i], &mut best);
    }
    // refine the best bracket of each signed envelope
    for sign in [1.0f64, -1.0] {
        let idx = (0..xs.len())
            .max_by(|&i, &j| (sign * vals[i]).partial_cmp(&(sign * vals[j])).unwrap())
            .unwrap();
        if sign * vals[idx] <= 0.0 {
            continue;
        }
        let a = if idx == 0 { xs[0] } else { xs[idx - 1] };
        let b = if idx + 1 == xs.len() {
            xs[idx]
        } else {
            xs[idx + 1]
        };
        if b > a {
            let (x, v) = golden_max(|s| sign * f(s), a, b, 1e-10);
            consider(v, x, &mut best);
        }
    }
    best
}

fn psi(alpha: f64, s: f64) -> f64 {
    // ((1+s)e^{-αs} - 1)/s rewritten through expm1 so the small-s limit 1 - α
    // is reached without cancellation
    let e = (-alpha * s).exp_m1();
    1.0 + e + e / s
}

const KAPPA_GRID: usize = 8192;

/// κ_α = sup_{s>0} |((1+s)e^{-αs} - 1)/s| for α ∈ [0, 2].
pub fn kappa(alpha: f64) -> Result<KappaValue, AnalysisError> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(AnalysisError::DomainError { alpha });
    }
    let (interior, arg) = sup_abs_refined(|s| psi(alpha, s), 1e-8, 50.0, KAPPA_GRID);
    let zero_limit = (1.0 - alpha).abs();
    // the s → ∞ limit is 0, never competitive
    let (kappa, argsup) = if zero_limit >= interior - 1e-12 {
        (zero_limit.max(interior), SupLocation::ZeroLimit)
    } else {
        (interior, SupLocation::At(arg))
    };
    Ok(KappaValue {
        alpha,
        kappa,
        argsup,
    })
}

/// The closed-form envelope max(e^{α−2}, 1−α) for α < 1, e^{α−2} for α ≥ 1.
pub fn kappa_envelope(alpha: f64) -> f64 {
    let e = (alpha - 2.0).exp();
    if alpha < 1.0 {
        e.max(1.0 - alpha)
    } else {
        e
    }
}

/// κ_α sampled at `n` equispaced α in [0, 2].
pub fn kappa_curve(n: usize) -> Result<Vec<KappaValue>, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::InvalidParameter(format!(
            "curve needs at least 2 points, got {n}"
        )));
    }
    (0..n)
        .map(|i| kappa(2.0 * i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FactorReport {
    pub j: u32,
    /// The supremum Φ(J); an upper bound for the tail region.
    pub phi: f64,
    /// Location of the maximizing sample.
    pub argmax_s: f64,
    /// True when the analytic tail bound beyond the grid exceeds the interior
    /// supremum and is what `phi` reports.
    pub tail_bound_used: bool,
    pub grid_points: usize,
}

const FACTOR_GRID: usize = 16384;
const DIVERGENCE_CUTOFF: f64 = 1e3;

/// sup of |r(-σ)| over σ ∈ [from_s, ∞), by dense scan plus the σ → ∞ limit.
pub fn tail_sup_abs(r: &RationalFn, from_s: f64) -> f64 {
    let mut sup = r
        .compose_affine(-1.0, 0.0)
        .expect("negation preserves degree")
        .value_at_infinity()
        .abs();
    for s in log_grid(from_s.max(1e-12), 1e8, 4096) {
        if let Ok(v) = r.eval_real(-s) {
            sup = sup.max(v.abs());
        }
    }
    sup
}

/// Φ(J) = sup_{s>0} |((1+s) r(-s/J)^J - 1)/s| for the stability function `r`.
///
/// `J = 1` is the degenerate single-interval case and is allowed.
pub fn parareal_factor(r: &RationalFn, j: u32) -> Result<FactorReport, AnalysisError> {
    if j == 0 {
        return Err(AnalysisError::InvalidParameter("J must be >= 1".into()));
    }
    let jf = j as f64;
    let phi_at = |s: f64| -> f64 {
        match r.eval_real(-s / jf) {
            Ok(v) => ((1.0 + s) * v.powi(j as i32) - 1.0) / s,
            Err(_) => f64::INFINITY,
        }
    };

    let s_max = 1e4f64.max(100.0 * jf);
    let (interior, arg) = sup_abs_refined(phi_at, 1e-8, s_max, FACTOR_GRID);

    // Beyond the grid: |((1+s) ρ − 1)/s| ≤ (1+s)/s |ρ| + 1/s with
    // |ρ| ≤ sup_{σ ≥ s_max/J} |r(-σ)|^J; both prefactors decrease in s.
    let tail = (1.0 + s_max) / s_max * tail_sup_abs(r, s_max / jf).powi(j as i32) + 1.0 / s_max;
    let tail_bound_used = tail > interior;
    let (phi, argmax_s) = if tail_bound_used {
        (tail, s_max)
    } else {
        (interior, arg)
    };

    if !phi.is_finite() || phi > DIVERGENCE_CUTOFF {
        return Err(AnalysisError::DivergentFactor { phi });
    }
    Ok(FactorReport {
        j,
        phi,
        argmax_s,
        tail_bound_used,
        grid_points: FACTOR_GRID,
    })
}

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub gamma: f64,
    /// Φ(J) for J = 1..=J_max (J = 1 is informational; the iteration itself
    /// requires J ≥ 2).
    pub table: Vec<FactorReport>,
    /// Smallest J ≥ 2 with Φ(J') ≤ γ for every J' in [J, J_max].
    pub j_star: Option<u32>,
}

impl ThresholdReport {
    pub fn require_threshold(&self) -> Result<u32, AnalysisError> {
        self.j_star.ok_or(AnalysisError::NoThreshold {
            gamma: self.gamma,
            j_max: self.table.last().map_or(0, |f| f.j),
        })
    }
}

/// Scans Φ(J) for J = 1..=J_max and locates the smallest threshold J_* ≥ 2
/// beyond which Φ stays below `gamma`.
pub fn find_threshold(
    r: &RationalFn,
    gamma: f64,
    j_max: u32,
) -> Result<ThresholdReport, AnalysisError> {
    if !(0.0..1.0).contains(&gamma) || gamma == 0.0 {
        return Err(AnalysisError::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(2..=1024).contains(&j_max) {
        return Err(AnalysisError::InvalidParameter(format!(
            "J_max must lie in [2, 1024], got {j_max}"
        )));
    }

    let js: Vec<u32> = (1..=j_max).collect();
    let mut table: Vec<FactorReport> = Vec::with_capacity(js.len());
    let workers = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(8);
    if workers > 1 && js.len() >= 8 {
        let chunk = js.len().div_ceil(workers);
        let results = std::thread::scope(|scope| {
            let handles: Vec<_> = js
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&j| parareal_factor(r, j))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("factor worker"))
                .collect::<Vec<_>>()
        });
        for res in results {
            table.push(res?);
        }
    } else {
        for &j in &js {
            table.push(parareal_factor(r, j)?);
        }
    }

    let mut j_star = None;
    for idx in (1..table.len()).rev() {
        // idx 0 is J = 1
        if table[idx].phi <= gamma {
            j_star = Some(table[idx].j);
        } else {
            break;
        }
    }
    Ok(ThresholdReport {
        gamma,
        table,
        j_star,
    })
}

#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub pass: bool,
    /// min over the grid of r(-s) - e^{-βs} (should be ≥ 0).
    pub worst_lower_margin: f64,
    /// min over the grid of e^{-αs} - r(-s) (should be ≥ 0).
    pub worst_upper_margin: f64,
    pub grid_points: usize,
}

const SANDWICH_GRID: usize = 100_000;

/// Verifies e^{-βs} ≤ r(-s) ≤ e^{-αs} on a uniform grid over (0, s_star].
pub fn sandwich_check(r: &RationalFn, alpha: f64, beta: f64, s_star: f64) -> SandwichReport {
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    for i in 1..=SANDWICH_GRID {
        let s = s_star * i as f64 / SANDWICH_GRID as f64;
        let v = match r.eval_real(-s) {
            Ok(v) => v,
            Err(_) => {
                return SandwichReport {
                    pass: false,
                    worst_lower_margin: f64::NEG_INFINITY,
                    worst_upper_margin: f64::NEG_INFINITY,
                    grid_points: SANDWICH_GRID,
                }
            }
        };
        lower = lower.min(v - (-beta * s).exp());
        upper = upper.min((-alpha * s).exp() - v);
    }
    SandwichReport {
        pass: lower >= 0.0 && upper >= 0.0,
        worst_lower_margin: lower,
        worst_upper_margin: upper,
        grid_points: SANDWICH_GRID,
    }
}
