//! Catalog of single-step implicit integrators.
//!
//! Each scheme is described by a Butcher tableau `(A, b, c)` and, derived from
//! it, the stability function `r(z) = 1 + z bᵀ(I − zA)⁻¹𝟙` together with the
//! weight functions `p_i(z) = (bᵀ(I − zA)⁻¹)_i`, all as explicit rational
//! functions sharing the denominator `det(I − zA)`. The derivation is done by
//! cofactor expansion over polynomial entries, so the coefficients come out
//! exact up to rounding rather than through sampling and interpolation.
//!
//! Shipped schemes: backward Euler, the two-, three- and four-stage Lobatto
//! IIIC methods (L-stable, order 2m − 2; see Hairer & Wanner, *Solving ODEs
//! II*), and the third-order Calahan scheme (A-stable, `r(-∞) = 1 − √3`).

use crate::poly::{PolyError, Polynomial, RationalFn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("det(I - zA) is identically zero")]
    SingularTableau,
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),
    #[error(
        "measured order {measured} (slope {slope:.3}) does not match declared order {declared}"
    )]
    OrderMismatch {
        declared: usize,
        measured: usize,
        slope: f64,
    },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Coefficients of an m-stage implicit Runge-Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    /// Validates dimensions, row-sum consistency `A𝟙 = c` (to 1e-12) and
    /// distinctness of the abscissae.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Self, SchemeError> {
        let m = b.len();
        if m == 0 || a.len() != m || a.iter().any(|row| row.len() != m) || c.len() != m {
            return Err(SchemeError::InvalidTableau(
                "inconsistent dimensions".into(),
            ));
        }
        for i in 0..m {
            let row_sum: f64 = a[i].iter().sum();
            if (row_sum - c[i]).abs() > 1e-12 {
                return Err(SchemeError::InvalidTableau(format!(
                    "row {i} sums to {row_sum}, abscissa is {}",
                    c[i]
                )));
            }
        }
        for i in 0..m {
            for j in 0..i {
                if (c[i] - c[j]).abs() < 1e-12 {
                    return Err(SchemeError::InvalidTableau(format!(
                        "abscissae {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// A named integrator: tableau, stability data and declared orders.
#[derive(Debug, Clone)]
pub struct SchemeSpec {
    pub name: String,
    pub tableau: Option<ButcherTableau>,
    /// Stability function r(z).
    pub r: RationalFn,
    /// Pairs (c_i, p_i(z)).
    pub weights: Vec<(f64, RationalFn)>,
    pub declared_order: usize,
    pub strictly_accurate_order: usize,
}

impl SchemeSpec {
    pub fn stages(&self) -> usize {
        self.weights.len()
    }

    /// `r` as a function of s where z = −s, so the limit s → ∞ is the
    /// stiff limit `r(-∞)`.
    pub fn r_of_neg_s(&self) -> RationalFn {
        self.r
            .compose_affine(-1.0, 0.0)
            .expect("negation preserves degree")
    }

    /// `|r(-∞)|`-defining limit.
    pub fn r_at_minus_infinity(&self) -> f64 {
        self.r_of_neg_s().value_at_infinity()
    }
}

pub const SCHEME_NAMES: [&str; 5] = [
    "backward-euler",
    "lobatto3c-2",
    "lobatto3c-3",
    "lobatto3c-4",
    "calahan",
];

// --- tableau -> rational function derivation -------------------------------

fn poly_minor(m: &[Vec<Polynomial>], row: usize, col: usize) -> Vec<Vec<Polynomial>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, p)| p.clone())
                .collect()
        })
        .collect()
}

fn poly_det(m: &[Vec<Polynomial>]) -> Polynomial {
    let n = m.len();
    if n == 0 {
        return Polynomial::one();
    }
    if n == 1 {
        return m[0][0].clone();
    }
    let mut det = Polynomial::zero();
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let term = m[0][j].mul(&poly_det(&poly_minor(m, 0, j)));
        det = if j % 2 == 0 {
            det.add(&term)
        } else {
            det.sub(&term)
        };
    }
    det
}

const COEFF_TRIM: f64 = 1e-12;

/// Derives `(r, [(c_i, p_i)])` from a tableau by Cramer expansion of
/// `(I − zA)⁻¹` over polynomial entries.
pub fn derive_stability(
    t: &ButcherTableau,
) -> Result<(RationalFn, Vec<(f64, RationalFn)>), SchemeError> {
    let m = t.stages();
    let bmat: Vec<Vec<Polynomial>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    Polynomial::new(&[delta, -t.a[i][j]])
                })
                .collect()
        })
        .collect();

    let det = poly_det(&bmat);
    if det.trim_relative(COEFF_TRIM).is_zero() {
        return Err(SchemeError::SingularTableau);
    }

    // N_i = Σ_k b_k · cof_{ik}, the numerator of p_i over det(I − zA)
    let mut nums: Vec<Polynomial> = Vec::with_capacity(m);
    for i in 0..m {
        let mut num = Polynomial::zero();
        for (k, bk) in t.b.iter().enumerate() {
            if *bk == 0.0 {
                continue;
            }
            let cof = poly_det(&poly_minor(&bmat, i, k));
            let signed = if (i + k) % 2 == 0 {
                cof
            } else {
                cof.scale(-1.0)
            };
            num = num.add(&signed.scale(*bk));
        }
        nums.push(num);
    }

    // r = 1 + z Σ_i p_i = (det + z Σ_i N_i) / det
    let sum_n = nums.iter().fold(Polynomial::zero(), |acc, n| acc.add(n));
    let z = Polynomial::new(&[0.0, 1.0]);
    let r_num = det.add(&z.mul(&sum_n));

    let r = RationalFn::new(
        r_num.trim_relative(COEFF_TRIM),
        det.trim_relative(COEFF_TRIM),
    )?;
    let weights =
        t.c.iter()
            .zip(nums)
            .map(|(ci, n)| {
                Ok((
                    *ci,
                    RationalFn::new(n.trim_relative(COEFF_TRIM), det.trim_relative(COEFF_TRIM))?,
                ))
            })
            .collect::<Result<Vec<_>, SchemeError>>()?;
    Ok((r, weights))
}

// --- built-in tableaus ------------------------------------------------------

fn tableau_backward_euler() -> ButcherTableau {
    ButcherTableau::new(vec![vec![1.0]], vec![1.0], vec![1.0]).expect("valid tableau")
}

fn tableau_lobatto3c(stages: usize) -> ButcherTableau {
    let (a, b, c) = match stages {
        2 => (
            vec![vec![0.5, -0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
        ),
        3 => (
            vec![
                vec![1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
                vec![1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
                vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            ],
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            vec![0.0, 0.5, 1.0],
        ),
        4 => {
            let s5 = 5.0f64.sqrt();
            (
                vec![
                    vec![1.0 / 12.0, -s5 / 12.0, s5 / 12.0, -1.0 / 12.0],
                    vec![1.0 / 12.0, 0.25, (10.0 - 7.0 * s5) / 60.0, s5 / 60.0],
                    vec![1.0 / 12.0, (10.0 + 7.0 * s5) / 60.0, 0.25, -s5 / 60.0],
                    vec![1.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 1.0 / 12.0],
                ],
                vec![1.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 1.0 / 12.0],
                vec![0.0, 0.5 - s5 / 10.0, 0.5 + s5 / 10.0, 1.0],
            )
        }
        _ => unreachable!("only 2-, 3- and 4-stage variants are shipped"),
    };
    ButcherTableau::new(a, b, c).expect("valid tableau")
}

fn tableau_calahan() -> ButcherTableau {
    let s3 = 3.0f64.sqrt();
    ButcherTableau::new(
        vec![
            vec![s3 / 6.0 + 2.0 / 3.0, -s3 / 6.0 - 1.0 / 3.0],
            vec![-s3 / 6.0 + 1.0 / 3.0, s3 / 6.0 + 1.0 / 3.0],
        ],
        vec![0.5, 0.5],
        vec![1.0 / 3.0, 2.0 / 3.0],
    )
    .expect("valid tableau")
}

/// Closed-form stability function in z for each catalog scheme, used to
/// cross-check the tableau derivation.
pub fn explicit_stability(name: &str) -> Option<RationalFn> {
    let s3 = 3.0f64.sqrt();
    let b = 0.5 + s3 / 6.0;
    let r = match name {
        "backward-euler" => RationalFn::from_coeffs(&[1.0], &[1.0, -1.0]),
        "lobatto3c-2" => RationalFn::from_coeffs(&[2.0], &[2.0, -2.0, 1.0]),
        "lobatto3c-3" => RationalFn::from_coeffs(&[24.0, 6.0], &[24.0, -18.0, 6.0, -1.0]),
        "lobatto3c-4" => {
            RationalFn::from_coeffs(&[360.0, 120.0, 12.0], &[360.0, -240.0, 72.0, -12.0, 1.0])
        }
        // 1 - s/(1+bs) - (√3/6)(s/(1+bs))² over the common denominator (1+bs)², z = -s
        "calahan" => RationalFn::from_coeffs(
            &[1.0, -s3 / 3.0, -(1.0 + s3) / 6.0],
            &[1.0, -2.0 * b, b * b],
        ),
        _ => return None,
    };
    Some(r.expect("nonzero denominators"))
}

/// The Calahan weight functions as printed in some sources, kept only so the
/// disagreement with the tableau-derived weights stays documented. The
/// tableau-derived weights are what the catalog ships (the printed forms fail
/// the zeroth quadrature moment Σ c_i p_i(0) = 1/2).
pub fn calahan_printed_weights() -> Vec<(f64, RationalFn)> {
    let s3 = 3.0f64.sqrt();
    let b = 0.5 + s3 / 6.0;
    let den = [1.0, -2.0 * b, b * b];
    vec![
        (
            1.0 / 3.0,
            RationalFn::from_coeffs(&[0.5 + s3, -s3 / 2.0], &den).unwrap(),
        ),
        (
            2.0 / 3.0,
            RationalFn::from_coeffs(&[0.5 - s3, -(0.5 - s3 / 2.0)], &den).unwrap(),
        ),
    ]
}

/// Builds a catalog scheme by name.
pub fn builtin(name: &str) -> Result<SchemeSpec, SchemeError> {
    let (tableau, declared_order, strictly_accurate_order) = match name {
        "backward-euler" => (tableau_backward_euler(), 1, 2),
        "lobatto3c-2" => (tableau_lobatto3c(2), 2, 2),
        "lobatto3c-3" => (tableau_lobatto3c(3), 4, 3),
        "lobatto3c-4" => (tableau_lobatto3c(4), 6, 4),
        "calahan" => (tableau_calahan(), 3, 2),
        other => return Err(SchemeError::UnknownScheme(other.to_string())),
    };
    let (r, weights) = derive_stability(&tableau)?;
    Ok(SchemeSpec {
        name: name.to_string(),
        tableau: Some(tableau),
        r,
        weights,
        declared_order,
        strictly_accurate_order,
    })
}

pub fn all_builtins() -> Vec<SchemeSpec> {
    SCHEME_NAMES
        .iter()
        .map(|n| builtin(n).expect("catalog scheme"))
        .collect()
}

// --- condition (P1): uniform boundedness on the negative real axis ----------

#[derive(Debug, Clone)]
pub struct P1Report {
    pub pass: bool,
    /// Largest |r(−λ)| over the sample grid.
    pub max_abs_r: f64,
    /// λ attaining it.
    pub worst_lambda: f64,
    /// Largest |p_i(−λ)| over all weights and samples.
    pub max_abs_p: f64,
    /// deg num < deg den for every p_i.
    pub p_degree_ok: bool,
    pub samples: usize,
}

/// Checks `|r(−λ)| < 1` and boundedness of the weights on a log grid
/// λ ∈ [1e-6, 1e8] plus the λ → ∞ limit.
pub fn verify_p1(s: &SchemeSpec, sample_count: usize) -> P1Report {
    let n = sample_count.max(100);
    let (lo, hi) = (1e-6f64.ln(), 1e8f64.ln());
    let mut max_abs_r = 0.0f64;
    let mut worst_lambda = 0.0;
    let mut max_abs_p = 0.0f64;
    let mut finite = true;

    for i in 0..n {
        let lambda = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        match s.r.eval_real(-lambda) {
            Ok(v) => {
                if v.abs() > max_abs_r {
                    max_abs_r = v.abs();
                    worst_lambda = lambda;
                }
            }
            Err(_) => finite = false,
        }
        for (_, p) in &s.weights {
            match p.eval_real(-lambda) {
                Ok(v) => max_abs_p = max_abs_p.max(v.abs()),
                Err(_) => finite = false,
            }
        }
    }

    let p_degree_ok = s
        .weights
        .iter()
        .all(|(_, p)| match (p.num().degree(), p.den().degree()) {
            (None, _) => true,
            (Some(dn), Some(dd)) => dn < dd,
            _ => false,
        });
    let r_limit = s.r_at_minus_infinity().abs();

    P1Report {
        pass: finite && max_abs_r < 1.0 && r_limit <= 1.0 && p_degree_ok,
        max_abs_r,
        worst_lambda,
        max_abs_p,
        p_degree_ok,
        samples: n,
    }
}

// --- condition (P3): strong stability ---------------------------------------

#[derive(Debug, Clone)]
pub struct P3Report {
    pub pass: bool,
    pub r_at_minus_infinity: f64,
}

pub fn verify_p3(s: &SchemeSpec) -> P3Report {
    let lim = s.r_at_minus_infinity();
    P3Report {
        pass: lim.is_finite() && lim.abs() < 1.0,
        r_at_minus_infinity: lim,
    }
}

/// Strong-stability check for a bare stability function (used e.g. to show
/// Crank-Nicolson fails with |r(−∞)| = 1).
pub fn strong_stability_of(r: &RationalFn) -> P3Report {
    let lim = r
        .compose_affine(-1.0, 0.0)
        .expect("negation preserves degree")
        .value_at_infinity();
    P3Report {
        pass: lim.is_finite() && lim.abs() < 1.0,
        r_at_minus_infinity: lim,
    }
}

// --- condition (P2): order measurement ---------------------------------------

/// e^x − Σ_{ℓ≤j} x^ℓ/ℓ!, evaluated without cancellation for small |x|.
fn exp_remainder(j: usize, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        let mut term = 1.0;
        for l in 1..=j + 1 {
            term *= x / l as f64;
        }
        let mut sum = 0.0;
        let mut l = j + 1;
        loop {
            sum += term;
            l += 1;
            term *= x / l as f64;
            if term.abs() < 1e-300 || term.abs() < 1e-20 * sum.abs().max(1e-30) {
                break;
            }
            if l > 200 {
                break;
            }
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for l in 0..=j {
            if l > 0 {
                term *= x / l as f64;
            }
            partial += term;
        }
        x.exp() - partial
    }
}

/// Order estimate from dyadic samples: slopes between consecutive points
/// approach the true exponent monotonically as λ shrinks, so the estimate is
/// the steepest pairwise slope among the smallest usable abscissae.
fn dyadic_order_estimate(mut pts: Vec<(f64, f64)>) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.truncate(5);
    pts.windows(2)
        .map(|w| (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln())
        .fold(None, |best: Option<f64>, s| {
            Some(best.map_or(s, |b| b.max(s)))
        })
}

#[derive(Debug, Clone)]
pub enum QuadratureSlope {
    /// Residual below the float floor at every sample: identity holds exactly.
    Exact,
    Fitted(f64),
}

#[derive(Debug, Clone)]
pub struct OrderReport {
    /// Order measured from |r(−λ) − e^{−λ}| ~ λ^{q+1}.
    pub measured: usize,
    pub slope: f64,
    /// Largest q' ≤ measured such that the quadrature part of the accuracy
    /// condition holds at order q'.
    pub quadrature_order: usize,
    pub quadrature_slopes: Vec<QuadratureSlope>,
}

const ORDER_FLOOR: f64 = 1.5e-14;

/// Measures the accuracy order from dyadic samples λ = 2^{-j} and checks the
/// quadrature moments of the weights by the same slope estimate.
pub fn verify_order(s: &SchemeSpec) -> Result<OrderReport, SchemeError> {
    let lambdas: Vec<f64> = (0..=14).map(|j| 2.0f64.powi(-j)).collect();

    let mut pts = Vec::new();
    for &l in &lambdas {
        let err = (s.r.eval_real(-l)? - (-l).exp()).abs();
        if (ORDER_FLOOR..=0.2).contains(&err) {
            pts.push((l, err));
        }
    }
    let slope = dyadic_order_estimate(pts).ok_or(SchemeError::OrderMismatch {
        declared: s.declared_order,
        measured: 0,
        slope: 0.0,
    })?;
    let rounded = slope.round();
    let measured = (rounded as usize).saturating_sub(1);
    if (slope - rounded).abs() > 0.2 || measured != s.declared_order {
        return Err(SchemeError::OrderMismatch {
            declared: s.declared_order,
            measured,
            slope,
        });
    }

    // quadrature part: Q_j(λ) = Σ c_i^j p_i(−λ) − j!/(−λ)^{j+1} (e^{−λ} − Σ_{ℓ≤j}(−λ)^ℓ/ℓ!)
    let mut quadrature_slopes = Vec::new();
    let mut factorial = 1.0f64;
    for j in 0..measured {
        if j > 0 {
            factorial *= j as f64;
        }
        let mut qpts = Vec::new();
        let mut all_tiny = true;
        for &l in &lambdas {
            let mut q = 0.0;
            for (ci, p) in &s.weights {
                q += ci.powi(j as i32) * p.eval_real(-l)?;
            }
            q -= factorial * exp_remainder(j, -l) / (-l).powi(j as i32 + 1);
            if q.abs() >= 1e-12 {
                all_tiny = false;
            }
            if (ORDER_FLOOR..=10.0).contains(&q.abs()) {
                qpts.push((l, q.abs()));
            }
        }
        if all_tiny {
            quadrature_slopes.push(QuadratureSlope::Exact);
        } else {
            match dyadic_order_estimate(qpts) {
                Some(sl) => quadrature_slopes.push(QuadratureSlope::Fitted(sl)),
                None => quadrature_slopes.push(QuadratureSlope::Fitted(0.0)),
            }
        }
    }

    let effective = |k: usize| -> f64 {
        match quadrature_slopes.get(k) {
            Some(QuadratureSlope::Exact) => f64::INFINITY,
            Some(QuadratureSlope::Fitted(sl)) => *sl,
            None => f64::INFINITY,
        }
    };
    let mut quadrature_order = 0;
    'outer: for q in (0..=measured).rev() {
        for j in 0..q {
            if effective(j) < (q - j) as f64 - 0.25 {
                continue 'outer;
            }
        }
        quadrature_order = q;
        break;
    }

    Ok(OrderReport {
        measured,
        slope,
        quadrature_order,
        quadrature_slopes,
    })
}

// --- strict accuracy ----------------------------------------------------------

const STRICT_TOL: f64 = 1e-10;

/// Largest q such that
/// `Σ c_i^j p_i(z) = j!/z^{j+1} (r(z) − Σ_{ℓ≤j} z^ℓ/ℓ!)` holds as an exact
/// rational identity for every j < q, decided by cross-multiplied coefficient
/// comparison.
pub fn verify_strict_accuracy(s: &SchemeSpec) -> usize {
    let cap = s.stages() + 2;
    let mut factorial = 1.0f64;
    for j in 0..=cap {
        if j > 0 {
            factorial *= j as f64;
        }
        if !strict_identity_holds(s, j, factorial) {
            return j;
        }
    }
    cap + 1
}

fn strict_identity_holds(s: &SchemeSpec, j: usize, factorial: f64) -> bool {
    // Q = Σ_i c_i^j p_i as one rational function
    let mut q = RationalFn::constant(0.0);
    for (ci, p) in &s.weights {
        let term = p.scale(ci.powi(j as i32));
        q = match q.add(&term) {
            Ok(v) => v,
            Err(_) => return false,
        };
    }
    // truncated exponential Σ_{ℓ≤j} z^ℓ/ℓ!
    let mut tcoeffs = vec![0.0; j + 1];
    let mut f = 1.0;
    for (l, c) in tcoeffs.iter_mut().enumerate() {
        if l > 0 {
            f *= l as f64;
        }
        *c = 1.0 / f;
    }
    let trunc = Polynomial::new(&tcoeffs);
    // T = r − trunc, sharing r's denominator
    let t_num = s.r.num().sub(&s.r.den().mul(&trunc));

    // identity: z^{j+1} · Q_num · T_den == j! · T_num · Q_den
    let mut zpow = vec![0.0; j + 2];
    zpow[j + 1] = 1.0;
    let lhs = Polynomial::new(&zpow).mul(q.num()).mul(s.r.den());
    let rhs = t_num.scale(factorial).mul(q.den());

    let scale = lhs.max_abs_coeff().max(rhs.max_abs_coeff()).max(1.0);
    let diff = lhs.sub(&rhs);
    diff.max_abs_coeff() <= STRICT_TOL * scale
}
