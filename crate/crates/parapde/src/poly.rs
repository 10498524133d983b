//! Real-coefficient polynomials and rational functions.
//!
//! These are the carriers for stability functions `r(z)` and quadrature
//! weights `p_i(z)` of single-step integrators: dense coefficient vectors in
//! ascending degree order, Horner evaluation over `f64` and `Complex64`, and
//! exact-shape arithmetic (no gcd reduction — cancelling common factors of
//! float polynomials is ill-conditioned, and every denominator we ever build
//! is nonvanishing on the half-line we evaluate on).

use num_complex::Complex64;
use thiserror::Error;

/// Largest degree a rational-function operation is allowed to produce.
pub const DEFAULT_DEGREE_CAP: usize = 64;

/// Denominator magnitudes below this count as a pole.
pub const POLE_TOLERANCE: f64 = 1e-300;

/// Grid resolution used by [`real_roots_in`] unless overridden.
pub const DEFAULT_ROOT_GRID: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("denominator underflows ({magnitude:.3e}) at z = {at}")]
    Pole { at: Complex64, magnitude: f64 },
    #[error("result degree {degree} exceeds cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("root polish stopped after {iterations} iterations, |step| = {last_step:.3e}")]
    ToleranceNotMet { iterations: usize, last_step: f64 },
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Dense polynomial with real coefficients, `coeffs[k]` multiplying `x^k`.
///
/// Canonical form: no trailing zero coefficients; the zero polynomial is the
/// empty coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: &[f64]) -> Self {
        let mut p = Self {
            coeffs: coeffs.to_vec(),
        };
        p.trim_exact();
        p
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(&[c])
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    /// Leading coefficient, 0 for the zero polynomial.
    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn trim_exact(&mut self) {
        while self.coeffs.last() == Some(&0.0) {
            self.coeffs.pop();
        }
    }

    /// Drops trailing coefficients smaller than `eps` relative to the largest
    /// coefficient. Used after derivations where exact cancellation of the
    /// leading terms is expected but float arithmetic leaves dust.
    pub fn trim_relative(&self, eps: f64) -> Self {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            return Self::zero();
        }
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.abs() <= eps * scale) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        let coeffs: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        Self::new(&coeffs)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs: Vec<f64> = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(0.0)
                    + other.coeffs.get(k).copied().unwrap_or(0.0)
            })
            .collect();
        Self::new(&coeffs)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let coeffs: Vec<f64> = self.coeffs.iter().map(|a| a * c).collect();
        Self::new(&coeffs)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self::new(&coeffs)
    }

    /// `x ↦ p(a x + b)`, expanded by Horner over polynomials.
    pub fn compose_affine(&self, a: f64, b: f64) -> Polynomial {
        let inner = Polynomial::new(&[b, a]);
        let mut result = Polynomial::zero();
        for c in self.coeffs.iter().rev() {
            result = result.mul(&inner).add(&Polynomial::constant(*c));
        }
        result
    }
}

impl std::fmt::Display for Polynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { "-" } else { "+" })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let mag = c.abs();
            match k {
                0 => write!(f, "{mag}")?,
                1 => write!(f, "{mag}·z")?,
                _ => write!(f, "{mag}·z^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Ratio of two real polynomials. Not reduced to lowest terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFn {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, PolyError> {
        if den.is_zero() {
            return Err(PolyError::ZeroDenominator);
        }
        Ok(Self { num, den })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, PolyError> {
        Self::new(Polynomial::new(num), Polynomial::new(den))
    }

    pub fn constant(c: f64) -> Self {
        Self {
            num: Polynomial::constant(c),
            den: Polynomial::one(),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64, PolyError> {
        let d = self.den.eval_complex(z);
        let magnitude = d.norm();
        if magnitude < POLE_TOLERANCE {
            return Err(PolyError::Pole { at: z, magnitude });
        }
        Ok(self.num.eval_complex(z) / d)
    }

    pub fn eval_real(&self, x: f64) -> Result<f64, PolyError> {
        let d = self.den.eval(x);
        if d.abs() < POLE_TOLERANCE {
            return Err(PolyError::Pole {
                at: Complex64::new(x, 0.0),
                magnitude: d.abs(),
            });
        }
        Ok(self.num.eval(x) / d)
    }

    /// Limit as the argument tends to `+∞`: 0 when the numerator degree is
    /// lower, the ratio of leading coefficients when degrees match, a signed
    /// infinity otherwise.
    pub fn value_at_infinity(&self) -> f64 {
        let dn = match self.num.degree() {
            None => return 0.0,
            Some(d) => d,
        };
        let dd = self.den.degree().expect("nonzero denominator");
        match dn.cmp(&dd) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => self.num.leading() / self.den.leading(),
            std::cmp::Ordering::Greater => {
                (self.num.leading() / self.den.leading()).signum() * f64::INFINITY
            }
        }
    }

    fn check_cap(p: &Polynomial) -> Result<(), PolyError> {
        match p.degree() {
            Some(d) if d > DEFAULT_DEGREE_CAP => Err(PolyError::DegreeOverflow {
                degree: d,
                cap: DEFAULT_DEGREE_CAP,
            }),
            _ => Ok(()),
        }
    }

    pub fn add(&self, other: &RationalFn) -> Result<RationalFn, PolyError> {
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        Self::check_cap(&num)?;
        Self::check_cap(&den)?;
        RationalFn::new(num, den)
    }

    pub fn sub(&self, other: &RationalFn) -> Result<RationalFn, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &RationalFn) -> Result<RationalFn, PolyError> {
        let num = self.num.mul(&other.num);
        let den = self.den.mul(&other.den);
        Self::check_cap(&num)?;
        Self::check_cap(&den)?;
        RationalFn::new(num, den)
    }

    pub fn scale(&self, c: f64) -> RationalFn {
        Self {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    /// `λ ↦ f(aλ + b)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Result<RationalFn, PolyError> {
        let num = self.num.compose_affine(a, b);
        let den = self.den.compose_affine(a, b);
        Self::check_cap(&num)?;
        RationalFn::new(num, den)
    }

    /// Relative trim of both numerator and denominator tails.
    pub fn trimmed(&self, eps: f64) -> Result<RationalFn, PolyError> {
        RationalFn::new(self.num.trim_relative(eps), self.den.trim_relative(eps))
    }
}

impl std::fmt::Display for RationalFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

/// All simple real roots of `p` in `[lo, hi]`, sorted ascending.
///
/// Sign-change bracketing on a uniform grid, then Newton polish with the
/// analytic derivative (bisection fallback when Newton leaves the bracket or
/// stalls). Roots of even multiplicity that never change sign are invisible
/// to the bracketing grid.
pub fn real_roots_in(p: &Polynomial, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>, PolyError> {
    real_roots_in_with_grid(p, lo, hi, tol, DEFAULT_ROOT_GRID)
}

pub fn real_roots_in_with_grid(
    p: &Polynomial,
    lo: f64,
    hi: f64,
    tol: f64,
    grid: usize,
) -> Result<Vec<f64>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::InvalidInput("zero polynomial".into()));
    }
    if !(lo < hi) || !tol.is_finite() || tol <= 0.0 || grid < 2 {
        return Err(PolyError::InvalidInput(format!(
            "bad bracket [{lo}, {hi}] / tol {tol} / grid {grid}"
        )));
    }

    let dp = p.derivative();
    let n = grid;
    let xs: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| p.eval(x)).collect();
    let zero_scale = tol * p.max_abs_coeff().max(1.0);

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.iter().all(|&q| (q - r).abs() > tol.max(1e-14)) {
            roots.push(r);
        }
    };

    for i in 0..n {
        // grid node that is already a root
        if vals[i].abs() <= zero_scale && dp.eval(xs[i]).abs() > 0.0 {
            push(polish(p, &dp, xs[i], xs[i], xs[i + 1], tol)?, &mut roots);
            continue;
        }
        if vals[i] == 0.0 {
            push(xs[i], &mut roots);
            continue;
        }
        if vals[i].signum() != vals[i + 1].signum() && vals[i + 1] != 0.0 {
            let r = polish(p, &dp, 0.5 * (xs[i] + xs[i + 1]), xs[i], xs[i + 1], tol)?;
            push(r, &mut roots);
        }
    }
    if vals[n].abs() <= zero_scale {
        push(polish(p, &dp, xs[n], xs[n - 1], xs[n], tol)?, &mut roots);
    }

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

const NEWTON_MAX_ITER: usize = 100;

fn polish(
    p: &Polynomial,
    dp: &Polynomial,
    x0: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, PolyError> {
    let mut x = x0;
    let (mut flo, fhi) = (p.eval(lo), p.eval(hi));
    let bracket_valid = flo.signum() != fhi.signum() || flo == 0.0 || fhi == 0.0;

    for _ in 0..NEWTON_MAX_ITER {
        let d = dp.eval(x);
        if d == 0.0 {
            break;
        }
        let step = p.eval(x) / d;
        let next = x - step;
        if step.abs() < tol {
            return Ok(next);
        }
        if next < lo || next > hi {
            break; // Newton escaped the bracket
        }
        x = next;
    }

    // Bisection fallback.
    if !bracket_valid {
        return Err(PolyError::ToleranceNotMet {
            iterations: NEWTON_MAX_ITER,
            last_step: hi - lo,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = p.eval(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn canonical_form_trims_zero_tail() {
        let p = Polynomial::new(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert!(Polynomial::new(&[0.0, 0.0]).is_zero());
    }

    #[test]
    fn eval_matches_two_stage_stability_samples() {
        // r(-s) = 2/(s^2+2s+2) as a function of s
        let r = RationalFn::from_coeffs(&[2.0], &[2.0, 2.0, 1.0]).unwrap();
        assert!(close(r.eval_real(0.0).unwrap(), 1.0, 1e-15));
        assert!(close(r.eval_real(3.2).unwrap(), 0.1073, 6e-4));
        // three-stage r(-s) at the interior critical point
        let r3 = RationalFn::from_coeffs(&[24.0, -6.0], &[24.0, 18.0, 6.0, 1.0]).unwrap();
        assert!(close(r3.eval_real(7.235).unwrap(), -0.0229, 3e-3));
    }

    #[test]
    fn pole_is_reported() {
        let f = RationalFn::from_coeffs(&[1.0], &[0.0, 1.0]).unwrap();
        assert!(matches!(
            f.eval(Complex64::new(0.0, 0.0)),
            Err(PolyError::Pole { .. })
        ));
    }

    #[test]
    fn value_at_infinity_cases() {
        let f = RationalFn::from_coeffs(&[2.0], &[2.0, 2.0, 1.0]).unwrap();
        assert_eq!(f.value_at_infinity(), 0.0);
        let g = RationalFn::from_coeffs(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.value_at_infinity(), 1.0);
        let h = RationalFn::from_coeffs(&[0.0, 0.0, -3.0], &[1.0, 1.0]).unwrap();
        assert_eq!(h.value_at_infinity(), f64::NEG_INFINITY);
        // finite limits agree with large-argument samples
        for f in [f, g] {
            let lim = f.value_at_infinity();
            for s in [1e6, 1e8] {
                assert!(close(f.eval_real(s).unwrap(), lim, 1e-4));
            }
        }
    }

    #[test]
    fn scale_and_compose_affine() {
        let f = RationalFn::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let g = f.scale(2.0);
        assert!(close(g.eval_real(1.0).unwrap(), 1.0, 1e-15));
        // substituting s -> s/2 in r(-s) = 2/(s^2+2s+2)
        let r = RationalFn::from_coeffs(&[2.0], &[2.0, 2.0, 1.0]).unwrap();
        let half = r.compose_affine(0.5, 0.0).unwrap();
        for s in [0.3, 1.7, 9.0] {
            assert!(close(
                half.eval_real(s).unwrap(),
                r.eval_real(0.5 * s).unwrap(),
                1e-14
            ));
        }
        let sq = f.mul(&f).unwrap();
        assert_eq!(sq.den().coeffs(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn constructor_and_root_input_errors() {
        assert!(matches!(
            RationalFn::from_coeffs(&[1.0], &[0.0]),
            Err(PolyError::ZeroDenominator)
        ));
        let p = Polynomial::new(&[1.0, 1.0]);
        assert!(matches!(
            real_roots_in(&Polynomial::zero(), 0.0, 1.0, 1e-10),
            Err(PolyError::InvalidInput(_))
        ));
        assert!(real_roots_in(&p, 2.0, 1.0, 1e-10).is_err());
        assert!(real_roots_in(&p, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn degree_cap_triggers() {
        let big = RationalFn::from_coeffs(&[1.0], &{
            let mut v = vec![0.0; 40];
            v.push(1.0);
            v
        })
        .unwrap();
        assert!(matches!(
            big.mul(&big),
            Err(PolyError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn cubic_root_from_three_stage_tail_analysis() {
        // s^3 - 3 s^2 - 24 s - 48 has its only root beyond s = 4 near 7.235
        let p = Polynomial::new(&[-48.0, -24.0, -3.0, 1.0]);
        let roots = real_roots_in(&p, 4.0, 20.0, 1e-12).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 7.235).abs() < 2e-3);
        assert!(p.eval(roots[0]).abs() <= 1e-9 * p.max_abs_coeff());
    }

    #[test]
    fn quintic_root_from_four_stage_tail_analysis() {
        let p = Polynomial::new(&[-5400.0, -1800.0, -60.0, 60.0, 9.0, -1.0]);
        let roots = real_roots_in(&p, 10.5, 20.0, 1e-12).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 12.28).abs() < 5e-3);
    }

    #[test]
    fn unit_root_of_quadratic() {
        let p = Polynomial::new(&[-1.0, 0.0, 1.0]);
        let roots = real_roots_in(&p, 0.0, 2.0, 1e-12).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 1.0).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn product_evaluates_to_product(
            a in proptest::collection::vec(-3.0f64..3.0, 1..5),
            b in proptest::collection::vec(-3.0f64..3.0, 1..5),
            re in -1e3f64..1e3,
            im in -1e3f64..1e3,
        ) {
            let f = RationalFn::new(Polynomial::new(&a), Polynomial::new(&[1.0, 0.5, 0.25])).unwrap();
            let g = RationalFn::new(Polynomial::new(&b), Polynomial::new(&[2.0, 0.0, 1.0])).unwrap();
            let z = Complex64::new(re, im);
            let lhs = f.mul(&g).unwrap().eval(z).unwrap();
            let rhs = f.eval(z).unwrap() * g.eval(z).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn compose_affine_evaluates_at_transformed_point(
            a in proptest::collection::vec(-3.0f64..3.0, 1..5),
            scale in 0.1f64..3.0,
            shift in -2.0f64..2.0,
            x in -5.0f64..5.0,
        ) {
            let f = RationalFn::new(Polynomial::new(&a), Polynomial::new(&[4.0, 0.0, 1.0])).unwrap();
            let g = f.compose_affine(scale, shift).unwrap();
            let lhs = g.eval_real(x).unwrap();
            let rhs = f.eval_real(scale * x + shift).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn bracketed_roots_are_recovered(
            r1 in -4.0f64..4.0,
            gap1 in 0.3f64..2.0,
            gap2 in 0.3f64..2.0,
            lead in prop_oneof![Just(1.0f64), Just(-2.5f64)],
        ) {
            let r2 = r1 + gap1;
            let r3 = r2 + gap2;
            let p = Polynomial::new(&[-r1, 1.0])
                .mul(&Polynomial::new(&[-r2, 1.0]))
                .mul(&Polynomial::new(&[-r3, 1.0]))
                .scale(lead);
            let roots = real_roots_in(&p, -7.0, 9.0, 1e-11).unwrap();
            prop_assert_eq!(roots.len(), 3);
            for (found, expected) in roots.iter().zip([r1, r2, r3]) {
                prop_assert!((found - expected).abs() < 1e-8);
                prop_assert!(p.eval(*found).abs() <= 1e-9 * p.max_abs_coeff().max(1.0));
            }
        }
    }
}
