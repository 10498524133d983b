//! Piecewise-linear Galerkin discretization of −∂ₓₓ on Ω = (0, π).
//!
//! Uniform mesh, consistent mass matrix, Dirichlet or Neumann boundary
//! conditions, and Thomas-algorithm solvers for real and complex shifted
//! combinations α·M + β·K (every implicit step in this crate is one such
//! solve).

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh with {intervals} intervals is too coarse (need at least 3)")]
    MeshTooCoarse { intervals: usize },
    #[error("singular tridiagonal matrix: zero pivot at row {index}")]
    SingularMatrix { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Uniform mesh on (0, π) with `intervals` cells of width h = π / intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    intervals: usize,
    h: f64,
    bc: BoundaryCondition,
}

impl Mesh1D {
    pub fn new(intervals: usize, bc: BoundaryCondition) -> Self {
        Self {
            intervals,
            h: PI / intervals as f64,
            bc,
        }
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Number of unknowns: M − 1 interior nodes (Dirichlet) or all M + 1
    /// nodes (Neumann).
    pub fn dof_count(&self) -> usize {
        match self.bc {
            BoundaryCondition::Dirichlet => self.intervals - 1,
            BoundaryCondition::Neumann => self.intervals + 1,
        }
    }

    /// Coordinate of degree of freedom `i`.
    pub fn node(&self, i: usize) -> f64 {
        match self.bc {
            BoundaryCondition::Dirichlet => (i + 1) as f64 * self.h,
            BoundaryCondition::Neumann => i as f64 * self.h,
        }
    }
}

/// Tridiagonal matrix stored as bands.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMatrix {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TriMatrix {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Self {
        assert_eq!(sub.len() + 1, diag.len());
        assert_eq!(sup.len() + 1, diag.len());
        Self { sub, diag, sup }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![0.0; n - 1], vec![1.0; n], vec![0.0; n - 1])
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// α·A + β·B entrywise over the bands.
    pub fn combine(alpha: f64, a: &TriMatrix, beta: f64, b: &TriMatrix) -> TriMatrix {
        TriMatrix::new(
            a.sub
                .iter()
                .zip(&b.sub)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
            a.diag
                .iter()
                .zip(&b.diag)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
            a.sup
                .iter()
                .zip(&b.sup)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        )
    }

    /// Thomas algorithm.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let n = self.n();
        if rhs.len() != n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.sub)
            .chain(&self.sup)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom.abs() < 1e-300 * scale {
            return Err(FemError::SingularMatrix { index: 0 });
        }
        if n > 1 {
            c[0] = self.sup[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if denom.abs() < 1e-300 * scale {
                return Err(FemError::SingularMatrix { index: i });
            }
            if i + 1 < n {
                c[i] = self.sup[i] / denom;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= c[i] * next;
        }
        Ok(d)
    }
}

/// Complex tridiagonal matrix (for diagonalized implicit stages).
#[derive(Debug, Clone)]
pub struct TriMatrixC {
    pub sub: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub sup: Vec<Complex64>,
}

impl TriMatrixC {
    /// α·A + β·B with a complex weight on B.
    pub fn combine(alpha: f64, a: &TriMatrix, beta: Complex64, b: &TriMatrix) -> TriMatrixC {
        let lift = |x: &f64, y: &f64| Complex64::new(alpha * x, 0.0) + beta * y;
        TriMatrixC {
            sub: a.sub.iter().zip(&b.sub).map(|(x, y)| lift(x, y)).collect(),
            diag: a
                .diag
                .iter()
                .zip(&b.diag)
                .map(|(x, y)| lift(x, y))
                .collect(),
            sup: a.sup.iter().zip(&b.sup).map(|(x, y)| lift(x, y)).collect(),
        }
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, FemError> {
        let n = self.diag.len();
        if rhs.len() != n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.sub)
            .chain(&self.sup)
            .fold(0.0f64, |m, v| m.max(v.norm()))
            .max(1.0);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        let mut denom = self.diag[0];
        if denom.norm() < 1e-300 * scale {
            return Err(FemError::SingularMatrix { index: 0 });
        }
        if n > 1 {
            c[0] = self.sup[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if denom.norm() < 1e-300 * scale {
                return Err(FemError::SingularMatrix { index: i });
            }
            if i + 1 < n {
                c[i] = self.sup[i] / denom;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= c[i] * next;
        }
        Ok(d)
    }
}

/// Assembles the P1 mass and stiffness matrices for the mesh.
///
/// Interior stencils are (h/6)·[1, 4, 1] and (1/h)·[−1, 2, −1]; Dirichlet
/// boundary rows are eliminated, Neumann boundary rows keep the half-hat
/// contributions (mass diagonal h/3, stiffness diagonal 1/h).
pub fn assemble(mesh: &Mesh1D) -> Result<(TriMatrix, TriMatrix), FemError> {
    let m = mesh.intervals();
    if m < 3 {
        return Err(FemError::MeshTooCoarse { intervals: m });
    }
    let h = mesh.spacing();
    let n = mesh.dof_count();
    let mut mass = TriMatrix::new(
        vec![h / 6.0; n - 1],
        vec![2.0 * h / 3.0; n],
        vec![h / 6.0; n - 1],
    );
    let mut stiff = TriMatrix::new(
        vec![-1.0 / h; n - 1],
        vec![2.0 / h; n],
        vec![-1.0 / h; n - 1],
    );
    if mesh.bc() == BoundaryCondition::Neumann {
        mass.diag[0] = h / 3.0;
        mass.diag[n - 1] = h / 3.0;
        stiff.diag[0] = 1.0 / h;
        stiff.diag[n - 1] = 1.0 / h;
    }
    Ok((mass, stiff))
}

/// Mesh together with its assembled operators.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: Mesh1D,
    pub mass: TriMatrix,
    pub stiffness: TriMatrix,
}

impl FemSystem {
    pub fn new(intervals: usize, bc: BoundaryCondition) -> Result<Self, FemError> {
        let mesh = Mesh1D::new(intervals, bc);
        let (mass, stiffness) = assemble(&mesh)?;
        Ok(Self {
            mesh,
            mass,
            stiffness,
        })
    }

    /// Discrete L² norm √(vᵀ M v).
    pub fn mass_norm(&self, v: &[f64]) -> f64 {
        mass_norm(&self.mass, v)
    }
}

pub fn mass_norm(mass: &TriMatrix, v: &[f64]) -> f64 {
    let mv = mass.matvec(v);
    v.iter()
        .zip(mv)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Nodal values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub time: f64,
}

impl StateVector {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn zeros(n: usize, time: f64) -> Self {
        Self::new(vec![0.0; n], time)
    }
}

/// Nodal interpolation of a continuous function.
pub fn interpolate(mesh: &Mesh1D, f: impl Fn(f64) -> f64, time: f64) -> StateVector {
    let values = (0..mesh.dof_count()).map(|i| f(mesh.node(i))).collect();
    StateVector::new(values, time)
}

/// L² projection of the step function χ_(0, cut) onto the P1 space: the load
/// ∫₀^cut φ_i dx is integrated exactly per element, then one mass solve.
pub fn project_indicator(
    mesh: &Mesh1D,
    mass: &TriMatrix,
    cut: f64,
) -> Result<StateVector, FemError> {
    let h = mesh.spacing();
    // ∫ over [lo, hi] ∩ [0, cut] of the rising piece (x - a)/h
    let rising = |a: f64, lo: f64, hi: f64| -> f64 {
        let (u, v) = (lo.max(0.0), hi.min(cut));
        if v <= u {
            return 0.0;
        }
        ((v - a).powi(2) - (u - a).powi(2)) / (2.0 * h)
    };
    // falling piece (b - x)/h on [lo, hi] ∩ [0, cut]
    let falling = |b: f64, lo: f64, hi: f64| -> f64 {
        let (u, v) = (lo.max(0.0), hi.min(cut));
        if v <= u {
            return 0.0;
        }
        ((b - u).powi(2) - (b - v).powi(2)) / (2.0 * h)
    };

    let n = mesh.dof_count();
    let mut load = vec![0.0; n];
    for (i, l) in load.iter_mut().enumerate() {
        let x = mesh.node(i);
        *l = rising(x - h, x - h, x) + falling(x + h, x, x + h);
        // boundary half-hats under Neumann lose the out-of-domain piece
        if mesh.bc() == BoundaryCondition::Neumann {
            if i == 0 {
                *l = falling(h, 0.0, h);
            } else if i == n - 1 {
                *l = rising(PI - h, PI - h, PI);
            }
        }
    }
    let values = mass.solve(&load)?;
    Ok(StateVector::new(values, 0.0))
}

/// Exact eigenpair of the discrete pencil (K, M) under Dirichlet conditions:
/// the sine vector sin(k x_i) with eigenvalue (6/h²)(1 − cos kh)/(2 + cos kh).
pub fn dirichlet_eigenpair(mesh: &Mesh1D, k: usize) -> (f64, Vec<f64>) {
    debug_assert_eq!(mesh.bc(), BoundaryCondition::Dirichlet);
    let h = mesh.spacing();
    let kh = k as f64 * h;
    let lambda = 6.0 / (h * h) * (1.0 - kh.cos()) / (2.0 + kh.cos());
    let vec = (0..mesh.dof_count())
        .map(|i| (k as f64 * mesh.node(i)).sin())
        .collect();
    (lambda, vec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_stencils_for_four_intervals() {
        let mesh = Mesh1D::new(4, BoundaryCondition::Dirichlet);
        let (mass, stiff) = assemble(&mesh).unwrap();
        let h = mesh.spacing();
        assert_eq!(mass.n(), 3);
        for i in 0..3 {
            assert!((mass.diag[i] - 4.0 * h / 6.0).abs() < 1e-15);
            assert!((stiff.diag[i] - 2.0 / h).abs() < 1e-15);
        }
        for i in 0..2 {
            assert!((mass.sub[i] - h / 6.0).abs() < 1e-15);
            assert!((stiff.sup[i] + 1.0 / h).abs() < 1e-15);
        }
    }

    #[test]
    fn mesh_too_coarse() {
        let mesh = Mesh1D::new(2, BoundaryCondition::Dirichlet);
        assert!(matches!(
            assemble(&mesh),
            Err(FemError::MeshTooCoarse { intervals: 2 })
        ));
    }

    #[test]
    fn neumann_constants_in_stiffness_kernel() {
        let sys = FemSystem::new(57, BoundaryCondition::Neumann).unwrap();
        let ones = vec![1.0; sys.mesh.dof_count()];
        for v in sys.stiffness.matvec(&ones) {
            assert!(v.abs() < 1e-13);
        }
        // (M + dT K) x = M·1  =>  x = 1
        let a = TriMatrix::combine(1.0, &sys.mass, 0.05, &sys.stiffness);
        let rhs = sys.mass.matvec(&ones);
        let x = a.solve(&rhs).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_eigenvalue_near_one_via_inverse_power() {
        // oracle: inverse power iteration on (K, M), continuum value is 1
        let sys = FemSystem::new(1000, BoundaryCondition::Dirichlet).unwrap();
        let n = sys.mesh.dof_count();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..60 {
            let rhs = sys.mass.matvec(&v);
            let w = sys.stiffness.solve(&rhs).unwrap();
            let norm = sys.mass_norm(&w);
            v = w.iter().map(|x| x / norm).collect();
            let kv = sys.stiffness.matvec(&v);
            let mv = sys.mass.matvec(&v);
            let num: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
            let den: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
            lambda = num / den;
        }
        assert!((lambda - 1.0).abs() < 1e-5, "lambda = {lambda}");
    }

    #[test]
    fn analytic_eigenpairs_satisfy_the_pencil() {
        let mesh = Mesh1D::new(200, BoundaryCondition::Dirichlet);
        let sys = FemSystem::new(200, BoundaryCondition::Dirichlet).unwrap();
        for k in [1, 2, 7, 50, 199] {
            let (lambda, phi) = dirichlet_eigenpair(&mesh, k);
            let lhs = sys.stiffness.matvec(&phi);
            let rhs = sys.mass.matvec(&phi);
            let scale = sys.mass_norm(&phi) * lambda.max(1.0);
            for i in 0..phi.len() {
                assert!(
                    (lhs[i] - lambda * rhs[i]).abs() < 1e-9 * scale,
                    "k={k} i={i}"
                );
            }
        }
    }

    #[test]
    fn discrete_eigenvalues_converge_at_second_order() {
        for k in 1..=3usize {
            let mut errs = Vec::new();
            for m in [100usize, 200, 400] {
                let mesh = Mesh1D::new(m, BoundaryCondition::Dirichlet);
                let (lambda, _) = dirichlet_eigenpair(&mesh, k);
                errs.push((lambda - (k * k) as f64).abs());
            }
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!((ratio - 4.0).abs() < 0.3, "k={k}, ratio {ratio}");
            }
        }
    }

    #[test]
    fn indicator_projection_preserves_total_integral() {
        // Neumann hats form a partition of unity, so 1ᵀ M u = ∫ χ = π/2
        let sys = FemSystem::new(315, BoundaryCondition::Neumann).unwrap();
        let proj = project_indicator(&sys.mesh, &sys.mass, PI / 2.0).unwrap();
        let total: f64 = sys.mass.matvec(&proj.values).iter().sum();
        assert!((total - PI / 2.0).abs() < 1e-10, "total = {total}");
    }

    #[test]
    fn indicator_projection_dirichlet_shape() {
        let sys = FemSystem::new(200, BoundaryCondition::Dirichlet).unwrap();
        let proj = project_indicator(&sys.mesh, &sys.mass, PI / 2.0).unwrap();
        // close to 1 deep inside the support, close to 0 far outside
        let at = |x: f64| {
            let i = (x / sys.mesh.spacing()).round() as usize - 1;
            proj.values[i]
        };
        assert!((at(0.8) - 1.0).abs() < 1e-6);
        assert!(at(2.6).abs() < 1e-6);
    }

    #[test]
    fn interpolation_is_nodal() {
        let mesh = Mesh1D::new(1000, BoundaryCondition::Dirichlet);
        let v = interpolate(&mesh, |x| x.sin(), 0.0);
        for i in (0..v.values.len()).step_by(117) {
            assert_eq!(v.values[i], mesh.node(i).sin());
        }
        // data (a) of the linear example, verbatim form: nonzero at x = π
        let u0 = |x: f64| x.powi(5) * (1.0 - x).powi(5) / (PI / 2.0).powi(10);
        assert_eq!(u0(0.0), 0.0);
        assert!(u0(PI) != 0.0);
        let center = u0(PI / 2.0);
        let expected = (PI / 2.0).powi(5) * (1.0 - PI / 2.0).powi(5) / (PI / 2.0).powi(10);
        assert!((center - expected).abs() < 1e-15);
    }

    #[test]
    fn thomas_matches_dense_oracle() {
        // 50×50 random tridiagonal vs dense Gaussian elimination
        let n = 50;
        let mut state = 42u64;
        let mut rand = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let diag: Vec<f64> = (0..n).map(|_| 4.0 + rand()).collect();
        let sub: Vec<f64> = (0..n - 1).map(|_| rand()).collect();
        let sup: Vec<f64> = (0..n - 1).map(|_| rand()).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rand()).collect();
        let t = TriMatrix::new(sub.clone(), diag.clone(), sup.clone());
        let x = t.solve(&rhs).unwrap();

        // dense elimination oracle
        let mut a = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            a[i][i] = diag[i];
            if i > 0 {
                a[i][i - 1] = sub[i - 1];
            }
            if i + 1 < n {
                a[i][i + 1] = sup[i];
            }
        }
        let mut b = rhs.clone();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut y = vec![0.0; n];
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in r + 1..n {
                acc -= a[r][c] * y[c];
            }
            y[r] = acc / a[r][r];
        }
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-11);
        }
        // residual bound
        let back = t.matvec(&x);
        let bnorm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            assert!((back[i] - rhs[i]).abs() <= 1e-10 * bnorm);
        }
    }

    #[test]
    fn complex_solve_roundtrip() {
        let sys = FemSystem::new(64, BoundaryCondition::Dirichlet).unwrap();
        let mu = Complex64::new(0.3, 0.7);
        let a = TriMatrixC::combine(1.0, &sys.mass, mu, &sys.stiffness);
        let n = sys.mesh.dof_count();
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.1).sin(), (i as f64 * 0.2).cos()))
            .collect();
        let x = a.solve(&rhs).unwrap();
        // multiply back
        for i in 0..n {
            let mut acc = a.diag[i] * x[i];
            if i > 0 {
                acc += a.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += a.sup[i] * x[i + 1];
            }
            assert!((acc - rhs[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn matrices_are_symmetric_and_definite() {
        let sys = FemSystem::new(100, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(sys.mass.sub, sys.mass.sup);
        assert_eq!(sys.stiffness.sub, sys.stiffness.sup);
        let mut state = 7u64;
        let mut rand = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for _ in 0..100 {
            let v: Vec<f64> = (0..sys.mesh.dof_count()).map(|_| rand()).collect();
            let kv = sys.stiffness.matvec(&v);
            let quad: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
            assert!(quad > 0.0);
        }
    }

    #[test]
    fn identity_solve_is_identity() {
        let b = vec![3.0, -1.5, 0.25, 9.0];
        let x = TriMatrix::identity(4).solve(&b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn singular_matrix_detected() {
        let t = TriMatrix::new(vec![0.0], vec![0.0, 1.0], vec![0.0]);
        assert!(matches!(
            t.solve(&[1.0, 1.0]),
            Err(FemError::SingularMatrix { index: 0 })
        ));
        assert!(matches!(
            TriMatrix::identity(3).solve(&[1.0, 1.0]),
            Err(FemError::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }
}
