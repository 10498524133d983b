//! Time-step operators for the parareal iteration.
//!
//! Coarse propagator: one backward-Euler step `(M + ΔT K) u = M (v + ΔT F)`,
//! with the forcing sampled at the left endpoint of the interval (for the
//! Allen-Cahn problem the nonlinearity is taken explicitly, which keeps the
//! coarse step linear).
//!
//! Fine propagator: one m-stage implicit Runge-Kutta step. For linear
//! problems the coupled stage system `(I ⊗ M + Δt (A ⊗ K)) U = rhs` is
//! decoupled by diagonalizing the Butcher matrix `A = V Λ V⁻¹`, giving m
//! independent complex tridiagonal solves `(M + Δt μ_i K) w_i = z_i`; when
//! `A` is not diagonalizable (the Calahan tableau has a double eigenvalue
//! with a single Jordan block) the step falls back to a block-tridiagonal LU
//! on the full m·n system. For the semilinear problem the stage system is
//! solved by Newton's method with the same block-tridiagonal elimination.

use crate::fem1d::{interpolate, FemError, FemSystem, StateVector, TriMatrix, TriMatrixC};
use crate::schemes::SchemeSpec;
use crate::smallmat;
use num_complex::Complex64;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(
        "Butcher matrix of `{scheme}` is not diagonalizable (reconstruction error {defect:.3e})"
    )]
    NonDiagonalizableTableau { scheme: String, defect: f64 },
    #[error("scheme `{0}` has no tableau")]
    MissingTableau(String),
    #[error(
        "Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("singular block pivot in stage system")]
    SingularStageSystem,
}

pub type ForcingFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// u' + Au = f with A the Dirichlet/Neumann Laplacian pencil (M, K).
#[derive(Clone)]
pub struct LinearProblem {
    pub fem: Arc<FemSystem>,
    pub forcing: Option<Arc<ForcingFn>>,
    pub final_time: f64,
}

impl LinearProblem {
    pub fn new(fem: Arc<FemSystem>, forcing: Option<Arc<ForcingFn>>, final_time: f64) -> Self {
        Self {
            fem,
            forcing,
            final_time,
        }
    }

    /// Nodal values of f(·, t) on the dof nodes.
    fn forcing_at(&self, t: f64) -> Option<Vec<f64>> {
        self.forcing
            .as_ref()
            .map(|f| interpolate(&self.fem.mesh, |x| f(x, t), t).values)
    }
}

/// Allen-Cahn problem u' − u_xx = (u − u³)/ε² with Neumann conditions.
#[derive(Clone)]
pub struct SemilinearProblem {
    pub fem: Arc<FemSystem>,
    pub epsilon: f64,
    pub final_time: f64,
}

impl SemilinearProblem {
    pub fn new(fem: Arc<FemSystem>, epsilon: f64, final_time: f64) -> Self {
        Self {
            fem,
            epsilon,
            final_time,
        }
    }

    #[inline]
    fn f(&self, u: f64) -> f64 {
        (u - u * u * u) / (self.epsilon * self.epsilon)
    }

    #[inline]
    fn fprime(&self, u: f64) -> f64 {
        (1.0 - 3.0 * u * u) / (self.epsilon * self.epsilon)
    }
}

/// A one-step solution operator over an interval of length `dt`.
pub trait Propagator: Send + Sync {
    fn step(&self, t: f64, dt: f64, v: &StateVector) -> Result<StateVector, PropagatorError>;
    fn dof_count(&self) -> usize;
}

// --- coarse propagators ------------------------------------------------------

/// 𝒢(t, ΔT, v) = (M + ΔT K)⁻¹ M (v + ΔT F(t)), forcing at the left endpoint.
pub struct BackwardEulerCoarse {
    problem: LinearProblem,
}

impl BackwardEulerCoarse {
    pub fn new(problem: LinearProblem) -> Self {
        Self { problem }
    }
}

impl Propagator for BackwardEulerCoarse {
    fn step(&self, t: f64, dt: f64, v: &StateVector) -> Result<StateVector, PropagatorError> {
        let fem = &self.problem.fem;
        let mut w = v.values.clone();
        if let Some(f) = self.problem.forcing_at(t) {
            for (wi, fi) in w.iter_mut().zip(f) {
                *wi += dt * fi;
            }
        }
        let rhs = fem.mass.matvec(&w);
        let a = TriMatrix::combine(1.0, &fem.mass, dt, &fem.stiffness);
        Ok(StateVector::new(a.solve(&rhs)?, t + dt))
    }

    fn dof_count(&self) -> usize {
        self.problem.fem.mesh.dof_count()
    }
}

/// Semi-implicit coarse step for the Allen-Cahn problem: diffusion implicit,
/// reaction from the previous value, so each step is one linear solve.
pub struct SemiImplicitEulerCoarse {
    problem: SemilinearProblem,
}

impl SemiImplicitEulerCoarse {
    pub fn new(problem: SemilinearProblem) -> Self {
        Self { problem }
    }
}

impl Propagator for SemiImplicitEulerCoarse {
    fn step(&self, t: f64, dt: f64, v: &StateVector) -> Result<StateVector, PropagatorError> {
        let fem = &self.problem.fem;
        let w: Vec<f64> = v
            .values
            .iter()
            .map(|&u| u + dt * self.problem.f(u))
            .collect();
        let rhs = fem.mass.matvec(&w);
        let a = TriMatrix::combine(1.0, &fem.mass, dt, &fem.stiffness);
        Ok(StateVector::new(a.solve(&rhs)?, t + dt))
    }

    fn dof_count(&self) -> usize {
        self.problem.fem.mesh.dof_count()
    }
}

// --- stage decomposition ------------------------------------------------------

/// Eigendecomposition A = V Λ V⁻¹ of an m×m Butcher matrix over ℂ, with
/// conjugate pairs matched exactly so real data stays real through the
/// transform.
#[derive(Debug, Clone)]
pub struct StageDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub v: Vec<Vec<Complex64>>,
    pub v_inv: Vec<Vec<Complex64>>,
}

impl StageDecomposition {
    pub fn try_new(a: &[Vec<f64>], scheme_name: &str) -> Result<Self, PropagatorError> {
        let m = a.len();
        let cp = smallmat::char_poly(a);
        let mut eig = smallmat::complex_roots(&cp);
        let scale = eig.iter().fold(1.0f64, |s, z| s.max(z.norm()));
        for z in eig.iter_mut() {
            if z.im.abs() < 1e-10 * scale {
                z.im = 0.0;
            }
        }
        eig.sort_by(|p, q| {
            p.re.partial_cmp(&q.re)
                .unwrap()
                .then(p.im.partial_cmp(&q.im).unwrap())
        });
        // exact conjugate pairing of adjacent complex roots
        let mut i = 0;
        while i + 1 < m {
            if eig[i].im != 0.0
                && (eig[i].re - eig[i + 1].re).abs() < 1e-8 * scale
                && (eig[i].im + eig[i + 1].im).abs() < 1e-8 * scale
            {
                eig[i + 1] = eig[i].conj();
                i += 2;
            } else {
                i += 1;
            }
        }

        let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        for k in 0..m {
            if k > 0 && eig[k] == eig[k - 1].conj() && eig[k].im != 0.0 {
                vectors.push(vectors[k - 1].iter().map(|c| c.conj()).collect());
            } else {
                vectors.push(smallmat::eigenvector(a, eig[k]));
            }
        }
        let v: Vec<Vec<Complex64>> = (0..m)
            .map(|r| (0..m).map(|k| vectors[k][r]).collect())
            .collect();

        // V⁻¹ column by column
        let ident = |j: usize| -> Vec<Complex64> {
            (0..m)
                .map(|i| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        };
        let mut v_inv = vec![vec![Complex64::new(0.0, 0.0); m]; m];
        for j in 0..m {
            match smallmat::solve_complex_dense(&v, &ident(j), false) {
                Some(col) => {
                    for i in 0..m {
                        v_inv[i][j] = col[i];
                    }
                }
                None => {
                    return Err(PropagatorError::NonDiagonalizableTableau {
                        scheme: scheme_name.to_string(),
                        defect: f64::INFINITY,
                    })
                }
            }
        }

        // reconstruction check ‖V Λ V⁻¹ − A‖∞
        let mut defect = 0.0f64;
        for r in 0..m {
            for c in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..m {
                    acc += v[r][k] * eig[k] * v_inv[k][c];
                }
                defect = defect.max((acc - a[r][c]).norm());
            }
        }
        if defect > 1e-12 {
            return Err(PropagatorError::NonDiagonalizableTableau {
                scheme: scheme_name.to_string(),
                defect,
            });
        }
        Ok(Self {
            eigenvalues: eig,
            v,
            v_inv,
        })
    }
}

#[derive(Debug, Clone)]
pub enum StageStrategy {
    Diagonalized(StageDecomposition),
    /// Direct block-tridiagonal LU on the coupled m·n system.
    BlockLu,
}

// --- linear IRK step ----------------------------------------------------------

/// One IRK step of `M u' + K u = M F(t)`: solves the stage system and applies
/// `u⁺ = v + Δt Σ b_i M⁻¹(−K U_i + M F_i)` with a single extra mass solve.
#[allow(clippy::too_many_arguments)]
fn irk_linear_step(
    mass: &TriMatrix,
    stiff: &TriMatrix,
    a: &[Vec<f64>],
    b: &[f64],
    strategy: &StageStrategy,
    dt: f64,
    v: &[f64],
    stage_forcing: Option<&[Vec<f64>]>,
) -> Result<Vec<f64>, PropagatorError> {
    let m = b.len();
    let n = v.len();

    // rhs_i = M (v + dt Σ_j a_ij F_j)
    let mut rhs: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut w = v.to_vec();
        if let Some(forcing) = stage_forcing {
            for j in 0..m {
                let aij = a[i][j];
                if aij != 0.0 {
                    for p in 0..n {
                        w[p] += dt * aij * forcing[j][p];
                    }
                }
            }
        }
        rhs.push(mass.matvec(&w));
    }

    // weighted stage combination S = Σ_i b_i U_i
    let s = match strategy {
        StageStrategy::Diagonalized(dec) => {
            let mut s = vec![0.0f64; n];
            // beta_k = Σ_i b_i V[i][k] collapses the back-transform
            let betas: Vec<Complex64> = (0..m)
                .map(|k| (0..m).map(|i| dec.v[i][k] * b[i]).sum::<Complex64>())
                .collect();
            let mut z = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..m {
                for (p, zp) in z.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, r) in rhs.iter().enumerate() {
                        acc += dec.v_inv[k][i] * r[p];
                    }
                    *zp = acc;
                }
                let system = TriMatrixC::combine(1.0, mass, dec.eigenvalues[k] * dt, stiff);
                let w = system.solve(&z)?;
                for p in 0..n {
                    s[p] += (betas[k] * w[p]).re;
                }
            }
            s
        }
        StageStrategy::BlockLu => {
            let mut diag: Vec<Vec<f64>> = Vec::with_capacity(n);
            let mut sup: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
            let mut sub: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
            for p in 0..n {
                let mut block = vec![0.0; m * m];
                for i in 0..m {
                    for j in 0..m {
                        let mut e = dt * a[i][j] * stiff.diag[p];
                        if i == j {
                            e += mass.diag[p];
                        }
                        block[i * m + j] = e;
                    }
                }
                diag.push(block);
                if p + 1 < n {
                    let mut bs = vec![0.0; m * m];
                    let mut bb = vec![0.0; m * m];
                    for i in 0..m {
                        for j in 0..m {
                            let mut es = dt * a[i][j] * stiff.sup[p];
                            let mut eb = dt * a[i][j] * stiff.sub[p];
                            if i == j {
                                es += mass.sup[p];
                                eb += mass.sub[p];
                            }
                            bs[i * m + j] = es;
                            bb[i * m + j] = eb;
                        }
                    }
                    sup.push(bs);
                    sub.push(bb);
                }
            }
            let mut block_rhs: Vec<Vec<f64>> = (0..n)
                .map(|p| (0..m).map(|i| rhs[i][p]).collect())
                .collect();
            let x = smallmat::block_thomas(&mut diag, &sup, &sub, &mut block_rhs, m)
                .ok_or(PropagatorError::SingularStageSystem)?;
            (0..n)
                .map(|p| (0..m).map(|i| b[i] * x[p][i]).sum())
                .collect()
        }
    };

    // u⁺ = v + dt (Σ b_i F_i − M⁻¹ K S)
    let ks = stiff.matvec(&s);
    let y = mass.solve(&ks)?;
    let mut out = v.to_vec();
    for p in 0..n {
        let mut g = 0.0;
        if let Some(forcing) = stage_forcing {
            for i in 0..m {
                g += b[i] * forcing[i][p];
            }
        }
        out[p] += dt * (g - y[p]);
    }
    Ok(out)
}

/// Implicit Runge-Kutta fine propagator for a linear problem.
pub struct IrkFineLinear {
    problem: LinearProblem,
    scheme: Arc<SchemeSpec>,
    strategy: StageStrategy,
}

impl IrkFineLinear {
    /// Diagonalizes the Butcher matrix once; falls back to the block solver
    /// when the matrix is defective.
    pub fn new(problem: LinearProblem, scheme: Arc<SchemeSpec>) -> Result<Self, PropagatorError> {
        let tableau = scheme
            .tableau
            .as_ref()
            .ok_or_else(|| PropagatorError::MissingTableau(scheme.name.clone()))?;
        let strategy = match StageDecomposition::try_new(&tableau.a, &scheme.name) {
            Ok(dec) => StageStrategy::Diagonalized(dec),
            Err(PropagatorError::NonDiagonalizableTableau { .. }) => StageStrategy::BlockLu,
            Err(e) => return Err(e),
        };
        Ok(Self {
            problem,
            scheme,
            strategy,
        })
    }

    pub fn uses_diagonalization(&self) -> bool {
        matches!(self.strategy, StageStrategy::Diagonalized(_))
    }

    pub fn scheme(&self) -> &SchemeSpec {
        &self.scheme
    }
}

impl Propagator for IrkFineLinear {
    fn step(&self, t: f64, dt: f64, v: &StateVector) -> Result<StateVector, PropagatorError> {
        let tableau = self.scheme.tableau.as_ref().expect("checked at build");
        let stage_forcing: Option<Vec<Vec<f64>>> = self.problem.forcing.as_ref().map(|f| {
            tableau
                .c
                .iter()
                .map(|ci| interpolate(&self.problem.fem.mesh, |x| f(x, t + ci * dt), 0.0).values)
                .collect()
        });
        let values = irk_linear_step(
            &self.problem.fem.mass,
            &self.problem.fem.stiffness,
            &tableau.a,
            &tableau.b,
            &self.strategy,
            dt,
            &v.values,
            stage_forcing.as_deref(),
        )?;
        Ok(StateVector::new(values, t + dt))
    }

    fn dof_count(&self) -> usize {
        self.problem.fem.mesh.dof_count()
    }
}

// --- semilinear fine propagator -------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonStats {
    pub iterations: usize,
    /// Stage residual ∞-norms, one entry per assembled residual (the last one
    /// is below tolerance).
    pub residuals: Vec<f64>,
}

/// Fully implicit IRK step for the Allen-Cahn problem; the coupled nonlinear
/// stage system is solved by Newton iteration with block-tridiagonal
/// elimination of the Jacobian.
pub struct IrkFineSemilinear {
    problem: SemilinearProblem,
    scheme: Arc<SchemeSpec>,
    newton: NewtonConfig,
    max_newton_seen: AtomicUsize,
}

impl IrkFineSemilinear {
    pub fn new(
        problem: SemilinearProblem,
        scheme: Arc<SchemeSpec>,
        newton: NewtonConfig,
    ) -> Result<Self, PropagatorError> {
        if scheme.tableau.is_none() {
            return Err(PropagatorError::MissingTableau(scheme.name.clone()));
        }
        Ok(Self {
            problem,
            scheme,
            newton,
            max_newton_seen: AtomicUsize::new(0),
        })
    }

    /// Largest Newton iteration count any step has needed so far.
    pub fn max_newton_iterations(&self) -> usize {
        self.max_newton_seen.load(Ordering::Relaxed)
    }

    pub fn step_with_stats(
        &self,
        t: f64,
        dt: f64,
        v: &StateVector,
    ) -> Result<(StateVector, NewtonStats), PropagatorError> {
        let tableau = self.scheme.tableau.as_ref().expect("checked at build");
        let a = &tableau.a;
        let b = &tableau.b;
        let m = b.len();
        let fem = &self.problem.fem;
        let mass = &fem.mass;
        let stiff = &fem.stiffness;
        let n = v.values.len();

        let mv = mass.matvec(&v.values);
        let mut stages: Vec<Vec<f64>> = vec![v.values.clone(); m];
        let mut residuals = Vec::new();
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..self.newton.max_iter {
            // residual R_i = M U_i + dt Σ_j a_ij (K U_j − M f(U_j)) − M v
            let ku: Vec<Vec<f64>> = stages.iter().map(|u| stiff.matvec(u)).collect();
            let mf: Vec<Vec<f64>> = stages
                .iter()
                .map(|u| {
                    let fu: Vec<f64> = u.iter().map(|&x| self.problem.f(x)).collect();
                    mass.matvec(&fu)
                })
                .collect();
            let mut res: Vec<Vec<f64>> = Vec::with_capacity(m);
            let mut res_norm = 0.0f64;
            for i in 0..m {
                let mui = mass.matvec(&stages[i]);
                let mut r = vec![0.0; n];
                for p in 0..n {
                    let mut acc = mui[p] - mv[p];
                    for j in 0..m {
                        acc += dt * a[i][j] * (ku[j][p] - mf[j][p]);
                    }
                    r[p] = acc;
                    res_norm = res_norm.max(acc.abs());
                }
                res.push(r);
            }
            residuals.push(res_norm);
            if res_norm < self.newton.tol {
                converged = true;
                break;
            }
            iterations += 1;

            // Jacobian block (i,j) at nodes (p,q): δ_ij M + dt a_ij (K − M diag f'(U_j))
            let fp: Vec<Vec<f64>> = stages
                .iter()
                .map(|u| u.iter().map(|&x| self.problem.fprime(x)).collect())
                .collect();
            let mut diag: Vec<Vec<f64>> = Vec::with_capacity(n);
            let mut sup: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
            let mut sub: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
            for p in 0..n {
                let mut block = vec![0.0; m * m];
                for i in 0..m {
                    for j in 0..m {
                        let mut e = dt * a[i][j] * (stiff.diag[p] - mass.diag[p] * fp[j][p]);
                        if i == j {
                            e += mass.diag[p];
                        }
                        block[i * m + j] = e;
                    }
                }
                diag.push(block);
                if p + 1 < n {
                    let mut bs = vec![0.0; m * m];
                    let mut bb = vec![0.0; m * m];
                    for i in 0..m {
                        for j in 0..m {
                            let mut es = dt * a[i][j] * (stiff.sup[p] - mass.sup[p] * fp[j][p + 1]);
                            let mut eb = dt * a[i][j] * (stiff.sub[p] - mass.sub[p] * fp[j][p]);
                            if i == j {
                                es += mass.sup[p];
                                eb += mass.sub[p];
                            }
                            bs[i * m + j] = es;
                            bb[i * m + j] = eb;
                        }
                    }
                    sup.push(bs);
                    sub.push(bb);
                }
            }
            let mut rhs: Vec<Vec<f64>> = (0..n)
                .map(|p| (0..m).map(|i| -res[i][p]).collect())
                .collect();
            let delta = smallmat::block_thomas(&mut diag, &sup, &sub, &mut rhs, m)
                .ok_or(PropagatorError::SingularStageSystem)?;
            for p in 0..n {
                for i in 0..m {
                    stages[i][p] += delta[p][i];
                }
            }
        }
        if !converged {
            return Err(PropagatorError::NewtonDiverged {
                iterations,
                residual: residuals.last().copied().unwrap_or(f64::NAN),
            });
        }
        self.max_newton_seen
            .fetch_max(iterations, Ordering::Relaxed);

        // u⁺ = v + dt Σ b_i (f(U_i) − M⁻¹ K U_i)
        let mut s = vec![0.0; n];
        let mut g = vec![0.0; n];
        for i in 0..m {
            for p in 0..n {
                s[p] += b[i] * stages[i][p];
                g[p] += b[i] * self.problem.f(stages[i][p]);
            }
        }
        let ks = stiff.matvec(&s);
        let y = mass.solve(&ks)?;
        let mut out = v.values.clone();
        for p in 0..n {
            out[p] += dt * (g[p] - y[p]);
        }
        Ok((
            StateVector::new(out, t + dt),
            NewtonStats {
                iterations,
                residuals,
            },
        ))
    }
}

impl Propagator for IrkFineSemilinear {
    fn step(&self, t: f64, dt: f64, v: &StateVector) -> Result<StateVector, PropagatorError> {
        self.step_with_stats(t, dt, v).map(|(s, _)| s)
    }

    fn dof_count(&self) -> usize {
        self.problem.fem.mesh.dof_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem1d::{dirichlet_eigenpair, BoundaryCondition, Mesh1D};
    use crate::schemes::{all_builtins, builtin};

    fn fem(m: usize, bc: BoundaryCondition) -> Arc<FemSystem> {
        Arc::new(FemSystem::new(m, bc).unwrap())
    }

    #[test]
    fn lobatto_matrices_diagonalize_and_calahan_does_not() {
        for name in [
            "backward-euler",
            "lobatto3c-2",
            "lobatto3c-3",
            "lobatto3c-4",
        ] {
            let s = builtin(name).unwrap();
            let dec = StageDecomposition::try_new(&s.tableau.as_ref().unwrap().a, name);
            assert!(dec.is_ok(), "{name} should diagonalize");
        }
        let calahan = builtin("calahan").unwrap();
        let dec = StageDecomposition::try_new(&calahan.tableau.as_ref().unwrap().a, "calahan");
        assert!(matches!(
            dec,
            Err(PropagatorError::NonDiagonalizableTableau { .. })
        ));
    }

    #[test]
    fn coarse_step_damps_eigenvector_by_resolvent() {
        let fem = fem(200, BoundaryCondition::Dirichlet);
        let mesh = Mesh1D::new(200, BoundaryCondition::Dirichlet);
        let (lambda, phi) = dirichlet_eigenpair(&mesh, 1);
        let problem = LinearProblem::new(fem.clone(), None, 1.0);
        let coarse = BackwardEulerCoarse::new(problem);
        let dt = 0.1;
        let out = coarse
            .step(0.0, dt, &StateVector::new(phi.clone(), 0.0))
            .unwrap();
        let factor = 1.0 / (1.0 + dt * lambda);
        for (o, p) in out.values.iter().zip(&phi) {
            assert!((o - factor * p).abs() < 1e-11);
        }
    }

    #[test]
    fn coarse_step_matches_dense_oracle_with_forcing() {
        let fem = fem(1000, BoundaryCondition::Dirichlet);
        let problem = LinearProblem::new(
            fem.clone(),
            Some(Arc::new(|x: f64, t: f64| x.sin() * t.cos())),
            1.0,
        );
        let coarse = BackwardEulerCoarse::new(problem);
        let n = fem.mesh.dof_count();
        let out = coarse.step(0.0, 0.01, &StateVector::zeros(n, 0.0)).unwrap();
        // dense LU oracle on the same shifted matrix
        let shifted = TriMatrix::combine(1.0, &fem.mass, 0.01, &fem.stiffness);
        let f: Vec<f64> = (0..n).map(|i| fem.mesh.node(i).sin() * 0.01).collect();
        let rhs = fem.mass.matvec(&f);
        let dense: Vec<Vec<Complex64>> = {
            let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            for i in 0..n {
                a[i][i] = shifted.diag[i].into();
                if i > 0 {
                    a[i][i - 1] = shifted.sub[i - 1].into();
                }
                if i + 1 < n {
                    a[i][i + 1] = shifted.sup[i].into();
                }
            }
            a
        };
        let rhs_c: Vec<Complex64> = rhs.iter().map(|&x| x.into()).collect();
        let oracle = crate::smallmat::solve_complex_dense(&dense, &rhs_c, false).unwrap();
        for i in 0..n {
            assert!((out.values[i] - oracle[i].re).abs() < 1e-11);
        }
    }

    #[test]
    fn fine_step_maps_eigenvectors_through_stability_function() {
        let m = 40;
        let fem = fem(m, BoundaryCondition::Dirichlet);
        let mesh = Mesh1D::new(m, BoundaryCondition::Dirichlet);
        for s in all_builtins() {
            let scheme = Arc::new(s);
            let problem = LinearProblem::new(fem.clone(), None, 1.0);
            let fine = IrkFineLinear::new(problem, scheme.clone()).unwrap();
            for k in [1usize, 5, 39] {
                let (lambda, phi) = dirichlet_eigenpair(&mesh, k);
                let phi_norm = fem.mass_norm(&phi);
                for dt in [1e-3, 1e-2, 1e-1] {
                    let out = fine
                        .step(0.0, dt, &StateVector::new(phi.clone(), 0.0))
                        .unwrap();
                    let r = scheme.r.eval_real(-dt * lambda).unwrap();
                    let err: Vec<f64> = out
                        .values
                        .iter()
                        .zip(&phi)
                        .map(|(o, p)| o - r * p)
                        .collect();
                    assert!(
                        fem.mass_norm(&err) <= 1e-9 * phi_norm,
                        "{} k={k} dt={dt}",
                        scheme.name
                    );
                }
            }
        }
    }

    #[test]
    fn scalar_ode_step_equals_stability_function() {
        // y' = -y as the 1×1 pencil M = [1], K = [1]
        let mass = TriMatrix::new(vec![], vec![1.0], vec![]);
        let stiff = TriMatrix::new(vec![], vec![1.0], vec![]);
        let s = builtin("lobatto3c-3").unwrap();
        let t = s.tableau.as_ref().unwrap();
        let dec = StageDecomposition::try_new(&t.a, &s.name).unwrap();
        let y = irk_linear_step(
            &mass,
            &stiff,
            &t.a,
            &t.b,
            &StageStrategy::Diagonalized(dec),
            0.5,
            &[1.0],
            None,
        )
        .unwrap();
        let expected = s.r.eval_real(-0.5).unwrap();
        assert!((y[0] - expected).abs() < 1e-13);
    }

    #[test]
    fn diagonalized_and_block_routes_agree() {
        let m = 40;
        let fem = fem(m, BoundaryCondition::Dirichlet);
        let s = builtin("lobatto3c-3").unwrap();
        let t = s.tableau.as_ref().unwrap();
        let dec = StageDecomposition::try_new(&t.a, &s.name).unwrap();
        let v: Vec<f64> = (0..fem.mesh.dof_count())
            .map(|i| (3.0 * fem.mesh.node(i)).sin() + 0.4)
            .collect();
        let forcing: Vec<Vec<f64>> =
            t.c.iter()
                .map(|ci| {
                    (0..fem.mesh.dof_count())
                        .map(|i| (fem.mesh.node(i) + ci).cos())
                        .collect()
                })
                .collect();
        let diag_route = irk_linear_step(
            &fem.mass,
            &fem.stiffness,
            &t.a,
            &t.b,
            &StageStrategy::Diagonalized(dec),
            0.05,
            &v,
            Some(&forcing),
        )
        .unwrap();
        let block_route = irk_linear_step(
            &fem.mass,
            &fem.stiffness,
            &t.a,
            &t.b,
            &StageStrategy::BlockLu,
            0.05,
            &v,
            Some(&forcing),
        )
        .unwrap();
        for (a, b) in diag_route.iter().zip(&block_route) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn one_step_consistency_as_dt_vanishes() {
        let fem = fem(60, BoundaryCondition::Dirichlet);
        let problem = LinearProblem::new(
            fem.clone(),
            Some(Arc::new(|x: f64, t: f64| (x + t).sin())),
            1.0,
        );
        let fine = IrkFineLinear::new(problem, Arc::new(builtin("lobatto3c-2").unwrap())).unwrap();
        let v = interpolate(&fem.mesh, |x| x.sin(), 0.0);
        let mut prev = f64::INFINITY;
        for dt in [1e-3, 5e-4, 2.5e-4] {
            let out = fine.step(0.0, dt, &v).unwrap();
            let diff: Vec<f64> = out
                .values
                .iter()
                .zip(&v.values)
                .map(|(a, b)| a - b)
                .collect();
            let err = fem.mass_norm(&diff);
            assert!(err < 10.0 * dt);
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn unconditional_stability_on_homogeneous_problem() {
        let fem = fem(80, BoundaryCondition::Dirichlet);
        let v: Vec<f64> = (0..fem.mesh.dof_count())
            .map(|i| if i % 7 == 0 { 1.0 } else { -0.3 })
            .collect();
        let v = StateVector::new(v, 0.0);
        let vn = fem.mass_norm(&v.values);
        for s in all_builtins() {
            let problem = LinearProblem::new(fem.clone(), None, 1.0);
            let fine = IrkFineLinear::new(problem, Arc::new(s)).unwrap();
            for dt in [1e-3, 0.1, 10.0] {
                let out = fine.step(0.0, dt, &v).unwrap();
                assert!(fem.mass_norm(&out.values) <= vn * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn semilinear_equilibria_are_preserved() {
        let fem = fem(30, BoundaryCondition::Neumann);
        let problem = SemilinearProblem::new(fem.clone(), 1.0, 0.1);
        let coarse = SemiImplicitEulerCoarse::new(problem.clone());
        let fine = IrkFineSemilinear::new(
            problem.clone(),
            Arc::new(builtin("lobatto3c-2").unwrap()),
            NewtonConfig::default(),
        )
        .unwrap();
        let n = fem.mesh.dof_count();
        for value in [0.0, 1.0] {
            let v = StateVector::new(vec![value; n], 0.0);
            let c = coarse.step(0.0, 0.01, &v).unwrap();
            let f = fine.step(0.0, 0.01, &v).unwrap();
            for x in c.values.iter().chain(&f.values) {
                assert!((x - value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semilinear_coarse_constant_state_scalar_oracle() {
        // constant 0.5 under Neumann: the stiffness term vanishes, so the
        // step is scalar: u = 0.5 + dT (0.5 − 0.125) = 0.50375
        let fem = fem(30, BoundaryCondition::Neumann);
        let problem = SemilinearProblem::new(fem.clone(), 1.0, 0.1);
        let coarse = SemiImplicitEulerCoarse::new(problem);
        let v = StateVector::new(vec![0.5; fem.mesh.dof_count()], 0.0);
        let out = coarse.step(0.0, 0.01, &v).unwrap();
        for x in out.values {
            assert!((x - 0.50375).abs() < 1e-14);
        }
    }

    #[test]
    fn newton_stage_solve_matches_picard_oracle() {
        // small mesh so the naive fixed-point iteration contracts
        let fem = fem(16, BoundaryCondition::Neumann);
        let problem = SemilinearProblem::new(fem.clone(), 1.0, 0.1);
        let s = builtin("lobatto3c-2").unwrap();
        let tab = s.tableau.clone().unwrap();
        let fine =
            IrkFineSemilinear::new(problem.clone(), Arc::new(s), NewtonConfig::default()).unwrap();
        let v = interpolate(&fem.mesh, |x| x.cos(), 0.0);
        let dt = 1.0 / 600.0;
        let (newton_out, stats) = fine.step_with_stats(0.0, dt, &v).unwrap();

        // Picard oracle: U_i ← v + dt Σ_j a_ij (f(U_j) − M⁻¹ K U_j), 500 sweeps
        let m = tab.b.len();
        let n = v.values.len();
        let mut stages = vec![v.values.clone(); m];
        for _ in 0..500 {
            let g: Vec<Vec<f64>> = stages
                .iter()
                .map(|u| {
                    let ku = fem.stiffness.matvec(u);
                    let y = fem.mass.solve(&ku).unwrap();
                    (0..n).map(|p| problem.f(u[p]) - y[p]).collect()
                })
                .collect();
            for i in 0..m {
                for p in 0..n {
                    let mut acc = v.values[p];
                    for j in 0..m {
                        acc += dt * tab.a[i][j] * g[j][p];
                    }
                    stages[i][p] = acc;
                }
            }
        }
        let mut out = v.values.clone();
        let mut s_comb = vec![0.0; n];
        let mut g_comb = vec![0.0; n];
        for i in 0..m {
            for p in 0..n {
                s_comb[p] += tab.b[i] * stages[i][p];
                g_comb[p] += tab.b[i] * problem.f(stages[i][p]);
            }
        }
        let y = fem.mass.solve(&fem.stiffness.matvec(&s_comb)).unwrap();
        for p in 0..n {
            out[p] += dt * (g_comb[p] - y[p]);
        }
        for (a, b) in newton_out.values.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }

        // quadratic residual decay over the recorded tail
        let res = &stats.residuals;
        assert!(res.len() >= 2);
        for w in res.windows(2) {
            if w[0] > 1e-12 && w[1] > 1e-14 {
                assert!(
                    w[1] <= 1e3 * w[0] * w[0],
                    "not quadratic: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn tableau_free_scheme_is_rejected() {
        let mut s = builtin("lobatto3c-2").unwrap();
        s.tableau = None;
        let fem = fem(24, BoundaryCondition::Dirichlet);
        let problem = LinearProblem::new(fem, None, 1.0);
        assert!(matches!(
            IrkFineLinear::new(problem, Arc::new(s)),
            Err(PropagatorError::MissingTableau(_))
        ));
    }

    #[test]
    fn newton_diverges_for_huge_steps() {
        let fem = fem(24, BoundaryCondition::Neumann);
        // tiny interface parameter makes the reaction extremely stiff
        let problem = SemilinearProblem::new(fem.clone(), 1e-3, 0.1);
        let fine = IrkFineSemilinear::new(
            problem,
            Arc::new(builtin("lobatto3c-3").unwrap()),
            NewtonConfig {
                tol: 1e-11,
                max_iter: 8,
            },
        )
        .unwrap();
        let v = interpolate(&fem.mesh, |x| 0.6 * x.cos(), 0.0);
        let out = fine.step(0.0, 10.0, &v);
        assert!(matches!(out, Err(PropagatorError::NewtonDiverged { .. })));
    }
}
