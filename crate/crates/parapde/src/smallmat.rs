//! Dense linear algebra on tiny matrices (stage counts m ≤ 4).
//!
//! Everything here is sized for Runge-Kutta coefficient matrices: the
//! characteristic polynomial via Faddeev-LeVerrier, simultaneous complex root
//! iteration, inverse iteration for eigenvectors, and a block-tridiagonal
//! Thomas sweep with dense m×m blocks for coupled stage systems.

use num_complex::Complex64;

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn trace(a: &[Vec<f64>]) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Monic characteristic polynomial det(λI − A), ascending coefficients.
pub(crate) fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m_mat = identity(n);
    let mut am = mat_mul(a, &m_mat);
    for k in 1..=n {
        let c = -trace(&am) / k as f64;
        coeffs[n - k] = c;
        if k < n {
            // M_{k+1} = A·M_k + c·I
            for (i, row) in m_mat.iter_mut().enumerate() {
                row.copy_from_slice(&am[i]);
                row[i] += c;
            }
            am = mat_mul(a, &m_mat);
        }
    }
    coeffs
}

/// All complex roots of a polynomial with real coefficients
/// (Durand-Kerner / Weierstrass iteration).
pub(crate) fn complex_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| -> Complex64 {
        monic
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    };

    let radius = 1.0 + monic[..deg].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32 + 1) * radius).collect();

    for _ in 0..500 {
        let mut delta = 0.0f64;
        for k in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != k {
                    denom *= z[k] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let step = eval(z[k]) / denom;
            z[k] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 * radius {
            break;
        }
    }
    z
}

/// Gaussian elimination with partial pivoting over ℂ. `regularize` replaces
/// near-zero pivots instead of failing, which turns the solve into the inner
/// step of inverse iteration for eigenvectors.
pub(crate) fn solve_complex_dense(
    a: &[Vec<Complex64>],
    b: &[Complex64],
    regularize: bool,
) -> Option<Vec<Complex64>> {
    let n = a.len();
    let mut m: Vec<Vec<Complex64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, c| s.max(c.norm()))
        .max(1.0);

    for col in 0..n {
        let (piv, piv_norm) = (col..n)
            .map(|r| (r, m[r][col].norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if piv_norm < 1e-14 * scale {
            if !regularize {
                return None;
            }
            m[piv][col] += Complex64::new(1e-14 * scale, 0.0);
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Eigenvector of the real matrix `a` for the (approximate) eigenvalue
/// `lambda`, by a few rounds of inverse iteration.
pub(crate) fn eigenvector(a: &[Vec<f64>], lambda: Complex64) -> Vec<Complex64> {
    let n = a.len();
    let shifted: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut v = Complex64::new(a[i][j], 0.0);
                    if i == j {
                        v -= lambda;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(1.0, 0.3 * (k as f64 + 1.0)))
        .collect();
    for _ in 0..3 {
        let w = solve_complex_dense(&shifted, &v, true).expect("regularized solve");
        // normalize so the largest entry is exactly 1
        let (idx, _) = w
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().partial_cmp(&y.1.norm()).unwrap())
            .unwrap();
        let pivot = w[idx];
        v = w.iter().map(|c| c / pivot).collect();
    }
    v
}

/// LU factorization with partial pivoting of a dense m×m real matrix,
/// row-major flat storage.
pub(crate) struct LuSmall {
    m: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuSmall {
    pub(crate) fn factor(matrix: &[f64], m: usize) -> Option<Self> {
        let mut lu = matrix.to_vec();
        let mut perm: Vec<usize> = (0..m).collect();
        let scale = lu.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&r1, &r2| {
                    lu[r1 * m + col]
                        .abs()
                        .partial_cmp(&lu[r2 * m + col].abs())
                        .unwrap()
                })
                .unwrap();
            if lu[piv * m + col].abs() < 1e-300 * scale {
                return None;
            }
            if piv != col {
                for c in 0..m {
                    lu.swap(col * m + c, piv * m + c);
                }
                perm.swap(col, piv);
            }
            let d = lu[col * m + col];
            for r in col + 1..m {
                let f = lu[r * m + col] / d;
                lu[r * m + col] = f;
                for c in col + 1..m {
                    lu[r * m + c] -= f * lu[col * m + c];
                }
            }
        }
        Some(Self { m, lu, perm })
    }

    pub(crate) fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            x[i] = b[self.perm[i]];
        }
        for i in 0..m {
            for j in 0..i {
                x[i] -= self.lu[i * m + j] * x[j];
            }
        }
        for i in (0..m).rev() {
            for j in i + 1..m {
                x[i] -= self.lu[i * m + j] * x[j];
            }
            x[i] /= self.lu[i * m + i];
        }
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.m];
        self.solve_into(b, &mut x);
        x
    }
}

fn block_mul_sub(out: &mut [f64], a: &[f64], b: &[f64], m: usize) {
    // out -= a * b
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            for j in 0..m {
                out[i * m + j] -= aik * b[k * m + j];
            }
        }
    }
}

fn block_vec_sub(out: &mut [f64], a: &[f64], x: &[f64], m: usize) {
    // out -= a * x
    for i in 0..m {
        let mut acc = 0.0;
        for k in 0..m {
            acc += a[i * m + k] * x[k];
        }
        out[i] -= acc;
    }
}

/// Solves a block-tridiagonal system with dense m×m blocks in place.
///
/// `diag` has `n` blocks, `sup`/`sub` have `n − 1`; `rhs` is one length-m
/// slot per block row. Returns `None` on a singular pivot block.
pub(crate) fn block_thomas(
    diag: &mut [Vec<f64>],
    sup: &[Vec<f64>],
    sub: &[Vec<f64>],
    rhs: &mut [Vec<f64>],
    m: usize,
) -> Option<Vec<Vec<f64>>> {
    let n = diag.len();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); n]; // D_p^{-1} * sup_p
    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); n]; // D_p^{-1} * rhs_p

    for p in 0..n {
        if p > 0 {
            block_mul_sub(&mut diag[p], &sub[p - 1], &ys[p - 1], m);
            let z_prev = zs[p - 1].clone();
            block_vec_sub(&mut rhs[p], &sub[p - 1], &z_prev, m);
        }
        let lu = LuSmall::factor(&diag[p], m)?;
        zs[p] = lu.solve(&rhs[p]);
        if p + 1 < n {
            let mut y = vec![0.0; m * m];
            let mut col_in = vec![0.0; m];
            let mut col_out = vec![0.0; m];
            for c in 0..m {
                for r in 0..m {
                    col_in[r] = sup[p][r * m + c];
                }
                lu.solve_into(&col_in, &mut col_out);
                for r in 0..m {
                    y[r * m + c] = col_out[r];
                }
            }
            ys[p] = y;
        }
    }

    let mut x = vec![vec![0.0; m]; n];
    x[n - 1] = zs[n - 1].clone();
    for p in (0..n - 1).rev() {
        let mut xp = zs[p].clone();
        let xn = x[p + 1].clone();
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += ys[p][i * m + k] * xn[k];
            }
            xp[i] -= acc;
        }
        x[p] = xp;
    }
    Some(x)
}
