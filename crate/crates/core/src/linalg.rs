//! Dense factorizations used across the crate.

use faer::linalg::solvers::{Llt, PartialPivLu, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Jitter ladder for SPD factorizations, as multiples of `trace / n`.
pub const JITTER_START: f64 = 1e-12;
pub const JITTER_MAX: f64 = 1e-6;

/// Cholesky factor of `A + jitter I`.
pub struct SpdFactor {
    llt: Llt<f64>,
    pub jitter: f64,
}

impl SpdFactor {
    /// Factorizes a symmetric matrix, escalating a diagonal jitter from
    /// `1e-12 * trace / n` by factors of ten up to `1e-6 * trace / n`.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidInput("SPD factorization needs a non-empty square matrix".into()));
        }
        if !all_finite(a) {
            return Err(Error::Domain("non-finite entry in matrix to factorize".into()));
        }
        if let Ok(llt) = a.llt(Side::Lower) {
            return Ok(SpdFactor { llt, jitter: 0.0 });
        }
        let scale = trace(a).abs() / n as f64;
        let mut rel = JITTER_START;
        let mut shifted = a.to_owned();
        let mut applied = 0.0;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * scale;
            for i in 0..n {
                shifted[(i, i)] += jitter - applied;
            }
            applied = jitter;
            if let Ok(llt) = shifted.llt(Side::Lower) {
                log::debug!("cholesky succeeded with jitter {jitter:e}");
                return Ok(SpdFactor { llt, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::IllConditioned { condition: condition_estimate(a), jitter: applied })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Lower-triangular factor `R` with `R R^T = A + jitter I`.
    pub fn lower(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = col_from_slice(b);
        let x = self.llt.solve(rhs.as_ref());
        x.col(0).iter().copied().collect()
    }

    /// `R^{-1} B`.
    pub fn half_solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = b.to_owned();
        self.llt.L().solve_lower_triangular_in_place(x.as_mut());
        x
    }

    /// `log det(A + jitter I)`.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: MatRef<'_, f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let f = SpdFactor::new(a)?;
    Ok((f.solve_vec(b), f.jitter))
}

/// LU with partial pivoting for general square systems.
pub struct LuFactor {
    lu: PartialPivLu<f64>,
}

impl LuFactor {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidInput("LU needs a non-empty square matrix".into()));
        }
        if !all_finite(a) {
            return Err(Error::Domain("non-finite entry in matrix to factorize".into()));
        }
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let umax = (0..n).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
        let umin = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if umax == 0.0 || umin <= umax * f64::EPSILON * n as f64 {
            return Err(Error::Singular(format!("LU pivot ratio {:.3e}", umin / umax)));
        }
        Ok(LuFactor { lu })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = col_from_slice(b);
        let x = self.lu.solve(rhs.as_ref());
        x.col(0).iter().copied().collect()
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in non-increasing order.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if !all_finite(a) {
        return Err(Error::Domain("non-finite entry in matrix to diagonalize".into()));
    }
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Singular(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((vals, vecs))
}

/// Largest relative asymmetry `max |A_ij - A_ji| / max |A_ij|`.
pub fn asymmetry(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut amax = 0.0f64;
    let mut dmax = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            amax = amax.max(a[(i, j)].abs());
            if i < j {
                dmax = dmax.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
    }
    if amax == 0.0 {
        0.0
    } else {
        dmax / amax
    }
}

/// Replaces `A` by `(A + A^T) / 2`.
pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn trace(a: MatRef<'_, f64>) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Ratio of extreme eigenvalue magnitudes, or infinity if it cannot be computed.
pub fn condition_estimate(a: MatRef<'_, f64>) -> f64 {
    if a.nrows() > 4096 {
        return f64::INFINITY;
    }
    match a.self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => {
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let min = v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            if min == 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        }
        Err(_) => f64::INFINITY,
    }
}

pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let xm = col_from_slice(x);
    let y = a * xm.as_ref();
    y.col(0).iter().copied().collect()
}

pub fn col_from_slice(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_recovers_known_solution() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let x = [1.0, -2.0, 0.5];
        let b = matvec(a.as_ref(), &x);
        let (sol, jitter) = spd_solve(a.as_ref(), &b).unwrap();
        assert_eq!(jitter, 0.0);
        for (s, e) in sol.iter().zip(x) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn semidefinite_matrix_gets_jitter() {
        let v = [1.0, 2.0, 3.0];
        let a = Mat::from_fn(3, 3, |i, j| v[i] * v[j]);
        let f = SpdFactor::new(a.as_ref()).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= JITTER_MAX * trace(a.as_ref()) / 3.0 * 1.0001);
    }

    #[test]
    fn indefinite_matrix_is_ill_conditioned() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { if i == 0 { 1.0 } else { -1.0 } } else { 0.0 });
        assert!(matches!(SpdFactor::new(a.as_ref()), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let (vals, vecs) = symmetric_eigen(a.as_ref()).unwrap();
        assert_eq!(vals.len(), 3);
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[2] - 1.0).abs() < 1e-14);
        assert!((vecs[(2, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lu_detects_singular() {
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        assert!(matches!(LuFactor::new(a.as_ref()), Err(Error::Singular(_))));
        let a = Mat::from_fn(2, 2, |i, j| (i * 2 + j + 1) as f64);
        let x = LuFactor::new(a.as_ref()).unwrap().solve_vec(&[5.0, 11.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }
}
