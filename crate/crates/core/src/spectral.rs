//! Boundary-corrected kernel, Nystrom eigendecomposition of `L K^ L^dagger`,
//! the discrepancy filter, `Q_n`, and cumulative spectral functions.

use faer::Mat;

use crate::error::{Error, Result};
use crate::gpr::ProblemData;
use crate::kernels::{DerivativeMethod, KernelSpec};
use crate::linalg::{self, LuFactor, SpdFactor};
use crate::operators::{kernel_block, kernel_block_symmetric, DomainGrid, LinearDiffOp};
use crate::points::PointSet;

/// Eigenvalues below this fraction of the leading one are treated as zero.
pub const TRUNCATION: f64 = 1e-12;
/// Tolerated negative eigenvalue, relative to the leading one.
pub const NEGATIVE_TOL: f64 = 1e-10;
/// Tolerated relative asymmetry of an assembled operator matrix.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// `C = K_bb + diag(1 / (eta_d w_b))` factorized, for the Woodbury form
/// `K^ = K - K_xb C^{-1} K_by` of the boundary-corrected kernel.
struct BoundaryCorrection {
    bpts: PointSet,
    factor: SpdFactor,
}

impl BoundaryCorrection {
    fn new(spec: &KernelSpec, grid: &DomainGrid, eta_boundary: f64) -> Result<Option<Self>> {
        if !(eta_boundary.is_finite() && eta_boundary >= 0.0) {
            return Err(Error::InvalidInput("boundary coupling must be non-negative and finite".into()));
        }
        if eta_boundary == 0.0 {
            return Ok(None);
        }
        let bpts = grid.boundary_points();
        if bpts.is_empty() {
            return Err(Error::InvalidInput("boundary coupling given but the grid has no boundary nodes".into()));
        }
        let w = grid.boundary_measure_weights();
        let mut c = spec.gram(&bpts, &bpts)?;
        for (b, wb) in w.iter().enumerate() {
            c[(b, b)] += 1.0 / (eta_boundary * wb);
        }
        let factor = SpdFactor::new(c.as_ref())?;
        Ok(Some(BoundaryCorrection { bpts, factor }))
    }

    /// `R^{-1} [K L^dagger](z_b, p_j)`.
    fn half(&self, spec: &KernelSpec, pts: &PointSet, op: Option<&LinearDiffOp>, method: DerivativeMethod) -> Result<Mat<f64>> {
        let kb = kernel_block(spec, &self.bpts, None, pts, op, method)?;
        Ok(self.factor.half_solve(kb.as_ref()))
    }
}

#[allow(clippy::too_many_arguments)]
fn corrected_block(
    spec: &KernelSpec,
    grid: &DomainGrid,
    eta_boundary: f64,
    rows: &PointSet,
    left: Option<&LinearDiffOp>,
    cols: &PointSet,
    right: Option<&LinearDiffOp>,
    method: DerivativeMethod,
) -> Result<Mat<f64>> {
    let mut base = kernel_block(spec, rows, left, cols, right, method)?;
    if let Some(bc) = BoundaryCorrection::new(spec, grid, eta_boundary)? {
        let zl = bc.half(spec, rows, left, method)?;
        let zr = bc.half(spec, cols, right, method)?;
        base -= zl.transpose() * &zr;
    }
    Ok(base)
}

fn corrected_symmetric(
    spec: &KernelSpec,
    grid: &DomainGrid,
    eta_boundary: f64,
    op: Option<&LinearDiffOp>,
    method: DerivativeMethod,
) -> Result<Mat<f64>> {
    let pts = grid.points();
    let mut base = kernel_block_symmetric(spec, pts, op, method)?;
    if let Some(bc) = BoundaryCorrection::new(spec, grid, eta_boundary)? {
        let z = bc.half(spec, pts, op, method)?;
        base -= z.transpose() * &z;
        linalg::symmetrize(&mut base);
    }
    Ok(base)
}

/// `K^(x_i, x_j)` on the bulk grid.
pub fn compute_khat(spec: &KernelSpec, grid: &DomainGrid, eta_boundary: f64) -> Result<Mat<f64>> {
    corrected_symmetric(spec, grid, eta_boundary, None, DerivativeMethod::Auto)
}

/// `[L K^ L^dagger](x_i, x_j)` on the bulk grid.
pub fn compute_lkhatl(
    op: &LinearDiffOp,
    spec: &KernelSpec,
    grid: &DomainGrid,
    eta_boundary: f64,
    method: DerivativeMethod,
) -> Result<Mat<f64>> {
    corrected_symmetric(spec, grid, eta_boundary, Some(op), method)
}

/// Eigenpairs of an integral operator under the bulk measure.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Non-increasing eigenvalues.
    pub eigvals: Vec<f64>,
    /// Eigenfunctions on the grid nodes, one per column, orthonormal under
    /// the bulk measure.
    pub eigfuns: Mat<f64>,
    /// Bulk measure weights.
    pub weights: Vec<f64>,
    /// Kernel matrix that was diagonalized.
    pub operator: Mat<f64>,
}

impl SpectralDecomposition {
    /// Nystrom eigendecomposition of the kernel matrix `a` under weights `m`:
    /// `M^{1/2} A M^{1/2} v = lambda v`, `phi = M^{-1/2} v`.
    pub fn from_matrix(a: Mat<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || weights.len() != n || n == 0 {
            return Err(Error::InvalidInput("kernel matrix and weights differ in size".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput("measure weights must be positive".into()));
        }
        let asym = linalg::asymmetry(a.as_ref());
        if asym > ASYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let s = Mat::from_fn(n, n, |i, j| {
            let v = sq[i] * a[(i, j)] * sq[j];
            if i < j {
                v
            } else {
                sq[j] * a[(j, i)] * sq[i]
            }
        });
        let (eigvals, vecs) = linalg::symmetric_eigen(s.as_ref())?;
        let lead = eigvals[0];
        let min = eigvals[n - 1];
        if lead <= 0.0 || min < -NEGATIVE_TOL * lead {
            return Err(Error::NegativeEigenvalue { value: min, leading: lead });
        }
        let eigfuns = Mat::from_fn(n, n, |i, k| vecs[(i, k)] / sq[i]);
        Ok(SpectralDecomposition { eigvals, eigfuns, weights, operator: a })
    }

    pub fn len(&self) -> usize {
        self.eigvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigvals.is_empty()
    }

    /// Number of modes with `lambda >= 1e-12 lambda_1`.
    pub fn retained(&self) -> usize {
        let cut = TRUNCATION * self.eigvals[0];
        self.eigvals.iter().take_while(|&&l| l >= cut).count()
    }

    /// Eigenvalues with the truncated tail set to zero.
    pub fn effective_eigvals(&self) -> Vec<f64> {
        let r = self.retained();
        self.eigvals.iter().enumerate().map(|(k, &l)| if k < r { l } else { 0.0 }).collect()
    }

    pub fn eigfun(&self, k: usize) -> Vec<f64> {
        self.eigfuns.col(k).iter().copied().collect()
    }

    /// Bulk-measure inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    /// `<phi_k, f>` for every mode.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::InvalidInput("grid function has the wrong length".into()));
        }
        let mf: Vec<f64> = f.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        Ok((0..self.len()).map(|k| linalg::dot(self.eigfuns.col(k).try_as_col_major().expect("contiguous").as_slice(), &mf)).collect())
    }

    /// `sum_k c_k phi_k`.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (k, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += c * self.eigfuns[(i, k)];
            }
        }
        out
    }

    /// Quadrature trace `int [Q](x, x) dmu(x)`.
    pub fn quadrature_trace(&self) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * self.operator[(i, i)]).sum()
    }

    /// Expansion of a source in the eigenbasis.
    pub fn expand_source(&self, source: &[f64]) -> Result<SourceExpansion> {
        let coeffs = self.project(source)?;
        let r = self.retained();
        let kept: Vec<f64> = coeffs.iter().enumerate().map(|(k, c)| if k < r { *c } else { 0.0 }).collect();
        let approx = self.expand(&kept);
        let diff: Vec<f64> = source.iter().zip(&approx).map(|(a, b)| a - b).collect();
        Ok(SourceExpansion {
            eigvals: self.effective_eigvals(),
            coeffs,
            retained: r,
            outside_span_norm: self.inner(&diff, &diff).sqrt(),
            norm: self.inner(source, source).sqrt(),
        })
    }
}

/// Coefficients `c_k` of a source in a [`SpectralDecomposition`].
#[derive(Clone, Debug, PartialEq)]
pub struct SourceExpansion {
    /// Eigenvalues with the truncated tail set to zero.
    pub eigvals: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub retained: usize,
    /// Bulk-measure norm of the part of the source outside the retained modes.
    pub outside_span_norm: f64,
    pub norm: f64,
}

/// Eigendecomposition of `L K^ L^dagger` on the grid.
pub fn eig_lkhatl(
    op: &LinearDiffOp,
    spec: &KernelSpec,
    grid: &DomainGrid,
    eta_boundary: f64,
) -> Result<SpectralDecomposition> {
    warn_resolution(spec, grid);
    let a = compute_lkhatl(op, spec, grid, eta_boundary, DerivativeMethod::Auto)?;
    SpectralDecomposition::from_matrix(a, grid.measure_weights())
}

/// Eigendecomposition of the kernel itself on the grid.
pub fn eig_kernel(spec: &KernelSpec, grid: &DomainGrid) -> Result<SpectralDecomposition> {
    warn_resolution(spec, grid);
    let a = compute_khat(spec, grid, 0.0)?;
    SpectralDecomposition::from_matrix(a, grid.measure_weights())
}

fn warn_resolution(spec: &KernelSpec, grid: &DomainGrid) {
    let l_eff = 1.0 / spec.sigma_w2.sqrt();
    if grid.axes().iter().any(|a| a.spacing() > 0.25 * l_eff) {
        log::warn!("grid spacing exceeds a quarter of the kernel length scale");
    }
}

/// `phi^(x) = phi(x) - eta_d int_d [L K^](x, z) g(z) dmu_d(z)`.
pub fn augmented_source(problem: &ProblemData, grid: &DomainGrid, eta_boundary: f64) -> Result<Vec<f64>> {
    let pts = grid.points();
    let mut phi = problem.source_on(pts)?;
    if eta_boundary == 0.0 {
        return Ok(phi);
    }
    let bpts = grid.boundary_points();
    let g = problem.boundary_on(&bpts)?;
    let w = grid.boundary_measure_weights();
    let lk = corrected_block(
        &problem.kernel,
        grid,
        eta_boundary,
        pts,
        Some(&problem.operator),
        &bpts,
        None,
        problem.method,
    )?;
    for (i, p) in phi.iter_mut().enumerate() {
        let s: f64 = (0..bpts.len()).map(|b| lk[(i, b)] * w[b] * g[b]).sum();
        *p -= eta_boundary * s;
    }
    Ok(phi)
}

/// `L f - phi = -sum_k c_k / (1 + lambda_k eta) phi_k`.
pub fn discrepancy_filter(decomp: &SpectralDecomposition, phi_hat: &[f64], eta_bulk: f64) -> Result<Vec<f64>> {
    check_eta(eta_bulk)?;
    let exp = decomp.expand_source(phi_hat)?;
    let filtered: Vec<f64> =
        exp.coeffs.iter().zip(&exp.eigvals).map(|(c, l)| -c / (1.0 + l * eta_bulk)).collect();
    Ok(decomp.expand(&filtered))
}

/// Direct form `-(I + eta A M)^{-1} phi^` of the discrepancy.
pub fn discrepancy_direct(decomp: &SpectralDecomposition, phi_hat: &[f64], eta_bulk: f64) -> Result<Vec<f64>> {
    check_eta(eta_bulk)?;
    let n = decomp.len();
    if phi_hat.len() != n {
        return Err(Error::InvalidInput("grid function has the wrong length".into()));
    }
    let a = &decomp.operator;
    let m = &decomp.weights;
    let sys = Mat::from_fn(n, n, |i, j| eta_bulk * a[(i, j)] * m[j] + if i == j { 1.0 } else { 0.0 });
    let x = LuFactor::new(sys.as_ref())?.solve_vec(phi_hat);
    Ok(x.into_iter().map(|v| -v).collect())
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput("bulk coupling must be non-negative and finite".into()))
    }
}

/// `Q_n = sum |c_k|^2 / (1 + lambda_k eta) / sum |c_k|^2`.
pub fn figure_of_merit_qn(expansion: &SourceExpansion, eta_bulk: f64) -> Result<f64> {
    check_eta(eta_bulk)?;
    let total: f64 = expansion.coeffs.iter().map(|c| c * c).sum();
    if total == 0.0 {
        return Err(Error::InvalidInput("figure of merit is undefined for a zero source".into()));
    }
    let filtered: f64 =
        expansion.coeffs.iter().zip(&expansion.eigvals).map(|(c, l)| c * c / (1.0 + l * eta_bulk)).sum();
    Ok(filtered / total)
}

/// `A_k = sum_{j <= k} <phi_j, f>^2 / <f, f>`.
pub fn cumulative_spectral(decomp: &SpectralDecomposition, f: &[f64], k: usize) -> Result<f64> {
    let curve = cumulative_curve(decomp, f)?;
    Ok(curve[k.min(curve.len() - 1)])
}

/// `A_0, A_1, ..., A_n`.
pub fn cumulative_curve(decomp: &SpectralDecomposition, f: &[f64]) -> Result<Vec<f64>> {
    let c = decomp.project(f)?;
    let norm = decomp.inner(f, f);
    if norm == 0.0 {
        return Err(Error::InvalidInput("cumulative spectral function of a zero function".into()));
    }
    let mut out = Vec::with_capacity(c.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for ck in c {
        acc += ck * ck;
        out.push(acc / norm);
    }
    Ok(out)
}

/// Smallest `k` with `A_k >= threshold`, if any.
pub fn crossing_index(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&a| a >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::End;

    #[test]
    fn khat_without_boundary_coupling_is_kernel() {
        let spec = KernelSpec::cosine(1.0);
        let grid = DomainGrid::interval(0.0, 4.0, 9, &[End::Lo]).unwrap();
        let kh = compute_khat(&spec, &grid, 0.0).unwrap();
        let k = spec.gram(grid.points(), grid.points()).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(kh[(i, j)], k[(i, j)]);
            }
        }
    }

    #[test]
    fn khat_single_point_formula() {
        let spec = KernelSpec::cosine(1.0);
        let grid = DomainGrid::interval(0.0, 4.0, 9, &[End::Lo]).unwrap();
        let eta = 37.0;
        let kh = compute_khat(&spec, &grid, eta).unwrap();
        let k00 = spec.eval(&[0.0], &[0.0]).unwrap();
        assert!((kh[(0, 0)] - k00 / (1.0 + eta * k00)).abs() <= 1e-12);
    }

    #[test]
    fn filter_at_zero_coupling_is_minus_source() {
        let spec = KernelSpec::squared_exponential(0.5);
        let grid = DomainGrid::interval(0.0, 2.0, 17, &[]).unwrap();
        let d = eig_kernel(&spec, &grid).unwrap();
        let src = grid.eval(|x| x[0].sin());
        let out = discrepancy_filter(&d, &src, 0.0).unwrap();
        for (o, s) in out.iter().zip(&src) {
            assert!((o + s).abs() < 1e-12);
        }
    }

    #[test]
    fn qn_single_mode() {
        let spec = KernelSpec::squared_exponential(0.5);
        let grid = DomainGrid::interval(0.0, 2.0, 17, &[]).unwrap();
        let d = eig_kernel(&spec, &grid).unwrap();
        let e = d.expand_source(&d.eigfun(0)).unwrap();
        let q = figure_of_merit_qn(&e, 3.0).unwrap();
        assert!((q - 1.0 / (1.0 + 3.0 * d.eigvals[0])).abs() < 1e-10);
        assert_eq!(figure_of_merit_qn(&e, 0.0).unwrap(), 1.0);
        let zero = d.expand_source(&[0.0; 17]).unwrap();
        assert!(figure_of_merit_qn(&zero, 1.0).is_err());
    }

    #[test]
    fn cumulative_of_leading_eigenfunction() {
        let spec = KernelSpec::squared_exponential(0.5);
        let grid = DomainGrid::interval(0.0, 2.0, 17, &[]).unwrap();
        let d = eig_kernel(&spec, &grid).unwrap();
        let f = d.eigfun(0);
        assert!((cumulative_spectral(&d, &f, 1).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(cumulative_spectral(&d, &f, 0).unwrap(), 0.0);
        assert!(cumulative_curve(&d, &[0.0; 17]).is_err());
    }
}
