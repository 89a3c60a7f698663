//! The neurally-informed equation: analytic half-line toy solution, grid
//! solver for linear problems, and the first-order effective action.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::ProblemData;
use crate::kernels::{fill_matrix, KernelSpec};
use crate::linalg::{self, LuFactor, SpdFactor};
use crate::operators::{diff_matrix, DomainGrid, SparseMatrix, DEFAULT_FD_ACCURACY};

fn default_n_k() -> usize {
    20001
}

/// Half-line problem `f' = 0` on `x > 0`, `f(0) = g0`, cosine kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub l: f64,
    pub g0: f64,
    /// Bulk coupling entering the Green's function.
    pub eta_bulk: f64,
    /// Boundary coupling entering `Delta`.
    pub eta_boundary: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    /// Upper wavenumber; defaults to `max(12 / l, 20 kappa)`.
    #[serde(default)]
    pub k_max: Option<f64>,
    #[serde(default = "default_n_k")]
    pub n_k: usize,
}

fn default_x_max() -> f64 {
    512.0
}

/// Cap on trapezoid refinements for the Green's function integral.
const MAX_REFINEMENTS: usize = 8;
const QUAD_TOL: f64 = 1e-8;

impl ToyConfig {
    pub fn new(l: f64, g0: f64, eta_bulk: f64, eta_boundary: f64) -> Self {
        ToyConfig { l, g0, eta_bulk, eta_boundary, x_max: default_x_max(), k_max: None, n_k: default_n_k() }
    }

    /// Couplings of a toy problem with `n_bulk` points uniform on
    /// `[0, x_max]` and `n_boundary` points at the origin.
    ///
    /// Sums over uniform points become `n / x_max` times Lebesgue integrals,
    /// and the cosine kernel restricted to the half-line has spectrum
    /// `e^{-(kl)^2/2} / 2` in the cosine basis, so the couplings that enter
    /// the Green's function are `n / (2 x_max sigma2)` and
    /// `n_boundary / (2 sigma2_boundary)`.
    pub fn from_data_densities(
        l: f64,
        g0: f64,
        n_bulk: usize,
        sigma2_bulk: f64,
        n_boundary: usize,
        sigma2_boundary: f64,
        x_max: f64,
    ) -> Self {
        ToyConfig {
            x_max,
            ..ToyConfig::new(
                l,
                g0,
                n_bulk as f64 / (2.0 * x_max * sigma2_bulk),
                n_boundary as f64 / (2.0 * sigma2_boundary),
            )
        }
    }

    /// Couplings `(eta_bulk, eta_boundary)` for [`nie_solve_grid`] on a
    /// grid of length `length` with a single boundary point of weight 1.
    pub fn grid_couplings(&self, length: f64) -> (f64, f64) {
        (2.0 * self.eta_bulk * length, 2.0 * self.eta_boundary)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.l) && ok(self.eta_bulk) && ok(self.x_max)) || !self.g0.is_finite() {
            return Err(Error::InvalidInput(format!("toy parameters must be positive and finite: {self:?}")));
        }
        if !(self.eta_boundary.is_finite() && self.eta_boundary >= 0.0) {
            return Err(Error::InvalidInput("boundary coupling must be non-negative".into()));
        }
        if self.n_k < 3 {
            return Err(Error::InvalidInput("n_k must be at least 3".into()));
        }
        if self.k_max() * self.l < 12.0 {
            return Err(Error::InvalidInput("k_max * l must be at least 12".into()));
        }
        Ok(())
    }

    /// `1 / sqrt(l^2 / 2 + eta_bulk)`.
    pub fn kappa(&self) -> f64 {
        1.0 / (0.5 * self.l * self.l + self.eta_bulk).sqrt()
    }

    pub fn k_max(&self) -> f64 {
        self.k_max.unwrap_or_else(|| (12.0 / self.l).max(20.0 * self.kappa()))
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::cosine(self.l)
    }
}

/// `G(x, x') = (1/pi) int cos(kx) cos(kx') / (e^{(kl)^2/2} + eta k^2) dk`.
pub fn greens_function_toy(cfg: &ToyConfig, x: f64, xp: f64) -> Result<f64> {
    cfg.validate()?;
    if !(x.is_finite() && xp.is_finite()) || x < 0.0 || xp < 0.0 {
        return Err(Error::Domain(format!("Green's function needs x, x' >= 0, got {x}, {xp}")));
    }
    let l2 = cfg.l * cfg.l;
    let eta = cfg.eta_bulk;
    let weight = |k: f64| {
        let e = (-0.5 * l2 * k * k).exp();
        e / (1.0 + eta * k * k * e)
    };
    let f = |k: f64| (k * x).cos() * (k * xp).cos() * weight(k);
    // even integrand: (2/pi) int_0^kmax
    let kmax = cfg.k_max();
    let mut intervals = (cfg.n_k - 1) / 2;
    let mut h = kmax / intervals as f64;
    let mut sum = 0.5 * (f(0.0) + f(kmax)) + (1..intervals).map(|i| f(i as f64 * h)).sum::<f64>();
    let mut abs_sum = 0.5 * (weight(0.0) + weight(kmax)) + (1..intervals).map(|i| weight(i as f64 * h)).sum::<f64>();
    let mut value = sum * h;
    let mut rel = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        let mids: f64 = (0..intervals).map(|i| f((i as f64 + 0.5) * h)).sum();
        let mids_abs: f64 = (0..intervals).map(|i| weight((i as f64 + 0.5) * h)).sum();
        sum += mids;
        abs_sum += mids_abs;
        intervals *= 2;
        h *= 0.5;
        let next = sum * h;
        rel = (next - value).abs() / (abs_sum * h);
        value = next;
        if rel <= QUAD_TOL {
            return Ok(2.0 / PI * value);
        }
    }
    Err(Error::QuadratureNonConvergence { rel_change: rel, nodes: intervals + 1 })
}

/// `(kappa/2) (e^{-kappa |x - x'|} + e^{-kappa |x + x'|})`.
pub fn greens_single_pole(cfg: &ToyConfig, x: f64, xp: f64) -> f64 {
    let kappa = cfg.kappa();
    if kappa * cfg.l > 0.3 {
        log::warn!("single-pole approximation used outside its regime (kappa l = {:.3})", kappa * cfg.l);
    }
    0.5 * kappa * ((-kappa * (x - xp).abs()).exp() + (-kappa * (x + xp).abs()).exp())
}

/// Analytic toy prediction `f(x) = Delta G(x, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyPrediction {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub delta: f64,
    pub g00: f64,
    pub kappa: f64,
}

/// `Delta = eta_b g0 / (1 + G(0,0) eta_b)` and `f(x) = Delta G(x, 0)`.
pub fn toy_predict(cfg: &ToyConfig, x_star: &[f64]) -> Result<ToyPrediction> {
    cfg.validate()?;
    let g00 = greens_function_toy(cfg, 0.0, 0.0)?;
    let delta = cfg.eta_boundary * cfg.g0 / (1.0 + g00 * cfg.eta_boundary);
    let f = x_star
        .par_iter()
        .map(|&x| Ok(delta * greens_function_toy(cfg, x, 0.0)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ToyPrediction { x: x_star.to_vec(), f, delta, g00, kappa: cfg.kappa() })
}

/// Grid solution of the neurally-informed equation.
#[derive(Clone, Debug)]
pub struct NieSolution {
    pub grid: DomainGrid,
    pub f0: Vec<f64>,
    pub delta: Option<f64>,
    /// Max-norm of the discrete equation at the solution.
    pub residual_norm: f64,
    /// Scale `eta_b max|phi| + eta_d max|g| + max|f0|` of the equation.
    pub scale: f64,
}

impl NieSolution {
    /// `L f0 - phi` on the grid, with `L` by finite differences.
    pub fn pde_residual(&self, problem: &ProblemData) -> Result<Vec<f64>> {
        let d = diff_matrix(&problem.operator, &self.grid, DEFAULT_FD_ACCURACY)?;
        let phi = problem.source_on(self.grid.points())?;
        Ok(d.matvec(&self.f0).iter().zip(&phi).map(|(a, b)| a - b).collect())
    }
}

/// Solves
/// `f(x) + eta_b int (L f - phi)(y) [L K](y, x) dmu(y) + eta_d int_d (f - g)(z) K(z, x) dmu_d(z) = 0`
/// on the grid nodes, with `L` realized as a finite-difference matrix `D` and
/// `[L K]` as `D K`. This is the stationarity condition of the discrete
/// effective action.
pub fn nie_solve_grid(problem: &ProblemData, grid: &DomainGrid, eta_bulk: f64, eta_boundary: f64) -> Result<NieSolution> {
    nie_solve_grid_with(problem, grid, eta_bulk, eta_boundary, DEFAULT_FD_ACCURACY)
}

pub fn nie_solve_grid_with(
    problem: &ProblemData,
    grid: &DomainGrid,
    eta_bulk: f64,
    eta_boundary: f64,
    accuracy: usize,
) -> Result<NieSolution> {
    let sys = NieSystem::new(problem, grid, accuracy)?;
    if !(eta_bulk.is_finite() && eta_bulk >= 0.0 && eta_boundary.is_finite() && eta_boundary >= 0.0) {
        return Err(Error::InvalidInput("couplings must be non-negative and finite".into()));
    }
    if eta_boundary > 0.0 && grid.boundary_index().is_empty() {
        return Err(Error::InvalidInput("boundary coupling given but the grid has no boundary nodes".into()));
    }
    let (a, b) = sys.linear_system(eta_bulk, eta_boundary);
    let lu = LuFactor::new(a.as_ref())?;
    let f0 = lu.solve_vec(&b);
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite grid solution".into()));
    }
    let af = linalg::matvec(a.as_ref(), &f0);
    let residual_norm = af.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = eta_bulk * linalg::max_abs(&sys.phi) + eta_boundary * linalg::max_abs(&sys.g) + linalg::max_abs(&f0);
    Ok(NieSolution { grid: grid.clone(), f0, delta: None, residual_norm, scale })
}

struct NieSystem {
    k: Mat<f64>,
    d: SparseMatrix,
    dk: Mat<f64>,
    m: Vec<f64>,
    mb: Vec<f64>,
    bidx: Vec<usize>,
    phi: Vec<f64>,
    g: Vec<f64>,
}

impl NieSystem {
    fn new(problem: &ProblemData, grid: &DomainGrid, accuracy: usize) -> Result<Self> {
        if problem.dim() != grid.dim() {
            return Err(Error::InvalidInput("problem and grid differ in dimension".into()));
        }
        if !problem.operator.is_constant_coefficient() {
            log::debug!("grid solver used with a variable-coefficient operator");
        }
        let pts = grid.points();
        let k = problem.kernel.gram(pts, pts)?;
        let d = diff_matrix(&problem.operator, grid, accuracy)?;
        let dk = d.mul_dense(&k);
        let phi = problem.source_on(pts)?;
        let bpts = grid.boundary_points();
        let g = if bpts.is_empty() { Vec::new() } else { problem.boundary_on(&bpts)? };
        Ok(NieSystem {
            k,
            d,
            dk,
            m: grid.measure_weights(),
            mb: if bpts.is_empty() { Vec::new() } else { grid.boundary_measure_weights() },
            bidx: grid.boundary_index().to_vec(),
            phi,
            g,
        })
    }

    fn linear_system(&self, eta: f64, eta_b: f64) -> (Mat<f64>, Vec<f64>) {
        let n = self.k.nrows();
        // E = diag(m) D, F = E^T (D K), bulk block (i, j) = F(j, i)
        let et = self.d.scale_rows(&self.m).transpose();
        let f = et.mul_dense(&self.dk);
        let mut a = fill_matrix(n, n, |i, j| eta * f[(j, i)] + if i == j { 1.0 } else { 0.0 });
        for (b, &j) in self.bidx.iter().enumerate() {
            let w = eta_b * self.mb[b];
            for i in 0..n {
                a[(i, j)] += w * self.k[(i, j)];
            }
        }
        let mut rhs = vec![0.0; n];
        let mphi: Vec<f64> = self.m.iter().zip(&self.phi).map(|(a, b)| a * b).collect();
        for (i, r) in rhs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (l, v) in mphi.iter().enumerate() {
                s += self.dk[(l, i)] * v;
            }
            *r = eta * s;
            for (b, &j) in self.bidx.iter().enumerate() {
                *r += eta_b * self.mb[b] * self.k[(j, i)] * self.g[b];
            }
        }
        (a, rhs)
    }
}

/// First-order effective action on a grid, with the kernel factorized once.
pub struct EffectiveAction {
    d: SparseMatrix,
    factor: SpdFactor,
    m: Vec<f64>,
    mb: Vec<f64>,
    bidx: Vec<usize>,
    phi: Vec<f64>,
    g: Vec<f64>,
    eta_bulk: f64,
    eta_boundary: f64,
}

impl EffectiveAction {
    pub fn new(problem: &ProblemData, grid: &DomainGrid, eta_bulk: f64, eta_boundary: f64) -> Result<Self> {
        let sys = NieSystem::new(problem, grid, DEFAULT_FD_ACCURACY)?;
        let factor = SpdFactor::new(sys.k.as_ref())?;
        Ok(EffectiveAction {
            d: sys.d,
            factor,
            m: sys.m,
            mb: sys.mb,
            bidx: sys.bidx,
            phi: sys.phi,
            g: sys.g,
            eta_bulk,
            eta_boundary,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// `(eta_b/2) int (Lf - phi)^2 + (eta_d/2) int_d (f - g)^2 + (1/2) f K^{-1} f`.
    pub fn value(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.m.len() {
            return Err(Error::InvalidInput("grid function has the wrong length".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite grid function".into()));
        }
        let lf = self.d.matvec(f);
        let bulk: f64 = lf.iter().zip(&self.phi).zip(&self.m).map(|((a, b), w)| w * (a - b) * (a - b)).sum();
        let bdry: f64 = self
            .bidx
            .iter()
            .zip(&self.g)
            .zip(&self.mb)
            .map(|((&i, g), w)| w * (f[i] - g) * (f[i] - g))
            .sum();
        let half = self.factor.half_solve(linalg::col_from_slice(f).as_ref());
        let prior: f64 = half.col(0).iter().map(|v| v * v).sum();
        Ok(0.5 * self.eta_bulk * bulk + 0.5 * self.eta_boundary * bdry + 0.5 * prior)
    }
}

/// Effective action with `eta = eta_bar / sigma2` for bulk and boundary.
pub fn effective_action(
    problem: &ProblemData,
    grid: &DomainGrid,
    eta_bar_bulk: f64,
    eta_bar_boundary: f64,
    sigma2_bulk: f64,
    sigma2_boundary: f64,
    f_vals: &[f64],
) -> Result<f64> {
    EffectiveAction::new(problem, grid, eta_bar_bulk / sigma2_bulk, eta_bar_boundary / sigma2_boundary)?
        .value(f_vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{End, LinearDiffOp};

    #[test]
    fn single_pole_at_origin_is_kappa() {
        let cfg = ToyConfig::new(1.0, 2.5, 1024.0, 8192.0);
        assert_eq!(greens_single_pole(&cfg, 0.0, 0.0), cfg.kappa());
        assert!((cfg.kappa() - 0.031_242).abs() < 5e-7);
        let bigger = ToyConfig::new(1.0, 2.5, 2048.0, 8192.0);
        assert!(bigger.kappa() < cfg.kappa());
    }

    #[test]
    fn quadrature_green_is_symmetric() {
        let cfg = ToyConfig::new(1.0, 2.5, 1024.0, 8192.0);
        for &(x, y) in &[(0.3, 2.0), (5.0, 1.1), (0.0, 4.0)] {
            let a = greens_function_toy(&cfg, x, y).unwrap();
            let b = greens_function_toy(&cfg, y, x).unwrap();
            assert!((a - b).abs() <= 1e-10);
        }
        assert!(greens_function_toy(&cfg, -1.0, 0.0).is_err());
    }

    #[test]
    fn zero_boundary_value_gives_zero() {
        let cfg = ToyConfig::new(1.0, 0.0, 10.0, 100.0);
        let p = toy_predict(&cfg, &[0.0, 1.0]).unwrap();
        assert_eq!(p.delta, 0.0);
        assert!(p.f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn large_boundary_coupling_pins_origin() {
        let cfg = ToyConfig::new(1.0, 2.5, 10.0, 1e12);
        let p = toy_predict(&cfg, &[0.0]).unwrap();
        assert!((p.f[0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_short_wavenumber_range() {
        let mut cfg = ToyConfig::new(1.0, 2.5, 10.0, 10.0);
        cfg.k_max = Some(5.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_couplings_give_zero_solution() {
        let problem = ProblemData::new(|_| 1.0, |_| 2.0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(1.0));
        let grid = DomainGrid::interval(0.0, 5.0, 21, &[End::Lo]).unwrap();
        let sol = nie_solve_grid(&problem, &grid, 0.0, 0.0).unwrap();
        assert!(sol.f0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_data_has_zero_action() {
        let problem = ProblemData::new(|_| 0.0, |_| 0.0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(1.0));
        let grid = DomainGrid::interval(0.0, 10.0, 11, &[End::Lo]).unwrap();
        let s = effective_action(&problem, &grid, 10.0, 1.0, 0.1, 0.1, &[0.0; 11]).unwrap();
        assert_eq!(s, 0.0);
    }
}
