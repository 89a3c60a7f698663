//! Exact GPR posterior mean for the PINN loss with bulk and boundary data.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DerivativeMethod, KernelSpec};
use crate::linalg::SpdFactor;
use crate::operators::{op_kernel, End, Face, LinearDiffOp};
use crate::points::PointSet;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A box `prod [lo_k, hi_k]` whose boundary is the union of selected faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub faces: Vec<Face>,
}

impl Geometry {
    pub fn interval(lo: f64, hi: f64, ends: &[End]) -> Self {
        Geometry { lo: vec![lo], hi: vec![hi], faces: ends.iter().map(|&end| Face { axis: 0, end }).collect() }
    }

    /// `[-1, 1] x [0, 1]` in `(x, t)` with boundary `{x = +-1} u {t = 0}`.
    pub fn heat_slab() -> Self {
        Geometry {
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 1.0],
            faces: vec![
                Face { axis: 0, end: End::Lo },
                Face { axis: 0, end: End::Hi },
                Face { axis: 1, end: End::Lo },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::InvalidInput("geometry bounds differ in dimension".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a.is_finite() && b.is_finite()) || b <= a) {
            return Err(Error::InvalidInput("empty geometry".into()));
        }
        if self.faces.iter().any(|f| f.axis >= self.dim()) {
            return Err(Error::InvalidInput("boundary face axis out of range".into()));
        }
        Ok(())
    }

    /// Measure of a face; points in one dimension count as 1.
    fn face_measure(&self, face: &Face) -> f64 {
        (0..self.dim()).filter(|&k| k != face.axis).map(|k| self.hi[k] - self.lo[k]).product()
    }

    pub fn boundary_measure(&self) -> f64 {
        self.faces.iter().map(|f| self.face_measure(f)).sum()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.faces.iter().any(|f| {
            let v = match f.end {
                End::Lo => self.lo[f.axis],
                End::Hi => self.hi[f.axis],
            };
            x[f.axis] == v
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| v >= a && v <= b)
    }
}

/// Bulk and boundary training points with their observation noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub bulk: PointSet,
    pub boundary: PointSet,
    pub sigma2_bulk: f64,
    pub sigma2_boundary: f64,
}

impl CollocationSet {
    pub fn new(bulk: PointSet, boundary: PointSet, sigma2_bulk: f64, sigma2_boundary: f64) -> Result<Self> {
        if bulk.is_empty() && boundary.is_empty() {
            return Err(Error::InvalidInput("collocation set needs at least one point".into()));
        }
        if bulk.dim() != boundary.dim() {
            return Err(Error::InvalidInput("bulk and boundary points differ in dimension".into()));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(sigma2_bulk) || !ok(sigma2_boundary) {
            return Err(Error::InvalidInput("noise variances must be positive and finite".into()));
        }
        if !bulk.all_finite() || !boundary.all_finite() {
            return Err(Error::Domain("non-finite collocation point".into()));
        }
        Ok(CollocationSet { bulk, boundary, sigma2_bulk, sigma2_boundary })
    }

    pub fn dim(&self) -> usize {
        self.bulk.dim()
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// `n_bulk / sigma2_bulk`.
    pub fn eta_bulk(&self) -> f64 {
        self.n_bulk() as f64 / self.sigma2_bulk
    }

    /// `n_boundary / sigma2_boundary`.
    pub fn eta_boundary(&self) -> f64 {
        self.n_boundary() as f64 / self.sigma2_boundary
    }

    pub fn permuted(&self, bulk_perm: &[usize], boundary_perm: &[usize]) -> Self {
        CollocationSet {
            bulk: self.bulk.permuted(bulk_perm),
            boundary: self.boundary.permuted(boundary_perm),
            ..self.clone()
        }
    }
}

/// I.i.d. uniform points on the bulk and on the boundary of `geometry`.
pub fn sample_collocation(
    geometry: &Geometry,
    n_bulk: usize,
    n_boundary: usize,
    sigma2_bulk: f64,
    sigma2_boundary: f64,
    seed: u64,
) -> Result<CollocationSet> {
    geometry.validate()?;
    if n_bulk + n_boundary == 0 {
        return Err(Error::InvalidInput("collocation set needs at least one point".into()));
    }
    if n_boundary > 0 && geometry.faces.is_empty() {
        return Err(Error::InvalidInput("boundary points requested on a geometry without boundary".into()));
    }
    let d = geometry.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bulk = Vec::with_capacity(n_bulk * d);
    for _ in 0..n_bulk {
        for k in 0..d {
            bulk.push(rng.gen_range(geometry.lo[k]..geometry.hi[k]));
        }
    }
    let measures: Vec<f64> = geometry.faces.iter().map(|f| geometry.face_measure(f)).collect();
    let total: f64 = measures.iter().sum();
    let mut boundary = Vec::with_capacity(n_boundary * d);
    for _ in 0..n_boundary {
        let mut u = rng.gen::<f64>() * total;
        let mut face = geometry.faces[geometry.faces.len() - 1];
        for (f, m) in geometry.faces.iter().zip(&measures) {
            if u < *m {
                face = *f;
                break;
            }
            u -= m;
        }
        for k in 0..d {
            let v = if k == face.axis {
                match face.end {
                    End::Lo => geometry.lo[k],
                    End::Hi => geometry.hi[k],
                }
            } else {
                rng.gen_range(geometry.lo[k]..geometry.hi[k])
            };
            boundary.push(v);
        }
    }
    CollocationSet::new(PointSet::new(d, bulk)?, PointSet::new(d, boundary)?, sigma2_bulk, sigma2_boundary)
}

/// Source, boundary data, operator and prior of a linear problem `L f = phi`,
/// `f = g` on the boundary.
#[derive(Clone)]
pub struct ProblemData {
    pub source: ScalarFn,
    pub boundary: ScalarFn,
    pub operator: LinearDiffOp,
    pub kernel: KernelSpec,
    pub method: DerivativeMethod,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("operator", &self.operator)
            .field("kernel", &self.kernel)
            .field("method", &self.method)
            .finish_non_exhaustive()
    }
}

impl ProblemData {
    pub fn new(
        source: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        boundary: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        operator: LinearDiffOp,
        kernel: KernelSpec,
    ) -> Self {
        ProblemData {
            source: Arc::new(source),
            boundary: Arc::new(boundary),
            operator,
            kernel,
            method: DerivativeMethod::Auto,
        }
    }

    pub fn with_method(mut self, method: DerivativeMethod) -> Self {
        self.method = method;
        self
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    /// `phi` on `pts`, rejecting non-finite values.
    pub fn source_on(&self, pts: &PointSet) -> Result<Vec<f64>> {
        eval_finite(&self.source, pts, "source")
    }

    /// `g` on `pts`, rejecting non-finite values.
    pub fn boundary_on(&self, pts: &PointSet) -> Result<Vec<f64>> {
        eval_finite(&self.boundary, pts, "boundary data")
    }
}

fn eval_finite(f: &ScalarFn, pts: &PointSet, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = pts.iter().map(|x| f(x)).collect();
    if let Some(i) = v.iter().position(|y| !y.is_finite()) {
        return Err(Error::Domain(format!("{what} is not finite at {:?}", pts.get(i))));
    }
    Ok(v)
}

/// `K_PINN`, the diagonal of the noise matrix, and the targets `y`.
#[derive(Clone, Debug)]
pub struct KPinnSystem {
    pub k: Mat<f64>,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

impl KPinnSystem {
    pub fn noise_matrix(&self) -> Mat<f64> {
        let n = self.noise.len();
        Mat::from_fn(n, n, |i, j| if i == j { self.noise[i] } else { 0.0 })
    }
}

fn check_problem(problem: &ProblemData, colloc: &CollocationSet) -> Result<()> {
    problem.kernel.validate()?;
    if problem.dim() != colloc.dim() {
        return Err(Error::InvalidInput("problem and collocation points differ in dimension".into()));
    }
    Ok(())
}

/// Assembles `[[L K L^dagger, L K], [K L^dagger, K]]` over bulk then
/// boundary points, exactly symmetric.
pub fn assemble_kpinn(problem: &ProblemData, colloc: &CollocationSet) -> Result<KPinnSystem> {
    check_problem(problem, colloc)?;
    let k = assemble_matrix(problem, colloc, 0.0, 0.0)?;
    let mut noise = vec![colloc.sigma2_bulk; colloc.n_bulk()];
    noise.extend(std::iter::repeat_n(colloc.sigma2_boundary, colloc.n_boundary()));
    let mut y = problem.source_on(&colloc.bulk)?;
    y.extend(problem.boundary_on(&colloc.boundary)?);
    Ok(KPinnSystem { k, noise, y })
}

fn assemble_matrix(problem: &ProblemData, colloc: &CollocationSet, s_bulk: f64, s_bdry: f64) -> Result<Mat<f64>> {
    let nb = colloc.n_bulk();
    let n = nb + colloc.n_boundary();
    let op = &problem.operator;
    let point = |i: usize| if i < nb { colloc.bulk.get(i) } else { colloc.boundary.get(i - nb) };
    let opt = |i: usize| if i < nb { Some(op) } else { None };
    let mut m = Mat::<f64>::zeros(n, n);
    m.as_mut()
        .par_col_iter_mut()
        .enumerate()
        .try_for_each(|(j, mut col)| -> Result<()> {
            for i in 0..=j {
                col[i] = op_kernel(&problem.kernel, opt(i), point(i), opt(j), point(j), problem.method)?;
            }
            col[j] += if j < nb { s_bulk } else { s_bdry };
            Ok(())
        })?;
    for j in 0..n {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(m)
}

/// Fitted posterior mean `f(x*) = k(x*)^T (K_PINN + noise)^{-1} y`.
#[derive(Clone)]
pub struct GprModel {
    problem: ProblemData,
    colloc: CollocationSet,
    alpha: Vec<f64>,
    pub jitter: f64,
}

impl fmt::Debug for GprModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GprModel").field("n", &self.alpha.len()).field("jitter", &self.jitter).finish()
    }
}

impl GprModel {
    /// Factorizes `K_PINN + noise` by Cholesky with jitter escalation.
    pub fn fit(problem: &ProblemData, colloc: &CollocationSet) -> Result<Self> {
        check_problem(problem, colloc)?;
        let mut y = problem.source_on(&colloc.bulk)?;
        y.extend(problem.boundary_on(&colloc.boundary)?);
        let a = assemble_matrix(problem, colloc, colloc.sigma2_bulk, colloc.sigma2_boundary)?;
        let factor = SpdFactor::new(a.as_ref())?;
        drop(a);
        let alpha = factor.solve_vec(&y);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned { condition: f64::INFINITY, jitter: factor.jitter });
        }
        Ok(GprModel { problem: problem.clone(), colloc: colloc.clone(), alpha, jitter: factor.jitter })
    }

    /// Dual weights `(K_PINN + noise)^{-1} y`.
    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    /// Posterior mean of `M f` at `x_star`, where `M` is `apply` or identity.
    pub fn predict_with(&self, apply: Option<&LinearDiffOp>, x_star: &PointSet) -> Result<Vec<f64>> {
        if x_star.dim() != self.colloc.dim() {
            return Err(Error::InvalidInput("prediction points have the wrong dimension".into()));
        }
        if !x_star.all_finite() {
            return Err(Error::Domain("non-finite prediction point".into()));
        }
        let nb = self.colloc.n_bulk();
        let op = &self.problem.operator;
        (0..x_star.len())
            .into_par_iter()
            .map(|s| {
                let x = x_star.get(s);
                let mut acc = 0.0;
                for (i, a) in self.alpha.iter().enumerate() {
                    let (y, right) =
                        if i < nb { (self.colloc.bulk.get(i), Some(op)) } else { (self.colloc.boundary.get(i - nb), None) };
                    acc += a * op_kernel(&self.problem.kernel, apply, x, right, y, self.problem.method)?;
                }
                Ok(acc)
            })
            .collect()
    }

    pub fn predict(&self, x_star: &PointSet) -> Result<Vec<f64>> {
        self.predict_with(None, x_star)
    }

    /// `L f - phi` at the bulk points and `f - g` at the boundary points.
    pub fn training_residuals(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let lf = self.predict_with(Some(&self.problem.operator), &self.colloc.bulk)?;
        let phi = self.problem.source_on(&self.colloc.bulk)?;
        let f = self.predict(&self.colloc.boundary)?;
        let g = self.problem.boundary_on(&self.colloc.boundary)?;
        Ok((
            lf.iter().zip(&phi).map(|(a, b)| a - b).collect(),
            f.iter().zip(&g).map(|(a, b)| a - b).collect(),
        ))
    }
}

/// Posterior mean at `x_star`.
pub fn gpr_predict(problem: &ProblemData, colloc: &CollocationSet, x_star: &PointSet) -> Result<Vec<f64>> {
    GprModel::fit(problem, colloc)?.predict(x_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem(g0: f64) -> ProblemData {
        ProblemData::new(|_| 0.0, move |_| g0, LinearDiffOp::partial(1, 0, 1), KernelSpec::cosine(1.0))
    }

    #[test]
    fn single_boundary_point_by_hand() {
        let colloc =
            CollocationSet::new(PointSet::empty(1), PointSet::from_scalars(&[0.0]), 1.0, 0.01).unwrap();
        let sys = assemble_kpinn(&toy_problem(2.5), &colloc).unwrap();
        let k00 = KernelSpec::cosine(1.0).eval(&[0.0], &[0.0]).unwrap();
        assert_eq!(sys.k[(0, 0)], k00);
        assert_eq!(sys.y, vec![2.5]);
        let f = gpr_predict(&toy_problem(2.5), &colloc, &PointSet::from_scalars(&[0.0])).unwrap();
        let expect = 2.5 * k00 / (k00 + 0.01);
        assert!((f[0] - expect).abs() < 1e-14);
        assert!((f[0] - 2.438_866_678_262_127).abs() < 1e-12);
    }

    #[test]
    fn huge_noise_returns_prior_mean() {
        let colloc =
            CollocationSet::new(PointSet::empty(1), PointSet::from_scalars(&[0.0]), 1.0, 1e12).unwrap();
        let f = gpr_predict(&toy_problem(2.5), &colloc, &PointSet::from_scalars(&[0.0, 1.0, 3.0])).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn identity_operator_gives_plain_gram() {
        let problem = ProblemData::new(|x| x[0], |_| 1.0, LinearDiffOp::identity(1), KernelSpec::cosine(1.0));
        let colloc = CollocationSet::new(
            PointSet::from_scalars(&[0.5, 1.5]),
            PointSet::from_scalars(&[0.0]),
            0.1,
            0.1,
        )
        .unwrap();
        let sys = assemble_kpinn(&problem, &colloc).unwrap();
        let all = PointSet::from_scalars(&[0.5, 1.5, 0.0]);
        let gram = problem.kernel.gram(&all, &all).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((sys.k[(i, j)] - gram[(i, j)]).abs() < 1e-15);
            }
        }
        assert_eq!(sys.y, vec![0.5, 1.5, 1.0]);
    }

    #[test]
    fn collocation_sampling_is_reproducible_and_on_geometry() {
        let g = Geometry::heat_slab();
        let a = sample_collocation(&g, 50, 40, 1.0, 1.0, 7).unwrap();
        let b = sample_collocation(&g, 50, 40, 1.0, 1.0, 7).unwrap();
        assert_eq!(a, b);
        for p in a.boundary.iter() {
            assert!(p[0] == -1.0 || p[0] == 1.0 || p[1] == 0.0);
            assert!(g.on_boundary(p) && g.contains(p));
        }
        for p in a.bulk.iter() {
            assert!(g.contains(p));
        }
        assert!(sample_collocation(&Geometry::interval(1.0, 1.0, &[]), 5, 0, 1.0, 1.0, 0).is_err());
        assert!(sample_collocation(&g, 0, 0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn eta_is_derived_from_counts() {
        let c = sample_collocation(&Geometry::interval(0.0, 512.0, &[End::Lo]), 128, 1, 0.125, 0.5, 1).unwrap();
        assert_eq!(c.eta_bulk(), 1024.0);
        assert_eq!(c.eta_boundary(), 2.0);
        assert_eq!(c.boundary.get(0), &[0.0]);
    }

    #[test]
    fn non_finite_data_is_a_domain_error() {
        let problem = ProblemData::new(|_| f64::NAN, |_| 0.0, LinearDiffOp::identity(1), KernelSpec::cosine(1.0));
        let colloc = CollocationSet::new(PointSet::from_scalars(&[0.5]), PointSet::empty(1), 0.1, 0.1).unwrap();
        assert!(matches!(GprModel::fit(&problem, &colloc), Err(Error::Domain(_))));
    }
}
