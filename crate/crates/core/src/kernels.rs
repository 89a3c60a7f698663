//! NNGP covariance kernels of single-hidden-layer random networks.
//!
//! Every family is the covariance `E[f(x) f(y)]` of a network
//! `f(x) = sum_c a_c act(w_c . x)` with `a_c ~ N(0, sigma_a2 / C)` and
//! `w_c ~ N(0, sigma_w2 I)`; for [`KernelFamily::ErfArcsine`] the input is
//! augmented with a constant bias coordinate whose weight has variance
//! `bias_var`. [`KernelFamily::SquaredExponential`] has no feature map here
//! and is only available in closed form.

use std::f64::consts::{FRAC_2_PI, PI};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{self, DualFn, Scalar};
use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    CosineFeature,
    SineFeature,
    SquaredExponential,
    ErfArcsine,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::CosineFeature => "CosineFeature",
            KernelFamily::SineFeature => "SineFeature",
            KernelFamily::SquaredExponential => "SquaredExponential",
            KernelFamily::ErfArcsine => "ErfArcsine",
        }
    }

    pub fn has_feature_map(self) -> bool {
        !matches!(self, KernelFamily::SquaredExponential)
    }
}

/// How kernel derivatives are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    /// Closed form for the Gaussian families, forward-mode AD for the erf
    /// kernel, nested finite differences beyond that.
    #[default]
    Auto,
    /// Nested central differences with step `eps^(1/(order+2)) * l`.
    FiniteDifference,
}

/// Highest total derivative order accepted by the finite-difference path.
pub const MAX_FD_ORDER: usize = 8;
/// Highest total derivative order accepted by the Gaussian closed forms.
pub const MAX_CLOSED_FORM_ORDER: usize = 24;

/// A covariance function together with its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length scale, in input units.
    pub l: f64,
    pub sigma_a2: f64,
    pub sigma_w2: f64,
    /// Variance of the bias weight (erf kernel only).
    pub bias_var: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecRepr {
    family: KernelFamily,
    l: f64,
    sigma_a2: Option<f64>,
    sigma_w2: Option<f64>,
    bias_var: Option<f64>,
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = KernelSpecRepr::deserialize(d)?;
        let mut spec = KernelSpec::with_defaults(r.family, r.l);
        if let Some(v) = r.sigma_a2 {
            spec.sigma_a2 = v;
        }
        if let Some(v) = r.sigma_w2 {
            spec.sigma_w2 = v;
        }
        if let Some(v) = r.bias_var {
            spec.bias_var = v;
        }
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}

impl KernelSpec {
    /// `sigma_w2 = 1/l^2`, `sigma_a2 = 1/sqrt(2 pi l^2)`, `bias_var = 1`.
    pub fn with_defaults(family: KernelFamily, l: f64) -> Self {
        KernelSpec {
            family,
            l,
            sigma_a2: 1.0 / (2.0 * PI * l * l).sqrt(),
            sigma_w2: 1.0 / (l * l),
            bias_var: 1.0,
        }
    }

    pub fn cosine(l: f64) -> Self {
        Self::with_defaults(KernelFamily::CosineFeature, l)
    }

    pub fn sine(l: f64) -> Self {
        Self::with_defaults(KernelFamily::SineFeature, l)
    }

    pub fn squared_exponential(l: f64) -> Self {
        Self::with_defaults(KernelFamily::SquaredExponential, l)
    }

    pub fn erf(l: f64) -> Self {
        Self::with_defaults(KernelFamily::ErfArcsine, l)
    }

    /// Scales the initialization standard deviations by `alpha`
    /// (`sigma -> alpha * sigma` for the readout, input and bias weights).
    pub fn scaled_init(mut self, alpha: f64) -> Self {
        let a2 = alpha * alpha;
        self.sigma_a2 *= a2;
        self.sigma_w2 *= a2;
        self.bias_var *= a2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.l) && ok(self.sigma_a2) && ok(self.sigma_w2) && ok(self.bias_var)) {
            return Err(Error::InvalidInput(format!(
                "kernel parameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Closed-form covariance `K(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput("kernel arguments differ in dimension".into()));
        }
        if !x.iter().chain(y).all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("non-finite kernel argument {x:?}, {y:?}")));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let s = self.sigma_w2;
        match self.family {
            KernelFamily::CosineFeature | KernelFamily::SineFeature => {
                let (mut dm, mut dp) = (0.0, 0.0);
                for (a, b) in x.iter().zip(y) {
                    dm += (a - b) * (a - b);
                    dp += (a + b) * (a + b);
                }
                let em = (-0.5 * s * dm).exp();
                let ep = (-0.5 * s * dp).exp();
                if self.family == KernelFamily::CosineFeature {
                    0.5 * self.sigma_a2 * (em + ep)
                } else {
                    0.5 * self.sigma_a2 * (em - ep)
                }
            }
            KernelFamily::SquaredExponential => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                self.sigma_a2 * (-0.5 * s * d2).exp()
            }
            KernelFamily::ErfArcsine => {
                let ip = |p: &[f64], q: &[f64]| -> f64 {
                    s * p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() + self.bias_var
                };
                let num = 2.0 * ip(x, y);
                let den = ((1.0 + 2.0 * ip(x, x)) * (1.0 + 2.0 * ip(y, y))).sqrt();
                self.sigma_a2 * FRAC_2_PI * (num / den).clamp(-1.0, 1.0).asin()
            }
        }
    }

    /// Gram matrix `[K(r_i, c_j)]`.
    pub fn gram(&self, rows: &PointSet, cols: &PointSet) -> Result<Mat<f64>> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidInput("gram needs non-empty point sets".into()));
        }
        if rows.dim() != cols.dim() {
            return Err(Error::InvalidInput("gram point sets differ in dimension".into()));
        }
        if !rows.all_finite() || !cols.all_finite() {
            return Err(Error::Domain("non-finite point in gram assembly".into()));
        }
        Ok(fill_matrix(rows.len(), cols.len(), |i, j| self.eval_unchecked(rows.get(i), cols.get(j))))
    }

    /// Mixed partial derivative `d^alpha_x d^beta_y K(x, y)`.
    pub fn derivative(
        &self,
        x: &[f64],
        alpha: &[usize],
        y: &[f64],
        beta: &[usize],
        method: DerivativeMethod,
    ) -> Result<f64> {
        let d = x.len();
        if y.len() != d || alpha.len() != d || beta.len() != d {
            return Err(Error::InvalidInput("derivative multi-index has the wrong dimension".into()));
        }
        let order: usize = alpha.iter().chain(beta).sum();
        if order == 0 {
            return Ok(self.eval_unchecked(x, y));
        }
        let gaussian = !matches!(self.family, KernelFamily::ErfArcsine);
        match method {
            DerivativeMethod::Auto if gaussian => {
                if order > MAX_CLOSED_FORM_ORDER {
                    return Err(Error::DerivativeOrder { family: self.family.name(), order });
                }
                Ok(self.gaussian_derivative(x, alpha, y, beta))
            }
            DerivativeMethod::Auto if order <= dual::MAX_DEPTH => {
                let mut point = Vec::with_capacity(2 * d);
                point.extend_from_slice(x);
                point.extend_from_slice(y);
                let dirs = directions(alpha, beta);
                let f = GenericKernel { spec: *self, dim: d };
                dual::mixed_partial(&f, &point, &dirs)
                    .ok_or(Error::DerivativeOrder { family: self.family.name(), order })
            }
            _ => {
                if order > MAX_FD_ORDER {
                    return Err(Error::DerivativeOrder { family: self.family.name(), order });
                }
                Ok(self.fd_derivative(x, alpha, y, beta, order))
            }
        }
    }

    /// Closed-form derivatives of `exp(-s |x -+ y|^2 / 2)` through Hermite
    /// polynomials, dimension by dimension.
    fn gaussian_derivative(&self, x: &[f64], alpha: &[usize], y: &[f64], beta: &[usize]) -> f64 {
        let s = self.sigma_w2;
        let mut minus = 1.0;
        let mut plus = 1.0;
        for k in 0..x.len() {
            let m = alpha[k] + beta[k];
            let sign = if beta[k] % 2 == 1 { -1.0 } else { 1.0 };
            minus *= sign * gaussian_factor_derivative(s, x[k] - y[k], m);
            if self.family != KernelFamily::SquaredExponential {
                plus *= gaussian_factor_derivative(s, x[k] + y[k], m);
            }
        }
        match self.family {
            KernelFamily::CosineFeature => 0.5 * self.sigma_a2 * (minus + plus),
            KernelFamily::SineFeature => 0.5 * self.sigma_a2 * (minus - plus),
            KernelFamily::SquaredExponential => self.sigma_a2 * minus,
            KernelFamily::ErfArcsine => unreachable!(),
        }
    }

    fn fd_derivative(&self, x: &[f64], alpha: &[usize], y: &[f64], beta: &[usize], order: usize) -> f64 {
        let d = x.len();
        let h = f64::EPSILON.powf(1.0 / (order as f64 + 2.0)) * self.l;
        let dirs = directions(alpha, beta);
        let mut z = Vec::with_capacity(2 * d);
        z.extend_from_slice(x);
        z.extend_from_slice(y);
        fn rec(spec: &KernelSpec, z: &mut [f64], d: usize, dirs: &[usize], h: f64) -> f64 {
            match dirs.split_first() {
                None => spec.eval_unchecked(&z[..d], &z[d..]),
                Some((&k, rest)) => {
                    let z0 = z[k];
                    z[k] = z0 + h;
                    let fp = rec(spec, z, d, rest, h);
                    z[k] = z0 - h;
                    let fm = rec(spec, z, d, rest, h);
                    z[k] = z0;
                    (fp - fm) / (2.0 * h)
                }
            }
        }
        rec(self, &mut z, d, &dirs, h)
    }
}

/// Coordinates of the joint vector `(x, y)` to differentiate along.
fn directions(alpha: &[usize], beta: &[usize]) -> Vec<usize> {
    let d = alpha.len();
    let mut dirs = Vec::new();
    for (k, &a) in alpha.iter().enumerate() {
        dirs.extend(std::iter::repeat_n(k, a));
    }
    for (k, &b) in beta.iter().enumerate() {
        dirs.extend(std::iter::repeat_n(d + k, b));
    }
    dirs
}

/// `d^m/du^m exp(-s u^2 / 2) = (-sqrt s)^m He_m(sqrt(s) u) exp(-s u^2 / 2)`.
#[inline]
fn gaussian_factor_derivative(s: f64, u: f64, m: usize) -> f64 {
    let e = (-0.5 * s * u * u).exp();
    if m == 0 {
        return e;
    }
    let rs = s.sqrt();
    let z = rs * u;
    let (mut h0, mut h1) = (1.0, z);
    for k in 1..m {
        let h2 = z * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
    sign * rs.powi(m as i32) * h1 * e
}

/// Kernel closed form written over any [`Scalar`], used by the AD path.
struct GenericKernel {
    spec: KernelSpec,
    dim: usize,
}

impl DualFn for GenericKernel {
    fn call<S: Scalar>(&self, args: &[S]) -> S {
        let (x, y) = args.split_at(self.dim);
        let s = self.spec.sigma_w2;
        let sq = |p: &[S], q: &[S], sign: f64| -> S {
            let mut acc = S::constant(0.0);
            for (a, b) in p.iter().zip(q) {
                let t = *a + b.scale(sign);
                acc = acc + t * t;
            }
            acc
        };
        match self.spec.family {
            KernelFamily::CosineFeature | KernelFamily::SineFeature => {
                let em = sq(x, y, -1.0).scale(-0.5 * s).exp();
                let ep = sq(x, y, 1.0).scale(-0.5 * s).exp();
                let sum = if self.spec.family == KernelFamily::CosineFeature { em + ep } else { em - ep };
                sum.scale(0.5 * self.spec.sigma_a2)
            }
            KernelFamily::SquaredExponential => sq(x, y, -1.0).scale(-0.5 * s).exp().scale(self.spec.sigma_a2),
            KernelFamily::ErfArcsine => {
                let ip = |p: &[S], q: &[S]| -> S {
                    let mut acc = S::constant(0.0);
                    for (a, b) in p.iter().zip(q) {
                        acc = acc + *a * *b;
                    }
                    acc.scale(s) + S::constant(self.spec.bias_var)
                };
                let one = S::constant(1.0);
                let num = ip(x, y).scale(2.0);
                let den = ((one + ip(x, x).scale(2.0)) * (one + ip(y, y).scale(2.0))).sqrt();
                (num / den).asin().scale(self.spec.sigma_a2 * FRAC_2_PI)
            }
        }
    }
}

/// Dense matrix filled column by column in parallel.
pub(crate) fn fill_matrix<F>(nrows: usize, ncols: usize, f: F) -> Mat<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut m = Mat::<f64>::zeros(nrows, ncols);
    m.as_mut().par_col_iter_mut().enumerate().for_each(|(j, mut col)| {
        for i in 0..nrows {
            col[i] = f(i, j);
        }
    });
    m
}

/// Fallible variant of [`fill_matrix`].
pub(crate) fn try_fill_matrix<F>(nrows: usize, ncols: usize, f: F) -> Result<Mat<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let mut m = Mat::<f64>::zeros(nrows, ncols);
    m.as_mut()
        .par_col_iter_mut()
        .enumerate()
        .try_for_each(|(j, mut col)| -> Result<()> {
            for i in 0..nrows {
                col[i] = f(i, j)?;
            }
            Ok(())
        })?;
    Ok(m)
}

/// Activation of a random-feature network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Cos,
    Sin,
    Erf,
}

/// A finite-width random network `f(x) = sum_c a_c act(w_c . x~)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFeatureNet {
    pub activation: Activation,
    pub input_dim: usize,
    /// Readout weights, one per hidden unit.
    pub a: Vec<f64>,
    /// Input weights, row-major `width x feature_dim`; for erf the last
    /// column multiplies the constant bias coordinate.
    pub w: Vec<f64>,
}

impl RandomFeatureNet {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    fn feature_dim(&self) -> usize {
        match self.activation {
            Activation::Erf => self.input_dim + 1,
            _ => self.input_dim,
        }
    }

    #[inline]
    fn feature(&self, c: usize, x: &[f64]) -> f64 {
        let fd = self.feature_dim();
        let w = &self.w[c * fd..(c + 1) * fd];
        let mut z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        if self.activation == Activation::Erf {
            z += w[fd - 1];
        }
        match self.activation {
            Activation::Cos => z.cos(),
            Activation::Sin => z.sin(),
            Activation::Erf => libm::erf(z),
        }
    }

    /// Network output at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidInput("network input has the wrong dimension".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("non-finite network input".into()));
        }
        Ok((0..self.width()).map(|c| self.a[c] * self.feature(c, x)).sum())
    }

    /// Per-unit estimate `C * a_c^2 act(w_c.x) act(w_c.y)` averaged over the
    /// hidden units, with its standard error. Unbiased for `K(x, y)`.
    pub fn unit_kernel_estimate(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        let c = self.width() as f64;
        let samples: Vec<f64> = (0..self.width())
            .map(|k| c * self.a[k] * self.a[k] * self.feature(k, x) * self.feature(k, y))
            .collect();
        Ok(mean_and_stderr(&samples))
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws a network whose infinite-width covariance is `spec`.
pub fn sample_network(spec: &KernelSpec, width: usize, input_dim: usize, seed: u64) -> Result<RandomFeatureNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_network_with(spec, width, input_dim, &mut rng)
}

fn sample_network_with(
    spec: &KernelSpec,
    width: usize,
    input_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RandomFeatureNet> {
    spec.validate()?;
    if width == 0 || input_dim == 0 {
        return Err(Error::InvalidInput("network width and input dimension must be positive".into()));
    }
    let activation = match spec.family {
        KernelFamily::CosineFeature => Activation::Cos,
        KernelFamily::SineFeature => Activation::Sin,
        KernelFamily::ErfArcsine => Activation::Erf,
        KernelFamily::SquaredExponential => return Err(Error::UnsupportedFamily(spec.family.name())),
    };
    let a_dist = Normal::new(0.0, (spec.sigma_a2 / width as f64).sqrt()).expect("positive std");
    let w_dist = Normal::new(0.0, spec.sigma_w2.sqrt()).expect("positive std");
    let b_dist = Normal::new(0.0, spec.bias_var.sqrt()).expect("positive std");
    let a: Vec<f64> = (0..width).map(|_| a_dist.sample(rng)).collect();
    let mut w = Vec::with_capacity(width * (input_dim + 1));
    for _ in 0..width {
        for _ in 0..input_dim {
            w.push(w_dist.sample(rng));
        }
        if activation == Activation::Erf {
            w.push(b_dist.sample(rng));
        }
    }
    Ok(RandomFeatureNet { activation, input_dim, a, w })
}

/// Monte-Carlo estimate of `K(x, y)` from independent networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub networks: usize,
    pub width: usize,
}

impl MonteCarloEstimate {
    /// Total number of hidden units sampled.
    pub fn samples(&self) -> usize {
        self.networks * self.width
    }
}

/// Averages `f(x) f(y)` over `n_nets` independent networks of width `width`.
pub fn monte_carlo_kernel(
    spec: &KernelSpec,
    x: &[f64],
    y: &[f64],
    width: usize,
    n_nets: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if width.saturating_mul(n_nets) < 1000 {
        return Err(Error::InvalidInput("monte_carlo_kernel needs width * n_nets >= 1000".into()));
    }
    if n_nets < 2 {
        return Err(Error::InvalidInput("monte_carlo_kernel needs at least two networks".into()));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidInput("kernel arguments differ in dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prods = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let net = sample_network_with(spec, width, x.len(), &mut rng)?;
        prods.push(net.eval(x)? * net.eval(y)?);
    }
    let (estimate, std_error) = mean_and_stderr(&prods);
    Ok(MonteCarloEstimate { estimate, std_error, networks: n_nets, width })
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn cosine_closed_form_values() {
        let k = KernelSpec::cosine(1.0);
        assert!((k.eval(&[0.0], &[0.0]).unwrap() - INV_SQRT_2PI).abs() < 1e-15);
        let k01 = k.eval(&[0.0], &[1.0]).unwrap();
        assert!((k01 - (-0.5f64).exp() * INV_SQRT_2PI).abs() < 1e-15);
        assert!((k01 - 0.241_970_724_519_143_37).abs() < 1e-12);
        assert_eq!(k01, k.eval(&[1.0], &[0.0]).unwrap());
    }

    #[test]
    fn cosine_matches_written_formula() {
        let l = 1.7;
        let k = KernelSpec::cosine(l);
        for &(x, y) in &[(0.3, -1.2), (2.0, 2.5), (-0.7, 4.0)] {
            let expect = ((-(x - y) * (x - y) / (2.0 * l * l)).exp() + (-(x + y) * (x + y) / (2.0 * l * l)).exp())
                / (2.0 * (2.0 * PI * l * l).sqrt());
            assert!((k.eval(&[x], &[y]).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn sine_kernel_vanishes_at_origin() {
        let k = KernelSpec::sine(1.0);
        for x in [-3.0, -0.2, 0.0, 0.5, 7.0] {
            assert_eq!(k.eval(&[0.0], &[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_finite_arguments_are_domain_errors() {
        let k = KernelSpec::cosine(1.0);
        assert!(matches!(k.eval(&[f64::NAN], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(k.eval(&[0.0], &[f64::INFINITY]), Err(Error::Domain(_))));
    }

    #[test]
    fn gram_blocks_match_pointwise_values() {
        let k = KernelSpec::cosine(1.0);
        let g = k.gram(&PointSet::from_scalars(&[0.0]), &PointSet::from_scalars(&[0.0])).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (1, 1));
        assert_eq!(g[(0, 0)], k.eval(&[0.0], &[0.0]).unwrap());
        let g = k.gram(&PointSet::from_scalars(&[0.0, 1.0]), &PointSet::from_scalars(&[2.0])).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (2, 1));
        assert_eq!(g[(0, 0)], k.eval(&[0.0], &[2.0]).unwrap());
        assert_eq!(g[(1, 0)], k.eval(&[1.0], &[2.0]).unwrap());
        assert!(k.gram(&PointSet::empty(1), &PointSet::from_scalars(&[1.0])).is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let spec: KernelSpec = serde_json::from_str(r#"{"family":"CosineFeature","l":2.0}"#).unwrap();
        assert_eq!(spec, KernelSpec::cosine(2.0));
        let text = serde_json::to_string(&spec).unwrap();
        let back: KernelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"CosineFeature","l":-1.0}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"CosineFeature","l":1.0,"x":1}"#).is_err());
    }

    #[test]
    fn squared_exponential_has_no_feature_map() {
        let spec = KernelSpec::squared_exponential(1.0);
        assert!(matches!(sample_network(&spec, 10, 1, 0), Err(Error::UnsupportedFamily(_))));
        assert!(monte_carlo_kernel(&spec, &[0.0], &[0.0], 100, 100, 0).is_err());
    }

    #[test]
    fn single_unit_network_is_hand_computable() {
        let net = sample_network(&KernelSpec::cosine(1.0), 1, 1, 42).unwrap();
        for x in [0.0, 0.4, -2.5] {
            let expect = net.a[0] * (net.w[0] * x).cos();
            assert_eq!(net.eval(&[x]).unwrap(), expect);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let spec = KernelSpec::erf(1.0);
        let a = sample_network(&spec, 64, 2, 9).unwrap();
        let b = sample_network(&spec, 64, 2, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_network(&spec, 64, 2, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn wide_network_unit_estimate_matches_variance_at_origin() {
        let spec = KernelSpec::cosine(1.0);
        let net = sample_network(&spec, 100_000, 1, 3).unwrap();
        let (est, se) = net.unit_kernel_estimate(&[0.0], &[0.0]).unwrap();
        let k00 = spec.eval(&[0.0], &[0.0]).unwrap();
        assert!((est - k00).abs() <= 3.0 * se, "est {est} se {se}");
    }

    #[test]
    fn monte_carlo_is_symmetric_under_same_seed() {
        let spec = KernelSpec::cosine(1.0);
        let a = monte_carlo_kernel(&spec, &[0.3], &[1.1], 50, 200, 5).unwrap();
        let b = monte_carlo_kernel(&spec, &[1.1], &[0.3], 50, 200, 5).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert!(monte_carlo_kernel(&spec, &[0.0], &[0.0], 10, 10, 0).is_err());
    }

    #[test]
    fn erf_kernel_matches_explicit_arcsine() {
        let spec = KernelSpec::erf(1.0).scaled_init(2.0);
        let (x, y) = ([0.3, 0.1], [-0.5, 0.8]);
        let s = spec.sigma_w2;
        let b = spec.bias_var;
        let ip = |p: &[f64], q: &[f64]| s * (p[0] * q[0] + p[1] * q[1]) + b;
        let expect = spec.sigma_a2 * 2.0 / PI
            * (2.0 * ip(&x, &y) / ((1.0 + 2.0 * ip(&x, &x)) * (1.0 + 2.0 * ip(&y, &y))).sqrt()).asin();
        assert!((spec.eval(&x, &y).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn closed_form_derivatives_agree_with_dual_numbers() {
        for spec in [KernelSpec::cosine(0.8), KernelSpec::sine(1.3), KernelSpec::squared_exponential(0.6)] {
            let x = [0.4, -0.3];
            let y = [1.1, 0.2];
            let f = GenericKernel { spec, dim: 2 };
            for (alpha, beta) in [([1, 0], [0, 0]), ([0, 1], [1, 0]), ([2, 0], [0, 2]), ([1, 1], [2, 0])] {
                let closed = spec.derivative(&x, &alpha, &y, &beta, DerivativeMethod::Auto).unwrap();
                let pt = [x[0], x[1], y[0], y[1]];
                let ad = dual::mixed_partial(&f, &pt, &directions(&alpha, &beta)).unwrap();
                assert!((closed - ad).abs() <= 1e-12 * (1.0 + ad.abs()), "{closed} vs {ad}");
            }
        }
    }

    #[test]
    fn derivative_order_limits_are_enforced() {
        let spec = KernelSpec::erf(1.0);
        let err = spec.derivative(&[0.1], &[5], &[0.2], &[4], DerivativeMethod::Auto);
        assert!(matches!(err, Err(Error::DerivativeOrder { .. })));
        let spec = KernelSpec::cosine(1.0);
        let err = spec.derivative(&[0.1], &[5], &[0.2], &[4], DerivativeMethod::FiniteDifference);
        assert!(matches!(err, Err(Error::DerivativeOrder { .. })));
    }
}
