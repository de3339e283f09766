//! Exact Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! The covariance `K + σ²I` is held as a lower Cholesky factor. Adding rows
//! (true observations or pseudo-points) extends that factor blockwise instead
//! of refactorizing, which is what the pseudo-point machinery builds on.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter ladder tried when `K + σ²I` fails to factorize.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Pre-clamp posterior variances below this are treated as a numerical fault.
pub const VARIANCE_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    /// Signal variance, `k(x, x)`.
    pub amplitude: f64,
    /// Observation noise variance σ².
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, amplitude: f64, noise_variance: f64) -> Result<Self> {
        let params = KernelParams {
            lengthscales,
            amplitude,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    /// Unit-amplitude kernel with the same lengthscale in every dimension.
    pub fn isotropic(dim: usize, lengthscale: f64, noise_variance: f64) -> Self {
        KernelParams {
            lengthscales: vec![lengthscale; dim],
            amplitude: 1.0,
            noise_variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidParameter("at least one lengthscale is required".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.lengthscales.iter().all(|&l| positive(l)) {
            return Err(Error::InvalidParameter(format!(
                "lengthscales must be positive and finite, got {:?}",
                self.lengthscales
            )));
        }
        if !positive(self.amplitude) {
            return Err(Error::InvalidParameter(format!("amplitude {} must be positive", self.amplitude)));
        }
        if !positive(self.noise_variance) {
            return Err(Error::InvalidParameter(format!(
                "noise variance {} must be positive",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// ARD squared-exponential covariance `amplitude · exp(−½ Σ ((a_j − b_j)/ℓ_j)²)`.
pub fn kernel(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    let d = params.dim();
    for p in [a, b] {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel input"));
        }
    }
    Ok(kernel_unchecked(a, b, params))
}

#[inline]
pub(crate) fn kernel_unchecked(a: &[f64], b: &[f64], params: &KernelParams) -> f64 {
    let mut q = 0.0;
    for ((x, y), l) in a.iter().zip(b).zip(&params.lengthscales) {
        let r = (x - y) / l;
        q += r * r;
    }
    params.amplitude * (-0.5 * q).exp()
}

/// Ordered (input, observation) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<Vec<f64>>,
    observations: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dataset dimension must be at least 1");
        Dataset {
            dim,
            points: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn from_parts(dim: usize, points: Vec<Vec<f64>>, observations: Vec<f64>) -> Result<Self> {
        if points.len() != observations.len() {
            return Err(Error::LengthMismatch {
                what: "observations",
                expected: points.len(),
                got: observations.len(),
            });
        }
        let mut data = Dataset::new(dim);
        for (x, y) in points.into_iter().zip(observations) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, point: Vec<f64>, observation: f64) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        if !point.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset point"));
        }
        if !observation.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        self.points.push(point);
        self.observations.push(observation);
        Ok(())
    }

    pub fn extend_from(&mut self, other: &Dataset) -> Result<()> {
        for (x, y) in other.iter() {
            self.push(x.to_vec(), y)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.observations.iter().copied())
    }

    /// Largest observation, `None` when empty.
    pub fn best_observation(&self) -> Option<f64> {
        self.observations.iter().copied().reduce(f64::max)
    }

    pub fn mean_observation(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.observations.iter().sum::<f64>() / self.len() as f64
        }
    }
}

/// How the zero-mean prior is applied to raw observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// Observations used as-is.
    #[default]
    Zero,
    /// Observations centered on their mean; the constant is added back to predictions.
    Centered,
}

impl MeanMode {
    pub fn offset(self, data: &Dataset) -> f64 {
        match self {
            MeanMode::Zero => 0.0,
            MeanMode::Centered => data.mean_observation(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Posterior state over a dataset: factor of `K + σ²I` and `α = (K + σ²I)⁻¹(y − c)`.
#[derive(Debug)]
pub struct GpModel {
    params: KernelParams,
    data: Dataset,
    offset: f64,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    clamp_events: AtomicUsize,
}

impl Clone for GpModel {
    fn clone(&self) -> Self {
        GpModel {
            params: self.params.clone(),
            data: self.data.clone(),
            offset: self.offset,
            factor: self.factor.clone(),
            alpha: self.alpha.clone(),
            jitter: self.jitter,
            clamp_events: AtomicUsize::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

impl GpModel {
    pub fn new(params: KernelParams, data: Dataset, mode: MeanMode) -> Result<Self> {
        let offset = mode.offset(&data);
        Self::with_offset(params, data, offset)
    }

    /// Builds the model with an explicit constant prior mean `offset`.
    pub fn with_offset(params: KernelParams, data: Dataset, offset: f64) -> Result<Self> {
        params.validate()?;
        if data.dim() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: data.dim(),
            });
        }
        let gram = covariance_matrix(data.points(), &params);
        let (factor, jitter) = cholesky_with_jitter(gram, 0.0)?;
        let centered = DVector::from_iterator(data.len(), data.observations().iter().map(|y| y - offset));
        let alpha = cholesky_solve(&factor, &centered);
        Ok(GpModel {
            params,
            data,
            offset,
            factor,
            alpha,
            jitter,
            clamp_events: AtomicUsize::new(0),
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Lower-triangular factor `L` with `L·Lᵀ = K + (σ² + jitter)·I`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Diagonal jitter that had to be added on top of σ².
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Number of posterior queries whose variance was clamped up to zero.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        Ok(())
    }

    /// `k_t(x)`, the covariances between `x` and every stored input.
    pub fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data.points().iter().map(|p| kernel_unchecked(p, x, &self.params)),
        )
    }

    /// Solves `L·v = b` against the stored factor.
    pub fn solve_factor(&self, b: &DVector<f64>) -> DVector<f64> {
        forward_substitute(&self.factor, b)
    }

    pub fn solve_factor_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        let ok = self.factor.solve_lower_triangular_mut(&mut out);
        debug_assert!(ok);
        out
    }

    /// Posterior mean and variance before clamping.
    pub fn posterior_raw(&self, x: &[f64]) -> Result<Prediction> {
        self.check_point(x)?;
        if self.data.is_empty() {
            return Ok(Prediction {
                mean: self.offset,
                variance: self.params.amplitude,
            });
        }
        let k = self.cross_covariance(x);
        let mean = k.dot(&self.alpha) + self.offset;
        let v = self.solve_factor(&k);
        let variance = self.params.amplitude - v.norm_squared();
        Ok(Prediction { mean, variance })
    }

    /// Posterior mean and variance, the variance clamped at zero.
    pub fn posterior(&self, x: &[f64]) -> Result<Prediction> {
        let mut pred = self.posterior_raw(x)?;
        if pred.variance < 0.0 {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            if pred.variance < VARIANCE_FLOOR {
                log::debug!("posterior variance {:e} below numerical floor", pred.variance);
            }
            pred.variance = 0.0;
        }
        Ok(pred)
    }

    /// Returns the model conditioned on `extra` as well, reusing the existing
    /// factor. `extra` observations are centered with this model's offset and
    /// hyper-parameters are left untouched.
    pub fn augment(&self, extra: &Dataset) -> Result<GpModel> {
        if extra.is_empty() {
            return Ok(self.clone());
        }
        if extra.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: extra.dim(),
            });
        }
        let n = self.data.len();
        let m = extra.len();
        let (lower_left, lower_right, extra_jitter) = self.extension_blocks(extra.points())?;

        let mut factor = DMatrix::zeros(n + m, n + m);
        factor.view_mut((0, 0), (n, n)).copy_from(&self.factor);
        factor.view_mut((n, 0), (m, n)).copy_from(&lower_left);
        factor.view_mut((n, n), (m, m)).copy_from(&lower_right);

        let mut data = self.data.clone();
        data.extend_from(extra)?;
        let centered = DVector::from_iterator(n + m, data.observations().iter().map(|y| y - self.offset));
        let alpha = cholesky_solve(&factor, &centered);
        Ok(GpModel {
            params: self.params.clone(),
            data,
            offset: self.offset,
            factor,
            alpha,
            jitter: self.jitter.max(extra_jitter),
            clamp_events: AtomicUsize::new(0),
        })
    }

    /// Blocks extending the factor by rows for `extra` inputs: returns
    /// `(A, L₂₂, jitter)` with `A = (L⁻¹K̃)ᵀ` and `L₂₂·L₂₂ᵀ = K' + σ²I − A·Aᵀ`.
    pub(crate) fn extension_blocks(&self, extra: &[Vec<f64>]) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
        let n = self.data.len();
        let m = extra.len();
        let cross = DMatrix::from_fn(n, m, |i, j| {
            kernel_unchecked(&self.data.points()[i], &extra[j], &self.params)
        });
        let solved = self.solve_factor_matrix(&cross);
        let mut schur = covariance_matrix(extra, &self.params);
        for i in 0..m {
            schur[(i, i)] += self.jitter;
        }
        schur -= solved.transpose() * &solved;
        let (lower_right, jitter) = cholesky_with_jitter(schur, self.jitter)?;
        Ok((solved.transpose(), lower_right, jitter))
    }

    /// Log marginal likelihood of the stored (centered) observations.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.data.len() as f64;
        let centered = DVector::from_iterator(
            self.data.len(),
            self.data.observations().iter().map(|y| y - self.offset),
        );
        let log_det_half: f64 = self.factor.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * centered.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * PI).ln()
    }
}

/// `K + σ²I` over `points`.
pub(crate) fn covariance_matrix(points: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.amplitude + params.noise_variance;
        for j in 0..i {
            let v = kernel_unchecked(&points[i], &points[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `matrix`, escalating diagonal jitter along
/// [`JITTER_LADDER`] (never below `floor`) until it succeeds.
pub(crate) fn cholesky_with_jitter(matrix: DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, f64)> {
    let size = matrix.nrows();
    if size == 0 {
        return Ok((matrix, floor));
    }
    if let Some(l) = try_cholesky(&matrix) {
        return Ok((l, floor));
    }
    for &jitter in JITTER_LADDER.iter().filter(|&&j| j > floor) {
        let mut m = matrix.clone();
        for i in 0..size {
            m[(i, i)] += jitter - floor;
        }
        if let Some(l) = try_cholesky(&m) {
            log::debug!("factorization of {size}x{size} covariance needed jitter {jitter:e}");
            return Ok((l, jitter));
        }
    }
    Err(Error::Conditioning {
        size,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

fn try_cholesky(matrix: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !matrix.iter().all(|v| v.is_finite()) {
        return None;
    }
    let chol = nalgebra::linalg::Cholesky::new(matrix.clone())?;
    let l = chol.unpack();
    if l.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
        Some(l)
    } else {
        None
    }
}

pub(crate) fn forward_substitute(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = b.clone();
    let ok = l.solve_lower_triangular_mut(&mut out);
    debug_assert!(ok);
    out
}

/// Solves `L·Lᵀ·x = b`.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = forward_substitute(l, b);
    let ok = l.tr_solve_lower_triangular_mut(&mut out);
    debug_assert!(ok);
    out
}

/// Log marginal likelihood of `data` under a zero-mean prior:
/// `−½ yᵀ(K+σ²I)⁻¹y − ½ log det(K+σ²I) − (t/2) log 2π`.
pub fn log_likelihood(data: &Dataset, params: &KernelParams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("log likelihood of an empty dataset".into()));
    }
    Ok(GpModel::with_offset(params.clone(), data.clone(), 0.0)?.log_likelihood())
}

/// Which hyper-parameters the likelihood gradient and the fit act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeParams {
    pub amplitude: bool,
    pub noise: bool,
}

impl FreeParams {
    fn count(self, dim: usize) -> usize {
        dim + usize::from(self.amplitude) + usize::from(self.noise)
    }
}

/// Log likelihood and its gradient with respect to `log ℓ_j`, then
/// `log amplitude` and `log σ²` when those are free.
pub fn log_likelihood_gradient(data: &Dataset, params: &KernelParams, free: FreeParams) -> Result<(f64, Vec<f64>)> {
    let model = GpModel::with_offset(params.clone(), data.clone(), 0.0)?;
    let n = data.len();
    let d = params.dim();
    let ll = model.log_likelihood();

    let mut inverse = DMatrix::identity(n, n);
    model.factor.solve_lower_triangular_mut(&mut inverse);
    let inverse = inverse.transpose() * &inverse;
    // W = ααᵀ − (K+σ²I)⁻¹, dLL/dθ = ½ tr(W ∂K/∂θ)
    let w = &model.alpha * model.alpha.transpose() - inverse;

    let mut grad = vec![0.0; free.count(d)];
    let points = data.points();
    for i in 0..n {
        for j in 0..i {
            let kij = kernel_unchecked(&points[i], &points[j], params);
            // symmetric off-diagonal pairs counted twice, times ½
            let weight = w[(i, j)] * kij;
            for (dim, l) in params.lengthscales.iter().enumerate() {
                let r = (points[i][dim] - points[j][dim]) / l;
                grad[dim] += weight * r * r;
            }
            if free.amplitude {
                grad[d] += weight;
            }
        }
        if free.amplitude {
            grad[d] += 0.5 * w[(i, i)] * params.amplitude;
        }
    }
    if free.noise {
        let idx = d + usize::from(free.amplitude);
        grad[idx] = 0.5 * params.noise_variance * w.diagonal().sum();
    }
    Ok((ll, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub max_iterations: usize,
    pub fit_amplitude: bool,
    pub fit_noise: bool,
    pub mean_mode: MeanMode,
    pub lengthscale_bounds: (f64, f64),
    pub amplitude_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            max_iterations: 60,
            fit_amplitude: true,
            fit_noise: false,
            mean_mode: MeanMode::Zero,
            lengthscale_bounds: (1e-3, 1e2),
            amplitude_bounds: (1e-6, 1e8),
            noise_bounds: (1e-10, 1e4),
        }
    }
}

impl FitConfig {
    /// Unit amplitude, only lengthscales are estimated.
    pub fn theory() -> Self {
        FitConfig {
            fit_amplitude: false,
            ..FitConfig::default()
        }
    }

    fn free(&self) -> FreeParams {
        FreeParams {
            amplitude: self.fit_amplitude,
            noise: self.fit_noise,
        }
    }
}

/// Maximum-likelihood hyper-parameters, searched in log space from `init`
/// plus `config.starts − 1` random starts drawn from `rng`. The result never
/// has a lower likelihood than `init`.
pub fn fit<R: Rng + ?Sized>(data: &Dataset, init: &KernelParams, config: &FitConfig, rng: &mut R) -> Result<KernelParams> {
    init.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot fit hyper-parameters on an empty dataset".into()));
    }
    if data.dim() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: data.dim(),
        });
    }
    let offset = config.mean_mode.offset(data);
    let centered = Dataset::from_parts(
        data.dim(),
        data.points().to_vec(),
        data.observations().iter().map(|y| y - offset).collect(),
    )?;
    let problem = LikelihoodProblem::new(&centered, init, config);

    let init_theta = problem.encode(init);
    let mut best: Option<(Vec<f64>, f64)> = problem.value(&init_theta).map(|v| (init_theta.clone(), v));

    let spread = centered.observations().iter().map(|y| y * y).sum::<f64>() / centered.len() as f64;
    let mut starts = vec![problem.clamp(init_theta.clone())];
    for _ in 1..config.starts.max(1) {
        let mut theta = Vec::with_capacity(problem.dim);
        for _ in 0..data.dim() {
            theta.push(rng.random_range(0.05f64.ln()..2.0f64.ln()));
        }
        if config.fit_amplitude {
            let centre = if spread > 0.0 { spread.ln() } else { 0.0 };
            theta.push(centre + rng.random_range(-2.0..2.0));
        }
        if config.fit_noise {
            theta.push(init.noise_variance.ln() + rng.random_range(-2.0..2.0));
        }
        starts.push(problem.clamp(theta));
    }

    for start in starts {
        if let Some((theta, value)) = problem.ascend(start, config.max_iterations) {
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((theta, value));
            }
        }
    }
    match best {
        Some((theta, _)) => Ok(problem.decode(&theta)),
        None => Err(Error::Conditioning {
            size: data.len(),
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        }),
    }
}

struct LikelihoodProblem<'a> {
    data: &'a Dataset,
    base: KernelParams,
    free: FreeParams,
    lower: Vec<f64>,
    upper: Vec<f64>,
    dim: usize,
}

impl<'a> LikelihoodProblem<'a> {
    fn new(data: &'a Dataset, base: &KernelParams, config: &FitConfig) -> Self {
        let d = data.dim();
        let free = config.free();
        let mut lower = vec![config.lengthscale_bounds.0.ln(); d];
        let mut upper = vec![config.lengthscale_bounds.1.ln(); d];
        if free.amplitude {
            lower.push(config.amplitude_bounds.0.ln());
            upper.push(config.amplitude_bounds.1.ln());
        }
        if free.noise {
            lower.push(config.noise_bounds.0.ln());
            upper.push(config.noise_bounds.1.ln());
        }
        LikelihoodProblem {
            data,
            base: base.clone(),
            free,
            dim: free.count(d),
            lower,
            upper,
        }
    }

    fn encode(&self, p: &KernelParams) -> Vec<f64> {
        let mut theta: Vec<f64> = p.lengthscales.iter().map(|l| l.ln()).collect();
        if self.free.amplitude {
            theta.push(p.amplitude.ln());
        }
        if self.free.noise {
            theta.push(p.noise_variance.ln());
        }
        theta
    }

    fn decode(&self, theta: &[f64]) -> KernelParams {
        let d = self.data.dim();
        let mut p = self.base.clone();
        p.lengthscales = theta[..d].iter().map(|t| t.exp()).collect();
        let mut idx = d;
        if self.free.amplitude {
            p.amplitude = theta[idx].exp();
            idx += 1;
        }
        if self.free.noise {
            p.noise_variance = theta[idx].exp();
        }
        p
    }

    fn clamp(&self, mut theta: Vec<f64>) -> Vec<f64> {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.clamp(*lo, *hi);
        }
        theta
    }

    fn value(&self, theta: &[f64]) -> Option<f64> {
        log_likelihood(self.data, &self.decode(theta)).ok().filter(|v| v.is_finite())
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (v, g) = log_likelihood_gradient(self.data, &self.decode(theta), self.free).ok()?;
        (v.is_finite() && g.iter().all(|x| x.is_finite())).then_some((v, g))
    }

    /// Projected quasi-Newton ascent with Armijo backtracking.
    fn ascend(&self, start: Vec<f64>, max_iterations: usize) -> Option<(Vec<f64>, f64)> {
        let n = self.dim;
        let (mut value, mut grad) = self.value_and_gradient(&start)?;
        let mut theta = start;
        let mut h = DMatrix::<f64>::identity(n, n);
        for _ in 0..max_iterations {
            let g = DVector::from_column_slice(&grad);
            let mut dir = &h * &g;
            if dir.dot(&g) <= 0.0 {
                h = DMatrix::identity(n, n);
                dir = g.clone();
            }
            for i in 0..n {
                let at_lower = theta[i] <= self.lower[i] && dir[i] < 0.0;
                let at_upper = theta[i] >= self.upper[i] && dir[i] > 0.0;
                if at_lower || at_upper {
                    dir[i] = 0.0;
                }
            }
            let largest = dir.amax();
            if largest < 1e-12 {
                break;
            }
            let mut step = if largest > 2.0 { 2.0 / largest } else { 1.0 };
            let mut accepted = None;
            for _ in 0..30 {
                let candidate =
                    self.clamp(theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect());
                let moved: f64 = candidate.iter().zip(&theta).zip(&grad).map(|((c, t), g)| (c - t) * g).sum();
                if let Some((v, gr)) = self.value_and_gradient(&candidate) {
                    if v >= value + 1e-4 * moved {
                        accepted = Some((candidate, v, gr));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((next, next_value, next_grad)) = accepted else {
                break;
            };
            let s = DVector::from_iterator(n, next.iter().zip(&theta).map(|(a, b)| a - b));
            // curvature pair for minimizing −LL
            let y = DVector::from_iterator(n, next_grad.iter().zip(&grad).map(|(a, b)| b - a));
            let sy = s.dot(&y);
            if sy > 1e-12 {
                let rho = 1.0 / sy;
                let eye = DMatrix::<f64>::identity(n, n);
                let left = &eye - rho * &s * y.transpose();
                let right = &eye - rho * &y * s.transpose();
                h = left * &h * right + rho * &s * s.transpose();
            }
            let improvement = next_value - value;
            theta = next;
            value = next_value;
            grad = next_grad;
            if improvement.abs() < 1e-9 * (1.0 + value.abs()) || s.amax() < 1e-8 {
                break;
            }
        }
        Some((theta, value))
    }
}
