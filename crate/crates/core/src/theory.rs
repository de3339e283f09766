//! Numerical checks of the pseudo-point variance and mean identities and of
//! the mean-error bound, on small randomized instances.
//!
//! Each closed form is compared against posteriors rebuilt from scratch on the
//! joint data, which share no factorization with the closed-form path.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, GpModel, KernelParams, MeanMode};
use crate::optimizer::BoxDomain;
use crate::pseudo::{generate_with_tau, PseudoCorrection, PseudoPointSet};
use crate::rng::{derive_seed, substream, SeededStream, Substream};

pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const DELTA_V_FLOOR: f64 = -1e-9;
pub const P_BOUND_SLACK: f64 = 1e-8;
pub const M_BOUND_SLACK: f64 = 1e-6;
const QUERIES: usize = 32;

/// Constants of the smoothness assumption and the regret statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub a: f64,
    pub b: f64,
    /// Lipschitz constant used by the Lipschitz form of Δ_m.
    pub lipschitz: f64,
    /// Domain width, `X ⊂ [0, r]^d`.
    pub r: f64,
    pub delta: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.a, self.b, self.lipschitz, self.r].iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidParameter("theory constants a, b, L, r must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// `L = b·√log(4da/δ)`, the Lipschitz level the regret statement plugs in.
    pub fn implied_lipschitz(&self, dim: usize) -> Result<f64> {
        let inner = (4.0 * dim as f64 * self.a / self.delta).ln();
        if inner <= 0.0 {
            return Err(Error::InvalidParameter(format!("log(4da/delta) = {inner} must be positive")));
        }
        Ok(self.b * inner.sqrt())
    }
}

/// Mean-error bound `l²√(1+σ⁻²)(L·d·τ/σ + 2√log(4Σl/δ))`; zero when `l = 0`.
pub fn delta_m(lipschitz: f64, count: usize, tau: f64, dim: usize, noise_variance: f64, total_count: usize, delta: f64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let l = count as f64;
    let sigma = noise_variance.sqrt();
    let log_term = (4.0 * total_count.max(count) as f64 / delta).ln();
    l * l * (1.0 + 1.0 / noise_variance).sqrt() * (lipschitz * dim as f64 * tau / sigma + 2.0 * log_term.sqrt())
}

/// Δ_m in the parameterization of the regret bound, with `L = b√log(4da/δ)`.
pub fn delta_m_from_constants(theory: &TheoryParams, count: usize, tau: f64, dim: usize, noise_variance: f64, total_count: usize) -> Result<f64> {
    let lipschitz = theory.implied_lipschitz(dim)?;
    Ok(delta_m(lipschitz, count, tau, dim, noise_variance, total_count, theory.delta))
}

/// Parameters of one randomized check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInstance {
    pub dim: usize,
    pub base_size: usize,
    pub pseudo_count: usize,
    pub tau: f64,
    pub noise_variance: f64,
    pub seed: u64,
    /// Draw observation noise for the base and hypothetical true values.
    pub observation_noise: bool,
}

impl TheoryInstance {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.base_size == 0 {
            return Err(Error::InvalidParameter("instance needs d >= 1 and t >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be positive".into()));
        }
        Ok(())
    }

    /// The `index`-th instance of a seeded family with `t ≤ 12`, `1 ≤ l ≤ 6`, `d ≤ 4`.
    pub fn random(seed: u64, index: u64) -> Self {
        let instance_seed = derive_seed(seed, index);
        let mut rng = substream(instance_seed, Substream::Theory);
        let taus = [0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.2];
        TheoryInstance {
            dim: rng.random_range(1..=4),
            base_size: rng.random_range(1..=12),
            pseudo_count: rng.random_range(1..=6),
            tau: taus[rng.random_range(0..taus.len())],
            noise_variance: 10f64.powf(rng.random_range(-4.0..-1.0)),
            seed: instance_seed,
            observation_noise: true,
        }
    }
}

/// Smooth random function: random-feature approximation of a unit-amplitude
/// squared-exponential GP sample.
#[derive(Debug, Clone)]
pub struct RandomFunction {
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
    weights: Vec<f64>,
}

impl RandomFunction {
    pub fn sample(rng: &mut SeededStream, lengthscales: &[f64], features: usize) -> Self {
        let frequencies = (0..features)
            .map(|_| {
                lengthscales
                    .iter()
                    .map(|l| { let z: f64 = StandardNormal.sample(&mut *rng); z / l })
                    .collect()
            })
            .collect();
        let phases = (0..features).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let weights = (0..features).map(|_| StandardNormal.sample(&mut *rng)).collect();
        RandomFunction {
            frequencies,
            phases,
            weights,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let scale = (2.0 / self.weights.len() as f64).sqrt();
        scale
            * self
                .frequencies
                .iter()
                .zip(&self.phases)
                .zip(&self.weights)
                .map(|((w, b), a)| a * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b).cos())
                .sum::<f64>()
    }

    /// Largest finite-difference slope over a grid of about 4000 points,
    /// an estimate of `sup |∂f/∂x_j|`.
    pub fn lipschitz_estimate(&self, domain: &BoxDomain) -> f64 {
        let d = domain.dim();
        let per_dim = ((4000f64).powf(1.0 / d as f64).floor() as usize).max(3);
        let h = 1e-5;
        let mut best: f64 = 0.0;
        let total = per_dim.pow(d as u32);
        let mut x = vec![0.0; d];
        for idx in 0..total {
            let mut rest = idx;
            for j in 0..d {
                let k = rest % per_dim;
                rest /= per_dim;
                x[j] = domain.lower[j] + domain.width(j) * k as f64 / (per_dim - 1) as f64;
            }
            let f0 = self.eval(&x);
            for j in 0..d {
                let mut y = x.clone();
                y[j] = if y[j] + h <= domain.upper[j] { y[j] + h } else { y[j] - h };
                best = best.max((self.eval(&y) - f0).abs() / h);
            }
        }
        best
    }
}

/// A sampled configuration: model over the base data, pseudo-points with
/// copied values, and the hypothetical true observations at their locations.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub model: GpModel,
    pub pseudo: PseudoPointSet,
    pub true_values: Vec<f64>,
    pub queries: Vec<Vec<f64>>,
    pub function: RandomFunction,
    pub domain: BoxDomain,
}

pub fn sample_configuration(instance: &TheoryInstance) -> Result<Configuration> {
    instance.validate()?;
    let mut rng = substream(instance.seed, Substream::Theory);
    let d = instance.dim;
    let domain = BoxDomain::cube(d, -1.0, 1.0)?;
    let lengthscales: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
    let function = RandomFunction::sample(&mut rng, &lengthscales, 200);
    let sigma = instance.noise_variance.sqrt();
    let noise = |rng: &mut SeededStream| {
        if instance.observation_noise {
            { let z: f64 = StandardNormal.sample(rng); sigma * z }
        } else {
            0.0
        }
    };

    let mut data = Dataset::new(d);
    for _ in 0..instance.base_size {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = function.eval(&x) + noise(&mut rng);
        data.push(x, y)?;
    }
    let pseudo = generate_with_tau(&data, instance.pseudo_count, instance.tau, &domain, &mut rng)?;
    let true_values = pseudo.points.iter().map(|x| function.eval(x) + noise(&mut rng)).collect();

    let mut queries = Vec::with_capacity(QUERIES);
    for k in 0..QUERIES {
        let q: Vec<f64> = if k % 2 == 1 && !pseudo.is_empty() {
            let anchor = &pseudo.points[k % pseudo.len()];
            anchor
                .iter()
                .map(|v| (v + rng.random_range(-0.05..0.05)).clamp(-1.0, 1.0))
                .collect()
        } else {
            (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        queries.push(q);
    }

    let params = KernelParams::new(lengthscales, 1.0, instance.noise_variance)?;
    let model = GpModel::new(params, data, MeanMode::Zero)?;
    Ok(Configuration {
        model,
        pseudo,
        true_values,
        queries,
        function,
        domain,
    })
}

/// Outcome of one check on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub seed: u64,
    pub instance: Option<TheoryInstance>,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub skipped: Option<String>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn skipped(check: &str, instance: &TheoryInstance, reason: String) -> Self {
        CheckReport {
            check: check.to_string(),
            seed: instance.seed,
            instance: Some(*instance),
            passed: true,
            max_error: 0.0,
            tolerance: IDENTITY_TOLERANCE,
            skipped: Some(reason),
            notes: Vec::new(),
        }
    }
}

/// Variance-reduction closed form used by the checks; replaceable so the
/// suite itself can be mutation-tested.
pub type VarianceReductionFn = fn(&PseudoCorrection<'_>, &[f64]) -> Result<f64>;

#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub variance_reduction: VarianceReductionFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks {
            variance_reduction: |c, x| c.variance_reduction(x),
        }
    }
}

fn joint_model(base: &GpModel, pseudo: &PseudoPointSet) -> Result<GpModel> {
    let mut joint = base.data().clone();
    joint.extend_from(&pseudo.to_dataset(base.dim())?)?;
    GpModel::with_offset(base.params().clone(), joint, base.offset())
}

/// Compares `p(x)ᵀMp(x)` with the difference of two independently factorized
/// posteriors at 32 queries.
pub fn check_variance_reduction(instance: &TheoryInstance) -> CheckReport {
    check_variance_reduction_with(instance, &Hooks::default())
}

pub fn check_variance_reduction_with(instance: &TheoryInstance, hooks: &Hooks) -> CheckReport {
    const NAME: &str = "variance_reduction";
    let run = || -> Result<CheckReport> {
        let config = sample_configuration(instance)?;
        let correction = PseudoCorrection::new(&config.model, &config.pseudo)?;
        let joint = joint_model(&config.model, &config.pseudo)?;
        let mut max_error: f64 = 0.0;
        let mut min_reduction = f64::INFINITY;
        for q in &config.queries {
            let closed = (hooks.variance_reduction)(&correction, q)?;
            let oracle = config.model.posterior_raw(q)?.variance - joint.posterior_raw(q)?.variance;
            max_error = max_error.max((closed - oracle).abs());
            min_reduction = min_reduction.min(closed);
        }
        let mut notes = vec![format!("min reduction {min_reduction:e}")];
        if joint.jitter() > 0.0 || correction.is_empty() {
            notes.push(format!("joint jitter {:e}", joint.jitter()));
        }
        Ok(CheckReport {
            check: NAME.into(),
            seed: instance.seed,
            instance: Some(*instance),
            passed: max_error <= IDENTITY_TOLERANCE && min_reduction >= DELTA_V_FLOOR,
            max_error,
            tolerance: IDENTITY_TOLERANCE,
            skipped: None,
            notes,
        })
    };
    run().unwrap_or_else(|e| CheckReport::skipped(NAME, instance, e.to_string()))
}

/// Compares `−p(x)ᵀM(ŷ' − y')` with the difference of two explicit joint
/// posteriors, and checks the `|p_j|` and `|M_{j,i}|` bounds.
pub fn check_mean_shift(instance: &TheoryInstance) -> CheckReport {
    const NAME: &str = "mean_shift";
    let run = || -> Result<CheckReport> {
        let config = sample_configuration(instance)?;
        let correction = PseudoCorrection::new(&config.model, &config.pseudo)?;
        let copied = joint_model(&config.model, &config.pseudo)?;
        let truthful = joint_model(&config.model, &config.pseudo.with_values(config.true_values.clone())?)?;
        let difference: Vec<f64> = config
            .pseudo
            .values
            .iter()
            .zip(&config.true_values)
            .map(|(a, b)| a - b)
            .collect();

        let noise = instance.noise_variance;
        let p_limit = (1.0 + noise).sqrt() + P_BOUND_SLACK;
        let m_limit = 1.0 / noise + M_BOUND_SLACK;
        let mut max_error: f64 = 0.0;
        let mut max_p: f64 = 0.0;
        for q in &config.queries {
            let closed = correction.mean_shift(q, &difference)?;
            let oracle = copied.posterior_raw(q)?.mean - truthful.posterior_raw(q)?.mean;
            max_error = max_error.max((closed - oracle).abs());
            if !correction.is_empty() {
                max_p = max_p.max(correction.p_vector(q)?.amax());
            }
        }
        let max_m = if correction.is_empty() { 0.0 } else { correction.m_matrix().amax() };
        let bounds_ok = max_p <= p_limit && max_m <= m_limit;
        Ok(CheckReport {
            check: NAME.into(),
            seed: instance.seed,
            instance: Some(*instance),
            passed: max_error <= IDENTITY_TOLERANCE && bounds_ok,
            max_error,
            tolerance: IDENTITY_TOLERANCE,
            skipped: None,
            notes: vec![
                format!("max |p_j| {max_p:.6} (limit {p_limit:.6})"),
                format!("max |M_ji| {max_m:.6e} (limit {m_limit:.6e})"),
            ],
        })
    };
    run().unwrap_or_else(|e| CheckReport::skipped(NAME, instance, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMReport {
    pub trials: usize,
    pub exceedances: usize,
    pub fraction: f64,
    pub threshold: f64,
    pub passed: bool,
    pub mean_lipschitz: f64,
    pub max_realized: f64,
    pub min_bound: f64,
    pub skipped: usize,
}

/// Monte-Carlo frequency with which the realized mean error exceeds
/// `Δ_m(L, l, τ)`, with `L` estimated from each sampled function.
pub fn check_delta_m_bound(instance: &TheoryInstance, trials: usize, theory: &TheoryParams, threshold: f64) -> Result<DeltaMReport> {
    instance.validate()?;
    theory.validate()?;
    let mut exceedances = 0;
    let mut skipped = 0;
    let mut lipschitz_sum = 0.0;
    let mut max_realized: f64 = 0.0;
    let mut min_bound = f64::INFINITY;
    for k in 0..trials {
        let trial = TheoryInstance {
            seed: derive_seed(instance.seed, k as u64),
            ..*instance
        };
        let Ok(config) = sample_configuration(&trial) else {
            skipped += 1;
            continue;
        };
        let Ok(correction) = PseudoCorrection::new(&config.model, &config.pseudo) else {
            skipped += 1;
            continue;
        };
        let difference: Vec<f64> = config
            .pseudo
            .values
            .iter()
            .zip(&config.true_values)
            .map(|(a, b)| a - b)
            .collect();
        let lipschitz = config.function.lipschitz_estimate(&config.domain);
        lipschitz_sum += lipschitz;
        let bound = delta_m(
            lipschitz,
            instance.pseudo_count,
            instance.tau,
            instance.dim,
            instance.noise_variance,
            instance.pseudo_count,
            theory.delta,
        );
        min_bound = min_bound.min(bound);
        let mut realized: f64 = 0.0;
        for q in &config.queries {
            realized = realized.max(correction.mean_shift(q, &difference)?.abs());
        }
        max_realized = max_realized.max(realized);
        if realized > bound {
            exceedances += 1;
        }
    }
    let evaluated = trials - skipped;
    let fraction = if evaluated == 0 { 0.0 } else { exceedances as f64 / evaluated as f64 };
    Ok(DeltaMReport {
        trials,
        exceedances,
        fraction,
        threshold,
        passed: fraction <= threshold,
        mean_lipschitz: if evaluated == 0 { 0.0 } else { lipschitz_sum / evaluated as f64 },
        max_realized,
        min_bound,
        skipped,
    })
}

/// Everything `verify` runs, in machine-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub instances: usize,
    pub checks: Vec<CheckSummary>,
    pub failures: Vec<CheckReport>,
    pub delta_m: DeltaMReport,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub runs: usize,
    pub skipped: usize,
    pub failed: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

fn summarize_check(name: &str, reports: &[CheckReport], tolerance: f64) -> CheckSummary {
    CheckSummary {
        check: name.to_string(),
        runs: reports.len(),
        skipped: reports.iter().filter(|r| r.skipped.is_some()).count(),
        failed: reports.iter().filter(|r| !r.passed).count(),
        max_error: reports.iter().map(|r| r.max_error).fold(0.0, f64::max),
        tolerance,
    }
}

/// Runs the identity checks on `instances` seeded random instances, the Δ_m
/// parameterization identity and monotonicity, and the Δ_m Monte-Carlo check.
pub fn run_suite(seed: u64, instances: usize, hooks: &Hooks) -> SuiteReport {
    let family: Vec<TheoryInstance> = (0..instances as u64).map(|i| TheoryInstance::random(seed, i)).collect();
    let variance: Vec<CheckReport> = family.iter().map(|inst| check_variance_reduction_with(inst, hooks)).collect();
    let mean: Vec<CheckReport> = family.iter().map(check_mean_shift).collect();
    let algebra = check_delta_m_algebra();

    let theory = TheoryParams {
        a: 1.0,
        b: 1.0,
        lipschitz: 1.0,
        r: 2.0,
        delta: 0.05,
    };
    let mc_instance = TheoryInstance {
        dim: 2,
        base_size: 6,
        pseudo_count: 2,
        tau: 0.01,
        noise_variance: 1e-2,
        seed: derive_seed(seed, u64::MAX),
        observation_noise: true,
    };
    let delta_m = check_delta_m_bound(&mc_instance, 200, &theory, 0.05).expect("fixed instance is valid");

    let mut failures: Vec<CheckReport> = variance
        .iter()
        .chain(&mean)
        .chain(std::iter::once(&algebra))
        .filter(|r| !r.passed)
        .cloned()
        .collect();
    failures.sort_by_key(|r| r.seed);
    let checks = vec![
        summarize_check("variance_reduction", &variance, IDENTITY_TOLERANCE),
        summarize_check("mean_shift", &mean, IDENTITY_TOLERANCE),
        summarize_check("delta_m_algebra", std::slice::from_ref(&algebra), 1e-12),
    ];
    let passed = failures.is_empty() && delta_m.passed;
    SuiteReport {
        seed,
        instances,
        checks,
        failures,
        delta_m,
        passed,
    }
}

/// Δ_m identities: the regret-bound form equals the Lipschitz form with
/// `L = b√log(4da/δ)`, and Δ_m is non-decreasing in τ and in l.
pub fn check_delta_m_algebra() -> CheckReport {
    let theory = TheoryParams {
        a: 2.0,
        b: 1.5,
        lipschitz: 1.0,
        r: 2.0,
        delta: 0.1,
    };
    let mut max_error: f64 = 0.0;
    let mut monotone = true;
    for dim in 1..=4 {
        let lipschitz = theory.implied_lipschitz(dim).expect("valid constants");
        for count in 0..8 {
            let mut previous = f64::NEG_INFINITY;
            for tau in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0] {
                let a = delta_m_from_constants(&theory, count, tau, dim, 1e-3, 40).expect("valid constants");
                let b = delta_m(lipschitz, count, tau, dim, 1e-3, 40, theory.delta);
                max_error = max_error.max((a - b).abs() / b.abs().max(1.0));
                monotone &= a >= previous;
                previous = a;
                let more = delta_m(lipschitz, count + 1, tau, dim, 1e-3, 40, theory.delta);
                monotone &= more >= b;
            }
        }
    }
    CheckReport {
        check: "delta_m_algebra".into(),
        seed: 0,
        instance: None,
        passed: max_error <= 1e-12 && monotone,
        max_error,
        tolerance: 1e-12,
        skipped: None,
        notes: vec![format!("monotone in tau and l: {monotone}")],
    }
}
