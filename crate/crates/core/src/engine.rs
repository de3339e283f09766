//! The BO and BO-PP loops with regret tracking.

use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{beta_schedule, AcquisitionKind, AcquisitionSpec, BetaSchedule};
use crate::error::{Error, Result};
use crate::gp::{fit, Dataset, FitConfig, GpModel, KernelParams, MeanMode};
use crate::objectives::{NoiseModel, Objective};
use crate::optimizer::{maximize, DirectConfig};
use crate::pseudo::{generate, PseudoCorrection, PseudoPointSet, PseudoSchedule};
use crate::rng::{substream, Substream};
use crate::theory::delta_m_from_constants;

pub use crate::theory::TheoryParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub budget: usize,
    pub initial_points: usize,
    pub acquisition: AcquisitionKind,
    pub beta: BetaSchedule,
    /// Confidence level of the UCB schedule.
    pub delta: f64,
    pub pseudo: PseudoSchedule,
    pub seed: u64,
    /// Refit hyper-parameters every this many iterations.
    pub fit_every: usize,
    /// Noise variance assumed by the model.
    pub noise_variance: f64,
    /// Variance of the noise added to each objective evaluation.
    pub observation_noise: f64,
    /// Subtract the observation mean before modelling and fit the amplitude.
    pub standardize: bool,
    /// Unit amplitude, zero prior mean; required for regret-bound evaluation.
    pub theory_mode: bool,
    pub initial_lengthscale: f64,
    pub fit_starts: usize,
    pub fit_iterations: usize,
    /// Estimate the model noise too, never below `noise_variance`.
    pub fit_noise: bool,
    pub direct: DirectConfig,
}

impl RunConfig {
    /// Protocol defaults: 5 initial points, 100 iterations, σ² = 1e-4.
    pub fn experiment(acquisition: AcquisitionKind, tau0: f64, dim: usize, seed: u64) -> Result<Self> {
        let mut direct = DirectConfig::for_dim(dim);
        direct.local_polish = true;
        let config = RunConfig {
            budget: 100,
            initial_points: 5,
            acquisition,
            beta: BetaSchedule::Experiment,
            delta: 0.1,
            pseudo: PseudoSchedule::new(tau0, 2.0)?,
            seed,
            fit_every: 1,
            noise_variance: 1e-4,
            observation_noise: 1e-4,
            standardize: true,
            theory_mode: false,
            initial_lengthscale: 0.5,
            fit_starts: 8,
            fit_iterations: 60,
            fit_noise: false,
            direct,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidParameter("budget must be at least 1".into()));
        }
        if self.fit_every == 0 {
            return Err(Error::InvalidParameter("fit_every must be at least 1".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "model noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        if !(self.observation_noise.is_finite() && self.observation_noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "observation noise variance must be >= 0, got {}",
                self.observation_noise
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.initial_lengthscale.is_finite() && self.initial_lengthscale > 0.0) {
            return Err(Error::InvalidParameter("initial lengthscale must be positive".into()));
        }
        if self.direct.max_evaluations == 0 {
            return Err(Error::InvalidParameter("optimizer needs at least one evaluation".into()));
        }
        self.pseudo.validate()
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig {
            starts: self.fit_starts,
            max_iterations: self.fit_iterations,
            fit_amplitude: !self.theory_mode,
            fit_noise: self.fit_noise && !self.theory_mode,
            mean_mode: self.mean_mode(),
            noise_bounds: (self.noise_variance, 1e4),
            ..FitConfig::default()
        }
    }

    fn mean_mode(&self) -> MeanMode {
        if self.standardize && !self.theory_mode {
            MeanMode::Centered
        } else {
            MeanMode::Zero
        }
    }
}

/// One BO iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub point: Vec<f64>,
    /// Noisy observation fed to the model.
    pub observation: f64,
    pub true_value: f64,
    pub instant_regret: Option<f64>,
    pub simple_regret: Option<f64>,
    pub cumulative_regret: Option<f64>,
    /// Variance removed by the pseudo-points at the selected point.
    pub delta_v: f64,
    pub beta: Option<f64>,
    /// Acquisition-model posterior variance at the selected point.
    pub posterior_variance: f64,
    /// Running sum of `½log(1 + σ⁻²σ̂²_{t−1}(x_t))`.
    pub info_gain: f64,
    pub pseudo_count: usize,
    pub tau: f64,
    pub params: KernelParams,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub dim: usize,
    pub noise_variance: f64,
    pub theory_mode: bool,
    pub optimum: Option<f64>,
    pub initial: Dataset,
    pub initial_true: Vec<f64>,
    pub steps: Vec<TraceStep>,
}

impl RegretTrace {
    /// Equality of everything except wall-time.
    pub fn same_path(&self, other: &RegretTrace) -> bool {
        let strip = |t: &RegretTrace| {
            let mut t = t.clone();
            t.steps.iter_mut().for_each(|s| s.ms = 0.0);
            t
        };
        strip(self) == strip(other)
    }

    pub fn final_simple_regret(&self) -> Option<f64> {
        self.steps.last().and_then(|s| s.simple_regret)
    }

    pub fn best_true_value(&self) -> Option<f64> {
        self.steps.iter().map(|s| s.true_value).reduce(f64::max)
    }

    pub fn pseudo_counts(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.pseudo_count).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.tau).collect()
    }
}

/// Plain BO. The pseudo-point schedule must be disabled.
pub fn run_bo(objective: &dyn Objective, config: &RunConfig) -> Result<RegretTrace> {
    if config.pseudo.is_enabled() {
        return Err(Error::InvalidParameter("run_bo requires a disabled pseudo-point schedule".into()));
    }
    run_loop(objective, config)
}

/// BO with pseudo-points. A disabled schedule reproduces `run_bo` exactly.
pub fn run_bopp(objective: &dyn Objective, config: &RunConfig) -> Result<RegretTrace> {
    run_loop(objective, config)
}

struct Truth {
    value: f64,
    observation: f64,
}

fn evaluate(objective: &dyn Objective, noise: &mut NoiseModel, x: &[f64]) -> Result<Truth> {
    if !objective.domain().contains(x) {
        return Err(Error::OutOfDomain { point: x.to_vec() });
    }
    let value = objective.evaluate_true(x)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: x.to_vec(),
            value,
        });
    }
    Ok(Truth {
        value,
        observation: value + noise.sample(),
    })
}

fn run_loop(objective: &dyn Objective, config: &RunConfig) -> Result<RegretTrace> {
    config.validate()?;
    let domain = objective.domain().clone();
    let dim = domain.dim();
    let mut design_rng = substream(config.seed, Substream::InitialDesign);
    let mut noise = NoiseModel::new(config.observation_noise, substream(config.seed, Substream::ObservationNoise))?;
    let mut pseudo_rng = substream(config.seed, Substream::PseudoSigns);
    let mut fit_rng = substream(config.seed, Substream::Multistart);
    let fit_config = config.fit_config();
    let mean_mode = config.mean_mode();
    let optimum = objective.optimum_value();

    let mut data = Dataset::new(dim);
    let mut initial_true = Vec::with_capacity(config.initial_points);
    for _ in 0..config.initial_points {
        let x: Vec<f64> = (0..dim)
            .map(|j| domain.lower[j] + design_rng.random::<f64>() * domain.width(j))
            .collect();
        let truth = evaluate(objective, &mut noise, &x)?;
        initial_true.push(truth.value);
        data.push(x, truth.observation)?;
    }
    let initial = data.clone();

    let mut params = KernelParams::new(vec![config.initial_lengthscale; dim], 1.0, config.noise_variance)?;
    if !config.theory_mode && !data.is_empty() {
        let offset = mean_mode.offset(&data);
        let spread = data.observations().iter().map(|y| (y - offset).powi(2)).sum::<f64>() / data.len() as f64;
        if spread > 0.0 && spread.is_finite() {
            params.amplitude = spread;
        }
    }

    let mut steps: Vec<TraceStep> = Vec::with_capacity(config.budget);
    let mut simple: Option<f64> = None;
    let mut cumulative = 0.0;
    let mut info_gain = 0.0;
    for t in 1..=config.budget {
        let started = Instant::now();
        if !data.is_empty() && (t - 1) % config.fit_every == 0 {
            match fit(&data, &params, &fit_config, &mut fit_rng) {
                Ok(fitted) => params = fitted,
                Err(e) => warn!("hyper-parameter fit failed at iteration {t}, keeping previous values: {e}"),
            }
        }
        let model = GpModel::new(params.clone(), data.clone(), mean_mode)?;
        let pseudo = if config.pseudo.is_enabled() && !data.is_empty() {
            generate(&data, &config.pseudo, &domain, &mut pseudo_rng)?
        } else {
            PseudoPointSet::empty()
        };
        let acquisition_model = if pseudo.is_empty() {
            model.clone()
        } else {
            model.augment(&pseudo.to_dataset(dim)?)?
        };

        let incumbent = data.best_observation().unwrap_or(0.0);
        let beta = beta_schedule(t, dim, config.delta, config.beta)?;
        let spec = AcquisitionSpec::new(config.acquisition, incumbent, beta)?;
        let choice = maximize(|x| spec.evaluate(acquisition_model.posterior(x)?), &domain, &config.direct)?;
        let x = choice.argmax;

        let delta_v = if pseudo.is_empty() {
            0.0
        } else {
            PseudoCorrection::new(&model, &pseudo)?.variance_reduction(&x)?
        };
        let posterior_variance = acquisition_model.posterior(&x)?.variance;
        info_gain += 0.5 * (posterior_variance / params.noise_variance).ln_1p();

        let truth = evaluate(objective, &mut noise, &x)?;
        let instant = optimum.map(|opt| opt - truth.value);
        if let Some(r) = instant {
            cumulative += r;
            simple = Some(simple.map_or(r, |s: f64| s.min(r)));
        }
        data.push(x.clone(), truth.observation)?;
        steps.push(TraceStep {
            iteration: t,
            point: x,
            observation: truth.observation,
            true_value: truth.value,
            instant_regret: instant,
            simple_regret: simple,
            cumulative_regret: instant.map(|_| cumulative),
            delta_v,
            beta: (config.acquisition == AcquisitionKind::Ucb).then_some(beta),
            posterior_variance,
            info_gain,
            pseudo_count: pseudo.len(),
            tau: pseudo.tau,
            params: params.clone(),
            ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(RegretTrace {
        dim,
        noise_variance: config.noise_variance,
        theory_mode: config.theory_mode,
        optimum,
        initial,
        initial_true,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    pub bound: f64,
    pub delta_m_terms: Vec<f64>,
    /// `½Σ log(1 + σ⁻²σ̂²_{t−1}(x_t))`, standing in for γ′_T.
    pub info_gain: f64,
    pub beta_t: f64,
    pub c: f64,
}

/// `√(C·T·β_T·γ′) + 2 + 2Σ_{t=1}^{T} Δ_m(l_{t−1}, τ_{t−1})` for a completed
/// theory-mode trace. `counts[t−1]` and `taus[t−1]` are the pseudo-point
/// count and distance used at iteration `t`.
pub fn evaluate_regret_bound(trace: &RegretTrace, theory: &TheoryParams, counts: &[usize], taus: &[f64]) -> Result<RegretBound> {
    if !trace.theory_mode {
        return Err(Error::NotTheoryMode);
    }
    theory.validate()?;
    let horizon = trace.steps.len();
    if horizon == 0 {
        return Err(Error::InvalidParameter("regret bound needs at least one iteration".into()));
    }
    for (what, got) in [("pseudo-point counts", counts.len()), ("pseudo-point distances", taus.len())] {
        if got != horizon {
            return Err(Error::LengthMismatch {
                what,
                expected: horizon,
                got,
            });
        }
    }
    let noise = trace.noise_variance;
    let c = 8.0 / (1.0 / noise).ln_1p();
    let beta_t = beta_schedule(
        horizon,
        trace.dim,
        theory.delta,
        BetaSchedule::Bound {
            a: theory.a,
            b: theory.b,
            r: theory.r,
        },
    )?;
    let total: usize = counts.iter().sum();
    let delta_m_terms = counts
        .iter()
        .zip(taus)
        .map(|(&l, &tau)| delta_m_from_constants(theory, l, tau, trace.dim, noise, total))
        .collect::<Result<Vec<f64>>>()?;
    let info_gain = trace.steps.last().map_or(0.0, |s| s.info_gain);
    let bound = (c * horizon as f64 * beta_t * info_gain).sqrt() + 2.0 + 2.0 * delta_m_terms.iter().sum::<f64>();
    Ok(RegretBound {
        bound,
        delta_m_terms,
        info_gain,
        beta_t,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_synthetic;

    fn short(kind: AcquisitionKind, tau0: f64, seed: u64) -> RunConfig {
        let mut c = RunConfig::experiment(kind, tau0, 2, seed).unwrap();
        c.budget = 8;
        c.fit_starts = 2;
        c.fit_iterations = 15;
        c.direct.max_evaluations = 150;
        c
    }

    #[test]
    fn empty_prior_picks_center() {
        let f = make_synthetic("dropwave").unwrap();
        let mut c = short(AcquisitionKind::Ucb, 0.0, 1);
        c.budget = 1;
        c.initial_points = 0;
        let trace = run_bo(&f, &c).unwrap();
        assert_eq!(trace.steps[0].point, vec![0.0, 0.0]);
    }

    #[test]
    fn run_bo_rejects_enabled_schedule() {
        let f = make_synthetic("griewank").unwrap();
        assert!(run_bo(&f, &short(AcquisitionKind::Ei, 0.01, 1)).is_err());
    }

    #[test]
    fn pseudo_counts_follow_data_size() {
        let f = make_synthetic("rastrigin").unwrap();
        let trace = run_bopp(&f, &short(AcquisitionKind::Ucb, 0.01, 3)).unwrap();
        for s in &trace.steps {
            assert_eq!(s.pseudo_count, 5 + s.iteration - 1);
            assert!(s.delta_v >= 0.0);
        }
    }

    #[test]
    fn deterministic_and_degenerate_schedule() {
        let f = make_synthetic("griewank").unwrap();
        let c = short(AcquisitionKind::Pi, 0.0, 9);
        let a = run_bo(&f, &c).unwrap();
        let b = run_bopp(&f, &c).unwrap();
        assert!(a.same_path(&b));
        assert!(a.same_path(&run_bo(&f, &c).unwrap()));
    }

    #[test]
    fn regret_bookkeeping() {
        let f = make_synthetic("dropwave").unwrap();
        let trace = run_bopp(&f, &short(AcquisitionKind::Ei, 0.001, 4)).unwrap();
        let mut sum = 0.0;
        let mut prev_info = 0.0;
        for s in &trace.steps {
            sum += s.instant_regret.unwrap();
            assert_eq!(s.cumulative_regret.unwrap(), sum);
            assert!(s.info_gain >= prev_info);
            prev_info = s.info_gain;
        }
    }

    #[test]
    fn bound_requires_theory_mode() {
        let f = make_synthetic("dropwave").unwrap();
        let mut c = short(AcquisitionKind::Ucb, 0.0, 2);
        c.budget = 2;
        let trace = run_bo(&f, &c).unwrap();
        let theory = TheoryParams {
            a: 1.0,
            b: 1.0,
            lipschitz: 1.0,
            r: 2.0,
            delta: 0.1,
        };
        assert!(matches!(
            evaluate_regret_bound(&trace, &theory, &[0, 0], &[0.0, 0.0]),
            Err(Error::NotTheoryMode)
        ));
    }
}
