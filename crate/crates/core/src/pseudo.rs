//! Pseudo-point generation and the closed-form corrections they induce.
//!
//! A pseudo-point sits at coordinate-wise distance τ from an observed input
//! and carries a copy of that input's observation. Adding pseudo-points only
//! changes the posterior; hyper-parameters stay fitted on true data.
//!
//! With `K̃` the covariances between true and pseudo inputs and `K'` those
//! among pseudo inputs,
//!
//! ```text
//! p(x) = K̃ᵀ(K + σ²I)⁻¹k(x) − k'(x)
//! M    = (K' − K̃ᵀ(K + σ²I)⁻¹K̃ + σ²I)⁻¹
//! ```
//!
//! the variance drops by `p(x)ᵀMp(x)` and replacing the copied values `ŷ'`
//! by other values `y'` moves the mean by `−p(x)ᵀM(ŷ' − y')`. Both are
//! evaluated through triangular solves against the base factor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{forward_substitute, kernel_unchecked, Dataset, GpModel, Prediction};
use crate::optimizer::BoxDomain;

/// Per-coordinate coincidence tolerance for the collision redraw.
const COLLISION_TOLERANCE: f64 = 1e-12;
const COLLISION_REDRAWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoCount {
    /// One pseudo-point per observed point, `l_t = |D_t|`.
    PerObservation,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoSchedule {
    /// Base distance τ₀; zero disables pseudo-points.
    pub tau0: f64,
    pub count: PseudoCount,
    /// Width `r` of each domain dimension.
    pub domain_width: f64,
}

impl PseudoSchedule {
    pub fn new(tau0: f64, domain_width: f64) -> Result<Self> {
        let schedule = PseudoSchedule {
            tau0,
            count: PseudoCount::PerObservation,
            domain_width,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn disabled() -> Self {
        PseudoSchedule {
            tau0: 0.0,
            count: PseudoCount::PerObservation,
            domain_width: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0.is_finite() && self.tau0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau0 must be non-negative, got {}", self.tau0)));
        }
        if !(self.domain_width.is_finite() && self.domain_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "domain width must be positive, got {}",
                self.domain_width
            )));
        }
        Ok(())
    }

    pub fn is_enabled(&self) -> bool {
        self.tau0 > 0.0 && self.count != PseudoCount::Fixed(0)
    }

    /// `l_t` for a dataset of `observed` points.
    pub fn count_for(&self, observed: usize) -> usize {
        if !self.is_enabled() {
            return 0;
        }
        match self.count {
            PseudoCount::PerObservation => observed,
            PseudoCount::Fixed(l) => l,
        }
    }

    /// `τ_t = r·τ₀ / (d·l_t)`; zero when no pseudo-points are generated.
    pub fn tau_for(&self, count: usize, dim: usize) -> f64 {
        if count == 0 {
            0.0
        } else {
            self.domain_width * self.tau0 / (dim as f64 * count as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPointSet {
    pub points: Vec<Vec<f64>>,
    /// Copied parent observations `ŷ'`.
    pub values: Vec<f64>,
    /// Index of each pseudo-point's parent in the base dataset.
    pub parents: Vec<usize>,
    pub tau: f64,
    /// Coordinates that had to be clipped to the domain boundary.
    pub clipped: Vec<Vec<bool>>,
}

impl PseudoPointSet {
    pub fn empty() -> Self {
        PseudoPointSet {
            points: Vec::new(),
            values: Vec::new(),
            parents: Vec::new(),
            tau: 0.0,
            clipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_dataset(&self, dim: usize) -> Result<Dataset> {
        Dataset::from_parts(dim, self.points.clone(), self.values.clone())
    }

    /// Same locations, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "pseudo values",
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(PseudoPointSet {
            values,
            ..self.clone()
        })
    }
}

/// Generates `l_t` pseudo-points from `data` following `schedule`.
pub fn generate<R: Rng + ?Sized>(
    data: &Dataset,
    schedule: &PseudoSchedule,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<PseudoPointSet> {
    schedule.validate()?;
    let count = schedule.count_for(data.len());
    let tau = schedule.tau_for(count, data.dim());
    generate_with_tau(data, count, tau, domain, rng)
}

/// Generates `count` pseudo-points at distance `tau`; parent of pseudo-point
/// `i` is observation `i mod |data|`. Every coordinate moves by ±τ with equal
/// probability. A move that leaves the domain is mirrored; if both
/// directions leave, the coordinate is clipped and flagged.
pub fn generate_with_tau<R: Rng + ?Sized>(
    data: &Dataset,
    count: usize,
    tau: f64,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<PseudoPointSet> {
    if count == 0 {
        return Ok(PseudoPointSet {
            tau,
            ..PseudoPointSet::empty()
        });
    }
    if data.is_empty() {
        return Err(Error::InvalidParameter("pseudo-points need at least one observed point".into()));
    }
    if domain.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: domain.dim(),
        });
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be non-negative, got {tau}")));
    }

    let mut set = PseudoPointSet {
        tau,
        ..PseudoPointSet::empty()
    };
    for i in 0..count {
        let parent = i % data.len();
        let origin = &data.points()[parent];
        let mut attempt = displace(origin, tau, domain, rng);
        for _ in 0..COLLISION_REDRAWS {
            let collides = data
                .points()
                .iter()
                .chain(set.points.iter())
                .any(|p| coincident(p, &attempt.0));
            if !collides {
                break;
            }
            attempt = displace(origin, tau, domain, rng);
        }
        let (point, clipped) = attempt;
        set.points.push(point);
        set.clipped.push(clipped);
        set.values.push(data.observations()[parent]);
        set.parents.push(parent);
    }
    Ok(set)
}

fn displace<R: Rng + ?Sized>(origin: &[f64], tau: f64, domain: &BoxDomain, rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    let mut point = Vec::with_capacity(origin.len());
    let mut clipped = Vec::with_capacity(origin.len());
    for (j, &o) in origin.iter().enumerate() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (lo, hi) = (domain.lower[j], domain.upper[j]);
        let inside = |v: f64| v >= lo && v <= hi;
        let forward = o + sign * tau;
        let backward = o - sign * tau;
        if inside(forward) {
            point.push(forward);
            clipped.push(false);
        } else if inside(backward) {
            point.push(backward);
            clipped.push(false);
        } else {
            point.push(forward.clamp(lo, hi));
            clipped.push(true);
        }
    }
    (point, clipped)
}

fn coincident(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= COLLISION_TOLERANCE)
}

/// `p(x)` and `M` for a fixed base model and pseudo-point set.
#[derive(Debug, Clone)]
pub struct PseudoCorrection<'a> {
    model: &'a GpModel,
    points: Vec<Vec<f64>>,
    /// `(L⁻¹K̃)ᵀ`, `l × t`.
    projected: DMatrix<f64>,
    /// Cholesky factor of `M⁻¹`.
    schur_factor: DMatrix<f64>,
}

impl<'a> PseudoCorrection<'a> {
    pub fn new(model: &'a GpModel, pp: &PseudoPointSet) -> Result<Self> {
        for p in &pp.points {
            model.check_point(p)?;
        }
        let (projected, schur_factor, _) = model.extension_blocks(&pp.points)?;
        Ok(PseudoCorrection {
            model,
            points: pp.points.clone(),
            projected,
            schur_factor,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn p_vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.model.check_point(x)?;
        let params = self.model.params();
        let pseudo_cov = DVector::from_iterator(self.len(), self.points.iter().map(|p| kernel_unchecked(p, x, params)));
        if self.model.data().is_empty() {
            return Ok(-pseudo_cov);
        }
        let v = self.model.solve_factor(&self.model.cross_covariance(x));
        Ok(&self.projected * v - pseudo_cov)
    }

    /// `M` materialized through solves against its inverse's factor.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let l = self.len();
        let mut inv_l = DMatrix::identity(l, l);
        self.schur_factor.solve_lower_triangular_mut(&mut inv_l);
        inv_l.transpose() * inv_l
    }

    /// Variance reduction `p(x)ᵀMp(x)`.
    pub fn variance_reduction(&self, x: &[f64]) -> Result<f64> {
        if self.is_empty() {
            self.model.check_point(x)?;
            return Ok(0.0);
        }
        let p = self.p_vector(x)?;
        Ok(forward_substitute(&self.schur_factor, &p).norm_squared())
    }

    /// `−p(x)ᵀM·difference`.
    pub fn mean_shift(&self, x: &[f64], difference: &[f64]) -> Result<f64> {
        if difference.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "value difference",
                expected: self.len(),
                got: difference.len(),
            });
        }
        if self.is_empty() {
            self.model.check_point(x)?;
            return Ok(0.0);
        }
        let p = forward_substitute(&self.schur_factor, &self.p_vector(x)?);
        let diff = forward_substitute(&self.schur_factor, &DVector::from_column_slice(difference));
        Ok(-p.dot(&diff))
    }
}

/// Posterior of `model` conditioned additionally on the pseudo-points.
pub fn augmented_posterior(model: &GpModel, pp: &PseudoPointSet, x: &[f64]) -> Result<Prediction> {
    model.augment(&pp.to_dataset(model.dim())?)?.posterior(x)
}

pub fn variance_reduction(model: &GpModel, pp: &PseudoPointSet, x: &[f64]) -> Result<f64> {
    PseudoCorrection::new(model, pp)?.variance_reduction(x)
}

/// Mean difference between augmenting with the copied values and with
/// `true_values` at the same locations.
pub fn mean_shift(model: &GpModel, pp_hat: &PseudoPointSet, true_values: &[f64], x: &[f64]) -> Result<f64> {
    if true_values.len() != pp_hat.len() {
        return Err(Error::LengthMismatch {
            what: "true values",
            expected: pp_hat.len(),
            got: true_values.len(),
        });
    }
    let difference: Vec<f64> = pp_hat.values.iter().zip(true_values).map(|(a, b)| a - b).collect();
    PseudoCorrection::new(model, pp_hat)?.mean_shift(x, &difference)
}
