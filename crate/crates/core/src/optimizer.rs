//! Box domains and DIRECT (dividing rectangles) global maximization.
//!
//! The search runs in the unit cube. Each rectangle keeps the number of
//! trisections applied to every side, so sizes are exact powers of three and
//! rectangles with the same multiset of levels compare equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidParameter(format!(
                "domain bounds must be non-empty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("invalid domain interval [{lo}, {hi}]")));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        BoxDomain::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, v)| (self.lower[j] + v * self.width(j)).clamp(self.lower[j], self.upper[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub max_evaluations: usize,
    pub max_iterations: usize,
    /// Relative slack ε in the potential-optimality test.
    pub epsilon: f64,
    /// Coordinate-search refinement of the final point (at most 50 of the evaluations).
    pub local_polish: bool,
}

impl DirectConfig {
    /// 200·d evaluations, no polish.
    pub fn for_dim(dim: usize) -> Self {
        DirectConfig {
            max_evaluations: 200 * dim.max(1),
            max_iterations: 10_000,
            epsilon: 1e-4,
            local_polish: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

/// Trisection depth beyond which a side is no longer split.
const MAX_LEVEL: u32 = 30;
const POLISH_BUDGET: usize = 50;

#[derive(Debug, Clone)]
struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
    size: f64,
}

impl Rect {
    fn new(center: Vec<f64>, levels: Vec<u32>, value: f64) -> Self {
        let size = rect_size(&levels);
        Rect {
            center,
            levels,
            value,
            size,
        }
    }
}

/// Half-diagonal of a rectangle, summed over sorted levels so equal
/// multisets give bit-identical sizes.
fn rect_size(levels: &[u32]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    0.5 * sorted.iter().map(|&k| 9f64.powi(-(k as i32))).sum::<f64>().sqrt()
}

struct Evaluator<'a, F> {
    objective: F,
    domain: &'a BoxDomain,
    count: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Evaluator<'_, F> {
    fn eval(&mut self, unit: &[f64]) -> Result<f64> {
        let x = self.domain.from_unit(unit);
        let value = (self.objective)(&x)?;
        self.count += 1;
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { point: x, value });
        }
        if self.best.as_ref().is_none_or(|(_, b)| value > *b) {
            self.best = Some((unit.to_vec(), value));
        }
        Ok(value)
    }
}

/// Maximizes `objective` over `domain`. Deterministic for a given objective
/// and configuration; never evaluates more than `config.max_evaluations` points.
pub fn maximize<F>(objective: F, domain: &BoxDomain, config: &DirectConfig) -> Result<DirectResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if config.max_evaluations == 0 {
        return Err(Error::InvalidParameter("DIRECT needs at least one evaluation".into()));
    }
    let d = domain.dim();
    let polish_budget = if config.local_polish {
        POLISH_BUDGET.min(config.max_evaluations / 4)
    } else {
        0
    };
    let budget = config.max_evaluations - polish_budget;

    let mut ev = Evaluator {
        objective,
        domain,
        count: 0,
        best: None,
    };
    let center = vec![0.5; d];
    let value = ev.eval(&center)?;
    let mut rects = vec![Rect::new(center, vec![0; d], value)];

    let mut iterations = 0;
    'outer: while iterations < config.max_iterations {
        let selected = potentially_optimal(&rects, config.epsilon);
        if selected.is_empty() {
            break;
        }
        iterations += 1;
        for idx in selected {
            let min_level = *rects[idx].levels.iter().min().expect("non-empty");
            if min_level >= MAX_LEVEL {
                continue;
            }
            let dims: Vec<usize> = (0..d).filter(|&j| rects[idx].levels[j] == min_level).collect();
            if ev.count + 2 * dims.len() > budget {
                break 'outer;
            }
            divide(&mut rects, idx, &dims, &mut ev)?;
        }
    }

    if polish_budget > 0 {
        polish(&mut ev, &rects, budget + polish_budget)?;
    }

    let iterations_done = iterations;
    let (best_unit, value) = ev.best.expect("center was evaluated");
    Ok(DirectResult {
        argmax: domain.from_unit(&best_unit),
        value,
        evaluations: ev.count,
        iterations: iterations_done,
    })
}

fn divide<F: FnMut(&[f64]) -> Result<f64>>(
    rects: &mut Vec<Rect>,
    idx: usize,
    dims: &[usize],
    ev: &mut Evaluator<'_, F>,
) -> Result<()> {
    let level = rects[idx].levels[dims[0]];
    let delta = 3f64.powi(-(level as i32 + 1));
    let mut samples = Vec::with_capacity(dims.len());
    for &j in dims {
        let mut plus = rects[idx].center.clone();
        plus[j] += delta;
        let mut minus = rects[idx].center.clone();
        minus[j] -= delta;
        let fp = ev.eval(&plus)?;
        let fm = ev.eval(&minus)?;
        samples.push((j, fp.max(fm), (plus, fp), (minus, fm)));
    }
    // best side first, so the best samples land in the largest pieces
    samples.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (j, _, (plus, fp), (minus, fm)) in samples {
        rects[idx].levels[j] += 1;
        let levels = rects[idx].levels.clone();
        rects[idx].size = rect_size(&levels);
        rects.push(Rect::new(plus, levels.clone(), fp));
        rects.push(Rect::new(minus, levels, fm));
    }
    Ok(())
}

/// Indices of potentially optimal rectangles for maximization: the lower
/// convex hull of (size, −value) from the best rectangle to the largest,
/// filtered by the ε sufficient-decrease test.
fn potentially_optimal(rects: &[Rect], epsilon: f64) -> Vec<usize> {
    // best rectangle per distinct size, first index wins ties
    let mut by_size: Vec<(f64, f64, usize)> = Vec::new();
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| rects[a].size.total_cmp(&rects[b].size).then(a.cmp(&b)));
    for i in order {
        if *rects[i].levels.iter().min().expect("non-empty") >= MAX_LEVEL {
            continue;
        }
        let g = -rects[i].value;
        match by_size.last_mut() {
            Some(last) if last.0 == rects[i].size => {
                if g < last.1 {
                    *last = (rects[i].size, g, i);
                }
            }
            _ => by_size.push((rects[i].size, g, i)),
        }
    }
    if by_size.is_empty() {
        return Vec::new();
    }
    let g_min = by_size.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    // largest size attaining the minimum
    let start = by_size.iter().rposition(|p| p.1 == g_min).expect("minimum exists");

    let mut hull: Vec<(f64, f64, usize)> = Vec::new();
    for &p in &by_size[start..] {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    let threshold = g_min - epsilon * g_min.abs();
    let mut selected = Vec::with_capacity(hull.len());
    for (k, p) in hull.iter().enumerate() {
        let keep = match hull.get(k + 1) {
            None => true,
            Some(next) => {
                let slope = (next.1 - p.1) / (next.0 - p.0);
                p.1 - slope * p.0 <= threshold
            }
        };
        if keep {
            selected.push(p.2);
        }
    }
    selected
}

/// Compass search from the incumbent, accepting strict improvements only.
fn polish<F: FnMut(&[f64]) -> Result<f64>>(ev: &mut Evaluator<'_, F>, rects: &[Rect], limit: usize) -> Result<()> {
    let (mut point, mut value) = ev.best.clone().expect("center was evaluated");
    let finest = rects
        .iter()
        .filter(|r| r.center == point)
        .map(|r| *r.levels.iter().min().expect("non-empty"))
        .max()
        .unwrap_or(0);
    let mut step = 0.5 * 3f64.powi(-(finest as i32 + 1));
    while step > 1e-10 {
        let mut improved = false;
        for j in 0..point.len() {
            for dir in [1.0, -1.0] {
                if ev.count >= limit {
                    return Ok(());
                }
                let mut trial = point.clone();
                trial[j] = (trial[j] + dir * step).clamp(0.0, 1.0);
                if trial[j] == point[j] {
                    continue;
                }
                let v = ev.eval(&trial)?;
                if v > value {
                    point = trial;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval() -> BoxDomain {
        BoxDomain::cube(1, 0.0, 1.0).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![f64::NEG_INFINITY], vec![1.0]).is_err());
        let d = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(d.center(), vec![0.0, 0.0]);
        assert!(d.contains(&[1.0, -1.0]));
        assert!(!d.contains(&[1.0 + 1e-12, 0.0]));
    }

    #[test]
    fn constant_objective_returns_center() {
        let domain = BoxDomain::new(vec![-1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let res = maximize(|_| Ok(1.5), &domain, &DirectConfig::for_dim(2)).unwrap();
        assert_eq!(res.argmax, vec![1.0, 3.0]);
        assert_eq!(res.value, 1.5);
    }

    #[test]
    fn quadratic_in_one_dimension() {
        let cfg = DirectConfig {
            max_evaluations: 500,
            ..DirectConfig::for_dim(1)
        };
        let res = maximize(|x| Ok(-(x[0] - 0.5f64 - 0.123).powi(2)), &unit_interval(), &cfg).unwrap();
        assert!((res.argmax[0] - 0.623).abs() < 1e-3, "{:?}", res.argmax);
        assert!(res.evaluations <= 500);
    }

    #[test]
    fn respects_budget_and_domain() {
        let domain = BoxDomain::new(vec![-2.0, 0.0, 1.0], vec![1.0, 0.5, 5.0]).unwrap();
        for budget in [1, 2, 7, 100, 333] {
            let mut count = 0;
            let cfg = DirectConfig {
                max_evaluations: budget,
                ..DirectConfig::for_dim(3)
            };
            let res = maximize(
                |x| {
                    count += 1;
                    assert!(domain.contains(x));
                    Ok(-(x[0] - 0.3).powi(2) - (x[1] - 0.1).abs() + x[2].sin())
                },
                &domain,
                &cfg,
            )
            .unwrap();
            assert!(count <= budget);
            assert_eq!(count, res.evaluations);
        }
    }

    #[test]
    fn polish_refines_and_stays_in_budget() {
        let cfg = DirectConfig {
            max_evaluations: 120,
            local_polish: true,
            ..DirectConfig::for_dim(2)
        };
        let domain = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let target = [0.3141, -0.2718];
        let f = |x: &[f64]| Ok(-((x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2)));
        let plain = maximize(f, &domain, &DirectConfig { local_polish: false, ..cfg.clone() }).unwrap();
        let polished = maximize(f, &domain, &cfg).unwrap();
        assert!(polished.evaluations <= 120);
        assert!(polished.value >= -1e-4);
        assert!(plain.value <= 0.0);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = maximize(|x| Ok(if x[0] > 0.6 { f64::NAN } else { 0.0 }), &unit_interval(), &DirectConfig::for_dim(1))
            .unwrap_err();
        match err {
            Error::NonFiniteObjective { point, .. } => assert!(point[0] > 0.6),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn deterministic() {
        let domain = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let f = |x: &[f64]| Ok((5.0 * x[0]).sin() * (3.0 * x[1]).cos());
        let a = maximize(f, &domain, &DirectConfig::for_dim(2)).unwrap();
        let b = maximize(f, &domain, &DirectConfig::for_dim(2)).unwrap();
        assert_eq!(a, b);
    }
}
