//! Tree-structured Parzen estimator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{Assignment, ParamKind, ParamSpec};
use super::{random_assignment, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Share of completed trials forming the good group.
    pub gamma: f64,
    /// Trials drawn uniformly before the density model kicks in.
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
        }
    }
}

/// Size of the good group for `m` completed trials.
pub fn good_group_size(m: usize, gamma: f64) -> usize {
    ((gamma * m as f64).ceil() as usize).clamp(1, m)
}

/// Mixture of Gaussians truncated to `[0, 1]` with one shared bandwidth, plus a uniform prior
/// component carrying the weight of one observation.
#[derive(Debug, Clone)]
struct Kde {
    centers: Vec<f64>,
    bandwidth: f64,
    /// Probability mass of each kernel inside `[0, 1]`.
    mass: Vec<f64>,
}

impl Kde {
    /// Scott-rule bandwidth `sd * n^(-1/5)`, clipped below at `1 / min(100, n + 1)` so a tight
    /// cluster cannot collapse the search. `None` when fewer than two points or zero spread.
    fn fit(points: &[f64]) -> Option<Self> {
        let n = points.len();
        if n < 2 {
            return None;
        }
        let mean = points.iter().sum::<f64>() / n as f64;
        let var = points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let scott = var.sqrt() * (n as f64).powf(-0.2);
        if !(scott > 1e-12) {
            return None;
        }
        let bandwidth = scott.max(1.0 / (n + 1).min(100) as f64);
        let mass = points
            .iter()
            .map(|&c| (normal_cdf((1.0 - c) / bandwidth) - normal_cdf(-c / bandwidth)).max(1e-300))
            .collect();
        Some(Self {
            centers: points.to_vec(),
            bandwidth,
            mass,
        })
    }

    fn prior_weight(&self) -> f64 {
        1.0 / (self.centers.len() + 1) as f64
    }

    fn density(&self, u: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .zip(&self.mass)
            .map(|(&c, &m)| normal_pdf((u - c) / h) / (h * m))
            .sum();
        let w = self.prior_weight();
        w + (1.0 - w) * sum / self.centers.len() as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if rng.random::<f64>() < self.prior_weight() {
            return rng.random();
        }
        let k = rng.random_range(0..self.centers.len());
        let c = self.centers[k];
        for _ in 0..1000 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let u = c + self.bandwidth * z;
            if (0.0..=1.0).contains(&u) {
                return u;
            }
        }
        c
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Per-parameter density model for one group.
enum Density {
    Numeric(Kde),
    /// Add-one smoothed category probabilities.
    Categorical(Vec<f64>),
    /// Degenerate numeric group: uniform on `[0, 1]`.
    Uniform,
}

impl Density {
    fn build(spec: &ParamSpec, trials: &[&Trial]) -> Self {
        match &spec.kind {
            ParamKind::Categorical { choices } => {
                let mut counts = vec![1.0; choices.len()];
                for t in trials {
                    if let Some(k) = t.params.get(&spec.name).and_then(|v| spec.choice_index(v)) {
                        counts[k] += 1.0;
                    }
                }
                let total: f64 = counts.iter().sum();
                Density::Categorical(counts.into_iter().map(|c| c / total).collect())
            }
            _ => {
                let points: Vec<f64> = trials
                    .iter()
                    .filter_map(|t| t.params.get(&spec.name).and_then(|v| spec.to_unit(v)))
                    .map(|u| u.clamp(0.0, 1.0))
                    .collect();
                Kde::fit(&points).map_or(Density::Uniform, Density::Numeric)
            }
        }
    }

    fn log_density(&self, u: f64, category: usize) -> f64 {
        match self {
            Density::Numeric(kde) => kde.density(u).max(1e-300).ln(),
            Density::Categorical(p) => p[category].ln(),
            Density::Uniform => 0.0,
        }
    }
}

/// One TPE proposal. Falls back to a uniform draw during startup.
pub(crate) fn sample_tpe(
    space: &[ParamSpec],
    history: &[Trial],
    config: &TpeConfig,
    rng: &mut ChaCha8Rng,
) -> Assignment {
    let mut completed: Vec<&Trial> = history.iter().filter(|t| t.value.is_some()).collect();
    if history.len() < config.n_startup || completed.is_empty() {
        return random_assignment(space, rng);
    }
    // best first; ties keep the earlier trial
    completed.sort_by(|a, b| {
        b.value
            .unwrap()
            .total_cmp(&a.value.unwrap())
            .then(a.index.cmp(&b.index))
    });
    let n_good = good_group_size(completed.len(), config.gamma);
    let (good, bad) = completed.split_at(n_good);

    let models: Vec<(Density, Density)> = space
        .iter()
        .map(|spec| (Density::build(spec, good), Density::build(spec, bad)))
        .collect();
    for (spec, (l, _)) in space.iter().zip(&models) {
        if matches!(l, Density::Uniform) {
            log::debug!("TPE: good-group density for {} is degenerate; sampling it uniformly", spec.name);
        }
    }

    let mut best: Option<(f64, Assignment)> = None;
    for _ in 0..config.n_candidates.max(1) {
        let mut candidate = Assignment::new();
        let mut score = 0.0;
        for (spec, (l, g)) in space.iter().zip(&models) {
            let (value, u, cat) = match l {
                Density::Numeric(kde) => {
                    let u = kde.sample(rng);
                    (spec.from_unit(u), u, 0)
                }
                Density::Categorical(p) => {
                    let k = draw_category(p, rng);
                    let value = match &spec.kind {
                        ParamKind::Categorical { choices } => crate::models::ParamValue::Str(choices[k].clone()),
                        _ => unreachable!("categorical density for a numeric parameter"),
                    };
                    (value, 0.0, k)
                }
                Density::Uniform => {
                    let u: f64 = rng.random();
                    (spec.from_unit(u), u, 0)
                }
            };
            score += l.log_density(u, cat) - g.log_density(u, cat);
            candidate.insert(spec.name.clone(), value);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, candidate));
        }
    }
    best.expect("at least one candidate").1
}

fn draw_category(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if r < acc {
            return k;
        }
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_group_rounds_up() {
        assert_eq!(good_group_size(8, 0.25), 2);
        assert_eq!(good_group_size(9, 0.25), 3);
        assert_eq!(good_group_size(3, 0.25), 1);
        assert_eq!(good_group_size(5, 1.0), 5);
    }

    #[test]
    fn truncated_kde_integrates_to_one() {
        let kde = Kde::fit(&[0.05, 0.3, 0.95, 0.5]).unwrap();
        let steps = 20_000;
        let integral: f64 = (0..steps)
            .map(|k| kde.density((k as f64 + 0.5) / steps as f64))
            .sum::<f64>()
            / steps as f64;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
        assert!(Kde::fit(&[0.4]).is_none());
        assert!(Kde::fit(&[0.4, 0.4]).is_none());
    }
}
