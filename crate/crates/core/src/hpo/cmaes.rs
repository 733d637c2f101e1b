//! CMA-ES over the numeric parameters, replayed from the trial history.
//!
//! Trials `g*lambda .. (g+1)*lambda` form generation `g`. Each generation's standard-normal
//! draws come from their own seeded stream, so the sampler state at any trial can be rebuilt
//! from the completed generations alone.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{Assignment, ParamSpec};
use super::Trial;
use crate::error::{Result, SurvError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    /// Initial step size in unit-cube coordinates.
    pub sigma0: f64,
    /// Population size; `None` means `4 + floor(3 ln d)`.
    pub population: Option<usize>,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.2,
            population: None,
        }
    }
}

/// Stream offset separating generation draws from per-trial streams.
const GENERATION_STREAM: u64 = 1 << 48;

/// Search distribution after some number of completed generations.
#[derive(Debug, Clone)]
pub struct CmaState {
    pub generation: usize,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    /// Eigenvectors `B` and square roots of eigenvalues `D` of `cov`.
    basis: DMatrix<f64>,
    scales: DVector<f64>,
}

struct Constants {
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Constants {
    fn new(d: usize, lambda: usize) -> Self {
        let n = d as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

pub fn population_size(d: usize, config: &CmaConfig) -> usize {
    config
        .population
        .unwrap_or_else(|| 4 + (3.0 * (d.max(1) as f64).ln()).floor() as usize)
        .max(2)
}

fn numeric_indices(space: &[ParamSpec]) -> Vec<usize> {
    space
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_numeric())
        .map(|(i, _)| i)
        .collect()
}

impl CmaState {
    fn initial(d: usize, sigma0: f64) -> Self {
        Self {
            generation: 0,
            mean: DVector::from_element(d, 0.5),
            sigma: sigma0,
            cov: DMatrix::identity(d, d),
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            basis: DMatrix::identity(d, d),
            scales: DVector::from_element(d, 1.0),
        }
    }

    /// Unclipped candidate `m + sigma * B * D * z`.
    fn candidate(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.mean + self.sigma * (&self.basis * z.component_mul(&self.scales))
    }

    fn update(&mut self, c: &Constants, ranked: &[DVector<f64>]) {
        let d = self.mean.len();
        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = ranked
            .iter()
            .take(c.weights.len())
            .map(|x| (x - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(d);
        for (w, y) in c.weights.iter().zip(&ys) {
            y_w += *w * y;
        }
        self.mean = &old_mean + self.sigma * &y_w;

        // C^(-1/2) y_w = B D^-1 B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.scales);
        self.p_sigma = (1.0 - c.c_sigma) * &self.p_sigma
            + (c.c_sigma * (2.0 - c.c_sigma) * c.mu_eff).sqrt() * inv_sqrt_y;
        let g = (self.generation + 1) as f64;
        let norm_ps = self.p_sigma.norm();
        let h_sigma = norm_ps / (1.0 - (1.0 - c.c_sigma).powf(2.0 * g)).sqrt()
            < (1.4 + 2.0 / (d as f64 + 1.0)) * c.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = (1.0 - c.c_c) * &self.p_c + h * (c.c_c * (2.0 - c.c_c) * c.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(d, d);
        for (w, y) in c.weights.iter().zip(&ys) {
            rank_mu += *w * (y * y.transpose());
        }
        let decay = 1.0 - c.c_1 - c.c_mu + (1.0 - h) * c.c_1 * c.c_c * (2.0 - c.c_c);
        self.cov = decay * &self.cov + c.c_1 * (&self.p_c * self.p_c.transpose()) + c.c_mu * rank_mu;
        self.cov = 0.5 * (&self.cov + self.cov.transpose());
        self.sigma *= ((c.c_sigma / c.d_sigma) * (norm_ps / c.chi_n - 1.0)).exp();
        self.generation += 1;
        self.decompose();
    }

    fn decompose(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let floor = 1e-20;
        self.scales = eig.eigenvalues.map(|v| v.max(floor).sqrt());
        self.basis = eig.eigenvectors;
    }

    /// Eigenvalues of the covariance matrix.
    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.cov.clone()).eigenvalues
    }
}

fn generation_draws(seed: u64, generation: usize, lambda: usize, d: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GENERATION_STREAM + generation as u64);
    (0..lambda)
        .map(|_| DVector::from_fn(d, |_, _| rng.sample(rand_distr::StandardNormal)))
        .collect()
}

fn clip(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Replays every completed generation in `history` and returns the resulting state.
/// Failed trials rank last.
pub fn cmaes_state(space: &[ParamSpec], history: &[Trial], config: &CmaConfig, seed: u64) -> Result<CmaState> {
    let numeric = numeric_indices(space);
    if numeric.is_empty() {
        return Err(SurvError::InvalidInput(
            "CMA-ES needs at least one numeric parameter".into(),
        ));
    }
    let d = numeric.len();
    let lambda = population_size(d, config);
    let constants = Constants::new(d, lambda);
    let mut state = CmaState::initial(d, config.sigma0);
    let full = history.len() / lambda;
    for g in 0..full {
        let draws = generation_draws(seed, g, lambda, d);
        let mut scored: Vec<(f64, usize, DVector<f64>)> = draws
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let value = history[g * lambda + k].value.unwrap_or(f64::NEG_INFINITY);
                (value, k, clip(&state.candidate(z)))
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let ranked: Vec<DVector<f64>> = scored.into_iter().map(|s| s.2).collect();
        state.update(&constants, &ranked);
        debug_assert_eq!(constants.lambda, lambda);
    }
    Ok(state)
}

/// Proposal for trial number `history.len()`. Categorical parameters are drawn uniformly
/// from `rng`.
pub(crate) fn sample_cmaes(
    space: &[ParamSpec],
    history: &[Trial],
    config: &CmaConfig,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Assignment> {
    let state = cmaes_state(space, history, config, seed)?;
    let numeric = numeric_indices(space);
    let d = numeric.len();
    let lambda = population_size(d, config);
    let position = history.len() % lambda;
    let z = &generation_draws(seed, state.generation, lambda, d)[position];
    let x = clip(&state.candidate(z));
    let mut out = Assignment::new();
    let mut k = 0;
    for spec in space {
        let value = if spec.is_numeric() {
            let v = spec.from_unit(x[k]);
            k += 1;
            v
        } else {
            log::debug!("CMA-ES: categorical {} drawn uniformly", spec.name);
            spec.sample_uniform(rng)
        };
        out.insert(spec.name.clone(), value);
    }
    Ok(out)
}
