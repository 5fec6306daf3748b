//! Cost oracles.
//!
//! A [`Problem`] knows its expected-cost functions exactly, so Bayes labels and
//! excess risks can be computed without estimation. The learner only ever
//! sees [`Problem::sample_costs`].

mod convert;
mod hard;
mod marginal;
mod smooth;
mod spec;
pub mod validate;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use convert::{convert_classification, Converted, LabelProblem, LinearEta};
pub use hard::{make_hard_instance, HardInstance, HardInstanceParams};
pub use marginal::Marginal;
pub use smooth::{make_smooth_problem, CostFamily, SmoothProblem, SmoothSpec};
pub use spec::ProblemSpec;

use crate::label::{argmin, Label};

/// Conditional law of the observed cost vector given `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Independent Bernoulli costs with mean `f(x;y)`.
    #[default]
    Bernoulli,
    /// `c(y) = f(x;y)` exactly.
    ZeroNoise,
}

/// Regularity constants a problem is known to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredParams {
    pub alpha: f64,
    pub smoothness: f64,
    pub beta: f64,
    pub c_beta: f64,
    pub c_beta_prime: f64,
    pub tau: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn num_labels(&self) -> usize;

    /// `f(x; y)` for every label, written into `out`.
    fn expected_costs(&self, x: &[f64], out: &mut [f64]);

    /// One draw of the cost vector at `x`.
    fn sample_costs(&self, x: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);

    /// One draw from the marginal `P_X`.
    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    /// Density of `P_X` with respect to Lebesgue measure on the cube.
    fn density(&self, x: &[f64]) -> f64;

    fn declared(&self) -> DeclaredParams;

    fn expected_cost(&self, x: &[f64], label: Label) -> f64 {
        let mut f = vec![0.0; self.num_labels()];
        self.expected_costs(x, &mut f);
        f[label.index()]
    }

    /// Smallest-index minimizer of `f(x; ·)`.
    fn bayes_label(&self, x: &[f64]) -> Label {
        let mut f = vec![0.0; self.num_labels()];
        self.expected_costs(x, &mut f);
        argmin(&f)
    }
}

pub(crate) fn sample_with_noise(
    noise: NoiseModel,
    means: &[f64],
    rng: &mut dyn RngCore,
    out: &mut [f64],
) {
    match noise {
        NoiseModel::ZeroNoise => out.copy_from_slice(means),
        NoiseModel::Bernoulli => {
            for (o, &m) in out.iter_mut().zip(means) {
                *o = if rng.random::<f64>() < m { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Gap between the best and the runner-up expected cost.
pub fn second_gap(f: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut second = f64::INFINITY;
    for &v in f {
        if v < best {
            second = best;
            best = v;
        } else if v < second {
            second = v;
        }
    }
    second - best
}

/// Smallest strictly positive gap to the best cost, `+∞` if every label ties.
pub fn positive_gap(f: &[f64]) -> f64 {
    let best = f.iter().cloned().fold(f64::INFINITY, f64::min);
    f.iter()
        .map(|v| v - best)
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Volume of the Euclidean ball of radius `r` in `R^d`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} · 2π / d
    let mut v = [1.0, 2.0];
    for k in 2..=dim {
        v[k % 2] *= 2.0 * std::f64::consts::PI / k as f64;
    }
    v[dim % 2] * r.powi(dim as i32)
}

/// Uniform draw from the ball `B(center, radius)`.
pub fn sample_ball(center: &[f64], radius: f64, rng: &mut dyn RngCore, out: &mut [f64]) {
    use rand_distr::{Distribution, StandardNormal};
    let d = center.len();
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = z;
            norm2 += z * z;
        }
        if norm2 > 0.0 {
            let scale = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm2.sqrt();
            for (o, c) in out.iter_mut().zip(center) {
                *o = c + *o * scale;
            }
            return;
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
