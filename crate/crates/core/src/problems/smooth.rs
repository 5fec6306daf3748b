use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{positive_gap, sample_with_noise, second_gap, DeclaredParams, Marginal, NoiseModel, Problem};
use crate::error::{Error, Result};

fn default_slope() -> f64 {
    1.0
}

fn default_center() -> f64 {
    0.5
}


/// Closed-form expected-cost families. All of them vary along the first
/// coordinate only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum CostFamily {
    /// Two crossing linear ramps, `f(x;1) = 1/2 + r(x_0)` and
    /// `f(x;2) = 1/2 - r(x_0)` with `r = clamp(s·g, -1/2, 1/2)`, where `g` is
    /// the signed distance of `x_0` to the interval of width `flat_width`
    /// centred at `center`. Both labels tie on that interval. With `s = 1`,
    /// no flat part and center 1/2 this is `f = (x, 1-x)`.
    ///
    /// A positive `center_jitter` makes sweeps draw a fresh center per
    /// replicate, uniform on `center ± center_jitter`, so that rates are not
    /// tied to one position of the boundary relative to the dyadic grid.
    Ramp {
        #[serde(default = "default_slope")]
        slope: f64,
        #[serde(default)]
        flat_width: f64,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default)]
        center_jitter: f64,
    },
    /// `f(x;1) = S(x_0)`, `f(x;2) = 1 - S(x_0)` with `S(u) = 3u^2 - 2u^3`.
    Smoothstep,
    /// Constant expected costs, one per label.
    ConstantGap { costs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub family: CostFamily,
    #[serde(default)]
    pub marginal: Marginal,
}

#[derive(Debug, Clone)]
pub struct SmoothProblem {
    spec: SmoothSpec,
    noise: NoiseModel,
    declared: DeclaredParams,
}

pub fn make_smooth_problem(spec: SmoothSpec, noise: NoiseModel) -> Result<SmoothProblem> {
    if spec.dim == 0 {
        return Err(Error::Construction("dimension must be at least 1".into()));
    }
    spec.marginal.validate()?;
    let (mu_min, mu_max) = spec.marginal.density_range();
    let declared = match &spec.family {
        CostFamily::Ramp { slope, flat_width, center, center_jitter } => {
            if !(*slope > 0.0) || !(0.0..1.0).contains(flat_width) || !(*center_jitter >= 0.0) {
                return Err(Error::Construction(format!(
                    "ramp needs slope > 0, flat_width in [0,1) and center_jitter >= 0, got {slope}, {flat_width}, {center_jitter}"
                )));
            }
            let (lo, hi) = (center - flat_width / 2.0, center + flat_width / 2.0);
            if !(lo - center_jitter > 0.0 && hi + center_jitter < 1.0) {
                return Err(Error::Construction(format!(
                    "ramp flat interval [{lo}, {hi}] with jitter {center_jitter} must stay inside (0, 1)"
                )));
            }
            let tau = spec.marginal.mass_between(lo, hi);
            DeclaredParams {
                alpha: 1.0,
                smoothness: *slope,
                beta: 1.0,
                c_beta: mu_max / slope,
                c_beta_prime: mu_max / slope,
                tau,
                mu_min,
                mu_max,
            }
        }
        CostFamily::Smoothstep => DeclaredParams {
            alpha: 1.0,
            smoothness: 1.5,
            beta: 1.0,
            c_beta: mu_max,
            c_beta_prime: mu_max,
            tau: 0.0,
            mu_min,
            mu_max,
        },
        CostFamily::ConstantGap { costs } => {
            if costs.len() < 2 {
                return Err(Error::Construction("constant-gap needs at least two labels".into()));
            }
            if costs.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Construction(format!("costs {costs:?} leave [0,1]")));
            }
            let gap = positive_gap(costs);
            let top = second_gap(costs);
            DeclaredParams {
                alpha: 1.0,
                smoothness: 1.0,
                beta: 1.0,
                c_beta: if gap.is_finite() { 1.0 / gap } else { 0.0 },
                c_beta_prime: if top > 0.0 { 1.0 / top } else { 0.0 },
                tau: if top > 0.0 { 0.0 } else { 1.0 },
                mu_min,
                mu_max,
            }
        }
    };
    Ok(SmoothProblem { spec, noise, declared })
}

impl SmoothSpec {
    /// Copy with any per-replicate randomness resolved. Replicate `k` of
    /// `count` draws its center from the `k`-th of `count` equal strata of
    /// the jitter interval.
    pub fn resolve(&self, rng: &mut dyn RngCore, k: u32, count: u32) -> SmoothSpec {
        let mut out = self.clone();
        if let CostFamily::Ramp { center, center_jitter, .. } = &mut out.family {
            if *center_jitter > 0.0 {
                let count = count.max(1);
                let u = (f64::from(k % count) + rng.random::<f64>()) / f64::from(count);
                *center += *center_jitter * (2.0 * u - 1.0);
                *center_jitter = 0.0;
            }
        }
        out
    }
}

impl SmoothProblem {
    pub fn spec(&self) -> &SmoothSpec {
        &self.spec
    }
}

impl Problem for SmoothProblem {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn num_labels(&self) -> usize {
        match &self.spec.family {
            CostFamily::ConstantGap { costs } => costs.len(),
            _ => 2,
        }
    }

    fn expected_costs(&self, x: &[f64], out: &mut [f64]) {
        let u = x[0];
        match &self.spec.family {
            CostFamily::Ramp { slope, flat_width, center, .. } => {
                let lo = center - flat_width / 2.0;
                let hi = center + flat_width / 2.0;
                let g = if u < lo {
                    u - lo
                } else if u > hi {
                    u - hi
                } else {
                    0.0
                };
                let r = (slope * g).clamp(-0.5, 0.5);
                out[0] = 0.5 + r;
                out[1] = 0.5 - r;
            }
            CostFamily::Smoothstep => {
                let s = u * u * (3.0 - 2.0 * u);
                out[0] = s;
                out[1] = 1.0 - s;
            }
            CostFamily::ConstantGap { costs } => out.copy_from_slice(costs),
        }
    }

    fn sample_costs(&self, x: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let mut means = vec![0.0; out.len()];
        self.expected_costs(x, &mut means);
        sample_with_noise(self.noise, &means, rng, out);
    }

    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.spec.marginal.sample(rng, out)
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.spec.marginal.density(x)
    }

    fn declared(&self) -> DeclaredParams {
        self.declared
    }
}
