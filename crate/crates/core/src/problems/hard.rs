//! Bump-on-a-packing family used as a worst-case benchmark.
//!
//! Around `x̄ = (1/2, …, 1/2)` the regression function `η = P(Y = 1 | x)`
//! equals 1/2 except on small bumps of height `± c2·L·r^α / d^{d/2β}` placed on
//! an `r`-packing of `B(x̄, r̄)`. Outside `B̄(x̄, r*)` it ramps up like
//! `dist^{d/β}` over a shell of width `c0·r^{αβ/d}` and stays constant
//! beyond. The marginal puts mass `w` on each inner bump ball `B(x_i, r/6)`,
//! mass `τ` on the flat region `A1 = B̄(x̄, r*) \ ∪ B(x_i, r/3)` and the rest on
//! a far ball `A2 = B̄(a, c0·r^{αβ/d})`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convert::{convert_classification, Converted, LabelProblem};
use super::{ball_volume, distance, sample_ball, DeclaredParams};
use crate::error::{Error, Result};

fn d_dim() -> usize {
    1
}
fn d_one() -> f64 {
    1.0
}
fn d_smoothness() -> f64 {
    2.0
}
fn d_r() -> f64 {
    1.0 / 1024.0
}
fn d_r_bar() -> f64 {
    1.0 / 128.0
}
fn d_bumps() -> usize {
    8
}
fn d_bump_mass() -> f64 {
    0.01
}
fn d_tau() -> f64 {
    0.3
}
fn d_c1() -> f64 {
    0.5
}
fn d_candidates() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardInstanceParams {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_one")]
    pub alpha: f64,
    #[serde(default = "d_one")]
    pub beta: f64,
    #[serde(default = "d_smoothness")]
    pub smoothness: f64,
    /// Packing radius `r`.
    #[serde(default = "d_r")]
    pub r: f64,
    /// Radius of the ball that is packed.
    #[serde(default = "d_r_bar")]
    pub r_bar: f64,
    /// Number of bumps `m`.
    #[serde(default = "d_bumps")]
    pub num_bumps: usize,
    /// Marginal mass `w` of each bump.
    #[serde(default = "d_bump_mass")]
    pub bump_mass: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// Defaults to `min(1/(12L), (1/(4L))^{β/d})`.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default = "d_c1")]
    pub c1: f64,
    /// Defaults to `1/(12L)`.
    #[serde(default)]
    pub c2: Option<f64>,
    /// Bump signs; drawn from `seed` when absent.
    #[serde(default)]
    pub sigma: Option<Vec<i8>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_candidates")]
    pub packing_candidates: usize,
}

impl Default for HardInstanceParams {
    fn default() -> Self {
        Self {
            dim: d_dim(),
            alpha: 1.0,
            beta: 1.0,
            smoothness: d_smoothness(),
            r: d_r(),
            r_bar: d_r_bar(),
            num_bumps: d_bumps(),
            bump_mass: d_bump_mass(),
            tau: d_tau(),
            c0: None,
            c1: d_c1(),
            c2: None,
            sigma: None,
            seed: 0,
            packing_candidates: d_candidates(),
        }
    }
}

impl HardInstanceParams {
    pub fn c0(&self) -> f64 {
        self.c0.unwrap_or_else(|| max_c0(self.smoothness, self.beta, self.dim))
    }

    pub fn c2(&self) -> f64 {
        self.c2.unwrap_or(1.0 / (12.0 * self.smoothness))
    }
}

/// Largest `c0` the smoothness argument allows.
pub fn max_c0(smoothness: f64, beta: f64, dim: usize) -> f64 {
    (1.0 / (12.0 * smoothness)).min((1.0 / (4.0 * smoothness)).powf(beta / dim as f64))
}

/// Fully resolved construction, serializable for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub params: HardInstanceParams,
    pub c0: f64,
    pub c2: f64,
    pub centers: Vec<Vec<f64>>,
    pub sigma: Vec<i8>,
    /// Size of the greedy packing the bumps were taken from.
    pub packing_size: usize,
    pub r_star: f64,
    pub anchor: Vec<f64>,
    /// `r^{αβ/d}`
    pub shell_scale: f64,
    pub bump_height: f64,
    pub outer_level: f64,
    pub vol_bump: f64,
    pub vol_a1: f64,
    pub vol_a2: f64,
}

/// Greedy farthest-point `r`-packing of `B(center, radius)`, seeded by
/// `center` itself and drawn from `num_candidates` uniform candidates.
pub fn greedy_packing(
    center: &[f64],
    radius: f64,
    r: f64,
    num_candidates: usize,
    rng: &mut dyn RngCore,
) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut candidates = Vec::with_capacity(num_candidates);
    let mut buf = vec![0.0; d];
    for _ in 0..num_candidates {
        sample_ball(center, radius, rng, &mut buf);
        candidates.push(buf.clone());
    }
    let mut chosen = vec![center.to_vec()];
    let mut nearest: Vec<f64> = candidates.iter().map(|c| distance(c, center)).collect();
    while let Some((j, &far)) = nearest
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
    {
        if far < r {
            break;
        }
        let pick = candidates[j].clone();
        for (n, c) in nearest.iter_mut().zip(&candidates) {
            *n = n.min(distance(c, &pick));
        }
        chosen.push(pick);
    }
    chosen
}

pub fn make_hard_instance(params: HardInstanceParams) -> Result<Converted<HardInstance>> {
    Ok(convert_classification(HardInstance::build(params)?))
}

impl HardInstance {
    pub fn build(params: HardInstanceParams) -> Result<Self> {
        let p = &params;
        let d = p.dim;
        let bad = |msg: String| Err(Error::Construction(msg));
        if d == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(p.alpha > 0.0 && p.alpha <= 1.0) || !(p.beta > 0.0) || p.alpha * p.beta > d as f64 {
            return bad(format!(
                "need 0 < alpha <= 1, beta > 0 and alpha·beta <= d (alpha={}, beta={}, d={d})",
                p.alpha, p.beta
            ));
        }
        if !(p.smoothness > 0.0) {
            return bad("smoothness must be positive".into());
        }
        if !(p.r_bar > 0.0 && p.r_bar < 0.5) || !(p.r > 0.0 && p.r <= p.r_bar) {
            return bad(format!("need 0 < r <= r_bar < 1/2 (r={}, r_bar={})", p.r, p.r_bar));
        }
        if p.num_bumps == 0 || !(p.bump_mass > 0.0) || !(0.0..=1.0).contains(&p.tau) {
            return bad("need at least one bump, positive bump mass and tau in [0,1]".into());
        }
        let bump_total = p.num_bumps as f64 * p.bump_mass;
        if bump_total + p.tau > 1.0 + 1e-12 {
            return bad(format!(
                "mass budget exceeded: m·w + tau = {} > 1",
                bump_total + p.tau
            ));
        }
        let c0 = p.c0();
        let c2 = p.c2();
        if !(c0 > 0.0 && c0 < 1.0) || !(p.c1 > 0.0 && p.c1 < 1.0) || !(c2 > 0.0) {
            return bad(format!("need c0, c1 in (0,1) and c2 > 0 (c0={c0}, c1={}, c2={c2})", p.c1));
        }

        let x_bar = vec![0.5; d];
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let packing = greedy_packing(&x_bar, p.r_bar, p.r, p.packing_candidates, &mut rng);
        if p.num_bumps > packing.len() {
            return bad(format!(
                "infeasible packing: {} bumps requested but the greedy r-packing has {} points",
                p.num_bumps,
                packing.len()
            ));
        }
        let centers: Vec<Vec<f64>> = packing[..p.num_bumps].to_vec();
        let sigma = match &p.sigma {
            Some(s) => {
                if s.len() != p.num_bumps || s.iter().any(|v| *v != 1 && *v != -1) {
                    return bad(format!("sigma must hold {} entries of ±1", p.num_bumps));
                }
                s.clone()
            }
            None => (0..p.num_bumps)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        };

        let r_star = centers
            .iter()
            .map(|c| distance(c, &x_bar))
            .fold(0.0, f64::max)
            + p.r / 2.0;
        if r_star > 0.5 {
            return bad(format!("ball of radius r* = {r_star} does not fit in the cube"));
        }
        let shell_scale = p.r.powf(p.alpha * p.beta / d as f64);
        let anchor_offset = c0.max(p.c1) * shell_scale;
        let anchor = vec![anchor_offset; d];
        let gap = distance(&anchor, &x_bar);
        if gap < r_star + c0 * shell_scale + anchor_offset {
            return bad(format!(
                "far ball around {anchor:?} meets the inflated central ball (distance {gap})"
            ));
        }

        let dd = d as f64;
        let norm = dd.powf(dd / (2.0 * p.beta));
        let bump_height = c2 * p.smoothness * p.r.powf(p.alpha) / norm;
        let outer_level = p.smoothness * c0.powf(dd / p.beta) * p.r.powf(p.alpha) / norm;
        let vol_bump = ball_volume(d, p.r / 6.0);
        let vol_a1 = ball_volume(d, r_star) - p.num_bumps as f64 * ball_volume(d, p.r / 3.0);
        let vol_a2 = ball_volume(d, c0 * shell_scale);
        if !(vol_a1 > 0.0) {
            return bad("flat region has no volume".into());
        }

        Ok(Self {
            c0,
            c2,
            centers,
            sigma,
            packing_size: packing.len(),
            r_star,
            anchor,
            shell_scale,
            bump_height,
            outer_level,
            vol_bump,
            vol_a1,
            vol_a2,
            params,
        })
    }

    fn x_bar(&self) -> Vec<f64> {
        vec![0.5; self.params.dim]
    }

    /// `φ(u) = min((2 - 3u)_+, 1)`
    pub fn phi(u: f64) -> f64 {
        (2.0 - 3.0 * u).clamp(0.0, 1.0)
    }

    /// Regression function `P(Y = label 1 | x)`.
    pub fn eta(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        let dc = distance(x, &self.x_bar());
        if dc <= self.r_star {
            let mut v = 0.5;
            for (c, &s) in self.centers.iter().zip(&self.sigma) {
                let dist = distance(x, c);
                if dist < p.r / 2.0 {
                    v += s as f64 * self.bump_height * Self::phi(2.0 * dist / p.r);
                }
            }
            v
        } else if dc <= self.r_star + self.c0 * self.shell_scale {
            let dd = p.dim as f64;
            let norm = dd.powf(dd / (2.0 * p.beta));
            0.5 + p.smoothness / norm * (dc - self.r_star).powf(dd / p.beta)
        } else {
            0.5 + self.outer_level
        }
    }

    pub fn a2_mass(&self) -> f64 {
        (1.0 - self.params.num_bumps as f64 * self.params.bump_mass - self.params.tau).max(0.0)
    }

    pub fn in_a1(&self, x: &[f64]) -> bool {
        distance(x, &self.x_bar()) <= self.r_star
            && self.centers.iter().all(|c| distance(x, c) >= self.params.r / 3.0)
    }

    pub fn in_a2(&self, x: &[f64]) -> bool {
        distance(x, &self.anchor) <= self.c0 * self.shell_scale
    }

    pub fn density_a1(&self) -> f64 {
        self.params.tau / self.vol_a1
    }

    /// `P_X(A1)` as density times analytic volume.
    pub fn a1_mass(&self) -> f64 {
        self.density_a1() * self.vol_a1
    }

    pub fn marginal_density(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        if self.centers.iter().any(|c| distance(x, c) <= p.r / 6.0) {
            return p.bump_mass / self.vol_bump;
        }
        if self.in_a1(x) {
            return self.density_a1();
        }
        if self.in_a2(x) {
            return self.a2_mass() / self.vol_a2;
        }
        0.0
    }

    /// Support pieces as `(center, radius, nominal mass)`; the first covers
    /// the bumps and `A1`, the second is `A2`.
    pub fn support_balls(&self) -> Vec<(Vec<f64>, f64, f64)> {
        vec![
            (
                self.x_bar(),
                self.r_star,
                self.params.num_bumps as f64 * self.params.bump_mass + self.params.tau,
            ),
            (self.anchor.clone(), self.c0 * self.shell_scale, self.a2_mass()),
        ]
    }

    /// Levels of `|η - 1/2|` on the support with their masses, ascending.
    pub fn margin_atoms(&self) -> Vec<(f64, f64)> {
        let mut atoms = vec![
            (self.bump_height, self.params.num_bumps as f64 * self.params.bump_mass),
            (self.outer_level, self.a2_mass()),
        ];
        atoms.retain(|a| a.1 > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }

    /// Smallest `C` with `P_X(0 < |η - 1/2| < t) <= C t^β` for all `t > 0`.
    pub fn eta_margin_constant(&self) -> f64 {
        let mut acc = 0.0;
        let mut c: f64 = 0.0;
        for (level, mass) in self.margin_atoms() {
            acc += mass;
            c = c.max(acc / level.powf(self.params.beta));
        }
        c
    }

    fn positive_densities(&self) -> Vec<f64> {
        let p = &self.params;
        let mut v = vec![p.bump_mass / self.vol_bump];
        if p.tau > 0.0 {
            v.push(self.density_a1());
        }
        if self.a2_mass() > 0.0 {
            v.push(self.a2_mass() / self.vol_a2);
        }
        v
    }
}

impl LabelProblem for HardInstance {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn num_labels(&self) -> usize {
        2
    }

    fn label_probs(&self, x: &[f64], out: &mut [f64]) {
        let e = self.eta(x);
        out[0] = e;
        out[1] = 1.0 - e;
    }

    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let p = &self.params;
        let bumps = p.num_bumps as f64 * p.bump_mass;
        let u: f64 = rng.random::<f64>();
        if u < bumps {
            let i = ((u / p.bump_mass) as usize).min(p.num_bumps - 1);
            sample_ball(&self.centers[i], p.r / 6.0, rng, out);
        } else if u < bumps + p.tau {
            let x_bar = self.x_bar();
            loop {
                sample_ball(&x_bar, self.r_star, rng, out);
                if self.in_a1(out) {
                    break;
                }
            }
        } else {
            sample_ball(&self.anchor, self.c0 * self.shell_scale, rng, out);
        }
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.marginal_density(x)
    }

    fn declared(&self) -> DeclaredParams {
        let p = &self.params;
        // cost gaps are 2|η - 1/2|
        let c = self.eta_margin_constant() / 2f64.powf(p.beta);
        let dens = self.positive_densities();
        DeclaredParams {
            alpha: p.alpha,
            smoothness: p.smoothness,
            beta: p.beta,
            c_beta: c,
            c_beta_prime: c,
            tau: p.tau,
            mu_min: dens.iter().cloned().fold(f64::INFINITY, f64::min),
            mu_max: dens.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Problem;

    #[test]
    fn phi_shape() {
        assert_eq!(HardInstance::phi(0.0), 1.0);
        assert_eq!(HardInstance::phi(1.0 / 3.0), 1.0);
        assert!(HardInstance::phi(2.0 / 3.0).abs() < 1e-15);
        assert_eq!(HardInstance::phi(0.9), 0.0);
        assert!((HardInstance::phi(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bump_height_at_center() {
        let h = HardInstance::build(HardInstanceParams {
            r: 0.01,
            r_bar: 1.0 / 32.0,
            num_bumps: 2,
            c2: Some(1.0 / 24.0),
            sigma: Some(vec![1, -1]),
            ..Default::default()
        })
        .unwrap();
        let expected = 0.01 * 2.0 / 24.0;
        assert!((h.eta(&h.centers[0]) - (0.5 + expected)).abs() < 1e-15);
        assert!((h.eta(&h.centers[1]) - (0.5 - expected)).abs() < 1e-15);
        assert!((expected - 8.333_333_333_333e-4).abs() < 1e-15);
        // φ vanishes at distance r/3
        let mut x = h.centers[0].clone();
        x[0] += 0.01 / 3.0;
        assert!((h.eta(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn a1_mass_is_tau() {
        let h = HardInstance::build(HardInstanceParams::default()).unwrap();
        assert!((h.a1_mass() - 0.3).abs() < 1e-12);
        let total: f64 = h.support_balls().iter().map(|b| b.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn packing_is_separated() {
        for d in [1, 2] {
            let h = HardInstance::build(HardInstanceParams {
                dim: d,
                num_bumps: 4,
                ..Default::default()
            })
            .unwrap();
            for (i, a) in h.centers.iter().enumerate() {
                assert!(distance(a, &[0.5; 2][..d]) < h.params.r_bar);
                for b in &h.centers[i + 1..] {
                    assert!(distance(a, b) >= h.params.r);
                }
            }
            assert!(h.packing_size >= 4);
        }
    }

    #[test]
    fn construction_errors() {
        let too_many = HardInstance::build(HardInstanceParams {
            num_bumps: 1000,
            bump_mass: 1e-4,
            ..Default::default()
        });
        assert!(matches!(too_many, Err(Error::Construction(ref m)) if m.contains("packing")), "{too_many:?}");
        let heavy = HardInstance::build(HardInstanceParams {
            bump_mass: 0.1,
            tau: 0.5,
            ..Default::default()
        });
        assert!(matches!(heavy, Err(Error::Construction(m)) if m.contains("mass budget")));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = HardInstance::build(HardInstanceParams { seed: 9, ..Default::default() }).unwrap();
        let b = HardInstance::build(HardInstanceParams { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn converted_costs_complement_eta() {
        let p = make_hard_instance(HardInstanceParams {
            sigma: Some(vec![1; 8]),
            ..Default::default()
        })
        .unwrap();
        let c = p.inner().centers[0].clone();
        let eta = p.inner().eta(&c);
        assert!(eta > 0.5);
        assert!((p.expected_cost(&c, crate::label::Label::new(0)) - (1.0 - eta)).abs() < 1e-15);
        assert_eq!(p.bayes_label(&c), crate::label::Label::new(0));
    }
}
