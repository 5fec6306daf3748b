use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marginal law of `X` on `[0,1]^d` for the smooth families.
///
/// The piecewise-constant variant varies along the first coordinate only and
/// is uniform in the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    #[default]
    Uniform,
    PiecewiseConstant {
        /// Interior break points on the first axis, strictly increasing in (0,1).
        breaks: Vec<f64>,
        /// Probability mass of each of the `breaks.len() + 1` slabs.
        masses: Vec<f64>,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        if let Marginal::PiecewiseConstant { breaks, masses } = self {
            if masses.len() != breaks.len() + 1 {
                return Err(Error::Construction(format!(
                    "marginal needs {} masses for {} breaks",
                    breaks.len() + 1,
                    breaks.len()
                )));
            }
            let mut prev = 0.0;
            for &b in breaks {
                if !(b > prev && b < 1.0) {
                    return Err(Error::Construction("marginal breaks must increase inside (0,1)".into()));
                }
                prev = b;
            }
            if masses.iter().any(|&m| !(m > 0.0)) {
                return Err(Error::Construction("marginal slab masses must be positive".into()));
            }
            let total: f64 = masses.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Construction(format!("marginal masses sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    fn slabs(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Marginal::Uniform => vec![(0.0, 1.0, 1.0)],
            Marginal::PiecewiseConstant { breaks, masses } => {
                let mut edges = Vec::with_capacity(breaks.len() + 2);
                edges.push(0.0);
                edges.extend_from_slice(breaks);
                edges.push(1.0);
                edges
                    .windows(2)
                    .zip(masses)
                    .map(|(w, &m)| (w[0], w[1], m))
                    .collect()
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        self.slabs()
            .into_iter()
            .find(|&(a, b, _)| x[0] >= a && x[0] <= b)
            .map(|(a, b, m)| m / (b - a))
            .unwrap_or(0.0)
    }

    /// Mass of the slab `{lo <= x_0 <= hi}`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.slabs()
            .into_iter()
            .map(|(a, b, m)| {
                let overlap = (hi.min(b) - lo.max(a)).max(0.0);
                m * overlap / (b - a)
            })
            .sum()
    }

    pub fn density_range(&self) -> (f64, f64) {
        self.slabs()
            .into_iter()
            .map(|(a, b, m)| m / (b - a))
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = rng.random::<f64>();
        }
        if let Marginal::PiecewiseConstant { .. } = self {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let slabs = self.slabs();
            let last = slabs.len() - 1;
            for (k, (a, b, m)) in slabs.into_iter().enumerate() {
                acc += m;
                if u < acc || k == last {
                    out[0] = a + (b - a) * rng.random::<f64>();
                    break;
                }
            }
        }
    }
}
