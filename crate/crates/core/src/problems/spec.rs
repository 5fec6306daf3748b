use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    convert_classification, make_hard_instance, make_smooth_problem, HardInstanceParams, LinearEta,
    NoiseModel, Problem, SmoothSpec,
};
use crate::error::Result;

/// Named problem family plus its parameters, as declared in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Smooth(SmoothSpec),
    LinearEta(LinearEta),
    HardInstance(HardInstanceParams),
}

impl ProblemSpec {
    pub fn build(&self, noise: NoiseModel) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemSpec::Smooth(s) => Box::new(make_smooth_problem(s.clone(), noise)?),
            ProblemSpec::LinearEta(l) => Box::new(convert_classification(*l).with_noise(noise)),
            ProblemSpec::HardInstance(h) => Box::new(make_hard_instance(h.clone())?.with_noise(noise)),
        })
    }

    /// Copy with per-replicate randomness (such as a jittered ramp center)
    /// drawn from `rng` for replicate `k` of `count`; specs without any are
    /// returned unchanged.
    pub fn resolve(&self, rng: &mut dyn RngCore, k: u32, count: u32) -> ProblemSpec {
        match self {
            ProblemSpec::Smooth(s) => ProblemSpec::Smooth(s.resolve(rng, k, count)),
            other => other.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("problem spec serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{CostFamily, Marginal};

    #[test]
    fn parses_tagged_specs() {
        let s: ProblemSpec = serde_json::from_str(
            r#"{"family":"smooth","dim":1,"shape":"ramp","flat_width":0.3}"#,
        )
        .unwrap();
        assert_eq!(
            s,
            ProblemSpec::Smooth(SmoothSpec {
                dim: 1,
                family: CostFamily::Ramp { slope: 1.0, flat_width: 0.3, center: 0.5, center_jitter: 0.0 },
                marginal: Marginal::Uniform,
            })
        );
        let h: ProblemSpec = serde_json::from_str(r#"{"family":"hard-instance","tau":0.2}"#).unwrap();
        assert!(matches!(h, ProblemSpec::HardInstance(ref p) if p.tau == 0.2));
        assert_eq!(h.hash().len(), 64);
        assert_ne!(h.hash(), s.hash());
        assert!(s.build(NoiseModel::Bernoulli).is_ok());
    }
}
