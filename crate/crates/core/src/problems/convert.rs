use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DeclaredParams, NoiseModel, Problem};
use crate::label::Label;

/// A plain classification problem: marginal plus conditional label law.
pub trait LabelProblem: Send + Sync {
    fn dim(&self) -> usize;

    fn num_labels(&self) -> usize;

    /// `P(Y = y | X = x)` for every label.
    fn label_probs(&self, x: &[f64], out: &mut [f64]);

    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    fn density(&self, x: &[f64]) -> f64;

    fn declared(&self) -> DeclaredParams;

    fn sample_label(&self, x: &[f64], rng: &mut dyn RngCore) -> Label {
        let mut p = vec![0.0; self.num_labels()];
        self.label_probs(x, &mut p);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return Label::new(k);
            }
        }
        Label::new(p.len() - 1)
    }
}

/// Cost-sensitive view of a classification problem: the cost of predicting
/// `y` is `1{y != Y}`, so `f(x;y) = 1 - P(Y=y | x)` and excess cost equals
/// excess classification error.
#[derive(Debug, Clone)]
pub struct Converted<P> {
    inner: P,
    noise: NoiseModel,
}

pub fn convert_classification<P: LabelProblem>(label_problem: P) -> Converted<P> {
    Converted {
        inner: label_problem,
        noise: NoiseModel::Bernoulli,
    }
}

impl<P> Converted<P> {
    /// `ZeroNoise` replaces the indicator draw with its mean `f(x; ·)`.
    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

/// Indicator cost vector of a realised label.
pub fn indicator_costs(label: Label, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = if k == label.index() { 0.0 } else { 1.0 };
    }
}

impl<P: LabelProblem> Problem for Converted<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_labels(&self) -> usize {
        self.inner.num_labels()
    }

    fn expected_costs(&self, x: &[f64], out: &mut [f64]) {
        self.inner.label_probs(x, out);
        for o in out.iter_mut() {
            *o = 1.0 - *o;
        }
    }

    fn sample_costs(&self, x: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        match self.noise {
            NoiseModel::ZeroNoise => self.expected_costs(x, out),
            NoiseModel::Bernoulli => {
                let y = self.inner.sample_label(x, rng);
                indicator_costs(y, out);
            }
        }
    }

    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        self.inner.sample_x(rng, out)
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.inner.density(x)
    }

    fn declared(&self) -> DeclaredParams {
        self.inner.declared()
    }
}

/// Binary problem with `P(Y = 1 | x) = 1 - x_0` under a uniform marginal, so
/// label 1 is Bayes-optimal for `x_0 < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEta {
    pub dim: usize,
}

impl LabelProblem for LinearEta {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_labels(&self) -> usize {
        2
    }

    fn label_probs(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0 - x[0];
        out[1] = x[0];
    }

    fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = rng.random();
        }
    }

    fn density(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            1.0
        } else {
            0.0
        }
    }

    fn declared(&self) -> DeclaredParams {
        // |η - 1/2| = |x_0 - 1/2| and Δ = |1 - 2 x_0|
        DeclaredParams {
            alpha: 1.0,
            smoothness: 1.0,
            beta: 1.0,
            c_beta: 1.0,
            c_beta_prime: 1.0,
            tau: 0.0,
            mu_min: 1.0,
            mu_max: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed3;

    impl LabelProblem for Fixed3 {
        fn dim(&self) -> usize {
            1
        }
        fn num_labels(&self) -> usize {
            3
        }
        fn label_probs(&self, _x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[0.0, 1.0, 0.0]);
        }
        fn sample_x(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
            out[0] = rng.random();
        }
        fn density(&self, _x: &[f64]) -> f64 {
            1.0
        }
        fn declared(&self) -> DeclaredParams {
            LinearEta { dim: 1 }.declared()
        }
    }

    #[test]
    fn indicator_of_realised_label() {
        let p = convert_classification(Fixed3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = [0.5; 3];
        p.sample_costs(&[0.3], &mut rng, &mut c);
        assert_eq!(c, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn expected_costs_complement_probabilities() {
        let p = convert_classification(LinearEta { dim: 1 });
        // P(Y=1|x) = 0.7 at x = 0.3
        let mut f = [0.0; 2];
        p.expected_costs(&[0.3], &mut f);
        assert!((f[0] - 0.3).abs() < 1e-15 && (f[1] - 0.7).abs() < 1e-15);
        assert_eq!(p.bayes_label(&[0.3]), Label::new(0));
    }
}
