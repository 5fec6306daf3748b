//! Per-cell cost estimates and clipped confidence bounds.
//!
//! For a cell at depth `h` queried `n_a` times, each candidate label gets
//!
//! ```text
//! V(n_a) = sqrt(ln(2 n^3 M) / (2 n_a))
//! B_h    = L · (nu2 · rho^h)^alpha
//! raw    = mean ∓ (V(n_a) + B_h)
//! ```
//!
//! and the stored bounds are the running max of raw lower bounds and running
//! min of raw upper bounds.

use std::cmp::Ordering;
use std::ops::Sub;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::partition::PartitionGeometry;

/// A real number or one of the two infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    fn rank(self) -> (i8, f64) {
        match self {
            ExtReal::NegInf => (-1, 0.0),
            ExtReal::Finite(v) => (0, v),
            ExtReal::PosInf => (1, 0.0),
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        let (a, x) = self.rank();
        let (b, y) = other.rank();
        a.cmp(&b).then(x.total_cmp(&y))
    }

    pub fn max(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Lossy conversion for plotting and comparisons against plain floats.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;

    /// `∞ - ∞` cannot arise for upper-minus-lower widths; it is mapped to `+∞`.
    fn sub(self, rhs: Self) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (Finite(a), Finite(b)) => Finite(a - b),
            (PosInf, _) | (_, NegInf) => PosInf,
            (NegInf, _) | (_, PosInf) => NegInf,
        }
    }
}

/// Quantities shared by all bounds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub budget: u64,
    pub num_labels: usize,
    pub alpha: f64,
    pub smoothness: f64,
    pub geometry: PartitionGeometry,
}

impl BoundParams {
    pub fn new(
        budget: u64,
        num_labels: usize,
        alpha: f64,
        smoothness: f64,
        geometry: PartitionGeometry,
    ) -> Result<Self> {
        let p = Self {
            budget,
            num_labels,
            alpha,
            smoothness,
            geometry,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        if self.num_labels < 2 {
            return Err(Error::InvalidInput("need at least two labels".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "smoothness constant must be positive, got {}",
                self.smoothness
            )));
        }
        self.geometry.validate()
    }

    /// `ln(2 n^3 M)`, computed in log space.
    pub fn log_term(&self) -> f64 {
        2f64.ln() + 3.0 * (self.budget as f64).ln() + (self.num_labels as f64).ln()
    }

    /// Hoeffding width after `n_a` interactions.
    pub fn v_bound(&self, n_a: u64) -> Result<f64> {
        if n_a == 0 {
            return Err(Error::InvalidInput("V(n_a) is undefined for n_a = 0".into()));
        }
        Ok((self.log_term() / (2.0 * n_a as f64)).sqrt())
    }

    /// Smoothness bias of a depth-`h` cell.
    pub fn b_h(&self, depth: u32) -> f64 {
        self.smoothness * (self.geometry.nu2 * self.geometry.scale(depth)).powf(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelBounds {
    pub mean: f64,
    pub lower: ExtReal,
    pub upper: ExtReal,
    /// Costs of this label observed at this cell.
    pub observations: u64,
}

impl LabelBounds {
    fn untouched() -> Self {
        Self {
            mean: 0.0,
            lower: ExtReal::NegInf,
            upper: ExtReal::PosInf,
            observations: 0,
        }
    }
}

/// Interaction count and per-label estimates of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRecord {
    pub count: u64,
    pub labels: Vec<LabelBounds>,
}

impl ConfidenceRecord {
    pub fn new(num_labels: usize) -> Self {
        Self {
            count: 0,
            labels: vec![LabelBounds::untouched(); num_labels],
        }
    }

    pub fn bounds(&self, label: Label) -> &LabelBounds {
        &self.labels[label.index()]
    }

    /// Fold one interaction into the record. Only `candidates` are touched.
    pub fn record_costs(
        &mut self,
        costs: &[f64],
        candidates: &[Label],
        params: &BoundParams,
        depth: u32,
    ) -> Result<()> {
        for &y in candidates {
            let c = *costs
                .get(y.index())
                .ok_or_else(|| Error::Oracle(format!("no cost returned for label {y}")))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Oracle(format!("cost {c} for label {y} outside [0,1]")));
            }
        }
        self.count += 1;
        let width = params.v_bound(self.count)? + params.b_h(depth);
        for &y in candidates {
            let b = &mut self.labels[y.index()];
            b.observations += 1;
            b.mean += (costs[y.index()] - b.mean) / b.observations as f64;
            b.lower = b.lower.max(ExtReal::Finite(b.mean - width));
            b.upper = b.upper.min(ExtReal::Finite(b.mean + width));
        }
        Ok(())
    }

    /// Record for a child cell: bounds copied, estimates and counts cleared.
    pub fn inherit(&self) -> Self {
        Self {
            count: 0,
            labels: self
                .labels
                .iter()
                .map(|b| LabelBounds {
                    mean: 0.0,
                    lower: b.lower,
                    upper: b.upper,
                    observations: 0,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, m: usize, alpha: f64, d: usize) -> BoundParams {
        BoundParams::new(n, m, alpha, 1.0, PartitionGeometry::dyadic(d).unwrap()).unwrap()
    }

    #[test]
    fn v_bound_values() {
        let p = params(10, 2, 1.0, 1);
        // sqrt(ln(4000)/10)
        assert!((p.v_bound(5).unwrap() - 0.910_716_730_937_893).abs() < 1e-12);
        let ratio = p.v_bound(5).unwrap() / p.v_bound(10).unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-14);
        let p = params(100, 2, 1.0, 1);
        assert!((p.v_bound(100).unwrap() - 0.275_697_342_380_047).abs() < 1e-12);
        assert!(p.v_bound(0).is_err());
    }

    #[test]
    fn b_h_values() {
        assert_eq!(params(10, 2, 1.0, 1).b_h(0), 1.0);
        assert_eq!(params(10, 2, 1.0, 1).b_h(3), 0.125);
        let b = params(10, 2, 0.5, 2).b_h(2);
        assert!((b - (2f64.sqrt() * 0.5).sqrt()).abs() < 1e-12);
        assert!((b - 0.840_896_415_253_714_5).abs() < 1e-12);
    }

    #[test]
    fn first_update_and_clipping() {
        let p = params(100, 2, 1.0, 1);
        let mut rec = ConfidenceRecord::new(2);
        rec.record_costs(&[0.5, 0.5], &Label::all(2), &p, 0).unwrap();
        let w = p.v_bound(1).unwrap() + p.b_h(0);
        let b = rec.bounds(Label::FIRST);
        assert_eq!(b.mean, 0.5);
        assert_eq!(b.lower, ExtReal::Finite(0.5 - w));
        assert_eq!(b.upper, ExtReal::Finite(0.5 + w));

        let mut rec = ConfidenceRecord::new(1);
        rec.labels[0].lower = ExtReal::Finite(0.25);
        rec.labels[0].upper = ExtReal::Finite(0.6);
        rec.count = 3;
        rec.record_costs(&[0.5], &[Label::FIRST], &p, 0).unwrap();
        assert_eq!(rec.labels[0].lower, ExtReal::Finite(0.25));
        assert_eq!(rec.labels[0].upper, ExtReal::Finite(0.6));
    }

    #[test]
    fn constant_costs_average_exactly() {
        let p = params(1000, 2, 1.0, 1);
        let mut rec = ConfidenceRecord::new(2);
        for _ in 0..37 {
            rec.record_costs(&[0.3, 0.7], &Label::all(2), &p, 2).unwrap();
        }
        assert_eq!(rec.count, 37);
        assert!((rec.labels[0].mean - 0.3).abs() < 1e-15);
        assert!((rec.labels[1].mean - 0.7).abs() < 1e-15);
    }

    #[test]
    fn non_candidates_untouched() {
        let p = params(1000, 3, 1.0, 1);
        let mut rec = ConfidenceRecord::new(3);
        rec.record_costs(&[0.3, 0.7, 0.1], &[Label::new(0), Label::new(2)], &p, 0).unwrap();
        assert_eq!(rec.labels[1], LabelBounds::untouched());
        assert_eq!(rec.labels[2].observations, 1);
    }

    #[test]
    fn rejects_out_of_range_costs() {
        let p = params(10, 2, 1.0, 1);
        let mut rec = ConfidenceRecord::new(2);
        assert!(matches!(
            rec.record_costs(&[1.5, 0.0], &Label::all(2), &p, 0),
            Err(Error::Oracle(_))
        ));
        assert_eq!(rec.count, 0);
    }

    #[test]
    fn inherit_copies_bounds_only() {
        let p = params(100, 2, 1.0, 1);
        let mut parent = ConfidenceRecord::new(2);
        parent.labels[0].lower = ExtReal::Finite(0.2);
        parent.labels[0].upper = ExtReal::Finite(0.7);
        parent.labels[0].mean = 0.45;
        parent.count = 12;
        let child = parent.inherit();
        assert_eq!(child.count, 0);
        assert_eq!(child.labels[0].lower, ExtReal::Finite(0.2));
        assert_eq!(child.labels[0].upper, ExtReal::Finite(0.7));
        assert_eq!(child.labels[1].lower, ExtReal::NegInf);
        assert_eq!(child.labels[1].upper, ExtReal::PosInf);

        // first own update is clipped against the inherited bounds
        let mut child = child;
        child.record_costs(&[0.45, 0.5], &Label::all(2), &p, 1).unwrap();
        assert_eq!(child.labels[0].lower, ExtReal::Finite(0.2));
        assert_eq!(child.labels[0].upper, ExtReal::Finite(0.7));
    }

    #[test]
    fn ext_real_arithmetic() {
        use ExtReal::*;
        assert_eq!(PosInf - NegInf, PosInf);
        assert_eq!(Finite(0.4) - NegInf, PosInf);
        assert_eq!(PosInf - Finite(0.2), PosInf);
        assert_eq!(Finite(0.4) - Finite(0.1), Finite(0.4 - 0.1));
        assert!(NegInf < Finite(-1e300) && Finite(1e300) < PosInf);
        assert_eq!(Finite(0.2).max(NegInf), Finite(0.2));
        assert_eq!(Finite(0.2).min(PosInf), Finite(0.2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounds_only_tighten(costs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..60), depth in 0u32..8) {
                let p = params(500, 2, 1.0, 1);
                let mut rec = ConfidenceRecord::new(2);
                let mut prev = rec.clone();
                for (a, b) in costs {
                    rec.record_costs(&[a, b], &Label::all(2), &p, depth).unwrap();
                    for y in 0..2 {
                        prop_assert!(rec.labels[y].lower >= prev.labels[y].lower);
                        prop_assert!(rec.labels[y].upper <= prev.labels[y].upper);
                        prop_assert!(rec.labels[y].lower <= rec.labels[y].upper);
                    }
                    prev = rec.clone();
                }
            }
        }
    }
}
