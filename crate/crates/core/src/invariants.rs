//! Step-by-step checks of the learner's structural guarantees, plus the
//! coverage check of the empirical means against the true costs.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::confidence::ExtReal;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::learner::{should_refine, uncertainty, Action, CellStatus, Learner, NodeId, StepEvent};
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invariant {
    MonotoneBounds,
    LeavesPartition,
    BudgetAccounting,
    RefinementCondition,
    Inheritance,
    UncertaintyNonIncreasing,
    NonEmptyCandidates,
}

impl Invariant {
    pub const ALL: [Invariant; 7] = [
        Invariant::MonotoneBounds,
        Invariant::LeavesPartition,
        Invariant::BudgetAccounting,
        Invariant::RefinementCondition,
        Invariant::Inheritance,
        Invariant::UncertaintyNonIncreasing,
        Invariant::NonEmptyCandidates,
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub checked: u64,
    pub failed: u64,
}

#[derive(Debug, Clone)]
struct Snapshot {
    bounds: Vec<(ExtReal, ExtReal)>,
    candidates: Vec<Label>,
    uncertainty: ExtReal,
}

impl Snapshot {
    fn of(learner: &Learner, id: NodeId) -> Result<Self> {
        let n = learner.node(id);
        Ok(Self {
            bounds: n.record.labels.iter().map(|b| (b.lower, b.upper)).collect(),
            candidates: n.candidates.clone(),
            uncertainty: uncertainty(&n.record, &n.candidates)?,
        })
    }
}

/// Observes a run through [`Learner::run_with`] and tallies every check.
#[derive(Debug, Clone)]
pub struct InvariantMonitor {
    snapshots: HashMap<NodeId, Snapshot>,
    budget: u64,
    steps: u64,
    tallies: BTreeMap<Invariant, Tally>,
    failures: Vec<String>,
}

impl InvariantMonitor {
    pub fn new(learner: &Learner) -> Result<Self> {
        let mut snapshots = HashMap::new();
        for (id, n) in learner.nodes().iter().enumerate() {
            if n.status == CellStatus::Unclassified {
                snapshots.insert(id, Snapshot::of(learner, id)?);
            }
        }
        Ok(Self {
            snapshots,
            budget: learner.budget_used(),
            steps: learner.steps(),
            tallies: Invariant::ALL.iter().map(|&i| (i, Tally::default())).collect(),
            failures: Vec::new(),
        })
    }

    fn record(&mut self, inv: Invariant, ok: bool, what: impl FnOnce() -> String) {
        let t = self.tallies.get_mut(&inv).expect("all invariants tallied");
        t.checked += 1;
        if !ok {
            t.failed += 1;
            if self.failures.len() < 32 {
                self.failures.push(format!("{inv:?}: {}", what()));
            }
        }
    }

    pub fn observe(&mut self, learner: &Learner, ev: &StepEvent) -> Result<()> {
        let id = ev.node;
        let node = learner.node(id);
        let before = self
            .snapshots
            .remove(&id)
            .ok_or_else(|| Error::Invariant(format!("step on unknown cell {id}")))?;

        let (prev_steps, prev_budget) = (self.steps, self.budget);
        self.record(Invariant::BudgetAccounting, learner.steps() == prev_steps + 1, || {
            format!("step counter {} after {prev_steps}", learner.steps())
        });
        let spent = if ev.action.spends_budget() { 1 } else { 0 };
        let budget_ok = learner.budget_used() == prev_budget + spent
            && ev.budget_used == learner.budget_used()
            && learner.budget_used() <= learner.params().budget;
        self.record(Invariant::BudgetAccounting, budget_ok, || {
            format!("budget {} after {prev_budget} on {:?}", learner.budget_used(), ev.action)
        });
        self.steps = learner.steps();
        self.budget = learner.budget_used();

        match ev.action {
            Action::Refine => {
                let refine_ok = node.status == CellStatus::Refined
                    && should_refine(node.record.count, node.cell.depth, learner.params());
                self.record(Invariant::RefinementCondition, refine_ok, || {
                    format!("cell {:?} refined with count {}", node.cell.key(), node.record.count)
                });
                let (a, b) = node
                    .children
                    .ok_or_else(|| Error::Invariant("refined cell without children".into()))?;
                for child in [a, b] {
                    let c = learner.node(child);
                    let same_bounds = c
                        .record
                        .labels
                        .iter()
                        .zip(&before.bounds)
                        .all(|(cb, &(l, u))| cb.lower == l && cb.upper == u && cb.observations == 0);
                    let ok = same_bounds
                        && c.record.count == 0
                        && c.candidates == before.candidates
                        && c.parent == Some(id);
                    self.record(Invariant::Inheritance, ok, || {
                        format!("child {:?} of {:?}", c.cell.key(), node.cell.key())
                    });
                    self.snapshots.insert(child, Snapshot::of(learner, child)?);
                }
                let (ca, cb) = (&learner.node(a).cell, &learner.node(b).cell);
                let axis = node.cell.split_axis();
                let tiles = ca.lo == node.cell.lo
                    && cb.hi == node.cell.hi
                    && ca.hi[axis] == cb.lo[axis]
                    && (0..node.cell.dim()).all(|k| k == axis || (ca.hi[k] == cb.hi[k] && ca.lo[k] == cb.lo[k]));
                self.record(Invariant::LeavesPartition, tiles, || {
                    format!("children of {:?} do not tile it", node.cell.key())
                });
            }
            Action::Query | Action::ClassifyCell => {
                let monotone = node
                    .record
                    .labels
                    .iter()
                    .zip(&before.bounds)
                    .all(|(b, &(l, u))| b.lower >= l && b.upper <= u);
                self.record(Invariant::MonotoneBounds, monotone, || {
                    format!("bounds of {:?} loosened", node.cell.key())
                });
                let subset = node.candidates.iter().all(|y| before.candidates.contains(y));
                let status_ok = match node.status {
                    CellStatus::Classified(y) => {
                        ev.action == Action::ClassifyCell && node.candidates == [y]
                    }
                    CellStatus::Unclassified => ev.action == Action::Query && node.candidates.len() > 1,
                    CellStatus::Refined => false,
                };
                self.record(
                    Invariant::NonEmptyCandidates,
                    !node.candidates.is_empty() && subset && status_ok,
                    || format!("candidates of {:?}: {:?}", node.cell.key(), node.candidates),
                );
                let now = uncertainty(&node.record, &node.candidates)?;
                self.record(Invariant::UncertaintyNonIncreasing, now <= before.uncertainty, || {
                    format!("uncertainty of {:?} rose {:?} -> {:?}", node.cell.key(), before.uncertainty, now)
                });
                if node.status == CellStatus::Unclassified {
                    self.snapshots.insert(id, Snapshot::of(learner, id)?);
                }
            }
        }

        let volume: f64 = learner.leaves().map(|(_, n)| n.cell.volume()).sum();
        let live = learner.leaves().count();
        let counts = live == learner.num_classified() + learner.num_unclassified()
            && learner.num_unclassified() == self.snapshots.len();
        self.record(Invariant::LeavesPartition, (volume - 1.0).abs() < 1e-12 && counts, || {
            format!("leaf volume {volume}, {live} leaves")
        });
        Ok(())
    }

    pub fn tallies(&self) -> &BTreeMap<Invariant, Tally> {
        &self.tallies
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }

    pub fn all_passed(&self) -> bool {
        self.tallies.values().all(|t| t.failed == 0)
    }
}

/// Number of (cell, label) pairs whose empirical mean is farther than
/// `V(observations)` from the true cost at the cell center.
pub fn coverage_violations(learner: &Learner, problem: &dyn Problem) -> Result<usize> {
    let mut f = vec![0.0; problem.num_labels()];
    let mut bad = 0;
    for n in learner.nodes() {
        problem.expected_costs(&n.cell.center(), &mut f);
        for (b, &fy) in n.record.labels.iter().zip(&f) {
            if b.observations == 0 {
                continue;
            }
            if (b.mean - fy).abs() > learner.params().v_bound(b.observations)? {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::BoundParams;
    use crate::partition::PartitionGeometry;
    use crate::problems::{make_smooth_problem, CostFamily, Marginal, NoiseModel, SmoothSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn monitored(family: CostFamily, noise: NoiseModel, d: usize, n: u64, seed: u64) -> InvariantMonitor {
        let p = make_smooth_problem(SmoothSpec { dim: d, family, marginal: Marginal::Uniform }, noise).unwrap();
        let params = BoundParams::new(n, 2, 1.0, 1.0, PartitionGeometry::dyadic(d).unwrap()).unwrap();
        let mut l = Learner::new(params).unwrap();
        let mut mon = InvariantMonitor::new(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        l.run_with(&p, &mut rng, |l, ev| mon.observe(l, ev)).unwrap();
        mon
    }

    #[test]
    fn ramp_runs_pass_all_checks() {
        for (noise, seed) in [(NoiseModel::ZeroNoise, 0), (NoiseModel::Bernoulli, 1), (NoiseModel::Bernoulli, 2)] {
            for d in 1..=2 {
                let mon = monitored(CostFamily::Ramp { slope: 1.0, flat_width: 0.0, center: 0.5, center_jitter: 0.0 }, noise, d, 1500, seed);
                assert!(mon.all_passed(), "{:?}", mon.failures());
                assert!(mon.tallies().values().all(|t| t.checked > 0), "{:?}", mon.tallies());
            }
        }
    }

    #[test]
    fn detects_a_loosened_bound() {
        let p = make_smooth_problem(
            SmoothSpec { dim: 1, family: CostFamily::Smoothstep, marginal: Marginal::Uniform },
            NoiseModel::ZeroNoise,
        )
        .unwrap();
        let params = BoundParams::new(50, 2, 1.0, 1.0, PartitionGeometry::dyadic(1).unwrap()).unwrap();
        let mut l = Learner::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        l.step(&p, &mut rng).unwrap();
        let mut mon = InvariantMonitor::new(&l).unwrap();
        // shrink the stored snapshot so the next (legitimate) update looks like a loosening
        for s in mon.snapshots.values_mut() {
            for b in &mut s.bounds {
                b.1 = ExtReal::Finite(-1.0);
            }
        }
        let ev = l.step(&p, &mut rng).unwrap().unwrap();
        mon.observe(&l, &ev).unwrap();
        assert!(!mon.all_passed());
        assert_eq!(mon.tallies()[&Invariant::MonotoneBounds].failed, 1);
    }

    #[test]
    fn zero_noise_means_are_covered() {
        let p = make_smooth_problem(
            SmoothSpec { dim: 1, family: CostFamily::Ramp { slope: 1.0, flat_width: 0.0, center: 0.5, center_jitter: 0.0 }, marginal: Marginal::Uniform },
            NoiseModel::ZeroNoise,
        )
        .unwrap();
        let params = BoundParams::new(400, 2, 1.0, 1.0, PartitionGeometry::dyadic(1).unwrap()).unwrap();
        let (l, _, _) = crate::learner::run(params, &p, 0).unwrap();
        assert_eq!(coverage_violations(&l, &p).unwrap(), 0);
    }
}
