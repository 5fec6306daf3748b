//! The active learning loop.
//!
//! Each step picks the unclassified cell with the largest uncertainty
//! `I = min_y U(y) - min_y L(y)` (ties: shallowest, then lowest index). If its
//! Hoeffding width has dropped to twice its bias, `V(count) <= 2·B_h`, the
//! cell is replaced by its two children, which inherit bounds and candidate
//! labels. Otherwise the costs of all candidate labels are queried once at
//! the cell center (one unit of budget), bounds are updated, labels whose
//! lower bound exceeds the smallest upper bound are dropped, and a cell left
//! with a single label becomes classified.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{BoundParams, ConfidenceRecord, ExtReal};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::partition::{check_point, Cell};
use crate::problems::Problem;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Unclassified,
    Classified(Label),
    Refined,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub cell: Cell,
    pub record: ConfidenceRecord,
    pub candidates: Vec<Label>,
    pub status: CellStatus,
    pub parent: Option<NodeId>,
    pub children: Option<(NodeId, NodeId)>,
    version: u64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// `min U - min L` over the candidate labels.
    pub fn uncertainty(&self) -> Result<ExtReal> {
        uncertainty(&self.record, &self.candidates)
    }
}

pub fn uncertainty(record: &ConfidenceRecord, candidates: &[Label]) -> Result<ExtReal> {
    if candidates.is_empty() {
        return Err(Error::Invariant("uncertainty of a cell without candidate labels".into()));
    }
    let min_u = candidates
        .iter()
        .map(|&y| record.bounds(y).upper)
        .fold(ExtReal::PosInf, ExtReal::min);
    let min_l = candidates
        .iter()
        .map(|&y| record.bounds(y).lower)
        .fold(ExtReal::PosInf, ExtReal::min);
    Ok(min_u - min_l)
}

/// Candidates whose lower bound does not exceed the smallest upper bound.
///
/// When bounds of a label have crossed (possible only outside the
/// high-probability event) the rule could remove every label; the labels
/// attaining the smallest upper bound are kept in that case.
pub fn eliminate(record: &ConfidenceRecord, candidates: &[Label]) -> Vec<Label> {
    let min_u = candidates
        .iter()
        .map(|&y| record.bounds(y).upper)
        .fold(ExtReal::PosInf, ExtReal::min);
    let kept: Vec<Label> = candidates
        .iter()
        .copied()
        .filter(|&y| record.bounds(y).lower <= min_u)
        .collect();
    if kept.is_empty() {
        candidates
            .iter()
            .copied()
            .filter(|&y| record.bounds(y).upper == min_u)
            .collect()
    } else {
        kept
    }
}

/// `V(count) <= 2·B_h`, never true before the first interaction.
pub fn should_refine(count: u64, depth: u32, params: &BoundParams) -> bool {
    match params.v_bound(count) {
        Ok(v) => v <= 2.0 * params.b_h(depth),
        Err(_) => false,
    }
}

/// Candidate with the smallest upper bound, ties to the smallest label.
pub fn predicted_label(record: &ConfidenceRecord, candidates: &[Label]) -> Label {
    let mut best = candidates[0];
    for &y in &candidates[1..] {
        if record.bounds(y).upper < record.bounds(best).upper {
            best = y;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Query,
    Refine,
    ClassifyCell,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Query => "query",
            Action::Refine => "refine",
            Action::ClassifyCell => "classify-cell",
        }
    }

    pub fn spends_budget(self) -> bool {
        !matches!(self, Action::Refine)
    }
}

/// One row of the step trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: u64,
    pub budget_used: u64,
    pub action: Action,
    pub depth: u32,
    pub index: u128,
    pub unclassified: usize,
    pub classified: usize,
    pub max_depth: u32,
    #[serde(skip)]
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    BudgetExhausted,
    AllClassified,
    DepthCap,
}

#[derive(Debug, Clone, PartialEq)]
struct HeapEntry {
    uncertainty: ExtReal,
    depth: u32,
    index: u128,
    node: NodeId,
    version: u64,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.uncertainty
            .total_cmp(&other.uncertainty)
            .then_with(|| other.depth.cmp(&self.depth))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// State of one run: the cell tree, the selection queue and the counters.
#[derive(Debug, Clone)]
pub struct Learner {
    params: BoundParams,
    nodes: Vec<Node>,
    queue: BinaryHeap<HeapEntry>,
    budget_used: u64,
    steps: u64,
    unclassified: usize,
    classified: usize,
    max_depth: u32,
    active_by_depth: Vec<u64>,
    label_queries: Vec<u64>,
    depth_cap: u32,
    cost_buf: Vec<f64>,
}

impl Learner {
    pub fn new(params: BoundParams) -> Result<Self> {
        params.validate()?;
        let mut learner = Self {
            depth_cap: params.geometry.depth_cap(),
            params,
            nodes: Vec::new(),
            queue: BinaryHeap::new(),
            budget_used: 0,
            steps: 0,
            unclassified: 0,
            classified: 0,
            max_depth: 0,
            active_by_depth: Vec::new(),
            label_queries: vec![0; params.num_labels],
            cost_buf: vec![0.0; params.num_labels],
        };
        let root = Node {
            cell: Cell::root(params.geometry.dim),
            record: ConfidenceRecord::new(params.num_labels),
            candidates: Label::all(params.num_labels),
            status: CellStatus::Unclassified,
            parent: None,
            children: None,
            version: 0,
        };
        learner.push_unclassified(root)?;
        Ok(learner)
    }

    /// Lowers the depth cap below the geometric one.
    pub fn with_depth_cap(mut self, cap: u32) -> Self {
        self.depth_cap = cap.min(self.params.geometry.depth_cap());
        self
    }

    fn push_unclassified(&mut self, node: Node) -> Result<NodeId> {
        let id = self.nodes.len();
        let depth = node.cell.depth as usize;
        if self.active_by_depth.len() <= depth {
            self.active_by_depth.resize(depth + 1, 0);
        }
        self.active_by_depth[depth] += 1;
        self.max_depth = self.max_depth.max(node.cell.depth);
        self.nodes.push(node);
        self.unclassified += 1;
        self.enqueue(id)?;
        Ok(id)
    }

    fn enqueue(&mut self, id: NodeId) -> Result<()> {
        let node = &self.nodes[id];
        self.queue.push(HeapEntry {
            uncertainty: node.uncertainty()?,
            depth: node.cell.depth,
            index: node.cell.index,
            node: id,
            version: node.version,
        });
        Ok(())
    }

    pub fn params(&self) -> &BoundParams {
        &self.params
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn budget_used(&self) -> u64 {
        self.budget_used
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn num_unclassified(&self) -> usize {
        self.unclassified
    }

    pub fn num_classified(&self) -> usize {
        self.classified
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Number of cells at each depth that ever entered the unclassified set.
    pub fn active_by_depth(&self) -> &[u64] {
        &self.active_by_depth
    }

    /// How many times each label's cost was requested.
    pub fn label_queries(&self) -> &[u64] {
        &self.label_queries
    }

    /// Current leaves of the tree, classified or not.
    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_leaf())
    }

    /// Unclassified cell with the largest uncertainty.
    pub fn select(&mut self) -> Option<NodeId> {
        while let Some(top) = self.queue.peek() {
            let node = &self.nodes[top.node];
            if node.status == CellStatus::Unclassified && node.version == top.version {
                return Some(top.node);
            }
            self.queue.pop();
        }
        None
    }

    /// One iteration of the loop. Returns `None` once no unclassified cell is left.
    pub fn step(&mut self, oracle: &dyn Problem, rng: &mut dyn RngCore) -> Result<Option<StepEvent>> {
        let Some(id) = self.select() else {
            return Ok(None);
        };
        let (count, depth) = {
            let n = &self.nodes[id];
            (n.record.count, n.cell.depth)
        };
        let action = if should_refine(count, depth, &self.params) {
            self.refine(id)?;
            Action::Refine
        } else {
            self.query(id, oracle, rng)?
        };
        self.steps += 1;
        let cell = &self.nodes[id].cell;
        Ok(Some(StepEvent {
            t: self.steps,
            budget_used: self.budget_used,
            action,
            depth: cell.depth,
            index: cell.index,
            unclassified: self.unclassified,
            classified: self.classified,
            max_depth: self.max_depth,
            node: id,
        }))
    }

    fn refine(&mut self, id: NodeId) -> Result<()> {
        let (lower, upper) = self.nodes[id].cell.children(self.depth_cap)?;
        self.queue.pop();
        let parent = &mut self.nodes[id];
        parent.status = CellStatus::Refined;
        parent.version += 1;
        let record = parent.record.inherit();
        let candidates = parent.candidates.clone();
        self.unclassified -= 1;
        let mut ids = [0; 2];
        for (slot, cell) in ids.iter_mut().zip([lower, upper]) {
            *slot = self.push_unclassified(Node {
                cell,
                record: record.clone(),
                candidates: candidates.clone(),
                status: CellStatus::Unclassified,
                parent: Some(id),
                children: None,
                version: 0,
            })?;
        }
        self.nodes[id].children = Some((ids[0], ids[1]));
        Ok(())
    }

    fn query(&mut self, id: NodeId, oracle: &dyn Problem, rng: &mut dyn RngCore) -> Result<Action> {
        let center = self.nodes[id].cell.center();
        oracle.sample_costs(&center, rng, &mut self.cost_buf);
        self.budget_used += 1;
        let node = &mut self.nodes[id];
        for &y in &node.candidates {
            self.label_queries[y.index()] += 1;
        }
        node.record
            .record_costs(&self.cost_buf, &node.candidates, &self.params, node.cell.depth)?;
        node.candidates = eliminate(&node.record, &node.candidates);
        node.version += 1;
        self.queue.pop();
        if node.candidates.len() == 1 {
            node.status = CellStatus::Classified(node.candidates[0]);
            self.unclassified -= 1;
            self.classified += 1;
            Ok(Action::ClassifyCell)
        } else {
            self.enqueue(id)?;
            Ok(Action::Query)
        }
    }

    /// Steps until the budget is spent, every cell is classified, or the
    /// depth cap is hit. `on_step` sees every event.
    pub fn run_with(
        &mut self,
        oracle: &dyn Problem,
        rng: &mut dyn RngCore,
        mut on_step: impl FnMut(&Learner, &StepEvent) -> Result<()>,
    ) -> Result<Termination> {
        if oracle.dim() != self.params.geometry.dim || oracle.num_labels() != self.params.num_labels {
            return Err(Error::InvalidInput(format!(
                "oracle has d={}, M={} but the learner expects d={}, M={}",
                oracle.dim(),
                oracle.num_labels(),
                self.params.geometry.dim,
                self.params.num_labels
            )));
        }
        while self.budget_used < self.params.budget {
            match self.step(oracle, rng) {
                Ok(Some(ev)) => on_step(self, &ev)?,
                Ok(None) => return Ok(Termination::AllClassified),
                Err(Error::DepthCap { .. }) => return Ok(Termination::DepthCap),
                Err(e) => return Err(e),
            }
        }
        Ok(Termination::BudgetExhausted)
    }

    pub fn run(&mut self, oracle: &dyn Problem, rng: &mut dyn RngCore) -> Result<Termination> {
        self.run_with(oracle, rng, |_, _| Ok(()))
    }

    /// Snapshot of the current tree as a total classifier.
    pub fn classifier(&self) -> ActiveClassifier {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n.children {
                Some((lo, hi)) => {
                    let axis = n.cell.split_axis();
                    ClassifierNode::Split {
                        axis,
                        threshold: 0.5 * (n.cell.lo[axis] + n.cell.hi[axis]),
                        lower: lo,
                        upper: hi,
                    }
                }
                None => ClassifierNode::Leaf {
                    label: predicted_label(&n.record, &n.candidates),
                    classified: matches!(n.status, CellStatus::Classified(_)),
                },
            })
            .collect();
        ActiveClassifier {
            dim: self.params.geometry.dim,
            nodes,
        }
    }
}

/// A labeling rule on the cube.
pub trait Classifier: Sync {
    fn predict(&self, x: &[f64]) -> Label;
}

impl<F: Fn(&[f64]) -> Label + Sync> Classifier for F {
    fn predict(&self, x: &[f64]) -> Label {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ClassifierNode {
    Split {
        axis: usize,
        threshold: f64,
        lower: NodeId,
        upper: NodeId,
    },
    Leaf {
        label: Label,
        classified: bool,
    },
}

/// Output of the learner: each point gets the smallest-upper-bound candidate
/// of the leaf containing it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveClassifier {
    dim: usize,
    nodes: Vec<ClassifierNode>,
}

impl ActiveClassifier {
    fn leaf(&self, x: &[f64]) -> (Label, bool) {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                ClassifierNode::Split { axis, threshold, lower, upper } => {
                    id = if x[*axis] <= *threshold { *lower } else { *upper };
                }
                ClassifierNode::Leaf { label, classified } => return (*label, *classified),
            }
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<Label> {
        check_point(x, self.dim)?;
        Ok(self.leaf(x).0)
    }

    /// Whether `x` falls in a classified cell.
    pub fn in_classified_region(&self, x: &[f64]) -> bool {
        self.leaf(x).1
    }
}

impl Classifier for ActiveClassifier {
    fn predict(&self, x: &[f64]) -> Label {
        self.leaf(x).0
    }
}

/// Fresh learner run on `oracle` with the RNG seeded from `seed`.
pub fn run(
    params: BoundParams,
    oracle: &dyn Problem,
    seed: u64,
) -> Result<(Learner, ActiveClassifier, Termination)> {
    let mut learner = Learner::new(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let term = learner.run(oracle, &mut rng)?;
    let clf = learner.classifier();
    Ok((learner, clf, term))
}
