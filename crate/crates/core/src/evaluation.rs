//! Excess-risk estimation, the passive histogram baseline, log-log slope
//! fits and the replicated budget sweep.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::BoundParams;
use crate::error::{Error, Result};
use crate::label::{argmin, Label};
use crate::learner::{ActiveClassifier, Classifier, Learner, StepEvent, Termination};
use crate::partition::PartitionGeometry;
use crate::problems::{Converted, LabelProblem, NoiseModel, Problem, ProblemSpec};

const ORACLE_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;
const PASSIVE_STREAM: u64 = 2;
const BOOTSTRAP_STREAM: u64 = 3;
const PROBLEM_STREAM: u64 = 5;

/// Independent RNG stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self { estimate: mean, stderr: (var / nf).sqrt() }
    }
}

fn check_num_eval(num_eval: usize) -> Result<()> {
    if num_eval == 0 {
        return Err(Error::InvalidInput("num_eval must be at least 1".into()));
    }
    Ok(())
}

/// Monte-Carlo `E[f(X; g(X)) - min_y f(X; y)]` under `P_X`, using exact costs.
pub fn excess_risk(
    classifier: &dyn Classifier,
    problem: &dyn Problem,
    num_eval: usize,
    rng: &mut dyn RngCore,
) -> Result<Estimate> {
    check_num_eval(num_eval)?;
    let mut x = vec![0.0; problem.dim()];
    let mut f = vec![0.0; problem.num_labels()];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..num_eval {
        problem.sample_x(rng, &mut x);
        problem.expected_costs(&x, &mut f);
        let best = f.iter().copied().fold(f64::INFINITY, f64::min);
        let v = f[classifier.predict(&x).index()] - best;
        s += v;
        s2 += v * v;
    }
    Ok(Estimate::from_samples(s, s2, num_eval))
}

/// Same quantity from sampled costs `c(g(X)) - c(g*(X))`; unbiased but noisier.
pub fn sampled_excess_risk(
    classifier: &dyn Classifier,
    problem: &dyn Problem,
    num_eval: usize,
    rng: &mut dyn RngCore,
) -> Result<Estimate> {
    check_num_eval(num_eval)?;
    let mut x = vec![0.0; problem.dim()];
    let mut c = vec![0.0; problem.num_labels()];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..num_eval {
        problem.sample_x(rng, &mut x);
        let bayes = problem.bayes_label(&x);
        problem.sample_costs(&x, rng, &mut c);
        let v = c[classifier.predict(&x).index()] - c[bayes.index()];
        s += v;
        s2 += v * v;
    }
    Ok(Estimate::from_samples(s, s2, num_eval))
}

/// Paired estimates of the cost-sensitive excess risk of the converted
/// problem and the plain classification excess error, on shared draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConversionCheck {
    pub cost_sensitive: Estimate,
    pub classification: Estimate,
    /// Standard error of the per-point difference.
    pub joint_stderr: f64,
}

/// `ε_cs` from the converted problem's exact costs, `ε_cl` from realised
/// labels `1{Y != g(X)} - 1{Y != g*(X)}` with `g*` the most probable label.
pub fn conversion_check<P: LabelProblem>(
    classifier: &dyn Classifier,
    converted: &Converted<P>,
    num_eval: usize,
    rng: &mut dyn RngCore,
) -> Result<ConversionCheck> {
    check_num_eval(num_eval)?;
    let labels = converted.inner();
    let m = labels.num_labels();
    let mut x = vec![0.0; labels.dim()];
    let mut p = vec![0.0; m];
    let mut f = vec![0.0; m];
    let mut acc = [0.0f64; 6];
    for _ in 0..num_eval {
        labels.sample_x(rng, &mut x);
        converted.expected_costs(&x, &mut f);
        let g = classifier.predict(&x);
        let cs = f[g.index()] - f.iter().copied().fold(f64::INFINITY, f64::min);
        labels.label_probs(&x, &mut p);
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        let most_probable = argmin(&neg);
        let y = labels.sample_label(&x, rng);
        let cl = f64::from(u8::from(y != g)) - f64::from(u8::from(y != most_probable));
        let diff = cs - cl;
        for (a, v) in acc.iter_mut().zip([cs, cs * cs, cl, cl * cl, diff, diff * diff]) {
            *a += v;
        }
    }
    Ok(ConversionCheck {
        cost_sensitive: Estimate::from_samples(acc[0], acc[1], num_eval),
        classification: Estimate::from_samples(acc[2], acc[3], num_eval),
        joint_stderr: Estimate::from_samples(acc[4], acc[5], num_eval).stderr,
    })
}

/// Fraction of `P_X` mass lying in classified cells.
pub fn classified_mass(clf: &ActiveClassifier, problem: &dyn Problem, num_eval: usize, rng: &mut dyn RngCore) -> Result<f64> {
    check_num_eval(num_eval)?;
    let mut x = vec![0.0; problem.dim()];
    let mut hits = 0usize;
    for _ in 0..num_eval {
        problem.sample_x(rng, &mut x);
        hits += usize::from(clf.in_classified_region(&x));
    }
    Ok(hits as f64 / num_eval as f64)
}

/// Index of the depth-`depth` dyadic cell owning `x` (shared faces go to the
/// lower cell).
pub fn cell_index(x: &[f64], depth: u32) -> u128 {
    let d = x.len();
    let mut lo = vec![0.0; d];
    let mut hi = vec![1.0; d];
    let mut index: u128 = 1;
    for h in 0..depth {
        let axis = h as usize % d;
        let mid = 0.5 * (lo[axis] + hi[axis]);
        if x[axis] <= mid {
            hi[axis] = mid;
            index = 2 * index - 1;
        } else {
            lo[axis] = mid;
            index *= 2;
        }
    }
    index
}

/// Depth `round(ln n / ((2α + d) ln(1/ρ)))`, capped by the geometry.
pub fn passive_depth(budget: u64, alpha: f64, geometry: &PartitionGeometry) -> u32 {
    let n = budget.max(1) as f64;
    let h = (n.ln() / ((2.0 * alpha + geometry.dim as f64) * (1.0 / geometry.rho).ln())).round();
    (h.max(0.0) as u32).min(geometry.depth_cap())
}

/// Fixed-depth histogram plug-in classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramClassifier {
    pub depth: u32,
    labels: HashMap<u128, Label>,
}

impl HistogramClassifier {
    /// Number of cells that received at least one sample.
    pub fn occupied_cells(&self) -> usize {
        self.labels.len()
    }

    pub fn is_occupied(&self, x: &[f64]) -> bool {
        self.labels.contains_key(&cell_index(x, self.depth))
    }
}

impl Classifier for HistogramClassifier {
    fn predict(&self, x: &[f64]) -> Label {
        self.labels
            .get(&cell_index(x, self.depth))
            .copied()
            .unwrap_or(Label::FIRST)
    }
}

/// `n` i.i.d. pairs `(X, c)`, per-cell cost averages at [`passive_depth`],
/// per-cell argmin; cells without samples predict the first label.
pub fn passive_baseline(
    budget: u64,
    problem: &dyn Problem,
    alpha: f64,
    geometry: &PartitionGeometry,
    rng: &mut dyn RngCore,
) -> Result<HistogramClassifier> {
    if budget == 0 {
        return Err(Error::InvalidInput("passive budget must be at least 1".into()));
    }
    if geometry.dim != problem.dim() {
        return Err(Error::InvalidInput("geometry and problem dimensions differ".into()));
    }
    let depth = passive_depth(budget, alpha, geometry);
    let m = problem.num_labels();
    let mut sums: HashMap<u128, (u64, Vec<f64>)> = HashMap::new();
    let mut x = vec![0.0; problem.dim()];
    let mut c = vec![0.0; m];
    for _ in 0..budget {
        problem.sample_x(rng, &mut x);
        problem.sample_costs(&x, rng, &mut c);
        let entry = sums.entry(cell_index(&x, depth)).or_insert_with(|| (0, vec![0.0; m]));
        entry.0 += 1;
        for (s, v) in entry.1.iter_mut().zip(&c) {
            *s += v;
        }
    }
    let labels = sums
        .into_iter()
        .map(|(k, (cnt, s))| {
            let means: Vec<f64> = s.iter().map(|v| v / cnt as f64).collect();
            (k, argmin(&means))
        })
        .collect();
    Ok(HistogramClassifier { depth, labels })
}

/// Least-squares line through `(ln n, ln risk)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Budgets left out because their risk was not positive.
    pub dropped: Vec<u64>,
}

pub fn rate_fit(budgets: &[u64], risks: &[f64]) -> Result<RateFit> {
    if budgets.len() != risks.len() {
        return Err(Error::InvalidInput("budgets and risks differ in length".into()));
    }
    let mut dropped = Vec::new();
    let mut pts = Vec::new();
    for (&n, &r) in budgets.iter().zip(risks) {
        if r > 0.0 && r.is_finite() && n > 0 {
            pts.push(((n as f64).ln(), r.ln()));
        } else {
            dropped.push(n);
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs 3 positive risks, {} left after dropping {dropped:?}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("slope fit needs distinct budgets".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr: (sse / (k - 2.0) / sxx).sqrt(),
        dropped,
    })
}

/// Percentile interval of the slope when replicates are resampled within
/// each budget. `per_budget[i]` holds the replicate risks at `budgets[i]`.
pub fn bootstrap_slope_ci(
    budgets: &[u64],
    per_budget: &[Vec<f64>],
    resamples: usize,
    level: f64,
    rng: &mut dyn RngCore,
) -> Option<(f64, f64)> {
    let mut slopes = Vec::with_capacity(resamples);
    let mut means = vec![0.0; budgets.len()];
    for _ in 0..resamples {
        for (m, reps) in means.iter_mut().zip(per_budget) {
            if reps.is_empty() {
                return None;
            }
            *m = (0..reps.len()).map(|_| reps[rng.random_range(0..reps.len())]).sum::<f64>() / reps.len() as f64;
        }
        if let Ok(fit) = rate_fit(budgets, &means) {
            slopes.push(fit.slope);
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    let tail = (1.0 - level) / 2.0;
    Some((q(tail), q(1.0 - tail)))
}

/// Flat-mass threshold `(c · ln(2 n³ M) / n)^{αβ / (2α + d - αβ)}` separating
/// the two rate regimes.
pub fn tau0(budget: u64, num_labels: usize, alpha: f64, beta: f64, dim: usize, c: f64) -> Result<f64> {
    let denom = 2.0 * alpha + dim as f64 - alpha * beta;
    if denom <= 0.0 || budget == 0 {
        return Err(Error::InvalidInput(format!("tau0 undefined for n={budget}, 2α+d-αβ={denom}")));
    }
    let n = budget as f64;
    let log = (2.0 * n.powi(3) * num_labels as f64).ln();
    Ok((c * log / n).powf(alpha * beta / denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "tau>=tau0")]
    FlatDominated,
    #[serde(rename = "tau<tau0")]
    MarginDominated,
}

impl Regime {
    pub fn classify(tau: f64, tau0: f64) -> Self {
        if tau >= tau0 {
            Regime::FlatDominated
        } else {
            Regime::MarginDominated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Active,
    Passive,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Active => "active",
            LearnerKind::Passive => "passive",
        }
    }
}

/// Outcome of one (learner, budget, replicate) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub learner: LearnerKind,
    pub budget: u64,
    pub replicate: u32,
    pub seed: u64,
    pub excess_risk: f64,
    pub excess_risk_stderr: f64,
    pub max_depth: u32,
    pub classified_mass: f64,
    pub queries_total: u64,
    pub queries_per_label: Vec<u64>,
    pub active_by_depth: Vec<u64>,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learning {
    pub alpha: f64,
    pub smoothness: f64,
    pub geometry: PartitionGeometry,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub budgets: Vec<u64>,
    pub replicates: u32,
    pub base_seed: u64,
    pub num_eval: usize,
    pub learning: Learning,
    pub include_passive: bool,
    pub bootstrap_resamples: usize,
    pub c_tau0: f64,
    /// Worker count; results do not depend on it, so it is not reported.
    #[serde(skip, default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetSummary {
    pub budget: u64,
    pub mean_excess_risk: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub mean_active_by_depth: Vec<f64>,
    pub max_depth: u32,
    pub mean_classified_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub fit: RateFit,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeTag {
    pub budget: u64,
    pub tau0: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub problem_hash: String,
    pub problem: ProblemSpec,
    pub settings: SweepSettings,
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub regimes: Vec<RegimeTag>,
    pub active: Vec<BudgetSummary>,
    pub passive: Vec<BudgetSummary>,
    pub active_slope: Option<SlopeReport>,
    pub passive_slope: Option<SlopeReport>,
    pub warnings: Vec<String>,
}

/// The problem seen by replicate `k` of `count`, whose seed is `seed`.
pub fn replicate_problem(
    spec: &ProblemSpec,
    seed: u64,
    k: u32,
    count: u32,
    noise: NoiseModel,
) -> Result<Box<dyn Problem>> {
    spec.resolve(&mut stream_rng(seed, PROBLEM_STREAM), k, count).build(noise)
}

pub fn learner_params(budget: u64, problem: &dyn Problem, learning: &Learning) -> Result<BoundParams> {
    BoundParams::new(budget, problem.num_labels(), learning.alpha, learning.smoothness, learning.geometry)
}

/// One active run and its evaluation. The oracle, evaluation and passive
/// samplers use separate streams of `seed`.
pub fn active_replicate(
    problem: &dyn Problem,
    budget: u64,
    replicate: u32,
    seed: u64,
    learning: &Learning,
    num_eval: usize,
    trace: Option<&mut Vec<StepEvent>>,
) -> Result<(ReplicateRow, ActiveClassifier)> {
    let params = learner_params(budget, problem, learning)?;
    let mut learner = Learner::new(params)?;
    let mut rng = stream_rng(seed, ORACLE_STREAM);
    let termination = match trace {
        Some(events) => learner.run_with(problem, &mut rng, |_, ev| {
            events.push(ev.clone());
            Ok(())
        })?,
        None => learner.run(problem, &mut rng)?,
    };
    let clf = learner.classifier();
    let risk = excess_risk(&clf, problem, num_eval, &mut stream_rng(seed, EVAL_STREAM))?;
    let mass = classified_mass(&clf, problem, num_eval, &mut stream_rng(seed, EVAL_STREAM))?;
    let row = ReplicateRow {
        learner: LearnerKind::Active,
        budget,
        replicate,
        seed,
        excess_risk: risk.estimate,
        excess_risk_stderr: risk.stderr,
        max_depth: learner.max_depth(),
        classified_mass: mass,
        queries_total: learner.budget_used(),
        queries_per_label: learner.label_queries().to_vec(),
        active_by_depth: learner.active_by_depth().to_vec(),
        termination: Some(termination),
    };
    Ok((row, clf))
}

pub fn passive_replicate(
    problem: &dyn Problem,
    budget: u64,
    replicate: u32,
    seed: u64,
    learning: &Learning,
    num_eval: usize,
) -> Result<ReplicateRow> {
    let clf = passive_baseline(budget, problem, learning.alpha, &learning.geometry, &mut stream_rng(seed, PASSIVE_STREAM))?;
    let risk = excess_risk(&clf, problem, num_eval, &mut stream_rng(seed, EVAL_STREAM))?;
    let mut rng = stream_rng(seed, EVAL_STREAM);
    let mut x = vec![0.0; problem.dim()];
    let mut occupied = 0usize;
    for _ in 0..num_eval {
        problem.sample_x(&mut rng, &mut x);
        occupied += usize::from(clf.is_occupied(&x));
    }
    Ok(ReplicateRow {
        learner: LearnerKind::Passive,
        budget,
        replicate,
        seed,
        excess_risk: risk.estimate,
        excess_risk_stderr: risk.stderr,
        max_depth: clf.depth,
        classified_mass: occupied as f64 / num_eval as f64,
        queries_total: budget,
        queries_per_label: vec![budget; problem.num_labels()],
        active_by_depth: Vec::new(),
        termination: None,
    })
}

fn validate_settings(s: &SweepSettings) -> Result<()> {
    if s.budgets.is_empty() || s.budgets.contains(&0) {
        return Err(Error::InvalidInput("budgets must be a non-empty list of positive integers".into()));
    }
    if s.budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("budgets must be strictly increasing".into()));
    }
    if s.replicates == 0 {
        return Err(Error::InvalidInput("replicates must be at least 1".into()));
    }
    if s.threads == 0 {
        return Err(Error::InvalidInput("threads must be at least 1".into()));
    }
    check_num_eval(s.num_eval)?;
    s.learning.geometry.validate()
}

fn summarize(budget: u64, rows: &[&ReplicateRow]) -> BudgetSummary {
    let r = rows.len() as f64;
    let mean = rows.iter().map(|x| x.excess_risk).sum::<f64>() / r;
    let var = if rows.len() > 1 {
        rows.iter().map(|x| (x.excess_risk - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    let depth_len = rows.iter().map(|x| x.active_by_depth.len()).max().unwrap_or(0);
    let mean_active_by_depth = (0..depth_len)
        .map(|h| rows.iter().map(|x| x.active_by_depth.get(h).copied().unwrap_or(0) as f64).sum::<f64>() / r)
        .collect();
    BudgetSummary {
        budget,
        mean_excess_risk: mean,
        stderr: (var / r).sqrt(),
        replicates: rows.len(),
        mean_active_by_depth,
        max_depth: rows.iter().map(|x| x.max_depth).max().unwrap_or(0),
        mean_classified_mass: rows.iter().map(|x| x.classified_mass).sum::<f64>() / r,
    }
}

fn slope_report(
    kind: LearnerKind,
    summaries: &[BudgetSummary],
    rows: &[ReplicateRow],
    settings: &SweepSettings,
    warnings: &mut Vec<String>,
) -> Option<SlopeReport> {
    if summaries.is_empty() {
        return None;
    }
    let budgets: Vec<u64> = summaries.iter().map(|s| s.budget).collect();
    let means: Vec<f64> = summaries.iter().map(|s| s.mean_excess_risk).collect();
    let fit = match rate_fit(&budgets, &means) {
        Ok(f) => f,
        Err(e) => {
            warnings.push(format!("{} slope: {e}", kind.as_str()));
            return None;
        }
    };
    for n in &fit.dropped {
        warnings.push(format!("{} slope: dropped budget {n} with non-positive mean risk", kind.as_str()));
    }
    let per_budget: Vec<Vec<f64>> = budgets
        .iter()
        .map(|&b| {
            rows.iter()
                .filter(|r| r.learner == kind && r.budget == b)
                .map(|r| r.excess_risk)
                .collect()
        })
        .collect();
    let stream = BOOTSTRAP_STREAM + if kind == LearnerKind::Passive { 1 } else { 0 };
    let ci = if settings.bootstrap_resamples > 0 {
        bootstrap_slope_ci(
            &budgets,
            &per_budget,
            settings.bootstrap_resamples,
            0.95,
            &mut stream_rng(settings.base_seed, stream),
        )
    } else {
        None
    };
    Some(SlopeReport {
        fit,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
    })
}

/// Budgets × replicates for the active learner (and the passive baseline),
/// run in parallel on `threads` workers; rows come back in
/// (budget, replicate, learner) order regardless of scheduling.
pub fn run_sweep(spec: &ProblemSpec, settings: &SweepSettings) -> Result<(Vec<ReplicateRow>, ExperimentReport)> {
    validate_settings(settings)?;
    let seed_of = |r: u32| settings.base_seed.wrapping_add(u64::from(r));
    let problems = (0..settings.replicates)
        .map(|r| replicate_problem(spec, seed_of(r), r, settings.replicates, settings.learning.noise))
        .collect::<Result<Vec<_>>>()?;
    let problem: &dyn Problem = problems[0].as_ref();
    if problem.dim() != settings.learning.geometry.dim {
        return Err(Error::InvalidInput(format!(
            "problem dimension {} differs from geometry dimension {}",
            problem.dim(),
            settings.learning.geometry.dim
        )));
    }
    let mut jobs = Vec::new();
    for &b in &settings.budgets {
        for r in 0..settings.replicates {
            jobs.push((b, r, LearnerKind::Active));
            if settings.include_passive {
                jobs.push((b, r, LearnerKind::Passive));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let rows: Vec<ReplicateRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(b, r, kind)| {
                let seed = seed_of(r);
                let problem = problems[r as usize].as_ref();
                match kind {
                    LearnerKind::Active => {
                        active_replicate(problem, b, r, seed, &settings.learning, settings.num_eval, None).map(|x| x.0)
                    }
                    LearnerKind::Passive => {
                        passive_replicate(problem, b, r, seed, &settings.learning, settings.num_eval)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let summaries = |kind: LearnerKind| -> Vec<BudgetSummary> {
        settings
            .budgets
            .iter()
            .filter_map(|&b| {
                let sel: Vec<&ReplicateRow> = rows.iter().filter(|r| r.learner == kind && r.budget == b).collect();
                (!sel.is_empty()).then(|| summarize(b, &sel))
            })
            .collect()
    };
    let active = summaries(LearnerKind::Active);
    let passive = summaries(LearnerKind::Passive);
    let mut warnings = Vec::new();
    let active_slope = slope_report(LearnerKind::Active, &active, &rows, settings, &mut warnings);
    let passive_slope = slope_report(LearnerKind::Passive, &passive, &rows, settings, &mut warnings);

    let declared = problem.declared();
    let mut regimes = Vec::new();
    for &b in &settings.budgets {
        match tau0(b, problem.num_labels(), declared.alpha, declared.beta, problem.dim(), settings.c_tau0) {
            Ok(t0) => regimes.push(RegimeTag { budget: b, tau0: t0, regime: Regime::classify(declared.tau, t0) }),
            Err(e) => warnings.push(format!("regime at n={b}: {e}")),
        }
    }
    let report = ExperimentReport {
        problem_hash: spec.hash(),
        problem: spec.clone(),
        settings: settings.clone(),
        seeds: (0..settings.replicates).map(seed_of).collect(),
        tau: declared.tau,
        regimes,
        active,
        passive,
        active_slope,
        passive_slope,
        warnings,
    };
    Ok((rows, report))
}
