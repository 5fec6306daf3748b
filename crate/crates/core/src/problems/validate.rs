//! Numerical checks of the regularity a problem declares.
//!
//! Each check reports its worst observed margin: the largest amount by which
//! the tested inequality was exceeded (negative when it held with slack).

use rand::{Rng, RngCore};
use serde::Serialize;

use super::{distance, positive_gap, second_gap, HardInstance, LabelProblem, Problem, ProblemSpec};
use crate::error::Result;
use crate::problems::hard::max_c0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, worst: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            worst,
            detail,
        }
    }
}

/// Sample sizes and tolerances shared by all checks.
#[derive(Debug, Clone, Copy)]
pub struct CheckSettings {
    pub holder_pairs: usize,
    pub holder_tol: f64,
    pub quadrature_points: usize,
    pub mass_tol: f64,
    pub margin_samples: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            holder_pairs: 100_000,
            holder_tol: 1e-9,
            quadrature_points: 1 << 18,
            mass_tol: 1e-3,
            margin_samples: 200_000,
        }
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in the `axis`-th prime base (Halton sequence).
pub fn halton(index: u64, axis: usize) -> f64 {
    let base = PRIMES[axis % PRIMES.len()];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Quasi-Monte-Carlo integral of `g` over the box `[lo, hi]`.
pub fn integrate_box(lo: &[f64], hi: &[f64], points: usize, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
    let d = lo.len();
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for k in 1..=points as u64 {
        for j in 0..d {
            x[j] = lo[j] + (hi[j] - lo[j]) * halton(k, j);
        }
        acc += g(&x);
    }
    vol * acc / points as f64
}

fn random_direction(d: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Checks `|g_k(x) - g_k(x')| <= L·||x - x'||^α + tol` for every output `k`.
///
/// Pairs are `x ~ anchor(rng)` and `x' = x + δ·u` for a random unit `u` and
/// log-uniform `δ ∈ [min_step, max_step]`, clamped to the cube.
#[allow(clippy::too_many_arguments)]
pub fn holder_check(
    g: impl Fn(&[f64], &mut [f64]),
    outputs: usize,
    smoothness: f64,
    alpha: f64,
    mut anchor: impl FnMut(&mut dyn RngCore) -> Vec<f64>,
    (min_step, max_step): (f64, f64),
    pairs: usize,
    tol: f64,
    rng: &mut dyn RngCore,
) -> CheckResult {
    let mut ga = vec![0.0; outputs];
    let mut gb = vec![0.0; outputs];
    let mut worst = f64::NEG_INFINITY;
    let mut witness = (Vec::new(), Vec::new());
    for _ in 0..pairs {
        let a = anchor(rng);
        let u = random_direction(a.len(), rng);
        let step = (min_step.ln() + (max_step / min_step).ln() * rng.random::<f64>()).exp();
        let b: Vec<f64> = a
            .iter()
            .zip(&u)
            .map(|(x, v)| (x + step * v).clamp(0.0, 1.0))
            .collect();
        g(&a, &mut ga);
        g(&b, &mut gb);
        let allowed = smoothness * distance(&a, &b).powf(alpha);
        for k in 0..outputs {
            let excess = (ga[k] - gb[k]).abs() - allowed;
            if excess > worst {
                worst = excess;
                witness = (a.clone(), b.clone());
            }
        }
    }
    CheckResult::new(
        "holder",
        worst <= tol,
        worst,
        format!(
            "{pairs} pairs, L={smoothness}, alpha={alpha}; worst pair {:?} / {:?}",
            witness.0, witness.1
        ),
    )
}

/// Empirical `P_X(event at ε)` against `envelope(ε)` on a grid of ε, with a
/// three-standard-error allowance.
fn envelope_check(
    name: &str,
    problem: &dyn Problem,
    samples: usize,
    in_event: impl Fn(&[f64], f64) -> bool,
    envelope: impl Fn(f64) -> f64,
    grid: &[f64],
    rng: &mut dyn RngCore,
) -> CheckResult {
    let d = problem.dim();
    let mut xs = Vec::with_capacity(samples);
    let mut x = vec![0.0; d];
    for _ in 0..samples {
        problem.sample_x(rng, &mut x);
        xs.push(x.clone());
    }
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for &eps in grid {
        let hits = xs.iter().filter(|x| in_event(x, eps)).count() as f64;
        let p = hits / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        let excess = p - envelope(eps) - 3.0 * se - 1.0 / samples as f64;
        if excess > worst {
            worst = excess;
            at = eps;
        }
    }
    CheckResult::new(
        name,
        worst <= 0.0,
        worst,
        format!("{samples} draws, {} thresholds, worst at {at:e}", grid.len()),
    )
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Every check applicable to `spec`.
pub fn validate_spec(
    spec: &ProblemSpec,
    settings: &CheckSettings,
    rng: &mut dyn RngCore,
) -> Result<Vec<CheckResult>> {
    match spec {
        ProblemSpec::HardInstance(params) => {
            let h = HardInstance::build(params.clone())?;
            Ok(validate_hard_instance(&h, settings, rng))
        }
        _ => {
            let p = spec.build(super::NoiseModel::ZeroNoise)?;
            Ok(validate_problem(p.as_ref(), settings, rng))
        }
    }
}

/// Hölder, density-normalization and margin checks for a generic problem on the cube.
pub fn validate_problem(
    problem: &dyn Problem,
    settings: &CheckSettings,
    rng: &mut dyn RngCore,
) -> Vec<CheckResult> {
    let decl = problem.declared();
    let d = problem.dim();
    let m = problem.num_labels();
    let mut out = Vec::new();

    out.push(holder_check(
        |x, o| problem.expected_costs(x, o),
        m,
        decl.smoothness,
        decl.alpha,
        |r| (0..d).map(|_| r.random::<f64>()).collect(),
        (1e-7, 1.0),
        settings.holder_pairs,
        settings.holder_tol,
        rng,
    ));

    let mass = integrate_box(&vec![0.0; d], &vec![1.0; d], settings.quadrature_points, |x| {
        problem.density(x)
    });
    out.push(CheckResult::new(
        "density-normalization",
        (mass - 1.0).abs() <= settings.mass_tol,
        (mass - 1.0).abs() - settings.mass_tol,
        format!("quadrature mass {mass:.6}"),
    ));

    let grid = geometric_grid(1e-3, 1.0, 25);
    let gap = |x: &[f64]| {
        let mut f = vec![0.0; m];
        problem.expected_costs(x, &mut f);
        (positive_gap(&f), second_gap(&f))
    };
    out.push(envelope_check(
        "margin",
        problem,
        settings.margin_samples,
        |x, e| gap(x).0 <= e,
        |e| decl.c_beta * e.powf(decl.beta),
        &grid,
        rng,
    ));
    out.push(envelope_check(
        "margin-refined",
        problem,
        settings.margin_samples,
        |x, e| gap(x).1 <= e,
        |e| decl.tau + decl.c_beta_prime * e.powf(decl.beta),
        &grid,
        rng,
    ));
    out
}

/// Construction checks for the bump family.
pub fn validate_hard_instance(
    h: &HardInstance,
    settings: &CheckSettings,
    rng: &mut dyn RngCore,
) -> Vec<CheckResult> {
    let p = &h.params;
    let d = p.dim;
    let mut out = Vec::new();

    let c2_max = 1.0 / (12.0 * p.smoothness);
    let c0_max = max_c0(p.smoothness, p.beta, d);
    let slack = (h.c2 - c2_max).max(h.c0 - c0_max);
    out.push(CheckResult::new(
        "smoothness-constants",
        slack <= 1e-15,
        slack,
        format!("c2={} (max {c2_max}), c0={} (max {c0_max})", h.c2, h.c0),
    ));

    // Anchors concentrate on the support and around every bump so that the
    // steep parts of φ are probed.
    let centers = h.centers.clone();
    let hp = h.clone();
    out.push(holder_check(
        |x, o| o[0] = h.eta(x),
        1,
        p.smoothness,
        p.alpha,
        move |r: &mut dyn RngCore| {
            let mut x = vec![0.0; d];
            match r.random_range(0..4u8) {
                0 => hp.sample_x(r, &mut x),
                1 => {
                    let c = &centers[r.random_range(0..centers.len())];
                    super::sample_ball(c, 0.6 * hp.params.r, r, &mut x);
                }
                2 => {
                    let shell = hp.r_star + hp.c0 * hp.shell_scale * r.random::<f64>() * 1.2;
                    let u = random_direction(d, r);
                    for j in 0..d {
                        x[j] = 0.5 + shell * u[j];
                    }
                }
                _ => {
                    for v in x.iter_mut() {
                        *v = r.random();
                    }
                }
            }
            x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
        },
        (1e-4 * p.r, 4.0 * p.r.max(h.c0 * h.shell_scale)),
        settings.holder_pairs,
        settings.holder_tol,
        rng,
    ));

    let exact = (h.a1_mass() - p.tau).abs();
    out.push(CheckResult::new(
        "flat-region-mass",
        exact <= 1e-12,
        exact - 1e-12,
        format!("density·volume of A1 = {:.15}, tau = {}", h.a1_mass(), p.tau),
    ));

    let mut bumps = 0.0;
    let mut a1 = 0.0;
    let mut a2 = 0.0;
    for (center, radius, _) in h.support_balls() {
        let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
        let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
        bumps += integrate_box(&lo, &hi, settings.quadrature_points, |x| {
            if h.centers.iter().any(|c| distance(x, c) <= p.r / 6.0) {
                h.marginal_density(x)
            } else {
                0.0
            }
        });
        a1 += integrate_box(&lo, &hi, settings.quadrature_points, |x| {
            if h.in_a1(x) {
                h.marginal_density(x)
            } else {
                0.0
            }
        });
        a2 += integrate_box(&lo, &hi, settings.quadrature_points, |x| {
            if h.in_a2(x) {
                h.marginal_density(x)
            } else {
                0.0
            }
        });
    }
    let total = bumps + a1 + a2;
    let nominal = [
        (bumps, p.num_bumps as f64 * p.bump_mass),
        (a1, p.tau),
        (a2, h.a2_mass()),
        (total, 1.0),
    ];
    let worst = nominal
        .iter()
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::new(
        "density-normalization",
        worst <= settings.mass_tol,
        worst - settings.mass_tol,
        format!("bumps {bumps:.6}, A1 {a1:.6}, A2 {a2:.6}, total {total:.6}"),
    ));

    let x_bar = vec![0.5; d];
    let gap = distance(&h.anchor, &x_bar);
    let need = h.r_star + h.c0 * h.shell_scale + h.c0.max(p.c1) * h.shell_scale;
    out.push(CheckResult::new(
        "disjointness",
        gap >= need,
        need - gap,
        format!("|a - x̄| = {gap:.6e}, required {need:.6e}"),
    ));

    let c = h.eta_margin_constant();
    let lowest = h.margin_atoms().first().map(|a| a.0).unwrap_or(1e-6);
    let grid = geometric_grid(lowest / 4.0, 0.5, 30);
    let problem = super::convert_classification(h.clone());
    out.push(envelope_check(
        "margin",
        &problem,
        settings.margin_samples,
        |x, t| {
            let g = (h.eta(x) - 0.5).abs();
            g > 0.0 && g < t
        },
        |t| c * t.powf(p.beta),
        &grid,
        rng,
    ));
    out
}
