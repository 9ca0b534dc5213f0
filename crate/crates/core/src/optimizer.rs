//! Minimization of the offloading loss over caching strategies.
//!
//! The main solver is multi-start projected gradient descent. Two oracles are
//! provided for checking it: an exact KKT solution for single-slot caches and
//! exhaustive search over a simplex lattice for small catalogs.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::{loss_value, CachingStrategy, FormulaMode, NetworkConfig, PopularityProfile};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step of [`SolverOptions::step_size`].
    Fixed,
    /// Armijo backtracking by halving, starting from [`SolverOptions::step_size`]
    /// and doubling after every accepted step.
    #[default]
    Backtracking,
}

/// Armijo sufficient-decrease constant.
pub const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const MAX_STEP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of starting points: the uniform strategy plus Dirichlet(1) draws.
    pub restarts: usize,
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Initial (backtracking) or constant (fixed) step size.
    pub step_size: f64,
    /// Absolute objective change below which a restart is converged.
    pub tolerance: f64,
    /// Lattice step for [`brute_force_optimum`].
    pub grid_resolution: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iterations: 100_000,
            step_rule: StepRule::Backtracking,
            step_size: 1.0,
            tolerance: 1e-10,
            grid_resolution: 0.01,
            seed: 0,
        }
    }
}

impl SolverOptions {
    /// First violated invariant as `(field, message)`.
    pub fn first_violation(&self) -> Option<(&'static str, String)> {
        if self.restarts == 0 {
            return Some(("restarts", "must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Some(("max_iterations", "must be >= 1".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Some(("step_size", format!("must be > 0, got {}", self.step_size)));
        }
        if !(self.tolerance > 0.0) {
            return Some(("tolerance", format!("must be > 0, got {}", self.tolerance)));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 1.0) {
            return Some((
                "grid_resolution",
                format!("must lie in (0, 1], got {}", self.grid_resolution),
            ));
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_violation() {
            Some((field, msg)) => Err(Error::param(format!("solver {field} {msg}"))),
            None => Ok(()),
        }
    }
}

/// Gradient of the offloading loss on raw vectors.
pub fn loss_gradient_at<T: Scalar>(pi: &[T], p: &[T], config: &NetworkConfig<T>) -> Vec<T> {
    assert_eq!(pi.len(), p.len(), "strategy and profile lengths differ");
    let m = config.cache_size as i32;
    let mf = T::from_count(config.cache_size as u64);
    let scale = config.delivery_time();
    pi.iter()
        .zip(p)
        .map(|(&x, &p_i)| {
            let keep_out = (T::one() - x).powi(m);
            let d_keep_out = mf * (T::one() - x).powi(m - 1);
            match config.formula_mode {
                FormulaMode::Appendix => {
                    let c = config.sbs_neighbor_mean();
                    -scale * p_i * c * d_keep_out * (-c * (T::one() - keep_out)).exp()
                }
                FormulaMode::MainText => {
                    let c = config.user_neighbor_mean();
                    scale * p_i * c * d_keep_out * (-c * keep_out).exp()
                }
            }
        })
        .collect()
}

/// Analytic gradient of [`offloading_loss`](crate::caching::offloading_loss)
/// with respect to each `π_i`.
pub fn loss_gradient<T: Scalar>(
    strategy: &CachingStrategy<T>,
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
) -> Vec<T> {
    loss_gradient_at(strategy.values(), profile.values(), config)
}

/// Euclidean projection onto the probability simplex (sort-based).
///
/// `NaN` entries are treated as `-∞`. If any entry is `+∞`, the mass is split
/// evenly over those entries.
pub fn project_simplex<T: Scalar>(v: &[T]) -> Result<CachingStrategy<T>> {
    if v.is_empty() {
        return Err(Error::param("cannot project an empty vector"));
    }
    let clean: Vec<T> = v
        .iter()
        .map(|&x| if x.is_nan() { T::neg_infinity() } else { x })
        .collect();
    let infinite = clean.iter().filter(|x| **x == T::infinity()).count();
    if infinite > 0 {
        let share = T::one() / T::from_count(infinite as u64);
        return CachingStrategy::new(
            clean
                .iter()
                .map(|&x| if x == T::infinity() { share } else { T::zero() })
                .collect(),
        );
    }
    if clean.iter().all(|x| *x == T::neg_infinity()) {
        return CachingStrategy::uniform(v.len());
    }

    let mut sorted: Vec<T> = clean.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut prefix = T::zero();
    let mut theta = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        prefix = prefix + u;
        let t = (prefix - T::one()) / T::from_count(k as u64 + 1);
        if u - t > T::zero() {
            theta = t;
        }
    }
    let mut x: Vec<T> = clean
        .iter()
        .map(|&vi| (vi - theta).max(T::zero()).min(T::one()))
        .collect();
    let sum: T = x.iter().copied().sum();
    if (sum - T::one()).abs() > T::lit(crate::caching::SIMPLEX_TOLERANCE) {
        x.iter_mut().for_each(|xi| *xi = *xi / sum);
    }
    CachingStrategy::new(x)
}

/// Outcome of one starting point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub index: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of [`optimize_strategy`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport<T: Scalar = f64> {
    pub strategy: CachingStrategy<T>,
    pub objective: T,
    /// Whether the winning restart met the tolerance before `max_iterations`.
    pub converged: bool,
    pub winning_restart: usize,
    /// Objective after each iteration of the winning restart.
    pub trace: Vec<T>,
    pub restarts: Vec<RestartSummary>,
}

struct RestartRun<T> {
    best: Vec<T>,
    best_objective: T,
    iterations: usize,
    converged: bool,
    trace: Vec<T>,
}

fn dirichlet_point<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn descend<T: Scalar>(
    start: Vec<T>,
    p: &[T],
    config: &NetworkConfig<T>,
    opts: &SolverOptions,
) -> RestartRun<T> {
    let tol = T::lit(opts.tolerance);
    let armijo = T::lit(ARMIJO);
    let mut x = start;
    let mut f = loss_value(&x, p, config);
    let mut step = T::lit(opts.step_size);
    let mut run = RestartRun {
        best: x.clone(),
        best_objective: f,
        iterations: 0,
        converged: false,
        trace: vec![f],
    };

    while run.iterations < opts.max_iterations {
        run.iterations += 1;
        let grad = loss_gradient_at(&x, p, config);
        let (y, fy) = loop {
            let trial: Vec<T> = x
                .iter()
                .zip(&grad)
                .map(|(&xi, &gi)| xi - step * gi)
                .collect();
            let y = project_simplex(&trial).expect("non-empty").into_inner();
            let fy = loss_value(&y, p, config);
            if opts.step_rule == StepRule::Fixed {
                break (y, fy);
            }
            let slope: T = grad
                .iter()
                .zip(y.iter().zip(&x))
                .map(|(&g, (&a, &b))| g * (a - b))
                .sum();
            if fy <= f + armijo * slope {
                break (y, fy);
            }
            step = step / T::lit(2.0);
            if step < T::lit(MIN_STEP) {
                // No descent possible along the projected arc: stationary.
                break (x.clone(), f);
            }
        };
        let change = (f - fy).abs();
        x = y;
        f = fy;
        run.trace.push(f);
        if f < run.best_objective {
            run.best_objective = f;
            run.best.clone_from(&x);
        }
        if change <= tol {
            run.converged = true;
            break;
        }
        if opts.step_rule == StepRule::Backtracking {
            step = (step * T::lit(2.0)).min(T::lit(MAX_STEP));
        }
    }
    run
}

/// Reorders the strategy so that more popular files get no smaller caching
/// probability, when that does not increase the loss. With a miss
/// probability decreasing in `π_i` this is the rearrangement-optimal order.
fn align_with_popularity<T: Scalar>(
    pi: &mut Vec<T>,
    objective: &mut T,
    p: &[T],
    config: &NetworkConfig<T>,
) {
    if config.formula_mode != FormulaMode::Appendix {
        return;
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).expect("finite").then(a.cmp(&b)));
    let mut values = pi.clone();
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut aligned = vec![T::zero(); p.len()];
    for (slot, v) in order.into_iter().zip(values) {
        aligned[slot] = v;
    }
    let f = loss_value(&aligned, p, config);
    if f <= *objective {
        *pi = aligned;
        *objective = f;
    }
}

/// Multi-start projected gradient descent on the offloading loss.
///
/// Restart 0 starts from the uniform strategy, so the returned objective never
/// exceeds the uniform one. Restarts run in parallel; the winner is selected
/// by `(objective, restart index)`.
pub fn optimize_strategy<T: Scalar>(
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
    opts: &SolverOptions,
) -> Result<SolverReport<T>> {
    config.validate()?;
    opts.validate()?;
    let n = profile.len();
    if n != config.n_files {
        return Err(Error::param(format!(
            "profile has {n} files but N = {}",
            config.n_files
        )));
    }
    let p = profile.values();
    let mut runs: Vec<(usize, RestartRun<T>)> = (0..opts.restarts)
        .into_par_iter()
        .map(|index| {
            let start = if index == 0 {
                vec![T::one() / T::from_count(n as u64); n]
            } else {
                let mut rng = stream_rng(opts.seed, &[index as u64]);
                dirichlet_point(n, &mut rng)
                    .into_iter()
                    .map(T::lit)
                    .collect()
            };
            let mut run = descend(start, p, config, opts);
            align_with_popularity(&mut run.best, &mut run.best_objective, p, config);
            (index, run)
        })
        .collect();

    let summaries = runs
        .iter()
        .map(|(index, run)| RestartSummary {
            index: *index,
            objective: run.best_objective.as_f64(),
            iterations: run.iterations,
            converged: run.converged,
        })
        .collect();
    let winner = runs
        .iter()
        .enumerate()
        .min_by(|(_, (ia, a)), (_, (ib, b))| {
            a.best_objective
                .partial_cmp(&b.best_objective)
                .expect("finite objective")
                .then(ia.cmp(ib))
        })
        .map(|(pos, _)| pos)
        .expect("at least one restart");
    let (winning_restart, run) = runs.swap_remove(winner);
    Ok(SolverReport {
        strategy: CachingStrategy::new(run.best)?,
        objective: run.best_objective,
        converged: run.converged,
        winning_restart,
        trace: run.trace,
        restarts: summaries,
    })
}

/// Exact minimizer of `Σ p_i e^{-c π_i}` on the simplex for single-slot caches.
///
/// Stationarity gives `π_i = ln(c p_i / μ) / c` on the active set; the active
/// set is the prefix of files sorted by popularity for which this is positive.
pub fn waterfilling_m1<T: Scalar>(
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
) -> Result<CachingStrategy<T>> {
    if config.cache_size != 1 {
        return Err(Error::Unsupported(format!(
            "closed-form solution needs M = 1, got M = {}",
            config.cache_size
        )));
    }
    if config.formula_mode != FormulaMode::Appendix {
        return Err(Error::Unsupported(
            "closed-form solution needs the appendix formula".into(),
        ));
    }
    let c = config.sbs_neighbor_mean();
    if !(c > T::zero()) {
        return Err(Error::param(
            "closed-form solution needs lambda_s * pi * gamma^2 > 0",
        ));
    }
    let p = profile.values();
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| p[i] > T::zero()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).expect("finite").then(a.cmp(&b)));

    let log_weight = |i: usize| (c * p[i]).ln();
    let mut prefix = T::zero();
    let mut log_mu = T::zero();
    let mut active = 0;
    for (k, &i) in order.iter().enumerate() {
        prefix = prefix + log_weight(i);
        let candidate = (prefix - c) / T::from_count(k as u64 + 1);
        // The k-th file stays active only if its level is above the water line.
        if log_weight(i) - candidate > T::zero() {
            log_mu = candidate;
            active = k + 1;
        } else {
            break;
        }
    }
    let mut pi = vec![T::zero(); p.len()];
    for &i in &order[..active] {
        pi[i] = ((log_weight(i) - log_mu) / c).max(T::zero());
    }
    let sum: T = pi.iter().copied().sum();
    pi.iter_mut().for_each(|x| *x = *x / sum);
    CachingStrategy::new(pi)
}

/// Best lattice point of the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOptimum<T: Scalar = f64> {
    pub strategy: CachingStrategy<T>,
    pub objective: T,
}

/// Largest catalog accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_MAX_FILES: usize = 4;

/// Exhaustive search over the simplex lattice with spacing `grid_resolution`.
pub fn brute_force_optimum<T: Scalar>(
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
    grid_resolution: f64,
) -> Result<GridOptimum<T>> {
    let n = profile.len();
    if n > BRUTE_FORCE_MAX_FILES {
        return Err(Error::Unsupported(format!(
            "exhaustive search refused for N = {n} > {BRUTE_FORCE_MAX_FILES}"
        )));
    }
    if !(grid_resolution > 0.0 && grid_resolution <= 1.0) {
        return Err(Error::param(format!(
            "grid resolution must lie in (0, 1], got {grid_resolution}"
        )));
    }
    let units = (1.0 / grid_resolution).round().max(1.0) as usize;
    let scale = T::from_count(units as u64);
    let p = profile.values();
    let mut parts = vec![0usize; n];
    let mut best: Option<(Vec<T>, T)> = None;

    fn visit(pos: usize, left: usize, parts: &mut [usize], eval: &mut dyn FnMut(&[usize])) {
        if pos + 1 == parts.len() {
            parts[pos] = left;
            eval(parts);
            return;
        }
        for k in 0..=left {
            parts[pos] = k;
            visit(pos + 1, left - k, parts, eval);
        }
    }

    let mut eval = |parts: &[usize]| {
        let x: Vec<T> = parts
            .iter()
            .map(|&k| T::from_count(k as u64) / scale)
            .collect();
        let f = loss_value(&x, p, config);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    };
    visit(0, units, &mut parts, &mut eval);
    let (x, objective) = best.expect("lattice is non-empty");
    Ok(GridOptimum {
        strategy: CachingStrategy::new(x)?,
        objective,
    })
}
