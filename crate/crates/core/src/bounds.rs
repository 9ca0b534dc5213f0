//! Waiting-time bounds for learning the popularity profile.
//!
//! All formulas use the user-density weight `g(π_i) = exp{-λ_u π γ² (1-π_i)^M}`
//! as written, independent of [`FormulaMode`](crate::caching::FormulaMode).

use serde::{Deserialize, Serialize, Serializer};

use crate::caching::NetworkConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How `sup_Π Σ g(π_i)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupMode {
    /// The bound `Σ g(π_i) ≤ N`.
    #[default]
    ConservativeN,
    /// Numerical maximization over the simplex.
    Numeric,
}

/// Accuracy target and confidence for a bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs<T: Scalar = f64> {
    pub config: NetworkConfig<T>,
    /// Allowed excess offloading loss, in time units.
    pub epsilon: T,
    /// Failure probability.
    pub delta: T,
    pub sup_mode: SupMode,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn new(config: NetworkConfig<T>, epsilon: T, delta: T, sup_mode: SupMode) -> Result<Self> {
        config.validate()?;
        if !(config.lambda_r > T::zero()) {
            return Err(Error::param("bounds need lambda_r > 0"));
        }
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(delta > T::zero() && delta < T::one()) {
            return Err(Error::param(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            config,
            epsilon,
            delta,
            sup_mode,
        })
    }

    /// `log(2N/δ)`.
    pub fn log_term(&self) -> T {
        (T::lit(2.0) * T::from_count(self.config.n_files as u64) / self.delta).ln()
    }
}

/// A waiting time that is either finite or unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundValue<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> BoundValue<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, BoundValue::Finite(_))
    }

    /// The finite value, or `+∞`.
    pub fn as_scalar(&self) -> T {
        match *self {
            BoundValue::Finite(v) => v,
            BoundValue::Infinite => T::infinity(),
        }
    }
}

impl<T: Scalar> Serialize for BoundValue<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BoundValue::Finite(v) => s.serialize_f64(v.as_f64()),
            BoundValue::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// Intermediate quantities of a bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundDiagnostics<T: Scalar> {
    pub sup_g: T,
    pub epsilon_bar: T,
    /// `ε̄ - ‖𝒫 - 𝒬‖`, only for transfer-learning bounds.
    pub epsilon_pq: Option<T>,
    /// `1 - exp{-2ε²}` at the effective accuracy.
    pub g_star: T,
    /// `log(2N/δ)`.
    pub log_term: T,
    /// `(log(2N/δ) - 2ε_pq² m) / (λ_u π R²)`; absent when the bound is infinite.
    pub inner_log_argument: Option<T>,
    pub source_samples: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingTimeBound<T: Scalar = f64> {
    pub value: BoundValue<T>,
    /// User density at or below which the bound is infinite (ℒ or ρ).
    pub threshold: T,
    pub diagnostics: BoundDiagnostics<T>,
}

/// Bound weight `g(π) = exp{-λ_u π γ² (1-π)^M}`.
pub fn theorem_weight<T: Scalar>(pi: T, config: &NetworkConfig<T>) -> T {
    (-config.user_neighbor_mean() * (T::one() - pi).powi(config.cache_size as i32)).exp()
}

/// `sup_Π Σ_i g(π_i)` over the probability simplex.
///
/// In numeric mode the search uses the shape of a maximizer of a separable
/// sum under one linear constraint: at most one positive coordinate sits where
/// `g` is strictly convex, and all others share a common value `a`. Candidates
/// are `k` coordinates at `a`, one at `1 - k·a`, the rest at zero.
pub fn sup_g_sum<T: Scalar>(config: &NetworkConfig<T>, mode: SupMode) -> T {
    let n = config.n_files;
    match mode {
        SupMode::ConservativeN => T::from_count(n as u64),
        SupMode::Numeric => {
            let g = |x: T| theorem_weight(x.max(T::zero()).min(T::one()), config);
            let g0 = g(T::zero());
            let mut best = T::from_count(n as u64) * g(T::one() / T::from_count(n as u64));
            for k in 0..n {
                let kf = T::from_count(k as u64);
                let rest = T::from_count((n - k - 1) as u64) * g0;
                let objective = |a: T| kf * g(a) + g(T::one() - kf * a) + rest;
                if k == 0 {
                    best = best.max(objective(T::zero()));
                    continue;
                }
                best = best.max(maximize_1d(objective, T::zero(), T::one() / kf));
            }
            best.min(T::from_count(n as u64))
        }
    }
}

/// Grid scan followed by golden-section refinement around the best cell.
fn maximize_1d<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T) -> T {
    const CELLS: usize = 512;
    let step = (hi - lo) / T::from_count(CELLS as u64);
    let at = |i: usize| lo + step * T::from_count(i as u64);
    let (best_i, mut best) =
        (0..=CELLS)
            .map(|i| (i, f(at(i))))
            .fold(
                (0, T::neg_infinity()),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
    let mut a = at(best_i.saturating_sub(1));
    let mut b = at((best_i + 1).min(CELLS));
    let ratio = T::lit(0.618_033_988_749_894_8);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        let (fc, fd) = (f(c), f(d));
        best = best.max(fc).max(fd);
        if fc > fd {
            b = d;
        } else {
            a = c;
        }
    }
    best
}

/// Per-coordinate estimation accuracy `ε̄ = R₀ε / (2B·sup Σ g)`.
pub fn epsilon_bar<T: Scalar>(inputs: &BoundInputs<T>) -> T {
    let sup = sup_g_sum(&inputs.config, inputs.sup_mode);
    epsilon_bar_with(inputs, sup)
}

fn epsilon_bar_with<T: Scalar>(inputs: &BoundInputs<T>, sup: T) -> T {
    let c = &inputs.config;
    c.bs_rate * inputs.epsilon / (T::lit(2.0) * c.file_size * sup)
}

/// Shared evaluation of the target-only and transfer-learning bounds:
/// `τ = {log(1/(1-Λ)) / (λ_r(1-e^{-2ε²}))}⁺` when `λ_u > numerator/πR²`.
fn waiting_time_core<T: Scalar>(
    inputs: &BoundInputs<T>,
    sup_g: T,
    epsilon_bar: T,
    epsilon_eff: T,
    numerator: T,
    epsilon_pq: Option<T>,
    source_samples: Option<u64>,
) -> WaitingTimeBound<T> {
    let c = &inputs.config;
    let threshold = numerator / c.coverage_area();
    let g_star = (T::lit(2.0) * epsilon_eff * epsilon_eff).one_minus_exp_neg();
    let mut diagnostics = BoundDiagnostics {
        sup_g,
        epsilon_bar,
        epsilon_pq,
        g_star,
        log_term: inputs.log_term(),
        inner_log_argument: None,
        source_samples,
    };
    if c.lambda_u <= threshold {
        return WaitingTimeBound {
            value: BoundValue::Infinite,
            threshold,
            diagnostics,
        };
    }
    let inner = threshold / c.lambda_u;
    diagnostics.inner_log_argument = Some(inner);
    // log(1/(1-Λ)) = -log1p(-Λ)
    let tau = (-(-inner).ln_1p() / (c.lambda_r * g_star)).max(T::zero());
    WaitingTimeBound {
        value: BoundValue::Finite(tau),
        threshold,
        diagnostics,
    }
}

/// Waiting time after which the target-only estimate yields a strategy within
/// `ε` of optimal with probability at least `1-δ`.
pub fn waiting_time_target<T: Scalar>(inputs: &BoundInputs<T>) -> WaitingTimeBound<T> {
    let sup = sup_g_sum(&inputs.config, inputs.sup_mode);
    let eb = epsilon_bar_with(inputs, sup);
    waiting_time_core(inputs, sup, eb, eb, inputs.log_term(), None, None)
}

/// User density ℒ below which [`waiting_time_target`] is infinite.
pub fn target_threshold<T: Scalar>(inputs: &BoundInputs<T>) -> T {
    inputs.log_term() / inputs.config.coverage_area()
}

/// Simplified bound `2B²N² log(2N/δ) / (πR² λ_u λ_r R₀² ε²)`; with
/// `per_user` the accuracy is taken per user, which multiplies by `λ_r²`.
pub fn waiting_time_simplified<T: Scalar>(inputs: &BoundInputs<T>, per_user: bool) -> T {
    let c = &inputs.config;
    let n = T::from_count(c.n_files as u64);
    let b2 = c.file_size * c.file_size;
    let r02 = c.bs_rate * c.bs_rate;
    let eps2 = inputs.epsilon * inputs.epsilon;
    let per_request = T::lit(2.0) * b2 * n * n * inputs.log_term()
        / (c.coverage_area() * c.lambda_u * c.lambda_r * r02 * eps2);
    if per_user {
        per_request * c.lambda_r * c.lambda_r
    } else {
        per_request
    }
}

fn check_distance<T: Scalar>(distance: T) -> Result<()> {
    if !(distance >= T::zero() && distance <= T::one()) {
        return Err(Error::param(format!(
            "distance must lie in [0, 1], got {distance}"
        )));
    }
    Ok(())
}

fn epsilon_pq<T: Scalar>(epsilon_bar: T, distance: T) -> Result<T> {
    let e = epsilon_bar - distance;
    if e <= T::zero() {
        return Err(Error::Infeasible {
            epsilon_bar: epsilon_bar.as_f64(),
            distance: distance.as_f64(),
        });
    }
    Ok(e)
}

/// Waiting time for the transfer-learning estimate with `m` source samples
/// at sup-norm distance `distance` from the target profile.
pub fn waiting_time_tl<T: Scalar>(
    inputs: &BoundInputs<T>,
    m: u64,
    distance: T,
) -> Result<WaitingTimeBound<T>> {
    check_distance(distance)?;
    let sup = sup_g_sum(&inputs.config, inputs.sup_mode);
    let eb = epsilon_bar_with(inputs, sup);
    let epq = epsilon_pq(eb, distance)?;
    let numerator = inputs.log_term() - T::lit(2.0) * epq * epq * T::from_count(m);
    Ok(waiting_time_core(
        inputs,
        sup,
        eb,
        epq,
        numerator,
        Some(epq),
        Some(m),
    ))
}

/// User density ρ below which [`waiting_time_tl`] is infinite.
pub fn tl_threshold<T: Scalar>(inputs: &BoundInputs<T>, m: u64, distance: T) -> Result<T> {
    waiting_time_tl(inputs, m, distance).map(|b| b.threshold)
}

/// Conditions under which transfer learning beats the target-only estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TlRequirement<T: Scalar = f64> {
    /// Smallest number of source samples meeting the sample condition.
    pub m_min: u64,
    /// Whether the profile distance is below `distance_threshold`.
    pub distance_ok: bool,
    pub distance_threshold: T,
    #[serde(rename = "F")]
    pub f_value: T,
    pub epsilon_bar: T,
    pub epsilon_pq: T,
}

/// Profile-distance condition `‖𝒫 - 𝒬‖ < εR₀ / (2B·λ_u π γ²·N)`, returned
/// with its threshold. Unlike [`tl_min_source_samples`] this does not need
/// `distance < ε̄`.
pub fn distance_condition<T: Scalar>(inputs: &BoundInputs<T>, distance: T) -> (bool, T) {
    let c = &inputs.config;
    let threshold = inputs.epsilon * c.bs_rate
        / (T::lit(2.0) * c.file_size * c.user_neighbor_mean() * T::from_count(c.n_files as u64));
    (distance < threshold, threshold)
}

/// Source-sample count and distance condition for transfer learning to
/// improve on the target-only waiting time.
pub fn tl_min_source_samples<T: Scalar>(
    inputs: &BoundInputs<T>,
    distance: T,
) -> Result<TlRequirement<T>> {
    check_distance(distance)?;
    let c = &inputs.config;
    if !(c.lambda_u > T::zero()) {
        return Err(Error::param("source-sample requirement needs lambda_u > 0"));
    }
    let eb = epsilon_bar(inputs);
    let epq = epsilon_pq(eb, distance)?;
    let two = T::lit(2.0);
    let users = c.users_in_coverage_mean();
    let log_term = inputs.log_term();
    let level = log_term / users;
    let ratio = (two * eb * eb).one_minus_exp_neg() / (two * epq * epq).one_minus_exp_neg();
    let f_value = users * (T::one() - ratio.exp() * (T::one() - level));
    let m_real = (log_term - f_value).max(T::zero()) / (two * epq * epq);
    let m_min = m_real.ceil().to_u64().unwrap_or(u64::MAX);
    let (distance_ok, distance_threshold) = distance_condition(inputs, distance);
    Ok(TlRequirement {
        m_min,
        distance_ok,
        distance_threshold,
        f_value,
        epsilon_bar: eb,
        epsilon_pq: epq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caching::FormulaMode;
    use std::f64::consts::PI;

    /// N = 10, δ = 0.1, πR² = 314.159, λ_r = 1, B/R₀ = 1, ε = 0.5 (so ε̄ = 0.025).
    fn reference_inputs(lambda_u: f64) -> BoundInputs {
        let config = NetworkConfig {
            lambda_u,
            lambda_s: 1.0,
            lambda_b: 0.0,
            lambda_r: 1.0,
            coverage_radius: (314.159f64 / PI).sqrt(),
            comm_radius: 1.0,
            file_size: 1.0,
            bs_rate: 1.0,
            n_files: 10,
            cache_size: 1,
            formula_mode: FormulaMode::Appendix,
        };
        BoundInputs::new(config, 0.5, 0.1, SupMode::ConservativeN).unwrap()
    }

    fn finite(b: &WaitingTimeBound) -> f64 {
        match b.value {
            BoundValue::Finite(v) => v,
            BoundValue::Infinite => panic!("expected a finite bound"),
        }
    }

    #[test]
    fn input_validation() {
        let base = reference_inputs(0.1);
        let cfg = base.config.clone();
        assert!(BoundInputs::new(cfg.clone(), 0.5, 0.0, SupMode::ConservativeN).is_err());
        assert!(BoundInputs::new(cfg.clone(), 0.5, 1.0, SupMode::ConservativeN).is_err());
        assert!(BoundInputs::new(cfg, 0.0, 0.1, SupMode::ConservativeN).is_err());
    }

    #[test]
    fn conservative_sup_is_n() {
        assert_eq!(
            sup_g_sum(&reference_inputs(0.1).config, SupMode::ConservativeN),
            10.0
        );
    }

    #[test]
    fn numeric_sup_m1_is_a_vertex() {
        let mut cfg = reference_inputs(0.1).config;
        cfg.n_files = 3;
        cfg.lambda_u = 1.0 / PI; // λ_u π γ² = 1
        let sup = sup_g_sum(&cfg, SupMode::Numeric);
        assert!(
            (sup - (1.0 + 2.0 * (-1.0f64).exp())).abs() < 1e-9,
            "sup {sup}"
        );
    }

    #[test]
    fn numeric_sup_matches_grid_search_and_stays_below_n() {
        for (m, c) in [(2usize, 0.5f64), (2, 3.0), (3, 1.5), (4, 6.0), (5, 0.2)] {
            let mut cfg = reference_inputs(0.1).config;
            cfg.n_files = 3;
            cfg.cache_size = m;
            cfg.lambda_u = c / PI;
            let g = |x: f64| (-c * (1.0 - x).powi(m as i32)).exp();
            let steps = 400;
            let mut oracle = f64::NEG_INFINITY;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                    oracle = oracle.max(g(a) + g(b) + g(1.0 - a - b));
                }
            }
            let sup = sup_g_sum(&cfg, SupMode::Numeric);
            assert!(sup >= oracle - 1e-12, "M={m} c={c}: {sup} < grid {oracle}");
            assert!(sup - oracle < 1e-3, "M={m} c={c}: {sup} vs grid {oracle}");
            assert!(sup <= 3.0);
        }
    }

    #[test]
    fn epsilon_bar_examples() {
        let inputs = reference_inputs(0.1);
        assert!((epsilon_bar(&inputs) - 0.025).abs() < 1e-15);
        let mut doubled = inputs.clone();
        doubled.config.file_size = 2.0;
        assert!((epsilon_bar(&doubled) - 0.0125).abs() < 1e-15);
        let mut tiny = inputs;
        tiny.epsilon = 1e-300;
        assert!(epsilon_bar(&tiny) < 1e-299);
    }

    #[test]
    fn target_bound_hand_values() {
        let below = waiting_time_target(&reference_inputs(0.01));
        assert_eq!(below.value, BoundValue::Infinite);
        assert!((below.threshold - 0.016_865_082).abs() < 1e-8);

        let b = waiting_time_target(&reference_inputs(0.1));
        assert!((finite(&b) - 147.85).abs() < 0.01, "tau {}", finite(&b));
        assert!((b.diagnostics.inner_log_argument.unwrap() - 0.168_650_822).abs() < 1e-8);
    }

    #[test]
    fn target_bound_vanishes_for_dense_users() {
        let taus: Vec<f64> = [1.0, 10.0, 1e3, 1e6]
            .iter()
            .map(|&l| finite(&waiting_time_target(&reference_inputs(l))))
            .collect();
        assert!(taus.windows(2).all(|w| w[1] < w[0]));
        assert!(taus[3] > 0.0 && taus[3] < 1e-3);
    }

    #[test]
    fn finiteness_switches_exactly_at_threshold() {
        let inputs = reference_inputs(0.1);
        let l = target_threshold(&inputs);
        let at = |lu: f64| {
            let mut i = inputs.clone();
            i.config.lambda_u = lu;
            waiting_time_target(&i)
        };
        assert_eq!(at(l).value, BoundValue::Infinite);
        let just_above = at(l.next_up());
        assert!(just_above.value.is_finite());
        assert!(just_above.value.as_scalar().is_finite());
    }

    #[test]
    fn simplified_bound_examples() {
        let inputs = reference_inputs(0.1);
        assert!((waiting_time_simplified(&inputs, false) - 134.92).abs() < 0.01);

        let mut fast = inputs.clone();
        fast.config.lambda_r = 2.0;
        let ratio = waiting_time_simplified(&fast, true) / waiting_time_simplified(&fast, false);
        assert!((ratio - 4.0).abs() < 1e-12);

        let mut doubled = inputs.clone();
        doubled.config.n_files = 20;
        let got =
            waiting_time_simplified(&doubled, false) / waiting_time_simplified(&inputs, false);
        let expected = 4.0 * (40.0f64 / 0.1).ln() / (20.0f64 / 0.1).ln();
        assert!(((got - expected) / expected).abs() < 1e-9);
    }

    #[test]
    fn tl_reduces_to_target() {
        for lu in [0.01, 0.05, 0.1, 3.0] {
            let inputs = reference_inputs(lu);
            let tl = waiting_time_tl(&inputs, 0, 0.0).unwrap();
            let target = waiting_time_target(&inputs);
            assert_eq!(tl.value, target.value);
            assert_eq!(tl.threshold, target.threshold);
        }
    }

    #[test]
    fn many_source_samples_make_every_density_finite() {
        let inputs = reference_inputs(1e-6);
        let b = waiting_time_tl(&inputs, 5000, 0.0).unwrap();
        assert!(b.threshold < 0.0);
        assert_eq!(b.value, BoundValue::Finite(0.0));
        assert!(b.diagnostics.inner_log_argument.unwrap() < 0.0);
    }

    #[test]
    fn tl_accuracy_floor() {
        let inputs = reference_inputs(0.1);
        assert!(matches!(
            waiting_time_tl(&inputs, 10, 0.025),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            waiting_time_tl(&inputs, 10, 0.03),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            waiting_time_tl(&inputs, 10, 1.5),
            Err(Error::Parameter(_))
        ));
        assert!(waiting_time_tl(&inputs, 10, 0.02).is_ok());
    }

    #[test]
    fn tl_threshold_switch() {
        let inputs = reference_inputs(0.1);
        let rho = tl_threshold(&inputs, 1000, 0.01).unwrap();
        assert!(rho > 0.0);
        let at = |lu: f64| {
            let mut i = inputs.clone();
            i.config.lambda_u = lu;
            waiting_time_tl(&i, 1000, 0.01).unwrap().value
        };
        assert_eq!(at(rho), BoundValue::Infinite);
        assert!(at(rho.next_up()).is_finite());
    }

    #[test]
    fn min_source_samples_hand_values() {
        let req = tl_min_source_samples(&reference_inputs(0.1), 0.0).unwrap();
        assert!(
            (req.f_value - (-39.579_05)).abs() < 1e-3,
            "F {}",
            req.f_value
        );
        assert_eq!(req.m_min, 35_902);

        // λ_u π γ² = 0.314159 → threshold ≈ 0.0796.
        let mut inputs = reference_inputs(0.1);
        inputs.config.comm_radius = (0.314159f64 / (0.1 * PI)).sqrt();
        let req = tl_min_source_samples(&inputs, 0.02).unwrap();
        assert!((req.distance_threshold - 0.0796).abs() < 1e-4);
        assert!(req.distance_ok);
        assert!(tl_min_source_samples(&inputs, 0.025).is_err());
        assert!(distance_condition(&inputs, 0.05).0);
        assert!(!distance_condition(&inputs, 0.08).0);
    }

    #[test]
    fn infinite_serializes_as_string() {
        let b = waiting_time_target(&reference_inputs(0.01));
        let json = serde_json::to_value(&b).unwrap();
        assert_eq!(json["value"], "infinite");
        let b = waiting_time_target(&reference_inputs(0.1));
        assert!(serde_json::to_value(&b).unwrap()["value"].is_number());
    }

    #[test]
    fn f32_bounds_track_f64() {
        let i64 = reference_inputs(0.1);
        let c = &i64.config;
        let cfg32 = NetworkConfig::<f32> {
            lambda_u: 0.1,
            lambda_s: 1.0,
            lambda_b: 0.0,
            lambda_r: 1.0,
            coverage_radius: c.coverage_radius as f32,
            comm_radius: 1.0,
            file_size: 1.0,
            bs_rate: 1.0,
            n_files: 10,
            cache_size: 1,
            formula_mode: FormulaMode::Appendix,
        };
        let i32_ = BoundInputs::new(cfg32, 0.5f32, 0.1, SupMode::ConservativeN).unwrap();
        let a = waiting_time_target(&i32_).value.as_scalar() as f64;
        let b = waiting_time_target(&i64).value.as_scalar();
        assert!(((a - b) / b).abs() < 1e-4);
    }
}
