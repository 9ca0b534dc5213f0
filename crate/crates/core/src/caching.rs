//! Network model, popularity profiles, randomized caching strategies and the
//! closed-form offloading loss.
//!
//! Each small base station (SBS) fills its `M` cache slots with i.i.d. draws
//! from the caching distribution Π. A typical user at the origin sees a
//! Poisson number of SBSs (mean `λ_s·π·γ²`) and misses file `i` when none of
//! them holds it, which happens with probability
//! `exp{-λ_s·π·γ²·[1 - (1 - π_i)^M]}`.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{disk_area, Scalar};

/// Which exponent the miss probability uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    /// `exp{-λ_s π γ² [1 - (1-π_i)^M]}`: counts SBS neighbours holding the file.
    #[default]
    Appendix,
    /// `exp{-λ_u π γ² (1-π_i)^M}`, the user-density form that the waiting-time
    /// bounds are written in.
    MainText,
}

/// Scalar model parameters. Field names in JSON follow the usual symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig<T = f64> {
    /// User density λ_u.
    pub lambda_u: T,
    /// SBS density λ_s.
    pub lambda_s: T,
    /// BS density λ_b. Informational only.
    pub lambda_b: T,
    /// Per-user request rate λ_r.
    pub lambda_r: T,
    /// BS coverage radius.
    #[serde(rename = "R")]
    pub coverage_radius: T,
    /// SBS communication radius γ.
    #[serde(rename = "gamma")]
    pub comm_radius: T,
    /// File size in bits.
    #[serde(rename = "B")]
    pub file_size: T,
    /// BS-to-user rate in bits per unit time.
    #[serde(rename = "R0")]
    pub bs_rate: T,
    #[serde(rename = "N")]
    pub n_files: usize,
    #[serde(rename = "M")]
    pub cache_size: usize,
    #[serde(default)]
    pub formula_mode: FormulaMode,
}

impl<T: Scalar> NetworkConfig<T> {
    /// First violated invariant as `(json field, message)`.
    pub fn first_violation(&self) -> Option<(&'static str, String)> {
        let nonneg = [
            ("lambda_u", self.lambda_u),
            ("lambda_s", self.lambda_s),
            ("lambda_b", self.lambda_b),
            ("lambda_r", self.lambda_r),
        ];
        for (name, v) in nonneg {
            if !(v >= T::zero()) || !v.is_finite() {
                return Some((name, format!("must be finite and >= 0, got {v}")));
            }
        }
        let positive = [
            ("R", self.coverage_radius),
            ("gamma", self.comm_radius),
            ("B", self.file_size),
            ("R0", self.bs_rate),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Some((name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.n_files == 0 {
            return Some(("N", "must be >= 1".into()));
        }
        if self.cache_size == 0 {
            return Some(("M", "must be >= 1".into()));
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_violation() {
            Some((field, msg)) => Err(Error::param(format!("{field} {msg}"))),
            None => Ok(()),
        }
    }

    /// Mean number of SBSs within γ of a user, `λ_s·π·γ²`.
    pub fn sbs_neighbor_mean(&self) -> T {
        self.lambda_s * disk_area(self.comm_radius)
    }

    /// `λ_u·π·γ²`, the exponent scale of the bound weight.
    pub fn user_neighbor_mean(&self) -> T {
        self.lambda_u * disk_area(self.comm_radius)
    }

    /// Mean number of users in the BS coverage disk, `λ_u·π·R²`.
    pub fn users_in_coverage_mean(&self) -> T {
        self.lambda_u * self.coverage_area()
    }

    pub fn coverage_area(&self) -> T {
        disk_area(self.coverage_radius)
    }

    /// Backhaul delivery time `B/R₀` charged per miss.
    pub fn delivery_time(&self) -> T {
        self.file_size / self.bs_rate
    }

    pub fn to_f64(&self) -> NetworkConfig<f64> {
        NetworkConfig {
            lambda_u: self.lambda_u.as_f64(),
            lambda_s: self.lambda_s.as_f64(),
            lambda_b: self.lambda_b.as_f64(),
            lambda_r: self.lambda_r.as_f64(),
            coverage_radius: self.coverage_radius.as_f64(),
            comm_radius: self.comm_radius.as_f64(),
            file_size: self.file_size.as_f64(),
            bs_rate: self.bs_rate.as_f64(),
            n_files: self.n_files,
            cache_size: self.cache_size,
            formula_mode: self.formula_mode,
        }
    }
}

/// Sum tolerance accepted as-is.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;
/// Sum tolerance within which constructors renormalize instead of rejecting.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

fn check_simplex<T: Scalar>(mut values: Vec<T>, what: &str) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::param(format!("{what} must have at least one entry")));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < T::zero() || **v > T::one())
    {
        return Err(Error::param(format!("{what}[{i}] = {v} is not in [0, 1]")));
    }
    let sum: T = values.iter().copied().sum();
    let err = (sum - T::one()).abs().as_f64();
    if err > RENORMALIZE_TOLERANCE {
        return Err(Error::param(format!("{what} sums to {sum}, expected 1")));
    }
    if err > SIMPLEX_TOLERANCE {
        values.iter_mut().for_each(|v| *v = *v / sum);
    }
    Ok(values)
}

macro_rules! simplex_newtype {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "Vec<T>", into = "Vec<T>")]
        #[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
        pub struct $name<T: Scalar = f64>(Vec<T>);

        impl<T: Scalar> $name<T> {
            /// Validates the simplex invariants, renormalizing sums within
            /// [`RENORMALIZE_TOLERANCE`] of one.
            pub fn new(values: Vec<T>) -> Result<Self> {
                check_simplex(values, $what).map(Self)
            }

            pub fn uniform(n: usize) -> Result<Self> {
                if n == 0 {
                    return Err(Error::param(concat!($what, " must have at least one entry")));
                }
                Ok(Self(vec![T::one() / T::from_count(n as u64); n]))
            }

            pub fn values(&self) -> &[T] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn into_inner(self) -> Vec<T> {
                self.0
            }
        }

        impl<T: Scalar> TryFrom<Vec<T>> for $name<T> {
            type Error = Error;

            fn try_from(values: Vec<T>) -> Result<Self> {
                Self::new(values)
            }
        }

        impl<T: Scalar> From<$name<T>> for Vec<T> {
            fn from(v: $name<T>) -> Vec<T> {
                v.0
            }
        }

        impl<T: Scalar> std::ops::Index<usize> for $name<T> {
            type Output = T;

            fn index(&self, i: usize) -> &T {
                &self.0[i]
            }
        }
    };
}

simplex_newtype!(
    /// Request distribution 𝒫 over the file catalog.
    PopularityProfile,
    "popularity profile"
);

simplex_newtype!(
    /// Caching distribution Π from which every SBS draws its cache slots.
    CachingStrategy,
    "caching strategy"
);

impl<T: Scalar> CachingStrategy<T> {
    /// The popularity-proportional baseline, Π = 𝒫.
    pub fn proportional_to(profile: &PopularityProfile<T>) -> Self {
        Self(profile.values().to_vec())
    }
}

/// One-based index into the file catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileIndex(u32);

impl FileIndex {
    pub fn new(one_based: usize) -> Result<Self> {
        if one_based == 0 || one_based > u32::MAX as usize {
            return Err(Error::Data(format!(
                "file index {one_based} is not a valid one-based index"
            )));
        }
        Ok(Self(one_based as u32))
    }

    pub(crate) fn from_slot(slot: usize) -> Self {
        Self(slot as u32 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based position in profile and strategy vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for FileIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The `M` slots of one SBS cache. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheContents {
    pub entries: Vec<FileIndex>,
}

impl CacheContents {
    pub fn contains(&self, file: FileIndex) -> bool {
        self.entries.contains(&file)
    }
}

/// Categorical sampler over a simplex vector, yielding one-based indices.
#[derive(Debug, Clone)]
pub struct FileSampler {
    dist: WeightedIndex<f64>,
}

impl FileSampler {
    pub fn new<T: Scalar>(weights: &[T]) -> Result<Self> {
        let w: Vec<f64> = weights.iter().map(|v| v.as_f64()).collect();
        WeightedIndex::new(&w)
            .map(|dist| Self { dist })
            .map_err(|e| Error::param(format!("cannot sample from weights: {e}")))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FileIndex {
        FileIndex::from_slot(self.dist.sample(rng))
    }
}

/// Profile with `p_i ∝ i^(-s)`.
pub fn zipf_profile<T: Scalar>(n: usize, s: T) -> Result<PopularityProfile<T>> {
    if n == 0 {
        return Err(Error::param("zipf profile needs N >= 1"));
    }
    if !(s >= T::zero()) || !s.is_finite() {
        return Err(Error::param(format!(
            "zipf exponent must be finite and >= 0, got {s}"
        )));
    }
    let weights: Vec<T> = (1..=n).map(|i| T::from_count(i as u64).powf(-s)).collect();
    let total: T = weights.iter().copied().sum();
    PopularityProfile::new(weights.into_iter().map(|w| w / total).collect())
}

/// Fills one cache with `m` i.i.d. draws from the strategy.
pub fn sample_cache<T: Scalar, R: Rng + ?Sized>(
    strategy: &CachingStrategy<T>,
    m: usize,
    rng: &mut R,
) -> CacheContents {
    let sampler = FileSampler::new(strategy.values()).expect("strategy is a valid simplex");
    CacheContents {
        entries: (0..m).map(|_| sampler.sample(rng)).collect(),
    }
}

/// Probability that no SBS within γ of the typical user holds a file cached
/// with probability `pi_i`.
pub fn miss_probability<T: Scalar>(pi_i: T, config: &NetworkConfig<T>) -> T {
    let keep_out = (T::one() - pi_i).powi(config.cache_size as i32);
    match config.formula_mode {
        FormulaMode::Appendix => (-config.sbs_neighbor_mean() * (T::one() - keep_out)).exp(),
        FormulaMode::MainText => (-config.user_neighbor_mean() * keep_out).exp(),
    }
}

/// Offloading loss evaluated on raw vectors (not necessarily on the simplex).
///
/// Used by the optimizer and by finite-difference checks; entries of `pi`
/// should lie in `[0, 1]`.
pub fn loss_value<T: Scalar>(pi: &[T], p: &[T], config: &NetworkConfig<T>) -> T {
    assert_eq!(pi.len(), p.len(), "strategy and profile lengths differ");
    let total: T = pi
        .iter()
        .zip(p)
        .map(|(&pi_i, &p_i)| p_i * miss_probability(pi_i, config))
        .sum();
    config.delivery_time() * total
}

/// Average offloading loss `(B/R₀)·Σ p_i·miss(π_i)`.
///
/// Panics if the strategy and profile have different lengths.
pub fn offloading_loss<T: Scalar>(
    strategy: &CachingStrategy<T>,
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
) -> T {
    loss_value(strategy.values(), profile.values(), config)
}


#[cfg(test)]
mod tests {
    use super::test_support::config_with_c;
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(v: &[f64]) -> PopularityProfile {
        PopularityProfile::new(v.to_vec()).unwrap()
    }

    fn strategy(v: &[f64]) -> CachingStrategy {
        CachingStrategy::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zipf_examples() {
        assert_eq!(zipf_profile(4, 0.0).unwrap().values(), &[0.25; 4]);
        let two = zipf_profile(2, 1.0).unwrap();
        assert_abs_diff_eq!(two[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(zipf_profile(1, 3.7).unwrap().values(), &[1.0]);
        assert!(zipf_profile::<f64>(0, 1.0).is_err());
    }

    #[test]
    fn simplex_constructor_tolerances() {
        assert!(PopularityProfile::new(vec![0.5, 0.5]).is_ok());
        let nudged = PopularityProfile::new(vec![0.5, 0.5 + 1e-10]).unwrap();
        let sum: f64 = nudged.values().iter().sum();
        assert!((sum - 1.0).abs() <= SIMPLEX_TOLERANCE);
        assert!(PopularityProfile::new(vec![0.5, 0.51]).is_err());
        assert!(CachingStrategy::new(vec![-0.1, 1.1]).is_err());
        assert!(CachingStrategy::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn simplex_json_is_a_plain_array() {
        let p = profile(&[0.75, 0.25]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.75,0.25]");
        let back: PopularityProfile = serde_json::from_str("[0.75,0.25]").unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<CachingStrategy>("[0.7,0.7]").is_err());
    }

    #[test]
    fn degenerate_cache_draws() {
        let mut rng = stream_rng(3, &[]);
        let c = sample_cache(&strategy(&[1.0, 0.0]), 3, &mut rng);
        assert_eq!(
            c.entries.iter().map(|f| f.get()).collect::<Vec<_>>(),
            vec![1, 1, 1]
        );
        let c = sample_cache(&strategy(&[0.0, 1.0, 0.0]), 2, &mut rng);
        assert_eq!(
            c.entries.iter().map(|f| f.get()).collect::<Vec<_>>(),
            vec![2, 2]
        );
    }

    #[test]
    fn fair_cache_draw_frequency() {
        let mut rng = stream_rng(4, &[]);
        let s = strategy(&[0.5, 0.5]);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_cache(&s, 1, &mut rng).entries[0].get() == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!(
            (freq - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(),
            "freq {freq}"
        );
    }

    #[test]
    fn miss_probability_examples() {
        assert_eq!(miss_probability(0.0, &config_with_c(3, 2, 1.7)), 1.0);
        assert_abs_diff_eq!(
            miss_probability(1.0, &config_with_c(3, 4, 2.0)),
            (-2.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            miss_probability(0.5, &config_with_c(3, 2, 1.0)),
            0.472_366_552_741_014_7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn main_text_mode_uses_user_density() {
        let mut cfg = config_with_c(2, 2, 1.0);
        cfg.formula_mode = FormulaMode::MainText;
        let c_u = cfg.user_neighbor_mean();
        assert_abs_diff_eq!(
            miss_probability(0.5, &cfg),
            (-c_u * 0.25).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn loss_examples() {
        let p = profile(&[0.8, 0.2]);
        let cfg = config_with_c(2, 1, 1.0);
        assert_abs_diff_eq!(
            offloading_loss(&strategy(&[0.5, 0.5]), &p, &cfg),
            (-0.5f64).exp(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            offloading_loss(&strategy(&[1.0, 0.0]), &p, &cfg),
            0.8 * (-1.0f64).exp() + 0.2,
            epsilon = 1e-12
        );
        let mut none = config_with_c(2, 1, 1.0);
        none.lambda_s = 0.0;
        none.file_size = 3.0;
        assert_abs_diff_eq!(
            offloading_loss(&strategy(&[0.3, 0.7]), &p, &none),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn f32_evaluation_agrees() {
        let cfg64 = config_with_c(2, 2, 1.0);
        let cfg32 = NetworkConfig::<f32> {
            lambda_u: 0.1,
            lambda_s: cfg64.lambda_s as f32,
            lambda_b: 0.0,
            lambda_r: 1.0,
            coverage_radius: 10.0,
            comm_radius: 1.0,
            file_size: 1.0,
            bs_rate: 1.0,
            n_files: 2,
            cache_size: 2,
            formula_mode: FormulaMode::Appendix,
        };
        assert!((miss_probability(0.5f32, &cfg32) - 0.472_366_55).abs() < 1e-6);
    }

    #[test]
    fn config_validation_names_field() {
        let mut cfg = config_with_c(2, 1, 1.0);
        cfg.comm_radius = 0.0;
        assert_eq!(cfg.first_violation().unwrap().0, "gamma");
        cfg = config_with_c(2, 1, 1.0);
        cfg.cache_size = 0;
        assert_eq!(cfg.first_violation().unwrap().0, "M");
        assert!(config_with_c(2, 1, 1.0).validate().is_ok());
    }

    #[test]
    fn config_json_uses_symbols_and_rejects_unknown_keys() {
        let cfg = config_with_c(2, 1, 1.0);
        let json = serde_json::to_value(&cfg).unwrap();
        assert!(json.get("gamma").is_some() && json.get("R0").is_some());
        let mut bad = json.clone();
        bad["typo"] = serde_json::json!(1);
        assert!(serde_json::from_value::<NetworkConfig>(bad).is_err());
    }

    fn simplex_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn loss_is_bounded_and_monotone(
            (p, pi) in (1usize..8).prop_flat_map(|n| (simplex_vec(n), simplex_vec(n))),
            c in 0.0f64..6.0,
            m in 1usize..5,
            scale in 1.01f64..3.0,
        ) {
            let n = p.len();
            let p = PopularityProfile::new(p).unwrap();
            let pi = CachingStrategy::new(pi).unwrap();
            let mut cfg = config_with_c(n, m, c);
            cfg.file_size = 2.5;
            let base = offloading_loss(&pi, &p, &cfg);
            prop_assert!(base >= 0.0 && base <= cfg.delivery_time() + 1e-12);

            let mut denser = cfg.clone();
            denser.lambda_s *= scale;
            prop_assert!(offloading_loss(&pi, &p, &denser) <= base + 1e-12);
            let mut wider = cfg.clone();
            wider.comm_radius *= scale;
            prop_assert!(offloading_loss(&pi, &p, &wider) <= base + 1e-12);
            let mut bigger = cfg.clone();
            bigger.cache_size += 1;
            prop_assert!(offloading_loss(&pi, &p, &bigger) <= base + 1e-12);
        }

        #[test]
        fn miss_probability_strictly_decreasing(a in 0.001f64..0.998, gap in 0.0005f64..0.5, c in 0.1f64..5.0, m in 1usize..6) {
            let b = (a + gap).min(0.999);
            prop_assume!(b > a);
            let cfg = config_with_c(2, m, c);
            prop_assert!(miss_probability(b, &cfg) < miss_probability(a, &cfg));
        }
    }
}
