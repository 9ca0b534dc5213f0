//! Experiment specifications.
//!
//! A spec file is a JSON object whose top-level keys override the built-in
//! defaults for the experiment kind; `config` and `solver` are merged key by
//! key. Unknown keys are rejected. The fully resolved spec is embedded in
//! every report.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::SupMode;
use crate::caching::{zipf_profile, FormulaMode, NetworkConfig, PopularityProfile};
use crate::error::{Error, Result};
use crate::optimizer::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ValidateTheorem1,
    WaitingTimeSweep,
    TlComparison,
    Optimize,
    Bounds,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ValidateTheorem1 => "validate_theorem1",
            ExperimentKind::WaitingTimeSweep => "waiting_time_sweep",
            ExperimentKind::TlComparison => "tl_comparison",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

/// Where a popularity profile comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    Zipf { s: f64 },
    Explicit(Vec<f64>),
}

impl ProfileSource {
    pub fn resolve(&self, n: usize) -> Result<PopularityProfile> {
        match self {
            ProfileSource::Zipf { s } => zipf_profile(n, *s),
            ProfileSource::Explicit(v) => {
                if v.len() != n {
                    return Err(Error::param(format!("has {} entries but N = {n}", v.len())));
                }
                PopularityProfile::new(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: NetworkConfig,
    pub profile: ProfileSource,
    /// Source-domain distribution 𝒬 (transfer learning, bound distances).
    pub q_profile: Option<ProfileSource>,
    pub epsilon: f64,
    pub delta: f64,
    pub sup_mode: SupMode,
    pub tau_grid: Vec<f64>,
    pub lambda_u_grid: Vec<f64>,
    pub m_grid: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; `null` uses every available core. Never affects results.
    pub workers: Option<usize>,
    pub solver: SolverOptions,
    pub output_dir: Option<String>,
}

impl ExperimentSpec {
    /// Built-in defaults for an experiment kind.
    pub fn default_for(kind: ExperimentKind) -> Self {
        // λ_s π γ² = 2 with γ = 1; λ_u π R² ≈ 50.27 with R = 4.
        let config = NetworkConfig {
            lambda_u: 1.0,
            lambda_s: 2.0 / std::f64::consts::PI,
            lambda_b: 0.0,
            lambda_r: 1.0,
            coverage_radius: 4.0,
            comm_radius: 1.0,
            file_size: 1.0,
            bs_rate: 1.0,
            n_files: 5,
            cache_size: 2,
            formula_mode: FormulaMode::Appendix,
        };
        let mut spec = Self {
            kind,
            config,
            profile: ProfileSource::Zipf { s: 0.8 },
            q_profile: None,
            epsilon: 0.5,
            delta: 0.1,
            sup_mode: SupMode::ConservativeN,
            tau_grid: vec![],
            lambda_u_grid: vec![],
            m_grid: vec![],
            trials: 200,
            seed: 2024,
            workers: None,
            solver: SolverOptions::default(),
            output_dir: None,
        };
        match kind {
            ExperimentKind::ValidateTheorem1 => spec.trials = 1_000_000,
            ExperimentKind::WaitingTimeSweep => {
                spec.tau_grid = vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
            }
            ExperimentKind::TlComparison => {
                spec.q_profile = Some(ProfileSource::Zipf { s: 0.8 });
                spec.tau_grid = vec![0.02];
                spec.m_grid = vec![0, 100, 1_000, 10_000, 100_000];
            }
            ExperimentKind::Optimize => spec.trials = 1,
            ExperimentKind::Bounds => {
                spec.trials = 1;
                spec.config.n_files = 10;
                spec.config.cache_size = 1;
                spec.config.coverage_radius = 10.0;
                spec.config.lambda_u = 0.1;
                spec.lambda_u_grid = vec![0.01, 0.02, 0.05, 0.1, 1.0];
                spec.m_grid = vec![0, 1_000, 5_000, 40_000];
            }
        }
        spec
    }

    /// Parses a spec file for `kind`, overlaying it on the defaults.
    pub fn from_json_str(kind: ExperimentKind, text: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(text)
            .map_err(|e| Error::config("$", format!("not valid JSON: {e}")))?;
        Self::from_overlay(kind, overlay)
    }

    pub fn from_overlay(kind: ExperimentKind, overlay: Value) -> Result<Self> {
        let Value::Object(overlay) = overlay else {
            return Err(Error::config("$", "spec must be a JSON object"));
        };
        let mut base = serde_json::to_value(Self::default_for(kind))?;
        let base_map = base.as_object_mut().expect("spec serializes to an object");
        for (key, value) in overlay {
            match (key.as_str(), base_map.get_mut(&key), value) {
                ("config" | "solver", Some(Value::Object(dst)), Value::Object(src)) => {
                    dst.extend(src);
                }
                (_, _, value) => {
                    base_map.insert(key, value);
                }
            }
        }
        let spec: Self = serde_path_to_error::deserialize(base).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        if spec.kind != kind {
            return Err(Error::config(
                "kind",
                format!(
                    "spec is for `{}` but `{}` was requested",
                    spec.kind.as_str(),
                    kind.as_str()
                ),
            ));
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every invariant, reporting the offending field path.
    pub fn validate(&self) -> Result<()> {
        if let Some((field, msg)) = self.config.first_violation() {
            return Err(Error::config(format!("config.{field}"), msg));
        }
        if let Some((field, msg)) = self.solver.first_violation() {
            return Err(Error::config(format!("solver.{field}"), msg));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config("epsilon", "must be > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be >= 1 when set"));
        }
        self.profile
            .resolve(self.config.n_files)
            .map_err(|e| Error::config("profile", e.to_string()))?;
        if let Some(q) = &self.q_profile {
            q.resolve(self.config.n_files)
                .map_err(|e| Error::config("q_profile", e.to_string()))?;
        }
        for (i, &tau) in self.tau_grid.iter().enumerate() {
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(Error::config(
                    format!("tau_grid[{i}]"),
                    "must be finite and >= 0",
                ));
            }
        }
        for (i, &l) in self.lambda_u_grid.iter().enumerate() {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::config(
                    format!("lambda_u_grid[{i}]"),
                    "must be finite and >= 0",
                ));
            }
        }
        let needs_rate = matches!(
            self.kind,
            ExperimentKind::WaitingTimeSweep
                | ExperimentKind::TlComparison
                | ExperimentKind::Bounds
        );
        if needs_rate && !(self.config.lambda_r > 0.0) {
            return Err(Error::config(
                "config.lambda_r",
                "must be > 0 for waiting-time bounds",
            ));
        }
        match self.kind {
            ExperimentKind::WaitingTimeSweep if self.tau_grid.is_empty() => {
                Err(Error::config("tau_grid", "must not be empty"))
            }
            ExperimentKind::TlComparison if self.tau_grid.is_empty() => {
                Err(Error::config("tau_grid", "must not be empty"))
            }
            ExperimentKind::TlComparison if self.m_grid.is_empty() => {
                Err(Error::config("m_grid", "must not be empty"))
            }
            ExperimentKind::TlComparison if self.q_profile.is_none() => {
                Err(Error::config("q_profile", "required for tl_comparison"))
            }
            ExperimentKind::Bounds if self.lambda_u_grid.is_empty() => {
                Err(Error::config("lambda_u_grid", "must not be empty"))
            }
            _ => Ok(()),
        }
    }

    pub fn popularity(&self) -> Result<PopularityProfile> {
        self.profile.resolve(self.config.n_files)
    }

    pub fn source_profile(&self) -> Result<Option<PopularityProfile>> {
        self.q_profile
            .as_ref()
            .map(|q| q.resolve(self.config.n_files))
            .transpose()
    }
}
