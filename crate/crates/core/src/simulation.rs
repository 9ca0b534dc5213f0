//! Monte Carlo oracle for the offloading loss and generators for request
//! traces and source-domain samples.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caching::{CachingStrategy, FileIndex, FileSampler, NetworkConfig, PopularityProfile};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::spatial::{count_within, poisson_count, sample_ppp, Point, Region};

/// Requests issued by one user inside the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRequests {
    pub position: Point<f64>,
    /// Sorted ascending, within `[0, tau]`.
    pub times: Vec<f64>,
    /// `files[k]` is the file requested at `times[k]`.
    pub files: Vec<FileIndex>,
}

/// Requests collected by the BS over `[0, tau]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLog {
    pub tau: f64,
    pub users: Vec<UserRequests>,
}

impl RequestLog {
    pub fn total_requests(&self) -> usize {
        self.users.iter().map(|u| u.files.len()).sum()
    }

    pub fn files(&self) -> impl Iterator<Item = FileIndex> + '_ {
        self.users.iter().flat_map(|u| u.files.iter().copied())
    }

    /// Checks ordering, window and index-range invariants for an `n`-file catalog.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (id, user) in self.users.iter().enumerate() {
            if user.times.len() != user.files.len() {
                return Err(Error::Data(format!(
                    "user {id}: {} times but {} files",
                    user.times.len(),
                    user.files.len()
                )));
            }
            if user.times.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Data(format!("user {id}: request times not sorted")));
            }
            if user.times.iter().any(|&t| !(0.0..=self.tau).contains(&t)) {
                return Err(Error::Data(format!(
                    "user {id}: request time outside [0, {}]",
                    self.tau
                )));
            }
            if let Some(f) = user.files.iter().find(|f| f.get() > n) {
                return Err(Error::Data(format!(
                    "user {id}: file index {f} outside [1, {n}]"
                )));
            }
        }
        Ok(())
    }

    /// Writes `user_id,time,file_index` rows in time order per user.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user_id,time,file_index")?;
        for (id, user) in self.users.iter().enumerate() {
            for (t, f) in user.times.iter().zip(&user.files) {
                writeln!(out, "{id},{t},{f}")?;
            }
        }
        Ok(())
    }
}

/// `m` i.i.d. file indices drawn from the source distribution 𝒬.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceSamples {
    pub indices: Vec<FileIndex>,
}

/// Mean and standard error of a Monte Carlo loss estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub misses: u64,
}

impl McEstimate {
    /// Standardized deviation of a reference value from the estimate. Zero when
    /// both agree exactly, infinite when the estimate has no spread but differs.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if diff == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY.copysign(diff)
        } else {
            diff / self.stderr
        }
    }
}

/// Samplers reused across many miss events for a fixed strategy.
struct MissSimulator {
    cache: FileSampler,
    region: Region<f64>,
    lambda_s: f64,
    slots: usize,
}

impl MissSimulator {
    fn new<T: Scalar>(strategy: &CachingStrategy<T>, config: &NetworkConfig<T>) -> Result<Self> {
        Ok(Self {
            cache: FileSampler::new(strategy.values())?,
            region: Region::centered(config.comm_radius.as_f64())?,
            lambda_s: config.lambda_s.as_f64(),
            slots: config.cache_size,
        })
    }

    fn is_miss<R: Rng + ?Sized>(&self, file: FileIndex, rng: &mut R) -> bool {
        let sbs = sample_ppp(self.lambda_s, &self.region, rng).expect("validated density");
        let neighbours = count_within(&sbs, &Point::origin(), self.region.radius());
        !(0..neighbours).any(|_| (0..self.slots).any(|_| self.cache.sample(rng) == file))
    }
}

/// One realization of the miss indicator for a typical user at the origin:
/// SBSs are drawn from a PPP on the γ-disk, each fills its cache from Π, and
/// the event is a miss when no neighbour holds `file`.
pub fn simulate_miss_event<T: Scalar, R: Rng + ?Sized>(
    strategy: &CachingStrategy<T>,
    file: FileIndex,
    config: &NetworkConfig<T>,
    rng: &mut R,
) -> Result<bool> {
    config.validate()?;
    Ok(MissSimulator::new(strategy, config)?.is_miss(file, rng))
}

/// Monte Carlo estimate of the offloading loss.
///
/// Trial `k` uses the stream `(seed, k)`, so the result is identical for any
/// number of worker threads.
pub fn mc_offloading_loss<T: Scalar>(
    strategy: &CachingStrategy<T>,
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::param("trials must be >= 1"));
    }
    config.validate()?;
    if strategy.len() != profile.len() {
        return Err(Error::param("strategy and profile lengths differ"));
    }
    let sim = MissSimulator::new(strategy, config)?;
    let requests = FileSampler::new(profile.values())?;
    let misses = (0..trials)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = stream_rng(seed, &[k]);
            let file = requests.sample(&mut rng);
            sim.is_miss(file, &mut rng)
        })
        .count() as u64;

    let scale = config.delivery_time().as_f64();
    let frac = misses as f64 / trials as f64;
    let stderr = if trials > 1 {
        scale * (frac * (1.0 - frac) / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean: scale * frac,
        stderr,
        trials,
        misses,
    })
}

/// Request trace over `[0, tau]`: users form a PPP(λ_u) on the BS disk, each
/// issues Poisson(λ_r·τ) requests at uniform times for files drawn from 𝒫.
pub fn generate_requests<T: Scalar, R: Rng + ?Sized>(
    profile: &PopularityProfile<T>,
    config: &NetworkConfig<T>,
    tau: f64,
    rng: &mut R,
) -> Result<RequestLog> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param(format!(
            "tau must be finite and >= 0, got {tau}"
        )));
    }
    config.validate()?;
    let region = Region::centered(config.coverage_radius.as_f64())?;
    let positions = sample_ppp(config.lambda_u.as_f64(), &region, rng)?;
    let sampler = FileSampler::new(profile.values())?;
    let rate = config.lambda_r.as_f64() * tau;
    let users = positions
        .points
        .into_iter()
        .map(|position| {
            let k = poisson_count(rate, rng)?;
            let mut times: Vec<f64> = (0..k).map(|_| tau * rng.random::<f64>()).collect();
            times.sort_by(f64::total_cmp);
            let files = (0..k).map(|_| sampler.sample(rng)).collect();
            Ok(UserRequests {
                position,
                times,
                files,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RequestLog { tau, users })
}

/// `m` i.i.d. draws from 𝒬.
pub fn generate_source_samples<T: Scalar, R: Rng + ?Sized>(
    q: &PopularityProfile<T>,
    m: usize,
    rng: &mut R,
) -> Result<SourceSamples> {
    let sampler = FileSampler::new(q.values())?;
    Ok(SourceSamples {
        indices: (0..m).map(|_| sampler.sample(rng)).collect(),
    })
}
