//! Homogeneous Poisson point processes on planar disks.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{disk_area, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn distance_squared(&self, other: &Point<T>) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Disk with a strictly positive radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Region<T = f64> {
    center: Point<T>,
    radius: T,
}

impl<T: Scalar> Region<T> {
    pub fn new(center: Point<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::param(format!(
                "region radius must be > 0, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(radius: T) -> Result<Self> {
        Self::new(Point::origin(), radius)
    }

    pub fn center(&self) -> Point<T> {
        self.center
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn area(&self) -> T {
        disk_area(self.radius)
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        self.center.distance_squared(p) <= self.radius * self.radius
    }
}

/// Realization of a point process.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PointSet<T = f64> {
    pub points: Vec<Point<T>>,
}

impl<T: Scalar> PointSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws a Poisson(`mean`) count. A zero mean yields zero.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::param(format!(
            "poisson mean must be finite and >= 0, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::param(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

/// Uniform point on the disk, by inverse-CDF on the radius (`R·√u`).
pub fn uniform_in_disk<T: Scalar, R: Rng + ?Sized>(region: &Region<T>, rng: &mut R) -> Point<T> {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let r = region.radius.as_f64() * u.sqrt();
    let theta = std::f64::consts::TAU * v;
    Point::new(
        region.center.x + T::lit(r * theta.cos()),
        region.center.y + T::lit(r * theta.sin()),
    )
}

/// Samples a homogeneous PPP with the given intensity on `region`.
pub fn sample_ppp<T: Scalar, R: Rng + ?Sized>(
    density: T,
    region: &Region<T>,
    rng: &mut R,
) -> Result<PointSet<T>> {
    if !(density >= T::zero()) {
        return Err(Error::param(format!("density must be >= 0, got {density}")));
    }
    let count = poisson_count((density * region.area()).as_f64(), rng)?;
    let points = (0..count).map(|_| uniform_in_disk(region, rng)).collect();
    Ok(PointSet { points })
}

/// Number of points strictly closer than `radius` to `center`.
pub fn count_within<T: Scalar>(points: &PointSet<T>, center: &Point<T>, radius: T) -> usize {
    let r2 = radius * radius;
    points
        .points
        .iter()
        .filter(|p| p.distance_squared(center) < r2)
        .count()
}
