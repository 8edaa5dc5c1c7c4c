//! Walker Delta kinematics in the ECEF frame.
//!
//! Satellite `(p, n)` sits on a circular orbit of radius `R + h` whose plane
//! is tilted by the inclination and rotated about the polar axis by
//! `2π(p−1)/P`. Its argument of latitude is `ωt + γ` with
//! `γ = 2π(n−1)/N + 2πF(p−1)/K`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const EARTH_RADIUS_KM: f64 = 6378.0;
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

/// 1-based (plane, slot) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SatIndex {
    pub p: usize,
    pub n: usize,
}

impl SatIndex {
    pub const fn new(p: usize, n: usize) -> Self {
        Self { p, n }
    }
}

impl fmt::Display for SatIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.p, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcefState {
    pub r: Vec3,
    pub v: Vec3,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkerConfig {
    total: usize,
    planes: usize,
    per_plane: usize,
    altitude_km: f64,
    inclination: f64,
    phasing: usize,
    earth_radius_km: f64,
    omega: f64,
    // Columns of Ξ_p·Π that multiply cos θ and sin θ.
    basis: Vec<(Vec3, Vec3)>,
}

impl WalkerConfig {
    /// Builds a constellation whose angular speed follows from the stated
    /// revolution period rather than from Kepler's law.
    pub fn new(
        total: usize,
        planes: usize,
        altitude_km: f64,
        inclination_rad: f64,
        phasing: usize,
        revolution_period_s: f64,
    ) -> Result<Self> {
        if !(revolution_period_s > 0.0) {
            return Err(Error::Config(format!(
                "revolution period must be positive, got {revolution_period_s}"
            )));
        }
        Self::with_omega(
            total,
            planes,
            altitude_km,
            inclination_rad,
            phasing,
            2.0 * PI / revolution_period_s,
            EARTH_RADIUS_KM,
        )
    }

    pub fn with_omega(
        total: usize,
        planes: usize,
        altitude_km: f64,
        inclination_rad: f64,
        phasing: usize,
        omega: f64,
        earth_radius_km: f64,
    ) -> Result<Self> {
        if planes == 0 || total == 0 || total % planes != 0 {
            return Err(Error::Config(format!(
                "total satellite count {total} is not a multiple of the plane count {planes}"
            )));
        }
        if !(0.0..=PI / 2.0).contains(&inclination_rad) {
            return Err(Error::Config(format!(
                "inclination {inclination_rad} rad outside [0, pi/2]"
            )));
        }
        if !(altitude_km > 0.0) || !(earth_radius_km > 0.0) {
            return Err(Error::Config("altitude and Earth radius must be positive".into()));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Config(format!("angular speed must be positive, got {omega}")));
        }
        if phasing >= planes {
            return Err(Error::Config(format!(
                "phasing parameter {phasing} must be below the plane count {planes}"
            )));
        }
        let (sa, ca) = inclination_rad.sin_cos();
        let basis = (0..planes)
            .map(|p| {
                let (sb, cb) = (2.0 * PI * p as f64 / planes as f64).sin_cos();
                (Vec3::new(ca * cb, ca * sb, sa), Vec3::new(-sb, cb, 0.0))
            })
            .collect();
        Ok(Self {
            total,
            planes,
            per_plane: total / planes,
            altitude_km,
            inclination: inclination_rad,
            phasing,
            earth_radius_km,
            omega,
            basis,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }
    pub fn planes(&self) -> usize {
        self.planes
    }
    pub fn per_plane(&self) -> usize {
        self.per_plane
    }
    pub fn altitude_km(&self) -> f64 {
        self.altitude_km
    }
    pub fn inclination(&self) -> f64 {
        self.inclination
    }
    pub fn phasing(&self) -> usize {
        self.phasing
    }
    pub fn earth_radius_km(&self) -> f64 {
        self.earth_radius_km
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }
    pub fn period_s(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn check(&self, s: SatIndex) -> Result<()> {
        if s.p == 0 || s.p > self.planes || s.n == 0 || s.n > self.per_plane {
            return Err(Error::Index(format!(
                "{s} outside {}x{} constellation",
                self.planes, self.per_plane
            )));
        }
        Ok(())
    }

    /// Row-major 1-based linear index over (p, n).
    pub fn linear_index(&self, s: SatIndex) -> Result<usize> {
        self.check(s)?;
        Ok((s.p - 1) * self.per_plane + s.n)
    }

    pub fn from_linear(&self, l: usize) -> Result<SatIndex> {
        if l == 0 || l > self.total {
            return Err(Error::Index(format!("linear index {l} outside 1..={}", self.total)));
        }
        Ok(SatIndex::new((l - 1) / self.per_plane + 1, (l - 1) % self.per_plane + 1))
    }

    pub fn satellites(&self) -> impl Iterator<Item = SatIndex> + '_ {
        (1..=self.planes).flat_map(move |p| (1..=self.per_plane).map(move |n| SatIndex::new(p, n)))
    }

    fn phase(&self, s: SatIndex, t: f64) -> f64 {
        let gamma = 2.0 * PI * (s.n - 1) as f64 / self.per_plane as f64
            + 2.0 * PI * (self.phasing * (s.p - 1)) as f64 / self.total as f64;
        self.omega * t + gamma
    }

    /// Position and velocity in one evaluation.
    pub fn state(&self, s: SatIndex, t: f64) -> Result<EcefState> {
        self.check(s)?;
        Ok(self.state_unchecked(s, t))
    }

    pub(crate) fn state_unchecked(&self, s: SatIndex, t: f64) -> EcefState {
        let (a, b) = &self.basis[s.p - 1];
        let (st, ct) = self.phase(s, t).sin_cos();
        let rad = self.orbit_radius_km();
        EcefState {
            r: (a * ct + b * st) * rad,
            v: (b * ct - a * st) * (rad * self.omega),
            t,
        }
    }

    /// Unit normal of plane `p`, the direction of `r × v` for its satellites.
    pub fn plane_normal(&self, p: usize) -> Result<Vec3> {
        self.check(SatIndex::new(p, 1))?;
        let (a, b) = &self.basis[p - 1];
        Ok(a.cross(b))
    }
}

pub fn ecef_position(cfg: &WalkerConfig, s: SatIndex, t: f64) -> Result<Vec3> {
    Ok(cfg.state(s, t)?.r)
}

pub fn ecef_velocity(cfg: &WalkerConfig, s: SatIndex, t: f64) -> Result<Vec3> {
    Ok(cfg.state(s, t)?.v)
}

pub fn distance(cfg: &WalkerConfig, a: SatIndex, b: SatIndex, t: f64) -> Result<f64> {
    Ok((cfg.state(a, t)?.r - cfg.state(b, t)?.r).norm())
}

/// Rate of change of the distance between `a` and `sink`; positive while receding.
pub fn radial_speed(cfg: &WalkerConfig, a: SatIndex, sink: SatIndex, t: f64) -> Result<f64> {
    if a == sink {
        cfg.check(a)?;
        return Err(Error::DegeneratePair(a));
    }
    let sa = cfg.state(a, t)?;
    let ss = cfg.state(sink, t)?;
    Ok(radial_speed_of(&sa, &ss))
}

pub(crate) fn radial_speed_of(a: &EcefState, sink: &EcefState) -> f64 {
    let dr = a.r - sink.r;
    dr.dot(&(a.v - sink.v)) / dr.norm()
}

/// Doppler shift in Hz, positive while the pair is receding.
///
/// The shift depends only on the pair's range rate, so it is the same for
/// `(a, sink)` and `(sink, a)`.
pub fn doppler_shift(cfg: &WalkerConfig, a: SatIndex, sink: SatIndex, t: f64, f_c: f64) -> Result<f64> {
    if !(f_c > 0.0) {
        return Err(Error::Domain(format!("carrier frequency must be positive, got {f_c}")));
    }
    Ok(doppler_from_radial(radial_speed(cfg, a, sink, t)?, f_c))
}

pub fn doppler_from_radial(radial_km_s: f64, f_c: f64) -> f64 {
    radial_km_s * f_c / SPEED_OF_LIGHT_KM_S
}
