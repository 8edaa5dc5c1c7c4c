//! Discrete-time multiple-access channel: composite pulse, noise whitening,
//! link amplitudes and per-group Vandermonde channels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{received_power, LinkBudget};

pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference power (W) dividing both link powers and the noise floor.
pub const P_REF: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum PulseShape {
    /// Composite transmit/receive pulse `1 − |t − T|/T` on (0, 2T).
    Triangular,
    /// Raised cosine centred at T and truncated to (0, 2T).
    RaisedCosine { roll_off: f64 },
}

impl PulseShape {
    /// Composite pulse value at `t` for symbol period `t_sym`.
    pub fn eval(&self, t: f64, t_sym: f64) -> f64 {
        if t <= 0.0 || t >= 2.0 * t_sym {
            return 0.0;
        }
        let x = (t - t_sym) / t_sym;
        match *self {
            PulseShape::Triangular => 1.0 - x.abs(),
            PulseShape::RaisedCosine { roll_off } => {
                let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                let den = 1.0 - (2.0 * roll_off * x).powi(2);
                if den.abs() < 1e-12 {
                    PI / 4.0 * sinc_of(1.0 / (2.0 * roll_off))
                } else {
                    sinc * (PI * roll_off * x).cos() / den
                }
            }
        }
    }
}

fn sinc_of(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[derive(Clone, Debug)]
pub struct PulseModel {
    s: usize,
    t_sym: f64,
    eps: f64,
    samples: DVector<f64>,
    cpp: DMatrix<f64>,
    tpp: DMatrix<f64>,
    p_eff: DMatrix<f64>,
    p_eff_c: DMatrix<Complex64>,
    e_p: f64,
}

/// Largest accepted condition number of the noise correlation.
pub const MAX_CORRELATION_CONDITION: f64 = 1e6;

pub fn build_pulse(s: usize, t_sym: f64, shape: PulseShape, eps: f64) -> Result<PulseModel> {
    if s < 2 {
        return Err(Error::Pulse(format!("oversampling factor must exceed 1, got {s}")));
    }
    if !(t_sym > 0.0) {
        return Err(Error::Pulse(format!("symbol period must be positive, got {t_sym}")));
    }
    if let PulseShape::RaisedCosine { roll_off } = shape {
        if !(0.0..=1.0).contains(&roll_off) {
            return Err(Error::Pulse(format!("roll-off {roll_off} outside [0, 1]")));
        }
    }
    let t_c = t_sym / s as f64;
    if !(eps >= 0.0 && eps < t_c) {
        return Err(Error::Pulse(format!("sampling offset {eps} outside [0, T_c)")));
    }
    let samples = DVector::from_fn(s, |i, _| shape.eval(i as f64 * t_c + eps, t_sym));
    let cpp = DMatrix::from_fn(s, s, |a, b| shape.eval((a as f64 - b as f64) * t_c + t_sym, t_sym));
    PulseModel::from_parts(s, t_sym, eps, samples, cpp)
}

impl PulseModel {
    /// Assembles a model from explicit samples and noise correlation.
    pub fn from_parts(s: usize, t_sym: f64, eps: f64, samples: DVector<f64>, cpp: DMatrix<f64>) -> Result<Self> {
        if samples.len() != s || cpp.nrows() != s || cpp.ncols() != s {
            return Err(Error::Shape(format!("pulse model needs {s} samples and a {s}x{s} correlation")));
        }
        if let Some(i) = samples.iter().position(|&p| p == 0.0) {
            return Err(Error::Pulse(format!("pulse sample {i} is zero; the sampled pulse matrix is singular")));
        }
        if (&cpp - cpp.transpose()).abs().max() > 1e-12 {
            return Err(Error::Pulse("noise correlation is not symmetric".into()));
        }
        let ev = cpp.clone().symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        if !(lo > 0.0 && hi / lo <= MAX_CORRELATION_CONDITION) {
            return Err(Error::Pulse(format!("noise correlation is numerically singular (eigenvalues {lo:.3e} to {hi:.3e})")));
        }
        let tpp = cpp
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Pulse("noise correlation is not positive definite".into()))?
            .l();
        let mut p_eff = DMatrix::from_diagonal(&samples);
        if !tpp.solve_lower_triangular_mut(&mut p_eff) {
            return Err(Error::Pulse("whitening factor is singular".into()));
        }
        let e_p = p_eff.diagonal().iter().map(|p| p * p).sum();
        let p_eff_c = p_eff.map(|x| Complex64::new(x, 0.0));
        Ok(Self { s, t_sym, eps, samples, cpp, tpp, p_eff, p_eff_c, e_p })
    }

    pub fn oversampling(&self) -> usize {
        self.s
    }
    pub fn symbol_period(&self) -> f64 {
        self.t_sym
    }
    pub fn sampling_period(&self) -> f64 {
        self.t_sym / self.s as f64
    }
    pub fn offset(&self) -> f64 {
        self.eps
    }
    pub fn samples(&self) -> &DVector<f64> {
        &self.samples
    }
    pub fn noise_correlation(&self) -> &DMatrix<f64> {
        &self.cpp
    }
    pub fn whitening_factor(&self) -> &DMatrix<f64> {
        &self.tpp
    }
    /// Whitened pulse matrix `T_pp⁻¹·diag(p)`.
    pub fn p_eff(&self) -> &DMatrix<f64> {
        &self.p_eff
    }
    pub fn p_eff_complex(&self) -> &DMatrix<Complex64> {
        &self.p_eff_c
    }
    /// Sum of squared diagonal entries of the whitened pulse matrix.
    pub fn e_p(&self) -> f64 {
        self.e_p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkParams {
    pub amplitude: Complex64,
    pub doppler_hz: f64,
    pub nu: f64,
    pub delay: f64,
}

impl LinkParams {
    pub fn new(amplitude: Complex64, doppler_hz: f64, pm: &PulseModel) -> Self {
        Self { amplitude, doppler_hz, nu: normalized_doppler(doppler_hz, pm.sampling_period()), delay: 0.0 }
    }

    /// Link with a directly specified normalized Doppler.
    pub fn with_nu(amplitude: Complex64, nu: f64) -> Self {
        Self { amplitude, doppler_hz: f64::NAN, nu: wrap_unit(nu), delay: 0.0 }
    }

    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// `f·T_c` reduced to [0, 1).
pub fn normalized_doppler(f_hz: f64, t_c: f64) -> f64 {
    wrap_unit(f_hz * t_c)
}

pub fn link_amplitude(b: &LinkBudget, d: f64, phase: f64) -> Result<Complex64> {
    Ok(Complex64::from_polar((received_power(b, d)? / P_REF).sqrt(), phase))
}

pub fn vandermonde(nus: &[f64], s: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(s, nus.len(), |r, c| Complex64::from_polar(1.0, 2.0 * PI * nus[c] * r as f64))
}

/// One NOMA group: `C = P_eff·V·diag(A)` and `H = C/√ρ`.
#[derive(Clone, Debug)]
pub struct GroupChannel {
    pub members: Vec<usize>,
    pub nus: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub rho: f64,
    pub v: DMatrix<Complex64>,
    pub c: DMatrix<Complex64>,
}

impl GroupChannel {
    /// Group made of `links[m]` for each `m` in `members`.
    pub fn new(pm: &PulseModel, links: &[LinkParams], members: &[usize], rho: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Domain("a group needs at least one link".into()));
        }
        if let Some(&m) = members.iter().find(|&&m| m >= links.len()) {
            return Err(Error::Index(format!("link {m} outside 0..{}", links.len())));
        }
        check_rho(rho)?;
        let nus: Vec<f64> = members.iter().map(|&m| links[m].nu).collect();
        let amplitudes: Vec<Complex64> = members.iter().map(|&m| links[m].amplitude).collect();
        let v = vandermonde(&nus, pm.oversampling());
        let mut c = pm.p_eff_complex() * &v;
        for (j, a) in amplitudes.iter().enumerate() {
            for x in c.column_mut(j).iter_mut() {
                *x *= a;
            }
        }
        Ok(Self { members: members.to_vec(), nus, amplitudes, rho, v, c })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        self.rho = rho;
        Ok(self)
    }

    pub fn h(&self) -> DMatrix<Complex64> {
        &self.c / Complex64::new(self.rho.sqrt(), 0.0)
    }

    /// Diagonal of `E[u]`: per-member phase advance `e^{j2πSνu}`.
    pub fn phase_ramp(&self, u: i64) -> Vec<Complex64> {
        let s = self.v.nrows() as f64;
        self.nus.iter().map(|&nu| Complex64::from_polar(1.0, 2.0 * PI * s * nu * u as f64)).collect()
    }

    /// Time-varying channel `H·E[u]`.
    pub fn h_at(&self, u: i64) -> DMatrix<Complex64> {
        let mut h = self.h();
        for (j, e) in self.phase_ramp(u).into_iter().enumerate() {
            for x in h.column_mut(j).iter_mut() {
                *x *= e;
            }
        }
        h
    }

    /// Singular values of `C`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.c.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Numerical rank with relative threshold `1e-10·σ_max`.
    pub fn rank(&self) -> usize {
        let sv = self.singular_values();
        let thr = sv.first().copied().unwrap_or(0.0) * 1e-10;
        sv.iter().filter(|&&x| x > thr).count()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("DoF fraction {rho} outside (0, 1]")));
    }
    Ok(())
}

pub fn group_channel(pm: &PulseModel, links: &[LinkParams], rho: f64) -> Result<GroupChannel> {
    let all: Vec<usize> = (0..links.len()).collect();
    GroupChannel::new(pm, links, &all, rho)
}

/// Circular distance between two normalized Doppler values.
pub fn wraparound_distance(nu1: f64, nu2: f64) -> f64 {
    let d = (nu1 - nu2).rem_euclid(1.0);
    d.min(1.0 - d)
}

pub fn min_separation(nus: &[f64]) -> Result<f64> {
    if nus.len() < 2 {
        return Err(Error::Undefined("separation of fewer than two Doppler values".into()));
    }
    let mut best = f64::INFINITY;
    for i in 0..nus.len() {
        for j in i + 1..nus.len() {
            best = best.min(wraparound_distance(nus[i], nus[j]));
        }
    }
    Ok(best)
}

/// Noise power over a bandwidth of `1/T_sym`: `k_B·T_ref·B·10^{F/10}`, divided by `P_REF`.
pub fn noise_variance(f_db: f64, t_sym: f64, t_ref: f64) -> f64 {
    BOLTZMANN * t_ref / t_sym * 10f64.powf(f_db / 10.0) / P_REF
}

/// Noise power spectral density `k_B·T_ref·10^{F/10}` (W/Hz), divided by `P_REF`.
pub fn noise_density(f_db: f64, t_ref: f64) -> f64 {
    BOLTZMANN * t_ref * 10f64.powf(f_db / 10.0) / P_REF
}
