//! Sum-rate capacity, DoF allocation and fairness for NOMA, OMA and hybrid
//! groupings.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{group_channel, GroupChannel, LinkParams, PulseModel};
use crate::error::{Error, Result};
use crate::receiver::{log_det_from_gram, sic_from_gram, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofMode {
    /// Every group gets `1/G`.
    Uniform,
    /// Proportional to the mean squared singular value of each group.
    Optimized,
    /// Proportional to the total channel energy `‖C_k‖_F²` of each group.
    Energy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DofAllocation {
    pub rhos: Vec<f64>,
    pub mode: DofMode,
}

const BUDGET_TOL: f64 = 1e-12;

impl DofAllocation {
    pub fn new(rhos: Vec<f64>, mode: DofMode) -> Result<Self> {
        if rhos.is_empty() || rhos.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Allocation(format!("DoF fractions must be positive, got {rhos:?}")));
        }
        let sum: f64 = rhos.iter().sum();
        if (sum - 1.0).abs() > BUDGET_TOL * rhos.len() as f64 {
            return Err(Error::Allocation(format!("DoF fractions sum to {sum}, not 1")));
        }
        Ok(Self { rhos, mode })
    }

    pub fn uniform(g: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::Allocation("no groups".into()));
        }
        Ok(Self { rhos: vec![1.0 / g as f64; g], mode: DofMode::Uniform })
    }

    pub fn proportional(weights: &[f64], mode: DofMode) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("allocation weights must be positive, got {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| w / total).collect(), mode)
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(())
}

/// `ρ Σ log2(1 + μ²/(σ²ρ))` over the singular values of `C`.
pub fn group_rate(gc: &GroupChannel, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    let rho = gc.rho;
    Ok(gc.c.clone().singular_values().iter().map(|mu| rho * (1.0 + mu * mu / (sigma2 * rho)).log2()).sum())
}

fn check_budget(groups: &[GroupChannel]) -> Result<()> {
    let sum: f64 = groups.iter().map(|g| g.rho).sum();
    if groups.is_empty() || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Allocation(format!("group DoF fractions sum to {sum}, not 1")));
    }
    Ok(())
}

pub fn sum_capacity(groups: &[GroupChannel], sigma2: f64) -> Result<f64> {
    check_budget(groups)?;
    groups.iter().map(|g| group_rate(g, sigma2)).sum()
}

/// All links superposed in one group with the full DoF budget.
pub fn noma_capacity(links: &[LinkParams], pm: &PulseModel, sigma2: f64) -> Result<f64> {
    group_rate(&group_channel(pm, links, 1.0)?, sigma2)
}

/// `Σ ρ_ℓ log2(1 + E_p|A_ℓ|²/(σ²ρ_ℓ))`.
pub fn oma_capacity(amps: &[f64], rhos: &[f64], e_p: f64, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    if amps.len() != rhos.len() {
        return Err(Error::Shape(format!("{} amplitudes for {} DoF fractions", amps.len(), rhos.len())));
    }
    DofAllocation::new(rhos.to_vec(), DofMode::Optimized)?;
    Ok(amps.iter().zip(rhos).map(|(a, r)| r * (1.0 + e_p * a / (sigma2 * r)).log2()).sum())
}

/// `ρ_ℓ = |A_ℓ|²/Σ|A_q|²`.
pub fn oma_opt_dof(amps: &[f64]) -> Result<DofAllocation> {
    if amps.iter().any(|&a| a == 0.0) {
        return Err(Error::Domain("zero link amplitude".into()));
    }
    DofAllocation::proportional(amps, DofMode::Optimized)
}

fn frobenius2(gc: &GroupChannel) -> f64 {
    gc.c.iter().map(|z| z.norm_sqr()).sum()
}

/// `ρ_k ∝ (1/L_k)Σμ²_k`.
pub fn hybrid_opt_dof(groups: &[GroupChannel]) -> Result<DofAllocation> {
    let w: Vec<f64> = groups.iter().map(|g| frobenius2(g) / g.len() as f64).collect();
    DofAllocation::proportional(&w, DofMode::Optimized)
}

/// `ρ_k ∝ Σμ²_k`.
pub fn energy_dof(groups: &[GroupChannel]) -> Result<DofAllocation> {
    let w: Vec<f64> = groups.iter().map(frobenius2).collect();
    DofAllocation::proportional(&w, DofMode::Energy)
}

pub fn allocate(groups: &[GroupChannel], mode: DofMode) -> Result<DofAllocation> {
    match mode {
        DofMode::Uniform => DofAllocation::uniform(groups.len()),
        DofMode::Optimized => hybrid_opt_dof(groups),
        DofMode::Energy => energy_dof(groups),
    }
}

pub fn apply_dof(groups: Vec<GroupChannel>, alloc: &DofAllocation) -> Result<Vec<GroupChannel>> {
    if groups.len() != alloc.rhos.len() {
        return Err(Error::Shape(format!("{} groups for {} DoF fractions", groups.len(), alloc.rhos.len())));
    }
    groups.into_iter().zip(&alloc.rhos).map(|(g, &r)| g.with_rho(r)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SatelliteRate {
    pub link: usize,
    pub group: usize,
    pub stage: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    /// Sorted by link index.
    pub satellites: Vec<SatelliteRate>,
    pub group_rates: Vec<f64>,
    pub rhos: Vec<f64>,
    pub c_sum: f64,
    pub fairness: f64,
    /// Groups whose channel matrix is rank deficient (repeated Doppler).
    pub rank_deficient: Vec<usize>,
}

impl RateReport {
    pub fn rates(&self) -> Vec<f64> {
        self.satellites.iter().map(|s| s.rate).collect()
    }
}

/// SIC rates of one group from its normalized Gram matrix `CᴴC/(σ²ρ)`.
pub(crate) fn group_sic_rates(w: &CMat, rho: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let tr = sic_from_gram(w, None)?;
    Ok((tr.order, tr.sinrs.iter().map(|s| rho * (1.0 + s).log2()).collect()))
}

/// Per-satellite rates under max-SINR SIC inside each group.
pub fn individual_rates(groups: &[GroupChannel], sigma2: f64) -> Result<RateReport> {
    check_sigma2(sigma2)?;
    check_budget(groups)?;
    let mut satellites = Vec::new();
    let mut group_rates = Vec::with_capacity(groups.len());
    let mut rank_deficient = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        let w = g.c.adjoint() * &g.c / Complex64::new(sigma2 * g.rho, 0.0);
        let (order, rates) = group_sic_rates(&w, g.rho)?;
        for (stage, (&pos, &rate)) in order.iter().zip(&rates).enumerate() {
            satellites.push(SatelliteRate { link: g.members[pos], group: k, stage, rate });
        }
        group_rates.push(rates.iter().sum());
        if g.rank() < g.len().min(g.v.nrows()) {
            rank_deficient.push(k);
        }
    }
    satellites.sort_by_key(|s| s.link);
    let rates: Vec<f64> = satellites.iter().map(|s| s.rate).collect();
    Ok(RateReport {
        c_sum: group_rates.iter().sum(),
        fairness: fairness(&rates)?,
        satellites,
        group_rates,
        rhos: groups.iter().map(|g| g.rho).collect(),
        rank_deficient,
    })
}

/// Jain's index `(Σr)²/(L·Σr²)`.
pub fn fairness(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::Undefined("fairness of an empty rate set".into()));
    }
    if rates.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::Domain(format!("rates must be finite and nonnegative, got {rates:?}")));
    }
    let s: f64 = rates.iter().sum();
    let q: f64 = rates.iter().map(|r| r * r).sum();
    if q == 0.0 {
        return Err(Error::Undefined("fairness of all-zero rates".into()));
    }
    Ok(s * s / (rates.len() as f64 * q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoSatSinr {
    /// Satellite 1 decoded first, with satellite 2 interfering.
    pub sinr1: f64,
    /// Satellite 2 decoded last, interference free.
    pub sinr2: f64,
    pub sinr1_min: f64,
}

/// Closed-form SINRs of a two-satellite group for a diagonal pulse matrix
/// whose diagonal is that of the whitened pulse matrix.
pub fn two_sat_oracle(a1: Complex64, a2: Complex64, nu1: f64, nu2: f64, pm: &PulseModel, sigma2: f64) -> Result<TwoSatSinr> {
    check_sigma2(sigma2)?;
    let e_p = pm.e_p();
    let (g1, g2) = (a1.norm_sqr(), a2.norm_sqr());
    let cross: Complex64 = pm
        .p_eff()
        .diagonal()
        .iter()
        .enumerate()
        .map(|(s, p)| Complex64::from_polar(p * p, -2.0 * PI * s as f64 * (nu1 - nu2)))
        .sum();
    let sinr1 = (sigma2 * g1 * e_p + g1 * g2 * (e_p * e_p - cross.norm_sqr())) / (sigma2 * (g2 * e_p + sigma2));
    Ok(TwoSatSinr { sinr1, sinr2: g2 * e_p / sigma2, sinr1_min: g1 / (g2 + sigma2 / e_p) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub c_oma_opt: f64,
    pub c_hybrid: f64,
    pub c_noma: f64,
    /// Arithmetic-geometric mean upper bound on the hybrid rate.
    pub amgm_upper: f64,
    /// `log2(1 + Σ_k mean μ²_k / σ²)`, the best value of the per-group
    /// mean-eigenvalue surrogate over all DoF splits.
    pub jensen_upper: f64,
    /// Equal-size surrogate `L_min Σ ρ_k log2(1 + Σμ²/(σ²L_kρ_k))`; not a strict bound.
    pub lmin_surrogate: f64,
    pub slack_oma: f64,
    pub slack_noma: f64,
    pub slack_amgm: f64,
}

fn concat_columns(groups: &[GroupChannel]) -> CMat {
    let s = groups[0].c.nrows();
    let total: usize = groups.iter().map(|g| g.len()).sum();
    let mut all = CMat::zeros(s, total);
    let mut j = 0;
    for g in groups {
        all.columns_mut(j, g.len()).copy_from(&g.c);
        j += g.len();
    }
    all
}

/// Evaluates the capacity ordering `OMA(opt) ≤ hybrid ≤ NOMA` and the
/// per-group mean-eigenvalue bounds for the given groups and their DoF.
pub fn jensen_bounds_check(groups: &[GroupChannel], sigma2: f64) -> Result<BoundsReport> {
    check_budget(groups)?;
    check_sigma2(sigma2)?;
    let all = concat_columns(groups);
    let c_noma = log_det_from_gram(&(all.adjoint() * &all / Complex64::new(sigma2, 0.0)))?;

    let energies: Vec<f64> = (0..all.ncols()).map(|j| all.column(j).norm_squared()).collect();
    let amps: Vec<f64> = groups.iter().flat_map(|g| g.amplitudes.iter().map(|a| a.norm_sqr())).collect();
    let oma = oma_opt_dof(&amps)?;
    let c_oma_opt: f64 = energies.iter().zip(&oma.rhos).map(|(e, r)| r * (1.0 + e / (sigma2 * r)).log2()).sum();

    let c_hybrid = sum_capacity(groups, sigma2)?;
    let mut amgm_upper = 0.0;
    let mut lmin_sum = 0.0;
    let mut mean_total = 0.0;
    let l_min = groups.iter().map(|g| g.len()).min().unwrap_or(0) as f64;
    for g in groups {
        let rho = g.rho;
        let sv = g.singular_values();
        let thr = sv.first().copied().unwrap_or(0.0) * 1e-10;
        let nz: Vec<f64> = sv.into_iter().filter(|&x| x > thr).collect();
        let r = nz.len() as f64;
        let e: f64 = nz.iter().map(|m| m * m).sum();
        if r > 0.0 {
            amgm_upper += r * rho * (1.0 + e / (r * sigma2 * rho)).log2();
        }
        lmin_sum += rho * (1.0 + e / (sigma2 * g.len() as f64 * rho)).log2();
        mean_total += e / g.len() as f64;
    }
    Ok(BoundsReport {
        c_oma_opt,
        c_hybrid,
        c_noma,
        amgm_upper,
        jensen_upper: (1.0 + mean_total / sigma2).log2(),
        lmin_surrogate: l_min * lmin_sum,
        slack_oma: c_hybrid - c_oma_opt,
        slack_noma: c_noma - c_hybrid,
        slack_amgm: amgm_upper - c_hybrid,
    })
}

/// Gram matrix `CᴴC` of the whole link set, used for fast group evaluation.
pub fn link_gram(pm: &PulseModel, links: &[LinkParams]) -> Result<CMat> {
    let g = group_channel(pm, links, 1.0)?;
    Ok(g.c.adjoint() * &g.c)
}

pub(crate) fn sub_matrix(m: &CMat, idx: &[usize]) -> CMat {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}
