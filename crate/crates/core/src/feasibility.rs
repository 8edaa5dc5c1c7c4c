//! ISL feasibility: radio horizon, Friis budget and body-axis beam cones.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{EcefState, SatIndex, Vec3, WalkerConfig, SPEED_OF_LIGHT_KM_S};

/// Which end of a link must see the other inside one of its four beams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamPolicy {
    /// Only the sink's roll/pitch cones are checked.
    SinkOnly,
    /// Both the sink and the transmitter must point along a body axis.
    #[default]
    BothEnds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkBudget {
    pub f_c: f64,
    pub p_tx: f64,
    pub g_tx: f64,
    pub g_rx: f64,
    pub beta: f64,
    pub p_sens: f64,
    pub policy: BeamPolicy,
}

impl LinkBudget {
    pub fn new(f_c: f64, p_tx: f64, g_tx: f64, g_rx: f64, beta: f64, p_sens: f64) -> Result<Self> {
        for (name, v) in [("carrier", f_c), ("tx power", p_tx), ("tx gain", g_tx), ("rx gain", g_rx), ("sensitivity", p_sens)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(beta > 0.0 && beta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("half-beamwidth {beta} rad outside (0, pi/2)")));
        }
        Ok(Self { f_c, p_tx, g_tx, g_rx, beta, p_sens, policy: BeamPolicy::default() })
    }

    pub fn with_policy(mut self, policy: BeamPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn wavelength_km(&self) -> f64 {
        SPEED_OF_LIGHT_KM_S / self.f_c
    }
}

/// Half-beamwidth of an ideal conical beam with linear gain `g`: G = 2/(1 − cos β).
pub fn conical_beamwidth(gain: f64) -> Result<f64> {
    if !(gain > 2.0) {
        return Err(Error::Domain(format!("conical gain must exceed 2, got {gain}")));
    }
    Ok((1.0 - 2.0 / gain).acos())
}

pub fn radio_horizon(h: f64, r: f64) -> Result<f64> {
    if !(h > 0.0) || !(r > 0.0) {
        return Err(Error::Domain(format!("radio horizon needs h > 0 and R > 0, got h={h}, R={r}")));
    }
    Ok(2.0 * (h * (h + 2.0 * r)).sqrt())
}

/// Friis received power in W at `d` km.
pub fn received_power(b: &LinkBudget, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let x = b.wavelength_km() / (4.0 * std::f64::consts::PI * d);
    Ok(b.p_tx * b.g_tx * b.g_rx * x * x)
}

fn axes_of(st: &EcefState) -> (Vec3, Vec3) {
    (st.v.normalize(), st.r.cross(&st.v).normalize())
}

/// Unit roll (velocity) and pitch (orbit normal) axes of a satellite.
pub fn body_axes(cfg: &WalkerConfig, sink: SatIndex, t: f64) -> Result<(Vec3, Vec3)> {
    Ok(axes_of(&cfg.state(sink, t)?))
}

// Allowance for rounding when a direction sits exactly on a cone edge.
const CONE_EPS: f64 = 1e-12;

/// True when `u_link` lies within `beta` of ±roll or ±pitch (edges included).
pub fn beam_check(u_link: &Vec3, axes: &(Vec3, Vec3), beta: f64) -> bool {
    let cb = beta.cos() - CONE_EPS;
    u_link.dot(&axes.0).abs() >= cb || u_link.dot(&axes.1).abs() >= cb
}

struct SinkView {
    state: EcefState,
    axes: (Vec3, Vec3),
    horizon: f64,
}

impl SinkView {
    fn new(cfg: &WalkerConfig, sink: SatIndex, t: f64) -> Result<Self> {
        let state = cfg.state(sink, t)?;
        Ok(Self { axes: axes_of(&state), state, horizon: radio_horizon(cfg.altitude_km(), cfg.earth_radius_km())? })
    }

    fn admits(&self, b: &LinkBudget, sat: &EcefState) -> bool {
        let dr = self.state.r - sat.r;
        let d = dr.norm();
        if d > self.horizon || d == 0.0 {
            return false;
        }
        match received_power(b, d) {
            Ok(p) if p >= b.p_sens => {}
            _ => return false,
        }
        let u = dr / d;
        if !beam_check(&u, &self.axes, b.beta) {
            return false;
        }
        match b.policy {
            BeamPolicy::SinkOnly => true,
            BeamPolicy::BothEnds => beam_check(&u, &axes_of(sat), b.beta),
        }
    }
}

pub fn is_feasible(cfg: &WalkerConfig, b: &LinkBudget, sat: SatIndex, sink: SatIndex, t: f64) -> Result<bool> {
    cfg.check(sat)?;
    if sat == sink {
        return Err(Error::DegeneratePair(sat));
    }
    let view = SinkView::new(cfg, sink, t)?;
    Ok(view.admits(b, &cfg.state(sat, t)?))
}

fn members_among(cfg: &WalkerConfig, b: &LinkBudget, view: &SinkView, sink: SatIndex, pool: &[SatIndex], t: f64) -> Vec<SatIndex> {
    pool.iter()
        .copied()
        .filter(|&s| s != sink && view.admits(b, &cfg.state_unchecked(s, t)))
        .collect()
}

/// Feasible transmitters toward `sink` at `t`, sorted by (p, n).
pub fn feasible_set(cfg: &WalkerConfig, b: &LinkBudget, sink: SatIndex, t: f64) -> Result<Vec<SatIndex>> {
    let view = SinkView::new(cfg, sink, t)?;
    let all: Vec<SatIndex> = cfg.satellites().collect();
    Ok(members_among(cfg, b, &view, sink, &all, t))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub members: Vec<SatIndex>,
}

impl FeasibilityWindow {
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_EDGE_TOL: f64 = 1e-3;

// Samples per parallel chunk; candidates are pruned once per chunk.
const CHUNK: usize = 400;

pub fn feasibility_timeline(
    cfg: &WalkerConfig,
    b: &LinkBudget,
    sink: SatIndex,
    horizon: f64,
    dt: f64,
) -> Result<Vec<FeasibilityWindow>> {
    feasibility_timeline_refined(cfg, b, sink, horizon, dt, DEFAULT_EDGE_TOL)
}

/// Scans `[0, horizon)` every `dt` seconds and bisects each membership change
/// down to `edge_tol`.
pub fn feasibility_timeline_refined(
    cfg: &WalkerConfig,
    b: &LinkBudget,
    sink: SatIndex,
    horizon: f64,
    dt: f64,
    edge_tol: f64,
) -> Result<Vec<FeasibilityWindow>> {
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(Error::Domain(format!("timeline needs dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}")));
    }
    if !(edge_tol > 0.0) {
        return Err(Error::Domain(format!("edge tolerance must be positive, got {edge_tol}")));
    }
    cfg.check(sink)?;
    let samples = (horizon / dt).ceil() as usize;
    let times: Vec<f64> = (0..samples).map(|i| i as f64 * dt).collect();
    let all: Vec<SatIndex> = cfg.satellites().collect();
    let horizon_km = radio_horizon(cfg.altitude_km(), cfg.earth_radius_km())?;
    let max_rel_speed = 2.0 * cfg.orbit_radius_km() * cfg.omega();

    let sets: Vec<Vec<SatIndex>> = times
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Vec<Vec<SatIndex>>> {
            let t0 = chunk[0];
            let span = chunk[chunk.len() - 1] - t0;
            let sink0 = cfg.state(sink, t0)?;
            let reach = horizon_km + max_rel_speed * span + 1.0;
            let pool: Vec<SatIndex> = all
                .iter()
                .copied()
                .filter(|&s| (cfg.state_unchecked(s, t0).r - sink0.r).norm() <= reach)
                .collect();
            chunk
                .iter()
                .map(|&t| Ok(members_among(cfg, b, &SinkView::new(cfg, sink, t)?, sink, &pool, t)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let eval = |t: f64| feasible_set(cfg, b, sink, t);
    let mut windows = Vec::new();
    let mut start = 0.0;
    let mut current = sets[0].clone();
    for i in 1..samples {
        if sets[i] == current {
            continue;
        }
        let mut edges = Vec::new();
        split_edges(&eval, times[i - 1], &current, times[i], &sets[i], edge_tol, &mut edges)?;
        for (edge, next) in edges {
            windows.push(FeasibilityWindow { t_start: start, t_end: edge, members: std::mem::replace(&mut current, next) });
            start = edge;
        }
    }
    windows.push(FeasibilityWindow { t_start: start, t_end: horizon, members: current });
    Ok(windows)
}

// Locates every membership change between `lo` (set `a`) and `hi` (set `b`),
// appending (edge time, set after the edge).
fn split_edges<F>(
    eval: &F,
    mut lo: f64,
    a: &[SatIndex],
    hi: f64,
    b: &[SatIndex],
    tol: f64,
    out: &mut Vec<(f64, Vec<SatIndex>)>,
) -> Result<()>
where
    F: Fn(f64) -> Result<Vec<SatIndex>>,
{
    let mut right = hi;
    let mut right_set = b.to_vec();
    while right - lo > tol {
        let mid = 0.5 * (lo + right);
        let s = eval(mid)?;
        if s == a {
            lo = mid;
        } else {
            right = mid;
            right_set = s;
        }
    }
    let edge = 0.5 * (lo + right);
    if right_set != b && right < hi {
        out.push((edge, right_set.clone()));
        return split_edges(eval, right, &right_set, hi, b, tol, out);
    }
    out.push((edge, b.to_vec()));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DurationStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

/// Window-duration statistics keyed by feasible-set size L.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowStats {
    pub per_l: BTreeMap<usize, DurationStats>,
}

pub fn window_stats(timeline: &[FeasibilityWindow]) -> Result<WindowStats> {
    if timeline.is_empty() {
        return Err(Error::Undefined("window statistics of an empty timeline".into()));
    }
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for w in timeline {
        groups.entry(w.len()).or_default().push(w.duration());
    }
    let per_l = groups
        .into_iter()
        .map(|(l, ds)| {
            let n = ds.len() as f64;
            let mean = ds.iter().sum::<f64>() / n;
            let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
            let stats = DurationStats {
                count: ds.len(),
                min: ds.iter().cloned().fold(f64::INFINITY, f64::min),
                max: ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean,
                std: var.sqrt(),
            };
            (l, stats)
        })
        .collect();
    Ok(WindowStats { per_l })
}
