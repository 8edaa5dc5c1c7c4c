//! End-to-end studies on a scenario: feasibility scan, link set at an epoch
//! and the seven-scheme capacity comparison.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capacity::{oma_opt_dof, DofMode, RateReport};
use crate::channel::{link_amplitude, LinkParams, PulseModel};
use crate::error::{Error, Result};
use crate::feasibility::{feasibility_timeline, feasible_set, received_power, window_stats, FeasibilityWindow, LinkBudget, WindowStats};
use crate::orbit::{distance, doppler_shift, SatIndex, WalkerConfig};
use crate::partition::{anticluster, evaluate_partition, max_fairness_search, prepartition, with_dof, Partition};
use crate::scenario::{Epoch, EpochAnchor, Scenario};

pub struct Study {
    pub scenario: Scenario,
    pub walker: WalkerConfig,
    pub budget: LinkBudget,
    pub sink: SatIndex,
    pub pm: PulseModel,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedEpoch {
    pub t: f64,
    /// The window the epoch was taken from, for auto epochs.
    pub window: Option<FeasibilityWindow>,
}

/// Feasible links at one epoch, ordered by `(p, n)`; position `i` is 1D index `i + 1`.
#[derive(Clone, Debug)]
pub struct LinkSet {
    pub t: f64,
    pub sats: Vec<SatIndex>,
    pub distances_km: Vec<f64>,
    pub dopplers_hz: Vec<f64>,
    pub links: Vec<LinkParams>,
    pub sink_plane: Vec<bool>,
}

impl LinkSet {
    pub fn len(&self) -> usize {
        self.sats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sats.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DopplerRow {
    pub index: usize,
    pub p: usize,
    pub n: usize,
    pub doppler_hz: f64,
    pub nu: f64,
    pub distance_km: f64,
    pub rx_power_w: f64,
    pub sink_plane: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    PureNoma,
    PureOmaOpt,
    PureOmaUni,
    Alg1Opt,
    Alg1Uni,
    Alg2Opt,
    Alg2Uni,
}

impl Scheme {
    pub const ALL: [Scheme; 7] =
        [Scheme::PureNoma, Scheme::PureOmaOpt, Scheme::PureOmaUni, Scheme::Alg1Opt, Scheme::Alg1Uni, Scheme::Alg2Opt, Scheme::Alg2Uni];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::PureNoma => "pure-noma",
            Scheme::PureOmaOpt => "pure-oma-opt",
            Scheme::PureOmaUni => "pure-oma-uni",
            Scheme::Alg1Opt => "alg1-opt",
            Scheme::Alg1Uni => "alg1-uni",
            Scheme::Alg2Opt => "alg2-opt",
            Scheme::Alg2Uni => "alg2-uni",
        }
    }

    fn dof_mode(&self) -> DofMode {
        match self {
            Scheme::PureNoma | Scheme::PureOmaUni | Scheme::Alg1Uni | Scheme::Alg2Uni => DofMode::Uniform,
            Scheme::PureOmaOpt | Scheme::Alg1Opt | Scheme::Alg2Opt => DofMode::Optimized,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|x| x.name() == s.trim()).ok_or_else(|| {
            let names: Vec<&str> = Scheme::ALL.iter().map(Scheme::name).collect();
            Error::Config(format!("unknown scheme {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub partition: Partition,
    pub report: RateReport,
    /// Candidates scored and search-space size, for Algorithm 2.
    pub search: Option<(u128, u128)>,
}

impl Study {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            walker: scenario.walker()?,
            budget: scenario.budget()?,
            sink: scenario.sink_index(),
            pm: scenario.pulse_model()?,
            sigma2: scenario.sigma2(),
            scenario,
        })
    }

    pub fn timeline(&self) -> Result<Vec<FeasibilityWindow>> {
        feasibility_timeline(&self.walker, &self.budget, self.sink, self.scenario.observation()?, self.scenario.dt)
    }

    pub fn stats(timeline: &[FeasibilityWindow]) -> Result<WindowStats> {
        window_stats(timeline)
    }

    pub fn resolve_epoch(&self) -> Result<ResolvedEpoch> {
        self.resolve(self.scenario.epoch)
    }

    pub fn resolve(&self, epoch: Epoch) -> Result<ResolvedEpoch> {
        match epoch {
            Epoch::At(t) => Ok(ResolvedEpoch { t, window: None }),
            Epoch::AutoL(l) => {
                let tl = self.timeline()?;
                let w = tl
                    .into_iter()
                    .find(|w| w.len() == l)
                    .ok_or_else(|| Error::Infeasible(format!("no window with L={l} in the observation horizon")))?;
                Ok(ResolvedEpoch { t: anchor(&w, self.scenario.epoch_anchor), window: Some(w) })
            }
        }
    }

    /// Feasible links at `t` with seeded amplitude phases.
    pub fn link_set(&self, t: f64) -> Result<LinkSet> {
        let sats = feasible_set(&self.walker, &self.budget, self.sink, t)?;
        if sats.is_empty() {
            return Err(Error::Infeasible(format!("no feasible link at t={t}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
        let mut out = LinkSet { t, sats: sats.clone(), distances_km: vec![], dopplers_hz: vec![], links: vec![], sink_plane: vec![] };
        for s in sats {
            let d = distance(&self.walker, s, self.sink, t)?;
            let f = doppler_shift(&self.walker, s, self.sink, t, self.budget.f_c)?;
            let a = link_amplitude(&self.budget, d, rng.random_range(0.0..2.0 * PI))?;
            out.distances_km.push(d);
            out.dopplers_hz.push(f);
            out.links.push(LinkParams::new(a, f, &self.pm));
            out.sink_plane.push(s.p == self.sink.p);
        }
        Ok(out)
    }

    pub fn doppler_table(&self, ls: &LinkSet) -> Result<Vec<DopplerRow>> {
        (0..ls.len())
            .map(|i| {
                Ok(DopplerRow {
                    index: i + 1,
                    p: ls.sats[i].p,
                    n: ls.sats[i].n,
                    doppler_hz: ls.dopplers_hz[i],
                    nu: ls.links[i].nu,
                    distance_km: ls.distances_km[i],
                    rx_power_w: received_power(&self.budget, ls.distances_km[i])?,
                    sink_plane: ls.sink_plane[i],
                })
            })
            .collect()
    }

    /// Number of anticlusters for Algorithm 1.
    pub fn alg1_groups(&self, ls: &LinkSet) -> Result<usize> {
        match self.scenario.partition.groups {
            Some(g) => Ok(g),
            None => match ls.sink_plane.iter().filter(|&&b| b).count() {
                0 => Err(Error::Domain("no feasible link shares the sink's plane; set partition.groups".into())),
                g => Ok(g),
            },
        }
    }

    pub fn alg1_partition(&self, ls: &LinkSet) -> Result<Partition> {
        Ok(anticluster(&ls.dopplers_hz, self.alg1_groups(ls)?, &self.scenario.anticluster_config())?.partition.canonical())
    }

    pub fn run_scheme(&self, ls: &LinkSet, scheme: Scheme, alg1: Option<&Partition>) -> Result<SchemeResult> {
        let l = ls.len();
        let mode = scheme.dof_mode();
        let mut search = None;
        let partition = match scheme {
            Scheme::PureNoma => Partition::single_group(l),
            Scheme::PureOmaUni => Partition::singletons(l),
            Scheme::PureOmaOpt => {
                let mut p = Partition::singletons(l);
                p.dof = Some(oma_opt_dof(&ls.links.iter().map(LinkParams::power).collect::<Vec<_>>())?);
                p
            }
            Scheme::Alg1Opt | Scheme::Alg1Uni => match alg1 {
                Some(p) => p.clone(),
                None => self.alg1_partition(ls)?,
            },
            Scheme::Alg2Opt | Scheme::Alg2Uni => {
                let pre = prepartition(&ls.sink_plane)?;
                let out = max_fairness_search(&ls.links, &self.pm, self.sigma2, &pre, &self.scenario.search_config(mode))?;
                search = Some((out.evaluated, out.space));
                out.partition
            }
        };
        let partition = match partition.dof {
            Some(_) => partition,
            None => with_dof(&partition, &ls.links, &self.pm, mode)?,
        };
        let report = evaluate_partition(&partition, &ls.links, &self.pm, self.sigma2, mode)?;
        Ok(SchemeResult { scheme, partition, report, search })
    }

    pub fn compare(&self, ls: &LinkSet, schemes: &[Scheme]) -> Result<Vec<SchemeResult>> {
        let alg1 = if schemes.iter().any(|s| matches!(s, Scheme::Alg1Opt | Scheme::Alg1Uni)) { Some(self.alg1_partition(ls)?) } else { None };
        schemes.iter().map(|&s| self.run_scheme(ls, s, alg1.as_ref())).collect()
    }

    pub fn with_oversampling(&self, s: usize) -> Result<Self> {
        let mut sc = self.scenario.clone();
        sc.oversampling = s;
        Self::new(sc)
    }

    pub fn with_noise_figure(&self, f_db: f64) -> Result<Self> {
        let mut sc = self.scenario.clone();
        sc.noise_figure_db = f_db;
        Self::new(sc)
    }
}

fn anchor(w: &FeasibilityWindow, a: EpochAnchor) -> f64 {
    match a {
        EpochAnchor::Midpoint => w.midpoint(),
        EpochAnchor::Grid { step_s } => {
            let t = (w.t_start / step_s).ceil() * step_s;
            if t < w.t_end {
                t
            } else {
                w.midpoint()
            }
        }
    }
}
