//! JSON scenario documents. Angles are in degrees, gains in dBi and powers
//! carry an explicit `W` or `dBm` suffix.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::channel::{build_pulse, noise_density, noise_variance, PulseModel, PulseShape};
use crate::error::{Error, Result};
use crate::feasibility::{conical_beamwidth, BeamPolicy, LinkBudget, DEFAULT_DT};
use crate::orbit::{SatIndex, WalkerConfig};
use crate::partition::{AnticlusterConfig, InitialAssignment, Passes, SearchConfig, SearchMode, DEFAULT_EXHAUSTIVE_LIMIT, DEFAULT_SAMPLE_COUNT};

/// A power written as `"10 W"` or `"-120 dBm"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Power {
    value: f64,
    dbm: bool,
}

impl Power {
    pub fn from_watts(w: f64) -> Self {
        Self { value: w, dbm: false }
    }

    pub fn from_dbm(dbm: f64) -> Self {
        Self { value: dbm, dbm: true }
    }

    pub fn watts(&self) -> f64 {
        if self.dbm {
            1e-3 * 10f64.powf(self.value / 10.0)
        } else {
            self.value
        }
    }
}

impl FromStr for Power {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (num, dbm) = if let Some(n) = s.strip_suffix("dBm") {
            (n, true)
        } else if let Some(n) = s.strip_suffix('W') {
            (n, false)
        } else {
            return Err(Error::Config(format!("power {s:?} needs a W or dBm suffix")));
        };
        let v: f64 = num.trim().parse().map_err(|_| Error::Config(format!("bad power value {s:?}")))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("bad power value {s:?}")));
        }
        Ok(Self { value: v, dbm })
    }
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, if self.dbm { "dBm" } else { "W" })
    }
}

impl Serialize for Power {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Power {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Either a fixed time or the start of the first window with `L` links.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epoch {
    At(f64),
    AutoL(usize),
}

impl Serialize for Epoch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epoch::At(t) => s.serialize_f64(*t),
            Epoch::AutoL(l) => s.serialize_str(&format!("auto-L={l}")),
        }
    }
}

impl FromStr for Epoch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(l) = s.trim().strip_prefix("auto-L=") {
            return l.parse().map(Epoch::AutoL).map_err(|_| Error::Config(format!("bad epoch {s:?}")));
        }
        s.trim().parse().map(Epoch::At).map_err(|_| Error::Config(format!("epoch {s:?} is neither seconds nor auto-L=<n>")))
    }
}

impl<'de> Deserialize<'de> for Epoch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Epoch;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("seconds or \"auto-L=<n>\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Epoch, E> {
                Ok(Epoch::At(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Epoch, E> {
                Ok(Epoch::At(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Epoch, E> {
                Ok(Epoch::At(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Epoch, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Where inside an auto-detected window the epoch is placed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochAnchor {
    Midpoint,
    /// First multiple of `step_s` inside the window, else the midpoint.
    Grid { step_s: f64 },
}

impl Default for EpochAnchor {
    fn default() -> Self {
        EpochAnchor::Grid { step_s: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseConvention {
    /// `σ² = k_B·T·F` per unit bandwidth.
    #[default]
    Density,
    /// `σ² = k_B·T·F/T_sym`.
    Bandlimited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerSpec {
    pub total: usize,
    pub planes: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub phasing: usize,
    pub period_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub carrier_hz: f64,
    pub tx_power: Power,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub sensitivity: Power,
    /// Derived from the gain through the conical-beam model when absent.
    #[serde(default)]
    pub half_beamwidth_deg: Option<f64>,
    #[serde(default)]
    pub beam_policy: BeamPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub shape: ShapeName,
    /// Raised-cosine roll-off.
    #[serde(default)]
    pub roll_off: Option<f64>,
    /// Sampling offset as a fraction of `T_c`.
    #[serde(default = "half")]
    pub offset_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeName {
    Triangular,
    RaisedCosine,
}

impl PulseSpec {
    pub fn shape(&self) -> Result<PulseShape> {
        match (self.shape, self.roll_off) {
            (ShapeName::Triangular, None) => Ok(PulseShape::Triangular),
            (ShapeName::RaisedCosine, Some(roll_off)) => Ok(PulseShape::RaisedCosine { roll_off }),
            (ShapeName::Triangular, Some(_)) => Err(Error::Config("roll_off applies only to the raised-cosine pulse".into())),
            (ShapeName::RaisedCosine, None) => Err(Error::Config("raised-cosine pulse needs roll_off".into())),
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKind {
    Exhaustive,
    RandomSample,
    SwapHeuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Number of anticlusters; defaults to the number of sink-plane links.
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default = "converge")]
    pub passes: Passes,
    #[serde(default = "one_hz")]
    pub collision_tol_hz: Option<f64>,
    #[serde(default = "random_sample")]
    pub search: SearchKind,
    #[serde(default = "sample_count")]
    pub sample_count: u64,
    #[serde(default = "yes")]
    pub refine: bool,
    /// Largest group size; `None` means `S`.
    #[serde(default)]
    pub group_size_cap: Option<usize>,
    #[serde(default)]
    pub uncapped: bool,
    #[serde(default = "exhaustive_limit")]
    pub exhaustive_limit: u128,
}

fn converge() -> Passes {
    Passes::Converge
}
fn one_hz() -> Option<f64> {
    Some(1.0)
}
fn random_sample() -> SearchKind {
    SearchKind::RandomSample
}
fn sample_count() -> u64 {
    DEFAULT_SAMPLE_COUNT
}
fn yes() -> bool {
    true
}
fn exhaustive_limit() -> u128 {
    DEFAULT_EXHAUSTIVE_LIMIT
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            groups: None,
            passes: converge(),
            collision_tol_hz: one_hz(),
            search: random_sample(),
            sample_count: sample_count(),
            refine: true,
            group_size_cap: None,
            uncapped: false,
            exhaustive_limit: exhaustive_limit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub walker: WalkerSpec,
    pub budget: BudgetSpec,
    /// `[plane, slot]`, 1-based.
    pub sink: [usize; 2],
    pub symbol_rate: f64,
    pub oversampling: usize,
    pub noise_figure_db: f64,
    #[serde(default)]
    pub noise_convention: NoiseConvention,
    #[serde(default = "room_temperature")]
    pub noise_temperature_k: f64,
    pub pulse: PulseSpec,
    /// Scan length in seconds; one revolution when absent.
    #[serde(default)]
    pub observation_s: Option<f64>,
    pub epoch: Epoch,
    #[serde(default)]
    pub epoch_anchor: EpochAnchor,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub partition: PartitionSpec,
}

fn room_temperature() -> f64 {
    290.0
}
fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Runs every constructor check without keeping the results.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.walker()?;
        self.budget()?;
        cfg.check(self.sink_index())?;
        self.pulse_model()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.noise_figure_db.is_finite() || !(self.noise_temperature_k > 0.0) {
            return Err(Error::Config("noise figure and temperature must be finite and positive".into()));
        }
        if let Some(t) = self.observation_s {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Config(format!("observation must be positive, got {t}")));
            }
        }
        match self.epoch {
            Epoch::At(t) if !t.is_finite() => return Err(Error::Config("epoch must be finite".into())),
            Epoch::AutoL(0) => return Err(Error::Config("auto epoch needs L ≥ 1".into())),
            _ => {}
        }
        if let EpochAnchor::Grid { step_s } = self.epoch_anchor {
            if !(step_s > 0.0) {
                return Err(Error::Config(format!("epoch grid step must be positive, got {step_s}")));
            }
        }
        let p = &self.partition;
        if p.groups == Some(0) || p.group_size_cap == Some(0) {
            return Err(Error::Config("partition sizes must be positive".into()));
        }
        if p.search == SearchKind::RandomSample && p.sample_count == 0 {
            return Err(Error::Config("sample_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn walker(&self) -> Result<WalkerConfig> {
        let w = &self.walker;
        WalkerConfig::new(w.total, w.planes, w.altitude_km, w.inclination_deg.to_radians(), w.phasing, w.period_s)
    }

    pub fn budget(&self) -> Result<LinkBudget> {
        let b = &self.budget;
        let g_tx = 10f64.powf(b.tx_gain_dbi / 10.0);
        let g_rx = 10f64.powf(b.rx_gain_dbi / 10.0);
        let beta = match b.half_beamwidth_deg {
            Some(d) => d.to_radians(),
            None => conical_beamwidth(g_rx)?,
        };
        Ok(LinkBudget::new(b.carrier_hz, b.tx_power.watts(), g_tx, g_rx, beta, b.sensitivity.watts())?.with_policy(b.beam_policy))
    }

    pub fn sink_index(&self) -> SatIndex {
        SatIndex::new(self.sink[0], self.sink[1])
    }

    pub fn symbol_period(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    pub fn pulse_model(&self) -> Result<PulseModel> {
        if !(self.symbol_rate > 0.0) || !self.symbol_rate.is_finite() {
            return Err(Error::Config(format!("symbol rate must be positive, got {}", self.symbol_rate)));
        }
        if self.oversampling == 0 {
            return Err(Error::Config("oversampling must be at least 1".into()));
        }
        let t = self.symbol_period();
        let eps = self.pulse.offset_fraction * t / self.oversampling as f64;
        build_pulse(self.oversampling, t, self.pulse.shape()?, eps)
    }

    pub fn sigma2(&self) -> f64 {
        match self.noise_convention {
            NoiseConvention::Density => noise_density(self.noise_figure_db, self.noise_temperature_k),
            NoiseConvention::Bandlimited => noise_variance(self.noise_figure_db, self.symbol_period(), self.noise_temperature_k),
        }
    }

    pub fn observation(&self) -> Result<f64> {
        Ok(self.observation_s.unwrap_or(self.walker()?.period_s()))
    }

    pub fn anticluster_config(&self) -> AnticlusterConfig {
        AnticlusterConfig { passes: self.partition.passes, initial: InitialAssignment::RoundRobin, collision_tol: self.partition.collision_tol_hz }
    }

    pub fn search_config(&self, dof_mode: crate::capacity::DofMode) -> SearchConfig {
        let p = &self.partition;
        let mode = match p.search {
            SearchKind::Exhaustive => SearchMode::Exhaustive,
            SearchKind::RandomSample => SearchMode::RandomSample { count: p.sample_count, seed: self.seed },
            SearchKind::SwapHeuristic => SearchMode::SwapHeuristic,
        };
        let cap = if p.uncapped { None } else { Some(p.group_size_cap.unwrap_or(self.oversampling)) };
        SearchConfig { mode, dof_mode, group_size_cap: cap, refine: p.refine, exhaustive_limit: p.exhaustive_limit }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REFERENCE: &str = r#"{
        "walker": {"total": 1584, "planes": 22, "altitude_km": 550, "inclination_deg": 53, "phasing": 17, "period_s": 5460},
        "budget": {"carrier_hz": 40e9, "tx_power": "10 W", "tx_gain_dbi": 20, "rx_gain_dbi": 20, "sensitivity": "-120 dBm"},
        "sink": [15, 47],
        "symbol_rate": 4e6,
        "oversampling": 8,
        "noise_figure_db": 8,
        "pulse": {"shape": "triangular"},
        "epoch": "auto-L=19",
        "seed": 7
    }"#;

    #[test]
    fn parses_reference() {
        let s = Scenario::from_json(REFERENCE).unwrap();
        assert_eq!(s.epoch, Epoch::AutoL(19));
        assert!((s.budget.sensitivity.watts() - 1e-15).abs() < 1e-27);
        assert_eq!(s.budget.tx_power.watts(), 10.0);
        let b = s.budget().unwrap();
        assert!((b.beta.to_degrees() - 11.478).abs() < 1e-3);
        assert!((s.sigma2() - 1.380649e-23 * 290.0 * 10f64.powf(0.8)).abs() < 1e-35);
        assert_eq!(s.pulse_model().unwrap().oversampling(), 8);
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_units() {
        let extra = REFERENCE.replacen("\"seed\": 7", "\"seed\": 7, \"colour\": 1", 1);
        assert!(matches!(Scenario::from_json(&extra), Err(Error::Config(_))));
        let unitless = REFERENCE.replacen("\"10 W\"", "\"10\"", 1);
        assert!(Scenario::from_json(&unitless).is_err());
        let bad_sink = REFERENCE.replacen("[15, 47]", "[23, 1]", 1);
        assert!(Scenario::from_json(&bad_sink).is_err());
        assert!(("40 dBm".parse::<Power>().unwrap().watts() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn epoch_forms() {
        assert_eq!("350".parse::<Epoch>().unwrap(), Epoch::At(350.0));
        assert_eq!(serde_json::from_str::<Epoch>("12.5").unwrap(), Epoch::At(12.5));
        assert_eq!(serde_json::to_string(&Epoch::AutoL(19)).unwrap(), "\"auto-L=19\"");
        assert!("auto-L=x".parse::<Epoch>().is_err());
    }

    #[test]
    fn bandlimited_noise() {
        let s = Scenario::from_json(&REFERENCE.replacen("\"seed\": 7", "\"seed\": 7, \"noise_convention\": \"bandlimited\"", 1)).unwrap();
        assert!((s.sigma2() - 1.0105e-13).abs() < 1e-16);
    }
}
