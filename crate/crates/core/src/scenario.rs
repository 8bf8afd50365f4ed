//! Scenario configuration, network geometry and physical-layer constants.

use std::path::Path;

use nalgebra::{Complex, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, tag, SimRng};
use crate::scalar::{cis, db_to_linear, dbm_to_watts, Real};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// AP antenna height (m).
pub const AP_HEIGHT: f64 = 10.0;
/// UE and target height (m).
pub const UE_HEIGHT: f64 = 1.5;
/// Log-normal shadowing standard deviation (dB) of the UMi NLOS model.
pub const SHADOWING_STD_DB: f64 = 4.0;
/// Angular standard deviation of the local scattering model (15 degrees).
pub const LOCAL_SCATTERING_ASD: f64 = 15.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

/// All physical and experiment parameters of one scenario.
///
/// Serialized as a flat TOML table whose keys are the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Side of the square deployment area (m).
    pub area_side: f64,
    /// Side of the square sensing hotspot at the area center (m).
    pub hotspot_side: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    pub m_antennas: usize,
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Noise power in dBm.
    pub noise_power: f64,
    /// Maximum transmit power per AP (W).
    pub p_tx_max: f64,
    /// Uplink pilot power per UE (W).
    pub pilot_power: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_sense: usize,
    /// Communication SINR threshold (dB).
    pub gamma_c: f64,
    pub p_fa: f64,
    pub clutter_scale: f64,
    /// RCS variance (dBsm).
    pub rcs_variance: f64,
    /// RZF regularization; `None` selects `n_ue·σ²/p_tx_max`.
    pub rzf_lambda: Option<f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 500.0,
            hotspot_side: 15.0,
            n_tx: 16,
            n_rx: 2,
            n_ue: 8,
            m_antennas: 4,
            carrier_freq: 1.9e9,
            bandwidth: 20e6,
            noise_power: -94.0,
            p_tx_max: 1.0,
            pilot_power: 0.2,
            tau_c: 200,
            tau_p: 10,
            tau_sense: 10,
            gamma_c: 3.0,
            p_fa: 0.1,
            clutter_scale: 0.3,
            rcs_variance: 5.0,
            rzf_lambda: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.area_side > 0.0) || !(self.hotspot_side > 0.0) || self.hotspot_side > self.area_side {
            return fail(format!(
                "need 0 < hotspot_side ({}) <= area_side ({})",
                self.hotspot_side, self.area_side
            ));
        }
        if self.n_tx == 0 {
            return fail("n_tx must be at least 1".into());
        }
        if self.n_rx == 0 {
            return fail("n_rx must be at least 1".into());
        }
        if self.m_antennas == 0 {
            return fail("m_antennas must be at least 1".into());
        }
        if self.tau_p == 0 || self.tau_p >= self.tau_c {
            return fail(format!("need 1 <= tau_p ({}) < tau_c ({})", self.tau_p, self.tau_c));
        }
        if self.tau_sense == 0 || self.tau_sense > self.tau_c - self.tau_p {
            return fail(format!(
                "need 1 <= tau_sense ({}) <= tau_c - tau_p ({})",
                self.tau_sense,
                self.tau_c - self.tau_p
            ));
        }
        if !(self.clutter_scale > 0.0 && self.clutter_scale <= 1.0) {
            return fail(format!("clutter_scale {} outside (0, 1]", self.clutter_scale));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return fail(format!("p_fa {} outside (0, 1)", self.p_fa));
        }
        for (name, v) in [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("p_tx_max", self.p_tx_max),
            ("pilot_power", self.pilot_power),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("gamma_c", self.gamma_c),
            ("rcs_variance", self.rcs_variance),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        if let Some(l) = self.rzf_lambda {
            if !(l > 0.0) {
                return fail(format!("rzf_lambda must be positive, got {l}"));
            }
        }
        Ok(())
    }

    /// σ_n² in watts.
    pub fn noise_variance(&self) -> f64 {
        dbm_to_watts(self.noise_power)
    }

    pub fn gamma_c_linear(&self) -> f64 {
        db_to_linear(self.gamma_c)
    }

    /// σ²_rcs in m².
    pub fn rcs_variance_linear(&self) -> f64 {
        db_to_linear(self.rcs_variance)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn rzf_lambda(&self) -> f64 {
        self.rzf_lambda
            .unwrap_or(self.n_ue.max(1) as f64 * self.noise_variance() / self.p_tx_max)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Applies `key=value`, with `value` parsed as a TOML value.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Override(assignment.to_string()));
        }
        let mut table: toml::Table =
            toml::from_str(&self.to_toml_string()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let snippet = format!("v = {value}");
        let parsed = match toml::from_str::<toml::Table>(&snippet) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        // integers are accepted for float fields
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, p) => p,
        };
        table.insert(key.to_string(), parsed);
        let text = toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{key}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }
}

/// Point in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Azimuth/elevation pair (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angles {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Angles {
    /// Direction of `to` as seen from `from`.
    pub fn between(from: &Position, to: &Position) -> Self {
        let dx = to.x - from.x;
        let dy = to.y - from.y;
        let dz = to.z - from.z;
        Self {
            azimuth: dy.atan2(dx),
            elevation: dz.atan2((dx * dx + dy * dy).sqrt()),
        }
    }
}

/// AP, UE and target positions with the derived sensing angles and distances.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub tx_positions: Vec<Position>,
    pub rx_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    pub target: Position,
    pub hotspot_center: Position,
    pub hotspot_side: f64,
    /// Transmitter AP k → target.
    pub tx_angles: Vec<Angles>,
    /// Target → receiver AP r.
    pub rx_angles: Vec<Angles>,
    pub d_tx: Vec<f64>,
    pub d_rx: Vec<f64>,
}

impl NetworkGeometry {
    pub fn n_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_positions.len()
    }

    pub fn n_ue(&self) -> usize {
        self.ue_positions.len()
    }

    /// Same deployment with the target moved to `target`.
    pub fn with_target(&self, target: Position) -> Self {
        let mut g = self.clone();
        g.target = target;
        g.recompute_target_geometry();
        g
    }

    fn recompute_target_geometry(&mut self) {
        self.tx_angles = self.tx_positions.iter().map(|p| Angles::between(p, &self.target)).collect();
        self.rx_angles = self.rx_positions.iter().map(|p| Angles::between(&self.target, p)).collect();
        self.d_tx = self.tx_positions.iter().map(|p| p.distance(&self.target)).collect();
        self.d_rx = self.rx_positions.iter().map(|p| p.distance(&self.target)).collect();
    }

    /// Uniform point in the hotspot at target height.
    pub fn sample_hotspot_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        sample_in_square(&self.hotspot_center, self.hotspot_side, UE_HEIGHT, rng)
    }
}

fn sample_in_square<R: Rng + ?Sized>(center: &Position, side: f64, height: f64, rng: &mut R) -> Position {
    let half = side / 2.0;
    Position::new(
        center.x + rng.random_range(-half..half),
        center.y + rng.random_range(-half..half),
        height,
    )
}

/// Uniform AP layout; the `n_rx` APs nearest to the hotspot center are receivers.
/// UEs and target come from drop 0.
pub fn place_network(config: &ScenarioConfig, seed: u64) -> Result<NetworkGeometry, ConfigError> {
    place_drop(config, seed, 0)
}

/// Like [`place_network`] with UEs and target from drop `drop`. The AP layout
/// depends on `seed` only, so it is shared by all drops.
pub fn place_drop(config: &ScenarioConfig, seed: u64, drop: u64) -> Result<NetworkGeometry, ConfigError> {
    config.validate()?;
    let n_ap = config.n_tx + config.n_rx;
    if n_ap < config.n_rx {
        return Err(ConfigError::Invalid(format!("{n_ap} APs cannot host {} receivers", config.n_rx)));
    }
    let side = config.area_side;
    let center = Position::new(side / 2.0, side / 2.0, UE_HEIGHT);

    let mut rng: SimRng = substream(seed, &[tag::AP_LAYOUT]);
    let aps: Vec<Position> = (0..n_ap)
        .map(|_| Position::new(rng.random_range(0.0..side), rng.random_range(0.0..side), AP_HEIGHT))
        .collect();
    let mut order: Vec<usize> = (0..n_ap).collect();
    order.sort_by(|&a, &b| {
        aps[a]
            .horizontal_distance(&center)
            .total_cmp(&aps[b].horizontal_distance(&center))
            .then(a.cmp(&b))
    });
    let mut is_rx = vec![false; n_ap];
    for &i in &order[..config.n_rx] {
        is_rx[i] = true;
    }
    let rx_positions: Vec<Position> = order[..config.n_rx].iter().map(|&i| aps[i]).collect();
    let tx_positions: Vec<Position> = (0..n_ap).filter(|&i| !is_rx[i]).map(|i| aps[i]).collect();

    let mut ue_rng = substream(seed, &[tag::UE_DROP, drop]);
    let ue_positions = (0..config.n_ue)
        .map(|_| Position::new(ue_rng.random_range(0.0..side), ue_rng.random_range(0.0..side), UE_HEIGHT))
        .collect();
    let mut target_rng = substream(seed, &[tag::TARGET_DROP, drop]);
    let target = sample_in_square(&center, config.hotspot_side, UE_HEIGHT, &mut target_rng);

    let mut g = NetworkGeometry {
        tx_positions,
        rx_positions,
        ue_positions,
        target,
        hotspot_center: center,
        hotspot_side: config.hotspot_side,
        tx_angles: Vec::new(),
        rx_angles: Vec::new(),
        d_tx: Vec::new(),
        d_rx: Vec::new(),
    };
    g.recompute_target_geometry();
    Ok(g)
}

/// Half-wavelength ULA response: entry n is `exp(jπ n sin(az) cos(el))`.
pub fn array_response<T: Real>(azimuth: T, elevation: T, m: usize) -> DVector<Complex<T>> {
    let phase_step = T::pi() * azimuth.sin() * elevation.cos();
    DVector::from_fn(m, |n, _| cis(phase_step * T::from_count(n)))
}

/// Bistatic radar-range gain `λ_c² / ((4π)³ d_tx² d_rx²)`.
pub fn bistatic_gain<T: Real>(d_tx: T, d_rx: T, carrier_freq: T) -> Result<T, DomainError> {
    for d in [d_tx, d_rx] {
        if !(d > T::zero()) {
            return Err(DomainError::NonPositiveDistance(d.as_f64()));
        }
    }
    let lambda = T::lit(SPEED_OF_LIGHT) / carrier_freq;
    let four_pi = T::lit(4.0) * T::pi();
    Ok(lambda * lambda / (four_pi * four_pi * four_pi * d_tx * d_tx * d_rx * d_rx))
}

/// Distance exponent of the UMi NLOS formula.
pub const UMI_PATHLOSS_EXPONENT: f64 = 3.67;

/// UMi NLOS path loss in dB: `36.7 log10(d) + 22.7 + 26 log10(f_GHz)`.
pub fn pathloss_umi_db<T: Real>(distance: T, carrier_freq: T) -> T {
    let f_ghz = carrier_freq / T::lit(1e9);
    T::lit(36.7) * distance.log10() + T::lit(22.7) + T::lit(26.0) * f_ghz.log10()
}

/// Deterministic UMi large-scale gain (linear, no shadowing).
pub fn pathloss_umi<T: Real>(distance: T, carrier_freq: T) -> T {
    T::lit(10.0).powf(-pathloss_umi_db(distance, carrier_freq) / T::lit(10.0))
}

/// UMi gain including one log-normal shadowing draw.
pub fn shadowed_gain<R: Rng + ?Sized>(distance: f64, carrier_freq: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    db_to_linear(-pathloss_umi_db(distance, carrier_freq) + SHADOWING_STD_DB * z)
}
