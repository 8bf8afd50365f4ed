//! Batch sweeps of detection probability.
//!
//! A run walks `grid × p_fa × algorithm × processing × scenario`. Work is split
//! by UE drop: each drop builds its large-scale model, the communication
//! statistics and the sensing-block precoders once, then evaluates every row.
//! All random draws come from substreams keyed by `(tag, drop, trial)`, so all
//! rows see the same channels, RCS values and noise (common random numbers)
//! and results do not depend on the thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{sample_rcs, ChannelError, ClutterField, Covariance, LargeScaleModel};
use crate::comm_metrics::{estimate_coefficients, CommSample, SinrCoefficients};
use crate::detector::{calibrate_threshold, ClutterPrior, DetectorError, MaprtDetector, SimpleDetector, TestStatistic};
use crate::estimation::{EstimationError, MmseEstimator};
use crate::power_allocation::{
    build_quadratics, ccp_solve, comm_centric_solve, CcpOptions, PowerError, PowerSolution, SensingBeam, SensingQuadratics,
};
use crate::precoding::{target_steering, NormStats, PrecoderSet, PrecodingError};
use crate::rng::{complex_normal_matrix, substream, tag};
use crate::scalar::linear_to_db;
use crate::scenario::{place_drop, ConfigError, DomainError, NetworkGeometry, ScenarioConfig};
use crate::sensing_chain::{draw_symbols, SensingGeometry, SensingSnapshot};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Precoding(#[from] PrecodingError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ExperimentError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ExperimentError::Spec(format!("unknown {} '{other}'", stringify!($name)))),
                }
            }
        }
    };
}

named_enum!(
    /// Parameter swept along the grid.
    SweepKind {
        RcsVariance => "rcs_variance",
        ClutterScale => "clutter_scale",
        SensingDuration => "sensing_duration",
        Benchmark => "benchmark",
    }
);

named_enum!(Algorithm {
    CommCentric => "comm_centric",
    Isac => "isac",
    IsacS => "isac_s",
});

named_enum!(
    /// `Advanced` uses the clutter statistics in the detector and in the
    /// power allocation; `Simple` ignores clutter in both.
    Processing {
        Advanced => "ap",
        Simple => "sp",
    }
);

named_enum!(
    /// `Idealistic` removes clutter from the received signal.
    ScenarioKind {
        Realistic => "realistic",
        Idealistic => "idealistic",
    }
);

impl SweepKind {
    /// Column value of `sweep_var`.
    pub fn variable(self) -> &'static str {
        match self {
            SweepKind::RcsVariance | SweepKind::Benchmark => "rcs_variance",
            SweepKind::ClutterScale => "clutter_scale",
            SweepKind::SensingDuration => "tau_sense",
        }
    }
}

/// Monte Carlo sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCounts {
    pub drops: usize,
    /// Channel realizations per drop for the SINR and norm statistics.
    pub realizations: usize,
    /// RCS draws per drop are `ceil(trial_factor / p_fa)`; each window has its
    /// own clutter and `τ` noise vectors. The same count is used for the H0
    /// calibration batch.
    pub trial_factor: f64,
}

impl Default for McCounts {
    fn default() -> Self {
        Self {
            drops: 20,
            realizations: 200,
            trial_factor: 100.0,
        }
    }
}

impl McCounts {
    pub fn trials(&self, p_fa: f64) -> usize {
        (self.trial_factor / p_fa - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Label written to the `experiment` column.
    pub name: String,
    pub sweep: SweepKind,
    pub grid: Vec<f64>,
    pub p_fa: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub processing: Vec<Processing>,
    pub scenarios: Vec<ScenarioKind>,
    pub counts: McCounts,
    /// Values not swept come from here.
    pub base: ScenarioConfig,
    pub seed: u64,
    pub ccp: CcpOptions,
}

/// Sweep presets. Returns the per-preset settings applied on top of `base`;
/// `fig4` also sets `rcs_variance = 5`, `fig5` sets `clutter_scale = 0.01` and
/// `rcs_variance = −10`.
pub fn preset(name: &str, base: &ScenarioConfig) -> Result<ExperimentSpec, ExperimentError> {
    let mut cfg = base.clone();
    let range = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| ((lo + step * i as f64) * 1e6).round() / 1e6).collect()
    };
    let (sweep, grid, p_fa, algorithms, processing, scenarios) = match name {
        "fig3" => (
            SweepKind::RcsVariance,
            range(-10.0, 15.0, 5.0),
            vec![0.1, 0.01],
            Algorithm::ALL.to_vec(),
            vec![Processing::Advanced],
            vec![ScenarioKind::Realistic],
        ),
        "fig4" => {
            cfg.rcs_variance = 5.0;
            (
                SweepKind::ClutterScale,
                range(0.1, 1.0, 0.1),
                vec![0.1],
                vec![Algorithm::Isac, Algorithm::IsacS],
                Processing::ALL.to_vec(),
                vec![ScenarioKind::Realistic],
            )
        }
        "fig5" => {
            cfg.clutter_scale = 0.01;
            cfg.rcs_variance = -10.0;
            (
                SweepKind::SensingDuration,
                range(10.0, 50.0, 10.0),
                vec![0.1],
                Algorithm::ALL.to_vec(),
                vec![Processing::Advanced],
                vec![ScenarioKind::Realistic],
            )
        }
        "fig6" => (
            SweepKind::Benchmark,
            range(-10.0, 15.0, 5.0),
            vec![0.1],
            vec![Algorithm::Isac, Algorithm::IsacS],
            Processing::ALL.to_vec(),
            ScenarioKind::ALL.to_vec(),
        ),
        other => return Err(ExperimentError::Spec(format!("unknown experiment '{other}' (fig3, fig4, fig5, fig6)"))),
    };
    Ok(ExperimentSpec {
        name: name.to_string(),
        sweep,
        grid,
        p_fa,
        algorithms,
        processing,
        scenarios,
        counts: McCounts::default(),
        seed: cfg.seed,
        base: cfg,
        ccp: CcpOptions::default(),
    })
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let empty = |what: &str| Err(ExperimentError::Spec(format!("{what} must be nonempty")));
        if self.grid.is_empty() {
            return empty("grid");
        }
        if self.p_fa.is_empty() {
            return empty("p_fa list");
        }
        if self.algorithms.is_empty() {
            return empty("algorithm list");
        }
        if self.processing.is_empty() {
            return empty("processing list");
        }
        if self.scenarios.is_empty() {
            return empty("scenario list");
        }
        if self.counts.drops == 0 || self.counts.realizations == 0 || !(self.counts.trial_factor >= 1.0) {
            return Err(ExperimentError::Spec("Monte Carlo counts must be at least 1".into()));
        }
        if let Some(p) = self.p_fa.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(ExperimentError::Spec(format!("p_fa {p} outside (0, 1)")));
        }
        for &v in &self.grid {
            self.config_at(v).validate()?;
        }
        self.base.validate()?;
        Ok(())
    }

    /// Scenario configuration at one grid value.
    pub fn config_at(&self, value: f64) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        match self.sweep {
            SweepKind::RcsVariance | SweepKind::Benchmark => cfg.rcs_variance = value,
            SweepKind::ClutterScale => cfg.clutter_scale = value,
            SweepKind::SensingDuration => cfg.tau_sense = value.round() as usize,
        }
        cfg
    }

    fn max_tau(&self) -> usize {
        self.grid.iter().map(|&v| self.config_at(v).tau_sense).max().unwrap_or(self.base.tau_sense)
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub algorithm: String,
    pub processing: String,
    pub scenario: String,
    pub p_fa: f64,
    /// `NaN` when no drop was feasible.
    pub p_d: f64,
    pub ci_halfwidth: f64,
    /// Mean over feasible drops of the per-drop sensing SINR in dB.
    pub sensing_sinr_db: f64,
    /// Worst UE SINR over feasible drops, in dB.
    pub min_comm_sinr_db: f64,
    /// H1 windows behind `p_d`.
    pub mc_trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub infeasible_drops: usize,
}

impl ResultRow {
    pub fn flagged(&self) -> bool {
        self.infeasible_drops > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// `(drop, reason)` for every drop whose power allocation failed.
    pub failed_drops: Vec<(usize, String)>,
}

impl ExperimentResult {
    pub fn any_infeasible(&self) -> bool {
        self.rows.iter().any(ResultRow::flagged)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything about one UE drop that does not depend on the grid point.
pub struct DropContext {
    pub drop: usize,
    pub geometry: NetworkGeometry,
    pub sensing: SensingGeometry<f64>,
    pub clutter: ClutterField<f64>,
    pub coeffs: SinrCoefficients<f64>,
    pub stats: NormStats<f64>,
    /// Precoders of the sensing coherence block (beam toward the actual target).
    pub precoders: PrecoderSet<f64>,
    /// `n_streams × τ_max`; shorter windows use a prefix.
    pub symbols: DMatrix<Complex<f64>>,
}

impl DropContext {
    pub fn build(cfg: &ScenarioConfig, seed: u64, drop: usize, realizations: usize, tau_max: usize) -> Result<Self, ExperimentError> {
        let d = drop as u64;
        let m = cfg.m_antennas;
        let geometry = place_drop(cfg, seed, d)?;
        let model = LargeScaleModel::<f64>::build(&geometry, cfg, &mut substream(seed, &[tag::SHADOWING, d]))?;
        let noise = cfg.noise_variance();
        let estimator = MmseEstimator::new(model.comm.clone(), cfg.tau_p, cfg.pilot_power, noise)?;
        let lambda = cfg.rzf_lambda();

        let mut rng = substream(seed, &[tag::ENSEMBLE, d]);
        let mut samples = Vec::with_capacity(realizations);
        let mut sets = Vec::with_capacity(realizations);
        for _ in 0..realizations {
            let est = estimator.sample(&mut rng);
            let point = geometry.sample_hotspot_point(&mut rng);
            let h0 = target_steering::<f64>(&geometry.with_target(point), m);
            let set = PrecoderSet::build(&est.h_hat, &h0, lambda, m)?;
            samples.push(CommSample::new(&est, &set));
            sets.push(set);
        }
        let coeffs = estimate_coefficients(&samples, noise.sqrt());
        let stats = NormStats::from_ensemble(&sets);

        let est = estimator.sample(&mut substream(seed, &[tag::SENSING_BLOCK, d]));
        let precoders = PrecoderSet::build(&est.h_hat, &target_steering(&geometry, m), lambda, m)?;
        let symbols = draw_symbols(precoders.n_streams(), tau_max, &mut substream(seed, &[tag::SYMBOLS, d]));
        Ok(Self {
            drop,
            sensing: SensingGeometry::new(&geometry, m, cfg.carrier_freq)?,
            geometry,
            clutter: model.clutter,
            coeffs,
            stats,
            precoders,
            symbols,
        })
    }
}

/// Per-drop outcome of one row.
#[derive(Debug, Clone, Copy)]
struct DropOutcome {
    hits: usize,
    trials: usize,
    sensing_sinr: f64,
    min_comm_sinr: f64,
}

fn uses_clutter_model(processing: Processing, scenario: ScenarioKind) -> bool {
    processing == Processing::Advanced && scenario == ScenarioKind::Realistic
}

/// Which set of substreams a batch of windows draws from. Calibration and
/// validation batches are target-free unless an RCS covariance is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Calibration,
    Detection,
    Validation,
}

/// Test statistics over `trials` windows. With `r_rcs` the target is present
/// (H1); `clutter = None` is the clutter-free world. H1 trials share their
/// RCS draws across rows (common random numbers).
#[allow(clippy::too_many_arguments)]
pub fn window_statistics(
    detector: &dyn TestStatistic<f64>,
    snapshot: &SensingSnapshot<f64>,
    clutter: Option<&ClutterField<f64>>,
    r_rcs: Option<&Covariance<f64>>,
    sigma_n: f64,
    seed: u64,
    drop: usize,
    batch: Batch,
    trials: usize,
) -> Vec<f64> {
    let d = drop as u64;
    let (t_clutter, t_noise) = match batch {
        Batch::Calibration => (tag::CAL_CLUTTER, tag::CAL_NOISE),
        Batch::Detection => (tag::DET_CLUTTER, tag::DET_NOISE),
        Batch::Validation => (tag::VAL_CLUTTER, tag::VAL_NOISE),
    };
    (0..trials)
        .map(|t| {
            let t = t as u64;
            let alpha = r_rcs.map(|r| sample_rcs(r, &mut substream(seed, &[tag::DET_RCS, d, t])).alpha);
            let h = clutter.map(|c| c.sample(&mut substream(seed, &[t_clutter, d, t])));
            let mut nrng = substream(seed, &[t_noise, d, t]);
            let noise: Vec<DMatrix<Complex<f64>>> =
                (0..snapshot.n_rx()).map(|_| complex_normal_matrix(snapshot.m(), snapshot.tau(), &mut nrng)).collect();
            let y = snapshot.received_with_noise(alpha.as_ref(), h.as_ref(), sigma_n, &noise);
            detector.statistic(&y)
        })
        .collect()
}

struct RowKey {
    grid: usize,
    p_fa: usize,
    algorithm: Algorithm,
    processing: Processing,
    scenario: ScenarioKind,
}

fn row_keys(spec: &ExperimentSpec) -> Vec<RowKey> {
    let mut keys = Vec::new();
    for grid in 0..spec.grid.len() {
        for p_fa in 0..spec.p_fa.len() {
            for &algorithm in &spec.algorithms {
                for &processing in &spec.processing {
                    for &scenario in &spec.scenarios {
                        keys.push(RowKey {
                            grid,
                            p_fa,
                            algorithm,
                            processing,
                            scenario,
                        });
                    }
                }
            }
        }
    }
    keys
}

/// Solved powers for one drop at one grid point, keyed by algorithm and by
/// whether the clutter term entered the optimization.
struct PowerTable {
    entries: Vec<(Algorithm, bool, PowerSolution<f64>)>,
}

impl PowerTable {
    fn get(&self, algorithm: Algorithm, clutter_aware: bool) -> &PowerSolution<f64> {
        let aware = algorithm != Algorithm::CommCentric && clutter_aware;
        &self
            .entries
            .iter()
            .find(|(a, c, _)| *a == algorithm && *c == aware)
            .expect("power solution computed")
            .2
    }
}

fn solve_powers(
    spec: &ExperimentSpec,
    ctx: &DropContext,
    cfg: &ScenarioConfig,
    quadratics: &[(bool, SensingQuadratics<f64>)],
) -> Result<PowerTable, PowerError> {
    let gamma = cfg.gamma_c_linear();
    let p_tx = cfg.p_tx_max;
    let mut entries = Vec::new();
    if spec.algorithms.contains(&Algorithm::CommCentric) {
        let sol = comm_centric_solve(&ctx.coeffs, &ctx.stats, gamma, p_tx, None, &spec.ccp.solver)?;
        entries.push((Algorithm::CommCentric, false, sol));
    }
    for (aware, q) in quadratics {
        let wants_isac = spec.algorithms.iter().any(|a| *a != Algorithm::CommCentric);
        if !wants_isac {
            break;
        }
        let isac = ccp_solve(q, &ctx.coeffs, &ctx.stats, gamma, p_tx, SensingBeam::Off, &spec.ccp, None)?;
        if spec.algorithms.contains(&Algorithm::IsacS) {
            // Two starts: the default one (ρ_0 > 0) and the ISAC optimum. The
            // objective is flat in ρ_0 near ρ_0 = 0, so the second alone tends
            // to stay there; keeping the better also guarantees ISAC+S ≥ ISAC.
            let fresh = ccp_solve(q, &ctx.coeffs, &ctx.stats, gamma, p_tx, SensingBeam::On, &spec.ccp, None)?;
            let warm = ccp_solve(q, &ctx.coeffs, &ctx.stats, gamma, p_tx, SensingBeam::On, &spec.ccp, Some(&isac.rho()))?;
            let on = if fresh.sensing_sinr >= warm.sensing_sinr { fresh } else { warm };
            entries.push((Algorithm::IsacS, *aware, on));
        }
        entries.push((Algorithm::Isac, *aware, isac));
    }
    Ok(PowerTable { entries })
}

/// Evaluates every row for one drop. The inner `Err` carries the reason the
/// drop's power allocation failed.
fn run_drop(spec: &ExperimentSpec, drop: usize, keys: &[RowKey]) -> Result<Result<Vec<DropOutcome>, String>, ExperimentError> {
    let tau_max = spec.max_tau();
    let ctx = DropContext::build(&spec.base, spec.seed, drop, spec.counts.realizations, tau_max)?;
    let noise = spec.base.noise_variance();
    let sigma_n = noise.sqrt();
    let n_pairs = ctx.sensing.n_tx() * ctx.sensing.n_rx();
    let mut out = Vec::with_capacity(keys.len());

    for (gi, &value) in spec.grid.iter().enumerate() {
        let cfg = spec.config_at(value);
        let tau = cfg.tau_sense;
        let clutter = ctx.clutter.with_scale(cfg.clutter_scale)?;
        let r_rcs = Covariance::scaled_identity(n_pairs, cfg.rcs_variance_linear());
        let symbols = ctx.symbols.columns(0, tau).into_owned();

        let mut needs = Vec::new();
        for k in keys.iter().filter(|k| k.grid == gi) {
            let aware = uses_clutter_model(k.processing, k.scenario);
            if !needs.contains(&aware) {
                needs.push(aware);
            }
        }
        needs.sort();
        let full = build_quadratics(&ctx.sensing, &ctx.precoders, &symbols, tau, Some(&clutter), &r_rcs, noise)
            .map_err(|e| ExperimentError::Spec(e.to_string()))?;
        let quadratics: Vec<(bool, SensingQuadratics<f64>)> = needs
            .iter()
            .map(|&aware| (aware, if aware { full.clone() } else { full.without_clutter() }))
            .collect();
        let powers = match solve_powers(spec, &ctx, &cfg, &quadratics) {
            Ok(p) => p,
            Err(e) => return Ok(Err(e.to_string())),
        };

        for key in keys.iter().filter(|k| k.grid == gi) {
            let p_fa = spec.p_fa[key.p_fa];
            let aware = uses_clutter_model(key.processing, key.scenario);
            let sol = powers.get(key.algorithm, aware);
            let snapshot = SensingSnapshot::new(ctx.sensing.clone(), &ctx.precoders, &sol.rho_sqrt, symbols.clone());
            let detector: Box<dyn TestStatistic<f64>> = match (key.processing, key.scenario) {
                (Processing::Simple, _) => Box::new(SimpleDetector::new(&snapshot, &r_rcs, noise)?),
                (Processing::Advanced, ScenarioKind::Realistic) => {
                    Box::new(MaprtDetector::new(&snapshot, &r_rcs, &ClutterPrior::Correlated(clutter.prior()?), noise)?)
                }
                (Processing::Advanced, ScenarioKind::Idealistic) => Box::new(MaprtDetector::new(
                    &snapshot,
                    &r_rcs,
                    &ClutterPrior::idealistic(noise, cfg.p_tx_max),
                    noise,
                )?),
            };
            let world = match key.scenario {
                ScenarioKind::Realistic => Some(&clutter),
                ScenarioKind::Idealistic => None,
            };
            let trials = spec.counts.trials(p_fa);
            let h0 = window_statistics(detector.as_ref(), &snapshot, world, None, sigma_n, spec.seed, drop, Batch::Calibration, trials);
            let threshold = calibrate_threshold(&h0, p_fa)?;
            let h1 = window_statistics(detector.as_ref(), &snapshot, world, Some(&r_rcs), sigma_n, spec.seed, drop, Batch::Detection, trials);
            let hits = h1.iter().filter(|&&t| t >= threshold).count();
            // sensing SINR of the channel the detector actually faces
            let q_eval = match key.scenario {
                ScenarioKind::Realistic => full.clone(),
                ScenarioKind::Idealistic => full.without_clutter(),
            };
            out.push(DropOutcome {
                hits,
                trials,
                sensing_sinr: crate::power_allocation::sensing_sinr(&sol.rho_sqrt, &q_eval),
                min_comm_sinr: sol.comm_sinr.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
    }
    Ok(Ok(out))
}

/// Runs a sweep. Drops run in parallel; the reduction is in drop order, so
/// the table is identical for any thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let keys = row_keys(spec);
    let per_drop: Vec<Result<Result<Vec<DropOutcome>, String>, ExperimentError>> =
        (0..spec.counts.drops).into_par_iter().map(|d| run_drop(spec, d, &keys)).collect();

    let mut feasible: Vec<Vec<DropOutcome>> = Vec::new();
    let mut failed_drops = Vec::new();
    for (d, r) in per_drop.into_iter().enumerate() {
        match r? {
            Ok(v) => feasible.push(v),
            Err(reason) => failed_drops.push((d, reason)),
        }
    }

    let rows = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let outcomes: Vec<DropOutcome> = feasible.iter().map(|v| v[i]).collect();
            let hits: usize = outcomes.iter().map(|o| o.hits).sum();
            let trials: usize = outcomes.iter().map(|o| o.trials).sum();
            let (p_d, ci) = if trials > 0 {
                let est = crate::detector::DetectionEstimate::from_counts(hits, trials);
                (est.p_d, est.halfwidth)
            } else {
                (f64::NAN, f64::NAN)
            };
            let sinr_db = if outcomes.is_empty() {
                f64::NAN
            } else {
                outcomes.iter().map(|o| linear_to_db(o.sensing_sinr)).sum::<f64>() / outcomes.len() as f64
            };
            let min_comm = outcomes.iter().map(|o| o.min_comm_sinr).fold(f64::INFINITY, f64::min);
            ResultRow {
                experiment: spec.name.clone(),
                sweep_var: spec.sweep.variable().to_string(),
                sweep_value: spec.grid[key.grid],
                algorithm: key.algorithm.to_string(),
                processing: key.processing.to_string(),
                scenario: key.scenario.to_string(),
                p_fa: spec.p_fa[key.p_fa],
                p_d,
                ci_halfwidth: ci,
                sensing_sinr_db: sinr_db,
                min_comm_sinr_db: if outcomes.is_empty() { f64::NAN } else { linear_to_db(min_comm) },
                mc_trials: trials,
                seed: spec.seed,
                infeasible_drops: failed_drops.len(),
            }
        })
        .collect();
    Ok(ExperimentResult { rows, failed_drops })
}

/// Convenience for callers that only need a single row's detection estimate.
pub fn find_row(
    rows: &[ResultRow],
    value: f64,
    algorithm: Algorithm,
    processing: Processing,
    scenario: ScenarioKind,
    p_fa: f64,
) -> Option<&ResultRow> {
    rows.iter().find(|r| {
        (r.sweep_value - value).abs() < 1e-9
            && r.algorithm == algorithm.as_str()
            && r.processing == processing.as_str()
            && r.scenario == scenario.as_str()
            && (r.p_fa - p_fa).abs() < 1e-12
    })
}
