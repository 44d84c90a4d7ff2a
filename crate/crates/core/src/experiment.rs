//! Experiment orchestration: configuration, seeded Monte Carlo campaigns,
//! built-in recipes and CSV / JSON persistence.
//!
//! Every trial draws from its own `ChaCha8` stream seeded with
//! `seed ^ counter`, where the counter packs the point index (high 32 bits)
//! and the trial index. Trials may run on any number of threads; results
//! are collected in trial order and reduced sequentially, so the output is
//! independent of the worker count.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    band_edge_level, bit_errors, ccdf_quantile, oobe_psd, optimize_pilot_power, pa_efficiency, paired_squared_errors, papr_db,
    welch_psd, Accumulator, ErrorCounter, PaModel, WelchConfig,
};
use crate::baselines::{modulate, propagate, sense_with, WaveformKind};
use crate::channel::{add_awgn_in_place, geometry_to_path, ChannelSpec, PathParams, RandomChannel, SensingMode, SPEED_OF_LIGHT};
use crate::detect::{iterative_ce_dd, CgConfig, DetectorConfig};
use crate::error::{Error, Result};
use crate::lattice::{qam_demap, FrameParams, PilotConfig, QamAlphabet};
use crate::sensing::TpeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Papr,
    Oobe,
    Ber,
    SenseActive,
    SensePassive,
    PowerOpt,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Papr => "papr",
            ExperimentKind::Oobe => "oobe",
            ExperimentKind::Ber => "ber",
            ExperimentKind::SenseActive => "sense-active",
            ExperimentKind::SensePassive => "sense-passive",
            ExperimentKind::PowerOpt => "power-opt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    /// Derived from the channel's largest delay when unset.
    #[serde(default)]
    pub cp_len: Option<usize>,
    #[serde(default = "default_carrier")]
    pub f_c: f64,
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
}

fn default_carrier() -> f64 {
    0.3e12
}

fn default_oversampling() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSweep {
    /// Pilot power fractions to sweep.
    pub sigma_p2: Vec<f64>,
    /// Pilot position; centered when unset.
    #[serde(default)]
    pub l_p: Option<usize>,
    #[serde(default)]
    pub k_p: Option<usize>,
}

impl Default for PilotSweep {
    fn default() -> Self {
        Self {
            sigma_p2: vec![0.0],
            l_p: None,
            k_p: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    /// Metres (path length for passive links).
    pub range: f64,
    /// Metres per second.
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    /// Complex gain as `[re, im]`.
    pub gain: [f64; 2],
    /// Delay in units of `1/(M delta_f)`.
    pub tau_bins: f64,
    /// Doppler in units of `1/(N T)`.
    pub nu_bins: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelConfig {
    /// Fresh random paths every trial.
    Random {
        paths: usize,
        #[serde(default = "one")]
        sigma_h2: f64,
        /// Delays are drawn from `[0, tau_max_bins)` delay bins.
        tau_max_bins: f64,
        /// Largest speed; Doppler is drawn from `+-speed f_c / c`.
        #[serde(default)]
        speed_kmh: f64,
        #[serde(default)]
        on_grid: bool,
    },
    /// Point targets with random gain phases; each set is a sweep point.
    Geometry {
        target_sets: Vec<Vec<Target>>,
        #[serde(default = "one")]
        sigma_h2: f64,
    },
    /// Fixed paths.
    Paths { paths: Vec<PathEntry> },
}

fn one() -> f64 {
    1.0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::Paths { paths: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingSettings {
    pub tpe: TpeConfig,
    /// Added to `|X|^2` in the OFDM TF quotient, relative to the noise variance.
    pub ofdm_regularizer: f64,
}

impl Default for SensingSettings {
    fn default() -> Self {
        Self {
            tpe: TpeConfig::default(),
            ofdm_regularizer: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSettings {
    /// CG regularizer; `1/SNR` when unset.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub max_outer: usize,
    pub tpe: TpeConfig,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        let cg = CgConfig::new(0.0);
        Self {
            lambda: None,
            tol: cg.tol,
            max_iters: cg.max_iters,
            max_outer: 10,
            tpe: TpeConfig {
                mode: SensingMode::Passive,
                ..TpeConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OobeSettings {
    pub welch: WelchConfig,
    /// Shoulder window in subcarrier spacings beyond the band edge.
    pub edge_lo: f64,
    pub edge_hi: f64,
}

impl Default for OobeSettings {
    fn default() -> Self {
        Self {
            welch: WelchConfig::default(),
            edge_lo: 1.0,
            edge_hi: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaSettings {
    pub class_a: PaModel,
    pub class_b: PaModel,
}

impl Default for PaSettings {
    fn default() -> Self {
        Self {
            class_a: PaModel::class_a(),
            class_b: PaModel::class_b(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSettings {
    pub sigma_h2: f64,
    pub paths: usize,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self { sigma_h2: 1.0, paths: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the experiment kind.
    #[serde(default)]
    pub id: Option<String>,
    pub experiment: ExperimentKind,
    pub frame: FrameConfig,
    #[serde(default = "default_waveforms")]
    pub waveforms: Vec<WaveformKind>,
    #[serde(default = "default_qam")]
    pub qam: usize,
    #[serde(default)]
    pub pilot: PilotSweep,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sensing: SensingSettings,
    #[serde(default)]
    pub detector: DetectorSettings,
    #[serde(default)]
    pub oobe: OobeSettings,
    #[serde(default)]
    pub pa: PaSettings,
    #[serde(default)]
    pub power: PowerSettings,
}

fn default_waveforms() -> Vec<WaveformKind> {
    vec![WaveformKind::DftSOtfs]
}

fn default_qam() -> usize {
    4
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// Frame numerology with the prefix sized for the configured channel.
    pub fn frame_params(&self) -> Result<FrameParams> {
        let f = &self.frame;
        let base = FrameParams::new(f.m, f.n, f.delta_f)?
            .with_carrier(f.f_c)?
            .with_oversampling(f.oversampling)?;
        let cp = match f.cp_len {
            Some(cp) => cp,
            None => self.max_delay_bins(&base).ceil() as usize,
        };
        base.with_cp_len(cp)
    }

    fn max_delay_bins(&self, p: &FrameParams) -> f64 {
        match &self.channel {
            ChannelConfig::Random { tau_max_bins, .. } => *tau_max_bins,
            ChannelConfig::Paths { paths } => paths.iter().map(|e| e.tau_bins).fold(0.0, f64::max),
            ChannelConfig::Geometry { target_sets, .. } => {
                let factor = match self.experiment {
                    ExperimentKind::SenseActive => 2.0,
                    _ => 1.0,
                };
                target_sets
                    .iter()
                    .flatten()
                    .map(|t| factor * t.range / SPEED_OF_LIGHT / p.delay_resolution())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Set when an explicit prefix is shorter than the largest channel delay.
    /// The simulation stays circular, so such runs model an ideal prefix.
    pub fn prefix_warning(&self) -> Option<String> {
        let p = self.frame_params().ok()?;
        let cp = self.frame.cp_len?;
        let need = self.max_delay_bins(&p);
        (need > cp as f64).then(|| {
            format!("channel delays reach {need:.2} samples but cp_len is {cp}; the circular channel model is optimistic here")
        })
    }

    fn field(name: &str, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{name}: {msg}"))
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.frame_params().map_err(|e| Self::field("frame", e))?;
        if self.trials < 1 {
            return Err(Self::field("trials", "must be at least 1"));
        }
        QamAlphabet::new(self.qam).map_err(|e| Self::field("qam", e))?;
        if self.waveforms.is_empty() {
            return Err(Self::field("waveforms", "must not be empty"));
        }
        if self.pilot.sigma_p2.is_empty() {
            return Err(Self::field("pilot.sigma_p2", "must not be empty"));
        }
        for &s in &self.pilot.sigma_p2 {
            if !(0.0..1.0).contains(&s) {
                return Err(Self::field("pilot.sigma_p2", format!("{s} outside [0, 1)")));
            }
        }
        if self.pilot.l_p.is_some_and(|l| l >= params.m) || self.pilot.k_p.is_some_and(|k| k >= params.n) {
            return Err(Self::field("pilot", "position outside the grid"));
        }
        for s in &self.snr_db {
            if !s.is_finite() {
                return Err(Self::field("snr_db", "values must be finite"));
            }
        }
        self.sensing.tpe.validate().map_err(|e| Self::field("sensing.tpe", e))?;
        self.detector.tpe.validate().map_err(|e| Self::field("detector.tpe", e))?;
        if !(self.sensing.ofdm_regularizer >= 0.0) {
            return Err(Self::field("sensing.ofdm_regularizer", "must be non-negative"));
        }
        if let Some(l) = self.detector.lambda {
            if !(l >= 0.0) {
                return Err(Self::field("detector.lambda", "must be non-negative"));
            }
        }
        if self.detector.max_outer < 1 {
            return Err(Self::field("detector.max_outer", "must be at least 1"));
        }
        self.pa.class_a.validate().map_err(|e| Self::field("pa.class_a", e))?;
        self.pa.class_b.validate().map_err(|e| Self::field("pa.class_b", e))?;
        let needs_snr = !matches!(self.experiment, ExperimentKind::Papr | ExperimentKind::Oobe);
        if needs_snr && self.snr_db.is_empty() {
            return Err(Self::field("snr_db", "must not be empty"));
        }
        let otfs_only = matches!(self.experiment, ExperimentKind::Ber | ExperimentKind::SensePassive);
        if otfs_only && self.waveforms.iter().any(|&w| w != WaveformKind::DftSOtfs) {
            return Err(Self::field("waveforms", "the iterative receiver supports dft-s-otfs only"));
        }
        if otfs_only && self.pilot.sigma_p2.iter().any(|&s| s <= 0.0) {
            return Err(Self::field("pilot.sigma_p2", "the iterative receiver needs a pilot"));
        }
        if !otfs_only && self.experiment != ExperimentKind::PowerOpt {
            let nonzero = self.pilot.sigma_p2.iter().any(|&s| s > 0.0);
            if nonzero && self.waveforms.iter().any(|w| !w.is_otfs_family()) {
                return Err(Self::field("pilot.sigma_p2", "OFDM-family waveforms carry no pilot"));
            }
        }
        match &self.channel {
            ChannelConfig::Random {
                paths,
                sigma_h2,
                tau_max_bins,
                speed_kmh,
                ..
            } => {
                if *paths == 0 || !(*sigma_h2 > 0.0) || !(*tau_max_bins > 0.0) || !(*speed_kmh >= 0.0) {
                    return Err(Self::field("channel", "random channel needs paths >= 1 and positive sigma_h2, tau_max_bins"));
                }
                self.random_channel(&params).map_err(|e| Self::field("channel", e))?;
            }
            ChannelConfig::Geometry { target_sets, sigma_h2 } => {
                if target_sets.is_empty() || target_sets.iter().any(|s| s.is_empty()) || !(*sigma_h2 > 0.0) {
                    return Err(Self::field("channel.target_sets", "needs non-empty target sets and positive sigma_h2"));
                }
                for set in 0..target_sets.len() {
                    self.geometry_paths(&params, set).map_err(|e| Self::field("channel.target_sets", e))?;
                }
            }
            ChannelConfig::Paths { paths } => {
                let needs_channel = matches!(
                    self.experiment,
                    ExperimentKind::Ber | ExperimentKind::SenseActive | ExperimentKind::SensePassive
                );
                if needs_channel && paths.is_empty() {
                    return Err(Self::field("channel", "needs at least one path"));
                }
                self.fixed_spec(&params).map_err(|e| Self::field("channel.paths", e))?;
            }
        }
        if matches!(self.experiment, ExperimentKind::SenseActive | ExperimentKind::SensePassive)
            && !matches!(self.channel, ChannelConfig::Geometry { .. })
        {
            return Err(Self::field("channel", "sensing experiments need geometry targets"));
        }
        if self.power.paths < 1 || !(self.power.sigma_h2 > 0.0) {
            return Err(Self::field("power", "needs paths >= 1 and positive sigma_h2"));
        }
        Ok(())
    }

    fn mode(&self) -> SensingMode {
        match self.experiment {
            ExperimentKind::SenseActive => SensingMode::Active,
            _ => SensingMode::Passive,
        }
    }

    fn random_channel(&self, params: &FrameParams) -> Result<RandomChannel> {
        match &self.channel {
            ChannelConfig::Random {
                paths,
                sigma_h2,
                tau_max_bins,
                speed_kmh,
                on_grid,
            } => {
                let nu_max = speed_kmh / 3.6 * params.f_c / SPEED_OF_LIGHT;
                if nu_max >= params.delta_f / 2.0 {
                    return Err(Error::InvalidParams(format!(
                        "Doppler {nu_max} Hz at {speed_kmh} km/h exceeds half the subcarrier spacing"
                    )));
                }
                Ok(RandomChannel {
                    paths: *paths,
                    sigma_h2: *sigma_h2,
                    tau_max: tau_max_bins * params.delay_resolution(),
                    nu_max,
                    on_grid: *on_grid,
                })
            }
            _ => Err(Error::Config("not a random channel".into())),
        }
    }

    fn geometry_paths(&self, params: &FrameParams, set: usize) -> Result<Vec<(f64, f64)>> {
        match &self.channel {
            ChannelConfig::Geometry { target_sets, .. } => target_sets[set]
                .iter()
                .map(|t| geometry_to_path(params, t.range, t.velocity, self.mode()))
                .collect(),
            _ => Err(Error::Config("not a geometry channel".into())),
        }
    }

    fn fixed_spec(&self, params: &FrameParams) -> Result<ChannelSpec> {
        match &self.channel {
            ChannelConfig::Paths { paths } => {
                let list: Vec<PathParams> = paths
                    .iter()
                    .map(|e| {
                        PathParams::new(
                            Complex64::new(e.gain[0], e.gain[1]),
                            e.tau_bins * params.delay_resolution(),
                            e.nu_bins * params.doppler_resolution(),
                        )
                    })
                    .collect();
                let gain = list.iter().map(|p| p.alpha.norm_sqr()).sum();
                ChannelSpec::new(params, list, gain, self.mode())
            }
            _ => Err(Error::Config("not a fixed channel".into())),
        }
    }

    fn pilot_config(&self, params: &FrameParams, sigma_p2: f64) -> PilotConfig {
        let c = PilotConfig::centered(params, sigma_p2);
        PilotConfig {
            l_p: self.pilot.l_p.unwrap_or(c.l_p),
            k_p: self.pilot.k_p.unwrap_or(c.k_p),
            sigma_p2,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub point: String,
    pub metric: String,
    pub value: f64,
    pub trials: u64,
    pub ci95: Option<f64>,
}

/// A failed trial and the seed that reproduces it.
#[derive(Debug, thiserror::Error)]
#[error("trial with seed {seed} failed: {source}")]
pub struct TrialError {
    pub seed: u64,
    #[source]
    pub source: Error,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(Error),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    seed ^ (((point as u64) << 32) | trial as u64)
}

fn run_trials<T, F>(seed: u64, point: usize, trials: usize, f: F) -> std::result::Result<Vec<T>, TrialError>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, point, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            f(&mut rng).map_err(|source| TrialError { seed: s, source })
        })
        .collect()
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}

fn snr_to_noise(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

struct Collector {
    id: String,
    records: Vec<ResultRecord>,
}

impl Collector {
    fn push(&mut self, point: &str, metric: &str, value: f64, trials: usize, ci95: Option<f64>) {
        self.records.push(ResultRecord {
            experiment: self.id.clone(),
            point: point.to_string(),
            metric: metric.to_string(),
            value,
            trials: trials as u64,
            ci95: if trials > 1 { Some(ci95.unwrap_or(0.0)) } else { None },
        });
    }

    fn mean(&mut self, point: &str, metric: &str, acc: &Accumulator) {
        self.push(point, metric, acc.mean, acc.count as usize, Some(acc.ci95()));
    }

    /// RMSE from accumulated squared errors, with a delta-method interval.
    fn rmse(&mut self, point: &str, metric: &str, acc: &Accumulator) {
        let r = acc.mean.sqrt();
        let ci = if r > 0.0 { acc.ci95() / (2.0 * r) } else { 0.0 };
        self.push(point, metric, r, acc.count as usize, Some(ci));
    }
}

/// Binomial order-statistic interval for a CCDF quantile.
fn quantile_ci(values: &[f64], prob: f64) -> f64 {
    let n = values.len() as f64;
    let spread = 1.96 * (prob * (1.0 - prob) / n).sqrt();
    let hi = ccdf_quantile(values, (prob - spread).max(1.0 / n));
    let lo = ccdf_quantile(values, (prob + spread).min(1.0));
    (hi - lo).abs() / 2.0
}

/// Executes a validated configuration and returns its records.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<Vec<ResultRecord>, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    let params = cfg.frame_params().map_err(RunError::Config)?;
    let alphabet = QamAlphabet::new(cfg.qam).map_err(RunError::Config)?;
    let mut out = Collector {
        id: cfg.id(),
        records: Vec::new(),
    };
    match cfg.experiment {
        ExperimentKind::Papr => run_papr(cfg, &params, &alphabet, &mut out)?,
        ExperimentKind::Oobe => run_oobe(cfg, &params, &alphabet, &mut out)?,
        ExperimentKind::Ber => run_ber(cfg, &params, &alphabet, &mut out)?,
        ExperimentKind::SenseActive | ExperimentKind::SensePassive => run_sense(cfg, &params, &alphabet, &mut out)?,
        ExperimentKind::PowerOpt => run_power(cfg, &params, &mut out)?,
    }
    for r in &out.records {
        if !r.value.is_finite() {
            return Err(RunError::Trial(TrialError {
                seed: cfg.seed,
                source: Error::Unsupported(format!("non-finite {} at {}", r.metric, r.point)),
            }));
        }
    }
    Ok(out.records)
}

/// PAPR of one oversampled, prefix-free frame in dB.
pub fn papr_trial<R: Rng + ?Sized>(
    kind: WaveformKind,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    pilot: Option<&PilotConfig>,
    rng: &mut R,
) -> Result<f64> {
    let bits = random_bits(rng, params.len() * alphabet.bits_per_symbol());
    let tx = modulate(kind, params, &bits, alphabet, pilot)?;
    papr_db(tx.oversampled(params.oversampling)?.samples())
}

fn pilot_for(cfg: &ExperimentConfig, params: &FrameParams, kind: WaveformKind, sigma_p2: f64) -> Option<PilotConfig> {
    (kind.is_otfs_family() && sigma_p2 > 0.0).then(|| cfg.pilot_config(params, sigma_p2))
}

fn run_papr(
    cfg: &ExperimentConfig,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    out: &mut Collector,
) -> std::result::Result<(), RunError> {
    let mut point = 0;
    for &sigma_p2 in &cfg.pilot.sigma_p2 {
        for &kind in &cfg.waveforms {
            let pilot = pilot_for(cfg, params, kind, sigma_p2);
            let values = run_trials(cfg.seed, point, cfg.trials, |rng| {
                papr_trial(kind, params, alphabet, pilot.as_ref(), rng)
            })?;
            point += 1;
            let label = format!("waveform={kind};sigma_p2={sigma_p2}");
            for (prob, name) in [(1e-1, "papr_db_ccdf_1e-1"), (1e-2, "papr_db_ccdf_1e-2"), (1e-3, "papr_db_ccdf_1e-3")] {
                if (values.len() as f64) * prob >= 1.0 {
                    out.push(&label, name, ccdf_quantile(&values, prob), values.len(), Some(quantile_ci(&values, prob)));
                }
            }
            out.mean(&label, "papr_db_mean", &values.iter().copied().collect());
            let eff_a: Accumulator = values.iter().map(|&v| pa_efficiency(v, &cfg.pa.class_a)).collect();
            let eff_b: Accumulator = values.iter().map(|&v| pa_efficiency(v, &cfg.pa.class_b)).collect();
            out.mean(&label, "pa_efficiency_class_a", &eff_a);
            out.mean(&label, "pa_efficiency_class_b", &eff_b);
        }
    }
    Ok(())
}

/// One oversampled frame with its prefix, ready for spectral estimation.
pub fn oobe_frame<R: Rng + ?Sized>(
    kind: WaveformKind,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    pilot: Option<&PilotConfig>,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let bits = random_bits(rng, params.len() * alphabet.bits_per_symbol());
    let tx = modulate(kind, params, &bits, alphabet, pilot)?;
    tx.oversampled_with_cp(params.oversampling)
}

fn run_oobe(
    cfg: &ExperimentConfig,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    out: &mut Collector,
) -> std::result::Result<(), RunError> {
    let o = &cfg.oobe;
    let l = params.oversampling;
    let mut point = 0;
    for &sigma_p2 in &cfg.pilot.sigma_p2 {
        for &kind in &cfg.waveforms {
            let pilot = pilot_for(cfg, params, kind, sigma_p2);
            let frames = run_trials(cfg.seed, point, cfg.trials, |rng| {
                oobe_frame(kind, params, alphabet, pilot.as_ref(), rng)
            })?;
            let first = trial_seed(cfg.seed, point, 0);
            let fail = |source| RunError::Trial(TrialError { seed: first, source });
            point += 1;
            let psd = oobe_psd(&frames, &o.welch).map_err(fail)?;
            let per_frame: Accumulator = frames
                .iter()
                .map(|f| {
                    welch_psd(f, &o.welch).map(|lin| {
                        let db: Vec<f64> = lin.iter().map(|v| 10.0 * v.max(1e-300).log10()).collect();
                        band_edge_level(&db, params.m, l, o.edge_lo, o.edge_hi)
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(fail)?
                .into_iter()
                .collect();
            let label = format!("waveform={kind};sigma_p2={sigma_p2}");
            let level = band_edge_level(&psd, params.m, l, o.edge_lo, o.edge_hi);
            out.push(&label, "band_edge_db", level, frames.len(), Some(per_frame.ci95()));
        }
    }
    Ok(())
}

/// Outcome of one iterative-receiver frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerTrial {
    pub errors: usize,
    pub bits: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Sends one DFT-s-OTFS frame through `spec` and runs the iterative receiver.
pub fn ber_trial<R: Rng + ?Sized>(
    params: &FrameParams,
    alphabet: &QamAlphabet,
    pilot: &PilotConfig,
    spec: &ChannelSpec,
    sigma_w2: f64,
    det: &DetectorConfig,
    rng: &mut R,
) -> Result<BerTrial> {
    let bits = random_bits(rng, params.len() * alphabet.bits_per_symbol());
    let tx = modulate(WaveformKind::DftSOtfs, params, &bits, alphabet, Some(pilot))?;
    let mut r = propagate(&tx, spec)?;
    add_awgn_in_place(&mut r, sigma_w2, rng)?;
    let outcome = iterative_ce_dd(params, &r, &tx.pilot_dd, alphabet, det)?;
    let rx = qam_demap(&outcome.symbols, alphabet, tx.sigma_d2);
    Ok(BerTrial {
        errors: bit_errors(&bits, &rx),
        bits: bits.len(),
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

fn draw_channel<R: Rng + ?Sized>(cfg: &ExperimentConfig, params: &FrameParams, set: usize, rng: &mut R) -> Result<ChannelSpec> {
    match &cfg.channel {
        ChannelConfig::Random { .. } => ChannelSpec::random(params, &cfg.random_channel(params)?, cfg.mode(), rng),
        ChannelConfig::Paths { .. } => cfg.fixed_spec(params),
        ChannelConfig::Geometry { sigma_h2, .. } => {
            let geo = cfg.geometry_paths(params, set)?;
            let amp = (sigma_h2 / geo.len() as f64).sqrt();
            let paths = geo
                .into_iter()
                .map(|(tau, nu)| PathParams::new(Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI)), tau, nu))
                .collect();
            ChannelSpec::new(params, paths, *sigma_h2, cfg.mode())
        }
    }
}

fn detector_config(cfg: &ExperimentConfig, paths: usize, sigma_d2: f64, sigma_w2: f64) -> DetectorConfig {
    let d = &cfg.detector;
    let mut det = DetectorConfig::new(paths, sigma_d2, d.lambda.unwrap_or(sigma_w2));
    det.cg.tol = d.tol;
    det.cg.max_iters = d.max_iters;
    det.max_outer = d.max_outer;
    det.tpe = TpeConfig {
        mode: cfg.mode(),
        ..d.tpe
    };
    det
}

fn channel_paths(cfg: &ExperimentConfig, set: usize) -> usize {
    match &cfg.channel {
        ChannelConfig::Random { paths, .. } => *paths,
        ChannelConfig::Geometry { target_sets, .. } => target_sets[set].len(),
        ChannelConfig::Paths { paths } => paths.len(),
    }
}

fn run_ber(
    cfg: &ExperimentConfig,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    out: &mut Collector,
) -> std::result::Result<(), RunError> {
    let sets = match &cfg.channel {
        ChannelConfig::Geometry { target_sets, .. } => target_sets.len(),
        _ => 1,
    };
    let mut point = 0;
    for set in 0..sets {
        for &sigma_p2 in &cfg.pilot.sigma_p2 {
            let pilot = cfg.pilot_config(params, sigma_p2);
            for &snr in &cfg.snr_db {
                let sigma_w2 = snr_to_noise(snr);
                let det = detector_config(cfg, channel_paths(cfg, set), 1.0 - sigma_p2, sigma_w2);
                let trials = run_trials(cfg.seed, point, cfg.trials, |rng| {
                    let spec = draw_channel(cfg, params, set, rng)?;
                    ber_trial(params, alphabet, &pilot, &spec, sigma_w2, &det, rng)
                })?;
                point += 1;
                let mut errors = ErrorCounter::default();
                let mut iters = Accumulator::new();
                let mut conv = Accumulator::new();
                let mut fast = Accumulator::new();
                for t in &trials {
                    errors.add(t.errors, t.bits);
                    iters.push(t.iterations as f64);
                    conv.push(if t.converged { 1.0 } else { 0.0 });
                    fast.push(if t.converged && t.iterations <= 5 { 1.0 } else { 0.0 });
                }
                let label = if sets > 1 {
                    format!("targets={set};sigma_p2={sigma_p2};snr_db={snr}")
                } else {
                    format!("sigma_p2={sigma_p2};snr_db={snr}")
                };
                out.push(&label, "ber", errors.rate(), trials.len(), Some(errors.ci95()));
                out.push(&label, "bits", errors.total as f64, trials.len(), Some(0.0));
                out.mean(&label, "iterations_mean", &iters);
                out.mean(&label, "converged_rate", &conv);
                out.mean(&label, "converged_within_5_rate", &fast);
            }
        }
    }
    Ok(())
}

/// Squared range and velocity errors of one sensing trial, averaged over
/// targets, plus bit errors for passive runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenseTrial {
    pub range_sq: f64,
    pub velocity_sq: f64,
    pub errors: usize,
    pub bits: usize,
}

/// Active sensing: the transmitter knows its own frame.
#[allow(clippy::too_many_arguments)]
pub fn active_sense_trial<R: Rng + ?Sized>(
    kind: WaveformKind,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    pilot: Option<&PilotConfig>,
    spec: &ChannelSpec,
    sigma_w2: f64,
    sensing: &SensingSettings,
    rng: &mut R,
) -> Result<SenseTrial> {
    let bits = random_bits(rng, params.len() * alphabet.bits_per_symbol());
    let tx = modulate(kind, params, &bits, alphabet, pilot)?;
    let mut r = propagate(&tx, spec)?;
    add_awgn_in_place(&mut r, sigma_w2, rng)?;
    let tpe = TpeConfig {
        mode: spec.mode,
        ..sensing.tpe
    };
    let est = sense_with(&tx, &r, spec.paths.len(), &tpe, sensing.ofdm_regularizer * sigma_w2)?;
    score(params, spec, &est, 0, 0)
}

/// Passive sensing: the receiver estimates the channel with the iterative
/// receiver and unknown data.
pub fn passive_sense_trial<R: Rng + ?Sized>(
    params: &FrameParams,
    alphabet: &QamAlphabet,
    pilot: &PilotConfig,
    spec: &ChannelSpec,
    sigma_w2: f64,
    det: &DetectorConfig,
    rng: &mut R,
) -> Result<SenseTrial> {
    let bits = random_bits(rng, params.len() * alphabet.bits_per_symbol());
    let tx = modulate(WaveformKind::DftSOtfs, params, &bits, alphabet, Some(pilot))?;
    let mut r = propagate(&tx, spec)?;
    add_awgn_in_place(&mut r, sigma_w2, rng)?;
    let outcome = iterative_ce_dd(params, &r, &tx.pilot_dd, alphabet, det)?;
    let rx = qam_demap(&outcome.symbols, alphabet, tx.sigma_d2);
    score(params, spec, &outcome.estimate, bit_errors(&bits, &rx), bits.len())
}

fn score(
    params: &FrameParams,
    spec: &ChannelSpec,
    est: &crate::sensing::EstimationResult,
    errors: usize,
    bits: usize,
) -> Result<SenseTrial> {
    let f = match spec.mode {
        SensingMode::Active => 2.0,
        SensingMode::Passive => 1.0,
    };
    let truth_r: Vec<f64> = spec.paths.iter().map(|p| p.tau * SPEED_OF_LIGHT / f).collect();
    let truth_v: Vec<f64> = spec.paths.iter().map(|p| p.nu * SPEED_OF_LIGHT / (f * params.f_c)).collect();
    let (range_sq, velocity_sq) = paired_squared_errors(&truth_r, &est.ranges(), &truth_v, &est.velocities())?;
    Ok(SenseTrial {
        range_sq,
        velocity_sq,
        errors,
        bits,
    })
}

fn run_sense(
    cfg: &ExperimentConfig,
    params: &FrameParams,
    alphabet: &QamAlphabet,
    out: &mut Collector,
) -> std::result::Result<(), RunError> {
    let sets = match &cfg.channel {
        ChannelConfig::Geometry { target_sets, .. } => target_sets.len(),
        _ => 1,
    };
    let passive = cfg.experiment == ExperimentKind::SensePassive;
    let mut point = 0;
    for set in 0..sets {
        for &kind in &cfg.waveforms {
            for &sigma_p2 in &cfg.pilot.sigma_p2 {
                for &snr in &cfg.snr_db {
                    let sigma_w2 = snr_to_noise(snr);
                    let pilot = pilot_for(cfg, params, kind, sigma_p2);
                    let det = detector_config(cfg, channel_paths(cfg, set), 1.0 - sigma_p2, sigma_w2);
                    let trials = run_trials(cfg.seed, point, cfg.trials, |rng| {
                        let spec = draw_channel(cfg, params, set, rng)?;
                        if passive {
                            let p = pilot.as_ref().ok_or(Error::NoPilot)?;
                            passive_sense_trial(params, alphabet, p, &spec, sigma_w2, &det, rng)
                        } else {
                            active_sense_trial(kind, params, alphabet, pilot.as_ref(), &spec, sigma_w2, &cfg.sensing, rng)
                        }
                    })?;
                    point += 1;
                    let label = format!("targets={set};waveform={kind};sigma_p2={sigma_p2};snr_db={snr}");
                    let r: Accumulator = trials.iter().map(|t| t.range_sq).collect();
                    let v: Accumulator = trials.iter().map(|t| t.velocity_sq).collect();
                    out.rmse(&label, "range_rmse_m", &r);
                    out.rmse(&label, "velocity_rmse_mps", &v);
                    if passive {
                        let mut e = ErrorCounter::default();
                        for t in &trials {
                            e.add(t.errors, t.bits);
                        }
                        out.push(&label, "ber", e.rate(), trials.len(), Some(e.ci95()));
                    }
                }
            }
        }
    }
    Ok(())
}

fn run_power(cfg: &ExperimentConfig, params: &FrameParams, out: &mut Collector) -> std::result::Result<(), RunError> {
    let pw = &cfg.power;
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let alloc = optimize_pilot_power(pw.sigma_h2, snr_to_noise(snr), pw.paths, params.m, params.n).map_err(|source| {
            RunError::Trial(TrialError {
                seed: trial_seed(cfg.seed, i, 0),
                source,
            })
        })?;
        let label = format!("paths={};snr_db={snr}", pw.paths);
        out.push(&label, "sigma_p2_opt", alloc.sigma_p2, 1, None);
        out.push(&label, "sinr_db", 10.0 * alloc.sinr.log10(), 1, None);
    }
    Ok(())
}

/// CSV text with a header row and LF line endings.
pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut s = String::from("experiment,point,metric,value,trials,ci95\n");
    for r in records {
        let ci = r.ci95.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{}", r.experiment, r.point, r.metric, r.value, r.trials, ci);
    }
    s
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    records: &'a [ResultRecord],
}

/// JSON summary mirroring the configuration and aggregate metrics.
pub fn to_json(cfg: &ExperimentConfig, records: &[ResultRecord]) -> String {
    let mut s = serde_json::to_string_pretty(&Summary { config: cfg, records }).expect("records serialize");
    s.push('\n');
    s
}

/// Runs `cfg` on `threads` workers (all cores when `None`) and writes
/// `<id>.csv` and `<id>.json` under `out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> std::result::Result<PathBuf, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::Config(Error::Config(format!("threads: {e}"))))?;
    let records = pool.install(|| run_experiment(cfg))?;
    fs::create_dir_all(out_dir)?;
    let csv = out_dir.join(format!("{}.csv", cfg.id()));
    fs::write(&csv, to_csv(&records))?;
    fs::write(out_dir.join(format!("{}.json", cfg.id())), to_json(cfg, &records))?;
    Ok(csv)
}

pub const RECIPES: [&str; 9] = [
    "fig5_papr",
    "fig6_pa_eff",
    "fig7_oobe",
    "fig8_ber140",
    "fig9_power_opt",
    "fig10_ber300",
    "fig11_range_rmse",
    "fig12_velocity_rmse",
    "fig13_passive",
];

pub fn list_recipes() -> &'static [&'static str] {
    &RECIPES
}

fn base(id: &str, experiment: ExperimentKind, m: usize, n: usize, delta_f: f64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        id: Some(id.to_string()),
        experiment,
        frame: FrameConfig {
            m,
            n,
            delta_f,
            cp_len: None,
            f_c: default_carrier(),
            oversampling: default_oversampling(),
        },
        waveforms: WaveformKind::ALL.to_vec(),
        qam: 4,
        pilot: PilotSweep::default(),
        channel: ChannelConfig::default(),
        snr_db: Vec::new(),
        trials,
        seed: 1,
        output: None,
        sensing: SensingSettings::default(),
        detector: DetectorSettings::default(),
        oobe: OobeSettings::default(),
        pa: PaSettings::default(),
        power: PowerSettings::default(),
    }
}

fn fine_sensing() -> SensingSettings {
    SensingSettings {
        tpe: TpeConfig {
            resolution_divisor: 2000.0,
            ..TpeConfig::default()
        },
        ..SensingSettings::default()
    }
}

fn kmh(v: f64) -> f64 {
    v / 3.6
}

/// Built-in desk-scale configuration for a figure.
pub fn recipe(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "fig5_papr" => {
            let mut c = base(name, ExperimentKind::Papr, 64, 16, 15e3, 20_000);
            c.frame.cp_len = Some(0);
            c
        }
        "fig6_pa_eff" => {
            let mut c = base(name, ExperimentKind::Papr, 64, 16, 15e3, 20_000);
            c.frame.cp_len = Some(0);
            c.waveforms = vec![WaveformKind::Otfs, WaveformKind::DftSOtfs];
            c
        }
        "fig7_oobe" => {
            let mut c = base(name, ExperimentKind::Oobe, 128, 32, 15e3, 40);
            c.frame.cp_len = Some(8);
            c
        }
        "fig8_ber140" | "fig10_ber300" => {
            let mut c = base(name, ExperimentKind::Ber, 64, 16, 1.92e6, 20);
            c.waveforms = vec![WaveformKind::DftSOtfs];
            c.pilot.sigma_p2 = vec![0.02, 0.06];
            c.snr_db = vec![6.0, 9.0, 12.0, 15.0, 18.0];
            let (f_c, speed) = if name == "fig8_ber140" { (0.14e12, 0.0) } else { (0.3e12, 500.0) };
            c.frame.f_c = f_c;
            c.channel = ChannelConfig::Random {
                paths: 3,
                sigma_h2: 1.0,
                tau_max_bins: 8.0,
                speed_kmh: speed,
                on_grid: false,
            };
            c
        }
        "fig9_power_opt" => {
            let mut c = base(name, ExperimentKind::PowerOpt, 128, 32, 1.92e6, 1);
            c.waveforms = vec![WaveformKind::DftSOtfs];
            c.snr_db = (0..=30).map(|s| s as f64).collect();
            c
        }
        "fig11_range_rmse" | "fig12_velocity_rmse" => {
            let mut c = base(name, ExperimentKind::SenseActive, 64, 16, 480e3, 30);
            c.snr_db = vec![0.0, 10.0, 20.0];
            c.channel = ChannelConfig::Geometry {
                target_sets: vec![
                    vec![Target {
                        range: 10.0,
                        velocity: kmh(30.0),
                    }],
                    vec![Target {
                        range: 10.0,
                        velocity: kmh(300.0),
                    }],
                ],
                sigma_h2: 1.0,
            };
            c.sensing = fine_sensing();
            c
        }
        "fig13_passive" => {
            let mut c = base(name, ExperimentKind::SensePassive, 64, 16, 1.92e6, 20);
            c.waveforms = vec![WaveformKind::DftSOtfs];
            c.pilot.sigma_p2 = vec![0.06];
            c.snr_db = vec![0.0, 10.0, 20.0];
            c.channel = ChannelConfig::Geometry {
                target_sets: vec![vec![
                    Target {
                        range: 10.0,
                        velocity: 10.0,
                    },
                    Target {
                        range: 30.0,
                        velocity: 20.0,
                    },
                    Target {
                        range: 50.0,
                        velocity: 30.0,
                    },
                ]],
                sigma_h2: 1.0,
            };
            c.detector.tpe.resolution_divisor = 2000.0;
            c
        }
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_validates() {
        assert_eq!(list_recipes().len(), 9);
        assert!(list_recipes().contains(&"fig5_papr"));
        for name in list_recipes() {
            let cfg = recipe(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(recipe("fig99").is_none());
    }

    #[test]
    fn short_prefix_is_flagged() {
        for name in list_recipes() {
            assert_eq!(recipe(name).unwrap().prefix_warning(), None, "{name}");
        }
        let mut cfg = recipe("fig11_range_rmse").unwrap();
        cfg.frame.cp_len = Some(0);
        assert!(cfg.prefix_warning().unwrap().contains("cp_len is 0"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "experiment = \"papr\"\ntrials = 2\ntrails = 3\n[frame]\nm = 8\nn = 4\ndelta_f = 1e3\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
        let text = "experiment = \"papr\"\ntrials = 0\n[frame]\nm = 8\nn = 4\ndelta_f = 1e3\n";
        assert!(ExperimentConfig::from_toml(text).unwrap_err().to_string().contains("trials"));
    }

    #[test]
    fn papr_run_is_deterministic_across_thread_counts() {
        let mut cfg = recipe("fig5_papr").unwrap();
        cfg.trials = 64;
        cfg.frame.m = 16;
        cfg.frame.n = 4;
        let dir = tempfile::tempdir().unwrap();
        let a = run_to_dir(&cfg, &dir.path().join("a"), Some(1)).unwrap();
        let b = run_to_dir(&cfg, &dir.path().join("b"), Some(4)).unwrap();
        let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("experiment,point,metric,value,trials,ci95\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn noiseless_ber_is_zero() {
        let mut cfg = recipe("fig8_ber140").unwrap();
        cfg.trials = 4;
        cfg.snr_db = vec![300.0];
        cfg.pilot.sigma_p2 = vec![0.06];
        cfg.channel = ChannelConfig::Paths {
            paths: vec![PathEntry {
                gain: [1.0, 0.0],
                tau_bins: 2.4,
                nu_bins: 1.3,
            }],
        };
        cfg.detector.lambda = Some(0.0);
        let records = run_experiment(&cfg).unwrap();
        let bers: Vec<f64> = records.iter().filter(|r| r.metric == "ber").map(|r| r.value).collect();
        assert_eq!(bers.len(), 1);
        assert!(bers.iter().all(|&b| b == 0.0), "{bers:?}");
    }

    #[test]
    fn power_opt_has_no_interval_for_single_trials() {
        let records = run_experiment(&recipe("fig9_power_opt").unwrap()).unwrap();
        assert_eq!(records.len(), 62);
        assert!(records.iter().all(|r| r.ci95.is_none()));
        let csv = to_csv(&records);
        assert!(csv.lines().nth(1).unwrap().ends_with(",1,"));
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let mut cfg = recipe("fig8_ber140").unwrap();
        cfg.waveforms = vec![WaveformKind::Ofdm];
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
