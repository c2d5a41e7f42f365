//! Loss sweeps with per-point amplitude optimization, and their CSV/JSON
//! output.
//!
//! A sweep evaluates the optimized key rate at evenly spaced party-to-party
//! losses, once per dark-count probability. Points are evaluated by a worker
//! pool; rows always come back in loss order and, because every reduction
//! in the pipeline is order-fixed, the numbers do not depend on the worker
//! count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::keyrate::{optimize_model, KeyRatePoint, RateModel, SearchSpec, YieldMode};
use crate::params::{
    min_layers, misalignment_angle, ProtocolParams, DEFAULT_CUTOFF, DEFAULT_DECOYS,
    DEFAULT_MISALIGNMENT,
};
use crate::quadrature::QuadratureSpec;

/// Party-to-relay transmittance for a party-to-party loss in dB: the loss
/// between two parties spans two party-to-relay links, `eta^2`.
pub fn db_to_eta(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0 && loss_db.is_finite()) {
        return Err(domain(format!(
            "loss must be finite and >= 0 dB, got {loss_db}"
        )));
    }
    Ok(10f64.powf(-loss_db / 20.0))
}

/// Inverse of [`db_to_eta`].
pub fn eta_to_db(eta: f64) -> f64 {
    -20.0 * eta.log10()
}

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; expected csv or json"
            ))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// Everything a sweep depends on.
///
/// The file form is flat `key = value` text (TOML syntax) using the field
/// names below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub parties: usize,
    /// Relay layer count `s` (`M = 2^s` detectors); the smallest network
    /// that fits the parties when absent.
    pub modes_exp: Option<u32>,
    /// Party-to-party loss range in dB, both ends included.
    pub loss_start: f64,
    pub loss_stop: f64,
    pub loss_step: f64,
    /// One sweep per entry.
    pub dark_counts: Vec<f64>,
    /// Misalignment fraction `sin^2` of both the polarization and phase
    /// offsets.
    pub misalignment: f64,
    pub decoy_high: f64,
    pub decoy_low: f64,
    pub cutoff: u32,
    pub mode: YieldMode,
    /// Trapezoidal nodes per phase for the gain integrals.
    pub quad_nodes: usize,
    /// Seed of the Monte Carlo fallback for high-dimensional gains.
    pub seed: u64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let search = SearchSpec::default();
        Self {
            parties: 3,
            modes_exp: None,
            loss_start: 10.0,
            loss_stop: 100.0,
            loss_step: 1.0,
            dark_counts: vec![1e-8, 1e-9, 1e-10],
            misalignment: DEFAULT_MISALIGNMENT,
            decoy_high: DEFAULT_DECOYS.0,
            decoy_low: DEFAULT_DECOYS.1,
            cutoff: DEFAULT_CUTOFF,
            mode: YieldMode::ExactYields,
            quad_nodes: QuadratureSpec::default().nodes,
            seed: QuadratureSpec::default().seed,
            alpha_min: search.alpha_min,
            alpha_max: search.alpha_max,
            alpha_points: search.points,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

impl SweepConfig {
    /// Parses the flat key-value form; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The flat key-value form of this configuration.
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.loss_step > 0.0 && self.loss_step.is_finite()) {
            return bad(format!(
                "loss_step must be positive, got {}",
                self.loss_step
            ));
        }
        if !(self.loss_start >= 0.0 && self.loss_start.is_finite() && self.loss_stop.is_finite()) {
            return bad(format!(
                "loss_start must be finite and >= 0, got {}",
                self.loss_start
            ));
        }
        if self.loss_stop < self.loss_start {
            return bad(format!(
                "empty loss range: stop {} is below start {}",
                self.loss_stop, self.loss_start
            ));
        }
        if self.dark_counts.is_empty() {
            return bad("dark_counts is empty".into());
        }
        if !(0.0..=1.0).contains(&self.misalignment) {
            return bad(format!(
                "misalignment must lie in [0, 1], got {}",
                self.misalignment
            ));
        }
        if self.quad_nodes < 2 {
            return bad("quad_nodes must be at least 2".into());
        }
        for &pd in &self.dark_counts {
            self.params(pd)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.quadrature()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.search()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Loss values of the sweep, in increasing order.
    pub fn loss_points(&self) -> Vec<f64> {
        // tolerate rounding in (stop - start) / step
        let count =
            ((self.loss_stop - self.loss_start) / self.loss_step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.loss_start + self.loss_step * i as f64)
            .collect()
    }

    /// Protocol parameters at dark-count probability `p_dark`, before the
    /// channel transmittance is set.
    pub fn params(&self, p_dark: f64) -> ProtocolParams {
        let angle = misalignment_angle(self.misalignment);
        ProtocolParams::new(self.parties)
            .with_layers(self.modes_exp.unwrap_or_else(|| min_layers(self.parties)))
            .with_dark_count(p_dark)
            .with_misalignment(angle, angle)
            .with_decoys(self.decoy_high, self.decoy_low)
            .with_cutoff(self.cutoff)
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            nodes: self.quad_nodes,
            max_nodes: QuadratureSpec::default().max_nodes.max(self.quad_nodes),
            seed: self.seed,
            ..QuadratureSpec::default()
        }
    }

    pub fn search(&self) -> SearchSpec {
        SearchSpec {
            points: self.alpha_points,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            ..SearchSpec::default()
        }
    }
}

/// Outcome of one loss point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    /// No amplitude gives a positive rate.
    NoKey,
    /// The point could not be evaluated.
    Failed(String),
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ok => f.write_str("ok"),
            Self::NoKey => f.write_str("no-key"),
            Self::Failed(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl FromStr for PointStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Self::Ok),
            "no-key" => Ok(Self::NoKey),
            _ => s
                .strip_prefix("error: ")
                .map(|m| Self::Failed(m.to_owned()))
                .ok_or_else(|| Error::Config(format!("unknown point status {s:?}"))),
        }
    }
}

impl Serialize for PointStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PointStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One output row. Quantities that could not be computed are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(with = "sig12")]
    pub loss_db: f64,
    #[serde(with = "sig12")]
    pub eta: f64,
    #[serde(with = "sig12")]
    pub alpha_opt: f64,
    #[serde(with = "sig12")]
    pub pr_kg: f64,
    #[serde(with = "sig12")]
    pub qber: f64,
    #[serde(with = "sig12")]
    pub qz_bar: f64,
    #[serde(with = "sig12")]
    pub rate: f64,
    #[serde(with = "sig12")]
    pub r1: f64,
    #[serde(with = "sig12")]
    pub r2: f64,
    pub status: PointStatus,
}

impl SweepRow {
    fn from_point(loss_db: f64, point: &KeyRatePoint) -> Self {
        Self {
            loss_db,
            eta: point.eta,
            alpha_opt: point.alpha_opt,
            pr_kg: point.pr_kg,
            qber: point.q_x,
            qz_bar: point.q_z_bar,
            rate: point.rate,
            r1: point.r1,
            r2: point.r2,
            status: if point.no_key {
                PointStatus::NoKey
            } else {
                PointStatus::Ok
            },
        }
    }

    fn failed(loss_db: f64, eta: f64, err: &Error) -> Self {
        Self {
            loss_db,
            eta,
            alpha_opt: f64::NAN,
            pr_kg: f64::NAN,
            qber: f64::NAN,
            qz_bar: f64::NAN,
            rate: f64::NAN,
            r1: f64::NAN,
            r2: f64::NAN,
            status: PointStatus::Failed(err.to_string()),
        }
    }
}

/// Where a result came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    /// Dark-count probability of this sweep.
    #[serde(with = "sig12")]
    pub dark_count: f64,
    pub config: SweepConfig,
}

/// One sweep at a single dark-count probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub provenance: Provenance,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn has_failures(&self) -> bool {
        self.rows
            .iter()
            .any(|r| matches!(r.status, PointStatus::Failed(_)))
    }
}

fn evaluate_point(cfg: &SweepConfig, p_dark: f64, loss_db: f64) -> SweepRow {
    let eta = match db_to_eta(loss_db) {
        Ok(eta) => eta,
        Err(e) => return SweepRow::failed(loss_db, f64::NAN, &e),
    };
    let p = cfg.params(p_dark).with_eta(eta);
    let result = RateModel::new(&p, cfg.mode, &cfg.quadrature())
        .and_then(|model| optimize_model(&model, &cfg.search()));
    match result {
        Ok((_, point)) => SweepRow::from_point(loss_db, &point),
        Err(e) => {
            log::warn!("{loss_db} dB, p_d = {p_dark:e}: {e}");
            SweepRow::failed(loss_db, eta, &e)
        }
    }
}

/// Runs the sweep once per configured dark-count probability, on
/// `workers` threads (0 picks one per core).
///
/// Configuration errors are returned before any computation; failures at
/// individual points are recorded in their rows.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let losses = cfg.loss_points();
    Ok(pool.install(|| {
        cfg.dark_counts
            .iter()
            .map(|&pd| {
                let rows = losses
                    .par_iter()
                    .map(|&db| evaluate_point(cfg, pd, db))
                    .collect();
                SweepResult {
                    provenance: Provenance {
                        version: env!("CARGO_PKG_VERSION").to_owned(),
                        seed: cfg.seed,
                        dark_count: pd,
                        config: cfg.clone(),
                    },
                    rows,
                }
            })
            .collect()
    }))
}

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 10] = [
    "loss_db",
    "eta",
    "alpha_opt",
    "pr_kg",
    "qber",
    "qz_bar",
    "rate",
    "r1",
    "r2",
    "status",
];

fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// Renders a result in the given format. Numbers carry 12 significant
/// digits.
pub fn render(result: &SweepResult, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| Error::Config(format!("CSV encoding failed: {e}"));
            w.write_record(CSV_COLUMNS).map_err(fail)?;
            for r in &result.rows {
                let numbers = [
                    r.loss_db,
                    r.eta,
                    r.alpha_opt,
                    r.pr_kg,
                    r.qber,
                    r.qz_bar,
                    r.rate,
                    r.r1,
                    r.r2,
                ];
                let mut record: Vec<String> = numbers.iter().map(|&x| format_number(x)).collect();
                record.push(r.status.to_string());
                w.write_record(&record).map_err(fail)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Config(format!("CSV encoding failed: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
        }
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(result)
                .map_err(|e| Error::Config(format!("JSON encoding failed: {e}")))?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Writes a result to `path`.
pub fn emit(result: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    let text = render(result, format)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Reads back a JSON result.
pub fn read_json(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// File name for the sweep at `p_dark` when a run covers several
/// dark-count probabilities: `<stem>_pd<value>.<ext>`.
pub fn output_path_for(base: &Path, p_dark: f64) -> PathBuf {
    let stem = base
        .file_stem()
        .map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    let mut name = format!("{stem}_pd{p_dark:e}");
    if let Some(ext) = base.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    base.with_file_name(name)
}

/// Serializes floats rounded to 12 significant digits; non-finite values
/// become the strings `"inf"`, `"-inf"` and `"NaN"`.
mod sig12 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::math::round_sig12;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(round_sig12(*x))
        } else {
            s.collect_str(x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| de::Error::custom(format!("not a number: {t:?}"))),
        }
    }
}
