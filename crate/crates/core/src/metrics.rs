//! Trial records, the five objective measures, and per-mode summaries.
//!
//! Quartiles use linear interpolation between order statistics (the
//! `(n - 1) p` rule, as in spreadsheet `QUARTILE.INC`). Standard deviation is
//! the sample form with `n - 1`; a single value reports 0.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::modes::NavMode;
use crate::user::UserCommand;
use crate::vehicle::{normalize_angle, Pose2D, VelocityCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EndReason {
    Goal,
    Timeout,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub pose: Pose2D,
    pub cmd: VelocityCommand,
    pub user: UserCommand,
    pub in_collision: bool,
    pub theta: f64,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mode: NavMode,
    pub scenario_name: String,
    /// Scripted profile name, or `live` for queued commands.
    pub profile: String,
    pub seed: u64,
    #[serde(default)]
    pub repetition: u32,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub completed: bool,
    pub end_reason: EndReason,
    /// Every queued command the session consumed, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_log: Vec<UserCommand>,
}

impl TrialRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// A measure value, or a marker that the trial is excluded from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measure {
    Value(f64),
    Excluded,
}

impl Measure {
    pub fn value(&self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(*v),
            Measure::Excluded => None,
        }
    }

    pub fn is_excluded(&self) -> bool {
        matches!(self, Measure::Excluded)
    }
}

/// Last timestamp minus first; incomplete trials are excluded.
pub fn completion_time(rec: &TrialRecord) -> Measure {
    match (rec.completed, rec.samples.first(), rec.samples.last()) {
        (true, Some(a), Some(b)) => Measure::Value(b.t - a.t),
        _ => Measure::Excluded,
    }
}

/// Path length over the recorded positions; incomplete trials are excluded.
pub fn trajectory_length(rec: &TrialRecord) -> Measure {
    if !rec.completed {
        return Measure::Excluded;
    }
    Measure::Value(path_length(rec.samples.iter().map(|s| (s.pose.x, s.pose.y))))
}

pub fn path_length(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for p in points {
        if let Some(q) = prev {
            total += (p.0 - q.0).hypot(p.1 - q.1);
        }
        prev = Some(p);
    }
    total
}

/// Sum of wrapped absolute heading changes. Kept for every trial.
pub fn cumulative_angle_difference(rec: &TrialRecord) -> f64 {
    heading_change(rec.samples.iter().map(|s| s.pose.theta))
}

pub fn heading_change(headings: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for h in headings {
        if let Some(p) = prev {
            total += normalize_angle(h - p).abs();
        }
        prev = Some(h);
    }
    total
}

/// Percentage of samples with an active joystick command. Not defined for
/// autonomous trials.
pub fn control_percentage(rec: &TrialRecord) -> Measure {
    if rec.mode == NavMode::Autonomous || rec.samples.is_empty() {
        return Measure::Excluded;
    }
    let active = rec.samples.iter().filter(|s| s.user.active).count();
    Measure::Value(100.0 * active as f64 / rec.samples.len() as f64)
}

/// Number of false-to-true transitions of the collision flag. A trial that
/// starts in contact counts that contact once.
pub fn count_collisions(rec: &TrialRecord) -> usize {
    rising_edges(rec.samples.iter().map(|s| s.in_collision))
}

pub fn rising_edges(flags: impl IntoIterator<Item = bool>) -> usize {
    let mut prev = false;
    let mut n = 0;
    for f in flags {
        if f && !prev {
            n += 1;
        }
        prev = f;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub completion_time: Measure,
    pub trajectory_length: Measure,
    pub cumulative_angle_difference: f64,
    pub control_percentage: Measure,
    pub collisions: usize,
    pub completed: bool,
    pub end_reason: EndReason,
}

impl TrialMetrics {
    pub fn of(rec: &TrialRecord) -> Self {
        Self {
            completion_time: completion_time(rec),
            trajectory_length: trajectory_length(rec),
            cumulative_angle_difference: cumulative_angle_difference(rec),
            control_percentage: control_percentage(rec),
            collisions: count_collisions(rec),
            completed: rec.completed,
            end_reason: rec.end_reason,
        }
    }

    pub fn get(&self, m: MeasureKind) -> Measure {
        match m {
            MeasureKind::CompletionTime => self.completion_time,
            MeasureKind::TrajectoryLength => self.trajectory_length,
            MeasureKind::CumulativeAngleDifference => Measure::Value(self.cumulative_angle_difference),
            MeasureKind::ControlPercentage => self.control_percentage,
            MeasureKind::Collisions => Measure::Value(self.collisions as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    CompletionTime,
    TrajectoryLength,
    CumulativeAngleDifference,
    ControlPercentage,
    Collisions,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::CompletionTime,
        MeasureKind::TrajectoryLength,
        MeasureKind::CumulativeAngleDifference,
        MeasureKind::ControlPercentage,
        MeasureKind::Collisions,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureKind::CompletionTime => "completion_time",
            MeasureKind::TrajectoryLength => "trajectory_length",
            MeasureKind::CumulativeAngleDifference => "cumulative_angle_difference",
            MeasureKind::ControlPercentage => "control_percentage",
            MeasureKind::Collisions => "collisions",
        }
    }

    /// Counts are summarized by median and IQR rather than mean and SD.
    pub fn is_ordinal(&self) -> bool {
        matches!(self, MeasureKind::Collisions)
    }

    fn label(&self) -> &'static str {
        match self {
            MeasureKind::CompletionTime => "Completion time (s)",
            MeasureKind::TrajectoryLength => "Trajectory length (m)",
            MeasureKind::CumulativeAngleDifference => "Cumulative angle difference (rad)",
            MeasureKind::ControlPercentage => "Control percentage (%)",
            MeasureKind::Collisions => "Collisions",
        }
    }
}

/// Descriptive statistics of one measure within one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub excluded: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub median: Option<f64>,
    pub iqr: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64], excluded: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                excluded,
                mean: None,
                sd: None,
                median: None,
                iqr: None,
                min: None,
                max: None,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            excluded,
            mean: Some(mean),
            sd: Some(sd),
            median: Some(quantile(&sorted, 0.5)),
            iqr: Some(quantile(&sorted, 0.75) - quantile(&sorted, 0.25)),
            min: Some(sorted[0]),
            max: Some(sorted[n - 1]),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: NavMode,
    pub trials: usize,
    pub completed: usize,
    pub measures: Vec<(MeasureKind, Stats)>,
}

impl ModeSummary {
    pub fn stats(&self, m: MeasureKind) -> &Stats {
        &self
            .measures
            .iter()
            .find(|(k, _)| *k == m)
            .expect("every measure is summarized")
            .1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub modes: Vec<ModeSummary>,
}

impl MetricsSummary {
    pub fn mode(&self, mode: NavMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// CSV with one row per (mode, measure).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mode", "measure", "n", "mean", "sd", "median", "iqr", "min", "max"])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.modes {
            for (kind, s) in &m.measures {
                w.write_record([
                    m.mode.as_str().to_string(),
                    kind.as_str().to_string(),
                    s.n.to_string(),
                    cell(s.mean),
                    cell(s.sd),
                    cell(s.median),
                    cell(s.iqr),
                    cell(s.min),
                    cell(s.max),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plain-text table: mean ± SD for continuous measures, median ± IQR for
    /// counts, one column per mode.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<36}", "Measure");
        for m in &self.modes {
            let _ = write!(out, "{:>22}", format!("{} (n={})", m.mode, m.trials));
        }
        out.push('\n');
        for kind in MeasureKind::ALL {
            let _ = write!(out, "{:<36}", kind.label());
            for m in &self.modes {
                let s = m.stats(kind);
                let cell = match (kind.is_ordinal(), s.n) {
                    (_, 0) => "-".to_string(),
                    (true, _) => format!("{} ± {}", fmt1(s.median), fmt1(s.iqr)),
                    (false, _) => format!("{} ± {}", fmt1(s.mean), fmt1(s.sd)),
                };
                let _ = write!(out, "{cell:>22}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv()?.as_bytes())?;
        Ok(())
    }
}

fn fmt1(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

/// Summarize records per mode, in manual, autonomous, shared order. Records
/// are taken in canonical (mode, seed, repetition) order so the result does
/// not depend on input order.
pub fn summarize(records: &[TrialRecord]) -> MetricsSummary {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.mode, r.seed, r.repetition));
    let mut modes = Vec::new();
    for mode in NavMode::ALL {
        let recs: Vec<TrialMetrics> = sorted.iter().filter(|r| r.mode == mode).map(|r| TrialMetrics::of(r)).collect();
        if recs.is_empty() {
            continue;
        }
        let measures = MeasureKind::ALL
            .iter()
            .map(|&kind| {
                let vals: Vec<f64> = recs.iter().filter_map(|m| m.get(kind).value()).collect();
                (kind, Stats::of(&vals, recs.len() - vals.len()))
            })
            .collect();
        modes.push(ModeSummary {
            mode,
            trials: recs.len(),
            completed: recs.iter().filter(|m| m.completed).count(),
            measures,
        });
    }
    MetricsSummary { modes }
}
