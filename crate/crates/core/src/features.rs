//! Two-step temporal windows over the 10 Hz wheel speeds, their per-second
//! error labels, and per-column min-max scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DriveRecord, SAMPLE_RATE_HZ};
use crate::wheel_physics::{wpm_error_series, CalibrationParams};

/// Wheel channels per sample.
pub const WHEELS: usize = 4;
/// Features per window step: four wheels × ten samples.
pub const STEP_FEATURES: usize = WHEELS * SAMPLE_RATE_HZ;
/// Steps per window.
pub const WINDOW_STEPS: usize = 2;
pub const WINDOW_FEATURES: usize = STEP_FEATURES * WINDOW_STEPS;

/// Wheel speeds for the two seconds ending at `t_end`, oldest step first.
/// Each step lays out `[fl×10, fr×10, rl×10, rr×10]` in ascending time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub t_end: f64,
    pub values: Vec<f64>,
}

impl FeatureWindow {
    pub fn new(t_end: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != WINDOW_FEATURES {
            return Err(Error::ShapeMismatch(format!(
                "window has {} values, expected {WINDOW_FEATURES}",
                values.len()
            )));
        }
        Ok(FeatureWindow { t_end, values })
    }

    pub fn step(&self, i: usize) -> &[f64] {
        &self.values[i * STEP_FEATURES..(i + 1) * STEP_FEATURES]
    }

    pub fn steps(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(STEP_FEATURES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorLabel {
    pub eps: f64,
    pub eps_norm: f64,
}

/// A raw (unscaled) window paired with the ε of its final second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window: FeatureWindow,
    pub eps: f64,
}

fn step_values(drive: &DriveRecord, second: usize, out: &mut Vec<f64>) {
    let samples = drive.second_samples(second);
    for wheel in 0..WHEELS {
        out.extend(samples.iter().map(|s| s.speeds()[wheel]));
    }
}

/// Unlabelled windows for every second t ≥ 2 of the drive.
pub fn build_feature_windows(drive: &DriveRecord) -> Result<Vec<FeatureWindow>> {
    let n = drive.seconds();
    if n < WINDOW_STEPS {
        return Err(Error::DriveTooShort {
            seconds: n,
            needed: WINDOW_STEPS,
        });
    }
    (WINDOW_STEPS..=n)
        .map(|k| {
            let mut values = Vec::with_capacity(WINDOW_FEATURES);
            for second in k + 1 - WINDOW_STEPS..=k {
                step_values(drive, second, &mut values);
            }
            FeatureWindow::new(drive.second_end(k), values)
        })
        .collect()
}

/// Windows paired with their error labels. Every second from 2 onward must
/// carry a label.
pub fn build_windows(drive: &DriveRecord, cal: CalibrationParams) -> Result<Vec<LabeledWindow>> {
    let windows = build_feature_windows(drive)?;
    let labels = wpm_error_series(drive, cal)?;
    let first_window = drive.second_end(WINDOW_STEPS);
    let labels: Vec<(f64, f64)> = labels
        .into_iter()
        .filter(|(t, _)| *t >= first_window - 1e-9)
        .collect();
    if labels.len() != windows.len() {
        let first_labelled = labels
            .first()
            .map(|(t, _)| (t - drive.t0).round() as i64)
            .unwrap_or(WINDOW_STEPS as i64);
        let second = if first_labelled > WINDOW_STEPS as i64 {
            WINDOW_STEPS as i64
        } else {
            first_labelled + labels.len() as i64
        };
        return Err(Error::AlignmentGap { second });
    }
    Ok(windows
        .into_iter()
        .zip(labels)
        .map(|(window, (_, eps))| LabeledWindow { window, eps })
        .collect())
}

/// Labelled windows from several drives; drives are first split wherever
/// GNSS coverage breaks, and pieces too short for a window are skipped.
pub fn build_dataset(drives: &[DriveRecord], cal: CalibrationParams) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for drive in drives {
        for piece in drive.split_at_gnss_gaps() {
            if piece.seconds() < WINDOW_STEPS {
                continue;
            }
            out.extend(build_windows(&piece, cal)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn fit(values: impl Iterator<Item = f64>) -> Range {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    fn is_degenerate(&self) -> bool {
        self.max - self.min <= 0.0
    }

    /// Maps into [0, 1], clamping out-of-range values. A constant range
    /// maps everything to 0.
    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn invert(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            return self.min;
        }
        self.min + y * (self.max - self.min)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn union(&self, other: &Range) -> Range {
        Range {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

/// Per-column min-max scaler for the 80 window features plus the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<Range>,
    pub label: Range,
}

impl Scaler {
    pub fn fit(training: &[LabeledWindow]) -> Result<Scaler> {
        let width = training
            .first()
            .ok_or(Error::EmptyTrainingSet)?
            .window
            .values
            .len();
        if training.iter().any(|s| s.window.values.len() != width) {
            return Err(Error::ShapeMismatch("windows of differing width".into()));
        }
        let features = (0..width)
            .map(|j| Range::fit(training.iter().map(|s| s.window.values[j])))
            .collect();
        let label = Range::fit(training.iter().map(|s| s.eps));
        Ok(Scaler { features, label })
    }

    pub fn apply_window(&self, window: &FeatureWindow) -> Result<FeatureWindow> {
        if window.values.len() != self.features.len() {
            return Err(Error::ShapeMismatch(format!(
                "window has {} values, scaler expects {}",
                window.values.len(),
                self.features.len()
            )));
        }
        Ok(FeatureWindow {
            t_end: window.t_end,
            values: window
                .values
                .iter()
                .zip(&self.features)
                .map(|(&x, r)| r.apply(x))
                .collect(),
        })
    }

    pub fn invert_window(&self, window: &FeatureWindow) -> FeatureWindow {
        FeatureWindow {
            t_end: window.t_end,
            values: window
                .values
                .iter()
                .zip(&self.features)
                .map(|(&y, r)| r.invert(y))
                .collect(),
        }
    }

    pub fn apply_label(&self, eps: f64) -> ErrorLabel {
        ErrorLabel {
            eps,
            eps_norm: self.label.apply(eps),
        }
    }

    pub fn invert_label(&self, eps_norm: f64) -> f64 {
        self.label.invert(eps_norm)
    }
}
