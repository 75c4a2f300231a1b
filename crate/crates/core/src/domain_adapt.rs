//! Source-trained (G), target-trained (S) and recalibrated (R) models,
//! plus a simple feature-shift diagnostic between two domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    build_dataset, build_feature_windows, LabeledWindow, Range, Scaler, STEP_FEATURES, WHEELS,
};
use crate::ingest::{DriveRecord, SAMPLE_RATE_HZ};
use crate::rnn::{train, RnnModel, TrainConfig, TrainingLog, Variant};
use crate::wheel_physics::CalibrationParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainRole {
    Source,
    Target,
}

impl std::fmt::Display for DomainRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainRole::Source => "source",
            DomainRole::Target => "target",
        })
    }
}

/// Drives recorded on one vehicle in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: String,
    pub role: DomainRole,
    pub drives: Vec<DriveRecord>,
    /// Free-form notes such as tyre pressure or vehicle model.
    pub state_tags: Vec<String>,
}

impl DomainDataset {
    pub fn new(
        domain_id: &str,
        role: DomainRole,
        drives: Vec<DriveRecord>,
        state_tags: Vec<String>,
    ) -> Result<DomainDataset> {
        if drives.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "domain {domain_id} has no drives"
            )));
        }
        Ok(DomainDataset {
            domain_id: domain_id.to_string(),
            role,
            drives,
            state_tags,
        })
    }

    /// The same drives under another role.
    pub fn with_role(&self, role: DomainRole) -> DomainDataset {
        DomainDataset {
            role,
            ..self.clone()
        }
    }

    pub fn total_seconds(&self) -> usize {
        self.drives.iter().map(DriveRecord::seconds).sum()
    }

    pub fn windows(&self, cal: CalibrationParams) -> Result<Vec<LabeledWindow>> {
        let windows = build_dataset(&self.drives, cal)?;
        if windows.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "domain {} yields no windows",
                self.domain_id
            )));
        }
        Ok(windows)
    }
}

/// Length of the target-domain data used for recalibration, taken from
/// the chronological start of the target training drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationSlice {
    pub seconds: usize,
}

impl Default for AdaptationSlice {
    fn default() -> Self {
        AdaptationSlice { seconds: 50 }
    }
}

/// Smallest slice that still yields one window.
pub const MIN_SLICE_SECONDS: usize = 2;

impl AdaptationSlice {
    pub fn new(seconds: usize) -> AdaptationSlice {
        AdaptationSlice { seconds }
    }

    /// Cuts the slice from the head of `drives`, in order. A slice longer
    /// than one drive continues into the next.
    pub fn select(&self, drives: &[DriveRecord]) -> Result<Vec<DriveRecord>> {
        let available: usize = drives.iter().map(DriveRecord::seconds).sum();
        if self.seconds < MIN_SLICE_SECONDS || self.seconds > available {
            return Err(Error::SliceTooLong {
                requested: self.seconds,
                available,
            });
        }
        let mut remaining = self.seconds;
        let mut out = Vec::new();
        for drive in drives {
            if remaining == 0 {
                break;
            }
            let take = remaining.min(drive.seconds());
            remaining -= take;
            if take > 0 {
                out.push(drive.slice_seconds(1, take));
            }
        }
        Ok(out)
    }
}

/// What the recalibrated model does with the source model's scaler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerPolicy {
    /// Keep the source scaler; target values outside it are clamped.
    Reuse,
    /// Keep the source feature ranges but widen the label range to cover
    /// the slice's errors, so that shifted targets are representable.
    #[default]
    ExtendLabel,
    /// Fit a fresh scaler on the slice.
    Refit,
}

impl ScalerPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            ScalerPolicy::Reuse => "reuse-source-clamp",
            ScalerPolicy::ExtendLabel => "reuse-source-extend-label",
            ScalerPolicy::Refit => "refit-on-slice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecalibrationConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub scaler_policy: ScalerPolicy,
}

impl Default for RecalibrationConfig {
    fn default() -> Self {
        RecalibrationConfig {
            train: TrainConfig {
                epochs: 50,
                batch_size: 4,
                ..TrainConfig::default()
            },
            scaler_policy: ScalerPolicy::default(),
        }
    }
}

impl RecalibrationConfig {
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

fn expect_role(dataset: &DomainDataset, role: DomainRole) -> Result<()> {
    if dataset.role != role {
        return Err(Error::InvalidConfig(format!(
            "domain {} is a {} dataset, expected {role}",
            dataset.domain_id, dataset.role
        )));
    }
    Ok(())
}

fn train_on(
    dataset: &DomainDataset,
    config: &TrainConfig,
    cal: CalibrationParams,
    variant: Variant,
) -> Result<(RnnModel, TrainingLog)> {
    let windows = dataset.windows(cal)?;
    let (mut model, log) = train(&windows, config, None)?;
    model.meta.variant = variant;
    model.meta.domain_id = dataset.domain_id.clone();
    model.meta.wheel_radius = cal.r;
    model.meta.scaler_policy = Some("fit".into());
    Ok((model, log))
}

/// G-WhONet: trained on the source vehicle only. `cal` is the physics
/// radius the error labels are computed with.
pub fn train_generic(
    source: &DomainDataset,
    config: &TrainConfig,
    cal: CalibrationParams,
) -> Result<(RnnModel, TrainingLog)> {
    expect_role(source, DomainRole::Source)?;
    train_on(source, config, cal, Variant::G)
}

/// S-WhONet: trained from scratch on the target vehicle.
pub fn train_specific(
    target: &DomainDataset,
    config: &TrainConfig,
    cal: CalibrationParams,
) -> Result<(RnnModel, TrainingLog)> {
    expect_role(target, DomainRole::Target)?;
    train_on(target, config, cal, Variant::S)
}

/// R-WhONet: continues training a G model on a short slice of target data.
/// The labels use the G model's wheel radius.
pub fn recalibrate(
    g_model: &RnnModel,
    target: &DomainDataset,
    slice: AdaptationSlice,
    config: &RecalibrationConfig,
) -> Result<(RnnModel, TrainingLog)> {
    if g_model.meta.variant != Variant::G {
        return Err(Error::VariantMismatch {
            expected: Variant::G.label().into(),
            got: g_model.meta.variant.label().into(),
        });
    }
    let source_scaler = g_model.ensure_trained()?.clone();
    let cal = CalibrationParams::new(g_model.meta.wheel_radius)?;
    let drives = slice.select(&target.drives)?;
    let windows = build_dataset(&drives, cal)?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset(
            "adaptation slice yields no windows".into(),
        ));
    }

    let mut init = g_model.clone();
    init.scaler = Some(match config.scaler_policy {
        ScalerPolicy::Reuse => source_scaler,
        ScalerPolicy::ExtendLabel => Scaler {
            label: source_scaler
                .label
                .union(&Range::fit(windows.iter().map(|w| w.eps))),
            ..source_scaler
        },
        ScalerPolicy::Refit => Scaler::fit(&windows)?,
    });
    let (mut model, log) = train(&windows, &config.train, Some(&init))?;
    model.meta.variant = Variant::R;
    model.meta.domain_id = target.domain_id.clone();
    model.meta.parent_hash = Some(g_model.content_hash()?);
    model.meta.slice_seconds = Some(slice.seconds as f64);
    model.meta.scaler_policy = Some(config.scaler_policy.label().into());
    model.meta.config_hash = config.hash();
    Ok((model, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureShift {
    pub mean_source: f64,
    pub mean_target: f64,
    /// |mean_target − mean_source|
    pub mean_diff: f64,
    /// std_target / std_source; both guarded so the ratio stays finite.
    pub std_ratio: f64,
    /// Share of target values outside the source range.
    pub outside_fraction: f64,
    pub clamp_risk: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShiftReport {
    pub features: Vec<FeatureShift>,
    /// Mean of `mean_diff` over all features.
    pub summary: f64,
    /// Mean of `mean_diff` over the rear-wheel features.
    pub rear_summary: f64,
}

impl FeatureShiftReport {
    pub fn clamp_risk_features(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.clamp_risk)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Features whose target values fall outside the source range more often
/// than this are flagged.
pub const CLAMP_RISK_FRACTION: f64 = 0.05;

fn raw_columns(drives: &[DriveRecord]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for d in drives {
        if d.seconds() < 2 {
            continue;
        }
        rows.extend(build_feature_windows(d)?.into_iter().map(|w| w.values));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no feature windows".into()));
    }
    Ok(rows)
}

fn is_rear(column: usize) -> bool {
    let wheel = (column % STEP_FEATURES) / SAMPLE_RATE_HZ;
    wheel >= WHEELS / 2
}

fn shift_report(source: &[&[f64]], target: &[&[f64]]) -> Result<FeatureShiftReport> {
    let width = source[0].len();
    if source.iter().chain(target).any(|r| r.len() != width) {
        return Err(Error::ShapeMismatch("feature widths differ".into()));
    }
    let stats = |rows: &[&[f64]], c: usize| {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let guard = 1e-12;
    let features: Vec<FeatureShift> = (0..width)
        .map(|c| {
            let (ms, ss) = stats(source, c);
            let (mt, st) = stats(target, c);
            let range = Range::fit(source.iter().map(|r| r[c]));
            let outside = target.iter().filter(|r| !range.contains(r[c])).count() as f64
                / target.len() as f64;
            FeatureShift {
                mean_source: ms,
                mean_target: mt,
                mean_diff: (mt - ms).abs(),
                std_ratio: (st + guard) / (ss + guard),
                outside_fraction: outside,
                clamp_risk: outside > CLAMP_RISK_FRACTION,
            }
        })
        .collect();
    let summary = features.iter().map(|f| f.mean_diff).sum::<f64>() / width as f64;
    let rear: Vec<f64> = features
        .iter()
        .enumerate()
        .filter(|(c, _)| is_rear(*c))
        .map(|(_, f)| f.mean_diff)
        .collect();
    let rear_summary = if rear.is_empty() {
        0.0
    } else {
        rear.iter().sum::<f64>() / rear.len() as f64
    };
    Ok(FeatureShiftReport {
        features,
        summary,
        rear_summary,
    })
}

/// Per-feature distance between the raw window distributions of two
/// domains.
pub fn feature_shift_stats(
    source: &DomainDataset,
    target: &DomainDataset,
) -> Result<FeatureShiftReport> {
    let s = raw_columns(&source.drives)?;
    let t = raw_columns(&target.drives)?;
    let s: Vec<&[f64]> = s.iter().map(Vec::as_slice).collect();
    let t: Vec<&[f64]> = t.iter().map(Vec::as_slice).collect();
    shift_report(&s, &t)
}

/// Same-domain reference for [`feature_shift_stats`]: the mean summaries
/// between pairs of bootstrap resamples of one dataset.
pub fn bootstrap_shift_baseline(
    dataset: &DomainDataset,
    rounds: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let rows = raw_columns(&dataset.drives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = rounds.max(1);
    let (mut all, mut rear) = (0.0, 0.0);
    for _ in 0..rounds {
        let mut draw = || -> Vec<&[f64]> {
            (0..rows.len())
                .map(|_| rows[rng.random_range(0..rows.len())].as_slice())
                .collect()
        };
        let a = draw();
        let b = draw();
        let r = shift_report(&a, &b)?;
        all += r.summary;
        rear += r.rear_summary;
    }
    Ok((all / rounds as f64, rear / rounds as f64))
}
