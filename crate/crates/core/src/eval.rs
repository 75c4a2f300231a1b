//! GNSS-outage evaluation: test drives are cut into fixed-length outages,
//! each second's position error is predicted with and without the learned
//! correction, and CRSE/CTE statistics are reported per model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature_windows, FeatureWindow, WINDOW_STEPS};
use crate::ingest::{DriveRecord, SAMPLE_PERIOD_S};
use crate::rnn::RnnModel;
use crate::wheel_physics::{gnss_displacements, rear_axle_speed};

/// Outage lengths evaluated by default, seconds.
pub const DEFAULT_SCENARIOS: [usize; 4] = [30, 60, 120, 180];
/// Seconds consumed before the first full window exists.
pub const WARMUP_S: usize = WINDOW_STEPS;
/// Name of the pooled row covering every drive of a dataset.
pub const POOLED: &str = "ALL";

/// A simulated GNSS outage of `duration` seconds, predicted once per
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutageScenario {
    pub duration: usize,
}

impl OutageScenario {
    pub const PREDICTION_PERIOD_S: usize = 1;

    pub fn new(duration: usize) -> Result<OutageScenario> {
        if duration == 0 {
            return Err(Error::InvalidConfig(format!(
                "invalid outage length {duration}"
            )));
        }
        Ok(OutageScenario { duration })
    }

    pub fn defaults() -> Vec<OutageScenario> {
        DEFAULT_SCENARIOS
            .iter()
            .map(|&d| OutageScenario { duration: d })
            .collect()
    }

    pub fn label(&self) -> String {
        format!("{}s", self.duration)
    }
}

/// One outage: the windows ending at each of its seconds, the integrated
/// rear-axle rotation of each second, and the GNSS displacement that the
/// evaluation treats as ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSequence {
    pub drive: String,
    pub index: usize,
    pub t: Vec<f64>,
    pub windows: Vec<FeatureWindow>,
    pub axle_rotation: Vec<f64>,
    pub x_gnss: Vec<f64>,
}

impl TestSequence {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// The physics model's error ε = r·rotation − x_gnss for each second.
    pub fn eps_true(&self, radius: f64) -> Vec<f64> {
        self.axle_rotation
            .iter()
            .zip(&self.x_gnss)
            .map(|(rot, x)| radius * rot - x)
            .collect()
    }

    pub fn distance(&self) -> f64 {
        self.x_gnss.iter().map(|x| x.abs()).sum()
    }
}

/// Cuts a drive into consecutive, non-overlapping outages after the
/// window warm-up. A trailing remainder shorter than the outage is dropped.
pub fn segment_outages(drive: &DriveRecord, scenario: OutageScenario) -> Result<Vec<TestSequence>> {
    let n = drive.seconds();
    let needed = scenario.duration + WARMUP_S;
    if n < needed {
        return Err(Error::DriveTooShort { seconds: n, needed });
    }
    let windows = build_feature_windows(drive)?;
    let labels: BTreeMap<usize, f64> = gnss_displacements(drive)?.into_iter().collect();
    let count = (n - WARMUP_S) / scenario.duration;
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let first = WARMUP_S + 1 + index * scenario.duration;
        let mut seq = TestSequence {
            drive: drive.name.clone(),
            index,
            t: Vec::with_capacity(scenario.duration),
            windows: Vec::with_capacity(scenario.duration),
            axle_rotation: Vec::with_capacity(scenario.duration),
            x_gnss: Vec::with_capacity(scenario.duration),
        };
        for k in first..first + scenario.duration {
            let x = *labels
                .get(&k)
                .ok_or(Error::AlignmentGap { second: k as i64 })?;
            let sign = if drive.is_reverse(k) { -1.0 } else { 1.0 };
            let rotation: f64 = drive
                .second_samples(k)
                .iter()
                .map(|s| rear_axle_speed(s.w_rl, s.w_rr) * SAMPLE_PERIOD_S)
                .sum();
            seq.t.push(drive.second_end(k));
            seq.windows.push(windows[k - WINDOW_STEPS].clone());
            seq.axle_rotation.push(sign * rotation);
            seq.x_gnss.push(x);
        }
        out.push(seq);
    }
    Ok(out)
}

/// Something that produces per-second position errors over an outage.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// The uncorrected physics model.
    Wpm { radius: f64 },
    /// Physics model corrected by the network's ε estimate.
    Model(&'a RnnModel),
    /// A correction equal to the true error; always predicts zero error.
    Oracle { radius: f64 },
}

impl Predictor<'_> {
    pub fn radius(&self) -> f64 {
        match self {
            Predictor::Wpm { radius } | Predictor::Oracle { radius } => *radius,
            Predictor::Model(m) => m.meta.wheel_radius,
        }
    }
}

/// Per-second prediction error e_pred = ε_true − ε̂, where ε̂ is zero for
/// the physics model alone. GNSS is never consulted for ε̂.
pub fn predict_sequence(predictor: &Predictor<'_>, seq: &TestSequence) -> Result<Vec<f64>> {
    let eps = seq.eps_true(predictor.radius());
    match predictor {
        Predictor::Wpm { .. } => Ok(eps),
        Predictor::Oracle { .. } => Ok(vec![0.0; eps.len()]),
        Predictor::Model(model) => {
            model.ensure_trained()?;
            seq.windows
                .iter()
                .zip(eps)
                .map(|(w, e)| Ok(e - model.predict_eps(w)?))
                .collect()
        }
    }
}

/// Cumulative root squared error: Σ √(e²).
pub fn crse(e_pred: &[f64]) -> Result<f64> {
    if e_pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(e_pred.iter().map(|e| (e * e).sqrt()).sum())
}

/// Cumulative true error: Σ e, signed.
pub fn cte(e_pred: &[f64]) -> Result<f64> {
    if e_pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(e_pred.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub dataset: String,
    pub drive: String,
    pub scenario: usize,
    pub index: usize,
    pub model: String,
    pub crse: f64,
    pub cte: f64,
    pub distance: f64,
    pub n_seconds: usize,
    #[serde(skip)]
    pub t: Vec<f64>,
    #[serde(skip)]
    pub e_pred: Vec<f64>,
}

impl SequenceResult {
    pub fn new(
        dataset: &str,
        model: &str,
        scenario: usize,
        seq: &TestSequence,
        e_pred: Vec<f64>,
    ) -> Result<Self> {
        Ok(SequenceResult {
            dataset: dataset.to_string(),
            drive: seq.drive.clone(),
            scenario,
            index: seq.index,
            model: model.to_string(),
            crse: crse(&e_pred)?,
            cte: cte(&e_pred)?,
            distance: seq.distance(),
            n_seconds: e_pred.len(),
            t: seq.t.clone(),
            e_pred,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// Population standard deviation (divisor N).
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Stats> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if max == min {
            // summing can drift off a constant; report it exactly
            return Ok(Stats {
                max,
                min,
                mean: min,
                std: 0.0,
            });
        }
        let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Stats {
            max,
            min,
            mean,
            std: var.sqrt(),
        })
    }

    fn get(&self, stat: &str) -> f64 {
        match stat {
            "max" => self.max,
            "min" => self.min,
            "mean" => self.mean,
            _ => self.std,
        }
    }
}

/// Statistics of one (dataset, scenario, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub scenario: usize,
    pub model: String,
    pub crse: Stats,
    pub cte: Stats,
    pub total_distance: f64,
    pub max_distance: f64,
    pub n_sequences: usize,
}

/// Reduces sequence results of one cell to a report row.
pub fn aggregate(results: &[SequenceResult]) -> Result<MetricsRow> {
    let first = results.first().ok_or(Error::EmptyInput)?;
    let crses: Vec<f64> = results.iter().map(|r| r.crse).collect();
    let ctes: Vec<f64> = results.iter().map(|r| r.cte).collect();
    let distances: Vec<f64> = results.iter().map(|r| r.distance).collect();
    Ok(MetricsRow {
        dataset: first.dataset.clone(),
        scenario: first.scenario,
        model: first.model.clone(),
        crse: Stats::of(&crses)?,
        cte: Stats::of(&ctes)?,
        total_distance: distances.iter().sum(),
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        n_sequences: results.len(),
    })
}

/// A named predictor in a comparison.
#[derive(Debug, Clone, Copy)]
pub struct Contender<'a> {
    pub name: &'a str,
    pub predictor: Predictor<'a>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub sequences: Vec<SequenceResult>,
    /// Drives skipped for a scenario because they are too short.
    pub skipped: Vec<(String, usize)>,
}

const METRIC_STATS: [&str; 4] = ["max", "min", "mean", "std"];

/// Evaluates every contender on every scenario. Each drive gets its own
/// row and all drives are pooled under [`POOLED`]. Drives are split at
/// GNSS gaps first; pieces too short for a scenario are skipped.
pub fn compare_models(
    contenders: &[Contender<'_>],
    drives: &[DriveRecord],
    scenarios: &[OutageScenario],
) -> Result<Evaluation> {
    let mut eval = Evaluation::default();
    for scenario in scenarios {
        let mut per_drive: Vec<(String, Vec<TestSequence>)> = Vec::new();
        for drive in drives {
            let mut seqs = Vec::new();
            for piece in drive.split_at_gnss_gaps() {
                match segment_outages(&piece, *scenario) {
                    Ok(s) => seqs.extend(s),
                    Err(Error::DriveTooShort { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            for (i, s) in seqs.iter_mut().enumerate() {
                s.index = i;
            }
            if seqs.is_empty() {
                eval.skipped.push((drive.name.clone(), scenario.duration));
            } else {
                per_drive.push((drive.name.clone(), seqs));
            }
        }
        if per_drive.is_empty() {
            continue;
        }
        for c in contenders {
            let mut pooled = Vec::new();
            for (name, seqs) in &per_drive {
                let results: Vec<SequenceResult> = seqs
                    .iter()
                    .map(|s| {
                        SequenceResult::new(
                            name,
                            c.name,
                            scenario.duration,
                            s,
                            predict_sequence(&c.predictor, s)?,
                        )
                    })
                    .collect::<Result<_>>()?;
                eval.rows.push(aggregate(&results)?);
                pooled.extend(results);
            }
            let mut all = aggregate(&pooled)?;
            all.dataset = POOLED.to_string();
            eval.rows.push(all);
            eval.sequences.extend(pooled);
        }
    }
    Ok(eval)
}

fn fmt_float(v: f64) -> String {
    format!("{v}")
}

impl Evaluation {
    pub fn row(&self, dataset: &str, scenario: usize, model: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.scenario == scenario && r.model == model)
    }

    /// Long format: one value per line.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("dataset,scenario,model,metric,stat,value\n");
        for r in &self.rows {
            for (metric, stats) in [("crse", &r.crse), ("cte", &r.cte)] {
                for stat in METRIC_STATS {
                    let _ = writeln!(
                        out,
                        "{},{},{},{metric},{stat},{}",
                        r.dataset,
                        r.scenario,
                        r.model,
                        fmt_float(stats.get(stat))
                    );
                }
            }
            for (stat, v) in [("total", r.total_distance), ("max", r.max_distance)] {
                let _ = writeln!(
                    out,
                    "{},{},{},distance,{stat},{}",
                    r.dataset,
                    r.scenario,
                    r.model,
                    fmt_float(v)
                );
            }
            let _ = writeln!(
                out,
                "{},{},{},sequences,count,{}",
                r.dataset, r.scenario, r.model, r.n_sequences
            );
        }
        out
    }

    pub fn sequences_csv(&self) -> String {
        let mut out = String::from("dataset,scenario,model,sequence,n_seconds,crse,cte,distance\n");
        for s in &self.sequences {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.dataset,
                s.scenario,
                s.model,
                s.index,
                s.n_seconds,
                fmt_float(s.crse),
                fmt_float(s.cte),
                fmt_float(s.distance)
            );
        }
        out
    }

    /// Per-second traces with running CRSE and CTE, one file per
    /// (dataset, scenario, sequence) holding every model.
    pub fn traces(&self) -> Vec<(String, String)> {
        let mut files: BTreeMap<(String, usize, usize), String> = BTreeMap::new();
        for s in &self.sequences {
            let body = files
                .entry((s.dataset.clone(), s.scenario, s.index))
                .or_insert_with(|| String::from("model,t,e_pred,crse,cte\n"));
            let (mut c, mut t) = (0.0, 0.0);
            for (time, e) in s.t.iter().zip(&s.e_pred) {
                c += e.abs();
                t += e;
                let _ = writeln!(
                    body,
                    "{},{},{},{},{}",
                    s.model,
                    fmt_float(*time),
                    fmt_float(*e),
                    fmt_float(c),
                    fmt_float(t)
                );
            }
        }
        files
            .into_iter()
            .map(|((d, sc, i), body)| (format!("{d}_{sc}_{i}.csv"), body))
            .collect()
    }

    pub fn report(&self, provenance: serde_json::Value) -> Report {
        let mut nested: BTreeMap<String, BTreeMap<String, BTreeMap<String, MetricsRow>>> =
            BTreeMap::new();
        for r in &self.rows {
            nested
                .entry(r.dataset.clone())
                .or_default()
                .entry(r.scenario.to_string())
                .or_default()
                .insert(r.model.clone(), r.clone());
        }
        Report {
            provenance,
            results: nested,
        }
    }
}

/// Nested report: dataset → scenario → model → row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: serde_json::Value,
    pub results: BTreeMap<String, BTreeMap<String, BTreeMap<String, MetricsRow>>>,
}

impl Report {
    pub fn rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.results
            .values()
            .flat_map(|s| s.values())
            .flat_map(|m| m.values())
    }

    /// Text tables, one per (metric, scenario), with one line per dataset
    /// and model. Values are rounded to centimeters.
    pub fn render(&self) -> String {
        let mut rows: Vec<&MetricsRow> = self.rows().collect();
        rows.sort_by(|a, b| {
            (a.scenario, a.dataset == POOLED, &a.dataset).cmp(&(
                b.scenario,
                b.dataset == POOLED,
                &b.dataset,
            ))
        });
        let mut scenarios: Vec<usize> = rows.iter().map(|r| r.scenario).collect();
        scenarios.dedup();
        let mut out = String::new();
        for (metric, pick) in [
            (
                "CRSE",
                (|r: &MetricsRow| r.crse) as fn(&MetricsRow) -> Stats,
            ),
            ("CTE", |r: &MetricsRow| r.cte),
        ] {
            for &sc in &scenarios {
                let _ = writeln!(out, "{metric} performance, {sc} s outages");
                let _ = writeln!(
                    out,
                    "{:<28} {:<12} {:>9} {:>9} {:>9} {:>9} {:>10} {:>4}",
                    "dataset",
                    "model",
                    "max (m)",
                    "min (m)",
                    "mean (m)",
                    "std (m)",
                    "dist (m)",
                    "N_s"
                );
                for r in rows.iter().filter(|r| r.scenario == sc) {
                    let s = pick(r);
                    let _ = writeln!(
                        out,
                        "{:<28} {:<12} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>10.2} {:>4}",
                        r.dataset,
                        r.model,
                        s.max,
                        s.min,
                        s.mean,
                        s.std,
                        r.max_distance,
                        r.n_sequences
                    );
                }
                out.push('\n');
            }
        }
        out
    }
}
