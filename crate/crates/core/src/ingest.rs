//! Drive recordings: the in-memory `DriveRecord`, the canonical drive CSV,
//! and dataset manifests.
//!
//! A drive is stored on an exact grid. Second `k` (1-based) covers the ten
//! wheel samples at `t0 + k - 0.9 ..= t0 + k`, and `fixes[k]` is the GNSS fix
//! at `t0 + k` when one exists. `fixes[0]` anchors the start of second 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain_adapt::{DomainDataset, DomainRole};
use crate::error::{Error, Result};
use crate::geodesy::{GeoCoordinate, GnssTrack, GNSS_JITTER_TOLERANCE_S};

pub const SAMPLE_RATE_HZ: usize = 10;
pub const SAMPLE_PERIOD_S: f64 = 0.1;
/// Maximum distance of a sample from its 10 Hz grid slot.
pub const GRID_JITTER_S: f64 = 0.05;
/// Header of the canonical drive CSV.
pub const DRIVE_CSV_HEADER: &str = "t,w_fl,w_fr,w_rl,w_rr,lat,lon";

/// One 10 Hz reading of the four wheel angular speeds (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelSpeedSample {
    pub t: f64,
    pub w_fl: f64,
    pub w_fr: f64,
    pub w_rl: f64,
    pub w_rr: f64,
}

impl WheelSpeedSample {
    pub fn speeds(&self) -> [f64; 4] {
        [self.w_fl, self.w_fr, self.w_rl, self.w_rr]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveRecord {
    pub name: String,
    /// Whole-second start time; the first sample sits at `t0 + 0.1`.
    pub t0: f64,
    pub samples: Vec<WheelSpeedSample>,
    pub fixes: Vec<Option<GeoCoordinate>>,
    pub tags: Vec<String>,
    pub reverse_segments: Vec<(f64, f64)>,
}

impl DriveRecord {
    pub fn new(
        name: impl Into<String>,
        t0: f64,
        samples: Vec<WheelSpeedSample>,
        fixes: Vec<Option<GeoCoordinate>>,
    ) -> Result<Self> {
        if !samples.len().is_multiple_of(SAMPLE_RATE_HZ) {
            return Err(Error::WrongSampleCount {
                expected: samples.len() / SAMPLE_RATE_HZ * SAMPLE_RATE_HZ,
                got: samples.len(),
            });
        }
        let seconds = samples.len() / SAMPLE_RATE_HZ;
        if fixes.len() != seconds + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} fixes for a {seconds} s drive (expected {})",
                fixes.len(),
                seconds + 1
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            let expected = grid_time(t0, i as i64 + 1);
            if (s.t - expected).abs() > 1e-6 {
                return Err(Error::ExcessJitter {
                    path: "<memory>".into(),
                    line: i + 1,
                    t: s.t,
                });
            }
            if s.speeds().iter().any(|w| !w.is_finite()) {
                return Err(Error::Schema {
                    path: "<memory>".into(),
                    line: i + 1,
                    message: "non-finite wheel speed".into(),
                });
            }
        }
        for c in fixes.iter().flatten() {
            c.validate()?;
        }
        Ok(DriveRecord {
            name: name.into(),
            t0,
            samples,
            fixes,
            tags: Vec::new(),
            reverse_segments: Vec::new(),
        })
    }

    /// Builds a drive from samples starting at `t0 + 0.1`, dropping a
    /// trailing partial second. Missing fixes are padded with `None`.
    pub fn from_partial(
        name: impl Into<String>,
        t0: f64,
        mut samples: Vec<WheelSpeedSample>,
        mut fixes: Vec<Option<GeoCoordinate>>,
    ) -> Result<Self> {
        let seconds = samples.len() / SAMPLE_RATE_HZ;
        samples.truncate(seconds * SAMPLE_RATE_HZ);
        fixes.resize(seconds + 1, None);
        DriveRecord::new(name, t0, samples, fixes)
    }

    pub fn seconds(&self) -> usize {
        self.samples.len() / SAMPLE_RATE_HZ
    }

    pub fn duration_s(&self) -> f64 {
        self.seconds() as f64
    }

    /// End time of second `k`.
    pub fn second_end(&self, k: usize) -> f64 {
        self.t0 + k as f64
    }

    /// The ten samples of second `k` (1-based).
    pub fn second_samples(&self, k: usize) -> &[WheelSpeedSample] {
        &self.samples[(k - 1) * SAMPLE_RATE_HZ..k * SAMPLE_RATE_HZ]
    }

    pub fn fix(&self, k: usize) -> Option<GeoCoordinate> {
        self.fixes.get(k).copied().flatten()
    }

    /// True when second `k` lies in a flagged reverse segment.
    pub fn is_reverse(&self, k: usize) -> bool {
        let mid = self.second_end(k) - 0.5;
        self.reverse_segments
            .iter()
            .any(|&(a, b)| mid >= a && mid <= b)
    }

    /// Contiguous GNSS tracks of the drive.
    pub fn gnss_tracks(&self) -> Result<Vec<GnssTrack>> {
        let fixes = self
            .fixes
            .iter()
            .enumerate()
            .filter_map(|(k, f)| f.map(|c| (self.second_end(k), c)))
            .collect();
        GnssTrack::split_at_gaps(fixes)
    }

    /// Splits the drive into pieces with uninterrupted GNSS coverage. Each
    /// piece keeps one second of wheel data ahead of its first fix so that
    /// the first labelled second still has a preceding window step.
    pub fn split_at_gnss_gaps(&self) -> Vec<DriveRecord> {
        let n = self.seconds();
        let mut pieces = Vec::new();
        let mut k = 0;
        while k <= n {
            if self.fixes[k].is_none() {
                k += 1;
                continue;
            }
            let start = k;
            while k <= n && self.fixes[k].is_some() {
                k += 1;
            }
            let end = k - 1;
            if end > start {
                // seconds start..=end, where second `start` has no label
                let first_second = start.max(1);
                let t0 = self.second_end(first_second - 1);
                let samples = self.samples
                    [(first_second - 1) * SAMPLE_RATE_HZ..end * SAMPLE_RATE_HZ]
                    .to_vec();
                let mut fixes = vec![None];
                fixes.extend(self.fixes[first_second..=end].iter().copied());
                let mut piece = DriveRecord {
                    name: if pieces.is_empty() && start <= 1 && end == n {
                        self.name.clone()
                    } else {
                        format!("{}#{}", self.name, pieces.len())
                    },
                    t0,
                    samples,
                    fixes,
                    tags: self.tags.clone(),
                    reverse_segments: self.reverse_segments.clone(),
                };
                if start == 0 {
                    // keep the anchor fix when the whole drive is covered
                    piece.fixes[0] = self.fixes[0];
                }
                pieces.push(piece);
            }
        }
        pieces
    }

    /// Sub-drive covering seconds `first..=last`.
    pub fn slice_seconds(&self, first: usize, last: usize) -> DriveRecord {
        assert!(first >= 1 && last <= self.seconds() && first <= last);
        DriveRecord {
            name: self.name.clone(),
            t0: self.second_end(first - 1),
            samples: self.samples[(first - 1) * SAMPLE_RATE_HZ..last * SAMPLE_RATE_HZ].to_vec(),
            fixes: self.fixes[first - 1..=last].to_vec(),
            tags: self.tags.clone(),
            reverse_segments: self.reverse_segments.clone(),
        }
    }
}

fn grid_time(t0: f64, tick: i64) -> f64 {
    t0 + tick as f64 / SAMPLE_RATE_HZ as f64
}

#[derive(Debug, Clone, Copy)]
struct Row {
    line: usize,
    t: f64,
    speeds: [f64; 4],
    fix: Option<GeoCoordinate>,
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<Row>> {
    let display = path.display().to_string();
    let schema = |line: usize, message: String| Error::Schema {
        path: display.clone(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| schema(1, "empty file".into()))?;
    if header.trim_end_matches('\r') != DRIVE_CSV_HEADER {
        return Err(schema(
            1,
            format!("expected header '{DRIVE_CSV_HEADER}', got '{header}'"),
        ));
    }
    let mut rows = Vec::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(schema(
                line,
                format!("expected 7 columns, got {}", fields.len()),
            ));
        }
        let num = |idx: usize| -> Result<f64> {
            let v: f64 = fields[idx]
                .trim()
                .parse()
                .map_err(|_| schema(line, format!("bad number '{}'", fields[idx])))?;
            if !v.is_finite() {
                return Err(schema(line, format!("non-finite value '{}'", fields[idx])));
            }
            Ok(v)
        };
        let t = num(0)?;
        let speeds = [num(1)?, num(2)?, num(3)?, num(4)?];
        let fix = match (fields[5].trim().is_empty(), fields[6].trim().is_empty()) {
            (true, true) => None,
            (false, false) => {
                let c = GeoCoordinate {
                    lat: num(5)?,
                    lon: num(6)?,
                };
                c.validate().map_err(|e| schema(line, e.to_string()))?;
                Some(c)
            }
            _ => {
                return Err(schema(
                    line,
                    "lat and lon must both be present or both empty".into(),
                ))
            }
        };
        if let Some(prev) = rows.last().map(|r: &Row| r.t) {
            if t <= prev {
                return Err(Error::TimestampOrder { t });
            }
        }
        rows.push(Row {
            line,
            t,
            speeds,
            fix,
        });
    }
    Ok(rows)
}

/// Reads a canonical drive CSV into contiguous segments. Wheel gaps longer
/// than one missing sample split the file; fixes are reduced to the one
/// nearest each whole second.
pub fn read_drive_segments(path: &Path) -> Result<Vec<DriveRecord>> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let rows = parse_rows(path, &text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "drive".into());

    // wheel grid
    let mut ticks: Vec<(i64, Row)> = Vec::with_capacity(rows.len());
    for row in &rows {
        let tick = (row.t * SAMPLE_RATE_HZ as f64).round() as i64;
        if (row.t - tick as f64 / SAMPLE_RATE_HZ as f64).abs() > GRID_JITTER_S + 1e-9 {
            return Err(Error::ExcessJitter {
                path: path.display().to_string(),
                line: row.line,
                t: row.t,
            });
        }
        if let Some(&(prev, _)) = ticks.last() {
            if tick == prev {
                return Err(Error::ExcessJitter {
                    path: path.display().to_string(),
                    line: row.line,
                    t: row.t,
                });
            }
        }
        ticks.push((tick, *row));
    }

    // nearest fix to each whole second
    let mut fixes: BTreeMap<i64, (f64, GeoCoordinate)> = BTreeMap::new();
    for row in &rows {
        if let Some(c) = row.fix {
            let sec = row.t.round() as i64;
            let off = (row.t - sec as f64).abs();
            if off <= GNSS_JITTER_TOLERANCE_S {
                let entry = fixes.entry(sec).or_insert((off, c));
                if off < entry.0 {
                    *entry = (off, c);
                }
            }
        }
    }

    let mut segments: Vec<&[(i64, Row)]> = Vec::new();
    let mut start = 0;
    for i in 1..=ticks.len() {
        if i == ticks.len() || ticks[i].0 - ticks[i - 1].0 > 1 {
            segments.push(&ticks[start..i]);
            start = i;
        }
    }

    let mut drives = Vec::new();
    for seg in segments {
        let (a, b) = (seg[0].0, seg[seg.len() - 1].0);
        let k_first = (a + 9).div_euclid(10) + i64::from((a + 9).rem_euclid(10) != 0);
        let k_last = b.div_euclid(10);
        if k_last < k_first {
            continue;
        }
        let t0_sec = k_first - 1;
        let samples: Vec<WheelSpeedSample> = seg
            .iter()
            .filter(|(tick, _)| *tick > t0_sec * 10 && *tick <= k_last * 10)
            .map(|(tick, row)| WheelSpeedSample {
                t: grid_time(t0_sec as f64, tick - t0_sec * 10),
                w_fl: row.speeds[0],
                w_fr: row.speeds[1],
                w_rl: row.speeds[2],
                w_rr: row.speeds[3],
            })
            .collect();
        let drive_fixes = (t0_sec..=k_last)
            .map(|s| fixes.get(&s).map(|&(_, c)| c))
            .collect();
        let seg_name = if drives.is_empty() {
            name.clone()
        } else {
            format!("{name}#{}", drives.len())
        };
        drives.push(DriveRecord::new(
            seg_name,
            t0_sec as f64,
            samples,
            drive_fixes,
        )?);
    }
    Ok(drives)
}

/// Reads a canonical drive CSV that must form a single contiguous drive.
pub fn read_drive_csv(path: &Path) -> Result<DriveRecord> {
    let mut segments = read_drive_segments(path)?;
    match segments.len() {
        0 => Err(Error::DriveTooShort {
            seconds: 0,
            needed: 1,
        }),
        1 => Ok(segments.remove(0)),
        n => Err(Error::Schema {
            path: path.display().to_string(),
            line: 0,
            message: format!("recording splits into {n} segments at wheel-data gaps"),
        }),
    }
}

/// Renders a drive in the canonical CSV layout.
pub fn format_drive_csv(drive: &DriveRecord) -> String {
    let mut out = String::with_capacity(drive.samples.len() * 64);
    out.push_str(DRIVE_CSV_HEADER);
    out.push('\n');
    for (i, s) in drive.samples.iter().enumerate() {
        let _ = write!(
            out,
            "{:.3},{},{},{},{}",
            s.t, s.w_fl, s.w_fr, s.w_rl, s.w_rr
        );
        let tick = i + 1;
        let fix = if tick % SAMPLE_RATE_HZ == 0 {
            drive.fix(tick / SAMPLE_RATE_HZ)
        } else {
            None
        };
        match fix {
            Some(c) => {
                let _ = writeln!(out, ",{},{}", c.lat, c.lon);
            }
            None => out.push_str(",,\n"),
        }
    }
    out
}

pub fn write_drive_csv(drive: &DriveRecord, path: &Path) -> Result<()> {
    fs::write(path, format_drive_csv(drive)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveRole {
    Train,
    Adapt,
    Test,
}

impl std::fmt::Display for DriveRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DriveRole::Train => "train",
            DriveRole::Adapt => "adapt",
            DriveRole::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDrive {
    pub path: PathBuf,
    pub role: DriveRole,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reverse_segments: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub domain_id: String,
    #[serde(default)]
    pub vehicle: BTreeMap<String, serde_json::Value>,
    pub drives: Vec<ManifestDrive>,
    /// Free-form provenance (e.g. simulator spec and seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn state_tags(&self) -> Vec<String> {
        self.vehicle
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }
}

/// A manifest's drives loaded and grouped by role.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub domain_id: String,
    pub state_tags: Vec<String>,
    pub train: Vec<DriveRecord>,
    pub adapt: Vec<DriveRecord>,
    pub test: Vec<DriveRecord>,
}

impl PartitionedDataset {
    pub fn drives(&self, role: DriveRole) -> &[DriveRecord] {
        match role {
            DriveRole::Train => &self.train,
            DriveRole::Adapt => &self.adapt,
            DriveRole::Test => &self.test,
        }
    }

    /// The drives of one partition as a `DomainDataset`.
    pub fn partition(&self, role: DriveRole, domain_role: DomainRole) -> Result<DomainDataset> {
        let drives = self.drives(role);
        if drives.is_empty() {
            return Err(Error::EmptyPartition(role.to_string()));
        }
        DomainDataset::new(
            &self.domain_id,
            domain_role,
            drives.to_vec(),
            self.state_tags.clone(),
        )
    }
}

/// Loads every drive named by a manifest. Drive paths resolve relative to
/// the manifest's directory. The adapt partition falls back to the train
/// drives (in manifest order) when the manifest names none.
pub fn load_manifest(path: &Path) -> Result<PartitionedDataset> {
    let manifest = DatasetManifest::read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut train = Vec::new();
    let mut adapt = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.drives {
        let drive_path = base.join(&entry.path);
        if !drive_path.exists() {
            return Err(Error::MissingFile(drive_path));
        }
        for mut drive in read_drive_segments(&drive_path)? {
            drive.tags = entry.tags.clone();
            drive.reverse_segments = entry.reverse_segments.clone();
            match entry.role {
                DriveRole::Train => train.push(drive),
                DriveRole::Adapt => adapt.push(drive),
                DriveRole::Test => test.push(drive),
            }
        }
    }
    if adapt.is_empty() {
        adapt = train.clone();
    }
    Ok(PartitionedDataset {
        domain_id: manifest.domain_id.clone(),
        state_tags: manifest.state_tags(),
        train,
        adapt,
        test,
    })
}
