//! Wheel encoder physics model: rear-axle speed, v = ωr, per-second
//! displacement, yaw rotation into the navigation frame, dead reckoning,
//! and radius calibration against GNSS.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::vincenty_inverse;
use crate::ingest::{DriveRecord, WheelSpeedSample, SAMPLE_PERIOD_S, SAMPLE_RATE_HZ};

/// Plausible wheel radii for passenger cars, in meters.
pub const PLAUSIBLE_RADIUS_M: (f64, f64) = (0.2, 0.5);
const MIN_CALIBRATION_SECONDS: usize = 30;
const MIN_CALIBRATION_DISPLACEMENT_M: f64 = 0.5;

/// Maps rear-axle angular speed to linear velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub r: f64,
}

impl CalibrationParams {
    pub fn new(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "wheel radius must be positive, got {r}"
            )));
        }
        Ok(CalibrationParams { r })
    }

    pub fn is_plausible(&self) -> bool {
        (PLAUSIBLE_RADIUS_M.0..=PLAUSIBLE_RADIUS_M.1).contains(&self.r)
    }
}

/// Planar pose in the navigation frame; `yaw` is clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub north: f64,
    pub east: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub const ORIGIN: Pose2D = Pose2D {
        north: 0.0,
        east: 0.0,
        yaw: 0.0,
    };
}

/// Wraps an angle into (−π, π].
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn rear_axle_speed(w_rl: f64, w_rr: f64) -> f64 {
    (w_rl + w_rr) / 2.0
}

pub fn linear_velocity(w_axle: f64, cal: CalibrationParams) -> f64 {
    w_axle * cal.r
}

/// Rectangular sum of the rear-axle velocity over one second of 10 Hz samples.
pub fn second_displacement(samples: &[WheelSpeedSample], cal: CalibrationParams) -> Result<f64> {
    if samples.len() != SAMPLE_RATE_HZ {
        return Err(Error::WrongSampleCount {
            expected: SAMPLE_RATE_HZ,
            got: samples.len(),
        });
    }
    Ok(samples
        .iter()
        .map(|s| linear_velocity(rear_axle_speed(s.w_rl, s.w_rr), cal) * SAMPLE_PERIOD_S)
        .sum())
}

/// Applies the planar part of the body-to-navigation rotation to a forward
/// displacement, returning (north, east).
pub fn rotate_to_nav(dx_body: f64, yaw: f64) -> (f64, f64) {
    let (s, c) = yaw.sin_cos();
    // [c -s; s c] · [dx, 0]
    (c * dx_body, s * dx_body)
}

/// Integrates per-second (forward displacement, yaw) pairs from `start`.
/// The output includes `start`.
pub fn dead_reckon(start: Pose2D, per_second: &[(f64, f64)]) -> Result<Vec<Pose2D>> {
    if per_second.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut poses = Vec::with_capacity(per_second.len() + 1);
    poses.push(start);
    let mut pose = start;
    for &(dx, yaw) in per_second {
        let (dn, de) = rotate_to_nav(dx, yaw);
        pose = Pose2D {
            north: pose.north + dn,
            east: pose.east + de,
            yaw: normalize_yaw(yaw),
        };
        poses.push(pose);
    }
    Ok(poses)
}

/// Sign applied to the wheel-derived displacement of second `k`.
fn direction(drive: &DriveRecord, k: usize) -> f64 {
    if drive.is_reverse(k) {
        -1.0
    } else {
        1.0
    }
}

/// Wheel-derived displacement of every second of the drive.
pub fn wpm_displacements(drive: &DriveRecord, cal: CalibrationParams) -> Result<Vec<(f64, f64)>> {
    (1..=drive.seconds())
        .map(|k| {
            let x = second_displacement(drive.second_samples(k), cal)?;
            Ok((drive.second_end(k), direction(drive, k) * x))
        })
        .collect()
}

/// GNSS displacement for each second that has fixes at both ends; leading
/// and trailing seconds without fixes are skipped, interior gaps are errors.
fn labelled_seconds(drive: &DriveRecord) -> Result<Vec<(usize, f64)>> {
    let n = drive.seconds();
    let has = |k: usize| drive.fix(k - 1).is_some() && drive.fix(k).is_some();
    let first = (1..=n).find(|&k| has(k));
    let Some(first) = first else {
        return Err(Error::AlignmentGap { second: 1 });
    };
    let last = (first..=n).rev().find(|&k| has(k)).unwrap_or(first);
    (first..=last)
        .map(|k| match (drive.fix(k - 1), drive.fix(k)) {
            (Some(a), Some(b)) => Ok((k, direction(drive, k) * vincenty_inverse(a, b)?)),
            _ => Err(Error::AlignmentGap { second: k as i64 }),
        })
        .collect()
}

/// Per-second GNSS displacement keyed by second index.
pub fn gnss_displacements(drive: &DriveRecord) -> Result<Vec<(usize, f64)>> {
    labelled_seconds(drive)
}

/// The physics model's per-second error ε = x_wheel − x_gnss. This is both
/// the dead reckoner's residual and the recurrent model's training target.
pub fn wpm_error_series(drive: &DriveRecord, cal: CalibrationParams) -> Result<Vec<(f64, f64)>> {
    labelled_seconds(drive)?
        .into_iter()
        .map(|(k, x_gnss)| {
            let x_wheel = direction(drive, k) * second_displacement(drive.second_samples(k), cal)?;
            Ok((drive.second_end(k), x_wheel - x_gnss))
        })
        .collect()
}

/// Least-squares wheel radius from seconds with clear motion:
/// r = Σ(ω̄ᵢ xᵢ) / Σ(ω̄ᵢ²), ω̄ᵢ being the integrated axle rotation.
pub fn calibrate_radius(drive: &DriveRecord) -> Result<CalibrationParams> {
    calibrate_radius_multi(std::slice::from_ref(drive))
}

/// Pools the calibration sums over several drives.
pub fn calibrate_radius_multi(drives: &[DriveRecord]) -> Result<CalibrationParams> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut qualifying = 0;
    for drive in drives {
        for piece in drive.split_at_gnss_gaps() {
            for (k, x) in labelled_seconds(&piece)? {
                if x.abs() <= MIN_CALIBRATION_DISPLACEMENT_M {
                    continue;
                }
                let rotation: f64 = piece
                    .second_samples(k)
                    .iter()
                    .map(|s| rear_axle_speed(s.w_rl, s.w_rr) * SAMPLE_PERIOD_S)
                    .sum::<f64>()
                    * direction(&piece, k);
                num += rotation * x;
                den += rotation * rotation;
                qualifying += 1;
            }
        }
    }
    if qualifying < MIN_CALIBRATION_SECONDS || den <= 0.0 {
        return Err(Error::InsufficientMotion {
            qualifying,
            needed: MIN_CALIBRATION_SECONDS,
        });
    }
    CalibrationParams::new(num / den)
}
