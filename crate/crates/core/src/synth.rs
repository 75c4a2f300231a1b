//! Synthetic drives with known kinematics and injected wheel-odometry
//! errors. The simulator is the oracle that makes the error model's
//! behaviour checkable without real recordings.
//!
//! Motion is integrated at 10 Hz in a local plane: at each sample the yaw
//! advances by `yaw_rate · 0.1` and the vehicle then moves `v · 0.1` along
//! the new heading. Once per second the planar chord is replayed on the
//! WGS-84 ellipsoid with a direct geodesic step, so consecutive GNSS fixes
//! are separated by exactly the chord length.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain_adapt::{DomainDataset, DomainRole};
use crate::error::{Error, Result};
use crate::geodesy::{GeoCoordinate, WGS84_A, WGS84_B, WGS84_F};
use crate::ingest::{
    write_drive_csv, DatasetManifest, DriveRecord, DriveRole, ManifestDrive, WheelSpeedSample,
    SAMPLE_PERIOD_S, SAMPLE_RATE_HZ,
};
use crate::wheel_physics::{normalize_yaw, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelScales {
    pub fl: f64,
    pub fr: f64,
    pub rl: f64,
    pub rr: f64,
}

impl WheelScales {
    pub const UNIT: WheelScales = WheelScales {
        fl: 1.0,
        fr: 1.0,
        rl: 1.0,
        rr: 1.0,
    };

    fn as_array(&self) -> [f64; 4] {
        [self.fl, self.fr, self.rl, self.rr]
    }
}

/// A stretch during which every wheel under-reads ground speed by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipEvent {
    pub start: f64,
    pub duration: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub r_true: f64,
    /// Effective-radius multipliers per wheel (tyre pressure, wear).
    pub scales: WheelScales,
    /// Gaussian wheel-speed noise, rad/s.
    pub wheel_noise_std: f64,
    #[serde(default)]
    pub slip_events: Vec<SlipEvent>,
    /// Lateral wheel spacing used for left/right speed differences in turns.
    #[serde(default = "default_track_width")]
    pub track_width: f64,
}

fn default_track_width() -> f64 {
    1.5
}

impl VehicleSpec {
    /// Exact wheels: unit scales, no noise, no slip.
    pub fn ideal(r_true: f64) -> VehicleSpec {
        VehicleSpec {
            r_true,
            scales: WheelScales::UNIT,
            wheel_noise_std: 0.0,
            slip_events: Vec::new(),
            track_width: default_track_width(),
        }
    }

    fn validate(&self, duration: f64) -> Result<()> {
        if !(self.r_true > 0.0 && self.r_true.is_finite()) {
            return Err(Error::InvalidScript(format!(
                "r_true must be positive, got {}",
                self.r_true
            )));
        }
        if self
            .scales
            .as_array()
            .iter()
            .any(|s| !(0.8..=1.2).contains(s))
        {
            return Err(Error::InvalidScript(
                "wheel scale factors must lie in [0.8, 1.2]".into(),
            ));
        }
        if self.wheel_noise_std.is_nan() || self.wheel_noise_std < 0.0 {
            return Err(Error::InvalidScript(
                "wheel noise must be non-negative".into(),
            ));
        }
        for e in &self.slip_events {
            if !(0.0..1.0).contains(&e.factor)
                || e.start < 0.0
                || e.duration <= 0.0
                || e.start + e.duration > duration
            {
                return Err(Error::InvalidScript(format!("slip event {e:?} is invalid")));
            }
        }
        Ok(())
    }

    fn slip_at(&self, t: f64) -> f64 {
        self.slip_events
            .iter()
            .filter(|e| t > e.start && t <= e.start + e.duration + 1e-9)
            .map(|e| e.factor)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant {
        speed: f64,
    },
    /// Linear change from `from` to `to` over the whole drive.
    Ramp {
        from: f64,
        to: f64,
    },
    /// Repeating accelerate / cruise / brake / stand-still cycle.
    StopAndGo {
        cruise: f64,
        accel_s: f64,
        cruise_s: f64,
        brake_s: f64,
        stop_s: f64,
    },
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl SpeedProfile {
    fn speed(&self, t: f64, duration: f64) -> f64 {
        let v = match *self {
            SpeedProfile::Constant { speed } => speed,
            SpeedProfile::Ramp { from, to } => from + (to - from) * (t / duration).clamp(0.0, 1.0),
            SpeedProfile::StopAndGo {
                cruise,
                accel_s,
                cruise_s,
                brake_s,
                stop_s,
            } => {
                let cycle = accel_s + cruise_s + brake_s + stop_s;
                let p = t.rem_euclid(cycle);
                if p < accel_s {
                    cruise * p / accel_s
                } else if p < accel_s + cruise_s {
                    cruise
                } else if p < accel_s + cruise_s + brake_s {
                    cruise * (1.0 - (p - accel_s - cruise_s) / brake_s)
                } else {
                    0.0
                }
            }
            SpeedProfile::Sinusoidal {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (TAU * t / period).sin(),
        };
        v.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YawProfile {
    Straight,
    Constant {
        rate: f64,
    },
    Sinusoidal {
        amplitude: f64,
        period: f64,
    },
    /// A turn of `rate` rad/s lasting `duration` s at the start of every
    /// `every` s; `alternate` flips the direction each time.
    Turns {
        every: f64,
        duration: f64,
        rate: f64,
        alternate: bool,
    },
}

impl YawProfile {
    fn rate(&self, t: f64) -> f64 {
        match *self {
            YawProfile::Straight => 0.0,
            YawProfile::Constant { rate } => rate,
            YawProfile::Sinusoidal { amplitude, period } => amplitude * (TAU * t / period).sin(),
            YawProfile::Turns {
                every,
                duration,
                rate,
                alternate,
            } => {
                let n = (t / every).floor();
                if t - n * every < duration {
                    if alternate && (n as i64) % 2 == 1 {
                        -rate
                    } else {
                        rate
                    }
                } else {
                    0.0
                }
            }
        }
    }
}

fn default_gnss_step() -> f64 {
    0.03
}

fn default_origin() -> GeoCoordinate {
    GeoCoordinate {
        lat: 52.0,
        lon: -1.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    /// Whole seconds.
    pub duration: usize,
    pub speed: SpeedProfile,
    pub yaw_rate: YawProfile,
    /// Perturb fixes within the 3 m accuracy disc.
    #[serde(default)]
    pub gnss_noise: bool,
    /// Per-axis standard deviation of the per-second random-walk step of the
    /// GNSS error, meters.
    #[serde(default = "default_gnss_step")]
    pub gnss_step_std: f64,
    #[serde(default = "default_origin")]
    pub origin: GeoCoordinate,
    #[serde(default)]
    pub initial_heading: f64,
    #[serde(default)]
    pub tags: Vec<String>,
    pub seed: u64,
}

impl ScenarioScript {
    pub fn new(
        name: impl Into<String>,
        duration: usize,
        speed: SpeedProfile,
        yaw_rate: YawProfile,
        seed: u64,
    ) -> Self {
        ScenarioScript {
            name: name.into(),
            duration,
            speed,
            yaw_rate,
            gnss_noise: false,
            gnss_step_std: default_gnss_step(),
            origin: default_origin(),
            initial_heading: 0.0,
            tags: Vec::new(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.duration < 2 {
            return Err(Error::InvalidScript("duration must be at least 2 s".into()));
        }
        self.origin
            .validate()
            .map_err(|e| Error::InvalidScript(e.to_string()))?;
        let bad = match &self.speed {
            SpeedProfile::Constant { speed } => *speed < 0.0,
            SpeedProfile::Ramp { from, to } => *from < 0.0 || *to < 0.0,
            SpeedProfile::StopAndGo {
                cruise,
                accel_s,
                cruise_s,
                brake_s,
                stop_s,
            } => {
                *cruise < 0.0
                    || *accel_s <= 0.0
                    || *brake_s <= 0.0
                    || *cruise_s < 0.0
                    || *stop_s < 0.0
            }
            SpeedProfile::Sinusoidal {
                mean,
                amplitude,
                period,
            } => *mean - amplitude.abs() < 0.0 || *period <= 0.0,
        };
        if bad {
            return Err(Error::InvalidScript(format!(
                "speed profile {:?} is invalid",
                self.speed
            )));
        }
        if let YawProfile::Turns {
            every, duration, ..
        } = self.yaw_rate
        {
            if every <= 0.0 || duration < 0.0 {
                return Err(Error::InvalidScript("turn schedule is invalid".into()));
            }
        }
        if self.gnss_step_std.is_nan() || self.gnss_step_std < 0.0 {
            return Err(Error::InvalidScript(
                "gnss_step_std must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Exact quantities for one second of a synthetic drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSecond {
    pub t: f64,
    /// Distance travelled along the path.
    pub x_true: f64,
    /// Straight-line distance between the second's true end positions.
    pub chord: f64,
    /// Noise-free integrated rear-axle rotation, rad.
    pub axle_rotation: f64,
    /// Physics-model error with the true radius against the true fixes.
    pub eps_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seconds: Vec<TruthSecond>,
    /// Planar pose at every whole second, starting at t = 0.
    pub poses: Vec<Pose2D>,
    /// Noise-free fixes at every whole second, starting at t = 0.
    pub true_fixes: Vec<GeoCoordinate>,
}

impl GroundTruth {
    /// ε of a physics model using wheel radius `r`, against true positions.
    pub fn eps_for_radius(&self, r: f64) -> Vec<(f64, f64)> {
        self.seconds
            .iter()
            .map(|s| (s.t, r * s.axle_rotation - s.chord))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x_true,eps_true\n");
        for s in &self.seconds {
            out.push_str(&format!("{:.3},{},{}\n", s.t, s.x_true, s.eps_true));
        }
        out
    }
}

/// Solves the direct geodesic problem (Vincenty): the point `distance`
/// meters from `start` along initial azimuth `azimuth` (radians).
pub fn vincenty_direct(start: GeoCoordinate, azimuth: f64, distance: f64) -> Result<GeoCoordinate> {
    if distance == 0.0 {
        return Ok(start);
    }
    let (a, b, f) = (WGS84_A, WGS84_B, WGS84_F);
    let (sin_a1, cos_a1) = azimuth.sin_cos();
    let tan_u1 = (1.0 - f) * start.lat.to_radians().tan();
    let cos_u1 = 1.0 / (1.0 + tan_u1 * tan_u1).sqrt();
    let sin_u1 = tan_u1 * cos_u1;
    let sigma1 = tan_u1.atan2(cos_a1);
    let sin_alpha = cos_u1 * sin_a1;
    let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
    let u_sq = cos_sq_alpha * (a * a - b * b) / (b * b);
    let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));

    let mut sigma = distance / (b * big_a);
    let mut iterations = 0;
    let (sin_sigma, cos_sigma, cos_2sigma_m) = loop {
        let cos_2sigma_m = (2.0 * sigma1 + sigma).cos();
        let (sin_sigma, cos_sigma) = sigma.sin_cos();
        let delta_sigma = big_b
            * sin_sigma
            * (cos_2sigma_m
                + big_b / 4.0
                    * (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)
                        - big_b / 6.0
                            * cos_2sigma_m
                            * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                            * (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
        let next = distance / (b * big_a) + delta_sigma;
        iterations += 1;
        if (next - sigma).abs() < 1e-14 {
            sigma = next;
            let (s, c) = sigma.sin_cos();
            break (s, c, (2.0 * sigma1 + sigma).cos());
        }
        if iterations > 200 {
            return Err(Error::NonConvergence { iterations });
        }
        sigma = next;
    };

    let tmp = sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_a1;
    let lat2 = (sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_a1)
        .atan2((1.0 - f) * (sin_alpha * sin_alpha + tmp * tmp).sqrt());
    let lambda = (sin_sigma * sin_a1).atan2(cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_a1);
    let c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
    let l = lambda
        - (1.0 - c)
            * f
            * sin_alpha
            * (sigma
                + c * sin_sigma
                    * (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
    let mut lon = start.lon + l.to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon <= -180.0 {
        lon += 360.0;
    }
    GeoCoordinate::new(lat2.to_degrees(), lon)
}

/// Reflecting random walk confined to a disc. Proposals leaving the disc
/// are rejected, which keeps the stationary distribution uniform over the
/// disc while making consecutive errors strongly correlated.
struct DiscWalk {
    radius: f64,
    step: Normal<f64>,
    north: f64,
    east: f64,
}

impl DiscWalk {
    fn new(radius: f64, step_std: f64, rng: &mut ChaCha8Rng) -> DiscWalk {
        let (north, east) = loop {
            let n = rng.random_range(-radius..radius);
            let e = rng.random_range(-radius..radius);
            if n * n + e * e < radius * radius {
                break (n, e);
            }
        };
        DiscWalk {
            radius,
            step: Normal::new(0.0, step_std.max(0.0)).expect("valid std"),
            north,
            east,
        }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let n = self.north + self.step.sample(rng);
        let e = self.east + self.step.sample(rng);
        if n * n + e * e < self.radius * self.radius {
            self.north = n;
            self.east = e;
        }
        (self.north, self.east)
    }
}

/// Tightest turn the simulated vehicle can make, meters.
pub const MIN_TURN_RADIUS_M: f64 = 5.0;

/// GNSS accuracy disc radius, meters.
pub const GNSS_NOISE_RADIUS_M: f64 = 3.0;

/// Simulates one drive: 10 Hz wheel speeds
/// `ω = v_w / (r_true · scale_w) · (1 − slip) + noise` (clamped at zero),
/// and 1 Hz fixes on the ellipsoid, optionally perturbed within 3 m.
pub fn generate_drive(
    spec: &VehicleSpec,
    script: &ScenarioScript,
) -> Result<(DriveRecord, GroundTruth)> {
    script.validate()?;
    spec.validate(script.duration as f64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let noise =
        Normal::new(0.0, spec.wheel_noise_std).map_err(|e| Error::InvalidScript(e.to_string()))?;
    let scales = spec.scales.as_array();
    let duration = script.duration as f64;

    let ticks = script.duration * SAMPLE_RATE_HZ;
    let mut samples = Vec::with_capacity(ticks);
    let mut heading = script.initial_heading;
    let (mut north, mut east) = (0.0_f64, 0.0_f64);
    let mut poses = vec![Pose2D {
        north,
        east,
        yaw: normalize_yaw(heading),
    }];
    let mut true_fixes = vec![script.origin];
    let mut truth = Vec::with_capacity(script.duration);
    let mut x_acc = 0.0;
    let mut rot_acc = 0.0;

    for tick in 1..=ticks {
        let t = tick as f64 / SAMPLE_RATE_HZ as f64;
        let v = script.speed.speed(t, duration);
        // no tighter than the turning circle, so no wheel ever runs backwards
        let limit = v / MIN_TURN_RADIUS_M;
        let yaw_rate = script.yaw_rate.rate(t).clamp(-limit, limit);
        heading += yaw_rate * SAMPLE_PERIOD_S;
        north += v * SAMPLE_PERIOD_S * heading.cos();
        east += v * SAMPLE_PERIOD_S * heading.sin();

        // positive yaw rate turns right (clockwise seen from above)
        let half = yaw_rate * spec.track_width / 2.0;
        let wheel_v = [v + half, v - half, v + half, v - half];
        let keep = 1.0 - spec.slip_at(t);
        let mut w = [0.0; 4];
        let mut clean = [0.0; 4];
        for i in 0..4 {
            clean[i] = (wheel_v[i] / (spec.r_true * scales[i]) * keep).max(0.0);
            let n = if spec.wheel_noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            w[i] = (clean[i] + n).max(0.0);
        }
        samples.push(WheelSpeedSample {
            t,
            w_fl: w[0],
            w_fr: w[1],
            w_rl: w[2],
            w_rr: w[3],
        });
        x_acc += v * SAMPLE_PERIOD_S;
        rot_acc += (clean[2] + clean[3]) / 2.0 * SAMPLE_PERIOD_S;

        if tick % SAMPLE_RATE_HZ == 0 {
            let prev = *poses.last().expect("start pose");
            let (dn, de) = (north - prev.north, east - prev.east);
            let chord = dn.hypot(de);
            let bearing = de.atan2(dn);
            let fix = vincenty_direct(*true_fixes.last().expect("origin"), bearing, chord)?;
            true_fixes.push(fix);
            poses.push(Pose2D {
                north,
                east,
                yaw: normalize_yaw(heading),
            });
            truth.push(TruthSecond {
                t,
                x_true: x_acc,
                chord,
                axle_rotation: rot_acc,
                eps_true: spec.r_true * rot_acc - chord,
            });
            x_acc = 0.0;
            rot_acc = 0.0;
        }
    }

    let mut fixes: Vec<Option<GeoCoordinate>> = Vec::with_capacity(true_fixes.len());
    if script.gnss_noise {
        let mut walk = DiscWalk::new(GNSS_NOISE_RADIUS_M, script.gnss_step_std, &mut rng);
        for (k, f) in true_fixes.iter().enumerate() {
            let (n, e) = if k == 0 {
                (walk.north, walk.east)
            } else {
                walk.advance(&mut rng)
            };
            fixes.push(Some(vincenty_direct(*f, e.atan2(n), n.hypot(e))?));
        }
    } else {
        fixes.extend(true_fixes.iter().copied().map(Some));
    }
    // canonical drives carry no fix at t = 0 (there is no sample row for it)
    fixes[0] = None;

    let mut drive = DriveRecord::new(script.name.clone(), 0.0, samples, fixes)?;
    drive.tags = script.tags.clone();
    Ok((
        drive,
        GroundTruth {
            seconds: truth,
            poses,
            true_fixes,
        },
    ))
}

/// One generated drive with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDrive {
    pub spec: VehicleSpec,
    pub script: ScenarioScript,
    #[serde(skip)]
    pub drive: Option<DriveRecord>,
    #[serde(skip)]
    pub truth: Option<GroundTruth>,
}

impl SyntheticDrive {
    pub fn drive(&self) -> &DriveRecord {
        self.drive.as_ref().expect("generated drive")
    }

    pub fn truth(&self) -> &GroundTruth {
        self.truth.as_ref().expect("generated truth")
    }
}

/// A simulated vehicle with train and test drives.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub domain_id: String,
    pub vehicle: VehicleSpec,
    pub train: Vec<SyntheticDrive>,
    pub test: Vec<SyntheticDrive>,
}

impl SyntheticDomain {
    pub fn train_drives(&self) -> Vec<DriveRecord> {
        self.train.iter().map(|d| d.drive().clone()).collect()
    }

    pub fn test_drives(&self) -> Vec<DriveRecord> {
        self.test.iter().map(|d| d.drive().clone()).collect()
    }

    pub fn dataset(&self, role: DomainRole, train: bool) -> Result<DomainDataset> {
        let drives = if train {
            self.train_drives()
        } else {
            self.test_drives()
        };
        DomainDataset::new(&self.domain_id, role, drives, self.state_tags())
    }

    pub fn state_tags(&self) -> Vec<String> {
        let s = &self.vehicle;
        vec![
            format!("r_true={}", s.r_true),
            format!("rear_scales={}/{}", s.scales.rl, s.scales.rr),
            format!("wheel_noise_std={}", s.wheel_noise_std),
        ]
    }
}

/// Scenario classes used for synthetic corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioClass {
    Cruise,
    StopAndGo,
    HardBrake,
    Roundabout,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 4] = [
        ScenarioClass::StopAndGo,
        ScenarioClass::Roundabout,
        ScenarioClass::HardBrake,
        ScenarioClass::Cruise,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ScenarioClass::Cruise => "cruise",
            ScenarioClass::StopAndGo => "stop-and-go",
            ScenarioClass::HardBrake => "hard-brake",
            ScenarioClass::Roundabout => "roundabout",
        }
    }

    /// A randomized script of this class.
    pub fn script(&self, name: String, duration: usize, rng: &mut ChaCha8Rng) -> ScenarioScript {
        let (speed, yaw) = match self {
            ScenarioClass::Cruise => (
                SpeedProfile::Sinusoidal {
                    mean: rng.random_range(9.0..12.0),
                    amplitude: rng.random_range(1.0..3.0),
                    period: rng.random_range(60.0..120.0),
                },
                YawProfile::Sinusoidal {
                    amplitude: rng.random_range(0.02..0.06),
                    period: rng.random_range(40.0..90.0),
                },
            ),
            ScenarioClass::StopAndGo => (
                SpeedProfile::StopAndGo {
                    cruise: rng.random_range(7.0..12.0),
                    accel_s: rng.random_range(6.0..10.0),
                    cruise_s: rng.random_range(8.0..15.0),
                    brake_s: rng.random_range(4.0..7.0),
                    stop_s: rng.random_range(3.0..6.0),
                },
                YawProfile::Turns {
                    every: rng.random_range(25.0..40.0),
                    duration: rng.random_range(5.0..8.0),
                    rate: rng.random_range(0.15..0.3),
                    alternate: true,
                },
            ),
            ScenarioClass::HardBrake => (
                SpeedProfile::StopAndGo {
                    cruise: rng.random_range(11.0..15.0),
                    accel_s: rng.random_range(10.0..14.0),
                    cruise_s: rng.random_range(10.0..20.0),
                    brake_s: rng.random_range(2.0..3.0),
                    stop_s: rng.random_range(2.0..4.0),
                },
                YawProfile::Straight,
            ),
            ScenarioClass::Roundabout => (
                SpeedProfile::Sinusoidal {
                    mean: rng.random_range(6.0..8.0),
                    amplitude: rng.random_range(1.5..3.0),
                    period: rng.random_range(20.0..35.0),
                },
                YawProfile::Turns {
                    every: rng.random_range(20.0..30.0),
                    duration: rng.random_range(8.0..12.0),
                    rate: rng.random_range(0.3..0.45),
                    alternate: false,
                },
            ),
        };
        let mut script = ScenarioScript::new(name, duration, speed, yaw, rng.random());
        script.initial_heading = rng.random_range(-PI..PI);
        script.tags = vec![self.tag().to_string()];
        script
    }
}

/// Layout of a synthetic domain corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusLayout {
    /// Training drive length per scenario class, seconds.
    pub train_drive_s: usize,
    /// Test drive length per scenario class, seconds.
    pub test_drive_s: usize,
    pub gnss_noise: bool,
}

impl Default for CorpusLayout {
    fn default() -> Self {
        CorpusLayout {
            train_drive_s: 300,
            test_drive_s: 200,
            gnss_noise: true,
        }
    }
}

/// Random slip events: short stretches where the wheels under-read.
fn random_slips(duration: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<SlipEvent> {
    let mut events: Vec<SlipEvent> = Vec::new();
    for _ in 0..count {
        let len = rng.random_range(1..=3) as f64;
        let start = rng.random_range(5..duration.saturating_sub(5).max(6)) as f64;
        if start + len > duration as f64 {
            continue;
        }
        events.push(SlipEvent {
            start,
            duration: len,
            factor: rng.random_range(0.1..0.4),
        });
    }
    events
}

/// Generates a corpus for one vehicle: one drive per scenario class for
/// training and one per class for testing.
pub fn generate_domain(
    domain_id: &str,
    vehicle: &VehicleSpec,
    slips_per_drive: usize,
    layout: CorpusLayout,
    seed: u64,
) -> Result<SyntheticDomain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make =
        |split: &str, duration: usize, rng: &mut ChaCha8Rng| -> Result<Vec<SyntheticDrive>> {
            ScenarioClass::ALL
                .iter()
                .map(|class| {
                    let name = format!("{domain_id}_{split}_{}", class.tag());
                    let mut script = class.script(name, duration, rng);
                    script.gnss_noise = layout.gnss_noise;
                    let mut spec = vehicle.clone();
                    spec.slip_events
                        .extend(random_slips(duration, slips_per_drive, rng));
                    let (drive, truth) = generate_drive(&spec, &script)?;
                    Ok(SyntheticDrive {
                        spec,
                        script,
                        drive: Some(drive),
                        truth: Some(truth),
                    })
                })
                .collect()
        };
    let train = make("train", layout.train_drive_s, &mut rng)?;
    let test = make("test", layout.test_drive_s, &mut rng)?;
    Ok(SyntheticDomain {
        domain_id: domain_id.to_string(),
        vehicle: vehicle.clone(),
        train,
        test,
    })
}

/// Source vehicle A: exact tyres, light noise.
pub fn vehicle_a() -> VehicleSpec {
    VehicleSpec {
        r_true: 0.30,
        scales: WheelScales::UNIT,
        wheel_noise_std: 0.05,
        slip_events: Vec::new(),
        track_width: default_track_width(),
    }
}

/// Target vehicle B: larger rolling radius, uneven rear tyres, more noise.
pub fn vehicle_b() -> VehicleSpec {
    VehicleSpec {
        r_true: 0.33,
        scales: WheelScales {
            fl: 1.0,
            fr: 1.0,
            rl: 1.03,
            rr: 0.97,
        },
        wheel_noise_std: 0.10,
        slip_events: Vec::new(),
        track_width: default_track_width(),
    }
}

/// Slip events per drive for vehicle B.
pub const VEHICLE_B_SLIPS_PER_DRIVE: usize = 2;

/// The synthetic source/target pair.
pub fn make_domain_pair(seed: u64) -> Result<(SyntheticDomain, SyntheticDomain)> {
    make_domain_pair_with(seed, CorpusLayout::default())
}

pub fn make_domain_pair_with(
    seed: u64,
    layout: CorpusLayout,
) -> Result<(SyntheticDomain, SyntheticDomain)> {
    let mut domains = generate_domains(&default_domain_specs(), layout, seed)?.into_iter();
    let a = domains.next().expect("two domains");
    let b = domains.next().expect("two domains");
    Ok((a, b))
}

/// One simulated vehicle of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: String,
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub slips_per_drive: usize,
}

/// Vehicles A and B.
pub fn default_domain_specs() -> Vec<DomainSpec> {
    vec![
        DomainSpec {
            id: "A".into(),
            vehicle: vehicle_a(),
            slips_per_drive: 0,
        },
        DomainSpec {
            id: "B".into(),
            vehicle: vehicle_b(),
            slips_per_drive: VEHICLE_B_SLIPS_PER_DRIVE,
        },
    ]
}

/// Generates every domain; each gets its own seed drawn from `seed`.
pub fn generate_domains(
    specs: &[DomainSpec],
    layout: CorpusLayout,
    seed: u64,
) -> Result<Vec<SyntheticDomain>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = specs.iter().map(|_| rng.random()).collect();
    specs
        .iter()
        .zip(seeds)
        .map(|(s, domain_seed)| {
            generate_domain(&s.id, &s.vehicle, s.slips_per_drive, layout, domain_seed)
        })
        .collect()
}

/// Writes a domain as drive CSVs, per-drive ground truth and a manifest.
/// Returns the manifest path.
pub fn write_domain(domain: &SyntheticDomain, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut drives = Vec::new();
    let mut generated = Vec::new();
    for (role, list) in [
        (DriveRole::Train, &domain.train),
        (DriveRole::Test, &domain.test),
    ] {
        for d in list {
            let drive = d.drive();
            let file = format!("{}.csv", drive.name);
            write_drive_csv(drive, &dir.join(&file))?;
            let truth = dir.join(format!("{}.groundtruth.csv", drive.name));
            fs::write(&truth, d.truth().to_csv()).map_err(|e| Error::io(&truth, e))?;
            drives.push(ManifestDrive {
                path: PathBuf::from(file),
                role,
                tags: drive.tags.clone(),
                reverse_segments: Vec::new(),
            });
            generated.push(serde_json::to_value(d)?);
        }
    }
    let vehicle = match serde_json::to_value(&domain.vehicle)? {
        serde_json::Value::Object(map) => map.into_iter().collect(),
        _ => Default::default(),
    };
    let manifest = DatasetManifest {
        domain_id: domain.domain_id.clone(),
        vehicle,
        drives,
        generator: Some(serde_json::json!({
            "gnss_noise": format!("reflecting random walk in a {GNSS_NOISE_RADIUS_M} m disc"),
            "drives": generated,
        })),
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}
