use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use wheelodo::eval::{crse, predict_sequence, segment_outages, OutageScenario, Predictor};
use wheelodo::features::build_windows;
use wheelodo::geodesy::{vincenty_inverse, GeoCoordinate};
use wheelodo::ingest::{format_drive_csv, read_drive_csv, WheelSpeedSample};
use wheelodo::synth::{
    generate_drive, make_domain_pair, GroundTruth, ScenarioScript, SlipEvent, SpeedProfile,
    VehicleSpec, WheelScales, YawProfile,
};
use wheelodo::wheel_physics::{
    calibrate_radius, dead_reckon, rotate_to_nav, second_displacement, wpm_displacements,
    wpm_error_series, CalibrationParams, Pose2D,
};

const EQUATOR: GeoCoordinate = GeoCoordinate { lat: 0.0, lon: 0.0 };

fn script(name: &str, duration: usize, speed: SpeedProfile, yaw: YawProfile) -> ScenarioScript {
    let mut s = ScenarioScript::new(name, duration, speed, yaw, 11);
    s.origin = EQUATOR;
    s.initial_heading = 0.4;
    s
}

fn noiseless_scripts() -> Vec<ScenarioScript> {
    vec![
        script(
            "straight",
            60,
            SpeedProfile::Constant { speed: 3.0 },
            YawProfile::Straight,
        ),
        script(
            "weave",
            90,
            SpeedProfile::Sinusoidal {
                mean: 8.0,
                amplitude: 3.0,
                period: 25.0,
            },
            YawProfile::Sinusoidal {
                amplitude: 0.2,
                period: 30.0,
            },
        ),
        script(
            "stop-go",
            120,
            SpeedProfile::StopAndGo {
                cruise: 12.0,
                accel_s: 8.0,
                cruise_s: 10.0,
                brake_s: 3.0,
                stop_s: 4.0,
            },
            YawProfile::Turns {
                every: 20.0,
                duration: 6.0,
                rate: 0.3,
                alternate: true,
            },
        ),
    ]
}

#[test]
fn exact_radius_reproduces_true_displacement() {
    let spec = VehicleSpec::ideal(0.30);
    for s in noiseless_scripts() {
        let (drive, truth) = generate_drive(&spec, &s).unwrap();
        let cal = CalibrationParams::new(0.30).unwrap();
        let wpm = wpm_displacements(&drive, cal).unwrap();
        assert_eq!(wpm.len(), truth.seconds.len());
        for ((t, x), sec) in wpm.iter().zip(&truth.seconds) {
            assert_eq!(*t, sec.t);
            assert!(
                (x - sec.x_true).abs() < 1e-9,
                "{}: t={t} {x} vs {}",
                s.name,
                sec.x_true
            );
        }
    }
}

#[test]
fn simulator_error_matches_physics_model_error() {
    let spec = VehicleSpec::ideal(0.30);
    for s in noiseless_scripts() {
        let (drive, truth) = generate_drive(&spec, &s).unwrap();
        let series = wpm_error_series(&drive, CalibrationParams::new(0.30).unwrap()).unwrap();
        // second 1 has no fix at its start
        assert_eq!(series.len(), truth.seconds.len() - 1);
        for ((t, eps), sec) in series.iter().zip(&truth.seconds[1..]) {
            assert_eq!(*t, sec.t);
            assert!(
                (eps - sec.eps_true).abs() < 1e-9,
                "{}: t={t} {eps} vs {}",
                s.name,
                sec.eps_true
            );
        }
    }
}

#[test]
fn uneven_rear_tyres_under_read() {
    let mut spec = VehicleSpec::ideal(0.30);
    spec.scales = WheelScales {
        rl: 1.10,
        rr: 1.10,
        ..WheelScales::UNIT
    };
    let s = script(
        "tyres",
        40,
        SpeedProfile::Constant { speed: 3.0 },
        YawProfile::Straight,
    );
    let (drive, truth) = generate_drive(&spec, &s).unwrap();
    let expected = 3.0 * (1.0 / 1.1 - 1.0);
    assert!((expected + 0.2727f64).abs() < 1e-4);
    for (_, eps) in wpm_error_series(&drive, CalibrationParams::new(0.30).unwrap()).unwrap() {
        assert!((eps - expected).abs() < 1e-9);
    }
    for sec in &truth.seconds {
        assert!((sec.eps_true - expected).abs() < 1e-9);
    }
}

#[test]
fn slip_seconds_lose_half_the_distance() {
    let mut spec = VehicleSpec::ideal(0.30);
    spec.slip_events.push(SlipEvent {
        start: 10.0,
        duration: 2.0,
        factor: 0.5,
    });
    let s = script(
        "slip",
        30,
        SpeedProfile::Constant { speed: 3.0 },
        YawProfile::Straight,
    );
    let (drive, _) = generate_drive(&spec, &s).unwrap();
    for (t, eps) in wpm_error_series(&drive, CalibrationParams::new(0.30).unwrap()).unwrap() {
        let expected = if t == 11.0 || t == 12.0 { -1.5 } else { 0.0 };
        assert!((eps - expected).abs() < 1e-9, "t={t}: {eps}");
    }
}

#[test]
fn inflated_radius_accumulates_linearly_over_an_outage() {
    let s = script(
        "inflated",
        32,
        SpeedProfile::Constant { speed: 3.0 },
        YawProfile::Straight,
    );
    let (drive, _) = generate_drive(&VehicleSpec::ideal(0.30), &s).unwrap();
    let seqs = segment_outages(&drive, OutageScenario::new(30).unwrap()).unwrap();
    assert_eq!(seqs.len(), 1);
    let e = predict_sequence(&Predictor::Wpm { radius: 0.33 }, &seqs[0]).unwrap();
    assert!(e.iter().all(|v| (v - 0.3).abs() < 1e-9));
    assert!((crse(&e).unwrap() - 9.0).abs() < 1e-8);
    let exact = predict_sequence(&Predictor::Wpm { radius: 0.30 }, &seqs[0]).unwrap();
    assert!(exact.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn calibration_recovers_true_radius_on_a_straight_drive() {
    let s = script(
        "straight",
        60,
        SpeedProfile::Constant { speed: 3.0 },
        YawProfile::Straight,
    );
    let (drive, _) = generate_drive(&VehicleSpec::ideal(0.31), &s).unwrap();
    assert!((calibrate_radius(&drive).unwrap().r - 0.31).abs() < 1e-9);
}

#[test]
fn noisy_fixes_stay_inside_the_accuracy_disc() {
    let (a, b) = make_domain_pair(5).unwrap();
    for d in a.train.iter().chain(&b.test) {
        let fixes = &d.drive().fixes;
        for (k, truth) in d.truth().true_fixes.iter().enumerate().skip(1) {
            let noisy = fixes[k].unwrap();
            assert!(vincenty_inverse(*truth, noisy).unwrap() <= 3.0);
        }
    }
}

#[test]
fn seeded_generation_is_deterministic() {
    let (a1, b1) = make_domain_pair(9).unwrap();
    let (a2, b2) = make_domain_pair(9).unwrap();
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
    for (x, y) in b1.train.iter().zip(&b2.train) {
        assert_eq!(format_drive_csv(x.drive()), format_drive_csv(y.drive()));
    }
    let (a3, _) = make_domain_pair(10).unwrap();
    assert_ne!(a1.train_drives(), a3.train_drives());
}

#[test]
fn domain_pair_layout() {
    let (a, b) = make_domain_pair(1).unwrap();
    for d in [&a, &b] {
        let train: usize = d.train_drives().iter().map(|x| x.seconds()).sum();
        let test: usize = d.test_drives().iter().map(|x| x.seconds()).sum();
        assert!(train >= 1200 && test >= 800);
        let mut tags: Vec<&str> = d.test.iter().map(|x| x.drive().tags[0].as_str()).collect();
        tags.sort();
        assert_eq!(tags, ["cruise", "hard-brake", "roundabout", "stop-and-go"]);
    }
    assert_eq!(a.vehicle.r_true, 0.30);
    assert_eq!(b.vehicle.r_true, 0.33);
    assert!(b.train.iter().any(|d| !d.spec.slip_events.is_empty()));
}

#[test]
fn labels_align_with_the_newest_window_second() {
    let mut spec = VehicleSpec::ideal(0.30);
    spec.slip_events = vec![
        SlipEvent {
            start: 4.0,
            duration: 1.0,
            factor: 0.3,
        },
        SlipEvent {
            start: 9.0,
            duration: 2.0,
            factor: 0.6,
        },
    ];
    let s = script(
        "align",
        20,
        SpeedProfile::Constant { speed: 5.0 },
        YawProfile::Straight,
    );
    let (drive, truth) = generate_drive(&spec, &s).unwrap();
    let eps_at = |t: f64| truth.seconds.iter().find(|x| x.t == t).unwrap().eps_true;
    let windows = build_windows(&drive, CalibrationParams::new(0.30).unwrap()).unwrap();
    for w in &windows {
        assert!((w.eps - eps_at(w.window.t_end)).abs() < 1e-9);
        // the newest step carries that second's slip
        let rear = &w.window.step(1)[20..40];
        let expected = 5.0 / 0.30
            * (1.0
                - if w.window.t_end == 5.0 {
                    0.3
                } else if w.window.t_end == 10.0 || w.window.t_end == 11.0 {
                    0.6
                } else {
                    0.0
                });
        assert!(rear.iter().all(|v| (v - expected).abs() < 1e-9));
    }
}

#[test]
fn windows_are_bitwise_reproducible_from_file_bytes() {
    let s = script(
        "bytes",
        30,
        SpeedProfile::Constant { speed: 4.0 },
        YawProfile::Constant { rate: 0.05 },
    );
    let mut spec = VehicleSpec::ideal(0.3);
    spec.wheel_noise_std = 0.1;
    let (drive, _) = generate_drive(&spec, &s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, format_drive_csv(&drive)).unwrap();
    let cal = CalibrationParams::new(0.3).unwrap();
    let w1 = build_windows(&read_drive_csv(&path).unwrap(), cal).unwrap();
    let w2 = build_windows(&read_drive_csv(&path).unwrap(), cal).unwrap();
    assert_eq!(w1, w2);
    assert_eq!(w1, build_windows(&drive, cal).unwrap());
}

#[test]
fn truth_csv_header() {
    let s = script(
        "csv",
        3,
        SpeedProfile::Constant { speed: 1.0 },
        YawProfile::Straight,
    );
    let (_, truth): (_, GroundTruth) = generate_drive(&VehicleSpec::ideal(0.3), &s).unwrap();
    let csv = truth.to_csv();
    assert!(csv.starts_with("t,x_true,eps_true\n"));
    assert_eq!(csv.lines().count(), 4);
}

fn polygon(sides: usize, leg: f64, start_yaw: f64) -> Vec<(f64, f64)> {
    (0..sides)
        .map(|i| (leg, start_yaw + 2.0 * PI * i as f64 / sides as f64))
        .collect()
}

#[test]
fn square_returns_home() {
    let legs = vec![(5.0, 0.0), (5.0, FRAC_PI_2), (5.0, PI), (5.0, -FRAC_PI_2)];
    let poses = dead_reckon(Pose2D::ORIGIN, &legs).unwrap();
    let end = poses.last().unwrap();
    assert!(end.north.hypot(end.east) < 1e-9);
}

fn samples(speeds: &[f64]) -> Vec<WheelSpeedSample> {
    speeds
        .iter()
        .enumerate()
        .map(|(i, &w)| WheelSpeedSample {
            t: (i + 1) as f64 / 10.0,
            w_fl: w,
            w_fr: w,
            w_rl: w,
            w_rr: w,
        })
        .collect()
}

proptest! {
    #[test]
    fn closed_polygons_return_home(sides in 3usize..40, leg in 0.1f64..50.0, yaw in -PI..PI) {
        let poses = dead_reckon(Pose2D::ORIGIN, &polygon(sides, leg, yaw)).unwrap();
        let end = poses.last().unwrap();
        prop_assert!(end.north.hypot(end.east) < 1e-9);
    }

    #[test]
    fn rotation_preserves_length(d in -100.0f64..100.0, yaw in -10.0f64..10.0) {
        let (n, e) = rotate_to_nav(d, yaw);
        prop_assert!((n.hypot(e) - d.abs()).abs() < 1e-12);
    }

    #[test]
    fn displacement_is_linear(
        speeds in proptest::collection::vec(0.0f64..60.0, 10),
        r in 0.2f64..0.5,
        k in 0.1f64..3.0,
    ) {
        let base = second_displacement(&samples(&speeds), CalibrationParams::new(r).unwrap()).unwrap();
        let scaled_r = second_displacement(&samples(&speeds), CalibrationParams::new(r * k).unwrap()).unwrap();
        let scaled: Vec<f64> = speeds.iter().map(|w| w * k).collect();
        let scaled_w = second_displacement(&samples(&scaled), CalibrationParams::new(r).unwrap()).unwrap();
        prop_assert!((scaled_r - k * base).abs() < 1e-9 * (1.0 + base.abs()));
        prop_assert!((scaled_w - k * base).abs() < 1e-9 * (1.0 + base.abs()));
    }
}
