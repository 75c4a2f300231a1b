use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wheelodo::eval::{
    compare_models, crse, cte, segment_outages, Contender, OutageScenario, Predictor, Stats, POOLED,
};
use wheelodo::features::{build_feature_windows, FeatureWindow, LabeledWindow, Range, Scaler};
use wheelodo::synth::make_domain_pair;

fn labeled(rows: &[(Vec<f64>, f64)]) -> Vec<LabeledWindow> {
    rows.iter()
        .enumerate()
        .map(|(i, (v, e))| LabeledWindow {
            window: FeatureWindow::new(i as f64 + 2.0, v.clone()).unwrap(),
            eps: *e,
        })
        .collect()
}

fn rows() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    vec((vec(0.0f64..120.0, 80), -3.0f64..3.0), 2..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaler_round_trips_training_values(data in rows()) {
        let windows = labeled(&data);
        let scaler = Scaler::fit(&windows).unwrap();
        for w in &windows {
            let scaled = scaler.apply_window(&w.window).unwrap();
            let back = scaler.invert_window(&scaled);
            for (j, (x, y)) in w.window.values.iter().zip(&back.values).enumerate() {
                let r = scaler.features[j];
                if r.max > r.min {
                    prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
                }
            }
            let label = scaler.apply_label(w.eps);
            prop_assert!((scaler.invert_label(label.eps_norm) - w.eps).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_values_lie_in_the_unit_interval(data in rows(), probe in vec(-500.0f64..500.0, 80), eps in -50.0f64..50.0) {
        let scaler = Scaler::fit(&labeled(&data)).unwrap();
        let probe = FeatureWindow::new(9.0, probe).unwrap();
        for v in scaler.apply_window(&probe).unwrap().values {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let n = scaler.apply_label(eps).eps_norm;
        prop_assert!((0.0..=1.0).contains(&n));
    }

    #[test]
    fn range_apply_is_monotone(lo in -10.0f64..10.0, width in 1e-3f64..50.0, a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let r = Range { min: lo, max: lo + width };
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(r.apply(x) <= r.apply(y));
    }

    #[test]
    fn crse_bounds_the_absolute_cte(e in vec(-10.0f64..10.0, 1..200)) {
        let c = crse(&e).unwrap();
        let t = cte(&e).unwrap();
        prop_assert!(c >= t.abs() - 1e-12);
        prop_assert!(c >= 0.0);
    }

    #[test]
    fn flipping_signs_keeps_crse_and_negates_cte(e in vec(-10.0f64..10.0, 1..200)) {
        let flipped: Vec<f64> = e.iter().map(|v| -v).collect();
        prop_assert_eq!(crse(&flipped).unwrap(), crse(&e).unwrap());
        prop_assert_eq!(cte(&flipped).unwrap(), -cte(&e).unwrap());
    }

    #[test]
    fn metrics_add_over_consecutive_halves(e in vec(-10.0f64..10.0, 60)) {
        let (a, b) = e.split_at(30);
        prop_assert!((crse(&e).unwrap() - crse(a).unwrap() - crse(b).unwrap()).abs() < 1e-9);
        prop_assert!((cte(&e).unwrap() - cte(a).unwrap() - cte(b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn stats_are_ordered(v in prop_oneof![
        vec(-1e3f64..1e3, 1..100),
        (-1e3f64..1e3, 1usize..100).prop_map(|(x, n)| vec![x; n]),
    ]) {
        let s = Stats::of(&v).unwrap();
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        prop_assert!(s.std >= 0.0);
        let all_equal = v.iter().all(|x| *x == v[0]);
        prop_assert_eq!(s.std == 0.0, all_equal);
    }
}

#[test]
fn crse_dominates_cte_on_ten_thousand_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=180);
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!(crse(&e).unwrap() >= cte(&e).unwrap().abs() - 1e-12);
    }
}

#[test]
fn hand_checked_metrics() {
    let e = [0.5, -0.25, 1.0];
    assert!((crse(&e).unwrap() - 1.75).abs() < 1e-12);
    assert!((cte(&e).unwrap() - 1.25).abs() < 1e-12);
    let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((s.min, s.max, s.mean), (1.0, 4.0, 2.5));
    assert!((s.std - 1.25f64.sqrt()).abs() < 1e-12);
    assert_eq!(Stats::of(&[7.0; 5]).unwrap().std, 0.0);
    let tenths = Stats::of(&[0.1; 3]).unwrap();
    assert_eq!((tenths.mean, tenths.std), (0.1, 0.0));
}

#[test]
fn equal_inputs_give_equal_windows_and_labels() {
    let (a, _) = make_domain_pair(3).unwrap();
    let d = a.test[0].drive();
    assert_eq!(
        build_feature_windows(d).unwrap(),
        build_feature_windows(&d.clone()).unwrap()
    );
}

#[test]
fn perfect_oracle_scores_zero_everywhere() {
    let (_, b) = make_domain_pair(4).unwrap();
    let drives = b.test_drives();
    let contenders = [
        Contender {
            name: "oracle",
            predictor: Predictor::Oracle { radius: 0.3 },
        },
        Contender {
            name: "WPM",
            predictor: Predictor::Wpm { radius: 0.3 },
        },
    ];
    let eval = compare_models(&contenders, &drives, &OutageScenario::defaults()).unwrap();
    assert!(!eval.rows.is_empty());
    for row in eval.rows.iter().filter(|r| r.model == "oracle") {
        for s in [row.crse, row.cte] {
            assert_eq!((s.max, s.min, s.mean, s.std), (0.0, 0.0, 0.0, 0.0));
        }
    }
    let wpm = eval.row(POOLED, 30, "WPM").unwrap();
    assert!(wpm.crse.mean > 0.0);
}

#[test]
fn sequences_follow_the_warmup_and_do_not_overlap() {
    let (a, _) = make_domain_pair(2).unwrap();
    let d = a.test[0].drive();
    let n = d.seconds();
    for duration in [30, 60, 120, 180] {
        let seqs = segment_outages(d, OutageScenario::new(duration).unwrap()).unwrap();
        assert_eq!(seqs.len(), (n - 2) / duration);
        for (i, s) in seqs.iter().enumerate() {
            assert_eq!(s.len(), duration);
            assert_eq!(s.t[0], (3 + i * duration) as f64);
        }
    }
}
