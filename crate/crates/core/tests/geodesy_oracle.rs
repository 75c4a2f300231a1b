use geographiclib_rs::{Geodesic, InverseGeodesic};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wheelodo::geodesy::{gnss_displacement_series, vincenty_inverse, GeoCoordinate, GnssTrack};
use wheelodo::Error;

const A: f64 = 6_378_137.0;
const F: f64 = 1.0 / 298.257_223_563;

fn p(lat: f64, lon: f64) -> GeoCoordinate {
    GeoCoordinate::new(lat, lon).unwrap()
}

/// Meridian arc length between two latitudes by composite Gauss-Legendre
/// quadrature of the meridional radius of curvature.
fn meridian_arc(lat1: f64, lat2: f64) -> f64 {
    let e2 = F * (2.0 - F);
    let m = |phi: f64| A * (1.0 - e2) / (1.0 - e2 * phi.sin().powi(2)).powf(1.5);
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189),
        (-0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.0, 0.568_888_888_888_889),
        (0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.906_179_845_938_664, 0.236_926_885_056_189),
    ];
    let (a, b) = (lat1.to_radians(), lat2.to_radians());
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        for (x, w) in nodes {
            sum += w * m(mid + x * h / 2.0);
        }
    }
    (sum * h / 2.0).abs()
}

#[test]
fn identical_points_are_exactly_zero() {
    assert_eq!(vincenty_inverse(p(52.0, -1.5), p(52.0, -1.5)).unwrap(), 0.0);
}

#[test]
fn short_meridian_step_matches_quadrature() {
    let oracle = meridian_arc(0.0, 0.00001);
    let d = vincenty_inverse(p(0.0, 0.0), p(0.00001, 0.0)).unwrap();
    assert!((oracle - 1.1057).abs() < 1e-3);
    assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
}

#[test]
fn short_equatorial_step_matches_circle() {
    let oracle = A * 0.00001f64.to_radians();
    let d = vincenty_inverse(p(0.0, 0.0), p(0.0, 0.00001)).unwrap();
    assert!((oracle - 1.1132).abs() < 1e-3);
    assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
}

#[test]
fn meridian_arcs_at_many_latitudes() {
    for lat in [-80.0, -45.0, -10.0, 0.0, 33.3, 52.0, 71.0] {
        let lat2 = lat + 0.05;
        let d = vincenty_inverse(p(lat, 17.0), p(lat2, 17.0)).unwrap();
        assert!((d - meridian_arc(lat, lat2)).abs() < 1e-6);
    }
}

#[test]
fn thousand_random_pairs_agree_with_karney_within_a_millimeter() {
    let g = Geodesic::wgs84();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let lat1: f64 = rng.random_range(-89.0..89.0);
        let lon1: f64 = rng.random_range(-179.9..179.9);
        let lat2 = (lat1 + rng.random_range(-0.09..0.09)).clamp(-90.0, 90.0);
        let lon2 = lon1 + rng.random_range(-0.09..0.09);
        let oracle: f64 = g.inverse(lat1, lon1, lat2, lon2);
        if oracle >= 10_000.0 {
            continue;
        }
        let d = vincenty_inverse(p(lat1, lon1), p(lat2, lon2)).unwrap();
        assert!(
            (d - oracle).abs() < 1e-3,
            "({lat1},{lon1})-({lat2},{lon2}): {d} vs {oracle}"
        );
        checked += 1;
    }
}

#[test]
fn equatorial_fix_series() {
    let track = GnssTrack::new(vec![
        (1.0, p(0.0, 0.0)),
        (2.0, p(0.0, 0.00001)),
        (3.0, p(0.0, 0.00002)),
    ])
    .unwrap();
    let series = gnss_displacement_series(&track).unwrap();
    assert_eq!(series.len(), 2);
    for (_, x) in series {
        assert!((x - 1.1132).abs() < 1e-3);
    }
}

#[test]
fn near_antipodal_fails_rather_than_guessing() {
    assert!(matches!(
        vincenty_inverse(p(0.0, 0.0), p(0.5, 179.7)),
        Err(Error::NonConvergence { .. })
    ));
}

fn coord() -> impl Strategy<Value = GeoCoordinate> {
    (-85.0f64..85.0, -179.0f64..179.0).prop_map(|(lat, lon)| p(lat, lon))
}

/// A point within roughly 5 km of `c`.
fn nearby(c: GeoCoordinate) -> impl Strategy<Value = GeoCoordinate> {
    (-0.045f64..0.045, -0.045f64..0.045).prop_map(move |(dlat, dlon)| p(c.lat + dlat, c.lon + dlon))
}

proptest! {
    #[test]
    fn distance_is_symmetric((a, b) in coord().prop_flat_map(|a| (Just(a), nearby(a)))) {
        let ab = vincenty_inverse(a, b).unwrap();
        let ba = vincenty_inverse(b, a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn triangle_inequality(
        (a, b, c) in coord().prop_flat_map(|a| (Just(a), nearby(a), nearby(a)))
    ) {
        let ab = vincenty_inverse(a, b).unwrap();
        let bc = vincenty_inverse(b, c).unwrap();
        let ac = vincenty_inverse(a, c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-6);
    }

    #[test]
    fn zero_only_for_equal_points((a, b) in coord().prop_flat_map(|a| (Just(a), nearby(a)))) {
        let d = vincenty_inverse(a, b).unwrap();
        prop_assert_eq!(d == 0.0, a == b);
        prop_assert_eq!(vincenty_inverse(a, a).unwrap(), 0.0);
    }
}
