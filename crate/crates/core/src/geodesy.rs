//! Inverse geodesic on the WGS-84 ellipsoid and the GNSS-derived per-second
//! displacement series used as ground truth for the wheel error labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis in meters.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);

const LAMBDA_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;

/// Nominal GNSS horizontal accuracy bound in meters.
pub const DEFAULT_GNSS_ACCURACY_M: f64 = 3.0;
/// Allowed deviation from the nominal 1 s fix spacing.
pub const GNSS_JITTER_TOLERANCE_S: f64 = 0.2;

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoordinate {
    pub lat: f64,
    pub lon: f64,
}

impl GeoCoordinate {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let c = GeoCoordinate { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::InvalidCoordinate(format!(
                "non-finite ({}, {})",
                self.lat, self.lon
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidCoordinate(format!(
                "latitude {} out of range",
                self.lat
            )));
        }
        if !(self.lon > -180.0 && self.lon <= 180.0) {
            return Err(Error::InvalidCoordinate(format!(
                "longitude {} out of range",
                self.lon
            )));
        }
        Ok(())
    }
}

/// Result of the inverse problem: distance plus forward azimuths (radians,
/// clockwise from north) at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSolution {
    pub distance_m: f64,
    pub azimuth_start: f64,
    pub azimuth_end: f64,
}

/// Geodesic distance in meters between two points on the WGS-84 ellipsoid.
pub fn vincenty_inverse(a: GeoCoordinate, b: GeoCoordinate) -> Result<f64> {
    Ok(vincenty_inverse_full(a, b)?.distance_m)
}

/// Vincenty's inverse method. Iterates on the auxiliary-sphere longitude
/// until it moves by less than 1e-12 rad; fails instead of returning a
/// partially converged answer.
pub fn vincenty_inverse_full(p1: GeoCoordinate, p2: GeoCoordinate) -> Result<InverseSolution> {
    p1.validate()?;
    p2.validate()?;
    if p1 == p2 {
        return Ok(InverseSolution {
            distance_m: 0.0,
            azimuth_start: 0.0,
            azimuth_end: 0.0,
        });
    }

    let f = WGS84_F;
    let l = (p2.lon - p1.lon).to_radians();
    let u1 = ((1.0 - f) * p1.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * p2.lat.to_radians().tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    // auxiliary-sphere geometry for a given λ
    let geometry = |lambda: f64| {
        let (sin_lambda, cos_lambda) = lambda.sin_cos();
        let sin_sigma = ((cos_u2 * sin_lambda).powi(2)
            + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda).powi(2))
        .sqrt();
        let cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = if sin_sigma == 0.0 {
            0.0
        } else {
            cos_u1 * cos_u2 * sin_lambda / sin_sigma
        };
        let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial line: cos²α = 0
        let cos_2sigma_m = if cos_sq_alpha != 0.0 {
            cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        } else {
            0.0
        };
        Geometry {
            sin_sigma,
            cos_sigma,
            sigma,
            sin_alpha,
            cos_sq_alpha,
            cos_2sigma_m,
        }
    };

    let next_lambda = |g: &Geometry| {
        let c = f / 16.0 * g.cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * g.cos_sq_alpha));
        l + (1.0 - c)
            * f
            * g.sin_alpha
            * (g.sigma
                + c * g.sin_sigma
                    * (g.cos_2sigma_m
                        + c * g.cos_sigma * (-1.0 + 2.0 * g.cos_2sigma_m * g.cos_2sigma_m)))
    };

    let mut lambda = l;
    let mut iterations = 0;
    let g = loop {
        iterations += 1;
        let g = geometry(lambda);
        if g.sin_sigma == 0.0 {
            // coincident after reduction (e.g. both poles)
            return Ok(InverseSolution {
                distance_m: 0.0,
                azimuth_start: 0.0,
                azimuth_end: 0.0,
            });
        }
        let lambda_prev = lambda;
        lambda = next_lambda(&g);
        if (lambda - lambda_prev).abs() < LAMBDA_TOLERANCE {
            // the map contracts by roughly f per step, so one more step
            // removes the residual left at the stopping point
            lambda = next_lambda(&geometry(lambda));
            break geometry(lambda);
        }
        if iterations >= MAX_ITERATIONS || !lambda.is_finite() {
            return Err(Error::NonConvergence { iterations });
        }
    };

    let a = WGS84_A;
    let b = WGS84_B;
    let u_sq = g.cos_sq_alpha * (a * a - b * b) / (b * b);
    let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let delta_sigma = big_b
        * g.sin_sigma
        * (g.cos_2sigma_m
            + big_b / 4.0
                * (g.cos_sigma * (-1.0 + 2.0 * g.cos_2sigma_m * g.cos_2sigma_m)
                    - big_b / 6.0
                        * g.cos_2sigma_m
                        * (-3.0 + 4.0 * g.sin_sigma * g.sin_sigma)
                        * (-3.0 + 4.0 * g.cos_2sigma_m * g.cos_2sigma_m)));
    let distance_m = b * big_a * (g.sigma - delta_sigma);
    let (sin_lambda, cos_lambda) = lambda.sin_cos();
    let azimuth_start = (cos_u2 * sin_lambda).atan2(cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda);
    let azimuth_end = (cos_u1 * sin_lambda).atan2(-sin_u1 * cos_u2 + cos_u1 * sin_u2 * cos_lambda);
    Ok(InverseSolution {
        distance_m,
        azimuth_start,
        azimuth_end,
    })
}

struct Geometry {
    sin_sigma: f64,
    cos_sigma: f64,
    sigma: f64,
    sin_alpha: f64,
    cos_sq_alpha: f64,
    cos_2sigma_m: f64,
}

/// Time-ordered GNSS fixes at a nominal 1 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssTrack {
    fixes: Vec<(f64, GeoCoordinate)>,
    pub accuracy_m: f64,
}

impl GnssTrack {
    /// Builds a contiguous track. Non-increasing timestamps are rejected,
    /// as is any spacing outside 1 s ± the jitter tolerance.
    pub fn new(fixes: Vec<(f64, GeoCoordinate)>) -> Result<Self> {
        for (t, c) in &fixes {
            if !t.is_finite() {
                return Err(Error::TimestampOrder { t: *t });
            }
            c.validate()?;
        }
        for pair in fixes.windows(2) {
            let (t0, t1) = (pair[0].0, pair[1].0);
            if t1 <= t0 {
                return Err(Error::TimestampOrder { t: t1 });
            }
            let gap = t1 - t0;
            if (gap - 1.0).abs() > GNSS_JITTER_TOLERANCE_S {
                return Err(Error::GnssGap { t: t1, gap });
            }
        }
        Ok(GnssTrack {
            fixes,
            accuracy_m: DEFAULT_GNSS_ACCURACY_M,
        })
    }

    /// Splits time-ordered fixes into contiguous tracks wherever the spacing
    /// leaves the 1 s ± jitter band.
    pub fn split_at_gaps(fixes: Vec<(f64, GeoCoordinate)>) -> Result<Vec<GnssTrack>> {
        let mut tracks = Vec::new();
        let mut current: Vec<(f64, GeoCoordinate)> = Vec::new();
        for (t, c) in fixes {
            c.validate()?;
            if let Some(&(prev, _)) = current.last() {
                if t <= prev {
                    return Err(Error::TimestampOrder { t });
                }
                if (t - prev - 1.0).abs() > GNSS_JITTER_TOLERANCE_S {
                    tracks.push(GnssTrack::new(std::mem::take(&mut current))?);
                }
            }
            current.push((t, c));
        }
        if !current.is_empty() {
            tracks.push(GnssTrack::new(current)?);
        }
        Ok(tracks)
    }

    pub fn fixes(&self) -> &[(f64, GeoCoordinate)] {
        &self.fixes
    }

    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }
}

/// Per-second displacement between consecutive fixes, stamped with the later
/// fix's time.
pub fn gnss_displacement_series(track: &GnssTrack) -> Result<Vec<(f64, f64)>> {
    if track.len() < 2 {
        return Err(Error::TooFewFixes {
            needed: 2,
            got: track.len(),
        });
    }
    track
        .fixes
        .windows(2)
        .map(|pair| Ok((pair[1].0, vincenty_inverse(pair[0].1, pair[1].1)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(vincenty_inverse(c(52.0, -1.5), c(52.0, -1.5)).unwrap(), 0.0);
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoCoordinate::new(91.0, 0.0).is_err());
        assert!(GeoCoordinate::new(0.0, -180.0).is_err());
        assert!(GeoCoordinate::new(f64::NAN, 0.0).is_err());
        assert!(GeoCoordinate::new(0.0, 180.0).is_ok());
        let bad = GeoCoordinate {
            lat: 95.0,
            lon: 0.0,
        };
        assert!(matches!(
            vincenty_inverse(bad, c(0.0, 0.0)),
            Err(Error::InvalidCoordinate(_))
        ));
    }

    #[test]
    fn antipodal_points_do_not_converge() {
        let r = vincenty_inverse(c(0.0, 0.0), c(0.5, 179.7));
        assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
    }

    #[test]
    fn azimuth_of_northward_and_eastward_lines() {
        let n = vincenty_inverse_full(c(10.0, 20.0), c(10.001, 20.0)).unwrap();
        assert!(n.azimuth_start.abs() < 1e-9);
        let e = vincenty_inverse_full(c(0.0, 20.0), c(0.0, 20.001)).unwrap();
        assert!((e.azimuth_start - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn displacement_series_of_identical_fixes() {
        let track = GnssTrack::new(vec![(0.0, c(52.0, -1.5)), (1.0, c(52.0, -1.5))]).unwrap();
        assert_eq!(gnss_displacement_series(&track).unwrap(), vec![(1.0, 0.0)]);
    }

    #[test]
    fn displacement_series_needs_two_fixes() {
        let track = GnssTrack::new(vec![(0.0, c(52.0, -1.5))]).unwrap();
        assert!(matches!(
            gnss_displacement_series(&track),
            Err(Error::TooFewFixes { got: 1, .. })
        ));
    }

    #[test]
    fn track_rejects_out_of_order_timestamps() {
        let r = GnssTrack::new(vec![(1.0, c(0.0, 0.0)), (0.5, c(0.0, 0.0))]);
        assert!(matches!(r, Err(Error::TimestampOrder { .. })));
        let r = GnssTrack::new(vec![(1.0, c(0.0, 0.0)), (1.0, c(0.0, 0.0))]);
        assert!(matches!(r, Err(Error::TimestampOrder { .. })));
    }

    #[test]
    fn track_splits_on_gaps() {
        let fixes = vec![
            (0.0, c(0.0, 0.0)),
            (1.1, c(0.0, 0.0)),
            (2.0, c(0.0, 0.0)),
            (5.0, c(0.0, 0.0)),
            (6.0, c(0.0, 0.0)),
        ];
        assert!(matches!(
            GnssTrack::new(fixes.clone()),
            Err(Error::GnssGap { .. })
        ));
        let tracks = GnssTrack::split_at_gaps(fixes).unwrap();
        assert_eq!(
            tracks.iter().map(GnssTrack::len).collect::<Vec<_>>(),
            vec![3, 2]
        );
    }
}
