//! Planar point-class families and their analytic encode/decode pairs.
//!
//! Three families: lines through the origin (by integer angle with the
//! x-axis), circles centered on the origin (by radius), and arcs of such
//! circles (radius plus an angle range). Each class is a 1-D curve, so a
//! single real code suffices: `x` for lines, `atan2(y, x)` for circles
//! and arcs. The analytic pairs serve as ground-truth oracles for what
//! the trained autoencoders should approximate.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Maximum reconstruction distance under which a class counts as
/// encodable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodabilityBudget {
    pub epsilon: f64,
}

impl EncodabilityBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::contract("epsilon must be finite and >= 0"));
        }
        Ok(EncodabilityBudget { epsilon })
    }
}

/// One member of a class family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassSpec {
    /// y = a·x with a = tan(theta_deg·π/180). Angles are integer degrees
    /// in [-80, 80) so the slope stays finite and moderate.
    Line { theta_deg: i32 },
    /// x² + y² = r².
    Circle { r: f64 },
    /// The part of the circle with atan2(y, x) in [angle_lo, angle_hi].
    Arc {
        r: f64,
        angle_lo: f64,
        angle_hi: f64,
    },
}

impl ClassSpec {
    pub fn line(theta_deg: i32) -> Result<Self> {
        let spec = ClassSpec::Line { theta_deg };
        spec.validate()?;
        Ok(spec)
    }

    pub fn circle(r: f64) -> Result<Self> {
        let spec = ClassSpec::Circle { r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn arc(r: f64, angle_lo: f64, angle_hi: f64) -> Result<Self> {
        let spec = ClassSpec::Arc {
            r,
            angle_lo,
            angle_hi,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassSpec::Line { theta_deg } => {
                if !(-80..80).contains(&theta_deg) {
                    return Err(Error::contract(format!(
                        "line angle {theta_deg}° outside [-80, 80)"
                    )));
                }
            }
            ClassSpec::Circle { r } => {
                if !r.is_finite() || r <= 0.0 {
                    return Err(Error::contract(format!("circle radius {r} must be > 0")));
                }
            }
            ClassSpec::Arc {
                r,
                angle_lo,
                angle_hi,
            } => {
                if !r.is_finite() || r <= 0.0 {
                    return Err(Error::contract(format!("arc radius {r} must be > 0")));
                }
                if !angle_lo.is_finite() || !angle_hi.is_finite() || angle_lo >= angle_hi {
                    return Err(Error::contract(format!(
                        "arc needs angle_lo < angle_hi, got [{angle_lo}, {angle_hi}]"
                    )));
                }
                // keep the arc inside atan2's principal range so the
                // analytic code is single-valued on the curve
                if angle_lo < -PI || angle_hi > PI {
                    return Err(Error::contract(format!(
                        "arc angles [{angle_lo}, {angle_hi}] must lie within [-π, π]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Slope a = tan(θ) for lines.
    pub fn slope(&self) -> Option<f64> {
        match *self {
            ClassSpec::Line { theta_deg } => Some((theta_deg as f64).to_radians().tan()),
            _ => None,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match *self {
            ClassSpec::Circle { r } | ClassSpec::Arc { r, .. } => Some(r),
            ClassSpec::Line { .. } => None,
        }
    }

    /// Stable ASCII identifier, used as a grouping key and in filenames.
    pub fn label(&self) -> String {
        match *self {
            ClassSpec::Line { theta_deg } => format!("line_theta_{theta_deg}"),
            ClassSpec::Circle { r } => format!("circle_r_{r}"),
            ClassSpec::Arc { r, .. } => format!("arc_r_{r}"),
        }
    }

    /// Draws `n` points on the curve: lines with x uniform in [-10, 10),
    /// circles with angle uniform in [-π, π), arcs with angle uniform in
    /// [angle_lo, angle_hi).
    pub fn sample_points<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point2> {
        assert!(n > 0, "sample size must be positive");
        let mut points = Vec::with_capacity(n);
        match *self {
            ClassSpec::Line { .. } => {
                let a = self.slope().unwrap();
                for _ in 0..n {
                    let x = rng.random_range(-10.0..10.0);
                    points.push(Point2::new(x, a * x));
                }
            }
            ClassSpec::Circle { r } => {
                for _ in 0..n {
                    let phi = rng.random_range(-PI..PI);
                    points.push(Point2::new(r * phi.cos(), r * phi.sin()));
                }
            }
            ClassSpec::Arc {
                r,
                angle_lo,
                angle_hi,
            } => {
                for _ in 0..n {
                    let phi = rng.random_range(angle_lo..angle_hi);
                    points.push(Point2::new(r * phi.cos(), r * phi.sin()));
                }
            }
        }
        points
    }

    /// The class's scalar code for an on-curve point: `x` for lines,
    /// `atan2(y, x)` for circles and arcs. Points farther than 1e-6 from
    /// the curve are rejected.
    pub fn analytic_encode(&self, p: Point2) -> Result<f64> {
        let d = self.distance_to_curve(p);
        if d > 1e-6 {
            return Err(Error::contract(format!(
                "point ({}, {}) is {d:.3e} away from the {} curve",
                p.x,
                p.y,
                self.label()
            )));
        }
        Ok(match *self {
            ClassSpec::Line { .. } => p.x,
            ClassSpec::Circle { .. } | ClassSpec::Arc { .. } => p.y.atan2(p.x),
        })
    }

    /// Inverse of [`ClassSpec::analytic_encode`]: `(t, a·t)` for lines,
    /// `(r·cos t, r·sin t)` for circles and arcs.
    pub fn analytic_decode(&self, t: f64) -> Point2 {
        match *self {
            ClassSpec::Line { .. } => Point2::new(t, self.slope().unwrap() * t),
            ClassSpec::Circle { r } | ClassSpec::Arc { r, .. } => {
                Point2::new(r * t.cos(), r * t.sin())
            }
        }
    }

    /// Euclidean distance from `p` to the nearest point of the curve.
    pub fn distance_to_curve(&self, p: Point2) -> f64 {
        match *self {
            ClassSpec::Line { .. } => {
                let a = self.slope().unwrap();
                (a * p.x - p.y).abs() / (a * a + 1.0).sqrt()
            }
            ClassSpec::Circle { r } => (p.x.hypot(p.y) - r).abs(),
            ClassSpec::Arc {
                r,
                angle_lo,
                angle_hi,
            } => {
                let phi = p.y.atan2(p.x);
                if (angle_lo..=angle_hi).contains(&phi) {
                    (p.x.hypot(p.y) - r).abs()
                } else {
                    let lo = Point2::new(r * angle_lo.cos(), r * angle_lo.sin());
                    let hi = Point2::new(r * angle_hi.cos(), r * angle_hi.sin());
                    p.distance(lo).min(p.distance(hi))
                }
            }
        }
    }
}

/// `count` integer-degree lines starting at `start_deg`, stepping by
/// `step_deg`.
pub fn line_grid(start_deg: i32, step_deg: i32, count: usize) -> Result<Vec<ClassSpec>> {
    (0..count)
        .map(|k| ClassSpec::line(start_deg + step_deg * k as i32))
        .collect()
}

/// `count` radii evenly spaced over [r_lo, r_hi] (inclusive endpoints).
pub fn radius_grid(r_lo: f64, r_hi: f64, count: usize) -> Vec<f64> {
    assert!(count > 0 && r_lo > 0.0 && r_hi >= r_lo);
    if count == 1 {
        return vec![r_lo];
    }
    (0..count)
        .map(|k| r_lo + (r_hi - r_lo) * k as f64 / (count - 1) as f64)
        .collect()
}

pub fn circle_grid(radii: &[f64]) -> Result<Vec<ClassSpec>> {
    radii.iter().map(|&r| ClassSpec::circle(r)).collect()
}

pub fn arc_grid(radii: &[f64], angle_lo: f64, angle_hi: f64) -> Result<Vec<ClassSpec>> {
    radii
        .iter()
        .map(|&r| ClassSpec::arc(r, angle_lo, angle_hi))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn line_points_lie_on_the_line() {
        let spec = ClassSpec::line(45).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in spec.sample_points(1000, &mut rng) {
            assert!((p.y - p.x).abs() < 1e-12);
            assert!((-10.0..10.0).contains(&p.x));
        }
    }

    #[test]
    fn circle_points_lie_on_the_circle() {
        let spec = ClassSpec::circle(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in spec.sample_points(1000, &mut rng) {
            assert!((p.x * p.x + p.y * p.y - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn arc_points_stay_inside_the_angle_range() {
        let spec = ClassSpec::arc(1.0, PI / 6.0, PI / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in spec.sample_points(1000, &mut rng) {
            let phi = p.y.atan2(p.x);
            assert!((PI / 6.0..=PI / 3.0).contains(&phi), "angle {phi}");
        }
    }

    #[test]
    fn encode_examples() {
        let circle1 = ClassSpec::circle(1.0).unwrap();
        assert!((circle1.analytic_encode(Point2::new(0.0, 1.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        // tan(θ)=2 is not an integer angle; check via a decoded point instead
        let line = ClassSpec::line(45).unwrap();
        assert_eq!(line.analytic_encode(Point2::new(3.0, 3.0)).unwrap(), 3.0);
        let circle5 = ClassSpec::circle(5.0).unwrap();
        let code = circle5.analytic_encode(Point2::new(3.0, 4.0)).unwrap();
        assert!((code - 4.0f64.atan2(3.0)).abs() < 1e-15);
        assert!((code - 0.9273).abs() < 1e-4);
    }

    #[test]
    fn decode_examples() {
        let circle = ClassSpec::circle(2.0).unwrap();
        let p = circle.analytic_decode(0.0);
        assert_eq!((p.x, p.y), (2.0, 0.0));
        let line = ClassSpec::line(-45).unwrap();
        let p = line.analytic_decode(4.0);
        assert!((p.x - 4.0).abs() < 1e-12 && (p.y + 4.0).abs() < 1e-12);
    }

    #[test]
    fn off_curve_points_are_rejected() {
        let spec = ClassSpec::circle(1.0).unwrap();
        assert!(spec.analytic_encode(Point2::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(ClassSpec::line(80).is_err());
        assert!(ClassSpec::line(-81).is_err());
        assert!(ClassSpec::line(79).is_ok());
        assert!(ClassSpec::circle(0.0).is_err());
        assert!(ClassSpec::circle(-1.0).is_err());
        assert!(ClassSpec::arc(1.0, 1.0, 0.5).is_err());
        assert!(ClassSpec::arc(1.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_under_a_fixed_seed() {
        let spec = ClassSpec::arc(3.0, PI / 6.0, PI / 3.0).unwrap();
        let a = spec.sample_points(100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spec.sample_points(100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn distance_to_curve_basics() {
        let line = ClassSpec::line(0).unwrap();
        assert_eq!(line.distance_to_curve(Point2::new(5.0, 2.0)), 2.0);
        let circle = ClassSpec::circle(3.0).unwrap();
        assert!((circle.distance_to_curve(Point2::new(0.0, 5.0)) - 2.0).abs() < 1e-15);
        // point angularly outside the arc measures to the nearest endpoint:
        // (-1,0) to the arc [0, π/2] of the unit circle → endpoint (0,1)
        let arc = ClassSpec::arc(1.0, 0.0, PI / 2.0).unwrap();
        let d = arc.distance_to_curve(Point2::new(-1.0, 0.0));
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grids_cover_expected_members() {
        let lines = line_grid(-75, 10, 16).unwrap();
        assert_eq!(lines.len(), 16);
        assert_eq!(lines[0], ClassSpec::Line { theta_deg: -75 });
        assert_eq!(lines[15], ClassSpec::Line { theta_deg: 75 });
        let radii = radius_grid(1.0, 10.0, 10);
        assert_eq!(radii, (1..=10).map(|r| r as f64).collect::<Vec<_>>());
    }

    proptest! {
        // encode/decode closure: every on-curve point survives the round
        // trip to within 1e-9
        #[test]
        fn encode_decode_closure(seed in 0u64..1000, family in 0usize..3) {
            let spec = match family {
                0 => ClassSpec::line((seed as i32 % 160) - 80).unwrap(),
                1 => ClassSpec::circle(1.0 + (seed % 10) as f64).unwrap(),
                _ => ClassSpec::arc(1.0 + (seed % 10) as f64, PI / 6.0, PI / 3.0).unwrap(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in spec.sample_points(50, &mut rng) {
                let t = spec.analytic_encode(p).unwrap();
                let q = spec.analytic_decode(t);
                prop_assert!(p.distance(q) <= 1e-9);
            }
        }
    }
}
