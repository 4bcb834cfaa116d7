//! Small-vector geometry on the unit sphere and the circle.
//!
//! All protocols share one sign convention: `sgn(0) = +1`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::RandomStream;

/// Tolerance on `|v| - 1` for every [`UnitVec3`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Below this `|n1 × n2|` two plane normals are treated as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("cannot normalize vector ({0}, {1}, {2})")]
    NotNormalizable(f64, f64, f64),
    #[error("plane normals are parallel: |n1 x n2| = {0:e}")]
    DegenerateIntersection(f64),
}

/// One of the two measurement outcomes, also used for the communicated bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignBit {
    Plus,
    Minus,
}

impl SignBit {
    pub fn value(self) -> i64 {
        match self {
            SignBit::Plus => 1,
            SignBit::Minus => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(SignBit::Plus),
            -1 => Some(SignBit::Minus),
            _ => None,
        }
    }
}

impl Neg for SignBit {
    type Output = SignBit;
    fn neg(self) -> SignBit {
        match self {
            SignBit::Plus => SignBit::Minus,
            SignBit::Minus => SignBit::Plus,
        }
    }
}

impl Mul for SignBit {
    type Output = SignBit;
    fn mul(self, rhs: SignBit) -> SignBit {
        if self == rhs {
            SignBit::Plus
        } else {
            SignBit::Minus
        }
    }
}

impl fmt::Display for SignBit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignBit::Plus => f.write_str("+1"),
            SignBit::Minus => f.write_str("-1"),
        }
    }
}

/// `+1` for `x >= 0`, `-1` for `x < 0`. Panics on NaN or infinity.
pub fn sgn(x: f64) -> SignBit {
    assert!(x.is_finite(), "sgn of non-finite value {x}");
    if x >= 0.0 {
        SignBit::Plus
    } else {
        SignBit::Minus
    }
}

/// Coordinate axes used by sweep rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> UnitVec3 {
        match self {
            Axis::X => UnitVec3::X,
            Axis::Y => UnitVec3::Y,
            Axis::Z => UnitVec3::Z,
        }
    }
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVec3 {
    pub const X: UnitVec3 = UnitVec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: UnitVec3 = UnitVec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: UnitVec3 = UnitVec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < f64::MIN_POSITIVE {
            return Err(GeometryError::NotNormalizable(x, y, z));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self, GeometryError> {
        Self::normalize(v[0], v[1], v[2])
    }

    /// Polar angle from `+z`, azimuth from `+x` towards `+y`.
    pub fn from_spherical(polar: f64, azimuth: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self {
            x: sp * ca,
            y: sp * sa,
            z: cp,
        }
    }

    /// The circle angle embedded in the `xy` plane.
    pub fn from_plane_angle(angle: PlaneAngle) -> Self {
        let (s, c) = angle.radians().sin_cos();
        Self { x: c, y: s, z: 0.0 }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn dot_raw(&self, v: [f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    pub fn cross(&self, other: &UnitVec3) -> [f64; 3] {
        [
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        ]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// `self + sign * other`, unnormalized.
    pub fn combine(&self, sign: SignBit, other: &UnitVec3) -> [f64; 3] {
        let s = sign.as_f64();
        [self.x + s * other.x, self.y + s * other.y, self.z + s * other.z]
    }

    /// Angle between the two directions, in `[0, π]`.
    pub fn angle_to(&self, other: &UnitVec3) -> f64 {
        // atan2 form stays accurate for nearly (anti)parallel vectors.
        let c = self.cross(other);
        let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        s.atan2(self.dot(other))
    }

    /// Angle between the two undirected axes, in `[0, π/2]`.
    pub fn axial_angle_to(&self, other: &UnitVec3) -> f64 {
        let a = self.angle_to(other);
        a.min(PI - a)
    }

    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn polar(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt().atan2(self.z)
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;
    fn neg(self) -> UnitVec3 {
        UnitVec3 {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl fmt::Display for UnitVec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.x, self.y, self.z)
    }
}

/// An angle on the circle, kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlaneAngle(f64);

impl PlaneAngle {
    pub const ZERO: PlaneAngle = PlaneAngle(0.0);

    pub fn new(radians: f64) -> Self {
        assert!(radians.is_finite(), "non-finite angle {radians}");
        let r = radians.rem_euclid(TAU);
        // rem_euclid rounds tiny negative inputs up to exactly TAU.
        PlaneAngle(if r >= TAU { 0.0 } else { r })
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Self::new(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// `(cos, sin)` of the angle.
    pub fn unit(self) -> (f64, f64) {
        let (s, c) = self.0.sin_cos();
        (c, s)
    }

    /// Shortest angular distance between the two directions, in `[0, π]`.
    pub fn distance(self, other: PlaneAngle) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(TAU - d)
    }

    /// Distance between the undirected axes, in `[0, π/2]`.
    pub fn axial_distance(self, other: PlaneAngle) -> f64 {
        let d = self.distance(other);
        d.min(PI - d)
    }

    /// The same axis represented in `[0, π)`.
    pub fn axis(self) -> PlaneAngle {
        if self.0 >= PI {
            PlaneAngle::new(self.0 - PI)
        } else {
            self
        }
    }
}

impl Add for PlaneAngle {
    type Output = PlaneAngle;
    fn add(self, rhs: PlaneAngle) -> PlaneAngle {
        PlaneAngle::new(self.0 + rhs.0)
    }
}

impl Add<f64> for PlaneAngle {
    type Output = PlaneAngle;
    fn add(self, rhs: f64) -> PlaneAngle {
        PlaneAngle::new(self.0 + rhs)
    }
}

impl Sub for PlaneAngle {
    type Output = PlaneAngle;
    fn sub(self, rhs: PlaneAngle) -> PlaneAngle {
        PlaneAngle::new(self.0 - rhs.0)
    }
}

impl Neg for PlaneAngle {
    type Output = PlaneAngle;
    fn neg(self) -> PlaneAngle {
        PlaneAngle::new(-self.0)
    }
}

/// Number of 64-bit draws consumed by [`sample_unit_sphere`].
pub const SPHERE_DRAWS: u64 = 2;

/// Uniform point on S²: `z` uniform in `[-1, 1)`, azimuth uniform in `[0, 2π)`.
pub fn sample_unit_sphere(stream: &mut RandomStream) -> UnitVec3 {
    let z = 2.0 * stream.next_f64() - 1.0;
    let phi = TAU * stream.next_f64();
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (s, c) = phi.sin_cos();
    UnitVec3 {
        x: r * c,
        y: r * s,
        z,
    }
}

/// Uniform angle in `[0, 2π)`; one draw.
pub fn sample_plane_angle(stream: &mut RandomStream) -> PlaneAngle {
    PlaneAngle::new(TAU * stream.next_f64())
}

/// Right-handed rotation of `v` by `angle` about a coordinate axis.
pub fn rotate_about_axis(v: &UnitVec3, axis: Axis, angle: f64) -> UnitVec3 {
    let (s, c) = angle.sin_cos();
    let UnitVec3 { x, y, z } = *v;
    match axis {
        Axis::X => UnitVec3 {
            x,
            y: c * y - s * z,
            z: s * y + c * z,
        },
        Axis::Y => UnitVec3 {
            x: c * x + s * z,
            y,
            z: -s * x + c * z,
        },
        Axis::Z => UnitVec3 {
            x: c * x - s * y,
            y: s * x + c * y,
            z,
        },
    }
}

/// The axis lying in both planes orthogonal to `n1` and `n2`, i.e. the
/// normalized `n1 × n2`. Its sign is arbitrary from the caller's point of view.
pub fn intersect_planes(n1: &UnitVec3, n2: &UnitVec3) -> Result<UnitVec3, GeometryError> {
    let c = n1.cross(n2);
    let len = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if len < PARALLEL_TOLERANCE {
        return Err(GeometryError::DegenerateIntersection(len));
    }
    Ok(UnitVec3 {
        x: c[0] / len,
        y: c[1] / len,
        z: c[2] / len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &UnitVec3, b: &UnitVec3, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && (a.z - b.z).abs() < tol
    }

    #[test]
    fn sgn_follows_the_nonnegative_convention() {
        assert_eq!(sgn(0.0), SignBit::Plus);
        assert_eq!(sgn(-0.0), SignBit::Plus);
        assert_eq!(sgn(-0.5), SignBit::Minus);
        assert_eq!(sgn(3.2), SignBit::Plus);
    }

    #[test]
    #[should_panic]
    fn sgn_rejects_nan() {
        sgn(f64::NAN);
    }

    #[test]
    fn sign_algebra() {
        assert_eq!(SignBit::Minus * SignBit::Minus, SignBit::Plus);
        assert_eq!(SignBit::Plus * SignBit::Minus, SignBit::Minus);
        assert_eq!(-SignBit::Plus, SignBit::Minus);
        for s in [SignBit::Plus, SignBit::Minus] {
            assert_eq!(s * SignBit::Plus, s);
            assert_eq!(SignBit::from_value(s.value()), Some(s));
        }
        assert_eq!(SignBit::from_value(0), None);
    }

    #[test]
    fn coordinate_rotations() {
        let r = rotate_about_axis(&UnitVec3::X, Axis::Z, FRAC_PI_2);
        assert!(close(&r, &UnitVec3::Y, 1e-12));
        let r = rotate_about_axis(&UnitVec3::X, Axis::Y, FRAC_PI_2);
        assert!(close(&r, &-UnitVec3::Z, 1e-12));
        let r = rotate_about_axis(&UnitVec3::Y, Axis::X, FRAC_PI_2);
        assert!(close(&r, &UnitVec3::Z, 1e-12));
        let v = UnitVec3::normalize(0.3, -0.4, 0.8).unwrap();
        assert_eq!(rotate_about_axis(&v, Axis::Z, 0.0), v);
    }

    #[test]
    fn plane_intersections() {
        let n = intersect_planes(&UnitVec3::X, &UnitVec3::Z).unwrap();
        assert!(n.axial_angle_to(&UnitVec3::Y) < 1e-12);
        assert!(close(&n, &-UnitVec3::Y, 1e-12));

        assert!(matches!(
            intersect_planes(&UnitVec3::X, &UnitVec3::X),
            Err(GeometryError::DegenerateIntersection(_))
        ));

        let n1 = UnitVec3::normalize(1.0, 1.0, 0.0).unwrap();
        let n = intersect_planes(&n1, &UnitVec3::Z).unwrap();
        let expected = UnitVec3::normalize(1.0, -1.0, 0.0).unwrap();
        assert!(n.axial_angle_to(&expected) < 1e-12);
    }

    #[test]
    fn zero_vector_is_not_normalizable() {
        assert!(UnitVec3::normalize(0.0, 0.0, 0.0).is_err());
        assert!(UnitVec3::normalize(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn plane_angles_are_canonical() {
        assert_eq!(PlaneAngle::new(TAU).radians(), 0.0);
        assert_eq!(PlaneAngle::new(-1e-18).radians(), 0.0);
        assert!((PlaneAngle::new(-FRAC_PI_2).radians() - 3.0 * FRAC_PI_2).abs() < 1e-15);
        let a = PlaneAngle::from_degrees(350.0);
        let b = PlaneAngle::from_degrees(10.0);
        assert!(((a + b).radians()).abs() < 1e-12);
        assert!((a.distance(b) - 20f64.to_radians()).abs() < 1e-12);
        assert!((PlaneAngle::from_degrees(200.0).axis().degrees() - 20.0).abs() < 1e-9);
        assert!(
            (PlaneAngle::from_degrees(10.0).axial_distance(PlaneAngle::from_degrees(185.0))
                - 5f64.to_radians())
            .abs()
                < 1e-12
        );
    }

    #[test]
    fn sphere_samples_are_uniform() {
        let mut stream = RandomStream::new(2024);
        let n = 1_000_000;
        let (mut sx, mut sy, mut sz, mut up) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..n {
            let v = sample_unit_sphere(&mut stream);
            assert!((v.norm() - 1.0).abs() < UNIT_TOLERANCE);
            sx += v.x;
            sy += v.y;
            sz += v.z;
            if v.z > 0.0 {
                up += 1;
            }
        }
        let n = n as f64;
        for mean in [sx / n, sy / n, sz / n] {
            assert!(mean.abs() < 5e-3, "component mean {mean}");
        }
        assert!((up as f64 / n - 0.5).abs() < 5e-3);
    }

    #[test]
    fn sphere_sampling_is_reproducible() {
        let mut a = RandomStream::new(9);
        let mut b = RandomStream::new(9);
        for _ in 0..100 {
            let (u, v) = (sample_unit_sphere(&mut a), sample_unit_sphere(&mut b));
            assert_eq!(u.to_array().map(f64::to_bits), v.to_array().map(f64::to_bits));
        }
    }

    fn unit_vec() -> impl Strategy<Value = UnitVec3> {
        (0.0..PI, 0.0..TAU).prop_map(|(p, a)| UnitVec3::from_spherical(p, a))
    }

    fn axis() -> impl Strategy<Value = Axis> {
        prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
    }

    proptest! {
        #[test]
        fn rotations_compose(v in unit_vec(), ax in axis(), t1 in -10.0..10.0f64, t2 in -10.0..10.0f64) {
            let two_step = rotate_about_axis(&rotate_about_axis(&v, ax, t1), ax, t2);
            let one_step = rotate_about_axis(&v, ax, t1 + t2);
            prop_assert!(close(&two_step, &one_step, 1e-9));
            prop_assert!((one_step.norm() - 1.0).abs() < UNIT_TOLERANCE);
        }

        #[test]
        fn intersection_is_orthogonal_to_both(n1 in unit_vec(), n2 in unit_vec()) {
            if let Ok(n) = intersect_planes(&n1, &n2) {
                prop_assert!(n.dot(&n1).abs() < 1e-9);
                prop_assert!(n.dot(&n2).abs() < 1e-9);
                prop_assert!((n.norm() - 1.0).abs() < UNIT_TOLERANCE);
            }
        }

        #[test]
        fn sgn_is_total(x in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let s = sgn(x);
            prop_assert_eq!(s * SignBit::Plus, s);
            prop_assert_eq!(s == SignBit::Plus, x >= 0.0);
        }

        #[test]
        fn plane_angle_stays_canonical(x in -100.0..100.0f64, y in -100.0..100.0f64) {
            for a in [PlaneAngle::new(x), PlaneAngle::new(x) + PlaneAngle::new(y), PlaneAngle::new(x) - PlaneAngle::new(y), -PlaneAngle::new(x)] {
                prop_assert!(a.radians() >= 0.0 && a.radians() < TAU);
            }
        }
    }
}
