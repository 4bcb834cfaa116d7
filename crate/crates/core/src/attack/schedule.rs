use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::geometry::{rotate_about_axis, Axis, PlaneAngle, UnitVec3};

/// Smallest half-revolution count accepted by [`generate_sweep`].
pub const MIN_SWEEP_STEPS: usize = 4;

/// The great circle a sweep rotates along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGeometry {
    /// Rotation about `ẑ` starting at `x̂` (polar angle π/2).
    XyPlane,
    /// Rotation about `ŷ` starting at `ẑ` (azimuth 0).
    XzPlane,
    /// Rotation about `x̂` starting at `ŷ`.
    YzPlane,
    /// Svozil's circle; embedded as the `xy` plane.
    Circle,
}

impl SweepGeometry {
    pub fn rotation_axis(self) -> Axis {
        match self {
            SweepGeometry::XyPlane | SweepGeometry::Circle => Axis::Z,
            SweepGeometry::XzPlane => Axis::Y,
            SweepGeometry::YzPlane => Axis::X,
        }
    }

    pub fn start(self) -> UnitVec3 {
        match self {
            SweepGeometry::XyPlane | SweepGeometry::Circle => UnitVec3::X,
            SweepGeometry::XzPlane => UnitVec3::Z,
            SweepGeometry::YzPlane => UnitVec3::Y,
        }
    }

    /// The in-plane direction at sweep angle `angle`.
    pub fn direction(self, angle: f64) -> UnitVec3 {
        rotate_about_axis(&self.start(), self.rotation_axis(), angle)
    }

    /// Sweep angle of the projection of `v` onto the plane.
    pub fn in_plane_angle(self, v: &UnitVec3) -> f64 {
        let u = self.start();
        let w = self.direction(FRAC_PI_2);
        v.dot(&w).atan2(v.dot(&u))
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepGeometry::XyPlane => "xy",
            SweepGeometry::XzPlane => "xz",
            SweepGeometry::YzPlane => "yz",
            SweepGeometry::Circle => "circle",
        }
    }
}

/// How the second shared variable of each entry relates to the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pairing {
    /// `λ₂ = λ₁` rotated by one step.
    AdjacentOffset,
    /// `λ₂ = λ₁` rotated by π/2.
    OrthogonalPair,
    /// `Δ = λ + ω` on the circle.
    SvozilShift { omega: f64 },
}

impl Pairing {
    /// Angle from `λ₁` to `λ₂` along the sweep.
    pub fn offset(&self, delta: f64) -> f64 {
        match self {
            Pairing::AdjacentOffset => delta,
            Pairing::OrthogonalPair => FRAC_PI_2,
            Pairing::SvozilShift { omega } => *omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    /// Sweep angle of `lambda1`, `index · δ`.
    pub angle: f64,
    pub lambda1: UnitVec3,
    pub lambda2: UnitVec3,
}

impl SweepEntry {
    /// `(λ, Δ)` for circle schedules.
    pub fn circle_angles(&self, pairing: &Pairing) -> (PlaneAngle, PlaneAngle) {
        let lambda = PlaneAngle::new(self.angle);
        (lambda, lambda + pairing.offset(0.0))
    }
}

/// An ordered set of shared-variable pairs covering one full revolution in
/// `2N` steps of `δ = π/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSchedule {
    pub geometry: SweepGeometry,
    pub pairing: Pairing,
    pub steps: usize,
    pub delta: f64,
    pub entries: Vec<SweepEntry>,
}

impl SweepSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_circle(&self) -> bool {
        self.geometry == SweepGeometry::Circle
    }
}

pub fn generate_sweep(
    geometry: SweepGeometry,
    pairing: Pairing,
    steps: usize,
) -> Result<SweepSchedule, AttackError> {
    if steps < MIN_SWEEP_STEPS {
        return Err(AttackError::InvalidSchedule(format!(
            "need at least {MIN_SWEEP_STEPS} steps per half turn, got {steps}"
        )));
    }
    match (geometry, pairing) {
        (SweepGeometry::Circle, Pairing::SvozilShift { omega }) => {
            if !(0.0..=FRAC_PI_2).contains(&omega) {
                return Err(AttackError::InvalidSchedule(format!(
                    "svozil shift {omega} outside [0, pi/2]"
                )));
            }
        }
        (SweepGeometry::Circle, _) => {
            return Err(AttackError::InvalidSchedule(
                "circle sweeps pair each angle with its svozil shift".into(),
            ))
        }
        (_, Pairing::SvozilShift { .. }) => {
            return Err(AttackError::InvalidSchedule(
                "svozil shifts only apply to the circle".into(),
            ))
        }
        _ => {}
    }
    let delta = PI / steps as f64;
    let offset = pairing.offset(delta);
    // Each entry is rotated from the start directly so no error accumulates.
    // A second variable that lands on the grid reuses the grid direction
    // bit for bit, so a crossing exactly at a grid point flips one entry.
    let grid_shift = match pairing {
        Pairing::AdjacentOffset => Some(1),
        Pairing::OrthogonalPair if steps.is_multiple_of(2) => Some(steps / 2),
        _ => None,
    };
    let entries = (0..2 * steps)
        .map(|k| {
            let angle = k as f64 * delta;
            let second = match grid_shift {
                Some(s) => (k + s) as f64 * delta,
                None => angle + offset,
            };
            SweepEntry {
                index: k,
                angle,
                lambda1: geometry.direction(angle),
                lambda2: geometry.direction(second),
            }
        })
        .collect();
    Ok(SweepSchedule {
        geometry,
        pairing,
        steps,
        delta,
        entries,
    })
}
