use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use super::schedule::{Pairing, SweepSchedule};
use super::transcript::{BobStrategy, Transcript};
use super::AttackError;
use crate::geometry::{sgn, PlaneAngle, SignBit, UnitVec3};
use crate::protocols::{bob_output, ChannelModel, Setting};

/// Indices `i` with `bits[i] != bits[i - 1]`, comparing the first entry
/// against the last (the sweep is a closed revolution).
pub fn detect_flips(bits: &[SignBit]) -> Vec<usize> {
    let n = bits.len();
    if n < 2 {
        return Vec::new();
    }
    (0..n).filter(|&i| bits[i] != bits[(i + n - 1) % n]).collect()
}

/// What one sweep says about Alice's axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneConstraint {
    /// The axis lies in the plane orthogonal to this normal.
    Normal(UnitVec3),
    /// One of the two normals is right; the transcript decides which.
    NormalPair(UnitVec3, UnitVec3),
    /// Circle sweeps pin the axis itself, up to sign.
    CircleAxis(PlaneAngle),
}

impl PlaneConstraint {
    pub fn normals(&self) -> Vec<UnitVec3> {
        match self {
            PlaneConstraint::Normal(n) => vec![*n],
            PlaneConstraint::NormalPair(a, b) => vec![*a, *b],
            PlaneConstraint::CircleAxis(_) => vec![],
        }
    }
}

/// Mean of `angles` taken modulo `period`.
fn periodic_mean(angles: &[f64], period: f64) -> f64 {
    let k = TAU / period;
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + (k * a).sin(), c + (k * a).cos()));
    (s.atan2(c) / k).rem_euclid(period)
}

fn periodic_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Reads the crossing geometry off a flip pattern.
///
/// * adjacent-offset sweeps: the two isolated `-1` entries straddle the
///   zero crossings of `â·λ`; the normal is the sweep direction at the middle
///   of the crossing entry.
/// * orthogonal-pair sweeps: four block boundaries, each a crossing of
///   either `λ₁` or `λ₂`; both candidate normals are returned.
/// * circle sweeps: a `-1 → +1` boundary puts `λ` at `a - π/2`, a
///   `+1 → -1` boundary puts it at `a - ω - π/2` (mod π).
pub fn reconstruct_normal(
    schedule: &SweepSchedule,
    bits: &[SignBit],
    flips: &[usize],
) -> Result<PlaneConstraint, AttackError> {
    if bits.len() != schedule.len() {
        return Err(AttackError::AmbiguousFlips(format!(
            "{} bits for {} entries",
            bits.len(),
            schedule.len()
        )));
    }
    if flips.is_empty() {
        return Err(AttackError::NoFlip);
    }
    let n = bits.len();
    let delta = schedule.delta;
    let geometry = schedule.geometry;
    match schedule.pairing {
        Pairing::AdjacentOffset => {
            let minus: Vec<usize> = (0..n).filter(|&k| bits[k] == SignBit::Minus).collect();
            let isolated = minus
                .iter()
                .all(|&k| bits[(k + 1) % n] == SignBit::Plus && bits[(k + n - 1) % n] == SignBit::Plus);
            if minus.len() != 2 || !isolated {
                return Err(AttackError::AmbiguousFlips(format!(
                    "expected two isolated -1 entries, found {:?}",
                    minus
                )));
            }
            let crossings: Vec<f64> = minus.iter().map(|&k| (k as f64 + 0.5) * delta).collect();
            if periodic_distance(crossings[0], crossings[1], PI) > 2.0 * delta {
                return Err(AttackError::AmbiguousFlips(
                    "crossings are not half a turn apart".into(),
                ));
            }
            Ok(PlaneConstraint::Normal(
                geometry.direction(periodic_mean(&crossings, PI)),
            ))
        }
        Pairing::OrthogonalPair => {
            if flips.len() != 4 {
                return Err(AttackError::AmbiguousFlips(format!(
                    "expected four block boundaries, found {}",
                    flips.len()
                )));
            }
            let crossings: Vec<f64> = flips.iter().map(|&i| (i as f64 - 0.5) * delta).collect();
            let mean = periodic_mean(&crossings, FRAC_PI_2);
            if crossings
                .iter()
                .any(|&c| periodic_distance(c, mean, FRAC_PI_2) > 2.0 * delta)
            {
                return Err(AttackError::AmbiguousFlips(
                    "block boundaries are not a quarter turn apart".into(),
                ));
            }
            Ok(PlaneConstraint::NormalPair(
                geometry.direction(mean),
                geometry.direction(mean + FRAC_PI_2),
            ))
        }
        Pairing::SvozilShift { omega } => {
            let estimates: Vec<f64> = flips
                .iter()
                .map(|&i| {
                    let crossing = (i as f64 - 0.5) * delta;
                    if bits[(i + n - 1) % n] == SignBit::Minus {
                        crossing + FRAC_PI_2
                    } else {
                        crossing + omega + FRAC_PI_2
                    }
                })
                .collect();
            let mean = periodic_mean(&estimates, PI);
            if estimates.iter().any(|&e| periodic_distance(e, mean, PI) > 2.0 * delta) {
                return Err(AttackError::AmbiguousFlips(
                    "circle boundaries disagree about the axis".into(),
                ));
            }
            Ok(PlaneConstraint::CircleAxis(PlaneAngle::new(mean).axis()))
        }
    }
}

/// Recovers the hidden bit from Bob's own output. `None` when `β` is the
/// same for both values of `c`, i.e. `b` lies in the quadrant around `±λ₁`
/// bounded by `λ₊ = λ₁ + λ₂` and `λ₋ = λ₁ − λ₂`.
pub fn infer_c_from_beta(
    b: &UnitVec3,
    lambda1: &UnitVec3,
    lambda2: &UnitVec3,
    beta: SignBit,
) -> Option<SignBit> {
    let if_plus = bob_output(b, lambda1, lambda2, SignBit::Plus);
    let if_minus = bob_output(b, lambda1, lambda2, SignBit::Minus);
    if if_plus == if_minus {
        None
    } else if beta == if_plus {
        Some(SignBit::Plus)
    } else {
        Some(SignBit::Minus)
    }
}

/// Orients `axis` using one disclosed round `α_r = −sgn(â·λ_r)`.
pub fn resolve_sign(
    axis: &UnitVec3,
    lambda_r: &UnitVec3,
    alpha_r: SignBit,
    uncertainty: f64,
) -> Result<UnitVec3, AttackError> {
    let overlap = axis.dot(lambda_r);
    let required = uncertainty.sin();
    if overlap.abs() <= required {
        return Err(AttackError::IndiscriminateDisclosure { overlap, required });
    }
    if -sgn(overlap) == alpha_r {
        Ok(*axis)
    } else {
        Ok(-*axis)
    }
}

/// Rotation sense, with counterclockwise meaning increasing sweep angle
/// (the sense that takes `λ` to `Δ = λ + ω`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSense {
    Clockwise,
    Counterclockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarterPiRelation {
    pub sense: RotationSense,
    /// `+π/4` or `−π/4`.
    pub offset: f64,
    /// Bob's setting rotated by `offset` within the sweep plane. Alice's
    /// axis (circle) or its in-plane projection (sphere) is `±` this.
    pub axis: Setting,
    /// Entries whose `b` sat in a bit-revealing quadrant.
    pub discriminating: usize,
}

/// Detects `|φ_a − φ_b| ∈ {π/4, 3π/4}` from a box transcript with a fixed
/// Bob setting. Requires an orthogonal pairing and every discriminating
/// entry to follow one of the two quadrant patterns:
///
/// * `β = +1` for `b ∈ (−λ₊, λ₋)` and `β = −1` for `b ∈ (λ₊, −λ₋)`:
///   `â = ±` `b` rotated counterclockwise by π/4;
/// * the reverse pattern: rotated clockwise.
pub fn detect_quarter_pi(transcript: &Transcript) -> Option<QuarterPiRelation> {
    if transcript.channel != ChannelModel::NonlocalBox {
        return None;
    }
    let BobStrategy::Fixed(b_setting) = transcript.bob_strategy else {
        return None;
    };
    let orthogonal = match transcript.schedule.pairing {
        Pairing::OrthogonalPair => true,
        Pairing::SvozilShift { omega } => (omega - FRAC_PI_2).abs() < 1e-9,
        Pairing::AdjacentOffset => false,
    };
    if !orthogonal {
        return None;
    }
    const EPS: f64 = 1e-9;
    let b = b_setting.to_vec3();
    let (mut counterclockwise, mut clockwise, mut discriminating) = (true, true, 0usize);
    for r in &transcript.records {
        let p = b.dot_raw(r.lambda1.combine(SignBit::Plus, &r.lambda2));
        let m = b.dot_raw(r.lambda1.combine(SignBit::Minus, &r.lambda2));
        // Quadrant (λ₊, −λ₋) is where β = c; (−λ₊, λ₋) is where β = −c.
        let expected_ccw = if p > EPS && m < -EPS {
            SignBit::Minus
        } else if p < -EPS && m > EPS {
            SignBit::Plus
        } else {
            continue;
        };
        discriminating += 1;
        counterclockwise &= r.beta == expected_ccw;
        clockwise &= r.beta == -expected_ccw;
    }
    if discriminating == 0 {
        return None;
    }
    let (sense, offset) = match (counterclockwise, clockwise) {
        (true, false) => (RotationSense::Counterclockwise, FRAC_PI_4),
        (false, true) => (RotationSense::Clockwise, -FRAC_PI_4),
        _ => return None,
    };
    let axis = match b_setting {
        Setting::Circle(angle) => Setting::Circle(angle + offset),
        Setting::Sphere(v) => {
            let geometry = transcript.schedule.geometry;
            Setting::Sphere(geometry.direction(geometry.in_plane_angle(&v) + offset))
        }
    };
    Some(QuarterPiRelation {
        sense,
        offset,
        axis,
        discriminating,
    })
}
