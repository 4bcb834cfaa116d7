//! Single-round evaluation of the shared-random-variable protocols.
//!
//! * TB: two shared directions on the sphere, one communicated bit.
//! * Svozil: one shared angle on the circle plus its fixed shift `Δ = λ + ω`.
//! * NTB / NS: the same rounds, but the bit acts on Bob's output without ever
//!   reaching him. The physics is identical; only [`box_view`] differs.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sgn, PlaneAngle, SignBit, UnitVec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

/// How Alice's bit reaches Bob's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Alice sends `c`; Bob reads it.
    ClassicalBit,
    /// `c` shapes Bob's output but is never visible to him.
    NonlocalBox,
}

impl ChannelModel {
    pub fn cbits_per_round(self) -> u32 {
        match self {
            ChannelModel::ClassicalBit => 1,
            ChannelModel::NonlocalBox => 0,
        }
    }
}

/// A measurement setting: a sphere direction (TB family) or a circle angle
/// (Svozil family).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Sphere(UnitVec3),
    Circle(PlaneAngle),
}

impl Setting {
    /// Circle angles are embedded in the `xy` plane.
    pub fn to_vec3(&self) -> UnitVec3 {
        match self {
            Setting::Sphere(v) => *v,
            Setting::Circle(a) => UnitVec3::from_plane_angle(*a),
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Setting::Circle(_))
    }

    pub fn negated(&self) -> Setting {
        match self {
            Setting::Sphere(v) => Setting::Sphere(-*v),
            Setting::Circle(a) => Setting::Circle(*a + PI),
        }
    }
}

/// Bob's output rule shared by every protocol: `sgn(b · (λ₁ + c λ₂))`.
pub fn bob_output(b: &UnitVec3, lambda1: &UnitVec3, lambda2: &UnitVec3, c: SignBit) -> SignBit {
    sgn(b.dot_raw(lambda1.combine(c, lambda2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbRound {
    pub a: UnitVec3,
    pub b: UnitVec3,
    pub lambda1: UnitVec3,
    pub lambda2: UnitVec3,
    pub alpha: SignBit,
    pub beta: SignBit,
    pub c: SignBit,
    pub channel: ChannelModel,
}

pub fn tb_round(
    a: &UnitVec3,
    b: &UnitVec3,
    lambda1: &UnitVec3,
    lambda2: &UnitVec3,
    channel: ChannelModel,
) -> TbRound {
    let s1 = sgn(a.dot(lambda1));
    let c = s1 * sgn(a.dot(lambda2));
    TbRound {
        a: *a,
        b: *b,
        lambda1: *lambda1,
        lambda2: *lambda2,
        alpha: -s1,
        beta: bob_output(b, lambda1, lambda2, c),
        c,
        channel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvozilRound {
    pub lambda: PlaneAngle,
    pub omega: PlaneAngle,
    pub a: PlaneAngle,
    pub b: PlaneAngle,
    pub alpha: SignBit,
    pub beta: SignBit,
    pub c: SignBit,
    pub channel: ChannelModel,
}

impl SvozilRound {
    /// The shifted variable `Δ = λ + ω`.
    pub fn shifted(&self) -> PlaneAngle {
        self.lambda + self.omega
    }
}

/// Panics unless `omega ∈ [0, π/2]`.
pub fn svozil_round(
    a: PlaneAngle,
    b: PlaneAngle,
    lambda: PlaneAngle,
    omega: PlaneAngle,
    channel: ChannelModel,
) -> SvozilRound {
    assert!(
        omega.radians() <= FRAC_PI_2 + 1e-12,
        "omega {} outside [0, pi/2]",
        omega.radians()
    );
    let shifted = lambda + omega;
    let s1 = sgn((a.radians() - lambda.radians()).cos());
    let c = s1 * sgn((a.radians() - shifted.radians()).cos());
    // At ω = 0 the bit is a perfect square, so λ̂ + cΔ̂ = 2λ̂ never vanishes.
    debug_assert!(omega.radians() > 0.0 || c == SignBit::Plus);
    let beta = bob_output(
        &UnitVec3::from_plane_angle(b),
        &UnitVec3::from_plane_angle(lambda),
        &UnitVec3::from_plane_angle(shifted),
        c,
    );
    SvozilRound {
        lambda,
        omega,
        a,
        b,
        alpha: -s1,
        beta,
        c,
        channel,
    }
}

/// The singlet correlation `-cos θ` that TB reproduces.
pub fn singlet_correlation(theta: f64) -> f64 {
    -theta.cos()
}

/// Closed-form correlation of the Svozil protocol at folded angle `theta`
/// between the settings, for shift `omega`. Five linear pieces; each
/// boundary belongs to the branch on its left.
pub fn svozil_correlation(theta: f64, omega: f64) -> Result<f64, ProtocolError> {
    if !(0.0..=PI).contains(&theta) {
        return Err(ProtocolError::OutOfRange {
            name: "theta",
            value: theta,
            lo: 0.0,
            hi: PI,
        });
    }
    if !(0.0..=FRAC_PI_2).contains(&omega) {
        return Err(ProtocolError::OutOfRange {
            name: "omega",
            value: omega,
            lo: 0.0,
            hi: FRAC_PI_2,
        });
    }
    let slope = 2.0 / PI;
    let e = if theta <= omega / 2.0 {
        -1.0
    } else if theta <= (PI - omega) / 2.0 {
        -1.0 + slope * (theta - omega / 2.0)
    } else if theta <= (PI + omega) / 2.0 {
        -2.0 * (1.0 - slope * theta)
    } else if theta <= PI - omega / 2.0 {
        1.0 + slope * (theta - PI + omega / 2.0)
    } else {
        1.0
    };
    Ok(e)
}

/// The round data visible to Alice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceView {
    pub setting: Setting,
    pub alpha: SignBit,
    pub lambda1: UnitVec3,
    pub lambda2: UnitVec3,
}

/// The round data visible to Bob. `c` is present only on the classical channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BobView {
    pub setting: Setting,
    pub beta: SignBit,
    pub c: Option<SignBit>,
    pub lambda1: UnitVec3,
    pub lambda2: UnitVec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Round {
    Tb(TbRound),
    Svozil(SvozilRound),
}

impl Round {
    pub fn alpha(&self) -> SignBit {
        match self {
            Round::Tb(r) => r.alpha,
            Round::Svozil(r) => r.alpha,
        }
    }

    pub fn beta(&self) -> SignBit {
        match self {
            Round::Tb(r) => r.beta,
            Round::Svozil(r) => r.beta,
        }
    }

    pub fn c(&self) -> SignBit {
        match self {
            Round::Tb(r) => r.c,
            Round::Svozil(r) => r.c,
        }
    }

    pub fn channel(&self) -> ChannelModel {
        match self {
            Round::Tb(r) => r.channel,
            Round::Svozil(r) => r.channel,
        }
    }

    /// The two shared directions; circle angles embedded in the `xy` plane.
    pub fn srv(&self) -> (UnitVec3, UnitVec3) {
        match self {
            Round::Tb(r) => (r.lambda1, r.lambda2),
            Round::Svozil(r) => (
                UnitVec3::from_plane_angle(r.lambda),
                UnitVec3::from_plane_angle(r.shifted()),
            ),
        }
    }
}

/// Splits a round into what each party observes.
pub fn box_view(round: &Round) -> (AliceView, BobView) {
    let (lambda1, lambda2) = round.srv();
    let (alice_setting, bob_setting) = match round {
        Round::Tb(r) => (Setting::Sphere(r.a), Setting::Sphere(r.b)),
        Round::Svozil(r) => (Setting::Circle(r.a), Setting::Circle(r.b)),
    };
    let c = match round.channel() {
        ChannelModel::ClassicalBit => Some(round.c()),
        ChannelModel::NonlocalBox => None,
    };
    (
        AliceView {
            setting: alice_setting,
            alpha: round.alpha(),
            lambda1,
            lambda2,
        },
        BobView {
            setting: bob_setting,
            beta: round.beta(),
            c,
            lambda1,
            lambda2,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_plane_angle, sample_unit_sphere};
    use crate::random::RandomStream;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn v(x: f64, y: f64, z: f64) -> UnitVec3 {
        UnitVec3::normalize(x, y, z).unwrap()
    }

    #[test]
    fn tb_round_direct_evaluation() {
        let l2 = v(1.0, 0.0, 1.0);
        let r = tb_round(&UnitVec3::Z, &UnitVec3::X, &UnitVec3::Z, &l2, ChannelModel::ClassicalBit);
        assert_eq!(r.alpha, SignBit::Minus);
        assert_eq!(r.c, SignBit::Plus);
        assert_eq!(r.beta, SignBit::Plus);

        let flipped = tb_round(&-UnitVec3::Z, &UnitVec3::X, &UnitVec3::Z, &l2, ChannelModel::ClassicalBit);
        assert_eq!(flipped.alpha, -r.alpha);
        assert_eq!(flipped.c, r.c);
        assert_eq!(flipped.beta, r.beta);
    }

    #[test]
    fn tb_equal_settings_anticorrelate() {
        let mut s = RandomStream::new(1);
        for _ in 0..100_000 {
            let (l1, l2) = (sample_unit_sphere(&mut s), sample_unit_sphere(&mut s));
            let r = tb_round(&UnitVec3::Z, &UnitVec3::Z, &l1, &l2, ChannelModel::ClassicalBit);
            assert_eq!(r.alpha * r.beta, SignBit::Minus);
        }
    }

    #[test]
    fn tb_axis_reversal_flips_only_the_owner() {
        let mut s = RandomStream::new(77);
        for _ in 0..20_000 {
            let a = sample_unit_sphere(&mut s);
            let b = sample_unit_sphere(&mut s);
            let (l1, l2) = (sample_unit_sphere(&mut s), sample_unit_sphere(&mut s));
            let r = tb_round(&a, &b, &l1, &l2, ChannelModel::ClassicalBit);
            let ra = tb_round(&-a, &b, &l1, &l2, ChannelModel::ClassicalBit);
            assert_eq!((ra.alpha, ra.c, ra.beta), (-r.alpha, r.c, r.beta));
            let rb = tb_round(&a, &-b, &l1, &l2, ChannelModel::ClassicalBit);
            assert_eq!((rb.alpha, rb.c, rb.beta), (r.alpha, r.c, -r.beta));
        }
    }

    #[test]
    fn svozil_round_direct_evaluation() {
        let r = svozil_round(
            PlaneAngle::ZERO,
            PlaneAngle::new(FRAC_PI_4),
            PlaneAngle::new(FRAC_PI_6),
            PlaneAngle::new(FRAC_PI_2),
            ChannelModel::ClassicalBit,
        );
        assert_eq!(r.alpha, SignBit::Minus);
        assert_eq!(r.c, SignBit::Minus);
        assert_eq!(r.beta, SignBit::Plus);
        assert_eq!(r.alpha * r.beta, SignBit::Minus);
        // λ̂ - Δ̂ points at -π/12.
        let (lx, ly) = r.lambda.unit();
        let (dx, dy) = r.shifted().unit();
        assert!(((ly - dy).atan2(lx - dx) + PI / 12.0).abs() < 1e-12);
    }

    #[test]
    fn svozil_without_shift_never_flips_the_bit() {
        let mut s = RandomStream::new(5);
        for _ in 0..10_000 {
            let a = sample_plane_angle(&mut s);
            let l = sample_plane_angle(&mut s);
            let r = svozil_round(a, PlaneAngle::ZERO, l, PlaneAngle::ZERO, ChannelModel::ClassicalBit);
            assert_eq!(r.c, SignBit::Plus);
        }
    }

    #[test]
    fn svozil_quadrant_brute_force_at_three_quarter_pi() {
        // a = 0, b = 3π/4, ω = π/2: sample each λ quadrant densely.
        for quadrant in 0..4 {
            for j in 1..200 {
                let lambda = PlaneAngle::new(FRAC_PI_2 * (quadrant as f64 + j as f64 / 200.0));
                let r = svozil_round(
                    PlaneAngle::ZERO,
                    PlaneAngle::new(3.0 * FRAC_PI_4),
                    lambda,
                    PlaneAngle::new(FRAC_PI_2),
                    ChannelModel::ClassicalBit,
                );
                assert_eq!(r.alpha * r.beta, SignBit::Plus, "quadrant {quadrant}, j {j}");
            }
        }
    }

    #[test]
    fn svozil_analytic_values() {
        assert_eq!(svozil_correlation(0.0, FRAC_PI_2).unwrap(), -1.0);
        assert!(svozil_correlation(FRAC_PI_2, FRAC_PI_2).unwrap().abs() < 1e-15);
        assert!((svozil_correlation(FRAC_PI_3, FRAC_PI_2).unwrap() + 2.0 / 3.0).abs() < 1e-15);
        for k in 0..=50 {
            let t = PI * k as f64 / 50.0;
            let e = svozil_correlation(t, 0.0).unwrap();
            assert!((e - (2.0 * t / PI - 1.0)).abs() < 1e-12);
        }
        assert!(svozil_correlation(-0.1, 0.5).is_err());
        assert!(svozil_correlation(PI + 0.1, 0.5).is_err());
        assert!(svozil_correlation(1.0, 1.6).is_err());
    }

    #[test]
    fn svozil_analytic_is_continuous_across_branches() {
        for omega in [0.0, 0.3, FRAC_PI_4, 1.2, FRAC_PI_2] {
            let bounds = [omega / 2.0, (PI - omega) / 2.0, (PI + omega) / 2.0, PI - omega / 2.0];
            for t in bounds {
                let lo = svozil_correlation((t - 1e-9).max(0.0), omega).unwrap();
                let hi = svozil_correlation((t + 1e-9).min(PI), omega).unwrap();
                assert!((lo - hi).abs() < 1e-8, "jump at {t} for omega {omega}");
            }
        }
    }

    #[test]
    fn svozil_analytic_is_odd_and_beats_quantum_at_quarter_turn() {
        for k in 1..400 {
            let t = PI * k as f64 / 400.0;
            let e = svozil_correlation(t, FRAC_PI_2).unwrap();
            let mirrored = svozil_correlation(PI - t, FRAC_PI_2).unwrap();
            assert!((e + mirrored).abs() < 1e-12);
            if t < FRAC_PI_2 {
                assert!(e.abs() >= t.cos().abs() - 1e-12, "theta {t}");
            }
        }
    }

    #[test]
    fn views_respect_the_channel() {
        let l2 = v(1.0, 0.0, 1.0);
        let classical = Round::Tb(tb_round(&UnitVec3::Z, &UnitVec3::X, &UnitVec3::Z, &l2, ChannelModel::ClassicalBit));
        let boxed = Round::Tb(tb_round(&UnitVec3::Z, &UnitVec3::X, &UnitVec3::Z, &l2, ChannelModel::NonlocalBox));
        let (alice, bob) = box_view(&classical);
        assert_eq!(bob.c, Some(SignBit::Plus));
        assert_eq!(alice.alpha, SignBit::Minus);
        assert_eq!(bob.lambda2, l2);
        let (_, bob) = box_view(&boxed);
        assert_eq!(bob.c, None);
        assert_eq!(bob.lambda1, UnitVec3::Z);

        let sv = Round::Svozil(svozil_round(
            PlaneAngle::ZERO,
            PlaneAngle::new(1.0),
            PlaneAngle::new(0.4),
            PlaneAngle::new(FRAC_PI_2),
            ChannelModel::NonlocalBox,
        ));
        let (alice, bob) = box_view(&sv);
        assert_eq!(bob.c, None);
        assert_eq!(alice.setting, Setting::Circle(PlaneAngle::ZERO));
        assert!(alice.lambda1.dot(&alice.lambda2).abs() < 1e-12);
    }

    #[test]
    fn channel_accounting() {
        assert_eq!(ChannelModel::ClassicalBit.cbits_per_round(), 1);
        assert_eq!(ChannelModel::NonlocalBox.cbits_per_round(), 0);
    }
}
