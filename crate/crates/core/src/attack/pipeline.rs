use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::inference::{detect_flips, reconstruct_normal, resolve_sign, PlaneConstraint};
use super::schedule::{generate_sweep, Pairing, SweepGeometry};
use super::scoring::{score_axis_candidates, score_candidates};
use super::transcript::{run_sweep, BobStrategy, Transcript};
use super::AttackError;
use crate::geometry::{intersect_planes, sgn, PlaneAngle, SignBit, UnitVec3, PARALLEL_TOLERANCE};
use crate::protocols::{ChannelModel, Setting};

/// Smallest half-revolution count the pipeline accepts.
pub const MIN_PIPELINE_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Protocol {
    Tb,
    Svozil { omega: f64 },
    Ntb,
    Ns { omega: f64 },
}

impl Protocol {
    pub fn channel(&self) -> ChannelModel {
        match self {
            Protocol::Tb | Protocol::Svozil { .. } => ChannelModel::ClassicalBit,
            Protocol::Ntb | Protocol::Ns { .. } => ChannelModel::NonlocalBox,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Protocol::Svozil { .. } | Protocol::Ns { .. })
    }

    pub fn omega(&self) -> Option<f64> {
        match self {
            Protocol::Svozil { omega } | Protocol::Ns { omega } => Some(*omega),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Tb => "tb",
            Protocol::Svozil { .. } => "svozil",
            Protocol::Ntb => "ntb",
            Protocol::Ns { .. } => "ns",
        }
    }
}

/// The one round Alice reveals so Bob can orient the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disclosure {
    /// Bob picks `λ_r` along his estimate; Alice answers honestly.
    AlongEstimate,
    Round { lambda_r: Setting, alpha_r: SignBit },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMethod {
    PlaneIntersection,
    CircleFlips,
    GridScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    /// Alice's axis up to sign.
    pub axis: Setting,
    /// Radians; always at least one sweep step.
    pub uncertainty: f64,
    pub sign_resolved: bool,
    pub signed_direction: Option<Setting>,
}

impl DirectionEstimate {
    /// Angle to `truth`, treating the estimate as an axis until its sign is
    /// resolved.
    pub fn angular_error(&self, truth: &Setting) -> f64 {
        match self.signed_direction {
            Some(signed) => angular_error(&signed, truth, true),
            None => angular_error(&self.axis, truth, false),
        }
    }
}

/// Angle between two settings, or between the axes they span when
/// `signed` is false.
pub fn angular_error(estimate: &Setting, truth: &Setting, signed: bool) -> f64 {
    let (e, t) = (estimate.to_vec3(), truth.to_vec3());
    if signed {
        e.angle_to(&t)
    } else {
        e.axial_angle_to(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub estimate: DirectionEstimate,
    pub method: ReconstructionMethod,
    pub transcripts: Vec<Transcript>,
    /// The round used for sign resolution, when one was disclosed.
    pub disclosure: Option<(Setting, SignBit)>,
}

impl AttackOutcome {
    pub fn rounds(&self) -> usize {
        self.transcripts.iter().map(|t| t.records.len()).sum()
    }

    pub fn cbit_count(&self) -> usize {
        self.transcripts.iter().map(Transcript::cbit_count).sum()
    }

    pub fn cbits_per_round(&self) -> f64 {
        match self.rounds() {
            0 => 0.0,
            n => self.cbit_count() as f64 / n as f64,
        }
    }

    pub fn sweeps(&self) -> Vec<SweepGeometry> {
        self.transcripts.iter().map(|t| t.schedule.geometry).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Pairing of the sphere sweeps; circle sweeps always use the shift.
    pub pairing: Pairing,
    /// Minimum `|n₁ × n₂|` accepted from the two primary sweeps before the
    /// third one is run.
    pub conditioning: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            pairing: Pairing::AdjacentOffset,
            conditioning: 0.7,
        }
    }
}

/// Honest answer of Alice to a disclosed `λ_r`.
pub fn alice_output(alice: &Setting, lambda_r: &Setting) -> SignBit {
    -sgn(alice.to_vec3().dot(&lambda_r.to_vec3()))
}

pub fn attack_pipeline(
    protocol: Protocol,
    alice: Setting,
    steps: usize,
    disclosure: Option<Disclosure>,
) -> Result<AttackOutcome, AttackError> {
    attack_pipeline_with(protocol, alice, steps, disclosure, PipelineOptions::default())
}

pub fn attack_pipeline_with(
    protocol: Protocol,
    alice: Setting,
    steps: usize,
    disclosure: Option<Disclosure>,
    options: PipelineOptions,
) -> Result<AttackOutcome, AttackError> {
    if steps < MIN_PIPELINE_STEPS {
        return Err(AttackError::InvalidSchedule(format!(
            "the attack needs at least {MIN_PIPELINE_STEPS} steps, got {steps}"
        )));
    }
    if alice.is_circle() != protocol.is_circle() {
        return Err(AttackError::SettingMismatch("alice"));
    }
    let channel = protocol.channel();
    let delta = PI / steps as f64;
    let (axis, method, transcripts) = match protocol.omega() {
        Some(omega) => circle_axis(alice, steps, omega, channel)?,
        None => sphere_axis(alice, steps, channel, &options)?,
    };
    let uncertainty = 2.0 * delta;

    let mut estimate = DirectionEstimate {
        axis,
        uncertainty,
        sign_resolved: false,
        signed_direction: None,
    };
    let mut revealed = None;
    if let Some(disclosure) = disclosure {
        let (lambda_r, alpha_r) = match disclosure {
            Disclosure::AlongEstimate => (axis, alice_output(&alice, &axis)),
            Disclosure::Round { lambda_r, alpha_r } => (lambda_r, alpha_r),
        };
        if lambda_r.is_circle() != axis.is_circle() {
            return Err(AttackError::SettingMismatch("disclosure"));
        }
        revealed = Some((lambda_r, alpha_r));
        match resolve_sign(&axis.to_vec3(), &lambda_r.to_vec3(), alpha_r, uncertainty) {
            Ok(v) => {
                let flipped = v.dot(&axis.to_vec3()) < 0.0;
                estimate.sign_resolved = true;
                estimate.signed_direction = Some(if flipped { axis.negated() } else { axis });
            }
            Err(AttackError::IndiscriminateDisclosure { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(AttackOutcome {
        estimate,
        method,
        transcripts,
        disclosure: revealed,
    })
}

type AxisResult = (Setting, ReconstructionMethod, Vec<Transcript>);

fn known_bits(t: &Transcript) -> Option<Vec<SignBit>> {
    t.bob_bits().into_iter().collect()
}

fn constraint_of(t: &Transcript) -> Result<PlaneConstraint, AttackError> {
    let bits = known_bits(t).ok_or_else(|| {
        AttackError::AmbiguousFlips("some entries hide the bit".into())
    })?;
    let flips = detect_flips(&bits);
    reconstruct_normal(&t.schedule, &bits, &flips)
}

fn circle_axis(
    alice: Setting,
    steps: usize,
    omega: f64,
    channel: ChannelModel,
) -> Result<AxisResult, AttackError> {
    let schedule = generate_sweep(SweepGeometry::Circle, Pairing::SvozilShift { omega }, steps)?;
    let transcript = run_sweep(&schedule, alice, BobStrategy::AdaptiveRevealing, channel)?;
    let transcripts = vec![transcript];
    match constraint_of(&transcripts[0]) {
        Ok(PlaneConstraint::CircleAxis(a)) => {
            Ok((Setting::Circle(a), ReconstructionMethod::CircleFlips, transcripts))
        }
        Err(AttackError::NoFlip) => Err(AttackError::Unlocatable),
        Ok(_) | Err(AttackError::AmbiguousFlips(_)) => {
            let a = grid_fallback(&transcripts, schedule.delta)?;
            Ok((
                Setting::Circle(PlaneAngle::new(a.azimuth()).axis()),
                ReconstructionMethod::GridScore,
                transcripts,
            ))
        }
        Err(e) => Err(e),
    }
}

fn grid_fallback(transcripts: &[Transcript], delta: f64) -> Result<UnitVec3, AttackError> {
    match score_axis_candidates(transcripts, delta / 2.0) {
        Ok(score) if !score.underdetermined => Ok(score.axis),
        Ok(_) | Err(AttackError::NoObservations) => Err(AttackError::Unlocatable),
        Err(e) => Err(e),
    }
}

fn sphere_axis(
    alice: Setting,
    steps: usize,
    channel: ChannelModel,
    options: &PipelineOptions,
) -> Result<AxisResult, AttackError> {
    let run = |geometry| -> Result<(Transcript, Result<PlaneConstraint, AttackError>), AttackError> {
        let schedule = generate_sweep(geometry, options.pairing, steps)?;
        let t = run_sweep(&schedule, alice, BobStrategy::AdaptiveRevealing, channel)?;
        let constraint = constraint_of(&t);
        Ok((t, constraint))
    };
    let mut transcripts = Vec::with_capacity(3);
    let mut constraints = Vec::with_capacity(3);
    let mut troubled = false;
    for geometry in [SweepGeometry::XyPlane, SweepGeometry::XzPlane] {
        let (t, c) = run(geometry)?;
        transcripts.push(t);
        match c {
            Ok(c) => constraints.push(c),
            Err(AttackError::NoFlip | AttackError::AmbiguousFlips(_)) => troubled = true,
            Err(e) => return Err(e),
        }
    }
    let well_conditioned = best_intersection(&constraints, &transcripts)
        .is_some_and(|(_, conditioning)| conditioning >= options.conditioning);
    if troubled || !well_conditioned {
        let (t, c) = run(SweepGeometry::YzPlane)?;
        transcripts.push(t);
        match c {
            Ok(c) => constraints.push(c),
            Err(AttackError::NoFlip | AttackError::AmbiguousFlips(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let delta = PI / steps as f64;
    let (axis, method) = match best_intersection(&constraints, &transcripts) {
        Some((axis, _)) => (axis, ReconstructionMethod::PlaneIntersection),
        None => (grid_fallback(&transcripts, delta)?, ReconstructionMethod::GridScore),
    };
    Ok((Setting::Sphere(axis), method, transcripts))
}

/// Intersects the best-conditioned pair of constraints. Where a sweep
/// offers two candidate normals, the combination that best reproduces the
/// observed bits wins.
fn best_intersection(
    constraints: &[PlaneConstraint],
    transcripts: &[Transcript],
) -> Option<(UnitVec3, f64)> {
    let mut best: Option<(UnitVec3, f64)> = None;
    for i in 0..constraints.len() {
        for j in i + 1..constraints.len() {
            let mut candidates = Vec::new();
            for n1 in constraints[i].normals() {
                for n2 in constraints[j].normals() {
                    if let Ok(axis) = intersect_planes(&n1, &n2) {
                        let [x, y, z] = n1.cross(&n2);
                        let conditioning = (x * x + y * y + z * z).sqrt();
                        if conditioning >= PARALLEL_TOLERANCE {
                            candidates.push((axis, conditioning));
                        }
                    }
                }
            }
            let chosen = if candidates.len() > 1 {
                let axes: Vec<UnitVec3> = candidates.iter().map(|c| c.0).collect();
                let scores = score_candidates(transcripts, &axes);
                candidates
                    .iter()
                    .zip(scores)
                    .max_by(|(p, ps), (q, qs)| ps.cmp(qs).then(p.1.total_cmp(&q.1)))
                    .map(|(c, _)| *c)
            } else {
                candidates.first().copied()
            };
            if let Some(c) = chosen {
                if best.is_none_or(|b| c.1 > b.1) {
                    best = Some(c);
                }
            }
        }
    }
    best
}
