//! Sweep attack: Bob scans the shared variables along great circles,
//! watches where the communicated bit (or his own output) flips, and
//! reconstructs Alice's measurement axis.

pub mod inference;
pub mod pipeline;
pub mod schedule;
pub mod scoring;
pub mod transcript;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use inference::{
    detect_flips, detect_quarter_pi, infer_c_from_beta, reconstruct_normal, resolve_sign,
    PlaneConstraint, QuarterPiRelation, RotationSense,
};
pub use pipeline::{
    angular_error, attack_pipeline, attack_pipeline_with, AttackOutcome, DirectionEstimate,
    Disclosure, PipelineOptions, Protocol, ReconstructionMethod,
};
pub use schedule::{generate_sweep, Pairing, SweepEntry, SweepGeometry, SweepSchedule};
pub use scoring::{score_axis_candidates, score_candidates, AxisScore};
pub use transcript::{
    parse_records, run_sweep, BobStrategy, Transcript, TranscriptRecord, TRANSCRIPT_HEADER,
};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid sweep schedule: {0}")]
    InvalidSchedule(String),
    #[error("{0} setting does not match the sweep geometry")]
    SettingMismatch(&'static str),
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("the sweep produced no flip")]
    NoFlip,
    #[error("flip pattern is inconsistent with a single axis: {0}")]
    AmbiguousFlips(String),
    #[error("disclosed round overlaps the axis by {overlap:.3e}, need more than {required:.3e}")]
    IndiscriminateDisclosure { overlap: f64, required: f64 },
    #[error("no axis is consistent with the observed bits")]
    Unlocatable,
    #[error("no entry revealed the hidden bit")]
    NoObservations,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
