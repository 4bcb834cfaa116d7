use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::inference::infer_c_from_beta;
use super::schedule::{Pairing, SweepSchedule};
use super::AttackError;
use crate::geometry::{SignBit, UnitVec3};
use crate::protocols::{box_view, svozil_round, tb_round, ChannelModel, Round, Setting};
use crate::textfmt::sig9;
use crate::PlaneAngle;

/// Header of the line-oriented transcript format.
pub const TRANSCRIPT_HEADER: &str = "index,l1x,l1y,l1z,l2x,l2y,l2z,alpha,beta,c";

/// How Bob picks his setting in each round of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobStrategy {
    Fixed(Setting),
    /// `b = λ₂` (sphere) or `b = Δ` (circle) every round, which makes `β = c`.
    AdaptiveRevealing,
}

/// One sweep entry as observed. `c` is present only on the classical channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub index: usize,
    pub lambda1: UnitVec3,
    pub lambda2: UnitVec3,
    pub alpha: SignBit,
    pub beta: SignBit,
    pub c: Option<SignBit>,
}

/// All rounds of one sweep with Alice's setting held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schedule: SweepSchedule,
    pub alice_setting: Setting,
    pub bob_strategy: BobStrategy,
    pub channel: ChannelModel,
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    /// Bob's setting in entry `k`, embedded in 3-D.
    pub fn bob_setting(&self, k: usize) -> UnitVec3 {
        match self.bob_strategy {
            BobStrategy::Fixed(b) => b.to_vec3(),
            BobStrategy::AdaptiveRevealing => self.schedule.entries[k].lambda2,
        }
    }

    /// Total number of communicated bits.
    pub fn cbit_count(&self) -> usize {
        self.records.iter().filter(|r| r.c.is_some()).count()
    }

    pub fn cbits_per_round(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.cbit_count() as f64 / self.records.len() as f64
        }
    }

    /// The bit sequence as Bob knows it: read off the channel, or inferred
    /// from his own outputs when the channel hides it.
    pub fn bob_bits(&self) -> Vec<Option<SignBit>> {
        self.records
            .iter()
            .map(|r| match self.channel {
                ChannelModel::ClassicalBit => r.c,
                ChannelModel::NonlocalBox => {
                    infer_c_from_beta(&self.bob_setting(r.index), &r.lambda1, &r.lambda2, r.beta)
                }
            })
            .collect()
    }

    /// Serializes the records, header first.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRANSCRIPT_HEADER);
        out.push('\n');
        for r in &self.records {
            let [l1x, l1y, l1z] = r.lambda1.to_array();
            let [l2x, l2y, l2z] = r.lambda2.to_array();
            let c = r.c.map(|c| c.value().to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                sig9(l1x),
                sig9(l1y),
                sig9(l1z),
                sig9(l2x),
                sig9(l2y),
                sig9(l2z),
                r.alpha.value(),
                r.beta.value(),
                c
            );
        }
        out
    }
}

/// Evaluates every schedule entry with Alice's fixed setting.
pub fn run_sweep(
    schedule: &SweepSchedule,
    alice_setting: Setting,
    bob_strategy: BobStrategy,
    channel: ChannelModel,
) -> Result<Transcript, AttackError> {
    let circle = schedule.is_circle();
    if alice_setting.is_circle() != circle {
        return Err(AttackError::SettingMismatch("alice"));
    }
    if let BobStrategy::Fixed(b) = bob_strategy {
        if b.is_circle() != circle {
            return Err(AttackError::SettingMismatch("bob"));
        }
    }
    let records = schedule
        .entries
        .iter()
        .map(|e| {
            let round = match (alice_setting, schedule.pairing) {
                (Setting::Circle(a), Pairing::SvozilShift { omega }) => {
                    let (lambda, shifted) = e.circle_angles(&schedule.pairing);
                    let b = match bob_strategy {
                        BobStrategy::Fixed(Setting::Circle(b)) => b,
                        _ => shifted,
                    };
                    Round::Svozil(svozil_round(a, b, lambda, PlaneAngle::new(omega), channel))
                }
                (Setting::Sphere(a), _) => {
                    let b = match bob_strategy {
                        BobStrategy::Fixed(b) => b.to_vec3(),
                        BobStrategy::AdaptiveRevealing => e.lambda2,
                    };
                    Round::Tb(tb_round(&a, &b, &e.lambda1, &e.lambda2, channel))
                }
                _ => unreachable!("schedule and setting kinds checked above"),
            };
            let (alice, bob) = box_view(&round);
            TranscriptRecord {
                index: e.index,
                lambda1: bob.lambda1,
                lambda2: bob.lambda2,
                alpha: alice.alpha,
                beta: bob.beta,
                c: bob.c,
            }
        })
        .collect();
    Ok(Transcript {
        schedule: schedule.clone(),
        alice_setting,
        bob_strategy,
        channel,
        records,
    })
}

/// Parses transcript lines written by [`Transcript::to_csv`]. Lines starting
/// with `#` and the header are skipped.
pub fn parse_records(text: &str) -> Result<Vec<TranscriptRecord>, AttackError> {
    let bad = |line: usize, what: &str| AttackError::Parse {
        line,
        message: what.to_string(),
    };
    let mut records = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == TRANSCRIPT_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad(line_no, "expected 10 fields"));
        }
        let index = fields[0].parse().map_err(|_| bad(line_no, "index"))?;
        let num = |i: usize| -> Result<f64, AttackError> {
            fields[i].parse().map_err(|_| bad(line_no, "component"))
        };
        let sign = |i: usize| -> Result<SignBit, AttackError> {
            fields[i]
                .parse()
                .ok()
                .and_then(SignBit::from_value)
                .ok_or_else(|| bad(line_no, "sign"))
        };
        let lambda1 = UnitVec3::normalize(num(1)?, num(2)?, num(3)?).map_err(|_| bad(line_no, "lambda1"))?;
        let lambda2 = UnitVec3::normalize(num(4)?, num(5)?, num(6)?).map_err(|_| bad(line_no, "lambda2"))?;
        let c = if fields[9].is_empty() { None } else { Some(sign(9)?) };
        records.push(TranscriptRecord {
            index,
            lambda1,
            lambda2,
            alpha: sign(7)?,
            beta: sign(8)?,
            c,
        });
    }
    Ok(records)
}
