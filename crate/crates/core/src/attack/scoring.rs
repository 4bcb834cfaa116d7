use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transcript::Transcript;
use super::AttackError;
use crate::geometry::{sgn, SignBit, UnitVec3};

/// Best grid axis for a set of transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScore {
    pub axis: UnitVec3,
    /// Entries whose predicted bit matches the observed one.
    pub agreement: usize,
    /// Entries with a known bit.
    pub compared: usize,
    pub maximizers: usize,
    /// Largest axial angle from `axis` to another maximizer.
    pub spread: f64,
    pub underdetermined: bool,
}

struct Observation {
    lambda1: UnitVec3,
    lambda2: UnitVec3,
    c: SignBit,
}

fn observations(transcripts: &[Transcript]) -> Vec<Observation> {
    transcripts
        .iter()
        .flat_map(|t| {
            t.bob_bits()
                .into_iter()
                .zip(&t.records)
                .filter_map(|(c, r)| {
                    c.map(|c| Observation {
                        lambda1: r.lambda1,
                        lambda2: r.lambda2,
                        c,
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn agreement(obs: &[Observation], axis: &UnitVec3) -> usize {
    obs.iter()
        .filter(|o| sgn(axis.dot(&o.lambda1)) * sgn(axis.dot(&o.lambda2)) == o.c)
        .count()
}

/// Agreement count of each candidate against every known bit.
pub fn score_candidates(transcripts: &[Transcript], candidates: &[UnitVec3]) -> Vec<usize> {
    let obs = observations(transcripts);
    candidates.iter().map(|a| agreement(&obs, a)).collect()
}

/// Latitude rings over the upper hemisphere; the bit is even in `â`.
fn hemisphere_grid(step: f64) -> Vec<UnitVec3> {
    let rings = (FRAC_PI_2 / step).ceil() as usize;
    let mut grid = vec![UnitVec3::Z];
    for i in 1..=rings {
        let polar = (i as f64 * step).min(FRAC_PI_2);
        let count = ((TAU * polar.sin() / step).round() as usize).max(1);
        grid.extend(
            (0..count).map(|j| UnitVec3::from_spherical(polar, j as f64 * TAU / count as f64)),
        );
    }
    grid
}

fn half_circle_grid(step: f64) -> Vec<UnitVec3> {
    let count = (PI / step).ceil() as usize;
    (0..count)
        .map(|j| UnitVec3::from_spherical(FRAC_PI_2, j as f64 * PI / count as f64))
        .collect()
}

/// Scores every axis on a grid of spacing `grid_step` and returns the
/// maximizer nearest the mean of all maximizers. Circle transcripts are
/// scored over in-plane axes only.
pub fn score_axis_candidates(
    transcripts: &[Transcript],
    grid_step: f64,
) -> Result<AxisScore, AttackError> {
    if !(grid_step > 0.0 && grid_step < FRAC_PI_2) {
        return Err(AttackError::InvalidSchedule(format!("grid step {grid_step}")));
    }
    let obs = observations(transcripts);
    if obs.is_empty() {
        return Err(AttackError::NoObservations);
    }
    let circle = transcripts.iter().all(|t| t.schedule.is_circle());
    let grid = if circle {
        half_circle_grid(grid_step)
    } else {
        hemisphere_grid(grid_step)
    };
    let scores: Vec<usize> = grid.par_iter().map(|a| agreement(&obs, a)).collect();
    let best = *scores.iter().max().expect("grid is never empty");
    let maximizers: Vec<UnitVec3> = grid
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == best)
        .map(|(a, _)| *a)
        .collect();

    let reference = maximizers[0];
    let sum = maximizers.iter().fold([0.0; 3], |acc, m| {
        let s = if m.dot(&reference) < 0.0 { -1.0 } else { 1.0 };
        [acc[0] + s * m.x(), acc[1] + s * m.y(), acc[2] + s * m.z()]
    });
    let mean = UnitVec3::from_array(sum).unwrap_or(reference);
    let axis = *maximizers
        .iter()
        .max_by(|p, q| p.dot(&mean).abs().total_cmp(&q.dot(&mean).abs()))
        .expect("at least one maximizer");
    let spread = maximizers
        .iter()
        .map(|m| axis.axial_angle_to(m))
        .fold(0.0, f64::max);

    let max_delta = transcripts
        .iter()
        .map(|t| t.schedule.delta)
        .fold(0.0, f64::max);
    let informative = obs.iter().any(|o| o.c == SignBit::Minus);
    Ok(AxisScore {
        axis,
        agreement: best,
        compared: obs.len(),
        maximizers: maximizers.len(),
        spread,
        underdetermined: !informative || spread > 4.0 * max_delta + 2.0 * grid_step,
    })
}
