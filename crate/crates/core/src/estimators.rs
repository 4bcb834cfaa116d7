//! Monte Carlo estimation of marginals and correlations, curve scans and
//! CHSH scoring.
//!
//! Sample `i` always reads the same keystream words of `(seed, i)`, and
//! per-chunk tallies are integer sums, so every estimate is bit-identical
//! for any number of workers.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    rotate_about_axis, sample_plane_angle, sample_unit_sphere, Axis, PlaneAngle, UnitVec3,
    SPHERE_DRAWS,
};
use crate::protocols::{
    singlet_correlation, svozil_correlation, svozil_round, tb_round, ChannelModel, ProtocolError,
    Setting,
};
use crate::random::{derive_seed, streams, RandomStream};

/// Samples per parallel work item; fixed so partitioning never depends on
/// the worker count.
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("angle grid is empty")]
    EmptyGrid,
    #[error("grid step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("{model} needs {expected} settings")]
    SettingMismatch {
        model: &'static str,
        expected: &'static str,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Which correlation model to sample. The nonlocal variants have the same
/// statistics as their classical counterparts and map onto these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Tb,
    Svozil { omega: f64 },
}

impl Model {
    fn name(&self) -> &'static str {
        match self {
            Model::Tb => "tb",
            Model::Svozil { .. } => "svozil",
        }
    }

    /// Setting for a coplanar angle: TB rotates `ẑ` about `ŷ`, Svozil uses
    /// the angle directly.
    pub fn setting_at(&self, angle: f64) -> Setting {
        match self {
            Model::Tb => Setting::Sphere(rotate_about_axis(&UnitVec3::Z, Axis::Y, angle)),
            Model::Svozil { .. } => Setting::Circle(PlaneAngle::new(angle)),
        }
    }

    /// Closed-form correlation at folded angle `theta ∈ [0, π]`.
    pub fn analytic(&self, theta: f64) -> Result<f64, EstimatorError> {
        match self {
            Model::Tb => Ok(singlet_correlation(theta)),
            Model::Svozil { omega } => Ok(svozil_correlation(theta, *omega)?),
        }
    }

    fn draws_per_sample(&self) -> u64 {
        match self {
            Model::Tb => 2 * SPHERE_DRAWS,
            Model::Svozil { .. } => 1,
        }
    }
}

/// Sample count, seed and worker count for one estimate. `workers == 0`
/// uses the global pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub n: u64,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl MonteCarlo {
    pub fn new(n: u64, seed: u64) -> Self {
        Self { n, seed, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T, EstimatorError> {
        if self.workers == 0 {
            Ok(job())
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()?;
            Ok(pool.install(job))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub mean: f64,
    /// Unbiased sample standard deviation over `√n`; zero when `n = 1`.
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub mean_alpha: f64,
    pub mean_beta: f64,
    pub n: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    alpha: i64,
    beta: i64,
    product: i64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            alpha: self.alpha + other.alpha,
            beta: self.beta + other.beta,
            product: self.product + other.product,
        }
    }
}

fn resolve_settings(model: &Model, a: &Setting, b: &Setting) -> Result<(), EstimatorError> {
    let ok = match model {
        Model::Tb => !a.is_circle() && !b.is_circle(),
        Model::Svozil { .. } => a.is_circle() && b.is_circle(),
    };
    if ok {
        Ok(())
    } else {
        Err(EstimatorError::SettingMismatch {
            model: model.name(),
            expected: if matches!(model, Model::Tb) { "sphere" } else { "circle" },
        })
    }
}

fn tally_range(model: &Model, a: &Setting, b: &Setting, seed: u64, start: u64, end: u64) -> Tally {
    let mut stream =
        RandomStream::at_sample(seed, streams::ESTIMATION, start, model.draws_per_sample());
    let mut t = Tally::default();
    for _ in start..end {
        let (alpha, beta) = match (model, a, b) {
            (Model::Tb, Setting::Sphere(a), Setting::Sphere(b)) => {
                let l1 = sample_unit_sphere(&mut stream);
                let l2 = sample_unit_sphere(&mut stream);
                let r = tb_round(a, b, &l1, &l2, ChannelModel::ClassicalBit);
                (r.alpha, r.beta)
            }
            (Model::Svozil { omega }, Setting::Circle(a), Setting::Circle(b)) => {
                let lambda = sample_plane_angle(&mut stream);
                let r = svozil_round(*a, *b, lambda, PlaneAngle::new(*omega), ChannelModel::ClassicalBit);
                (r.alpha, r.beta)
            }
            _ => unreachable!("settings validated by caller"),
        };
        t.alpha += alpha.value();
        t.beta += beta.value();
        t.product += (alpha * beta).value();
    }
    t
}

fn run_tally(model: &Model, a: &Setting, b: &Setting, mc: &MonteCarlo) -> Result<Tally, EstimatorError> {
    if mc.n == 0 {
        return Err(EstimatorError::NoSamples);
    }
    resolve_settings(model, a, b)?;
    if let Model::Svozil { omega } = model {
        if !(0.0..=FRAC_PI_2).contains(omega) {
            return Err(ProtocolError::OutOfRange {
                name: "omega",
                value: *omega,
                lo: 0.0,
                hi: FRAC_PI_2,
            }
            .into());
        }
    }
    let chunks = mc.n.div_ceil(CHUNK);
    mc.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let start = k * CHUNK;
                let end = (start + CHUNK).min(mc.n);
                tally_range(model, a, b, mc.seed, start, end)
            })
            .reduce(Tally::default, Tally::merge)
    })
}

fn correlation_from(t: &Tally, mc: &MonteCarlo) -> CorrelationEstimate {
    let n = mc.n as f64;
    let mean = t.product as f64 / n;
    // Every product is ±1, so Σx² = n.
    let stderr = if mc.n > 1 {
        let var = ((n - t.product as f64 * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    CorrelationEstimate {
        mean,
        stderr,
        n: mc.n,
        seed: mc.seed,
    }
}

/// `⟨αβ⟩` over `mc.n` independent rounds.
pub fn estimate_correlation(
    model: &Model,
    a: &Setting,
    b: &Setting,
    mc: &MonteCarlo,
) -> Result<CorrelationEstimate, EstimatorError> {
    let t = run_tally(model, a, b, mc)?;
    Ok(correlation_from(&t, mc))
}

pub fn estimate_marginals(
    model: &Model,
    a: &Setting,
    b: &Setting,
    mc: &MonteCarlo,
) -> Result<Marginals, EstimatorError> {
    let t = run_tally(model, a, b, mc)?;
    let n = mc.n as f64;
    Ok(Marginals {
        mean_alpha: t.alpha as f64 / n,
        mean_beta: t.beta as f64 / n,
        n: mc.n,
        seed: mc.seed,
    })
}

/// `points` angles from 0 to π inclusive.
pub fn theta_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| PI * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub theta: f64,
    pub empirical: f64,
    pub analytic: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

/// Empirical vs closed-form correlation at each `theta` (Alice at angle 0,
/// Bob at `theta`).
pub fn scan_curve(
    model: &Model,
    theta_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<CurveRow>, EstimatorError> {
    if theta_grid.is_empty() {
        return Err(EstimatorError::EmptyGrid);
    }
    if mc.n == 0 {
        return Err(EstimatorError::NoSamples);
    }
    let a = model.setting_at(0.0);
    theta_grid
        .iter()
        .map(|&theta| {
            let b = model.setting_at(theta);
            let est = estimate_correlation(model, &a, &b, mc)?;
            let folded = PlaneAngle::new(theta).distance(PlaneAngle::ZERO);
            Ok(CurveRow {
                theta,
                empirical: est.mean,
                analytic: model.analytic(folded)?,
                stderr: est.stderr,
                n: est.n,
                seed: est.seed,
            })
        })
        .collect()
}

/// Coplanar CHSH settings `(a, a′, b, b′)` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// `a = 0, a′ = π/2, b = π/4, b′ = 3π/4`.
    pub const STANDARD: ChshSettings = ChshSettings {
        a: 0.0,
        a_prime: FRAC_PI_2,
        b: FRAC_PI_4,
        b_prime: 3.0 * FRAC_PI_4,
    };

    /// Pairs in the order `(a,b), (a,b′), (a′,b), (a′,b′)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub settings: Option<ChshSettings>,
    /// `E(a,b), E(a,b′), E(a′,b), E(a′,b′)`.
    pub correlations: [f64; 4],
    /// Sums with the single minus sign on term 1, 2, 3, 4 respectively.
    pub s_values: [f64; 4],
    pub s_max: f64,
    /// `|E(a,b) − E(a,b′)| + |E(a′,b) − E(a′,b′)|`.
    pub two_term: f64,
}

pub fn chsh(e_ab: f64, e_ab_prime: f64, e_a_prime_b: f64, e_a_prime_b_prime: f64) -> ChshReport {
    let e = [e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime];
    debug_assert!(e.iter().all(|x| x.abs() <= 1.0 + 1e-9), "correlation outside [-1, 1]: {e:?}");
    let total: f64 = e.iter().sum();
    let s_values = e.map(|x| total - 2.0 * x);
    let s_max = s_values.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    ChshReport {
        settings: None,
        correlations: e,
        s_values,
        s_max,
        two_term: (e_ab - e_ab_prime).abs() + (e_a_prime_b - e_a_prime_b_prime).abs(),
    }
}

/// Where the four correlations of a CHSH evaluation come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationSource {
    Analytic,
    MonteCarlo(MonteCarlo),
}

/// CHSH report at fixed settings. Monte Carlo terms use seeds derived from
/// `(seed, term index)`.
pub fn chsh_at(
    model: &Model,
    settings: &ChshSettings,
    source: &CorrelationSource,
) -> Result<ChshReport, EstimatorError> {
    let mut e = [0.0; 4];
    for (k, (x, y)) in settings.pairs().into_iter().enumerate() {
        e[k] = match source {
            CorrelationSource::Analytic => {
                model.analytic(PlaneAngle::new(x).distance(PlaneAngle::new(y)))?
            }
            CorrelationSource::MonteCarlo(mc) => {
                let mc = MonteCarlo {
                    seed: derive_seed(mc.seed, k as u64),
                    ..*mc
                };
                estimate_correlation(model, &model.setting_at(x), &model.setting_at(y), &mc)?.mean
            }
        };
    }
    let mut report = chsh(e[0], e[1], e[2], e[3]);
    report.settings = Some(*settings);
    Ok(report)
}

/// Exhaustive scan of coplanar settings on a grid of spacing `step` over
/// `[0, 2π)`, returning the report with the largest `S_max` (first found on
/// ties). Correlations depend only on the angle difference, so each grid
/// difference is evaluated once.
pub fn chsh_scan(
    model: &Model,
    step: f64,
    source: &CorrelationSource,
) -> Result<ChshReport, EstimatorError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(EstimatorError::BadStep(step));
    }
    let m = ((TAU / step).round() as usize).max(1);
    let step = TAU / m as f64;
    let table: Vec<f64> = (0..m)
        .map(|d| {
            let angle = d as f64 * step;
            match source {
                CorrelationSource::Analytic => {
                    model.analytic(PlaneAngle::new(angle).distance(PlaneAngle::ZERO))
                }
                CorrelationSource::MonteCarlo(mc) => {
                    let mc = MonteCarlo {
                        seed: derive_seed(mc.seed, d as u64),
                        ..*mc
                    };
                    estimate_correlation(model, &model.setting_at(0.0), &model.setting_at(angle), &mc)
                        .map(|e| e.mean)
                }
            }
        })
        .collect::<Result<_, _>>()?;
    // E(x, y) looks up the difference y − x on the grid.
    let e = |x: usize, y: usize| table[(y + m - x) % m];
    let mut best: Option<(f64, [usize; 4])> = None;
    for a in 0..m {
        for a2 in 0..m {
            for b in 0..m {
                for b2 in 0..m {
                    let r = chsh(e(a, b), e(a, b2), e(a2, b), e(a2, b2));
                    if best.is_none_or(|(s, _)| r.s_max > s) {
                        best = Some((r.s_max, [a, a2, b, b2]));
                    }
                }
            }
        }
    }
    let (_, [a, a2, b, b2]) = best.expect("grid has at least one point");
    let mut report = chsh(e(a, b), e(a, b2), e(a2, b), e(a2, b2));
    report.settings = Some(ChshSettings {
        a: a as f64 * step,
        a_prime: a2 as f64 * step,
        b: b as f64 * step,
        b_prime: b2 as f64 * step,
    });
    Ok(report)
}
