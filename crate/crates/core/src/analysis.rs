//! Post-hoc comparisons of evaluated rollouts: reward differences with
//! monthly profiles, re-weighting of a fixed policy's reward, and cross-city
//! transfer scoring.

use std::fmt::Write as _;

use crate::env::RewardConfig;
use crate::error::{Error, Result};

pub const MONTHS: usize = 12;

/// Per-step energy and comfort terms of one rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermTrace {
    pub steps: Vec<usize>,
    pub energy: Vec<f64>,
    pub comfort: Vec<f64>,
}

impl TermTrace {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            steps: Vec::with_capacity(n),
            energy: Vec::with_capacity(n),
            comfort: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, step: usize, energy: f64, comfort: f64) {
        self.steps.push(step);
        self.energy.push(energy);
        self.comfort.push(comfort);
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        mean(&self.energy)
    }

    pub fn mean_comfort(&self) -> f64 {
        mean(&self.comfort)
    }

    /// Per-step rewards under `config`.
    pub fn rewards(&self, config: &RewardConfig) -> Vec<f64> {
        self.energy
            .iter()
            .zip(&self.comfort)
            .map(|(e, c)| -config.w * config.lambda_p * e - (1.0 - config.w) * config.lambda_t * c)
            .collect()
    }

    pub fn mean_reward(&self, config: &RewardConfig) -> f64 {
        mean(&self.rewards(config))
    }

    fn check(&self) -> Result<()> {
        if self.energy.len() != self.comfort.len() || self.steps.len() != self.energy.len() {
            return Err(Error::InvalidInput("trace columns differ in length".into()));
        }
        if self.is_empty() {
            return Err(Error::InvalidInput("empty trace".into()));
        }
        Ok(())
    }

    /// Concatenation of several traces, e.g. one per evaluation episode.
    pub fn concat<'a>(traces: impl IntoIterator<Item = &'a TermTrace>) -> TermTrace {
        let mut out = TermTrace::default();
        for t in traces {
            out.steps.extend(&t.steps);
            out.energy.extend(&t.energy);
            out.comfort.extend(&t.comfort);
        }
        out
    }
}

/// Arithmetic mean with compensated summation, taken relative to the first
/// element so that a constant sequence returns that constant exactly.
pub fn mean(v: &[f64]) -> f64 {
    let Some(&x0) = v.first() else {
        return f64::NAN;
    };
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in v {
        let d = x - x0;
        let t = sum + d;
        comp += if sum.abs() >= d.abs() { (sum - t) + d } else { (d - t) + sum };
        sum = t;
    }
    x0 + (sum + comp) / v.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardDiff {
    pub r_diff: f64,
    /// Mean per-step reward difference for each of the twelve months.
    pub monthly: Vec<f64>,
}

/// `mean R(rl) − mean R(baseline)` plus a twelve-bucket monthly profile.
/// Months are `len / 12` consecutive steps; the last absorbs any remainder.
pub fn reward_diff(rl: &TermTrace, baseline: &TermTrace, config: &RewardConfig) -> Result<RewardDiff> {
    rl.check()?;
    baseline.check()?;
    if rl.len() != baseline.len() {
        return Err(Error::DimensionMismatch {
            expected: rl.len(),
            found: baseline.len(),
        });
    }
    if rl.len() < MONTHS {
        return Err(Error::InvalidInput(format!(
            "a monthly profile needs at least {MONTHS} steps, got {}",
            rl.len()
        )));
    }
    let diff: Vec<f64> = rl
        .rewards(config)
        .iter()
        .zip(baseline.rewards(config))
        .map(|(a, b)| a - b)
        .collect();
    let month = diff.len() / MONTHS;
    let monthly = (0..MONTHS)
        .map(|m| {
            let end = if m + 1 == MONTHS { diff.len() } else { (m + 1) * month };
            mean(&diff[m * month..end])
        })
        .collect();
    Ok(RewardDiff {
        r_diff: rl.mean_reward(config) - baseline.mean_reward(config),
        monthly,
    })
}

pub fn monthly_profile_csv(diff: &RewardDiff) -> String {
    let mut out = String::from("month,r_diff\n");
    for (m, v) in diff.monthly.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", m + 1);
    }
    out
}

/// `−w·λP·mean(E) − (1 − w)·λT·mean(C)`
pub fn reward_from_means(mean_energy: f64, mean_comfort: f64, w: f64, config: &RewardConfig) -> f64 {
    -w * config.lambda_p * mean_energy - (1.0 - w) * config.lambda_t * mean_comfort
}

/// Mean reward of a recorded rollout re-scored at weight `w`.
pub fn reward_at_weight(trace: &TermTrace, w: f64, config: &RewardConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidInput(format!("w must lie in [0, 1], got {w}")));
    }
    trace.check()?;
    Ok(reward_from_means(trace.mean_energy(), trace.mean_comfort(), w, config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intersection {
    /// The two reward lines cross at this weight.
    At(f64),
    /// No crossing inside `[0, 1]`.
    None,
    /// The lines coincide.
    Everywhere,
}

/// Weight at which two rollouts score equally, from their mean terms.
pub fn intersection_from_means(
    (energy_rl, comfort_rl): (f64, f64),
    (energy_base, comfort_base): (f64, f64),
    config: &RewardConfig,
) -> Intersection {
    let de = config.lambda_p * (energy_rl - energy_base);
    let dc = config.lambda_t * (comfort_rl - comfort_base);
    // R_rl(w) − R_base(w) = −w·de − (1 − w)·dc
    let denom = dc - de;
    if denom == 0.0 {
        return if dc == 0.0 {
            Intersection::Everywhere
        } else {
            Intersection::None
        };
    }
    let w = dc / denom;
    if (0.0..=1.0).contains(&w) {
        Intersection::At(w)
    } else {
        Intersection::None
    }
}

pub fn weight_intersection(rl: &TermTrace, baseline: &TermTrace, config: &RewardConfig) -> Result<Intersection> {
    rl.check()?;
    baseline.check()?;
    Ok(intersection_from_means(
        (rl.mean_energy(), rl.mean_comfort()),
        (baseline.mean_energy(), baseline.mean_comfort()),
        config,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub w: f64,
    pub reward_rl: f64,
    pub reward_baseline: f64,
}

/// Both rollouts re-scored on `points` evenly spaced weights in `[0, 1]`.
pub fn weight_sweep(
    rl: &TermTrace,
    baseline: &TermTrace,
    config: &RewardConfig,
    points: usize,
) -> Result<Vec<SweepPoint>> {
    if points < 2 {
        return Err(Error::InvalidInput("a sweep needs at least two points".into()));
    }
    (0..points)
        .map(|i| {
            let w = i as f64 / (points - 1) as f64;
            Ok(SweepPoint {
                w,
                reward_rl: reward_at_weight(rl, w, config)?,
                reward_baseline: reward_at_weight(baseline, w, config)?,
            })
        })
        .collect()
}

pub fn weight_sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("w,reward_rl,reward_baseline\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.w, p.reward_rl, p.reward_baseline);
    }
    out
}

/// `rewards[model][city]`: mean eval reward of the policy trained in `model`
/// when run in `city`. An optional baseline row holds each city's default
/// controller.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub models: Vec<String>,
    pub cities: Vec<String>,
    pub rewards: Vec<Vec<f64>>,
    pub baseline: Option<Vec<f64>>,
}

impl TransferMatrix {
    pub fn new(models: Vec<String>, cities: Vec<String>, rewards: Vec<Vec<f64>>, baseline: Option<Vec<f64>>) -> Result<Self> {
        let m = Self {
            models,
            cities,
            rewards,
            baseline,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() != self.cities.len() || self.rewards.len() != self.models.len() {
            return Err(Error::InvalidInput(format!(
                "transfer matrix must be square over the same cities: {} models, {} cities, {} rows",
                self.models.len(),
                self.cities.len(),
                self.rewards.len()
            )));
        }
        let rows = self.rewards.iter().chain(self.baseline.as_ref());
        for row in rows {
            if row.len() != self.cities.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.cities.len(),
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("transfer matrix has non-finite entries".into()));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for c in &self.cities {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        let named = self.models.iter().map(String::as_str).zip(&self.rewards);
        let baseline = self.baseline.as_ref().map(|b| ("baseline", b));
        for (name, row) in named.chain(baseline) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferScore {
    pub model: String,
    pub total: usize,
}

/// Per city the `n` models are ranked by reward, best scoring `n` and worst
/// `1`; equal rewards go to the earlier model first. Totals are returned
/// best first, equal totals in model order.
pub fn transfer_score(matrix: &TransferMatrix) -> Result<Vec<TransferScore>> {
    matrix.validate()?;
    let n = matrix.models.len();
    let mut totals = vec![0usize; n];
    for c in 0..matrix.cities.len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            matrix.rewards[b][c]
                .partial_cmp(&matrix.rewards[a][c])
                .expect("finite entries")
                .then(a.cmp(&b))
        });
        for (pos, &model) in order.iter().enumerate() {
            totals[model] += n - pos;
        }
    }
    let mut scores: Vec<TransferScore> = matrix
        .models
        .iter()
        .zip(totals)
        .map(|(m, total)| TransferScore {
            model: m.clone(),
            total,
        })
        .collect();
    scores.sort_by_key(|s| std::cmp::Reverse(s.total));
    Ok(scores)
}

pub fn transfer_scores_csv(scores: &[TransferScore]) -> String {
    let mut out = String::from("model,score\n");
    for s in scores {
        let _ = writeln!(out, "{},{}", s.model, s.total);
    }
    out
}
