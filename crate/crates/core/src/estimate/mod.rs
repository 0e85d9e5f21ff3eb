//! Empirical checks of the inequalities behind the global bound.
//!
//! Every check reduces to samples of `(LHS, RHS)`. A sample's ratio is
//! `LHS/RHS`; when the right side is negligible (`RHS < 1e−14·scale`) the
//! left side must be below `1e−12·scale`, the sample is counted as vacuous
//! and its ratio is reported as 0.

pub mod energy;
pub mod harmonic;
pub mod identities;
pub mod qg_bound;
pub mod theorem;

use serde::{Deserialize, Serialize};

pub const RHS_FLOOR: f64 = 1e-14;
pub const LHS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub lhs: f64,
    pub rhs: f64,
    /// Magnitude of the inputs, for the degenerate-RHS rule.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Ratio(f64),
    /// `0/0` within the floors.
    Vacuous,
    /// Negligible right side with a non-negligible left side.
    FloorViolation,
    NonFinite,
}

impl Sample {
    pub fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        Self { lhs, rhs, scale }
    }

    pub fn outcome(&self) -> Outcome {
        if !(self.lhs.is_finite() && self.rhs.is_finite() && self.scale.is_finite()) {
            return Outcome::NonFinite;
        }
        let scale = self.scale.abs();
        if self.rhs.abs() < RHS_FLOOR * scale || self.rhs == 0.0 {
            if self.lhs.abs() < LHS_FLOOR * scale || self.lhs == 0.0 {
                Outcome::Vacuous
            } else {
                Outcome::FloorViolation
            }
        } else {
            Outcome::Ratio(self.lhs / self.rhs)
        }
    }

    pub fn ratio(&self) -> f64 {
        match self.outcome() {
            Outcome::Ratio(r) => r,
            Outcome::Vacuous => 0.0,
            Outcome::FloorViolation | Outcome::NonFinite => f64::INFINITY,
        }
    }
}

/// Result of one inequality check over an ensemble or a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub id: String,
    pub ensemble_size: usize,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub ceiling: f64,
    pub vacuous: usize,
    pub floor_violations: usize,
    pub non_finite: usize,
    /// Maximum ratio at the coarse and fine resolution, when both were run.
    pub coarse_max: Option<f64>,
    pub fine_max: Option<f64>,
    pub resolution_stable: Option<bool>,
    pub passed: bool,
}

impl EstimateReport {
    pub fn from_samples(id: impl Into<String>, samples: &[Sample], ceiling: f64) -> Self {
        let mut ratios = Vec::with_capacity(samples.len());
        let (mut vacuous, mut floor, mut nonfinite) = (0, 0, 0);
        for s in samples {
            match s.outcome() {
                Outcome::Vacuous => vacuous += 1,
                Outcome::FloorViolation => floor += 1,
                Outcome::NonFinite => nonfinite += 1,
                Outcome::Ratio(_) => {}
            }
            ratios.push(s.ratio());
        }
        let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        let passed = floor == 0 && nonfinite == 0 && max_ratio <= ceiling;
        Self {
            id: id.into(),
            ensemble_size: samples.len(),
            ratios,
            max_ratio,
            ceiling,
            vacuous,
            floor_violations: floor,
            non_finite: nonfinite,
            coarse_max: None,
            fine_max: None,
            resolution_stable: None,
            passed,
        }
    }

    /// Merges the same check run at two resolutions; stability requires the
    /// two maxima to agree within a factor 2.
    pub fn across_resolutions(coarse: EstimateReport, fine: EstimateReport) -> Self {
        let (c, f) = (coarse.max_ratio, fine.max_ratio);
        let stable = if c == 0.0 && f == 0.0 {
            true
        } else {
            c.max(f) <= 2.0 * c.min(f)
        };
        let mut ratios = coarse.ratios.clone();
        ratios.extend_from_slice(&fine.ratios);
        Self {
            id: coarse.id.clone(),
            ensemble_size: coarse.ensemble_size + fine.ensemble_size,
            ratios,
            max_ratio: c.max(f),
            ceiling: coarse.ceiling,
            vacuous: coarse.vacuous + fine.vacuous,
            floor_violations: coarse.floor_violations + fine.floor_violations,
            non_finite: coarse.non_finite + fine.non_finite,
            coarse_max: Some(c),
            fine_max: Some(f),
            resolution_stable: Some(stable),
            passed: coarse.passed && fine.passed && stable,
        }
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        let res = match (self.coarse_max, self.fine_max) {
            (Some(c), Some(f)) => format!(" coarse={c:.4} fine={f:.4}"),
            _ => String::new(),
        };
        format!(
            "{} [{}] n={} max_ratio={:.4} ceiling={}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.ensemble_size,
            self.max_ratio,
            self.ceiling,
            res
        )
    }
}

/// `q`-quantile (`0 ≤ q ≤ 1`) by linear interpolation of the sorted values.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    Some(v[lo] * (1.0 - w) + v[hi] * w)
}
