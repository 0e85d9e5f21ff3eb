//! Verdicts on the global bounds along a recorded trajectory.
//!
//! With `I₀ = ‖(a₀, Qu₀, v₀)‖_{Ḃ⁰} + ‖a₀‖_{Ḃ¹}` and `I_w = I₀ + ‖w₀‖_{Ḃ⁰}`:
//!
//! - the smallness condition is `‖a₀‖_{Ḃ⁰∩Ḃ¹} + ‖(Qu₀, v₀)‖_{Ḃ⁰} ≤ c₀·exp(−C₀·I_w²)`;
//! - the main bound `B(t) ≤ C·I₀·exp(C·I_w²)` is fitted for the smallest `C`,
//!   and the ratio `max B/(I₀·exp(I_w²))` without a constant in the exponent
//!   is reported alongside;
//! - the `w` bound `W(t) ≤ C·I_w` is fitted the same way;
//! - `B` is also the bootstrap quantity, compared against the ceiling `c₁`.
//!
//! `B` and `W` are the ledger columns `lhs_main` and `lhs_w`.

use serde::{Deserialize, Serialize};

use super::{LHS_FLOOR, RHS_FLOOR};
use crate::error::{Error, Result};
use crate::ledger::NormLedger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub c0: f64,
    pub big_c0: f64,
    /// Bootstrap ceiling; unset means "not checked".
    pub c1: Option<f64>,
    /// Largest acceptable fitted constant.
    pub ceiling: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            c0: 0.05,
            big_c0: 1.0,
            c1: None,
            ceiling: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub i0: f64,
    pub iw: f64,
    pub smallness_lhs: f64,
    pub smallness_rhs: f64,
    pub smallness_holds: bool,
    pub main_max: f64,
    /// Smallest `C` with `B ≤ C·I₀·exp(C·I_w²)`.
    pub main_constant: f64,
    /// `max B/(I₀·exp(I_w²))`.
    pub main_ratio_as_written: f64,
    pub w_max: f64,
    /// Smallest `C` with `W ≤ C·I_w`.
    pub w_constant: f64,
    pub bootstrap_max: f64,
    pub c1: Option<f64>,
    pub bootstrap_holds: Option<bool>,
    /// Ledger rows where `‖v‖_{Ḃ¹}‖w‖_{Ḃ¹} ≤ ‖v‖_{Ḃ²}/8 + 2‖v‖_{Ḃ⁰}‖w‖²_{Ḃ¹}` fails.
    pub interpolation_violations: usize,
    pub rows: usize,
    pub ceiling: f64,
    pub passed: bool,
}

/// Smallest `C ≥ 0` with `C·exp(C·x) ≥ r`.
fn fit_exponential_constant(r: f64, x: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let g = |c: f64| c * (c * x).exp();
    let mut hi = 1.0;
    while g(hi) < r {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `num/den` with the degenerate-denominator rule of the estimate reports.
fn ratio(num: f64, den: f64, scale: f64) -> f64 {
    if den < RHS_FLOOR * scale || den == 0.0 {
        if num < LHS_FLOOR * scale || num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn evaluate(ledger: &NormLedger, cfg: &TheoremConfig) -> Result<TheoremReport> {
    let first = ledger
        .first()
        .ok_or_else(|| Error::Precondition("theorem tracker needs a nonempty ledger".into()))?;
    if ledger.rows.iter().any(|r| !r.lhs_main.is_finite() || !r.lhs_w.is_finite()) {
        return Err(Error::Precondition("ledger contains non-finite entries".into()));
    }
    let i0 = first.a_b0 + first.qu_b0 + first.v_b0 + first.a_b1;
    let iw = i0 + first.w_b0;
    let smallness_lhs = first.a_b0 + first.a_b1 + first.qu_b0 + first.v_b0;
    let smallness_rhs = cfg.c0 * (-cfg.big_c0 * iw * iw).exp();
    let main_max = ledger.rows.iter().map(|r| r.lhs_main).fold(0.0, f64::max);
    let w_max = ledger.rows.iter().map(|r| r.lhs_w).fold(0.0, f64::max);
    let scale = 1.0;
    let main_rel = ratio(main_max, i0, scale);
    let main_constant = if main_rel.is_finite() {
        fit_exponential_constant(main_rel, iw * iw)
    } else {
        f64::INFINITY
    };
    let main_ratio_as_written = ratio(main_max, i0 * (iw * iw).exp(), scale);
    let w_constant = ratio(w_max, iw, scale);
    let bootstrap_holds = cfg.c1.map(|c1| main_max < c1);
    let interpolation_violations = ledger
        .rows
        .iter()
        .filter(|r| r.interpolation_slack() < -1e-12 * (r.v_b1 * r.w_b1).max(f64::MIN_POSITIVE))
        .count();
    let passed = main_constant <= cfg.ceiling
        && w_constant <= cfg.ceiling
        && bootstrap_holds.unwrap_or(true)
        && interpolation_violations == 0;
    Ok(TheoremReport {
        i0,
        iw,
        smallness_lhs,
        smallness_rhs,
        smallness_holds: smallness_lhs <= smallness_rhs,
        main_max,
        main_constant,
        main_ratio_as_written,
        w_max,
        w_constant,
        bootstrap_max: main_max,
        c1: cfg.c1,
        bootstrap_holds,
        interpolation_violations,
        rows: ledger.rows.len(),
        ceiling: cfg.ceiling,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cns_model::{FlowState, Model};
    use crate::integrator::{run, IntegratorConfig};
    use crate::ledger::LedgerRow;
    use crate::spectral::{GridSpec, RealField2D, VectorField2D};

    #[test]
    fn empty_ledger_is_rejected() {
        assert!(evaluate(&NormLedger::default(), &TheoremConfig::default()).is_err());
    }

    #[test]
    fn exponential_fit_inverts() {
        for (r, x) in [(1.0, 0.0), (3.0, 0.5), (50.0, 2.0), (1e-3, 1.0)] {
            let c = fit_exponential_constant(r, x);
            assert!((c * (c * x).exp() - r).abs() <= 1e-12 * r, "r {r} x {x}");
        }
        assert_eq!(fit_exponential_constant(0.0, 1.0), 0.0);
    }

    #[test]
    fn zero_data_passes_everything() {
        let m = Model::with_defaults(GridSpec::new(16, 1.0).unwrap());
        let cfg = IntegratorConfig {
            t_end: 0.1,
            ..IntegratorConfig::default()
        };
        let rec = run(&m, &FlowState::zeros(m.grid()), &cfg, &mut []).unwrap();
        let r = evaluate(
            &rec.ledger,
            &TheoremConfig {
                c1: Some(1.0),
                ..TheoremConfig::default()
            },
        )
        .unwrap();
        assert!(r.passed && r.smallness_holds, "{r:?}");
        assert_eq!(r.main_constant, 0.0);
        assert_eq!(r.w_constant, 0.0);
    }

    #[test]
    fn linear_run_constant_in_expected_range() {
        let m = Model::with_defaults(GridSpec::new(32, 2.0).unwrap());
        let g = m.grid();
        let a = RealField2D::from_fn(g, |x, y| 1e-6 * ((x / 2.0).sin() + (y / 2.0 + x).cos()));
        let ux = RealField2D::from_fn(g, |x, _| 1e-6 * (x / 2.0).cos());
        let uy = RealField2D::from_fn(g, |x, y| 1e-6 * (x + y).sin());
        let s = FlowState {
            a,
            u: VectorField2D::new(ux, uy),
            t: 0.0,
        };
        let cfg = IntegratorConfig {
            t_end: 2.0,
            ..IntegratorConfig::default()
        };
        let rec = run(&m, &s, &cfg, &mut []).unwrap();
        let r = evaluate(&rec.ledger, &TheoremConfig::default()).unwrap();
        assert!((1.0..=10.0).contains(&r.main_constant), "{r:?}");
        assert!(r.smallness_holds && r.passed);
        // the bound starts at the initial functional and grows only by the
        // time integrals
        let b0 = rec.ledger.rows[0].lhs_main;
        assert!((b0 - r.i0).abs() <= 1e-12 * r.i0);
    }

    #[test]
    fn bootstrap_ceiling_and_interpolation() {
        let row = LedgerRow {
            a_b0: 1.0,
            lhs_main: 2.0,
            lhs_w: 1.0,
            v_b1: 10.0,
            w_b1: 1.0,
            ..LedgerRow::default()
        };
        let ledger = NormLedger { rows: vec![row] };
        let r = evaluate(
            &ledger,
            &TheoremConfig {
                c1: Some(1.5),
                ..TheoremConfig::default()
            },
        )
        .unwrap();
        assert_eq!(r.bootstrap_holds, Some(false));
        assert_eq!(r.interpolation_violations, 1);
        assert!(!r.passed);
    }
}
