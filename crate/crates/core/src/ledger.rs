//! Time series of Besov and Chemin–Lerner norms along a trajectory.

use serde::{Deserialize, Serialize};

use crate::cns_model::{FlowState, Model};
use crate::helmholtz::q_hat;
use crate::integrator::Observer;
use crate::littlewood_paley::CheminLernerAccumulator;
use crate::spectral::{ComplexSpectrum2D, VectorSpectrum};

/// One ledger sample. Column names are the CSV header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub step: usize,
    pub a_b0: f64,
    pub a_b1: f64,
    pub qu_b0: f64,
    pub qu_b2: f64,
    pub v_b0: f64,
    pub v_b1: f64,
    pub v_b2: f64,
    pub w_b0: f64,
    pub w_b1: f64,
    pub w_b2: f64,
    pub a_low_b2: f64,
    pub a_high_b1: f64,
    /// `‖k(a)‖_{Ḃ⁰}`.
    pub k_a_b0: f64,
    pub sup_a: f64,
    pub sup_u: f64,
    pub mean_a: f64,
    /// `‖(a, Qu, v)‖_{L̃^∞_t(Ḃ⁰)}`.
    pub tuple_linf_b0: f64,
    /// `‖a‖_{L̃^∞_t(Ḃ¹)}`.
    pub a_linf_b1: f64,
    /// `‖a^h‖_{L¹_t(Ḃ¹)}`.
    pub a_high_l1_b1: f64,
    /// `‖(a^ℓ, Qu, v)‖_{L¹_t(Ḃ²)}`.
    pub low_tuple_l1_b2: f64,
    pub w_linf_b0: f64,
    pub w_l1_b2: f64,
    /// `‖w‖_{L̃²_t(Ḃ¹)}`.
    pub w_tilde_l2_b1: f64,
    /// `∫‖w‖²_{Ḃ¹} dt`.
    pub w_b1_sq_int: f64,
    /// `∫‖v‖_{Ḃ¹}‖w‖_{Ḃ¹} dt`.
    pub vw_b1_int: f64,
    /// Left side of the bound on `(a, Qu, v)`; also the bootstrap quantity.
    pub lhs_main: f64,
    /// Left side of the bound on `w`, with `‖w‖_{L²_t(Ḃ¹)}` included.
    pub lhs_w: f64,
}

impl LedgerRow {
    /// Gap in `‖v‖_{Ḃ¹}‖w‖_{Ḃ¹} ≤ ‖v‖_{Ḃ²}/8 + 2‖v‖_{Ḃ⁰}‖w‖²_{Ḃ¹}` (the
    /// interpolation `‖v‖²_{Ḃ¹} ≤ ‖v‖_{Ḃ⁰}‖v‖_{Ḃ²}` followed by Young's
    /// inequality); nonnegative when it holds.
    pub fn interpolation_slack(&self) -> f64 {
        self.v_b2 / 8.0 + 2.0 * self.v_b0 * self.w_b1 * self.w_b1 - self.v_b1 * self.w_b1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormLedger {
    pub rows: Vec<LedgerRow>,
}

impl NormLedger {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&LedgerRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }
}

/// Instantaneous block norms of every tracked field.
struct Snapshot {
    a: Vec<f64>,
    qu: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    a_low: Vec<f64>,
    a_high: Vec<f64>,
}

/// Accumulates the ledger every step and emits rows at a stride.
#[derive(Debug, Clone)]
pub struct LedgerTracker {
    stride: usize,
    low_table: Vec<f64>,
    high_table: Vec<f64>,
    a: CheminLernerAccumulator,
    qu: CheminLernerAccumulator,
    v: CheminLernerAccumulator,
    w: CheminLernerAccumulator,
    a_low: CheminLernerAccumulator,
    a_high: CheminLernerAccumulator,
    w_b1_sq_int: f64,
    vw_b1_int: f64,
    last_step: Option<usize>,
    ledger: NormLedger,
}

fn weighted(s: &ComplexSpectrum2D, table: &[f64]) -> ComplexSpectrum2D {
    ComplexSpectrum2D {
        grid: s.grid,
        coeffs: s.coeffs.iter().zip(table).map(|(c, &m)| c * m).collect(),
    }
}

impl LedgerTracker {
    pub fn new(model: &Model, stride: usize) -> Self {
        let p = &model.partition;
        let acc = CheminLernerAccumulator::new(p);
        Self {
            stride: stride.max(1),
            low_table: p.multiplier_sum(p.low_blocks(model.n0)),
            high_table: p.multiplier_sum(p.high_blocks(model.n0)),
            a: acc.clone(),
            qu: acc.clone(),
            v: acc.clone(),
            w: acc.clone(),
            a_low: acc.clone(),
            a_high: acc,
            w_b1_sq_int: 0.0,
            vw_b1_int: 0.0,
            last_step: None,
            ledger: NormLedger::default(),
        }
    }

    fn snapshot(&self, model: &Model, state: &FlowState) -> Snapshot {
        let sp = &model.spectral;
        let p = &model.partition;
        let a_hat = sp.hat(&state.a);
        let u_hat = sp.hat_vec(&state.u);
        let q = q_hat(sp, &u_hat);
        let pu = VectorSpectrum {
            x: &u_hat.x - &q.x,
            y: &u_hat.y - &q.y,
        };
        Snapshot {
            a: p.block_norms(&a_hat),
            qu: p.block_norms_vec(&q),
            v: p.block_norms(&pu.x),
            w: p.block_norms(&pu.y),
            a_low: p.block_norms(&weighted(&a_hat, &self.low_table)),
            a_high: p.block_norms(&weighted(&a_hat, &self.high_table)),
        }
    }

    fn include(&mut self, s: &Snapshot) {
        self.a.include_endpoint(&s.a);
        self.qu.include_endpoint(&s.qu);
        self.v.include_endpoint(&s.v);
        self.w.include_endpoint(&s.w);
        self.a_low.include_endpoint(&s.a_low);
        self.a_high.include_endpoint(&s.a_high);
    }

    fn row(&self, model: &Model, state: &FlowState, step: usize, s: &Snapshot) -> LedgerRow {
        let p = &model.partition;
        let b = |x: &[f64], r: f64| p.besov_from_blocks(x, r);
        let k_a_b0 = model
            .k_of(&state.a)
            .ok()
            .and_then(|k| p.besov_norm(&model.spectral, &k, 0.0).ok())
            .unwrap_or(f64::NAN);
        let tuple_linf_b0 = self.a.linf(0.0) + self.qu.linf(0.0) + self.v.linf(0.0);
        let a_linf_b1 = self.a.linf(1.0);
        let a_high_l1_b1 = self.a_high.l1(1.0);
        let low_tuple_l1_b2 = self.a_low.l1(2.0) + self.qu.l1(2.0) + self.v.l1(2.0);
        let w_linf_b0 = self.w.linf(0.0);
        let w_l1_b2 = self.w.l1(2.0);
        LedgerRow {
            t: state.t,
            step,
            a_b0: b(&s.a, 0.0),
            a_b1: b(&s.a, 1.0),
            qu_b0: b(&s.qu, 0.0),
            qu_b2: b(&s.qu, 2.0),
            v_b0: b(&s.v, 0.0),
            v_b1: b(&s.v, 1.0),
            v_b2: b(&s.v, 2.0),
            w_b0: b(&s.w, 0.0),
            w_b1: b(&s.w, 1.0),
            w_b2: b(&s.w, 2.0),
            a_low_b2: b(&s.a_low, 2.0),
            a_high_b1: b(&s.a_high, 1.0),
            k_a_b0,
            sup_a: state.a.sup_abs(),
            sup_u: state.u.sup_abs(),
            mean_a: state.a.mean(),
            tuple_linf_b0,
            a_linf_b1,
            a_high_l1_b1,
            low_tuple_l1_b2,
            w_linf_b0,
            w_l1_b2,
            w_tilde_l2_b1: self.w.l2(1.0),
            w_b1_sq_int: self.w_b1_sq_int,
            vw_b1_int: self.vw_b1_int,
            lhs_main: tuple_linf_b0 + a_linf_b1 + a_high_l1_b1 + low_tuple_l1_b2,
            lhs_w: w_linf_b0 + w_l1_b2 + self.w_b1_sq_int.sqrt(),
        }
    }

    pub fn into_ledger(self) -> NormLedger {
        self.ledger
    }

    pub fn ledger(&self) -> &NormLedger {
        &self.ledger
    }
}

impl Observer for LedgerTracker {
    fn observe(&mut self, model: &Model, step: usize, state: &FlowState, dt: f64) {
        let s = self.snapshot(model, state);
        self.include(&s);
        if step % self.stride == 0 {
            let row = self.row(model, state, step, &s);
            self.ledger.rows.push(row);
        }
        let p = &model.partition;
        let v1 = p.besov_from_blocks(&s.v, 1.0);
        let w1 = p.besov_from_blocks(&s.w, 1.0);
        self.w_b1_sq_int += w1 * w1 * dt;
        self.vw_b1_int += v1 * w1 * dt;
        for (acc, blocks) in [
            (&mut self.a, &s.a),
            (&mut self.qu, &s.qu),
            (&mut self.v, &s.v),
            (&mut self.w, &s.w),
            (&mut self.a_low, &s.a_low),
            (&mut self.a_high, &s.a_high),
        ] {
            // dt > 0 is guaranteed by the integrator
            let _ = acc.update(blocks, dt);
        }
        self.last_step = Some(step);
    }

    fn finish(&mut self, model: &Model, state: &FlowState) {
        let s = self.snapshot(model, state);
        self.include(&s);
        let step = self.last_step.map_or(0, |k| k + 1);
        if self.ledger.rows.last().map_or(true, |r| r.t < state.t) || self.ledger.rows.is_empty() {
            let row = self.row(model, state, step, &s);
            self.ledger.rows.push(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{run, IntegratorConfig};
    use crate::spectral::{GridSpec, RealField2D, VectorField2D};

    fn model() -> Model {
        Model::with_defaults(GridSpec::new(32, 2.0).unwrap())
    }

    #[test]
    fn zero_state_ledger_is_zero() {
        let m = model();
        let cfg = IntegratorConfig {
            t_end: 0.1,
            ledger_stride: 1,
            ..Default::default()
        };
        let r = run(&m, &FlowState::zeros(m.grid()), &cfg, &mut []).unwrap();
        assert!(r.ledger.rows.len() >= 2);
        for row in &r.ledger.rows {
            assert_eq!(row.lhs_main + row.lhs_w + row.a_b0 + row.k_a_b0, 0.0);
        }
    }

    #[test]
    fn first_row_matches_direct_norms_and_integrals_grow() {
        let m = model();
        let g = m.grid();
        let s = FlowState {
            a: RealField2D::from_fn(g, |x, y| 0.01 * (x / 2.0 + y).cos()),
            u: VectorField2D::new(
                RealField2D::from_fn(g, |x, y| 0.1 * (y / 2.0).sin() + 0.01 * (x / 2.0).cos()),
                RealField2D::from_fn(g, |x, _| 0.2 * (x).sin()),
            ),
            t: 0.0,
        };
        let cfg = IntegratorConfig {
            t_end: 0.3,
            ledger_stride: 2,
            ..Default::default()
        };
        let r = run(&m, &s, &cfg, &mut []).unwrap();
        let row = &r.ledger.rows[0];
        let sp = &m.spectral;
        let p = &m.partition;
        let split = crate::helmholtz::split(sp, &s.u).unwrap();
        let direct_v = p.besov_norm(sp, split.v(), 0.0).unwrap();
        let direct_w = p.besov_norm(sp, split.w(), 1.0).unwrap();
        assert!((row.v_b0 - direct_v).abs() <= 1e-12 * direct_v.max(1e-300));
        assert!((row.w_b1 - direct_w).abs() <= 1e-12 * direct_w);
        assert_eq!(row.lhs_main, row.tuple_linf_b0 + row.a_linf_b1);
        for w in r.ledger.rows.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].low_tuple_l1_b2 >= w[0].low_tuple_l1_b2);
            assert!(w[1].w_b1_sq_int >= w[0].w_b1_sq_int);
            assert!(w[1].tuple_linf_b0 >= w[0].tuple_linf_b0);
        }
        assert_eq!(r.ledger.last().unwrap().t, 0.3);
        for row in &r.ledger.rows {
            assert!(row.interpolation_slack() >= 0.0);
        }
    }
}
