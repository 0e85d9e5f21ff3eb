//! Per-block energy of the `(a, Qu)` subsystem and its damping.
//!
//! `L_j² = ‖Δ̇_j a‖² + ‖Δ̇_j Qu‖² + 2⟨Δ̇_j Qu, ∇Δ̇_j a⟩ + 2‖∇Δ̇_j a‖²`, every
//! term by Parseval. Young's inequality on the cross term gives
//! `½‖Δ̇_j Qu‖² + ‖∇Δ̇_j a‖²` as a lower bound for the last three terms, so
//! the form is positive and `L_j` is equivalent to `‖(Δ̇_j Qu, Δ̇_j a, 2∇Δ̇_j a)‖`
//! with constants `1/√8` and `√2`.
//!
//! The damping check measures, along a trajectory, the forward difference
//! `δL_j` of `L_j` and the source size `S_j`
//!
//! `S_j = ‖∇u‖_∞L_j + ‖(Δ̇_j(a div u), Δ̇_j QG)‖ + ‖F_j‖ + ‖[Δ̇_j, u·∇]a‖ + ‖[Δ̇_j, u·∇]Qu‖`
//!
//! and fits the largest `c` with `δL_j ≤ −c·min(4^j, 1/4)·L_j + C_s·S_j` on
//! all but 1% of the `(j, t)` samples.

use serde::{Deserialize, Serialize};

use super::quantile;
use crate::cns_model::{FjInputs, FlowState, Model};
use crate::error::{Error, Result};
use crate::helmholtz::q_hat;
use crate::integrator::Observer;
use crate::spectral::{ComplexSpectrum2D, VectorSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub j: i32,
    /// `‖Δ̇_j a‖²`.
    pub a_sq: f64,
    /// `‖Δ̇_j Qu‖²`.
    pub qu_sq: f64,
    /// `2⟨Δ̇_j Qu, ∇Δ̇_j a⟩`.
    pub cross: f64,
    /// `2‖∇Δ̇_j a‖²`.
    pub grad_a_term: f64,
    pub l_sq: f64,
    pub l: f64,
    /// `‖∇Δ̇_j Qu‖² + ‖∇Δ̇_j a‖²`, the exact dissipation of the linear system
    /// with `μ = 1`, `λ = 0`.
    pub dissipation: f64,
}

impl EnergyEntry {
    /// `L_j / ‖(Δ̇_j Qu, Δ̇_j a, 2∇Δ̇_j a)‖`; 0 for an empty block.
    pub fn equivalence_ratio(&self) -> f64 {
        let den = (self.qu_sq + self.a_sq + 2.0 * self.grad_a_term).sqrt();
        if den > 0.0 {
            self.l / den
        } else {
            0.0
        }
    }
}

fn entry(model: &Model, a_hat: &ComplexSpectrum2D, q: &VectorSpectrum, j: i32) -> Result<EnergyEntry> {
    let sp = &model.spectral;
    let (mut a_sq, mut qu_sq, mut cross, mut grad_a, mut grad_q) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(idx, phi) in model.partition.entries(j)? {
        let w = phi * phi;
        let a = a_hat.coeffs[idx];
        let (qx, qy) = (q.x.coeffs[idx], q.y.coeffs[idx]);
        let (d1, d2) = sp.derivative_wavevector(idx);
        let d_sq = d1 * d1 + d2 * d2;
        a_sq += w * a.norm_sqr();
        let q_sq = qx.norm_sqr() + qy.norm_sqr();
        qu_sq += w * q_sq;
        // ⟨q, i d a⟩ = Re(conj(q)·i d a) summed over components
        let ia = a * rustfft::num_complex::Complex64::new(0.0, 1.0);
        cross += w * (qx.conj() * ia * d1 + qy.conj() * ia * d2).re;
        grad_a += w * d_sq * a.norm_sqr();
        grad_q += w * d_sq * q_sq;
    }
    let area = model.grid().area();
    let (a_sq, qu_sq, cross, grad_a_term) = (area * a_sq, area * qu_sq, 2.0 * area * cross, 2.0 * area * grad_a);
    let l_sq = a_sq + qu_sq + cross + grad_a_term;
    Ok(EnergyEntry {
        j,
        a_sq,
        qu_sq,
        cross,
        grad_a_term,
        l_sq,
        l: l_sq.max(0.0).sqrt(),
        dissipation: area * (grad_q + grad_a),
    })
}

/// The energy entry of block `j`.
pub fn energy_lj(model: &Model, state: &FlowState, j: i32) -> Result<EnergyEntry> {
    let sp = &model.spectral;
    sp.grid().check_same(&state.grid())?;
    let a_hat = sp.forward(&state.a)?;
    let q = q_hat(sp, &sp.hat_vec(&state.u));
    entry(model, &a_hat, &q, j)
}

/// Energy entries of every block.
pub fn energy_functional(model: &Model, state: &FlowState) -> Result<Vec<EnergyEntry>> {
    let sp = &model.spectral;
    sp.grid().check_same(&state.grid())?;
    let a_hat = sp.forward(&state.a)?;
    let q = q_hat(sp, &sp.hat_vec(&state.u));
    model.partition.j_range().map(|j| entry(model, &a_hat, &q, j)).collect()
}

/// `min(4^j, 1/4)`.
pub fn damping_weight(j: i32) -> f64 {
    4f64.powi(j).min(0.25)
}

/// Source terms of block `j` at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTerms {
    pub grad_u_sup_times_l: f64,
    pub a_div_u_and_qg: f64,
    pub f_j: f64,
    pub commutator_a: f64,
    pub commutator_qu: f64,
}

impl SourceTerms {
    pub fn total(&self) -> f64 {
        self.grad_u_sup_times_l + self.a_div_u_and_qg + self.f_j + self.commutator_a + self.commutator_qu
    }
}

/// `L_j` and the source terms of every block.
pub fn source_terms(model: &Model, state: &FlowState) -> Result<(Vec<EnergyEntry>, Vec<SourceTerms>)> {
    let sp = &model.spectral;
    let part = &model.partition;
    let a_hat = sp.forward(&state.a)?;
    let u_hat = sp.hat_vec(&state.u);
    let q = q_hat(sp, &u_hat);
    let pre = FjInputs::new(model, state, &a_hat, &u_hat);
    let grad_sup = {
        let [a, b, c, d] = &pre.grad_u;
        let mut m: f64 = 0.0;
        for i in 0..a.values.len() {
            let f = (a.values[i].powi(2) + b.values[i].powi(2) + c.values[i].powi(2) + d.values[i].powi(2)).sqrt();
            m = m.max(f);
        }
        m
    };
    let qg_blocks = part.block_norms_vec(&model.qg_hat(state)?);
    let adiv_blocks = part.block_norms(&pre.a_div_u);
    let adv_qx = sp.advect_hat(&state.u, &q.x);
    let adv_qy = sp.advect_hat(&state.u, &q.y);
    let mut energies = Vec::with_capacity(part.len());
    let mut sources = Vec::with_capacity(part.len());
    for (i, j) in part.j_range().enumerate() {
        let e = entry(model, &a_hat, &q, j)?;
        let fj = model.f_j_hat(state, &a_hat, &pre, j)?;
        let f_norm = (fj.x.parseval_l2_norm().powi(2) + fj.y.parseval_l2_norm().powi(2)).sqrt();
        let ca = model
            .dyadic_commutator_hat(&state.u, &a_hat, &pre.adv_a, j)?
            .parseval_l2_norm();
        let cqx = model.dyadic_commutator_hat(&state.u, &q.x, &adv_qx, j)?.parseval_l2_norm();
        let cqy = model.dyadic_commutator_hat(&state.u, &q.y, &adv_qy, j)?.parseval_l2_norm();
        sources.push(SourceTerms {
            grad_u_sup_times_l: grad_sup * e.l,
            a_div_u_and_qg: adiv_blocks[i].hypot(qg_blocks[i]),
            f_j: f_norm,
            commutator_a: ca,
            commutator_qu: cqx.hypot(cqy),
        });
        energies.push(e);
    }
    Ok((energies, sources))
}

/// One `(j, t)` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingSample {
    pub t: f64,
    pub j: i32,
    pub l: f64,
    /// `(L_j(t+δ) − L_j(t))/δ`.
    pub rate: f64,
    pub source: f64,
    /// Exact linear dissipation over `L_j`, for the linear-regime oracle.
    pub linear_rate: f64,
}

impl DampingSample {
    /// Largest `c` this sample admits with source constant `cs`.
    pub fn admissible_c(&self, cs: f64) -> f64 {
        (cs * self.source - self.rate) / (damping_weight(self.j) * self.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDamping {
    pub j: i32,
    pub samples: usize,
    pub violations: usize,
    /// Median of `−δL_j/L_j`.
    pub median_decay_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingReport {
    pub source_constant: f64,
    pub coverage_target: f64,
    pub samples: usize,
    pub vacuous: usize,
    /// Largest `c` satisfied on the target fraction of samples.
    pub c_fit: f64,
    /// Largest `c` satisfied on every sample.
    pub c_all: f64,
    pub coverage: f64,
    /// Smallest source constant for which some `c > 0` reaches the target.
    pub required_source_constant: f64,
    /// First `j` where the observed decay rate over `4^j` drops below half
    /// of its value at the lowest block.
    pub crossover_j: Option<i32>,
    pub blocks: Vec<BlockDamping>,
    pub passed: bool,
}

/// Collects damping samples along a run.
#[derive(Debug, Clone)]
pub struct DampingObserver {
    stride: usize,
    relative_floor: f64,
    pending: Option<(f64, Vec<EnergyEntry>, Vec<SourceTerms>)>,
    samples: Vec<DampingSample>,
    vacuous: usize,
    error: Option<String>,
}

impl DampingObserver {
    pub fn new(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Precondition("damping stride must be positive".into()));
        }
        Ok(Self {
            stride,
            relative_floor: 1e-10,
            pending: None,
            samples: Vec::new(),
            vacuous: 0,
            error: None,
        })
    }

    pub fn samples(&self) -> &[DampingSample] {
        &self.samples
    }

    fn close(&mut self, model: &Model, state: &FlowState) {
        let Some((t0, e0, s0)) = self.pending.take() else {
            return;
        };
        let delta = state.t - t0;
        if !(delta > 0.0) {
            return;
        }
        let e1 = match energy_functional(model, state) {
            Ok(e) => e,
            Err(e) => {
                self.error = Some(e.to_string());
                return;
            }
        };
        let top = e0.iter().map(|e| e.l).fold(0.0, f64::max);
        for ((a, b), s) in e0.iter().zip(&e1).zip(&s0) {
            if a.l <= self.relative_floor * top || a.l == 0.0 {
                self.vacuous += 1;
                continue;
            }
            self.samples.push(DampingSample {
                t: t0,
                j: a.j,
                l: a.l,
                rate: (b.l - a.l) / delta,
                source: s.total(),
                linear_rate: a.dissipation / a.l,
            });
        }
    }

    /// Fits `c` at the given source constant and coverage fraction.
    pub fn report(&self, source_constant: f64, coverage_target: f64) -> Result<DampingReport> {
        if let Some(e) = &self.error {
            return Err(Error::Precondition(format!("damping observer failed: {e}")));
        }
        if self.samples.is_empty() {
            if self.vacuous > 0 {
                return Ok(DampingReport {
                    source_constant,
                    coverage_target,
                    samples: 0,
                    vacuous: self.vacuous,
                    c_fit: 0.0,
                    c_all: 0.0,
                    coverage: 1.0,
                    required_source_constant: 0.0,
                    crossover_j: None,
                    blocks: Vec::new(),
                    passed: true,
                });
            }
            return Err(Error::Precondition(
                "damping check needs at least two sampled states".into(),
            ));
        }
        damping_report(&self.samples, self.vacuous, source_constant, coverage_target)
    }
}

/// `k`-th smallest value (0-based); 0 for an empty slice.
fn order_statistic(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.get(k).copied().unwrap_or(0.0)
}

/// Fits `c` for a set of samples; see [`DampingObserver::report`].
pub fn damping_report(
    samples: &[DampingSample],
    vacuous: usize,
    source_constant: f64,
    coverage_target: f64,
) -> Result<DampingReport> {
    if !(0.0..=1.0).contains(&coverage_target) {
        return Err(Error::Config(format!("coverage {coverage_target} outside [0, 1]")));
    }
    let cs: Vec<f64> = samples.iter().map(|s| s.admissible_c(source_constant)).collect();
    let n = samples.len();
    let allowed = ((1.0 - coverage_target) * n as f64 + 1e-9).floor() as usize;
    let c_fit = order_statistic(&cs, allowed.min(n.saturating_sub(1)));
    let c_all = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = cs.iter().filter(|&&c| c >= c_fit).count();
    let thresholds: Vec<f64> = samples
        .iter()
        .map(|s| {
            if s.source > 0.0 {
                (s.rate / s.source).max(0.0)
            } else if s.rate < 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let required = order_statistic(&thresholds, n.saturating_sub(1 + allowed));

    let mut js: Vec<i32> = samples.iter().map(|s| s.j).collect();
    js.sort_unstable();
    js.dedup();
    let mut blocks = Vec::new();
    for &j in &js {
        let (mut n, mut bad) = (0, 0);
        let mut rates = Vec::new();
        for (s, c) in samples.iter().zip(&cs) {
            if s.j == j {
                n += 1;
                if *c < c_fit {
                    bad += 1;
                }
                rates.push(-s.rate / s.l);
            }
        }
        blocks.push(BlockDamping {
            j,
            samples: n,
            violations: bad,
            median_decay_rate: quantile(&rates, 0.5).unwrap_or(0.0),
        });
    }
    let crossover_j = blocks.first().and_then(|b0| {
        let reference = b0.median_decay_rate / 4f64.powi(b0.j);
        if !(reference > 0.0) {
            return None;
        }
        blocks
            .iter()
            .find(|b| b.median_decay_rate / 4f64.powi(b.j) < 0.5 * reference)
            .map(|b| b.j)
    });
    Ok(DampingReport {
        source_constant,
        coverage_target,
        samples: samples.len(),
        vacuous,
        c_fit,
        c_all,
        coverage: ok as f64 / samples.len() as f64,
        required_source_constant: required,
        crossover_j,
        blocks,
        passed: c_fit > 0.0 && c_fit.is_finite(),
    })
}

impl Observer for DampingObserver {
    fn observe(&mut self, model: &Model, step: usize, state: &FlowState, _dt: f64) {
        if step % self.stride != 0 {
            return;
        }
        self.close(model, state);
        match source_terms(model, state) {
            Ok((e, s)) => self.pending = Some((state.t, e, s)),
            Err(e) => self.error = Some(e.to_string()),
        }
    }

    fn finish(&mut self, model: &Model, state: &FlowState) {
        self.close(model, state);
    }
}
