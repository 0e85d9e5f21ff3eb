//! Exact algebraic identities of the projectors and of the model terms,
//! checked on random fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::harmonic::random_band_spectrum;
use crate::cns_model::{FlowState, Model, PressureLaw};
use crate::error::Result;
use crate::helmholtz::{incompressible_transport_from_components, project_q, split};
use crate::spectral::{GridSpec, RealField2D, Spectral, VectorField2D};

pub const PROJECTOR_TOLERANCE: f64 = 1e-11;
pub const GAMMA2_TOLERANCE: f64 = 1e-14;
pub const MODEL_TOLERANCE: f64 = 1e-11;

/// Worst relative residuals over the sampled fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSuite {
    pub fields: usize,
    pub n: usize,
    /// `‖Q∇f − ∇f‖_∞ / ‖∇f‖_∞`.
    pub gradient_fixed: f64,
    /// `‖div Pu‖_∞ / (k_max‖u‖_∞)`.
    pub divergence_free: f64,
    /// `‖Q²u − Qu‖_∞ / ‖u‖_∞`.
    pub idempotent: f64,
    /// `|⟨Pu, Qu⟩| / ‖u‖²`.
    pub orthogonal: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn white_noise(g: GridSpec, rng: &mut ChaCha8Rng) -> RealField2D {
    RealField2D::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("length matches grid")
}

pub fn projector_suite(n: usize, half_width: f64, fields: usize, seed: u64) -> Result<ProjectorSuite> {
    let g = GridSpec::new(n, half_width)?;
    let sp = Spectral::new(g);
    let kmax = (n / 2) as f64 / half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut grad, mut div, mut idem, mut orth) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..fields {
        let f = white_noise(g, &mut rng);
        let gf = sp.gradient(&f)?;
        grad = grad.max(project_q(&sp, &gf)?.max_abs_diff(&gf) / gf.sup_abs());

        let u = VectorField2D::new(white_noise(g, &mut rng), white_noise(g, &mut rng));
        let scale = u.sup_abs();
        let parts = split(&sp, &u)?;
        div = div.max(sp.divergence(&parts.pu)?.sup_abs() / (kmax * scale));
        idem = idem.max(project_q(&sp, &parts.qu)?.max_abs_diff(&parts.qu) / scale);
        orth = orth.max(parts.pu.inner(&parts.qu).abs() / u.l2_norm_sq());
    }
    let passed = [grad, div, idem, orth].iter().all(|&x| x <= PROJECTOR_TOLERANCE);
    Ok(ProjectorSuite {
        fields,
        n,
        gradient_fixed: grad,
        divergence_free: div,
        idempotent: idem,
        orthogonal: orth,
        tolerance: PROJECTOR_TOLERANCE,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSuite {
    pub samples: usize,
    /// `sup|k(a)|` for `γ = 2`.
    pub gamma2_pressure_coefficient: f64,
    /// `(Pu·∇)Pu` direct versus rebuilt from `w∂₂v, v∂₂w, v∂₁w, w∂₁v`.
    pub transport_assembly: f64,
    /// `QG` versus `Q(N_u) + u·∇Qu`, with `N_u` the full velocity nonlinearity.
    pub qg_reassembly: f64,
    pub passed: bool,
}

fn random_state(g: GridSpec, rng: &mut ChaCha8Rng) -> Result<FlowState> {
    let sp = Spectral::new(g);
    let band = (g.n / 6) as f64;
    let field = |amp: f64, rng: &mut ChaCha8Rng| -> Result<RealField2D> {
        let f = sp.inverse(&random_band_spectrum(g, 1.0, band, 1.0, rng)?)?;
        Ok(f.scaled(amp / f.sup_abs().max(f64::MIN_POSITIVE)))
    };
    let a = field(0.4, rng)?;
    let ux = field(1.0, rng)?;
    let uy = field(1.0, rng)?;
    Ok(FlowState {
        a,
        u: VectorField2D::new(ux, uy),
        t: 0.0,
    })
}

pub fn model_suite(n: usize, half_width: f64, samples: usize, seed: u64) -> Result<ModelSuite> {
    let g = GridSpec::new(n, half_width)?;
    let mut m1 = Model::with_defaults(g);
    m1.params.law = PressureLaw::gamma(1.0)?;
    let mut m2 = m1.clone();
    m2.params.law = PressureLaw::gamma(2.0)?;
    let sp = &m1.spectral;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut kmax, mut transport, mut qg) = (0f64, 0f64, 0f64);
    for _ in 0..samples {
        let s = random_state(g, &mut rng)?;
        kmax = kmax.max(m2.k_of(&s.a)?.sup_abs());

        let parts = split(sp, &s.u)?;
        let (v, w) = (parts.v(), parts.w());
        let gv = sp.gradient(v)?;
        let gw = sp.gradient(w)?;
        let direct = VectorField2D::new(
            &v.hadamard(&gv.x) + &w.hadamard(&gv.y),
            &v.hadamard(&gw.x) + &w.hadamard(&gw.y),
        );
        let built = incompressible_transport_from_components(sp, v, w)?;
        transport = transport.max(built.max_abs_diff(&direct) / direct.sup_abs().max(f64::MIN_POSITIVE));

        let nl = m1.rhs(&s)?.nonlinear_u();
        let q_nl = project_q(sp, &nl)?;
        let gq = [sp.gradient(&parts.qu.x)?, sp.gradient(&parts.qu.y)?];
        // u·∇Qu evaluated on the grid and truncated like every model product
        let transport_q = VectorField2D::new(
            sp.dealias_field(&(&s.u.x.hadamard(&gq[0].x) + &s.u.y.hadamard(&gq[0].y))),
            sp.dealias_field(&(&s.u.x.hadamard(&gq[1].x) + &s.u.y.hadamard(&gq[1].y))),
        );
        let oracle = &q_nl + &transport_q;
        let got = m1.compute_qg(&s)?;
        qg = qg.max(got.max_abs_diff(&oracle) / oracle.sup_abs().max(f64::MIN_POSITIVE));
    }
    Ok(ModelSuite {
        samples,
        gamma2_pressure_coefficient: kmax,
        transport_assembly: transport,
        qg_reassembly: qg,
        passed: kmax <= GAMMA2_TOLERANCE && transport <= MODEL_TOLERANCE && qg <= MODEL_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_suite_small() {
        let r = projector_suite(32, 2.0, 5, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.fields, 5);
    }

    #[test]
    fn model_suite_small() {
        let r = model_suite(32, 1.0, 3, 2).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.gamma2_pressure_coefficient, 0.0);
    }
}
