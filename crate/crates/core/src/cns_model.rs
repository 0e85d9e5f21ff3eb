//! Right-hand sides of the compressible system in perturbation form
//!
//! ```text
//! ∂ₜa + div u + div(a u) = 0
//! ∂ₜu + u·∇u − μΔu − (λ+μ)∇div u + ∇a = −L(a)(μΔu + (λ+μ)∇div u) + k(a)∇a
//! ```
//!
//! with `ρ = 1 + a`, `L(a) = a/(1+a)` and `k(a) = −P'(1+a)/(1+a) + P'(1)`.
//! Every quadratic product is formed on the grid and dealiased.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helmholtz::{self, q_hat};
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::{ComplexSpectrum2D, GridSpec, RealField2D, Spectral, VectorField2D, VectorSpectrum};

/// Barotropic pressure law normalised to `P'(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PressureLaw {
    /// `P(ρ) = ρ^γ/γ`, so `P'(ρ) = ρ^{γ−1}`.
    Gamma { gamma: f64 },
}

impl PressureLaw {
    pub const GAMMA_FAMILY: u32 = 1;

    pub fn gamma(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma-law exponent must be >= 1, got {gamma}")));
        }
        Ok(PressureLaw::Gamma { gamma })
    }

    /// The exponent `γ`.
    pub fn exponent(&self) -> f64 {
        match *self {
            PressureLaw::Gamma { gamma } => gamma,
        }
    }

    /// `P'(ρ)`.
    pub fn dp(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Gamma { gamma } => rho.powf(gamma - 1.0),
        }
    }

    /// `(family, parameter)` as stored in checkpoints.
    pub fn tag(&self) -> (u32, f64) {
        match *self {
            PressureLaw::Gamma { gamma } => (Self::GAMMA_FAMILY, gamma),
        }
    }

    pub fn from_tag(family: u32, param: f64) -> Result<Self> {
        match family {
            Self::GAMMA_FAMILY => Self::gamma(param),
            other => Err(Error::Config(format!("unknown pressure-law family {other}"))),
        }
    }
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::Gamma { gamma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub lambda: f64,
    pub law: PressureLaw,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            lambda: 0.0,
            law: PressureLaw::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(2.0 * self.mu + self.lambda > 0.0) {
            return Err(Error::Config("2 mu + lambda must be positive".into()));
        }
        Ok(())
    }

    /// Viscosity acting on compressible modes, `2μ + λ`.
    pub fn bulk(&self) -> f64 {
        2.0 * self.mu + self.lambda
    }
}

/// `(a, u)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub a: RealField2D,
    pub u: VectorField2D,
    pub t: f64,
}

impl FlowState {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            a: RealField2D::zeros(grid),
            u: VectorField2D::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.a.grid
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.u.is_finite()
    }

    /// Fails with the offending minimum of `1 + a` if it is not positive.
    pub fn check_vacuum(&self) -> Result<()> {
        check_vacuum(&self.a)
    }

    /// Whether the working regime `sup|a| ≤ 1/2` holds.
    pub fn in_small_regime(&self) -> bool {
        self.a.sup_abs() <= 0.5
    }
}

pub(crate) fn check_vacuum(a: &RealField2D) -> Result<()> {
    let min = 1.0 + a.min();
    if !(min > 0.0) {
        return Err(Error::Vacuum { min });
    }
    Ok(())
}

/// `∂ₜ(a, u)` with the linear part kept separately.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub da_dt: RealField2D,
    pub du_dt: VectorField2D,
    /// `−div u`.
    pub linear_a: RealField2D,
    /// `μΔu + (λ+μ)∇div u − ∇a`.
    pub linear_u: VectorField2D,
}

impl Tendency {
    pub fn nonlinear_a(&self) -> RealField2D {
        &self.da_dt - &self.linear_a
    }

    pub fn nonlinear_u(&self) -> VectorField2D {
        &self.du_dt - &self.linear_u
    }
}

/// Grid, dyadic partition and physical parameters of one run.
#[derive(Debug, Clone)]
pub struct Model {
    pub spectral: Spectral,
    pub partition: DyadicPartition,
    pub params: ModelParams,
    /// Low/high frequency cutoff `N₀`.
    pub n0: u32,
}

impl Model {
    pub fn new(spectral: Spectral, partition: DyadicPartition, params: ModelParams, n0: u32) -> Result<Self> {
        params.validate()?;
        spectral.grid().check_same(&partition.grid())?;
        if n0 < 1 {
            return Err(Error::Config("N0 must be >= 1".into()));
        }
        Ok(Self {
            spectral,
            partition,
            params,
            n0,
        })
    }

    /// Model on `grid` with the covering partition, default parameters and `N₀ = 1`.
    pub fn with_defaults(grid: GridSpec) -> Self {
        Self {
            spectral: Spectral::new(grid),
            partition: DyadicPartition::covering(grid),
            params: ModelParams::default(),
            n0: 1,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.spectral.grid()
    }

    pub fn law(&self) -> PressureLaw {
        self.params.law
    }

    /// `L(a) = a/(1+a)`, dealiased.
    pub fn l_of(&self, a: &RealField2D) -> Result<RealField2D> {
        check_vacuum(a)?;
        Ok(self.spectral.dealias_field(&a.map(|x| x / (1.0 + x))))
    }

    /// `k(a) = −P'(1+a)/(1+a) + P'(1)`, dealiased.
    pub fn k_of(&self, a: &RealField2D) -> Result<RealField2D> {
        check_vacuum(a)?;
        let law = self.params.law;
        let p1 = law.dp(1.0);
        Ok(self
            .spectral
            .dealias_field(&a.map(|x| -law.dp(1.0 + x) / (1.0 + x) + p1)))
    }

    /// `μΔu + (λ+μ)∇div u` in Fourier space.
    pub(crate) fn viscous_hat(&self, u: &VectorSpectrum) -> VectorSpectrum {
        let sp = &self.spectral;
        let mu = self.params.mu;
        let lm = self.params.lambda + mu;
        let gd = sp.grad_hat(&sp.div_hat(u));
        VectorSpectrum {
            x: &sp.lap_hat(&u.x).scaled(mu) + &gd.x.scaled(lm),
            y: &sp.lap_hat(&u.y).scaled(mu) + &gd.y.scaled(lm),
        }
    }

    /// Nonlinear tendencies `(−div(a u), −u·∇u − L(a)(μΔu + (λ+μ)∇div u) + k(a)∇a)`
    /// from spectra, together with the physical `a` used for the vacuum check.
    pub(crate) fn nonlinear_hat(
        &self,
        a_hat: &ComplexSpectrum2D,
        u_hat: &VectorSpectrum,
    ) -> Result<(ComplexSpectrum2D, VectorSpectrum)> {
        let sp = &self.spectral;
        let a = sp.unhat(a_hat);
        let u = sp.unhat_vec(u_hat);
        let l = self.l_of(&a)?;
        let k = self.k_of(&a)?;

        let flux = VectorSpectrum {
            x: sp.product_hat(&a, &u.x),
            y: sp.product_hat(&a, &u.y),
        };
        let na = sp.div_hat(&flux).scaled(-1.0);

        let adv = sp.advect_vec_hat(&u, u_hat);
        let visc = sp.unhat_vec(&self.viscous_hat(u_hat));
        let ga = sp.unhat_vec(&sp.grad_hat(a_hat));
        let nu = VectorSpectrum {
            x: &(&sp.product_hat(&k, &ga.x) - &adv.x) - &sp.product_hat(&l, &visc.x),
            y: &(&sp.product_hat(&k, &ga.y) - &adv.y) - &sp.product_hat(&l, &visc.y),
        };
        Ok((na, nu))
    }

    /// Linear tendencies `(−div u, μΔu + (λ+μ)∇div u − ∇a)` in Fourier space.
    pub(crate) fn linear_hat(
        &self,
        a_hat: &ComplexSpectrum2D,
        u_hat: &VectorSpectrum,
    ) -> (ComplexSpectrum2D, VectorSpectrum) {
        let sp = &self.spectral;
        let la = sp.div_hat(u_hat).scaled(-1.0);
        let visc = self.viscous_hat(u_hat);
        let ga = sp.grad_hat(a_hat);
        (
            la,
            VectorSpectrum {
                x: &visc.x - &ga.x,
                y: &visc.y - &ga.y,
            },
        )
    }

    pub fn rhs(&self, state: &FlowState) -> Result<Tendency> {
        let sp = &self.spectral;
        sp.grid().check_same(&state.grid())?;
        let a_hat = sp.hat(&state.a);
        let u_hat = sp.hat_vec(&state.u);
        let (na, nu) = self.nonlinear_hat(&a_hat, &u_hat)?;
        let (la, lu) = self.linear_hat(&a_hat, &u_hat);
        let linear_a = sp.unhat(&la);
        let linear_u = sp.unhat_vec(&lu);
        let da_dt = sp.unhat(&(&la + &na));
        let du_dt = VectorField2D::new(sp.unhat(&(&lu.x + &nu.x)), sp.unhat(&(&lu.y + &nu.y)));
        Ok(Tendency {
            da_dt,
            du_dt,
            linear_a,
            linear_u,
        })
    }

    /// `QG = −[Q, u·∇]u − Q(L(a)μΔu) − Q(L(a)(λ+μ)∇div u) + Q(k(a)∇a)`.
    pub fn compute_qg(&self, state: &FlowState) -> Result<VectorField2D> {
        Ok(self.spectral.unhat_vec(&self.qg_hat(state)?))
    }

    pub(crate) fn qg_hat(&self, state: &FlowState) -> Result<VectorSpectrum> {
        let sp = &self.spectral;
        sp.grid().check_same(&state.grid())?;
        let l = self.l_of(&state.a)?;
        let k = self.k_of(&state.a)?;
        let u_hat = sp.hat_vec(&state.u);
        let a_hat = sp.hat(&state.a);
        let (comm_q, _) = helmholtz::leray_commutator_hat(sp, &state.u, &u_hat);

        let mu = self.params.mu;
        let lm = self.params.lambda + mu;
        let lap = sp.unhat_vec(&VectorSpectrum {
            x: sp.lap_hat(&u_hat.x).scaled(mu),
            y: sp.lap_hat(&u_hat.y).scaled(mu),
        });
        let gd = sp.unhat_vec(&{
            let g = sp.grad_hat(&sp.div_hat(&u_hat));
            VectorSpectrum {
                x: g.x.scaled(lm),
                y: g.y.scaled(lm),
            }
        });
        let ga = sp.unhat_vec(&sp.grad_hat(&a_hat));
        let prod = |f: &RealField2D, v: &VectorField2D| VectorSpectrum {
            x: sp.product_hat(f, &v.x),
            y: sp.product_hat(f, &v.y),
        };
        let t_lap = q_hat(sp, &prod(&l, &lap));
        let t_gd = q_hat(sp, &prod(&l, &gd));
        let t_k = q_hat(sp, &prod(&k, &ga));
        Ok(VectorSpectrum {
            x: &(&(&t_k.x - &comm_q.x) - &t_lap.x) - &t_gd.x,
            y: &(&(&t_k.y - &comm_q.y) - &t_lap.y) - &t_gd.y,
        })
    }

    /// `u·∇Δ̇_j z − Δ̇_j(u·∇z)` for scalar `z`.
    pub fn dyadic_commutator(&self, u: &VectorField2D, z: &RealField2D, j: i32) -> Result<RealField2D> {
        let sp = &self.spectral;
        sp.grid().check_same(&u.grid())?;
        let z_hat = sp.forward(z)?;
        let adv = sp.advect_hat(u, &z_hat);
        Ok(sp.unhat(&self.dyadic_commutator_hat(u, &z_hat, &adv, j)?))
    }

    /// As [`Model::dyadic_commutator`], reusing a precomputed dealiased `u·∇z`.
    pub(crate) fn dyadic_commutator_hat(
        &self,
        u: &VectorField2D,
        z_hat: &ComplexSpectrum2D,
        adv_hat: &ComplexSpectrum2D,
        j: i32,
    ) -> Result<ComplexSpectrum2D> {
        let sp = &self.spectral;
        let zj = self.partition.block_hat(z_hat, j)?;
        let first = sp.advect_hat(u, &zj);
        let second = self.partition.block_hat(adv_hat, j)?;
        Ok(&first - &second)
    }

    /// `F_j = ∇(u·∇Δ̇_j a − Δ̇_j(u·∇a)) − ∇Δ̇_j(a div u) − ∇u·∇Δ̇_j a`, where
    /// `(∇u·∇b)ᵢ = Σₖ ∂ᵢuₖ ∂ₖb`.
    pub fn f_j(&self, state: &FlowState, j: i32) -> Result<VectorField2D> {
        let sp = &self.spectral;
        let a_hat = sp.forward(&state.a)?;
        let u_hat = sp.hat_vec(&state.u);
        let pre = FjInputs::new(self, state, &a_hat, &u_hat);
        Ok(sp.unhat_vec(&self.f_j_hat(state, &a_hat, &pre, j)?))
    }

    pub(crate) fn f_j_hat(
        &self,
        state: &FlowState,
        a_hat: &ComplexSpectrum2D,
        pre: &FjInputs,
        j: i32,
    ) -> Result<VectorSpectrum> {
        let sp = &self.spectral;
        let comm = self.dyadic_commutator_hat(&state.u, a_hat, &pre.adv_a, j)?;
        let g_comm = sp.grad_hat(&comm);
        let g_src = sp.grad_hat(&self.partition.block_hat(&pre.a_div_u, j)?);
        let aj = self.partition.block_hat(a_hat, j)?;
        let gaj = sp.unhat_vec(&sp.grad_hat(&aj));
        let [d1u1, d2u1, d1u2, d2u2] = &pre.grad_u;
        // (∇u·∇b)₁ = ∂₁u₁∂₁b + ∂₁u₂∂₂b ; (∇u·∇b)₂ = ∂₂u₁∂₁b + ∂₂u₂∂₂b
        let s1 = &d1u1.hadamard(&gaj.x) + &d1u2.hadamard(&gaj.y);
        let s2 = &d2u1.hadamard(&gaj.x) + &d2u2.hadamard(&gaj.y);
        let mut t1 = sp.hat(&s1);
        let mut t2 = sp.hat(&s2);
        sp.dealias_in_place(&mut t1);
        sp.dealias_in_place(&mut t2);
        Ok(VectorSpectrum {
            x: &(&g_comm.x - &g_src.x) - &t1,
            y: &(&g_comm.y - &g_src.y) - &t2,
        })
    }
}

/// Block-independent ingredients of `F_j`.
pub(crate) struct FjInputs {
    /// Dealiased `u·∇a`.
    pub adv_a: ComplexSpectrum2D,
    /// Dealiased `a div u`.
    pub a_div_u: ComplexSpectrum2D,
    /// `∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂`.
    pub grad_u: [RealField2D; 4],
}

impl FjInputs {
    pub fn new(model: &Model, state: &FlowState, a_hat: &ComplexSpectrum2D, u_hat: &VectorSpectrum) -> Self {
        let sp = &model.spectral;
        let adv_a = sp.advect_hat(&state.u, a_hat);
        let div_u = sp.unhat(&sp.div_hat(u_hat));
        let a_div_u = sp.product_hat(&state.a, &div_u);
        let grad_u = [
            sp.unhat(&sp.d1_hat(&u_hat.x)),
            sp.unhat(&sp.d2_hat(&u_hat.x)),
            sp.unhat(&sp.d1_hat(&u_hat.y)),
            sp.unhat(&sp.d2_hat(&u_hat.y)),
        ];
        Self {
            adv_a,
            a_div_u,
            grad_u,
        }
    }
}
