//! Leray projectors `Q = ∇Δ⁻¹div` and `P = I − Q`.
//!
//! Both act mode by mode with the derivative wavevector `d` (zero on the
//! Nyquist line), so `Q∇f = ∇f` and `div Pu = 0` hold to roundoff for the
//! discrete operators. Modes with `d = 0`, including the mean, go to `P`.

use crate::error::Result;
use crate::spectral::{RealField2D, Spectral, VectorField2D, VectorSpectrum};

#[derive(Debug, Clone)]
pub struct VelocitySplit {
    /// Incompressible part `Pu = (v, w)`.
    pub pu: VectorField2D,
    /// Compressible part `Qu`.
    pub qu: VectorField2D,
}

impl VelocitySplit {
    pub fn v(&self) -> &RealField2D {
        &self.pu.x
    }

    pub fn w(&self) -> &RealField2D {
        &self.pu.y
    }
}

pub(crate) fn q_hat(spectral: &Spectral, s: &VectorSpectrum) -> VectorSpectrum {
    let mut out = VectorSpectrum::zeros(s.x.grid);
    for idx in 0..s.x.coeffs.len() {
        let (d1, d2) = spectral.derivative_wavevector(idx);
        let dd = d1 * d1 + d2 * d2;
        if dd == 0.0 {
            continue;
        }
        let proj = (s.x.coeffs[idx] * d1 + s.y.coeffs[idx] * d2) / dd;
        out.x.coeffs[idx] = proj * d1;
        out.y.coeffs[idx] = proj * d2;
    }
    out
}

pub(crate) fn p_hat(spectral: &Spectral, s: &VectorSpectrum) -> VectorSpectrum {
    let q = q_hat(spectral, s);
    VectorSpectrum {
        x: &s.x - &q.x,
        y: &s.y - &q.y,
    }
}

pub fn project_q(spectral: &Spectral, u: &VectorField2D) -> Result<VectorField2D> {
    spectral.grid().check_same(&u.grid())?;
    Ok(spectral.unhat_vec(&q_hat(spectral, &spectral.hat_vec(u))))
}

pub fn project_p(spectral: &Spectral, u: &VectorField2D) -> Result<VectorField2D> {
    spectral.grid().check_same(&u.grid())?;
    Ok(spectral.unhat_vec(&p_hat(spectral, &spectral.hat_vec(u))))
}

pub fn split(spectral: &Spectral, u: &VectorField2D) -> Result<VelocitySplit> {
    spectral.grid().check_same(&u.grid())?;
    let s = spectral.hat_vec(u);
    let q = q_hat(spectral, &s);
    let p = VectorSpectrum {
        x: &s.x - &q.x,
        y: &s.y - &q.y,
    };
    Ok(VelocitySplit {
        pu: spectral.unhat_vec(&p),
        qu: spectral.unhat_vec(&q),
    })
}

#[derive(Debug, Clone)]
pub struct LerayCommutators {
    /// `Q(u·∇z) − u·∇(Qz)`.
    pub q: VectorField2D,
    /// `P(u·∇z) − u·∇(Pz)`.
    pub p: VectorField2D,
}

/// `[Q, u·∇]z` and `[P, u·∇]z`, with dealiased products.
pub fn leray_commutator(
    spectral: &Spectral,
    u: &VectorField2D,
    z: &VectorField2D,
) -> Result<LerayCommutators> {
    spectral.grid().check_same(&u.grid())?;
    spectral.grid().check_same(&z.grid())?;
    let (q, p) = leray_commutator_hat(spectral, u, &spectral.hat_vec(z));
    Ok(LerayCommutators {
        q: spectral.unhat_vec(&q),
        p: spectral.unhat_vec(&p),
    })
}

pub(crate) fn leray_commutator_hat(
    spectral: &Spectral,
    u: &VectorField2D,
    z: &VectorSpectrum,
) -> (VectorSpectrum, VectorSpectrum) {
    let transport = spectral.advect_vec_hat(u, z);
    let qz = q_hat(spectral, z);
    let pz = VectorSpectrum {
        x: &z.x - &qz.x,
        y: &z.y - &qz.y,
    };
    let q_of = q_hat(spectral, &transport);
    let p_of = VectorSpectrum {
        x: &transport.x - &q_of.x,
        y: &transport.y - &q_of.y,
    };
    let u_qz = spectral.advect_vec_hat(u, &qz);
    let u_pz = spectral.advect_vec_hat(u, &pz);
    (
        VectorSpectrum {
            x: &q_of.x - &u_qz.x,
            y: &q_of.y - &u_qz.y,
        },
        VectorSpectrum {
            x: &p_of.x - &u_pz.x,
            y: &p_of.y - &u_pz.y,
        },
    )
}

/// `(Pu·∇)Pu` rebuilt from the products `w∂₂v, v∂₂w, v∂₁w, w∂₁v` using
/// `∂₂w = −∂₁v`: the components are `w∂₂v − v∂₂w` and `v∂₁w − w∂₁v`.
pub fn incompressible_transport_from_components(
    spectral: &Spectral,
    v: &RealField2D,
    w: &RealField2D,
) -> Result<VectorField2D> {
    let gv = spectral.gradient(v)?;
    let gw = spectral.gradient(w)?;
    let first = &w.hadamard(&gv.y) - &v.hadamard(&gw.y);
    let second = &v.hadamard(&gw.x) - &w.hadamard(&gv.x);
    Ok(VectorField2D::new(first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp(n: usize, l: f64) -> Spectral {
        Spectral::new(GridSpec::new(n, l).unwrap())
    }

    fn random_vec(g: GridSpec, seed: u64) -> VectorField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = || RealField2D::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let x = f();
        let y = f();
        VectorField2D::new(x, y)
    }

    #[test]
    fn gradient_is_all_compressible() {
        let s = sp(64, 1.0);
        let f = RealField2D::from_fn(s.grid(), |x, y| (2.0 * x).sin() * (3.0 * y).cos() + (x - y).cos());
        let g = s.gradient(&f).unwrap();
        let sp_ = split(&s, &g).unwrap();
        assert!(sp_.qu.max_abs_diff(&g) <= 1e-12 * g.sup_abs());
        assert!(sp_.pu.sup_abs() <= 1e-12 * g.sup_abs());
    }

    #[test]
    fn shear_flow_is_incompressible() {
        let s = sp(32, 1.0);
        let g = s.grid();
        let u = VectorField2D::new(RealField2D::from_fn(g, |_, y| y.sin()), RealField2D::zeros(g));
        let out = split(&s, &u).unwrap();
        assert!(out.qu.sup_abs() < 1e-14);
        assert!(out.v().max_abs_diff(&u.x) < 1e-14);
        assert!(out.w().sup_abs() < 1e-14);
    }

    #[test]
    fn mean_goes_to_incompressible_part() {
        let s = sp(32, 2.0);
        let g = s.grid();
        let u = VectorField2D::new(RealField2D::constant(g, 1.5), RealField2D::constant(g, -0.5));
        let out = split(&s, &u).unwrap();
        assert!(out.qu.sup_abs() < 1e-15);
        assert!(out.pu.max_abs_diff(&u) < 1e-15);
    }

    #[test]
    fn projector_identities_on_random_fields() {
        let s = sp(64, 8.0);
        for seed in 0..10 {
            let u = random_vec(s.grid(), seed);
            let scale = u.sup_abs();
            let out = split(&s, &u).unwrap();
            let sum = &out.pu + &out.qu;
            assert!(sum.max_abs_diff(&u) <= 1e-12 * scale);
            assert!(s.divergence(&out.pu).unwrap().sup_abs() <= 1e-11 * scale);
            assert!(s.curl(&out.qu).unwrap().sup_abs() <= 1e-11 * scale);
            let again = split(&s, &out.pu).unwrap();
            assert!(again.qu.sup_abs() <= 1e-11 * scale);
            let qq = project_q(&s, &out.qu).unwrap();
            assert!(qq.max_abs_diff(&out.qu) <= 1e-11 * scale);
            assert!(out.pu.inner(&out.qu).abs() <= 1e-10 * u.l2_norm_sq());
        }
    }

    #[test]
    fn commutators_vanish_for_constant_z_and_sum_to_zero() {
        let s = sp(64, 1.0);
        let g = s.grid();
        let u = random_vec(g, 3);
        let c = VectorField2D::new(RealField2D::constant(g, 2.0), RealField2D::constant(g, 1.0));
        let k = leray_commutator(&s, &u, &c).unwrap();
        assert!(k.q.sup_abs() < 1e-13 && k.p.sup_abs() < 1e-13);

        let z = random_vec(g, 4);
        let k = leray_commutator(&s, &u, &z).unwrap();
        let total = &k.p + &k.q;
        assert!(total.sup_abs() <= 1e-12 * k.q.sup_abs().max(1.0));
    }

    #[test]
    fn commutator_four_term_decomposition() {
        let s = sp(64, 2.0);
        let u = random_vec(s.grid(), 5);
        let parts = split(&s, &u).unwrap();
        // [Q, X·∇]Y = Q(X·∇Y) − X·∇(QY), each product evaluated separately
        let piece = |x: &VectorField2D, y: &VectorField2D| -> VectorField2D {
            let ys = s.hat_vec(y);
            let t = s.advect_vec_hat(x, &ys);
            let a = s.unhat_vec(&q_hat(&s, &t));
            let b = s.unhat_vec(&s.advect_vec_hat(x, &q_hat(&s, &ys)));
            &a - &b
        };
        let mut sum = piece(&parts.qu, &parts.pu);
        sum = &sum + &piece(&parts.qu, &parts.qu);
        sum = &sum + &piece(&parts.pu, &parts.qu);
        sum = &sum + &piece(&parts.pu, &parts.pu);
        let direct = leray_commutator(&s, &u, &u).unwrap().q;
        assert!(sum.max_abs_diff(&direct) <= 1e-11 * direct.sup_abs().max(1.0));
    }

    #[test]
    fn incompressible_transport_assembly() {
        let s = sp(64, 1.0);
        let parts = split(&s, &random_vec(s.grid(), 6)).unwrap();
        let (v, w) = (parts.v(), parts.w());
        let gv = s.gradient(v).unwrap();
        let gw = s.gradient(w).unwrap();
        let direct = VectorField2D::new(
            &v.hadamard(&gv.x) + &w.hadamard(&gv.y),
            &v.hadamard(&gw.x) + &w.hadamard(&gw.y),
        );
        let built = incompressible_transport_from_components(&s, v, w).unwrap();
        assert!(built.max_abs_diff(&direct) <= 1e-11 * direct.sup_abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn split_is_exact_partition(seed in any::<u64>(), l in 0.5f64..8.0) {
            let s = sp(32, l);
            let u = random_vec(s.grid(), seed);
            let out = split(&s, &u).unwrap();
            prop_assert!((&out.pu + &out.qu).max_abs_diff(&u) <= 1e-12 * u.sup_abs());
            prop_assert!(s.divergence(&out.pu).unwrap().sup_abs() <= 1e-11 * u.sup_abs() / l.min(1.0));
        }
    }
}
