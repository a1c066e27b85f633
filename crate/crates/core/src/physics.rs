//! Constitutive closures: Helmholtz potential, entropy and energy densities,
//! gradient contribution, Korteweg stress and viscosity.

use crate::error::{Error, Result};
use crate::quadrature::LineRule5;

/// Regulariser of the anisotropy denominator.
pub const ANISOTROPY_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientModel {
    Isotropic { gamma: f64 },
    Anisotropic { gamma0: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub mobility: f64,
    pub conductivity: f64,
    pub eta_l: f64,
    pub eta_s: f64,
    pub theta_m: f64,
    pub latent: f64,
    pub h_pt: f64,
    pub h_cf: f64,
    pub c_vsh: f64,
    pub gradient_model: GradientModel,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mobility", self.mobility),
            ("conductivity", self.conductivity),
            ("eta_l", self.eta_l),
            ("eta_s", self.eta_s),
            ("theta_m", self.theta_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("latent", self.latent), ("h_pt", self.h_pt), ("h_cf", self.h_cf), ("c_vsh", self.c_vsh)] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        match self.gradient_model {
            GradientModel::Isotropic { gamma } if !gamma.is_finite() => {
                Err(Error::InvalidArgument(format!("gamma must be finite, got {gamma}")))
            }
            GradientModel::Anisotropic { gamma0, delta } if !(gamma0.is_finite() && delta.is_finite()) => {
                Err(Error::InvalidArgument("anisotropy parameters must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Interpolation function truncated to `[0, 1]`: value and first two
/// derivatives.
pub fn interp_h(phi: f64) -> (f64, f64, f64) {
    if phi <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if phi >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let q = phi * (1.0 - phi);
        (
            phi * phi * phi * (phi * (6.0 * phi - 15.0) + 10.0),
            30.0 * q * q,
            60.0 * q * (1.0 - 2.0 * phi),
        )
    }
}

/// Double well `phi^2 (1-phi)^2` and its first two derivatives.
fn double_well(phi: f64) -> (f64, f64, f64) {
    let q = phi * (1.0 - phi);
    (q * q, 2.0 * q * (1.0 - 2.0 * phi), 2.0 * (1.0 - 6.0 * phi + 6.0 * phi * phi))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(theta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub f: f64,
    pub df_dphi: f64,
    pub df_dtheta: f64,
    pub d2f_dtheta2: f64,
    pub d2f_dphitheta: f64,
    pub d2f_dphi2: f64,
}

pub fn potential_f(phi: f64, theta: f64, params: &MaterialParams) -> Result<Potential> {
    check_theta(theta)?;
    let p = params;
    let (w, dw, d2w) = double_well(phi);
    let (h, dh, d2h) = interp_h(phi);
    let h_theta = p.h_pt - p.h_cf * (theta - p.theta_m);
    let rel = theta / p.theta_m - 1.0;
    let log = (theta / p.theta_m).ln();
    Ok(Potential {
        f: h_theta * w - p.latent * h * rel - p.c_vsh * (theta * log - (theta - p.theta_m)),
        df_dphi: h_theta * dw - p.latent * dh * rel,
        df_dtheta: -p.h_cf * w - p.latent * h / p.theta_m - p.c_vsh * log,
        d2f_dtheta2: -p.c_vsh / theta,
        d2f_dphitheta: -p.h_cf * dw - p.latent * dh / p.theta_m,
        d2f_dphi2: h_theta * d2w - p.latent * d2h * rel,
    })
}

/// Gradient-free part of the entropy, `-df/dtheta`.
fn bulk_entropy(phi: f64, theta: f64, params: &MaterialParams) -> Result<f64> {
    check_theta(theta)?;
    let (w, _, _) = double_well(phi);
    let (h, _, _) = interp_h(phi);
    Ok(params.h_cf * w + params.latent * h / params.theta_m + params.c_vsh * (theta / params.theta_m).ln())
}

pub fn entropy_density(phi: f64, grad_phi: [f64; 2], theta: f64, params: &MaterialParams) -> Result<f64> {
    let g = gradient_contribution(grad_phi, &params.gradient_model);
    Ok(bulk_entropy(phi, theta, params)? - g.value)
}

pub fn internal_energy(phi: f64, theta: f64, params: &MaterialParams) -> Result<f64> {
    check_theta(theta)?;
    let p = params;
    let (w, _, _) = double_well(phi);
    let (h, _, _) = interp_h(phi);
    Ok((p.h_pt + p.h_cf * p.theta_m) * w + p.latent * h + p.c_vsh * (theta - p.theta_m))
}

pub fn total_energy(phi: f64, theta: f64, u: [f64; 2], params: &MaterialParams) -> Result<f64> {
    Ok(internal_energy(phi, theta, params)? + 0.5 * (u[0] * u[0] + u[1] * u[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientTerms {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

pub fn gradient_contribution(p: [f64; 2], model: &GradientModel) -> GradientTerms {
    match *model {
        GradientModel::Isotropic { gamma } => {
            let g2 = gamma * gamma;
            GradientTerms {
                value: 0.5 * g2 * (p[0] * p[0] + p[1] * p[1]),
                grad: [g2 * p[0], g2 * p[1]],
                hess: [[g2, 0.0], [0.0, g2]],
            }
        }
        GradientModel::Anisotropic { gamma0, delta } => anisotropic(p, gamma0, delta),
    }
}

/// `G = gamma0^2 A^2 q` with `A = 1 + delta N / r^2`, `N = a^4 - 6a^2b^2 + b^4`,
/// `q = |p|^2`, `r = q + eps`.
fn anisotropic(p: [f64; 2], gamma0: f64, delta: f64) -> GradientTerms {
    let [a, b] = p;
    let q = a * a + b * b;
    let r = q + ANISOTROPY_EPS;
    let n = a.powi(4) - 6.0 * a * a * b * b + b.powi(4);
    let dn = [4.0 * a.powi(3) - 12.0 * a * b * b, 4.0 * b.powi(3) - 12.0 * a * a * b];
    let d2n = [
        [12.0 * a * a - 12.0 * b * b, -24.0 * a * b],
        [-24.0 * a * b, 12.0 * b * b - 12.0 * a * a],
    ];
    let (r2, r3, r4) = (r * r, r * r * r, r * r * r * r);
    let big_a = 1.0 + delta * n / r2;
    let da = [
        delta * (dn[0] / r2 - 4.0 * p[0] * n / r3),
        delta * (dn[1] / r2 - 4.0 * p[1] * n / r3),
    ];
    let mut d2a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let kron = if i == j { 1.0 } else { 0.0 };
            d2a[i][j] = delta
                * (d2n[i][j] / r2 - 4.0 * p[j] * dn[i] / r3 - 4.0 * kron * n / r3 - 4.0 * p[i] * dn[j] / r3
                    + 24.0 * p[i] * p[j] * n / r4);
        }
    }
    let g2 = gamma0 * gamma0;
    let grad = [
        g2 * (2.0 * big_a * da[0] * q + 2.0 * big_a * big_a * p[0]),
        g2 * (2.0 * big_a * da[1] * q + 2.0 * big_a * big_a * p[1]),
    ];
    let mut hess = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let kron = if i == j { 1.0 } else { 0.0 };
            hess[i][j] = g2
                * (2.0 * da[i] * da[j] * q
                    + 2.0 * big_a * d2a[i][j] * q
                    + 4.0 * big_a * da[i] * p[j]
                    + 4.0 * big_a * da[j] * p[i]
                    + 2.0 * big_a * big_a * kron);
        }
    }
    GradientTerms {
        value: g2 * big_a * big_a * q,
        grad,
        hess,
    }
}

/// `sigma = G'(grad phi) (x) grad phi`.
pub fn korteweg_stress(grad_phi: [f64; 2], model: &GradientModel) -> [[f64; 2]; 2] {
    let g = gradient_contribution(grad_phi, model).grad;
    [
        [g[0] * grad_phi[0], g[0] * grad_phi[1]],
        [g[1] * grad_phi[0], g[1] * grad_phi[1]],
    ]
}

/// Viscosity and its derivative with respect to `phi`.
pub fn viscosity(phi: f64, params: &MaterialParams) -> (f64, f64) {
    let (h, dh, _) = interp_h(phi);
    let (el, es) = (params.eta_l, params.eta_s);
    let den = h * (es - el) + el;
    (el * es / den, -el * es * (es - el) * dh / (den * den))
}

/// All pointwise closures at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoEval {
    pub potential: Potential,
    pub s: f64,
    pub e: f64,
    pub gradient: GradientTerms,
    pub sigma: [[f64; 2]; 2],
    pub eta: f64,
}

pub fn thermo_eval(phi: f64, grad_phi: [f64; 2], theta: f64, params: &MaterialParams) -> Result<ThermoEval> {
    let potential = potential_f(phi, theta, params)?;
    let gradient = gradient_contribution(grad_phi, &params.gradient_model);
    let g = gradient.grad;
    Ok(ThermoEval {
        potential,
        s: -gradient.value - potential.df_dtheta,
        e: potential.f - theta * potential.df_dtheta,
        gradient,
        sigma: [
            [g[0] * grad_phi[0], g[0] * grad_phi[1]],
            [g[1] * grad_phi[0], g[1] * grad_phi[1]],
        ],
        eta: viscosity(phi, params).0,
    })
}

/// Segment average of `df/dphi` and its partial derivatives with respect
/// to the new phase value and the temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedDfdphi {
    pub value: f64,
    pub d_phi_new: f64,
    pub d_theta: f64,
}

/// `int_0^1 df/dphi(phi_old + s (phi_new - phi_old), theta) ds`.
///
/// The five-point Gauss rule is applied on each piece of the segment between
/// crossings of `phi = 0` and `phi = 1`, where the truncated interpolation
/// function has kinks; on every piece the integrand is a polynomial of degree
/// at most four in `s`, so the result is exact.
pub fn time_averaged_dfdphi(phi_new: f64, phi_old: f64, theta: f64, params: &MaterialParams) -> Result<AveragedDfdphi> {
    check_theta(theta)?;
    let d = phi_new - phi_old;
    let mut cuts = vec![0.0, 1.0];
    if d != 0.0 {
        for level in [0.0, 1.0] {
            let s = (level - phi_old) / d;
            if s > 0.0 && s < 1.0 {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut out = AveragedDfdphi {
        value: 0.0,
        d_phi_new: 0.0,
        d_theta: 0.0,
    };
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        if b <= a {
            continue;
        }
        let len = b - a;
        for (&x, &w) in LineRule5::NODES.iter().zip(LineRule5::WEIGHTS.iter()) {
            let s = a + x * len;
            let pot = potential_f(phi_old + s * d, theta, params)?;
            out.value += len * w * pot.df_dphi;
            out.d_phi_new += len * w * s * pot.d2f_dphi2;
            out.d_theta += len * w * pot.d2f_dphitheta;
        }
    }
    if out.value.is_finite() {
        Ok(out)
    } else {
        Err(Error::InvalidData(format!("non-finite averaged potential derivative ({})", out.value)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(model: GradientModel) -> MaterialParams {
        MaterialParams {
            mobility: 10.0,
            conductivity: 0.01,
            eta_l: 0.001,
            eta_s: 1.0,
            theta_m: 1.0,
            latent: 1.0,
            h_pt: 1.0,
            h_cf: 0.1,
            c_vsh: 1.0,
            gradient_model: model,
        }
    }

    fn iso() -> MaterialParams {
        params(GradientModel::Isotropic { gamma: 0.025 })
    }

    fn aniso() -> GradientModel {
        GradientModel::Anisotropic { gamma0: 0.05, delta: 0.9 }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn interpolation_function() {
        assert_eq!(interp_h(0.0).0, 0.0);
        assert_eq!(interp_h(1.0).0, 1.0);
        assert!((interp_h(0.5).0 - 0.5).abs() < 1e-15);
        assert_eq!(interp_h(-0.2), (0.0, 0.0, 0.0));
        assert_eq!(interp_h(1.3), (1.0, 0.0, 0.0));
        // continuity at the truncation points
        assert!(interp_h(1e-9).0 < 1e-25 && interp_h(1.0 - 1e-9).0 > 1.0 - 1e-13);
    }

    #[test]
    fn potential_values() {
        let p = iso();
        let at0 = potential_f(0.0, 1.0, &p).unwrap();
        assert_eq!(at0.f, 0.0);
        assert_eq!(at0.df_dtheta, 0.0);
        assert!((potential_f(0.5, 1.0, &p).unwrap().f - 0.0625).abs() < 1e-15);
        for phi in [-0.3, 0.2, 0.7, 1.4] {
            assert!((potential_f(phi, 2.0, &p).unwrap().d2f_dtheta2 + 0.5).abs() < 1e-15);
        }
        assert!(matches!(potential_f(0.5, 0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(potential_f(0.5, -1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_and_energy_values() {
        let p = iso();
        assert_eq!(entropy_density(0.0, [0.0, 0.0], 1.0, &p).unwrap(), 0.0);
        assert!((entropy_density(1.0, [0.0, 0.0], 1.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(internal_energy(0.0, 1.0, &p).unwrap(), 0.0);
        for theta in [0.3, 1.0, 2.7] {
            let d = internal_energy(1.0, theta, &p).unwrap() - internal_energy(0.0, theta, &p).unwrap();
            assert!((d - p.latent).abs() < 1e-14);
        }
        assert!(entropy_density(0.5, [0.0, 0.0], 0.0, &p).is_err());
        assert!(internal_energy(0.5, -0.1, &p).is_err());
    }

    #[test]
    fn defining_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in [GradientModel::Isotropic { gamma: 0.025 }, aniso()] {
            let p = params(model);
            for _ in 0..10 {
                let phi = rng.gen_range(-0.5..1.5);
                let theta = rng.gen_range(0.1..3.0);
                let g = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
                let pot = potential_f(phi, theta, &p).unwrap();
                let gv = gradient_contribution(g, &p.gradient_model).value;
                let s = entropy_density(phi, g, theta, &p).unwrap();
                let e = internal_energy(phi, theta, &p).unwrap();
                assert!((s - (-gv - pot.df_dtheta)).abs() <= 1e-12);
                assert!((e - (pot.f - theta * pot.df_dtheta)).abs() <= 1e-12);
                let t = thermo_eval(phi, g, theta, &p).unwrap();
                assert!((t.s - s).abs() <= 1e-12 && (t.e - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let p = iso();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..50 {
            let phi = rng.gen_range(0.02..0.98);
            let theta = rng.gen_range(0.2..3.0);
            let pot = potential_f(phi, theta, &p).unwrap();
            let f = |a: f64, b: f64| potential_f(a, b, &p).unwrap();
            let dphi = (f(phi + h, theta).f - f(phi - h, theta).f) / (2.0 * h);
            let dtheta = (f(phi, theta + h).f - f(phi, theta - h).f) / (2.0 * h);
            let dtt = (f(phi, theta + h).df_dtheta - f(phi, theta - h).df_dtheta) / (2.0 * h);
            let dpt = (f(phi, theta + h).df_dphi - f(phi, theta - h).df_dphi) / (2.0 * h);
            let dpp = (f(phi + h, theta).df_dphi - f(phi - h, theta).df_dphi) / (2.0 * h);
            assert!(rel_close(pot.df_dphi, dphi, 1e-6));
            assert!(rel_close(pot.df_dtheta, dtheta, 1e-6));
            assert!(rel_close(pot.d2f_dtheta2, dtt, 1e-6));
            assert!(rel_close(pot.d2f_dphitheta, dpt, 1e-6));
            assert!(rel_close(pot.d2f_dphi2, dpp, 1e-6));
            let ds = (entropy_density(phi, [0.0; 2], theta + h, &p).unwrap()
                - entropy_density(phi, [0.0; 2], theta - h, &p).unwrap())
                / (2.0 * h);
            assert!(rel_close(ds, p.c_vsh / theta, 1e-6) && ds > 0.0);
            assert!(pot.d2f_dtheta2 < 0.0);
        }
    }

    #[test]
    fn gradient_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for model in [GradientModel::Isotropic { gamma: 0.05 }, aniso()] {
            for _ in 0..50 {
                let g = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let t = gradient_contribution(g, &model);
                for i in 0..2 {
                    let mut gp = g;
                    let mut gm = g;
                    gp[i] += h;
                    gm[i] -= h;
                    let tp = gradient_contribution(gp, &model);
                    let tm = gradient_contribution(gm, &model);
                    let scale = t.grad[0].abs().max(t.grad[1].abs());
                    assert!((t.grad[i] - (tp.value - tm.value) / (2.0 * h)).abs() <= 1e-6 * (scale + 1e-3));
                    let hs = t.hess.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                    for j in 0..2 {
                        let fd = (tp.grad[j] - tm.grad[j]) / (2.0 * h);
                        assert!((t.hess[j][i] - fd).abs() <= 1e-6 * (hs + 1e-3));
                    }
                }
                assert!((t.hess[0][1] - t.hess[1][0]).abs() <= 1e-14 * (1.0 + t.hess[0][1].abs()));
            }
        }
    }

    #[test]
    fn isotropic_gradient_terms() {
        let t = gradient_contribution([0.0, 0.0], &GradientModel::Isotropic { gamma: 0.1 });
        assert_eq!(t.value, 0.0);
        assert_eq!(t.grad, [0.0, 0.0]);
        assert!((t.hess[0][0] - 0.01).abs() < 1e-17 && t.hess[0][1] == 0.0);
    }

    #[test]
    fn anisotropy_factors() {
        let (g0, delta) = (0.05, 0.9);
        let m = GradientModel::Anisotropic { gamma0: g0, delta };
        let a = 3.0;
        let axis = gradient_contribution([a, 0.0], &m).value;
        assert!(rel_close(axis, g0 * g0 * (1.0 + delta).powi(2) * a * a, 1e-9));
        let diag = gradient_contribution([a, a], &m).value;
        assert!(rel_close(diag, g0 * g0 * (1.0 - delta).powi(2) * 2.0 * a * a, 1e-9));
        let zero = gradient_contribution([0.0, 0.0], &m);
        assert!(zero.value == 0.0 && zero.grad.iter().all(|v| v.is_finite()));
        assert!(zero.hess.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn korteweg() {
        let m = aniso();
        assert_eq!(korteweg_stress([0.0, 0.0], &m), [[0.0; 2]; 2]);
        let iso_m = GradientModel::Isotropic { gamma: 0.5 };
        let s = korteweg_stress([1.0, 2.0], &iso_m);
        assert!((s[0][1] - s[1][0]).abs() < 1e-15);
        assert!((s[0][0] * s[1][1] - s[0][1] * s[1][0]).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let g = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let s = korteweg_stress(g, &m);
            let gg = gradient_contribution(g, &m).grad;
            let tr = gg[0] * g[0] + gg[1] * g[1];
            assert!((s[0][0] + s[1][1] - tr).abs() <= 1e-13 * (1.0 + tr.abs()));
        }
    }

    #[test]
    fn viscosity_values() {
        let p = iso();
        assert!((viscosity(0.0, &p).0 - 1.0).abs() < 1e-15);
        assert!((viscosity(1.0, &p).0 - 0.001).abs() < 1e-18);
        assert!((viscosity(0.5, &p).0 - 0.001 / (0.5 * 0.999 + 0.001)).abs() < 1e-15);
        for phi in [-1.0, 0.1, 0.4, 0.9, 2.0] {
            let (eta, _) = viscosity(phi, &p);
            assert!((0.001..=1.0).contains(&eta));
        }
        let h = 1e-7;
        let fd = (viscosity(0.3 + h, &p).0 - viscosity(0.3 - h, &p).0) / (2.0 * h);
        assert!(rel_close(viscosity(0.3, &p).1, fd, 1e-6));
    }

    #[test]
    fn averaged_derivative_secant_property() {
        let p = iso();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let po = rng.gen_range(-0.4..1.4);
            let pn = rng.gen_range(-0.4..1.4);
            let theta = rng.gen_range(0.2..3.0);
            let avg = time_averaged_dfdphi(pn, po, theta, &p).unwrap();
            let df = potential_f(pn, theta, &p).unwrap().f - potential_f(po, theta, &p).unwrap().f;
            assert!((avg.value * (pn - po) - df).abs() <= 1e-12);
        }
        let same = time_averaged_dfdphi(0.3, 0.3, 1.7, &p).unwrap();
        assert!((same.value - potential_f(0.3, 1.7, &p).unwrap().df_dphi).abs() < 1e-14);
        let mut nolatent = p;
        nolatent.latent = 0.0;
        assert!(time_averaged_dfdphi(1.0, 0.0, 1.0, &nolatent).unwrap().value.abs() < 1e-15);
        assert!(time_averaged_dfdphi(0.5, 0.2, 0.0, &p).is_err());
    }

    #[test]
    fn averaged_derivative_partials() {
        let p = iso();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let h = 1e-6;
        for _ in 0..20 {
            let po = rng.gen_range(-0.3..1.3);
            let pn = rng.gen_range(-0.3..1.3);
            let theta = rng.gen_range(0.3..2.0);
            let a = time_averaged_dfdphi(pn, po, theta, &p).unwrap();
            let f = |x: f64, t: f64| time_averaged_dfdphi(x, po, t, &p).unwrap().value;
            let dn = (f(pn + h, theta) - f(pn - h, theta)) / (2.0 * h);
            let dt = (f(pn, theta + h) - f(pn, theta - h)) / (2.0 * h);
            assert!(rel_close(a.d_phi_new, dn, 1e-6));
            assert!(rel_close(a.d_theta, dt, 1e-6));
        }
    }
}
