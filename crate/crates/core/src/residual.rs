//! Residual of the corrected ansatz and its closed-form leading part.

use std::sync::Arc;

use num_complex::Complex64;

use crate::ansatz::{build_ansatz_on, radius, BumpConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, PatchedField, RealField};
use crate::operators::MagneticOperator;

/// `(i∇ + A(εy))²u + u − |u|^{p−1}u`
pub fn nonlinear_residual(op: &MagneticOperator, u: &PatchedField, p: f64) -> PatchedField {
    let lap = op.laplacian(u);
    lap.zip_map(u, |l, z| l + z - z * z.norm().powf(p - 1.0))
}

/// Residual `R` of `u` for the equation fixed by `cfg`.
pub fn residual(u: &PatchedField, cfg: &BumpConfig) -> Result<PatchedField> {
    if u.grid().dim() != cfg.dim || u.grid().patches().len() != cfg.k() {
        return Err(Error::InvalidInput("field does not live on the config's grid".into()));
    }
    Ok(nonlinear_residual(&cfg.operator(u.grid()), u, cfg.p))
}

/// Builds `𝒲` and returns it with its residual.
pub fn ansatz_residual(cfg: &BumpConfig) -> Result<(PatchedField, PatchedField)> {
    let grid = cfg.grid()?;
    let w = build_ansatz_on(cfg, &grid);
    let r = nonlinear_residual(&cfg.operator(&grid), &w, cfg.p);
    Ok((w, r))
}

/// The `ε²` parts `(R₁, R₂)` of `R·e^{−iσ_m − iA(ζ_m)·y}` on patch `m`.
///
/// With `J_ij = ∂_jA_i(ζ_m)`, `q = sᵀJs` and `∇w = w'(r)s/r`:
///
/// ```text
/// R₁/ε² = −(Js)·(J+Jᵀ)s w − q (Js)·∇w − ½ tr J q w + |Js|² w − (p−1)/8 q² w^p
/// R₂/ε² = Σ_i Σ_jk ∂_jk A_i s_j s_k ∂_i w + Σ_ij ∂_ij A_i s_j w
/// ```
pub fn residual_leading_order(cfg: &BumpConfig, m: usize) -> Result<(RealField, RealField)> {
    if m >= cfg.k() {
        return Err(Error::InvalidInput(format!("bump index {m} out of range")));
    }
    let grid = cfg.grid()?;
    Ok(leading_order_on(cfg, &grid, m))
}

fn leading_order_on(cfg: &BumpConfig, grid: &Arc<Grid>, m: usize) -> (RealField, RealField) {
    let n = cfg.dim;
    let d = cfg.potential.derivs(&cfg.centers[m]);
    let jac = d.jac;
    let tr: f64 = (0..n).map(|i| jac[i][i]).sum();
    let e2 = cfg.eps * cfg.eps;
    let p = cfg.p;
    let eval = |s: &[f64; 3]| -> (f64, f64) {
        let r = radius(s);
        let (w, dw) = cfg.profile.eval(r);
        let mut js = [0.0; 3];
        let mut sym_s = [0.0; 3];
        let mut grad_w = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                js[i] += jac[i][j] * s[j];
                sym_s[i] += (jac[i][j] + jac[j][i]) * s[j];
            }
            grad_w[i] = if r > 0.0 { dw * s[i] / r } else { 0.0 };
        }
        let q: f64 = (0..n).map(|i| s[i] * js[i]).sum();
        let js_sym: f64 = (0..n).map(|i| js[i] * sym_s[i]).sum();
        let js_gw: f64 = (0..n).map(|i| js[i] * grad_w[i]).sum();
        let js2: f64 = (0..n).map(|i| js[i] * js[i]).sum();
        let r1 = -js_sym * w - q * js_gw - 0.5 * tr * q * w + js2 * w - (p - 1.0) / 8.0 * q * q * w.powf(p);

        let mut r2 = 0.0;
        for i in 0..n {
            let mut hss = 0.0;
            for j in 0..n {
                for k in 0..n {
                    hss += d.hess[i][j][k] * s[j] * s[k];
                }
                r2 += d.hess[i][i][j] * s[j] * w;
            }
            r2 += hss * grad_w[i];
        }
        (e2 * r1, e2 * r2)
    };
    let r1 = RealField::from_fn(grid.clone(), |k, pt, i| if k == m { eval(&pt.offset(i)).0 } else { 0.0 });
    let r2 = RealField::from_fn(grid.clone(), |k, pt, i| if k == m { eval(&pt.offset(i)).1 } else { 0.0 });
    (r1, r2)
}

/// `Σ_m e^{iσ_m + iA(ζ_m)·y}(R₁ + iR₂)` on the config's grid.
pub fn leading_order_field(cfg: &BumpConfig) -> Result<PatchedField> {
    let grid = cfg.grid()?;
    let mut out = PatchedField::zeros(grid.clone());
    for m in 0..cfg.k() {
        let loc = cfg.local(m);
        let (r1, r2) = leading_order_on(cfg, &grid, m);
        let patch = &grid.patches()[m];
        for (i, z) in out.values_mut()[m].iter_mut().enumerate() {
            let s = patch.offset(i);
            *z = loc.phase(&s, cfg.dim) * Complex64::new(r1.patch_values(m)[i], r2.patch_values(m)[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_potential, ParamValue, Params};
    use crate::grid::{l2_norm, real_l2_norm};
    use crate::radial::{solve_ground_state, RadialProfile};
    use std::sync::OnceLock;

    fn profile2() -> Arc<RadialProfile> {
        static P: OnceLock<Arc<RadialProfile>> = OnceLock::new();
        P.get_or_init(|| Arc::new(solve_ground_state(3.0, 2, 40.0, 1e-10).unwrap())).clone()
    }

    #[test]
    fn constant_potential_residual_is_tiny() {
        let model = make_potential("constant", &[("a".to_string(), ParamValue::Vector(vec![0.5, -0.3]))].into()).unwrap();
        let cfg = BumpConfig::new(0.1, profile2(), model, vec![vec![0.2, 0.1]]).unwrap();
        let (_, r) = ansatz_residual(&cfg).unwrap();
        assert!(l2_norm(&r) < 1e-6, "{}", l2_norm(&r));
    }

    #[test]
    fn landau_has_no_imaginary_leading_part() {
        let model = make_potential("landau", &[("b".to_string(), ParamValue::Scalar(1.0))].into()).unwrap();
        let mut cfg = BumpConfig::new(0.1, profile2(), model, vec![vec![0.0, 0.0]]).unwrap();
        cfg.spacing = 0.25;
        let (r1, r2) = residual_leading_order(&cfg, 0).unwrap();
        assert_eq!(r2.max_abs(), 0.0);
        assert!(real_l2_norm(&r1) > 1e-3);
    }

    #[test]
    fn leading_order_captures_residual() {
        let model = make_potential("gaussian_bump", &Params::new()).unwrap();
        let base = BumpConfig::new(0.1, profile2(), model, vec![vec![0.5, 0.0]]).unwrap();
        let mut rel = Vec::new();
        for eps in [0.1, 0.05] {
            let cfg = base.with_eps(eps).unwrap();
            let (_, r) = ansatz_residual(&cfg).unwrap();
            let lead = leading_order_field(&cfg).unwrap();
            rel.push(l2_norm(&r.axpy(Complex64::new(-1.0, 0.0), &lead)) / l2_norm(&r));
        }
        assert!(rel[1] < rel[0] / 1.8, "{rel:?}");
    }
}
