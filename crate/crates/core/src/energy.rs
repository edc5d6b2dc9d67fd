//! Energy functional, its expansion constants and the ε-fits built on it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::ansatz::{build_ansatz_on, BumpConfig};
use crate::error::{Error, Result};
use crate::field::{curl_invariant, gauge_shift, ParamValue, Params};
use crate::grid::{integrate, PatchedField};
use crate::radial::RadialProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `½∫|i∇u + A(εy)u|²`
    pub kinetic: f64,
    /// `½∫|u|²`
    pub mass: f64,
    /// `−(p+1)⁻¹∫|u|^{p+1}`
    pub nonlinear: f64,
    pub total: f64,
}

/// `E(u) = ½∫|i∇u + A(εy)u|² + ½∫|u|² − (p+1)⁻¹∫|u|^{p+1}`.
pub fn energy(u: &PatchedField, cfg: &BumpConfig) -> EnergyBreakdown {
    let op = cfg.operator(u.grid());
    let grad = op.gradient(u);
    let mut g2 = u.map(|_| 0.0);
    for comp in &grad {
        g2 = g2.zip_map(comp, |acc, z| acc + z.norm_sqr());
    }
    let kinetic = 0.5 * integrate(&g2);
    let mass = 0.5 * integrate(&u.map(|z| z.norm_sqr()));
    let nonlinear = -integrate(&u.map(|z| z.norm().powf(cfg.p + 1.0))) / (cfg.p + 1.0);
    EnergyBreakdown { kinetic, mass, nonlinear, total: kinetic + mass + nonlinear }
}

/// Energy of the corrected ansatz `𝒲` for `cfg`.
pub fn ansatz_energy(cfg: &BumpConfig) -> Result<EnergyBreakdown> {
    let grid = cfg.grid()?;
    Ok(energy(&build_ansatz_on(cfg, &grid), cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionConstants {
    /// `(p−1)/(2(p+1)) ∫w^{p+1}`
    pub a0: f64,
    /// `¼∫y₁²w²`
    pub b0: f64,
    pub p: f64,
    pub dim: usize,
}

pub fn expansion_constants(profile: &RadialProfile) -> ExpansionConstants {
    let p = profile.p();
    let n = profile.dim() as f64;
    let int_wp1 = profile.radial_integral(|w, _| w.powf(p + 1.0));
    // ∫y₁²w² = (1/N)∫|y|²w²
    let int_r2w2 = profile.radial_integral(|w, r| r * r * w * w);
    ExpansionConstants { a0: (p - 1.0) / (2.0 * (p + 1.0)) * int_wp1, b0: int_r2w2 / (4.0 * n), p, dim: profile.dim() }
}

/// Log–log least-squares fit `log v = slope·log ε + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub eps_list: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_slope: f64,
    pub intercept: f64,
    /// RMS of the log-residuals.
    pub fit_residual: f64,
}

pub fn loglog_fit(eps_list: &[f64], values: &[f64]) -> Result<ScalingReport> {
    if eps_list.len() != values.len() || eps_list.len() < 2 {
        return Err(Error::IllConditionedFit("need at least two (ε, value) pairs".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("ε list must be positive and strictly decreasing".into()));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::IllConditionedFit("log–log fit needs positive values".into()));
    }
    let xs: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(ScalingReport {
        eps_list: eps_list.to_vec(),
        values: values.to_vec(),
        fitted_slope: slope,
        intercept,
        fit_residual: (rss / n).sqrt(),
    })
}

/// Least squares of `values` against `ε^{2k}`, `k = 0..terms`.
///
/// Returns coefficients and the RMS residual.
pub fn fit_even_powers(eps_list: &[f64], values: &[f64], terms: usize) -> Result<(Vec<f64>, f64)> {
    if eps_list.len() != values.len() || eps_list.len() <= terms {
        return Err(Error::IllConditionedFit(format!(
            "{} points cannot determine {terms} coefficients with a residual",
            eps_list.len()
        )));
    }
    // columns scaled to unit max so the condition number reflects the geometry only
    let scale: Vec<f64> =
        (0..terms).map(|k| eps_list.iter().fold(0.0f64, |m, e| m.max(e.powi(2 * k as i32)))).collect();
    let a = DMatrix::from_fn(eps_list.len(), terms, |i, k| eps_list[i].powi(2 * k as i32) / scale[k]);
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond < 1e10) {
        return Err(Error::IllConditionedFit(format!("design matrix condition number {cond:.3e}")));
    }
    let x = svd.solve(&b, 1e-14).map_err(|e| Error::IllConditionedFit(e.to_string()))?;
    let res = &a * &x - &b;
    let coeffs = (0..terms).map(|k| x[k] / scale[k]).collect();
    Ok((coeffs, (res.norm_squared() / eps_list.len() as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionFit {
    pub eps_list: Vec<f64>,
    pub energies: Vec<f64>,
    pub c0: f64,
    pub c2: f64,
    pub c4: Option<f64>,
    /// `Σ_m Σ_ij (∂_iA_j − ∂_jA_i)²(ζ_m)`
    pub curl_sum: f64,
    /// `c2 / curl_sum` (NaN for a field-free configuration).
    pub ratio: f64,
    pub rms_residual: f64,
}

/// Fit `E(𝒲(ε)) ≈ c0 + c2 ε² (+ c4 ε⁴)` over `eps_list`.
pub fn fit_expansion(cfg: &BumpConfig, eps_list: &[f64], with_quartic: bool) -> Result<ExpansionFit> {
    if eps_list.len() < 4 {
        return Err(Error::IllConditionedFit(format!("need at least 4 ε values, got {}", eps_list.len())));
    }
    let energies = eps_list
        .iter()
        .map(|&e| ansatz_energy(&cfg.with_eps(e)?).map(|b| b.total))
        .collect::<Result<Vec<_>>>()?;
    fit_expansion_values(cfg, eps_list, energies, with_quartic)
}

/// Same as [`fit_expansion`] for energies computed elsewhere.
pub fn fit_expansion_values(
    cfg: &BumpConfig,
    eps_list: &[f64],
    energies: Vec<f64>,
    with_quartic: bool,
) -> Result<ExpansionFit> {
    let terms = if with_quartic { 3 } else { 2 };
    let (coeffs, rms) = fit_even_powers(eps_list, &energies, terms)?;
    let curl_sum: f64 = cfg.centers.iter().map(|z| curl_invariant(&cfg.potential, z)).sum();
    let ratio = if curl_sum > 0.0 { coeffs[1] / curl_sum } else { f64::NAN };
    Ok(ExpansionFit {
        eps_list: eps_list.to_vec(),
        energies,
        c0: coeffs[0],
        c2: coeffs[1],
        c4: with_quartic.then(|| coeffs[2]),
        curl_sum,
        ratio,
        rms_residual: rms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeCheck {
    pub energy: f64,
    pub shifted_energy: f64,
    pub relative_difference: f64,
}

/// Compare `E(𝒲, A)` with `E(𝒲·e^{if(εy)/ε}, A + ∇f)` for `f = c·x`
/// (`linear`, phase `c·y`) or `f = xᵀMx/2` (`quadratic`, phase `ε yᵀMy/2`).
pub fn gauge_check(cfg: &BumpConfig, f_preset: &str, params: &Params) -> Result<GaugeCheck> {
    let shifted_model = gauge_shift(&cfg.potential, f_preset, params)?;
    let dim = cfg.dim;
    let eps = cfg.eps;
    let phase: Box<dyn Fn(&[f64; 3]) -> f64> = match (f_preset, params.get("c"), params.get("M")) {
        ("linear", Some(ParamValue::Vector(c)), _) => {
            let c = c.clone();
            Box::new(move |y| (0..dim).map(|d| c[d] * y[d]).sum())
        }
        ("quadratic", _, Some(ParamValue::Matrix(m))) => {
            let m = m.clone();
            Box::new(move |y| {
                let mut q = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        q += m[i][j] * y[i] * y[j];
                    }
                }
                0.5 * eps * q
            })
        }
        _ => return Err(Error::InvalidInput(format!("gauge `{f_preset}` needs a vector `c` or a matrix `M`"))),
    };
    let grid = cfg.grid()?;
    let u = build_ansatz_on(cfg, &grid);
    let e0 = energy(&u, cfg).total;
    let mut shifted = cfg.clone();
    shifted.potential = shifted_model;
    let v = PatchedField::from_fn(grid.clone(), |m, p, i| u.patch_values(m)[i] * Complex64::from_polar(1.0, phase(&p.node(i))));
    let e1 = energy(&v, &shifted).total;
    Ok(GaugeCheck { energy: e0, shifted_energy: e1, relative_difference: (e1 - e0).abs() / e0.abs() })
}

/// Signed gauge differences `(E' − E)/E` on a halving sequence of spacings
/// and their Romberg extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeRefinement {
    pub spacings: Vec<f64>,
    pub differences: Vec<f64>,
    /// `log₂` of successive difference ratios.
    pub observed_orders: Vec<f64>,
    /// Romberg table, one row per elimination step; the last entry is the estimate.
    pub romberg: Vec<Vec<f64>>,
    pub extrapolated: f64,
}

/// [`gauge_check`] repeated on `spacings` (each half the previous one), with
/// the even powers `h^{order}, h^{order+2}, …` eliminated by Romberg steps.
pub fn gauge_check_refined(
    cfg: &BumpConfig,
    f_preset: &str,
    params: &Params,
    spacings: &[f64],
    order: usize,
) -> Result<GaugeRefinement> {
    if spacings.len() < 2 || spacings.windows(2).any(|w| (w[0] / w[1] - 2.0).abs() > 1e-9) {
        return Err(Error::InvalidInput("refinement needs at least two spacings, each half the previous".into()));
    }
    let differences = spacings
        .iter()
        .map(|&h| {
            let mut geometry = cfg.geometry();
            geometry.spacing = h;
            let gc = gauge_check(&cfg.with_geometry(geometry)?, f_preset, params)?;
            Ok((gc.shifted_energy - gc.energy) / gc.energy)
        })
        .collect::<Result<Vec<f64>>>()?;
    let observed_orders = differences.windows(2).map(|w| (w[0] / w[1]).abs().log2()).collect();
    let mut romberg = vec![differences.clone()];
    let mut power = order as i32;
    while romberg.last().unwrap().len() > 1 {
        let f = 2f64.powi(power);
        let next = romberg.last().unwrap().windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        romberg.push(next);
        power += 2;
    }
    let extrapolated = romberg.last().unwrap()[0];
    Ok(GaugeRefinement { spacings: spacings.to_vec(), differences, observed_orders, romberg, extrapolated })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeRow {
    pub zeta: Vec<f64>,
    pub energy: f64,
    pub curl_invariant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Landscape {
    pub resolution: usize,
    pub rows: Vec<LandscapeRow>,
    pub argmax_energy: usize,
    pub argmax_curl: usize,
}

impl Landscape {
    /// Grid-index distance (max over axes) between the two argmaxes.
    pub fn argmax_cell_distance(&self) -> usize {
        let dim = self.rows[0].zeta.len();
        let mut a = self.argmax_energy;
        let mut b = self.argmax_curl;
        let mut dist = 0;
        for _ in 0..dim {
            dist = dist.max((a % self.resolution).abs_diff(b % self.resolution));
            a /= self.resolution;
            b /= self.resolution;
        }
        dist
    }

    /// Value at a multi-index (row-major, last axis fastest).
    pub fn energy_at(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &k| acc * self.resolution + k);
        self.rows[flat].energy
    }
}

/// `E(𝒲(ζ))` and the curl invariant on a uniform `resolution^N` grid of single-bump centers.
///
/// Each energy is evaluated in the gauge recentred at its own `ζ`.
pub fn landscape_scan(template: &BumpConfig, bounds: &[(f64, f64)], eps: f64, resolution: usize) -> Result<Landscape> {
    let dim = template.dim;
    if bounds.len() != dim || resolution < 2 {
        return Err(Error::InvalidInput("landscape needs one (lo, hi) per axis and resolution ≥ 2".into()));
    }
    if let Some(&(lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidInput(format!("empty scan interval ({lo}, {hi})")));
    }
    let base = template.with_eps(eps)?;
    let total = resolution.pow(dim as u32);
    let mut rows = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut zeta = vec![0.0; dim];
        for d in (0..dim).rev() {
            let k = rem % resolution;
            rem /= resolution;
            let (lo, hi) = bounds[d];
            zeta[d] = lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
        }
        // a gauge centred on each ζ keeps the carrier phase resolved across the box
        let mut cfg = base.clone();
        cfg.centers = vec![zeta.clone()];
        cfg.phases = vec![0.0];
        cfg.potential = template.potential.recentered_at(&zeta);
        cfg.validate()?;
        let e = ansatz_energy(&cfg)?.total;
        rows.push(LandscapeRow { curl_invariant: curl_invariant(&cfg.potential, &zeta), zeta, energy: e });
    }
    let argmax = |f: &dyn Fn(&LandscapeRow) -> f64| {
        (0..rows.len()).max_by(|&a, &b| f(&rows[a]).total_cmp(&f(&rows[b]))).unwrap()
    };
    let argmax_energy = argmax(&|r| r.energy);
    let argmax_curl = argmax(&|r| r.curl_invariant);
    Ok(Landscape { resolution, rows, argmax_energy, argmax_curl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_potential;
    use crate::radial::solve_ground_state;
    use std::sync::{Arc, OnceLock};

    fn profile(dim: usize) -> Arc<RadialProfile> {
        static P: OnceLock<Vec<Arc<RadialProfile>>> = OnceLock::new();
        P.get_or_init(|| (1..=3).map(|d| Arc::new(solve_ground_state(3.0, d, 40.0, 1e-10).unwrap())).collect())[dim - 1]
            .clone()
    }

    #[test]
    fn one_dimensional_constants() {
        let c = expansion_constants(&profile(1));
        assert!((c.a0 - 4.0 / 3.0).abs() < 1e-8, "{}", c.a0);
        assert!((c.b0 - std::f64::consts::PI.powi(2) / 12.0).abs() < 1e-8, "{}", c.b0);
    }

    #[test]
    fn two_and_three_dimensional_constants_match_oracle() {
        let c2 = expansion_constants(&profile(2));
        assert!((c2.a0 - 5.850448262261165).abs() < 1e-6);
        assert!((c2.b0 - 1.7368577038543511).abs() < 1e-6);
        let c3 = expansion_constants(&profile(3));
        assert!((c3.a0 - 18.897251302546042).abs() < 1e-5);
        assert!((c3.b0 - 1.692962131608401).abs() < 1e-6);
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let model = make_potential("landau", &[("b".to_string(), ParamValue::Scalar(1.0))].into()).unwrap();
        let cfg = BumpConfig::new(0.1, profile(2), model, vec![vec![0.0, 0.0]]).unwrap();
        let g = cfg.grid().unwrap();
        let e = energy(&PatchedField::zeros(g), &cfg);
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn ground_state_energy_is_a0() {
        let model = make_potential("constant", &[("a".to_string(), ParamValue::Vector(vec![0.0, 0.0]))].into()).unwrap();
        let cfg = BumpConfig::new(0.1, profile(2), model, vec![vec![0.0, 0.0]]).unwrap();
        let e = ansatz_energy(&cfg).unwrap();
        let a0 = expansion_constants(&profile(2)).a0;
        assert!(((e.total - a0) / a0).abs() < 1e-6, "{} vs {a0}", e.total);
    }

    #[test]
    fn loglog_recovers_power() {
        let eps = [0.2, 0.1, 0.05];
        let vals: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        let rep = loglog_fit(&eps, &vals).unwrap();
        assert!((rep.fitted_slope - 2.0).abs() < 1e-12);
        assert!(loglog_fit(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn even_power_fit() {
        let eps = [0.2, 0.15, 0.1, 0.05, 0.025];
        let vals: Vec<f64> = eps.iter().map(|e: &f64| 1.5 + 0.7 * e * e - 2.0 * e.powi(4)).collect();
        let (c, rms) = fit_even_powers(&eps, &vals, 3).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-12 && (c[1] - 0.7).abs() < 1e-9 && (c[2] + 2.0).abs() < 1e-7);
        assert!(rms < 1e-12);
        assert!(matches!(fit_even_powers(&eps[..2], &vals[..2], 2), Err(Error::IllConditionedFit(_))));
        assert!(fit_even_powers(&[0.1, 0.1, 0.1, 0.1], &[1.0; 4], 2).is_err());
    }
}
