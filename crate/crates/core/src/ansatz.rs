//! Phase-dressed ground states, their first-order magnetic correction, the
//! approximate kernel and the cutoffs used by the reduction.
//!
//! For a bump at `ζ_m` with phase `σ_m` and `a = A(ζ_m)`, `J_ij = ∂_j A_i(ζ_m)`,
//! and `s = y − ζ_m/ε`:
//!
//! ```text
//! U_m = w(|s|) e^{iσ_m + i a·y}
//! Ψ_m = i ψ_m e^{iσ_m + i a·y},   ψ_m = ½ sᵀJs w(|s|)
//! 𝒲   = Σ_m U_m + ε Ψ_m
//! ```

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Mat3, PotentialModel, Vec3};
use crate::grid::{Grid, Patch, PatchedField, RealField};
use crate::operators::{laplacian_patch, MagneticOperator, DEFAULT_STENCIL_ORDER};
use crate::radial::RadialProfile;
use crate::stencil::Stencil;

pub const DEFAULT_HALF_WIDTH: f64 = 24.0;
pub const DEFAULT_SPACING: f64 = 0.1;
/// Radius of the region where the kernel constraints act (`w(8) ≈ 1e-3`).
pub const DEFAULT_CUTOFF_RADIUS: f64 = 8.0;
/// Guard on `h·|A(ζ_m)|` so the carrier phase stays resolved.
pub const PHASE_RESOLUTION_LIMIT: f64 = 0.3;

/// Patch half-width, node spacing and stencil order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGeometry {
    pub half_width: f64,
    pub spacing: f64,
    pub stencil_order: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        Self { half_width: DEFAULT_HALF_WIDTH, spacing: DEFAULT_SPACING, stencil_order: DEFAULT_STENCIL_ORDER }
    }
}

impl PatchGeometry {
    /// Smaller patches for the nonlinear solves (257² nodes in 2-D). The
    /// solver certifies the discrete equation itself, so the coarser profile
    /// resolution does not enter its residual.
    pub fn solver() -> Self {
        Self { half_width: 16.0, spacing: 0.125, stencil_order: 12 }
    }
}

/// Everything that defines an ansatz.
#[derive(Debug, Clone)]
pub struct BumpConfig {
    pub eps: f64,
    pub p: f64,
    pub dim: usize,
    /// Concentration points in `x` units.
    pub centers: Vec<Vec<f64>>,
    pub phases: Vec<f64>,
    pub half_width: f64,
    pub spacing: f64,
    pub stencil_order: usize,
    pub cutoff_radius: f64,
    pub profile: Arc<RadialProfile>,
    pub potential: PotentialModel,
}

impl BumpConfig {
    /// Config with default patch geometry and zero phases.
    pub fn new(eps: f64, profile: Arc<RadialProfile>, potential: PotentialModel, centers: Vec<Vec<f64>>) -> Result<Self> {
        Self::on_geometry(eps, profile, potential, centers, PatchGeometry::default())
    }

    pub fn on_geometry(
        eps: f64,
        profile: Arc<RadialProfile>,
        potential: PotentialModel,
        centers: Vec<Vec<f64>>,
        geometry: PatchGeometry,
    ) -> Result<Self> {
        let cfg = Self {
            eps,
            p: profile.p(),
            dim: profile.dim(),
            phases: vec![0.0; centers.len()],
            centers,
            half_width: geometry.half_width,
            spacing: geometry.spacing,
            stencil_order: geometry.stencil_order,
            cutoff_radius: DEFAULT_CUTOFF_RADIUS,
            profile,
            potential,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps = {} must be positive", self.eps)));
        }
        if self.profile.p() != self.p || self.profile.dim() != self.dim {
            return Err(Error::InvalidInput("profile does not match (p, dim)".into()));
        }
        if self.potential.dim() != self.dim {
            return Err(Error::InvalidInput(format!(
                "potential is {}-dimensional, config is {}-dimensional",
                self.potential.dim(),
                self.dim
            )));
        }
        if self.centers.is_empty() {
            return Err(Error::InvalidInput("need at least one bump".into()));
        }
        if self.phases.len() != self.centers.len() {
            return Err(Error::InvalidInput("one phase per bump required".into()));
        }
        if let Some(s) = self.phases.iter().find(|s| !(0.0..TAU).contains(*s)) {
            return Err(Error::InvalidInput(format!("phase {s} outside [0, 2π)")));
        }
        if self.centers.iter().any(|c| c.len() != self.dim) {
            return Err(Error::InvalidInput("center dimension mismatch".into()));
        }
        if self.stencil_order < 2 || self.stencil_order % 2 != 0 {
            return Err(Error::InvalidInput(format!("stencil order {} must be even", self.stencil_order)));
        }
        if !(self.cutoff_radius > 0.0) || self.cutoff_radius + 1.0 >= self.half_width {
            return Err(Error::BadGeometry(format!(
                "cutoff radius {} needs R + 1 < half-width {}",
                self.cutoff_radius, self.half_width
            )));
        }
        let min_sep = 2.0 * self.half_width + 1.0;
        for i in 0..self.k() {
            for j in i + 1..self.k() {
                let d: f64 =
                    (0..self.dim).map(|d| (self.centers[i][d] - self.centers[j][d]).powi(2)).sum::<f64>().sqrt();
                if d / self.eps < min_sep {
                    return Err(Error::BadGeometry(format!(
                        "bumps {i} and {j} are {:.3} apart in y, need {min_sep}",
                        d / self.eps
                    )));
                }
            }
        }
        for m in 0..self.k() {
            let a = self.potential.value(&self.centers[m]);
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if self.spacing * na >= PHASE_RESOLUTION_LIMIT {
                return Err(Error::BadGeometry(format!(
                    "h·|A(ζ_{m})| = {:.3} exceeds {PHASE_RESOLUTION_LIMIT}; recenter the gauge or refine",
                    self.spacing * na
                )));
            }
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut out = self.clone();
        out.eps = eps;
        out.validate()?;
        Ok(out)
    }

    pub fn with_centers(&self, centers: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = self.clone();
        out.centers = centers;
        out.phases.resize(out.centers.len(), 0.0);
        out.validate()?;
        Ok(out)
    }

    /// Same bumps on other patches.
    pub fn with_geometry(&self, geometry: PatchGeometry) -> Result<Self> {
        let mut out = self.clone();
        out.half_width = geometry.half_width;
        out.spacing = geometry.spacing;
        out.stencil_order = geometry.stencil_order;
        out.validate()?;
        Ok(out)
    }

    pub fn geometry(&self) -> PatchGeometry {
        PatchGeometry { half_width: self.half_width, spacing: self.spacing, stencil_order: self.stencil_order }
    }

    /// `ζ'_m = ζ_m/ε`, the bump center in `y` units.
    pub fn scaled_center(&self, m: usize) -> Vec<f64> {
        self.centers[m].iter().map(|c| c / self.eps).collect()
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        let patches = (0..self.k())
            .map(|m| Patch::new(&self.scaled_center(m), self.half_width, self.spacing))
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(Grid::new(patches)?))
    }

    /// Upper bound for the tails of other bumps neglected on each patch.
    pub fn dropped_tail_bound(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.k() {
            for j in 0..self.k() {
                if i == j {
                    continue;
                }
                let d: f64 =
                    (0..self.dim).map(|d| (self.centers[i][d] - self.centers[j][d]).powi(2)).sum::<f64>().sqrt();
                let gap = d / self.eps - self.half_width * (self.dim as f64).sqrt();
                worst = worst.max(self.profile.eval(gap.max(0.0)).0);
            }
        }
        worst
    }

    /// Magnetic operator for this config on `grid`.
    pub fn operator(&self, grid: &Arc<Grid>) -> MagneticOperator {
        MagneticOperator::new(grid.clone(), &self.potential, self.eps, self.stencil_order)
    }

    pub(crate) fn local(&self, m: usize) -> BumpLocal {
        let d = self.potential.derivs(&self.centers[m]);
        let center = self.scaled_center(m);
        let phase0 = self.phases[m] + (0..self.dim).map(|i| d.value[i] * center[i]).sum::<f64>();
        BumpLocal { a: d.value, jac: d.jac, phase0 }
    }
}

/// Data of bump `m` evaluated at its center.
pub(crate) struct BumpLocal {
    pub(crate) a: Vec3,
    pub(crate) jac: Mat3,
    /// `σ_m + a·ζ'_m`
    pub(crate) phase0: f64,
}

impl BumpLocal {
    pub(crate) fn phase(&self, s: &[f64; 3], dim: usize) -> Complex64 {
        let theta = self.phase0 + (0..dim).map(|i| self.a[i] * s[i]).sum::<f64>();
        Complex64::from_polar(1.0, theta)
    }

    /// `½ sᵀJs`
    pub(crate) fn quad(&self, s: &[f64; 3], dim: usize) -> f64 {
        let mut q = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                q += self.jac[i][j] * s[i] * s[j];
            }
        }
        0.5 * q
    }
}

pub(crate) fn radius(s: &[f64; 3]) -> f64 {
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

fn on_patch<F>(grid: &Arc<Grid>, m: usize, f: F) -> PatchedField
where
    F: Fn(&[f64; 3]) -> Complex64,
{
    PatchedField::from_fn(grid.clone(), |k, p, i| if k == m { f(&p.offset(i)) } else { Complex64::default() })
}

fn check_index(cfg: &BumpConfig, m: usize) -> Result<()> {
    if m >= cfg.k() {
        return Err(Error::InvalidInput(format!("bump index {m} out of range (K = {})", cfg.k())));
    }
    Ok(())
}

/// `U_m` on patch `m`, zero elsewhere.
pub fn build_bump(cfg: &BumpConfig, m: usize) -> Result<PatchedField> {
    check_index(cfg, m)?;
    let grid = cfg.grid()?;
    Ok(build_bump_on(cfg, &grid, m))
}

pub fn build_bump_on(cfg: &BumpConfig, grid: &Arc<Grid>, m: usize) -> PatchedField {
    let loc = cfg.local(m);
    on_patch(grid, m, |s| loc.phase(s, cfg.dim) * cfg.profile.eval(radius(s)).0)
}

/// `Ψ_m` on patch `m`, zero elsewhere.
pub fn build_correction(cfg: &BumpConfig, m: usize) -> Result<PatchedField> {
    check_index(cfg, m)?;
    let grid = cfg.grid()?;
    Ok(build_correction_on(cfg, &grid, m))
}

pub fn build_correction_on(cfg: &BumpConfig, grid: &Arc<Grid>, m: usize) -> PatchedField {
    let loc = cfg.local(m);
    on_patch(grid, m, |s| {
        let psi = loc.quad(s, cfg.dim) * cfg.profile.eval(radius(s)).0;
        Complex64::i() * loc.phase(s, cfg.dim) * psi
    })
}

/// `𝒲 = Σ_m U_m + εΨ_m`.
pub fn build_ansatz(cfg: &BumpConfig) -> Result<PatchedField> {
    let grid = cfg.grid()?;
    Ok(build_ansatz_on(cfg, &grid))
}

pub fn build_ansatz_on(cfg: &BumpConfig, grid: &Arc<Grid>) -> PatchedField {
    let locs: Vec<BumpLocal> = (0..cfg.k()).map(|m| cfg.local(m)).collect();
    PatchedField::from_fn(grid.clone(), |m, p, i| {
        let s = p.offset(i);
        let loc = &locs[m];
        let w = cfg.profile.eval(radius(&s)).0;
        loc.phase(&s, cfg.dim) * Complex64::new(w, cfg.eps * loc.quad(&s, cfg.dim) * w)
    })
}

/// `[Z_{m,0}, Z_{m,1}, …, Z_{m,N}]` on patch `m`: `Z_{m,0} = iU_m` and
/// `Z_{m,i} = ∂w(|y − ζ'_m|)/∂ζ'_{m,i} · e^{iσ_m + ia·y} = −w'(r) s_i/r · phase`.
pub fn build_kernel_basis(cfg: &BumpConfig, m: usize) -> Result<Vec<PatchedField>> {
    check_index(cfg, m)?;
    let grid = cfg.grid()?;
    Ok(build_kernel_basis_on(cfg, &grid, m))
}

pub fn build_kernel_basis_on(cfg: &BumpConfig, grid: &Arc<Grid>, m: usize) -> Vec<PatchedField> {
    let loc = cfg.local(m);
    let mut out = Vec::with_capacity(cfg.dim + 1);
    out.push(on_patch(grid, m, |s| Complex64::i() * loc.phase(s, cfg.dim) * cfg.profile.eval(radius(s)).0));
    for i in 0..cfg.dim {
        out.push(on_patch(grid, m, |s| {
            let r = radius(s);
            // w'(r)/r → w''(0) at the origin, where s_i = 0 anyway
            let dw_over_r = if r > 0.0 { cfg.profile.eval(r).1 / r } else { cfg.profile.curvature_at_origin() };
            loc.phase(s, cfg.dim) * (-dw_over_r * s[i])
        }));
    }
    out
}

/// Cubic smoothstep ramp: 1 for `|s| ≤ R`, 0 for `|s| ≥ R + 1`.
pub fn smoothstep_cutoff(dist: f64, radius: f64) -> f64 {
    let t = (dist - radius).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

/// `χ_m` on patch `m`, zero elsewhere.
pub fn cutoff(cfg: &BumpConfig, m: usize, radius_r: f64) -> Result<RealField> {
    check_index(cfg, m)?;
    let grid = cfg.grid()?;
    cutoff_on(cfg, &grid, m, radius_r)
}

pub fn cutoff_on(cfg: &BumpConfig, grid: &Arc<Grid>, m: usize, radius_r: f64) -> Result<RealField> {
    if !(radius_r > 0.0) || radius_r + 1.0 >= cfg.half_width {
        return Err(Error::BadGeometry(format!("cutoff radius {radius_r} needs R + 1 < {}", cfg.half_width)));
    }
    Ok(RealField::from_fn(grid.clone(), |k, p, i| if k == m { smoothstep_cutoff(radius(&p.offset(i)), radius_r) } else { 0.0 }))
}

/// Max interior residual of the discrete identity for `Ψ_ij = ½ s_i s_j w`:
///
/// ```text
/// −ΔΨ_ij + Ψ_ij − w^{p−1}Ψ_ij = −2 s_j ∂_i w − δ_ij w
/// ```
///
/// `with_w_term = false` drops the `−δ_ij w` term (a negative control).
/// Nodes with `|s| > L − 2` are excluded.
pub fn correction_ode_residual(cfg: &BumpConfig, m: usize, i: usize, j: usize, with_w_term: bool) -> Result<f64> {
    check_index(cfg, m)?;
    if i >= cfg.dim || j >= cfg.dim {
        return Err(Error::InvalidInput(format!("index pair ({i}, {j}) out of range")));
    }
    let patch = Patch::new(&cfg.scaled_center(m), cfg.half_width, cfg.spacing)?;
    let stencil = Stencil::new(cfg.stencil_order);
    let p = cfg.p;
    let vals: Vec<(f64, f64, [f64; 3])> = (0..patch.len())
        .map(|k| {
            let s = patch.offset(k);
            let (w, dw) = cfg.profile.eval(radius(&s));
            (w, dw, s)
        })
        .collect();
    let psi: Vec<f64> = vals.iter().map(|(w, _, s)| 0.5 * s[i] * s[j] * w).collect();
    let lap = laplacian_patch(&patch, &stencil, &psi);
    let inner = patch.half_width() - 2.0;
    let mut worst: f64 = 0.0;
    for (k, (w, dw, s)) in vals.iter().enumerate() {
        let r = radius(s);
        if r > inner {
            continue;
        }
        let di_w = if r > 0.0 { dw * s[i] / r } else { 0.0 };
        let mut rhs = -2.0 * s[j] * di_w;
        if i == j && with_w_term {
            rhs -= w;
        }
        let lhs = -lap[k] + psi[k] - w.powf(p - 1.0) * psi[k];
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Largest residual of the `Ψ_ij` identities over all index pairs.
pub fn verify_correction_ode(cfg: &BumpConfig, m: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..cfg.dim {
        for j in 0..cfg.dim {
            worst = worst.max(correction_ode_residual(cfg, m, i, j, true)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_potential, ParamValue, Params};
    use crate::grid::{inner, l2_norm};
    use crate::radial::solve_ground_state;
    use std::sync::OnceLock;

    fn profile2() -> Arc<RadialProfile> {
        static P: OnceLock<Arc<RadialProfile>> = OnceLock::new();
        P.get_or_init(|| Arc::new(solve_ground_state(3.0, 2, 40.0, 1e-10).unwrap())).clone()
    }

    fn bump_model() -> PotentialModel {
        make_potential("gaussian_bump", &Params::new()).unwrap()
    }

    fn cfg_with(model: PotentialModel, center: Vec<f64>, eps: f64) -> BumpConfig {
        let mut c = BumpConfig::new(eps, profile2(), model, vec![center]).unwrap();
        c.half_width = 16.0;
        c.spacing = 0.5;
        c
    }

    #[test]
    fn bump_peak_and_modulus() {
        let mut cfg = cfg_with(bump_model(), vec![0.5, 0.2], 0.1);
        cfg.phases = vec![1.0];
        let u = build_bump(&cfg, 0).unwrap();
        let p = &u.grid().patches()[0];
        assert!((u.patch_values(0)[p.center_index()].norm() - cfg.profile.w0()).abs() < 1e-14);
        for (i, z) in u.patch_values(0).iter().enumerate() {
            let r = radius(&p.offset(i));
            assert!((z.norm() - cfg.profile.eval(r).0).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_phase_gives_imaginary_bump() {
        let model = make_potential("constant", &[("a".to_string(), ParamValue::Vector(vec![0.0, 0.0]))].into()).unwrap();
        let mut cfg = cfg_with(model, vec![0.0, 0.0], 0.1);
        cfg.phases = vec![std::f64::consts::FRAC_PI_2];
        let u = build_bump(&cfg, 0).unwrap();
        assert!(u.patch_values(0).iter().all(|z| z.re.abs() < 1e-15 && z.im >= 0.0));
    }

    #[test]
    fn correction_is_orthogonal_to_bump_pointwise() {
        let cfg = cfg_with(bump_model(), vec![1.0, 0.0], 0.1);
        let u = build_bump(&cfg, 0).unwrap();
        let psi = build_correction(&cfg, 0).unwrap();
        assert!(psi.max_abs() > 1e-3);
        for (a, b) in u.patch_values(0).iter().zip(psi.patch_values(0)) {
            assert!((a.conj() * b).re.abs() < 1e-13);
        }
    }

    #[test]
    fn landau_correction_vanishes() {
        let model = make_potential("landau", &[("b".to_string(), ParamValue::Scalar(1.0))].into()).unwrap();
        let cfg = cfg_with(model, vec![0.0, 0.0], 0.1);
        assert!(build_correction(&cfg, 0).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn kernel_basis_orthogonality() {
        let mut cfg = cfg_with(bump_model(), vec![0.3, -0.2], 0.1);
        cfg.spacing = 0.25;
        let z = build_kernel_basis(&cfg, 0).unwrap();
        assert_eq!(z.len(), 3);
        for i in 1..3 {
            assert!(inner(&z[0], &z[i]).abs() < 1e-13);
        }
        let grad2 = cfg.profile.radial_integral(|_, r| cfg.profile.eval(r).1.powi(2));
        for i in 1..3 {
            for j in 1..3 {
                let expect = if i == j { grad2 / 2.0 } else { 0.0 };
                assert!((inner(&z[i], &z[j]) - expect).abs() < 1e-6, "{i}{j}");
            }
        }
    }

    #[test]
    fn cutoff_values() {
        let cfg = cfg_with(bump_model(), vec![0.0, 0.0], 0.1);
        assert_eq!(smoothstep_cutoff(7.0, 8.0), 1.0);
        assert_eq!(smoothstep_cutoff(10.0, 8.0), 0.0);
        assert_eq!(smoothstep_cutoff(8.5, 8.0), 0.5);
        assert!(cutoff(&cfg, 0, 15.5).is_err());
        let chi = cutoff(&cfg, 0, 8.0).unwrap();
        assert!(chi.patch_values(0).iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn ansatz_difference_is_linear_in_eps() {
        let base = cfg_with(bump_model(), vec![0.5, 0.0], 0.1);
        let mut ratios = Vec::new();
        for eps in [0.1, 0.05] {
            let cfg = base.with_eps(eps).unwrap();
            let w = build_ansatz(&cfg).unwrap();
            let u = build_bump(&cfg, 0).unwrap();
            let psi = build_correction(&cfg, 0).unwrap();
            let diff = l2_norm(&w.axpy(Complex64::new(-1.0, 0.0), &u));
            ratios.push(diff / (eps * l2_norm(&psi)));
        }
        for r in ratios {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_identity_and_negative_control() {
        let cfg = cfg_with(bump_model(), vec![0.5, 0.0], 0.1);
        let mut cfg = cfg;
        cfg.spacing = 0.1;
        assert!(verify_correction_ode(&cfg, 0).unwrap() < 1e-6);
        assert!(correction_ode_residual(&cfg, 0, 0, 0, false).unwrap() > 0.5);
    }

    #[test]
    fn geometry_validation() {
        let model = make_potential("double_bump", &Params::new()).unwrap();
        let cfg = BumpConfig::new(0.05, profile2(), model.clone(), vec![vec![-2.0, 0.0], vec![2.0, 0.0]]);
        assert!(cfg.is_ok());
        let bad = BumpConfig::new(0.2, profile2(), model, vec![vec![-2.0, 0.0], vec![2.0, 0.0]]);
        assert!(matches!(bad, Err(Error::BadGeometry(_))));
    }
}
