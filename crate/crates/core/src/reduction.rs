//! Lyapunov–Schmidt reduction on the patched grid.
//!
//! The projected linear problem
//!
//! ```text
//! Lφ = h + Σ c_k χZ_k,   ⟨χZ_k, φ⟩ = 0
//! ```
//!
//! is solved as the symmetric saddle-point system `[L B; Bᵀ 0][φ; −c] = [h; 0]`
//! with preconditioned MINRES. `L` is only real-linear, so fields are handled
//! as real vectors `(Re, Im)` with the node-sum inner product, in which both
//! `L` and the sine-transform preconditioner are symmetric.
//!
//! Patches are disjoint and zero-extended, so bumps never couple; each patch
//! keeps its own phase symmetry and `c_{m,0}` vanishes whenever the
//! translation multipliers of that patch do.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::ansatz::{build_ansatz_on, build_kernel_basis_on, cutoff_on, BumpConfig};
use crate::error::{Error, Result};
use crate::grid::{l2_norm, Grid, PatchedField};
use crate::krylov::{minres, SineSolver};
use crate::operators::MagneticOperator;
use crate::residual::nonlinear_residual;
use crate::stencil::Stencil;

/// Below this `|𝒲|` the nonlinear terms of `L` and `N` are dropped.
pub const NONLINEAR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    /// Relative residual of each projected linear solve.
    pub krylov_rtol: f64,
    pub max_krylov: usize,
    /// Restarts of MINRES on the true residual.
    pub max_refinements: usize,
    pub max_inner: usize,
    /// Fixed-point tolerance used inside the outer iteration.
    pub inner_tol: f64,
    pub max_outer: usize,
    /// Forward-difference step for the outer Jacobian, in `x` units.
    pub fd_step: f64,
    /// Newton steps are shortened to this length (in `x` units).
    pub trust_radius: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            krylov_rtol: 1e-10,
            max_krylov: 4000,
            max_refinements: 6,
            max_inner: 60,
            inner_tol: 1e-12,
            max_outer: 40,
            fd_step: 1e-3,
            trust_radius: 0.1,
        }
    }
}

/// `L` at `𝒲`, the constraint basis `χ_mZ_{m,i}` and the preconditioner.
pub struct Linearization {
    cfg: BumpConfig,
    grid: Arc<Grid>,
    op: MagneticOperator,
    w: PatchedField,
    /// `|𝒲|^{p−1}`
    pot: Vec<Vec<f64>>,
    /// `(p−1)|𝒲|^{p−3}𝒲`
    rot: Vec<Vec<Complex64>>,
    /// `(patch, values)` of `χ_mZ_{m,i}`, index `m(N+1) + i`.
    basis: Vec<(usize, Vec<Complex64>)>,
    gram: DMatrix<f64>,
    precond: Vec<SineSolver>,
    schur_inv: DMatrix<f64>,
    offsets: Vec<usize>,
    cell: f64,
}

impl std::fmt::Debug for Linearization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linearization").field("k", &self.cfg.k()).field("nodes", &self.grid.len()).finish()
    }
}

/// Solution of the projected linear problem.
#[derive(Debug, Clone)]
pub struct ProjectedSolve {
    pub phi: PatchedField,
    /// `c[m][i]`, `i = 0` the phase direction.
    pub c: Vec<Vec<f64>>,
    /// `max|c| / ‖rhs‖`
    pub multiplier_bound: f64,
    pub krylov_iterations: usize,
    /// `‖Lφ − rhs − Σcχ Z‖ / ‖rhs‖`
    pub rel_residual: f64,
    /// `max_k |⟨χZ_k, φ⟩|`
    pub constraint_violation: f64,
}

impl Linearization {
    pub fn new(cfg: &BumpConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let w = build_ansatz_on(cfg, &grid);
        let op = cfg.operator(&grid);
        let p = cfg.p;
        let mut pot = Vec::with_capacity(cfg.k());
        let mut rot = Vec::with_capacity(cfg.k());
        for vals in w.values() {
            let (a, b): (Vec<f64>, Vec<Complex64>) = vals
                .iter()
                .map(|&z| {
                    let r = z.norm();
                    if r < NONLINEAR_FLOOR {
                        (0.0, Complex64::default())
                    } else {
                        (r.powf(p - 1.0), z * ((p - 1.0) * r.powf(p - 3.0)))
                    }
                })
                .unzip();
            pot.push(a);
            rot.push(b);
        }
        let mut basis = Vec::new();
        for m in 0..cfg.k() {
            let chi = cutoff_on(cfg, &grid, m, cfg.cutoff_radius)?;
            for z in build_kernel_basis_on(cfg, &grid, m) {
                let vals: Vec<Complex64> = z.patch_values(m).iter().zip(chi.patch_values(m)).map(|(z, c)| z * *c).collect();
                basis.push((m, vals));
            }
        }
        let stencil = Stencil::new(cfg.stencil_order);
        let precond: Vec<SineSolver> = grid.patches().iter().map(|pt| SineSolver::new(pt, &stencil, 1.0)).collect();
        let mut offsets = vec![0];
        for pt in grid.patches() {
            offsets.push(offsets.last().unwrap() + 2 * pt.len());
        }
        let cell = grid.spacing().powi(cfg.dim as i32);

        let nb = basis.len();
        let mut gram = DMatrix::zeros(nb, nb);
        let mut schur = DMatrix::zeros(nb, nb);
        for l in 0..nb {
            let (ml, bl) = (basis[l].0, &basis[l].1);
            let mut pb = bl.clone();
            precond[ml].solve_in_place(&mut pb);
            for k in 0..nb {
                let (mk, bk) = (basis[k].0, &basis[k].1);
                if mk != ml {
                    continue;
                }
                gram[(k, l)] = cell * re_dot(bk, bl);
                schur[(k, l)] = cell * re_dot(bk, &pb);
            }
        }
        let schur_inv = schur
            .try_inverse()
            .ok_or_else(|| Error::BadGeometry("constraint basis is degenerate (cutoff radius too small?)".into()))?;
        Ok(Self { cfg: cfg.clone(), grid, op, w, pot, rot, basis, gram, precond, schur_inv, offsets, cell })
    }

    pub fn cfg(&self) -> &BumpConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn ansatz(&self) -> &PatchedField {
        &self.w
    }

    pub fn operator(&self) -> &MagneticOperator {
        &self.op
    }

    /// The fields `χ_mZ_{m,i}` in multiplier order.
    pub fn constraint_basis(&self) -> Vec<PatchedField> {
        self.basis
            .iter()
            .map(|(m, vals)| {
                let mut f = PatchedField::zeros(self.grid.clone());
                f.values_mut()[*m].copy_from_slice(vals);
                f
            })
            .collect()
    }

    fn apply_patch(&self, m: usize, src: &[Complex64], dst: &mut [Complex64]) {
        self.op.apply_laplacian_patch(m, src, dst);
        let (pot, rot, w) = (&self.pot[m], &self.rot[m], self.w.patch_values(m));
        for i in 0..src.len() {
            let re = (w[i].conj() * src[i]).re;
            dst[i] += src[i] * (1.0 - pot[i]) - rot[i] * re;
        }
    }

    /// `Lφ`
    pub fn apply(&self, phi: &PatchedField) -> PatchedField {
        let mut out = PatchedField::zeros(self.grid.clone());
        for m in 0..self.grid.patches().len() {
            self.apply_patch(m, phi.patch_values(m), &mut out.values_mut()[m]);
        }
        out
    }

    /// `N(φ) = |𝒲+φ|^{p−1}(𝒲+φ) − |𝒲|^{p−1}𝒲 − (p−1)|𝒲|^{p−3}Re(𝒲̄φ)𝒲 − |𝒲|^{p−1}φ`
    pub fn nonlinear_remainder(&self, phi: &PatchedField) -> PatchedField {
        let p = self.cfg.p;
        let mut out = PatchedField::zeros(self.grid.clone());
        for m in 0..self.grid.patches().len() {
            let (pot, rot, w, f) = (&self.pot[m], &self.rot[m], self.w.patch_values(m), phi.patch_values(m));
            for (i, o) in out.values_mut()[m].iter_mut().enumerate() {
                if pot[i] == 0.0 {
                    continue;
                }
                let u = w[i] + f[i];
                let full = u * u.norm().powf(p - 1.0) - w[i] * pot[i];
                *o = full - rot[i] * (w[i].conj() * f[i]).re - f[i] * pot[i];
            }
        }
        out
    }

    fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let split = *self.offsets.last().unwrap();
        let field: f64 = a[..split].iter().zip(&b[..split]).map(|(x, y)| x * y).sum();
        let mult: f64 = a[split..].iter().zip(&b[split..]).map(|(x, y)| x * y).sum();
        self.cell * field + mult
    }

    fn apply_augmented(&self, x: &[f64], y: &mut [f64]) {
        let split = *self.offsets.last().unwrap();
        for (m, pt) in self.grid.patches().iter().enumerate() {
            let off = self.offsets[m];
            let src = unpack(&x[off..off + 2 * pt.len()]);
            let mut dst = vec![Complex64::default(); pt.len()];
            self.apply_patch(m, &src, &mut dst);
            for (k, (bm, b)) in self.basis.iter().enumerate() {
                if *bm == m {
                    let lam = x[split + k];
                    for (d, bv) in dst.iter_mut().zip(b) {
                        *d += bv * lam;
                    }
                }
            }
            pack(&dst, &mut y[off..off + 2 * pt.len()]);
        }
        for (k, (m, b)) in self.basis.iter().enumerate() {
            let off = self.offsets[*m];
            let f = &x[off..off + 2 * b.len()];
            let mut s = 0.0;
            for (i, bv) in b.iter().enumerate() {
                s += bv.re * f[2 * i] + bv.im * f[2 * i + 1];
            }
            y[split + k] = self.cell * s;
        }
    }

    fn apply_precond(&self, x: &[f64], y: &mut [f64]) {
        let split = *self.offsets.last().unwrap();
        for (m, pt) in self.grid.patches().iter().enumerate() {
            let off = self.offsets[m];
            let mut v = unpack(&x[off..off + 2 * pt.len()]);
            self.precond[m].solve_in_place(&mut v);
            pack(&v, &mut y[off..off + 2 * pt.len()]);
        }
        let lam = DVector::from_column_slice(&x[split..]);
        let out = &self.schur_inv * lam;
        y[split..].copy_from_slice(out.as_slice());
    }

    fn to_flat(&self, field: &PatchedField, cons: &[f64]) -> Vec<f64> {
        let split = *self.offsets.last().unwrap();
        let mut v = vec![0.0; split + cons.len()];
        for m in 0..self.grid.patches().len() {
            let off = self.offsets[m];
            let vals = field.patch_values(m);
            pack(vals, &mut v[off..off + 2 * vals.len()]);
        }
        v[split..].copy_from_slice(cons);
        v
    }

    fn field_from_flat(&self, x: &[f64]) -> PatchedField {
        let values = self
            .grid
            .patches()
            .iter()
            .enumerate()
            .map(|(m, pt)| unpack(&x[self.offsets[m]..self.offsets[m] + 2 * pt.len()]))
            .collect();
        PatchedField::from_values(self.grid.clone(), values).expect("flat layout matches grid")
    }

    /// `⟨χZ_k, φ⟩` for every `k`.
    pub fn constraints(&self, phi: &PatchedField) -> Vec<f64> {
        self.basis.iter().map(|(m, b)| self.cell * re_dot(b, phi.patch_values(*m))).collect()
    }

    /// Remove the components of `phi` along the constraint basis.
    fn project(&self, phi: &mut PatchedField) {
        let g = DVector::from_vec(self.constraints(phi));
        let alpha = match self.gram.clone().lu().solve(&g) {
            Some(a) => a,
            None => return,
        };
        for (k, (m, b)) in self.basis.iter().enumerate() {
            for (v, bv) in phi.values_mut()[*m].iter_mut().zip(b) {
                *v -= bv * alpha[k];
            }
        }
    }

    /// Solve `[L B; Bᵀ 0][φ; λ] = [rhs; 0]` starting from `phi0` until the
    /// true residual is below `abs_tol`. Returns `(φ, c = −λ, iterations)`.
    fn solve_augmented(
        &self,
        rhs: &PatchedField,
        phi0: Option<&PatchedField>,
        abs_tol: f64,
        settings: &SolverSettings,
    ) -> Result<(PatchedField, Vec<f64>, usize, f64)> {
        let nb = self.basis.len();
        let b = self.to_flat(rhs, &vec![0.0; nb]);
        let mut x = match phi0 {
            Some(f) => self.to_flat(f, &vec![0.0; nb]),
            None => vec![0.0; b.len()],
        };
        let mut r = vec![0.0; b.len()];
        let mut total = 0;
        let mut res = f64::INFINITY;
        for _ in 0..=settings.max_refinements {
            self.apply_augmented(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
            res = self.weighted_dot(&r, &r).sqrt();
            if res <= abs_tol {
                break;
            }
            let rtol = (0.5 * abs_tol / res).clamp(1e-14, 0.5);
            let budget = settings.max_krylov.saturating_sub(total).max(1);
            let out = minres(
                &r,
                |v, y| self.apply_augmented(v, y),
                |v, y| self.apply_precond(v, y),
                |a, b| self.weighted_dot(a, b),
                rtol,
                budget,
            )?;
            total += out.iterations;
            for (xi, di) in x.iter_mut().zip(&out.x) {
                *xi += di;
            }
        }
        if res > abs_tol {
            return Err(Error::KrylovStall { iterations: total, residual: res });
        }
        let split = *self.offsets.last().unwrap();
        let c = x[split..].iter().map(|l| -l).collect();
        Ok((self.field_from_flat(&x), c, total, res))
    }

    /// Projected linear solve for a right-hand side `rhs`.
    pub fn solve_projected(&self, rhs: &PatchedField, settings: &SolverSettings) -> Result<ProjectedSolve> {
        if !rhs.is_finite() {
            return Err(Error::InvalidInput("right-hand side is not finite".into()));
        }
        let rhs_norm = self.cell.sqrt() * flat_norm(rhs);
        if rhs_norm == 0.0 {
            return Ok(ProjectedSolve {
                phi: PatchedField::zeros(self.grid.clone()),
                c: self.table(&vec![0.0; self.basis.len()]),
                multiplier_bound: 0.0,
                krylov_iterations: 0,
                rel_residual: 0.0,
                constraint_violation: 0.0,
            });
        }
        let (mut phi, c, its, _) = self.solve_augmented(rhs, None, settings.krylov_rtol * rhs_norm, settings)?;
        self.project(&mut phi);
        let rel = self.linear_residual(&phi, rhs, &c) / rhs_norm;
        let violation = self.constraints(&phi).iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let cmax = c.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        Ok(ProjectedSolve {
            phi,
            c: self.table(&c),
            multiplier_bound: cmax / rhs_norm,
            krylov_iterations: its,
            rel_residual: rel,
            constraint_violation: violation,
        })
    }

    /// `‖Lφ − rhs − Σ c_k χZ_k‖` in the node-sum norm.
    fn linear_residual(&self, phi: &PatchedField, rhs: &PatchedField, c: &[f64]) -> f64 {
        let mut r = self.apply(phi).axpy(Complex64::new(-1.0, 0.0), rhs);
        self.subtract_multipliers(&mut r, c);
        self.cell.sqrt() * flat_norm(&r)
    }

    fn subtract_multipliers(&self, r: &mut PatchedField, c: &[f64]) {
        for (k, (m, b)) in self.basis.iter().enumerate() {
            for (v, bv) in r.values_mut()[*m].iter_mut().zip(b) {
                *v -= bv * c[k];
            }
        }
    }

    fn table(&self, c: &[f64]) -> Vec<Vec<f64>> {
        c.chunks(self.cfg.dim + 1).map(|s| s.to_vec()).collect()
    }
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn flat_norm(u: &PatchedField) -> f64 {
    u.values().iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn pack(src: &[Complex64], dst: &mut [f64]) {
    for (i, z) in src.iter().enumerate() {
        dst[2 * i] = z.re;
        dst[2 * i + 1] = z.im;
    }
}

fn unpack(src: &[f64]) -> Vec<Complex64> {
    src.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// `Lφ` for the linearization at the ansatz of `cfg`.
pub fn apply_linearized(phi: &PatchedField, cfg: &BumpConfig) -> Result<PatchedField> {
    let lin = Linearization::new(cfg)?;
    if phi.grid().dim() != cfg.dim || **phi.grid() != **lin.grid() {
        return Err(Error::InvalidInput("field does not live on the config's grid".into()));
    }
    Ok(lin.apply(phi))
}

/// One-shot projected solve with default settings.
pub fn solve_projected(rhs: &PatchedField, cfg: &BumpConfig) -> Result<ProjectedSolve> {
    let lin = Linearization::new(cfg)?;
    if **rhs.grid() != **lin.grid() {
        return Err(Error::InvalidInput("right-hand side does not live on the config's grid".into()));
    }
    lin.solve_projected(rhs, &SolverSettings::default())
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionState {
    #[serde(skip)]
    pub cfg: BumpConfig,
    #[serde(skip)]
    pub phi: PatchedField,
    pub c: Vec<Vec<f64>>,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub krylov_iters: usize,
    /// `‖S(𝒲+φ) − Σ c χZ‖_{L²}`, the residual of the projected nonlinear problem.
    pub residual_norm: f64,
    pub phi_norm: f64,
    /// `‖φ_{k+1} − φ_k‖ / ‖φ_k − φ_{k−1}‖` per iteration.
    pub contraction_ratios: Vec<f64>,
    pub multiplier_bound: f64,
}

impl ReductionState {
    pub fn max_multiplier(&self) -> f64 {
        self.c.iter().flatten().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

/// Fixed point `φ ↦ T(−R + N(φ))` at tolerance `tol` on `‖Δφ‖_{L²}`.
pub fn solve_inner(cfg: &BumpConfig, tol: f64) -> Result<ReductionState> {
    let lin = Linearization::new(cfg)?;
    solve_inner_with(&lin, None, tol, &SolverSettings::default())
}

/// [`solve_inner`] on a prepared linearization, optionally warm-started.
pub fn solve_inner_with(
    lin: &Linearization,
    phi0: Option<&PatchedField>,
    tol: f64,
    settings: &SolverSettings,
) -> Result<ReductionState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let w = lin.ansatz();
    let neg_r = nonlinear_residual(lin.operator(), w, lin.cfg.p).scale(Complex64::new(-1.0, 0.0));
    let rhs_scale = lin.cell.sqrt() * flat_norm(&neg_r);
    // linear solves are kept well below the fixed-point tolerance, down to
    // the round-off floor of the operator
    let lin_tol = |norm: f64| (settings.krylov_rtol * norm).min(1e-3 * tol * lin.cell.sqrt()).max(1e-13 * rhs_scale);

    let start = phi0.filter(|f| **f.grid() == **lin.grid()).cloned();
    let mut phi = start.clone().unwrap_or_else(|| PatchedField::zeros(lin.grid.clone()));
    let mut rhs = neg_r.axpy(Complex64::new(1.0, 0.0), &lin.nonlinear_remainder(&phi));
    let (mut next, mut c, mut krylov, _) = lin.solve_augmented(&rhs, start.as_ref(), lin_tol(rhs_scale), settings)?;
    lin.project(&mut next);

    let mut ratios = Vec::new();
    let mut prev_diff = f64::INFINITY;
    let mut growth = 0;
    let mut iters = 0;
    loop {
        iters += 1;
        let diff = l2_norm(&next.axpy(Complex64::new(-1.0, 0.0), &phi));
        if prev_diff.is_finite() {
            ratios.push(diff / prev_diff);
        }
        phi = next;
        if !diff.is_finite() {
            return Err(Error::ContractionFailure { iterations: iters, ratio: f64::NAN });
        }
        if diff < tol {
            break;
        }
        if diff >= prev_diff {
            growth += 1;
            if growth >= 3 {
                return Err(Error::ContractionFailure { iterations: iters, ratio: diff / prev_diff });
            }
        } else {
            growth = 0;
        }
        if iters >= settings.max_inner {
            return Err(Error::ContractionFailure { iterations: iters, ratio: ratios.last().copied().unwrap_or(f64::NAN) });
        }
        prev_diff = diff;
        // T is linear: solve only for the change of the right-hand side
        let new_rhs = neg_r.axpy(Complex64::new(1.0, 0.0), &lin.nonlinear_remainder(&phi));
        let delta = new_rhs.axpy(Complex64::new(-1.0, 0.0), &rhs);
        let dnorm = lin.cell.sqrt() * flat_norm(&delta);
        let (dphi, dc, its, _) = lin.solve_augmented(&delta, None, lin_tol(dnorm), settings)?;
        krylov += its;
        next = phi.axpy(Complex64::new(1.0, 0.0), &dphi);
        lin.project(&mut next);
        for (ci, di) in c.iter_mut().zip(&dc) {
            *ci += di;
        }
        rhs = new_rhs;
    }

    let u = w.axpy(Complex64::new(1.0, 0.0), &phi);
    let mut full = nonlinear_residual(lin.operator(), &u, lin.cfg.p);
    lin.subtract_multipliers(&mut full, &c);
    let cmax = c.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    Ok(ReductionState {
        cfg: lin.cfg.clone(),
        phi_norm: l2_norm(&phi),
        phi,
        c: lin.table(&c),
        inner_iters: iters,
        outer_iters: 0,
        krylov_iters: krylov,
        residual_norm: l2_norm(&full),
        contraction_ratios: ratios,
        multiplier_bound: cmax / l2_norm(&neg_r).max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub centers: Vec<Vec<f64>>,
    pub max_multiplier: f64,
    pub inner_iters: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OuterResult {
    pub cfg: BumpConfig,
    pub state: ReductionState,
    pub u: PatchedField,
    /// `‖(i∇+A)²u + u − |u|^{p−1}u‖_{L²}` on the grid.
    pub full_residual: f64,
    /// Peaks of `|u|` in `x` units, one per bump.
    pub peaks: Vec<Vec<f64>>,
    pub history: Vec<OuterStep>,
}

/// Translation multipliers `c_{m,i}`, `i ≥ 1`, flattened.
fn translation_part(state: &ReductionState) -> DVector<f64> {
    DVector::from_iterator(
        state.c.len() * (state.c[0].len() - 1),
        state.c.iter().flat_map(|row| row[1..].iter().copied()),
    )
}

fn shifted_centers(centers: &[Vec<f64>], step: &DVector<f64>, t: f64) -> Vec<Vec<f64>> {
    let n = centers[0].len();
    centers.iter().enumerate().map(|(m, c)| (0..n).map(|d| c[d] + t * step[m * n + d]).collect()).collect()
}

/// Drive all multipliers to zero by moving the bump centers.
///
/// The map `ζ ↦ (c_{m,i})_{i ≥ 1}` is solved by Newton's method with a
/// forward-difference Jacobian, Broyden updates and backtracking.
pub fn reduce_outer(cfg0: &BumpConfig, tol: f64, settings: &SolverSettings) -> Result<OuterResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let inner_tol = settings.inner_tol.min(tol);
    let eval = |centers: &[Vec<f64>], warm: Option<&PatchedField>| -> Result<ReductionState> {
        let cfg = cfg0.with_centers(centers.to_vec())?;
        let lin = Linearization::new(&cfg)?;
        solve_inner_with(&lin, warm, inner_tol, settings)
    };
    let in_box = |centers: &[Vec<f64>]| centers.iter().all(|c| cfg0.potential.in_working_box(c));

    let mut centers = cfg0.centers.clone();
    if !in_box(&centers) {
        return Err(Error::SeedRejected(format!("seed {centers:?} outside the working box")));
    }
    let mut state = eval(&centers, None).map_err(|e| Error::SeedRejected(format!("inner solve at the seed failed: {e}")))?;
    let nvar = centers.len() * cfg0.dim;
    let mut history = vec![OuterStep {
        iteration: 0,
        centers: centers.clone(),
        max_multiplier: state.max_multiplier(),
        inner_iters: state.inner_iters,
        residual_norm: state.residual_norm,
    }];
    let mut jac: Option<DMatrix<f64>> = None;
    let mut fresh = false;
    let mut outer = 0;
    while state.max_multiplier() >= tol {
        if outer >= settings.max_outer {
            return Err(Error::OuterDivergence(format!(
                "max|c| = {:.3e} after {outer} iterations",
                state.max_multiplier()
            )));
        }
        outer += 1;
        let f = translation_part(&state);
        if jac.is_none() {
            let mut j = DMatrix::zeros(nvar, nvar);
            for v in 0..nvar {
                let mut e = DVector::zeros(nvar);
                e[v] = 1.0;
                let probe = eval(&shifted_centers(&centers, &e, settings.fd_step), Some(&state.phi))?;
                j.set_column(v, &((translation_part(&probe) - &f) / settings.fd_step));
            }
            jac = Some(j);
            fresh = true;
        }
        let j = jac.as_ref().unwrap();
        let step = j
            .clone()
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| Error::OuterDivergence("singular multiplier Jacobian (degenerate critical point?)".into()))?;
        let len = step.norm();
        let step = if len > settings.trust_radius { step * (settings.trust_radius / len) } else { step };
        let fnorm = f.amax();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let trial = shifted_centers(&centers, &step, t);
            if !in_box(&trial) {
                t *= 0.5;
                continue;
            }
            let st = eval(&trial, Some(&state.phi))?;
            if translation_part(&st).amax() < fnorm || st.max_multiplier() < tol {
                accepted = Some((trial, st));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, st)) = accepted else {
            if !fresh {
                // stale Broyden model: rebuild the Jacobian before giving up
                jac = None;
                continue;
            }
            return Err(Error::OuterDivergence(format!("no decrease of max|c| = {fnorm:.3e} along the Newton direction")));
        };
        let s = &step * t;
        let df = translation_part(&st) - &f;
        let js = jac.as_ref().unwrap() * &s;
        let ss = s.dot(&s);
        if ss > 0.0 {
            let upd = (df - js) * s.transpose() / ss;
            jac = Some(jac.take().unwrap() + upd);
            fresh = false;
        }
        centers = trial;
        state = st;
        history.push(OuterStep {
            iteration: outer,
            centers: centers.clone(),
            max_multiplier: state.max_multiplier(),
            inner_iters: state.inner_iters,
            residual_norm: state.residual_norm,
        });
    }
    state.outer_iters = outer;
    let cfg = state.cfg.clone();
    let lin_grid = state.phi.grid().clone();
    let w = build_ansatz_on(&cfg, &lin_grid);
    let u = w.axpy(Complex64::new(1.0, 0.0), &state.phi);
    let full_residual = l2_norm(&nonlinear_residual(&cfg.operator(&lin_grid), &u, cfg.p));
    let peaks = peak_location(&u).points.iter().map(|y| y.iter().map(|v| v * cfg.eps).collect()).collect();
    Ok(OuterResult { cfg, state, u, full_residual, peaks, history })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakReport {
    /// One point per patch, in `y` units.
    pub points: Vec<Vec<f64>>,
    /// Set when `u` vanishes identically; points are then the patch centers.
    pub zero_field: bool,
}

/// Per patch, the maximum of `|u|` refined by a least-squares quadratic over
/// the `3^N` neighbourhood of the largest node.
pub fn peak_location(u: &PatchedField) -> PeakReport {
    let grid = u.grid();
    let zero_field = u.max_abs() == 0.0;
    let mut points = Vec::with_capacity(grid.patches().len());
    for (m, pt) in grid.patches().iter().enumerate() {
        let vals = u.patch_values(m);
        if zero_field {
            points.push(pt.center().to_vec());
            continue;
        }
        let (imax, _) = vals.iter().enumerate().fold((0, -1.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
        let node = pt.node(imax);
        let dim = pt.dim();
        let h = pt.spacing();
        let mi = pt.multi_index(imax);
        let n = pt.nodes_per_axis();
        if (0..dim).any(|d| mi[d] == 0 || mi[d] + 1 >= n) {
            points.push(node[..dim].to_vec());
            continue;
        }
        points.push(match refine_peak(pt, vals, &mi) {
            Some(d) => (0..dim).map(|k| node[k] + h * d[k]).collect(),
            None => node[..dim].to_vec(),
        });
    }
    PeakReport { points, zero_field }
}

/// Offset (node units) of the stationary point of the fitted quadratic, if
/// it is a maximum within one cell.
fn refine_peak(pt: &crate::grid::Patch, vals: &[Complex64], mi: &[usize; 3]) -> Option<Vec<f64>> {
    let dim = pt.dim();
    let nq = dim * (dim + 1) / 2;
    let ncoef = 1 + dim + nq;
    let npts = 3usize.pow(dim as u32);
    let mut a = DMatrix::zeros(npts, ncoef);
    let mut b = DVector::zeros(npts);
    for row in 0..npts {
        let mut d = [0.0; 3];
        let mut idx = 0;
        let mut rest = row;
        for k in 0..dim {
            let off = (rest % 3) as isize - 1;
            rest /= 3;
            d[k] = off as f64;
            idx += ((mi[k] as isize + off) as usize) * pt.stride(k);
        }
        a[(row, 0)] = 1.0;
        let mut col = 1;
        for k in 0..dim {
            a[(row, col)] = d[k];
            col += 1;
        }
        for k in 0..dim {
            for l in k..dim {
                a[(row, col)] = if k == l { 0.5 * d[k] * d[k] } else { d[k] * d[l] };
                col += 1;
            }
        }
        b[row] = vals[idx].norm();
    }
    let coef = a.svd(true, true).solve(&b, 1e-14).ok()?;
    let g = DVector::from_iterator(dim, (0..dim).map(|k| coef[1 + k]));
    let mut hess = DMatrix::zeros(dim, dim);
    let mut col = 1 + dim;
    for k in 0..dim {
        for l in k..dim {
            hess[(k, l)] = coef[col];
            hess[(l, k)] = coef[col];
            col += 1;
        }
    }
    if hess.clone().symmetric_eigen().eigenvalues.iter().any(|e| *e >= 0.0) {
        return None;
    }
    let d = hess.lu().solve(&(-g))?;
    if d.amax() > 1.0 {
        return None;
    }
    Some(d.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner;
    use crate::ansatz::PatchGeometry;
    use crate::field::{make_potential, ParamValue, Params};
    use crate::radial::{solve_ground_state, RadialProfile};
    use std::sync::OnceLock;

    fn profile2() -> Arc<RadialProfile> {
        static P: OnceLock<Arc<RadialProfile>> = OnceLock::new();
        P.get_or_init(|| Arc::new(solve_ground_state(3.0, 2, 40.0, 1e-10).unwrap())).clone()
    }

    fn small(model: &str, params: Params, center: [f64; 2], eps: f64) -> BumpConfig {
        let m = make_potential(model, &params).unwrap().recentered_at(&center);
        BumpConfig::new(eps, profile2(), m, vec![center.to_vec()]).unwrap().with_geometry(PatchGeometry { half_width: 14.0, spacing: 0.2, stencil_order: 8 }).unwrap()
    }

    #[test]
    fn kernel_directions_under_constant_potential() {
        let a: Params = [("a".to_string(), ParamValue::Vector(vec![0.2, -0.1]))].into();
        let model = make_potential("constant", &a).unwrap();
        let cfg = BumpConfig::new(0.1, profile2(), model, vec![vec![0.1, 0.0]]).unwrap();
        let lin = Linearization::new(&cfg).unwrap();
        let w = lin.ansatz();
        // phase rotation: L(i𝒲) = i·S(𝒲) identically
        let iw = w.scale(Complex64::i());
        let s = nonlinear_residual(lin.operator(), w, cfg.p).scale(Complex64::i());
        let liw = lin.apply(&iw);
        assert!(l2_norm(&liw.axpy(Complex64::new(-1.0, 0.0), &s)) < 1e-12 * l2_norm(w));
        assert!(l2_norm(&liw) < 1e-6, "{}", l2_norm(&liw));
        let grid = lin.grid().clone();
        for z in &crate::ansatz::build_kernel_basis_on(&cfg, &grid, 0)[1..] {
            assert!(l2_norm(&lin.apply(z)) < 1e-5, "{}", l2_norm(&lin.apply(z)));
        }
        assert!(l2_norm(&lin.apply(w)) > 0.5 * l2_norm(w));
    }

    #[test]
    fn projected_solve_absorbs_constraint_direction() {
        let cfg = small("gaussian_bump", Params::new(), [0.0, 0.0], 0.1);
        let lin = Linearization::new(&cfg).unwrap();
        let z0 = &lin.constraint_basis()[0];
        let sol = lin.solve_projected(z0, &SolverSettings::default()).unwrap();
        let norm0 = inner(z0, z0);
        assert!((sol.c[0][0] * norm0 + inner(z0, z0)).abs() < 1e-6 * norm0, "{:?}", sol.c);
        assert!(sol.rel_residual < 1e-8);
        assert!(sol.constraint_violation < 1e-10 * l2_norm(&sol.phi).max(1e-300) || l2_norm(&sol.phi) < 1e-8);

        let zero = lin.solve_projected(&PatchedField::zeros(lin.grid().clone()), &SolverSettings::default()).unwrap();
        assert_eq!(zero.multiplier_bound, 0.0);
        assert_eq!(zero.phi.max_abs(), 0.0);
    }

    #[test]
    fn peak_of_centered_bump_is_the_center() {
        let cfg = small("gaussian_bump", Params::new(), [0.3, -0.2], 0.1);
        let grid = cfg.grid().unwrap();
        let u = crate::ansatz::build_bump_on(&cfg, &grid, 0);
        let pk = peak_location(&u);
        let c = cfg.scaled_center(0);
        assert!(!pk.zero_field);
        for d in 0..2 {
            assert!((pk.points[0][d] - c[d]).abs() < 0.04 * 0.04, "{:?} {:?}", pk.points, c);
        }
        let z = peak_location(&PatchedField::zeros(grid));
        assert!(z.zero_field);
        assert_eq!(z.points[0], c);
    }
}
