//! Vector potentials with analytic derivatives up to third order, the
//! antisymmetric field matrix, and critical points of its squared Frobenius norm.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type Tensor3 = [[[f64; 3]; 3]; 3];
pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// Half-width of the cube `[−3, 3]^N` on which potentials are declared bounded.
pub const WORKING_BOX: f64 = 3.0;

/// A preset parameter: scalar, vector or matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

pub type Params = BTreeMap<String, ParamValue>;

/// `A`, `∂_j A_i`, `∂_{jk} A_i` and `∂_{jkl} A_i` at one point.
///
/// Index order is always component first: `jac[i][j] = ∂_j A_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PotentialDerivs {
    pub value: Vec3,
    pub jac: Mat3,
    pub hess: Tensor3,
    pub third: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
enum Preset {
    Constant { a: Vec3 },
    Landau { b: f64 },
    GaussianBump { amp: f64, kappa: f64 },
    DoubleBump { amp: f64, sep: f64 },
    PolySaddle { b0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum GaugeTerm {
    Linear(Vec3),
    /// Gradient of `xᵀMx/2`, stored as the symmetric part of `M`.
    Quadratic(Mat3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    dim: usize,
    preset: Preset,
    tag: String,
    params: Params,
    gauge: Vec<GaugeTerm>,
}

fn scalar(params: &Params, preset: &str, name: &str, default: Option<f64>) -> Result<f64> {
    match params.get(name) {
        Some(ParamValue::Scalar(v)) => Ok(*v),
        Some(ParamValue::Vector(v)) if v.len() == 1 => Ok(v[0]),
        Some(_) => Err(Error::InvalidInput(format!("parameter `{name}` of `{preset}` must be a scalar"))),
        None => default.ok_or_else(|| Error::MissingParam { preset: preset.into(), name: name.into() }),
    }
}

fn vector(params: &Params, preset: &str, name: &str) -> Result<Vec<f64>> {
    match params.get(name) {
        Some(ParamValue::Vector(v)) => Ok(v.clone()),
        Some(ParamValue::Scalar(v)) => Ok(vec![*v]),
        Some(_) => Err(Error::InvalidInput(format!("parameter `{name}` of `{preset}` must be a vector"))),
        None => Err(Error::MissingParam { preset: preset.into(), name: name.into() }),
    }
}

fn dim_param(params: &Params, preset: &str, allowed: &[usize], default: usize) -> Result<usize> {
    let d = scalar(params, preset, "dim", Some(default as f64))?;
    let d = d as usize;
    if !allowed.contains(&d) {
        return Err(Error::InvalidInput(format!("preset `{preset}` supports dim in {allowed:?}, got {d}")));
    }
    Ok(d)
}

fn to_vec3(v: &[f64]) -> Vec3 {
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

/// Build one of the preset potentials.
///
/// | preset          | params                                  |
/// |-----------------|-----------------------------------------|
/// | `constant`      | `a` (vector, sets the dimension)        |
/// | `landau`        | `b`, optional `dim` ∈ {2, 3}            |
/// | `gaussian_bump` | optional `amp` (1), `kappa` (0), `dim`  |
/// | `double_bump`   | optional `amp` (1), `sep` (2)           |
/// | `poly_saddle`   | optional `b0` (2)                       |
pub fn make_potential(preset: &str, params: &Params) -> Result<PotentialModel> {
    let (dim, kind) = match preset {
        "constant" => {
            let a = vector(params, preset, "a")?;
            if a.is_empty() || a.len() > MAX_DIM {
                return Err(Error::InvalidInput(format!("constant potential needs 1..=3 components, got {}", a.len())));
            }
            (a.len(), Preset::Constant { a: to_vec3(&a) })
        }
        "landau" => {
            let b = scalar(params, preset, "b", None)?;
            (dim_param(params, preset, &[2, 3], 2)?, Preset::Landau { b })
        }
        "gaussian_bump" => {
            let amp = scalar(params, preset, "amp", Some(1.0))?;
            let kappa = scalar(params, preset, "kappa", Some(0.0))?;
            (dim_param(params, preset, &[2, 3], 2)?, Preset::GaussianBump { amp, kappa })
        }
        "double_bump" => {
            let amp = scalar(params, preset, "amp", Some(1.0))?;
            let sep = scalar(params, preset, "sep", Some(2.0))?;
            (2, Preset::DoubleBump { amp, sep })
        }
        "poly_saddle" => {
            let b0 = scalar(params, preset, "b0", Some(2.0))?;
            (2, Preset::PolySaddle { b0 })
        }
        other => return Err(Error::UnknownPreset(other.into())),
    };
    Ok(PotentialModel { dim, preset: kind, tag: preset.into(), params: params.clone(), gauge: Vec::new() })
}

/// Add `g(z)·(−z₂, z₁, 0)` with `g = amp·exp(−|z|² + κ z₁)` and all its derivatives.
fn add_swirl(z: &Vec3, dim: usize, amp: f64, kappa: f64, out: &mut PotentialDerivs) {
    let mut q1 = [0.0; 3];
    for i in 0..dim {
        q1[i] = -2.0 * z[i];
    }
    q1[0] += kappa;
    let r2: f64 = (0..dim).map(|i| z[i] * z[i]).sum();
    let g = amp * (-r2 + kappa * z[0]).exp();
    let q2 = |i: usize, j: usize| if i == j { -2.0 } else { 0.0 };
    let v = [-z[1], z[0], 0.0];
    let mut m = [[0.0; 3]; 3];
    m[0][1] = -1.0;
    m[1][0] = 1.0;

    let mut g1 = [0.0; 3];
    let mut g2 = [[0.0; 3]; 3];
    let mut g3 = [[[0.0; 3]; 3]; 3];
    for i in 0..dim {
        g1[i] = g * q1[i];
        for j in 0..dim {
            g2[i][j] = g * (q1[i] * q1[j] + q2(i, j));
            for k in 0..dim {
                g3[i][j][k] =
                    g * (q1[i] * q1[j] * q1[k] + q2(i, j) * q1[k] + q2(i, k) * q1[j] + q2(j, k) * q1[i]);
            }
        }
    }
    for c in 0..dim {
        out.value[c] += g * v[c];
        for j in 0..dim {
            out.jac[c][j] += g1[j] * v[c] + g * m[c][j];
            for k in 0..dim {
                out.hess[c][j][k] += g2[j][k] * v[c] + g1[j] * m[c][k] + g1[k] * m[c][j];
                for l in 0..dim {
                    out.third[c][j][k][l] +=
                        g3[j][k][l] * v[c] + g2[j][k] * m[c][l] + g2[j][l] * m[c][k] + g2[k][l] * m[c][j];
                }
            }
        }
    }
}

impl PotentialModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Preset name, e.g. `gaussian_bump`.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn is_gauge_shifted(&self) -> bool {
        !self.gauge.is_empty()
    }

    /// True inside the cube on which the potential is declared bounded.
    pub fn in_working_box(&self, x: &[f64]) -> bool {
        x.iter().take(self.dim).all(|c| c.abs() <= WORKING_BOX)
    }

    pub fn derivs(&self, x: &[f64]) -> PotentialDerivs {
        let x = to_vec3(&x[..self.dim]);
        let mut d = PotentialDerivs::default();
        match self.preset {
            Preset::Constant { a } => d.value = a,
            Preset::Landau { b } => {
                d.value[0] = -0.5 * b * x[1];
                d.value[1] = 0.5 * b * x[0];
                d.jac[0][1] = -0.5 * b;
                d.jac[1][0] = 0.5 * b;
            }
            Preset::GaussianBump { amp, kappa } => add_swirl(&x, self.dim, amp, kappa, &mut d),
            Preset::DoubleBump { amp, sep } => {
                for s in [-sep, sep] {
                    let z = [x[0] - s, x[1], 0.0];
                    add_swirl(&z, 2, amp, 0.0, &mut d);
                }
            }
            Preset::PolySaddle { b0 } => {
                let (x1, x2) = (x[0], x[1]);
                d.value[1] = b0 * x1 + x1.powi(3) / 3.0 - x2 * x2 * x1;
                d.jac[1][0] = b0 + x1 * x1 - x2 * x2;
                d.jac[1][1] = -2.0 * x1 * x2;
                d.hess[1][0][0] = 2.0 * x1;
                d.hess[1][0][1] = -2.0 * x2;
                d.hess[1][1][0] = -2.0 * x2;
                d.hess[1][1][1] = -2.0 * x1;
                d.third[1][0][0][0] = 2.0;
                d.third[1][0][1][1] = -2.0;
                d.third[1][1][0][1] = -2.0;
                d.third[1][1][1][0] = -2.0;
            }
        }
        for term in &self.gauge {
            match term {
                GaugeTerm::Linear(c) => {
                    for i in 0..self.dim {
                        d.value[i] += c[i];
                    }
                }
                GaugeTerm::Quadratic(s) => {
                    for i in 0..self.dim {
                        for j in 0..self.dim {
                            d.value[i] += s[i][j] * x[j];
                            d.jac[i][j] += s[i][j];
                        }
                    }
                }
            }
        }
        d
    }

    /// `A(x)` alone.
    pub fn value(&self, x: &[f64]) -> Vec3 {
        self.value_and_divergence(x).0
    }

    /// `A(x)` and `∇·A(x)`, the pair the magnetic operators need per node.
    pub fn value_and_divergence(&self, x: &[f64]) -> (Vec3, f64) {
        let d = self.derivs(x);
        let div = (0..self.dim).map(|i| d.jac[i][i]).sum();
        (d.value, div)
    }

    /// Same potential in a gauge where `A(ζ) = 0`.
    pub fn recentered_at(&self, zeta: &[f64]) -> PotentialModel {
        let a = self.value(zeta);
        let mut out = self.clone();
        out.gauge.push(GaugeTerm::Linear([-a[0], -a[1], -a[2]]));
        out
    }

    /// Recentered gauge that also removes the symmetric part of the Jacobian
    /// at `zeta`, so `A(ζ) = 0` and `∂A(ζ)` is antisymmetric (½B·s locally).
    pub fn symmetric_gauge_at(&self, zeta: &[f64]) -> PotentialModel {
        let jac = self.derivs(zeta).jac;
        let mut s = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                s[i][j] = -0.5 * (jac[i][j] + jac[j][i]);
            }
        }
        let mut out = self.clone();
        out.gauge.push(GaugeTerm::Quadratic(s));
        out.recentered_at(zeta)
    }
}

/// `A ↦ A + ∇f` for `f = c·x` (`linear`, param `c`) or `f = xᵀMx/2`
/// (`quadratic`, param `M`).
pub fn gauge_shift(model: &PotentialModel, f_preset: &str, params: &Params) -> Result<PotentialModel> {
    let dim = model.dim;
    let term = match f_preset {
        "linear" => {
            let c = vector(params, f_preset, "c")?;
            if c.len() != dim {
                return Err(Error::InvalidInput(format!("gauge vector has {} components, model has {dim}", c.len())));
            }
            GaugeTerm::Linear(to_vec3(&c))
        }
        "quadratic" => {
            let m = match params.get("M") {
                Some(ParamValue::Matrix(m)) => m.clone(),
                Some(_) => return Err(Error::InvalidInput("gauge parameter `M` must be a matrix".into())),
                None => return Err(Error::MissingParam { preset: f_preset.into(), name: "M".into() }),
            };
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidInput(format!("gauge matrix must be {dim}x{dim}")));
            }
            let mut s = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    s[i][j] = 0.5 * (m[i][j] + m[j][i]);
                }
            }
            GaugeTerm::Quadratic(s)
        }
        other => return Err(Error::UnknownPreset(other.into())),
    };
    let mut out = model.clone();
    out.gauge.push(term);
    Ok(out)
}

/// Antisymmetric field matrix `entries[j][k] = ∂_j A_k − ∂_k A_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMatrix {
    pub dim: usize,
    pub entries: Mat3,
}

impl FieldMatrix {
    /// The scalar field `∂₁A₂ − ∂₂A₁` in two dimensions.
    pub fn scalar_b(&self) -> Option<f64> {
        (self.dim == 2).then(|| self.entries[0][1])
    }
}

pub fn field_at(model: &PotentialModel, x: &[f64]) -> FieldMatrix {
    field_from_jacobian(model.dim, &model.derivs(x).jac)
}

pub fn field_from_jacobian(dim: usize, jac: &Mat3) -> FieldMatrix {
    let mut entries = [[0.0; 3]; 3];
    for j in 0..dim {
        for k in 0..dim {
            entries[j][k] = jac[k][j] - jac[j][k];
        }
    }
    FieldMatrix { dim, entries }
}

pub fn frobenius_sq(fm: &FieldMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..fm.dim {
        for j in 0..fm.dim {
            s += fm.entries[i][j] * fm.entries[i][j];
        }
    }
    s
}

/// `Σ_{i,j} (∂_i A_j − ∂_j A_i)²` straight from the Jacobian.
pub fn curl_invariant(model: &PotentialModel, x: &[f64]) -> f64 {
    curl_invariant_from_jacobian(model.dim, &model.derivs(x).jac)
}

pub fn curl_invariant_from_jacobian(dim: usize, jac: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let f = jac[j][i] - jac[i][j];
            s += f * f;
        }
    }
    s
}

/// Value, gradient and Hessian of the curl invariant, using up to third derivatives of `A`.
pub fn curl_invariant_derivs(model: &PotentialModel, x: &[f64]) -> (f64, Vec3, Mat3) {
    let n = model.dim;
    let d = model.derivs(x);
    let mut val = 0.0;
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let f = d.jac[j][i] - d.jac[i][j];
            val += f * f;
            for k in 0..n {
                let fk = d.hess[j][i][k] - d.hess[i][j][k];
                grad[k] += 2.0 * f * fk;
                for l in 0..n {
                    let fl = d.hess[j][i][l] - d.hess[i][j][l];
                    let fkl = d.third[j][i][k][l] - d.third[i][j][k][l];
                    hess[k][l] += 2.0 * (fk * fl + f * fkl);
                }
            }
        }
    }
    (val, grad, hess)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Max,
    Min,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    pub kind: CriticalKind,
    pub value: f64,
    pub hessian_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalScan {
    pub points: Vec<CriticalPoint>,
    /// Set when the invariant has vanishing gradient and Hessian at every seed.
    pub constant_field: bool,
    /// Seeds whose Newton iteration did not converge inside the box.
    pub failed_seeds: Vec<Vec<f64>>,
}

/// Largest discrepancy between the analytic derivatives of `model` at `x`
/// (first to third order) and central differences of the next lower order.
pub fn derivative_fd_error(model: &PotentialModel, x: &[f64], step: f64) -> f64 {
    let n = model.dim();
    let d = model.derivs(x);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let (dp, dm) = (model.derivs(&xp), model.derivs(&xm));
        let fd = |a: f64, b: f64| (a - b) / (2.0 * step);
        for i in 0..n {
            worst = worst.max((fd(dp.value[i], dm.value[i]) - d.jac[i][j]).abs());
            for k in 0..n {
                worst = worst.max((fd(dp.jac[i][k], dm.jac[i][k]) - d.hess[i][k][j]).abs());
                for l in 0..n {
                    worst = worst.max((fd(dp.hess[i][k][l], dm.hess[i][k][l]) - d.third[i][k][l][j]).abs());
                }
            }
        }
    }
    worst
}

/// Eigenvalue threshold below which a critical point counts as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

fn classify(eigs: &[f64]) -> CriticalKind {
    if eigs.iter().any(|e| e.abs() < DEGENERACY_THRESHOLD) {
        CriticalKind::Degenerate
    } else if eigs.iter().all(|&e| e < 0.0) {
        CriticalKind::Max
    } else if eigs.iter().all(|&e| e > 0.0) {
        CriticalKind::Min
    } else {
        CriticalKind::Saddle
    }
}

fn sym_eigs(h: &Mat3, n: usize) -> Vec<f64> {
    let sub = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let mut out: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn solve_small(h: &Mat3, g: &Vec3, n: usize) -> Option<Vec3> {
    let a = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let b = DVector::from_fn(n, |i, _| g[i]);
    let x = a.lu().solve(&b)?;
    let mut out = [0.0; 3];
    for i in 0..n {
        out[i] = x[i];
    }
    Some(out)
}

/// Newton on `∇(curl invariant)` from a uniform grid of seeds.
///
/// `bounds[d] = (lo, hi)` per axis; `seeds_per_axis ≥ 1` seeds per axis.
pub fn find_field_critical_points(
    model: &PotentialModel,
    bounds: &[(f64, f64)],
    seeds_per_axis: usize,
) -> Result<CriticalScan> {
    let n = model.dim;
    if bounds.len() != n {
        return Err(Error::InvalidInput(format!("box has {} axes, model has {n}", bounds.len())));
    }
    if seeds_per_axis == 0 {
        return Err(Error::InvalidInput("need at least one seed per axis".into()));
    }
    let total = seeds_per_axis.pow(n as u32);
    let mut seeds = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut s = [0.0; 3];
        for d in (0..n).rev() {
            let k = rem % seeds_per_axis;
            rem /= seeds_per_axis;
            let (lo, hi) = bounds[d];
            s[d] = if seeds_per_axis == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (seeds_per_axis - 1) as f64 };
        }
        seeds.push(s);
    }

    let flat = seeds.iter().all(|s| {
        let (_, g, h) = curl_invariant_derivs(model, s);
        g.iter().all(|v| v.abs() < 1e-14) && h.iter().flatten().all(|v| v.abs() < 1e-14)
    });
    if flat {
        let center: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let value = curl_invariant(model, &center);
        return Ok(CriticalScan {
            points: vec![CriticalPoint {
                point: center,
                kind: CriticalKind::Degenerate,
                value,
                hessian_eigenvalues: vec![0.0; n],
            }],
            constant_field: true,
            failed_seeds: Vec::new(),
        });
    }

    let inside = |x: &Vec3| (0..n).all(|d| x[d] >= bounds[d].0 - 1e-9 && x[d] <= bounds[d].1 + 1e-9);
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut failed = Vec::new();
    for seed in seeds {
        let mut x = seed;
        let mut converged = false;
        for _ in 0..60 {
            let (_, g, h) = curl_invariant_derivs(model, &x);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-10 {
                converged = true;
                break;
            }
            let Some(step) = solve_small(&h, &g, n) else { break };
            for d in 0..n {
                x[d] -= step[d];
            }
            if !inside(&x) || x.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        if !converged || !inside(&x) {
            failed.push(seed[..n].to_vec());
            continue;
        }
        if points.iter().any(|p| (0..n).map(|d| (p.point[d] - x[d]).powi(2)).sum::<f64>().sqrt() < 1e-6) {
            continue;
        }
        let (value, _, h) = curl_invariant_derivs(model, &x);
        let eigs = sym_eigs(&h, n);
        points.push(CriticalPoint { point: x[..n].to_vec(), kind: classify(&eigs), value, hessian_eigenvalues: eigs });
    }
    points.sort_by(|a, b| a.point.partial_cmp(&b.point).unwrap());
    Ok(CriticalScan { points, constant_field: false, failed_seeds: failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(pairs: &[(&str, ParamValue)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn models() -> Vec<PotentialModel> {
        vec![
            make_potential("landau", &params(&[("b", ParamValue::Scalar(1.3))])).unwrap(),
            make_potential("gaussian_bump", &Params::new()).unwrap(),
            make_potential("gaussian_bump", &params(&[("kappa", ParamValue::Scalar(0.4)), ("amp", ParamValue::Scalar(0.7))]))
                .unwrap(),
            make_potential("gaussian_bump", &params(&[("dim", ParamValue::Scalar(3.0)), ("kappa", ParamValue::Scalar(0.3))]))
                .unwrap(),
            make_potential("double_bump", &Params::new()).unwrap(),
            make_potential("poly_saddle", &Params::new()).unwrap(),
        ]
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for m in models() {
            let n = m.dim();
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let d = m.derivs(&x);
                for j in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let (dp, dm) = (m.derivs(&xp), m.derivs(&xm));
                    for i in 0..n {
                        let fd = (dp.value[i] - dm.value[i]) / (2.0 * h);
                        assert!((fd - d.jac[i][j]).abs() < 1e-8, "{} jac", m.tag());
                        for k in 0..n {
                            let fd = (dp.jac[i][k] - dm.jac[i][k]) / (2.0 * h);
                            assert!((fd - d.hess[i][k][j]).abs() < 1e-8, "{} hess", m.tag());
                            for l in 0..n {
                                let fd = (dp.hess[i][k][l] - dm.hess[i][k][l]) / (2.0 * h);
                                assert!((fd - d.third[i][k][l][j]).abs() < 1e-7, "{} third", m.tag());
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn curl_invariant_gradient_and_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for m in models() {
            let n = m.dim();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (v, g, hs) = curl_invariant_derivs(&m, &x);
            assert_eq!(v, curl_invariant(&m, &x));
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (curl_invariant(&m, &xp) - curl_invariant(&m, &xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-7 * (1.0 + g[j].abs()));
                let gp = curl_invariant_derivs(&m, &xp).1;
                let gm = curl_invariant_derivs(&m, &xm).1;
                for k in 0..n {
                    assert!(((gp[k] - gm[k]) / (2.0 * h) - hs[k][j]).abs() < 1e-6 * (1.0 + hs[k][j].abs()));
                }
            }
        }
    }

    #[test]
    fn field_matrix_is_antisymmetric_and_matches_invariant() {
        for m in models() {
            let x = vec![0.3, -0.2, 0.1][..m.dim()].to_vec();
            let fm = field_at(&m, &x);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(fm.entries[i][j], -fm.entries[j][i]);
                }
            }
            assert_eq!(frobenius_sq(&fm), curl_invariant(&m, &x));
        }
    }

    #[test]
    fn landau_and_poly_saddle_scalar_fields() {
        let m = make_potential("landau", &params(&[("b", ParamValue::Scalar(2.5))])).unwrap();
        assert_eq!(field_at(&m, &[0.4, 1.0]).scalar_b(), Some(2.5));
        let s = make_potential("poly_saddle", &Params::new()).unwrap();
        let b = field_at(&s, &[0.5, 0.25]).scalar_b().unwrap();
        assert!((b - (2.0 + 0.25 - 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn gauge_shifts_leave_the_field_unchanged() {
        let m = make_potential("gaussian_bump", &params(&[("kappa", ParamValue::Scalar(0.4))])).unwrap();
        let lin = gauge_shift(&m, "linear", &params(&[("c", ParamValue::Vector(vec![1.0, -2.0]))])).unwrap();
        let quad = gauge_shift(
            &m,
            "quadratic",
            &params(&[("M", ParamValue::Matrix(vec![vec![1.0, 3.0], vec![-1.0, 0.5]]))]),
        )
        .unwrap();
        for x in [[0.1, 0.2], [-1.0, 0.7], [2.0, -2.5]] {
            let f0 = field_at(&m, &x);
            for g in [&lin, &quad] {
                let f1 = field_at(g, &x);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((f0.entries[i][j] - f1.entries[i][j]).abs() < 1e-14);
                    }
                }
            }
        }
        assert!(quad.is_gauge_shifted());
        let r = m.recentered_at(&[0.3, 0.1]);
        assert!(r.value(&[0.3, 0.1]).iter().all(|v| v.abs() < 1e-15));

        let z = [0.4, -0.2];
        let sg = make_potential("poly_saddle", &Params::new()).unwrap().symmetric_gauge_at(&z);
        let d = sg.derivs(&z);
        assert!(d.value.iter().all(|v| v.abs() < 1e-14));
        assert!((d.jac[0][1] + d.jac[1][0]).abs() < 1e-14 && d.jac[0][0].abs() < 1e-14);
        assert!((d.jac[1][0] - 0.5 * field_at(&sg, &z).scalar_b().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(make_potential("nope", &Params::new()), Err(Error::UnknownPreset(_))));
        assert!(matches!(make_potential("landau", &Params::new()), Err(Error::MissingParam { .. })));
        assert!(make_potential("landau", &params(&[("dim", ParamValue::Scalar(4.0)), ("b", ParamValue::Scalar(1.0))]))
            .is_err());
    }

    #[test]
    fn symmetric_bump_has_max_at_origin() {
        let m = make_potential("gaussian_bump", &Params::new()).unwrap();
        let scan = find_field_critical_points(&m, &[(-3.0, 3.0), (-3.0, 3.0)], 9).unwrap();
        assert!(!scan.constant_field);
        let origin = scan.points.iter().find(|p| p.point.iter().all(|c| c.abs() < 1e-8)).unwrap();
        assert_eq!(origin.kind, CriticalKind::Max);
        // B = 2(1 - |x|^2) e^{-|x|^2}, so |B|^2-sum = 2 B^2 = 8 at the origin
        assert!((origin.value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn poly_saddle_has_saddle_at_origin() {
        let m = make_potential("poly_saddle", &Params::new()).unwrap();
        let scan = find_field_critical_points(&m, &[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        let origin = scan.points.iter().find(|p| p.point.iter().all(|c| c.abs() < 1e-8)).unwrap();
        assert_eq!(origin.kind, CriticalKind::Saddle);
    }

    #[test]
    fn constant_field_is_flagged() {
        let m = make_potential("landau", &params(&[("b", ParamValue::Scalar(1.0))])).unwrap();
        let scan = find_field_critical_points(&m, &[(-1.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        assert!(scan.constant_field);
        assert_eq!(scan.points[0].kind, CriticalKind::Degenerate);
    }
}
