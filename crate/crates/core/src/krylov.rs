//! MINRES for symmetric indefinite systems and a fast sine-transform solver
//! used as its preconditioner.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Patch;
use crate::stencil::Stencil;

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned residual estimate relative to the right-hand side.
    pub rel_residual: f64,
}

/// Preconditioned MINRES (Paige–Saunders) for `A x = b`, `x₀ = 0`.
///
/// `dot` is the inner product in which `A` is symmetric and `precond`
/// (an approximation of `A⁻¹`) is symmetric positive definite.
pub fn minres<A, M, D>(b: &[f64], mut apply: A, mut precond: M, dot: D, rtol: f64, max_iter: usize) -> Result<MinresOutcome>
where
    A: FnMut(&[f64], &mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
    D: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    precond(b, &mut y);
    let beta1_sq = dot(b, &y);
    if beta1_sq < 0.0 {
        return Err(Error::InvalidInput("preconditioner is not positive definite".into()));
    }
    let beta1 = beta1_sq.sqrt();
    if beta1 == 0.0 {
        return Ok(MinresOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply(&v, &mut y);
        if itn >= 2 {
            let f = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= f * ri;
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= f * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            return Err(Error::InvalidInput("preconditioner is not positive definite".into()));
        }
        beta = bsq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        let rel = phibar / beta1;
        if rel < rtol || beta == 0.0 {
            return Ok(MinresOutcome { x, iterations: itn, rel_residual: rel });
        }
        if !rel.is_finite() {
            return Err(Error::KrylovStall { iterations: itn, residual: rel });
        }
    }
    Err(Error::KrylovStall { iterations: max_iter, residual: phibar / beta1 })
}

/// Solves `(−D₂ + shift) u = f` on a patch, where `D₂` is the sum over axes of
/// the central second-difference stencil, diagonalised by the sine transform
/// (exact for the 3-point stencil, a close spectral match for wider ones).
#[derive(Clone)]
pub struct SineSolver {
    n: usize,
    dim: usize,
    fft: Arc<dyn Fft<f64>>,
    /// Symbol of `−D₂` along one axis at the sine frequencies.
    symbol: Vec<f64>,
    shift: f64,
}

impl std::fmt::Debug for SineSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineSolver").field("n", &self.n).field("dim", &self.dim).field("shift", &self.shift).finish()
    }
}

impl SineSolver {
    pub fn new(patch: &Patch, stencil: &Stencil, shift: f64) -> Self {
        let n = patch.nodes_per_axis();
        let h2 = patch.spacing() * patch.spacing();
        let c = stencil.d2_weights();
        let half = c.len() / 2;
        let symbol = (0..n)
            .map(|k| {
                let theta = std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64;
                let mut s = c[half];
                for j in 1..=half {
                    s += 2.0 * c[half + j] * (j as f64 * theta).cos();
                }
                -s / h2
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, dim: patch.dim(), fft, symbol, shift }
    }

    /// Unnormalised DST-I of every line along `axis`, in place.
    fn dst_axis(&self, data: &mut [Complex64], axis: usize) {
        let n = self.n;
        let stride = n.pow((self.dim - 1 - axis) as u32);
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::default(); m];
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        for base in 0..data.len() {
            if (base / stride) % n != 0 {
                continue;
            }
            buf[0] = Complex64::default();
            buf[n + 1] = Complex64::default();
            for j in 0..n {
                let v = data[base + j * stride];
                buf[j + 1] = v;
                buf[m - 1 - j] = -v;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            // the odd extension turns the FFT into −2i·DST, for complex lines too
            for k in 0..n {
                data[base + k * stride] = Complex64::new(0.0, 0.5) * buf[k + 1];
            }
        }
    }

    pub fn solve_in_place(&self, data: &mut [Complex64]) {
        let n = self.n;
        for axis in 0..self.dim {
            self.dst_axis(data, axis);
        }
        let norm = (2.0 / (n + 1) as f64).powi(self.dim as i32);
        for (idx, z) in data.iter_mut().enumerate() {
            let mut lam = self.shift;
            let mut rest = idx;
            for _ in 0..self.dim {
                lam += self.symbol[rest % n];
                rest /= n;
            }
            *z *= norm / lam;
        }
        for axis in 0..self.dim {
            self.dst_axis(data, axis);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_patch;
    use crate::operators::laplacian_patch;

    #[test]
    fn sine_solver_inverts_three_point_laplacian() {
        let patch = make_patch(&[0.0, 0.0], 10.0, 0.5).unwrap();
        let st = Stencil::new(2);
        let solver = SineSolver::new(&patch, &st, 1.0);
        let f: Vec<Complex64> = (0..patch.len())
            .map(|i| {
                let s = patch.offset(i);
                Complex64::new((s[0] * 0.7).sin() + s[1], (s[0] * s[1] * 0.1).cos())
            })
            .collect();
        let mut u = f.clone();
        solver.solve_in_place(&mut u);
        let lap = laplacian_patch(&patch, &st, &u);
        let err = u.iter().zip(&lap).zip(&f).map(|((u, l), f)| (u - l - f).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn minres_solves_indefinite_diagonal_system() {
        let d: Vec<f64> = (0..50).map(|i| if i % 7 == 0 { -1.0 - i as f64 } else { 1.0 + i as f64 }).collect();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let out = minres(
            &b,
            |v, y| {
                for i in 0..v.len() {
                    y[i] = d[i] * v[i] + if i > 0 { 0.1 * v[i - 1] } else { 0.0 } + if i + 1 < v.len() { 0.1 * v[i + 1] } else { 0.0 };
                }
            },
            |v, y| y.copy_from_slice(v),
            dot,
            1e-12,
            200,
        )
        .unwrap();
        let mut r = vec![0.0; 50];
        for i in 0..50 {
            r[i] = d[i] * out.x[i] - b[i]
                + if i > 0 { 0.1 * out.x[i - 1] } else { 0.0 }
                + if i + 1 < 50 { 0.1 * out.x[i + 1] } else { 0.0 };
        }
        assert!(dot(&r, &r).sqrt() < 1e-10);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = minres(&[0.0; 4], |v, y| y.copy_from_slice(v), |v, y| y.copy_from_slice(v), |a, b| a.iter().zip(b).map(|(x, y)| x * y).sum(), 1e-10, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|v| *v == 0.0));
    }
}
