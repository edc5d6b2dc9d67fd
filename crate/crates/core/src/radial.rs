//! Radial ground state of `Δw − w + w^p = 0` in `R^N`.
//!
//! The profile is found by shooting on `w(0)`: trajectories that cross zero
//! overshoot, trajectories that turn back up undershoot. Bisection pins `w(0)`
//! to the last ulp, after which the forward trajectory is only trustworthy up
//! to the radius where the bracketing trajectories separate. Beyond that
//! radius the decaying branch is recovered by integrating the full equation
//! inward from `r_max`, which is stable for the decaying mode, and matching
//! its amplitude to the forward solution.

use crate::error::{Error, Result};
use crate::ode::{integrate, Advance, State, Tolerance};
use crate::stencil::fornberg;

/// Radial grid spacing used for every profile.
pub const RADIAL_STEP: f64 = 0.01;

/// Distance below `r_max` at which the far-field model takes over.
pub const SPLICE_OFFSET: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct RadialProfile {
    p: f64,
    dim: usize,
    dr: f64,
    r_grid: Vec<f64>,
    w_vals: Vec<f64>,
    dw_vals: Vec<f64>,
    tail_amp: f64,
    tail_rate: f64,
    splice_index: usize,
    match_radius: f64,
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Over,
    Under,
    Reached,
}

struct Trajectory {
    w: Vec<f64>,
    dw: Vec<f64>,
    shot: Shot,
}

/// Solve for the positive radial ground state.
///
/// `tol` is the target accuracy of the profile; integration runs two orders
/// tighter.
pub fn solve_ground_state(p: f64, dim: usize, r_max: f64, tol: f64) -> Result<RadialProfile> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::NonSubcritical { p, dim });
    }
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if dim >= 3 && p >= (dim as f64 + 2.0) / (dim as f64 - 2.0) {
        return Err(Error::NonSubcritical { p, dim });
    }
    if !(r_max >= 20.0) {
        return Err(Error::InvalidInput(format!("r_max = {r_max} must be at least 20")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol = {tol} must be positive")));
    }

    let n_nodes = (r_max / RADIAL_STEP).round() as usize + 1;
    let shooter = Shooter { p, dim: dim as f64, dr: RADIAL_STEP, n_nodes, tol };

    let mut lo = 1.0;
    let mut hi = 5.0 * 10f64.powf(1.0 / (p - 1.0));
    let mut widen = 0;
    while shooter.shoot(hi, false).shot != Shot::Over {
        widen += 1;
        if widen > 8 {
            return Err(Error::BracketFailure { lo, hi, reason: "upper end never overshoots".into() });
        }
        hi *= 2.0;
    }
    if shooter.shoot(lo, false).shot == Shot::Over {
        return Err(Error::BracketFailure { lo, hi, reason: "lower end overshoots".into() });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shooter.shoot(mid, false).shot {
            Shot::Over => hi = mid,
            _ => lo = mid,
        }
    }

    let lower = shooter.shoot(lo, true);
    let upper = shooter.shoot(hi, true);
    let common = lower.w.len().min(upper.w.len());
    // forward solution is trusted while the bracketing trajectories agree
    // (absolute, on the scale of the peak)
    let agree_tol = (tol * 1e-2).max(1e-13) * lo;
    let mut match_idx = 0;
    for i in 1..common {
        let spread = (upper.w[i] - lower.w[i]).abs();
        if spread > agree_tol || lower.dw[i] >= 0.0 || upper.w[i] <= 0.0 {
            break;
        }
        match_idx = i;
    }
    let match_radius = match_idx as f64 * RADIAL_STEP;
    if match_radius < 6.0 {
        return Err(Error::BracketFailure {
            lo,
            hi,
            reason: format!("bracketing trajectories separate already at r = {match_radius:.2}"),
        });
    }

    let mut w_vals = vec![0.0; n_nodes];
    let mut dw_vals = vec![0.0; n_nodes];
    for i in 0..=match_idx {
        w_vals[i] = 0.5 * (lower.w[i] + upper.w[i]);
        dw_vals[i] = 0.5 * (lower.dw[i] + upper.dw[i]);
    }
    dw_vals[0] = 0.0;
    shooter.inward_tail(match_idx, &mut w_vals, &mut dw_vals)?;

    let r_grid: Vec<f64> = (0..n_nodes).map(|i| i as f64 * RADIAL_STEP).collect();
    let splice_index = ((r_max - SPLICE_OFFSET) / RADIAL_STEP).round() as usize;
    let rs = r_grid[splice_index];
    let ws = w_vals[splice_index];
    let dws = dw_vals[splice_index];
    let power = (dim as f64 - 1.0) / 2.0;
    let tail_rate = -(dws / ws + power / rs);
    let tail_amp = ws * rs.powf(power) * (tail_rate * rs).exp();

    Ok(RadialProfile {
        p,
        dim,
        dr: RADIAL_STEP,
        r_grid,
        w_vals,
        dw_vals,
        tail_amp,
        tail_rate,
        splice_index,
        match_radius,
        tol,
    })
}

struct Shooter {
    p: f64,
    dim: f64,
    dr: f64,
    n_nodes: usize,
    tol: f64,
}

impl Shooter {
    fn rhs(&self) -> impl Fn(f64, &State) -> State + '_ {
        move |r: f64, y: &State| {
            let w = y[0];
            let nonlin = w.abs().powf(self.p - 1.0) * w;
            [y[1], -(self.dim - 1.0) / r * y[1] + w - nonlin]
        }
    }

    fn ode_tol(&self) -> Tolerance {
        Tolerance { rtol: (self.tol * 1e-3).clamp(1e-14, 1e-8), atol: 1e-18 }
    }

    /// Series start: w = w0 + a r² + b r⁴.
    fn taylor(&self, w0: f64, r: f64) -> State {
        let n = self.dim;
        let a = (w0 - w0.powf(self.p)) / (2.0 * n);
        let fp = 1.0 - self.p * w0.powf(self.p - 1.0);
        let b = fp * a / (4.0 * (n + 2.0));
        [w0 + a * r * r + b * r.powi(4), 2.0 * a * r + 4.0 * b * r.powi(3)]
    }

    fn shoot(&self, w0: f64, record: bool) -> Trajectory {
        let f = self.rhs();
        let tol = self.ode_tol();
        let mut w = Vec::new();
        let mut dw = Vec::new();
        if record {
            w.reserve(self.n_nodes);
            dw.reserve(self.n_nodes);
            w.push(w0);
            dw.push(0.0);
        }
        let r_start = 1e-3_f64.min(self.dr * 0.1);
        let mut y = self.taylor(w0, r_start);
        let mut r = r_start;
        let mut h = r_start;
        let stop = |_t: f64, y: &State| y[0] <= 0.0 || y[1] > 0.0;
        if y[1] > 0.0 {
            return Trajectory { w, dw, shot: Shot::Under };
        }
        for i in 1..self.n_nodes {
            let target = i as f64 * self.dr;
            match integrate(&f, r, y, target, &mut h, tol, stop) {
                Advance::Reached(yn) => {
                    y = yn;
                    r = target;
                    if record {
                        w.push(y[0]);
                        dw.push(y[1]);
                    }
                }
                Advance::Stopped { y: ys, .. } => {
                    let shot = if ys[0] <= 0.0 { Shot::Over } else { Shot::Under };
                    return Trajectory { w, dw, shot };
                }
            }
        }
        Trajectory { w, dw, shot: Shot::Reached }
    }

    /// Fill nodes beyond `match_idx` by integrating inward from the last node.
    fn inward_tail(&self, match_idx: usize, w_vals: &mut [f64], dw_vals: &mut [f64]) -> Result<()> {
        let last = self.n_nodes - 1;
        if match_idx >= last {
            return Ok(());
        }
        let f = self.rhs();
        let tol = Tolerance { rtol: self.ode_tol().rtol, atol: 1e-300 };
        let r_end = last as f64 * self.dr;
        let r_match = match_idx as f64 * self.dr;
        let target = w_vals[match_idx];

        // decaying solution of the linearised equation: r^{-(N-1)/2} e^{-r} (1 + mu/r)
        let power = (self.dim - 1.0) / 2.0;
        let mu = ((self.dim - 2.0).powi(2) - 1.0) / 8.0;
        let g = |r: f64| r.powf(-power) * (-r).exp() * (1.0 + mu / r);
        let dg = |r: f64| g(r) * (-1.0 - power / r) - r.powf(-power) * (-r).exp() * mu / (r * r);

        let run = |amp: f64, store: Option<(&mut [f64], &mut [f64])>| -> f64 {
            let mut y = [amp * g(r_end), amp * dg(r_end)];
            let mut h = self.dr;
            match store {
                Some((wv, dwv)) => {
                    wv[last] = y[0];
                    dwv[last] = y[1];
                    for i in (match_idx..last).rev() {
                        let r0 = (i + 1) as f64 * self.dr;
                        let r1 = i as f64 * self.dr;
                        if let Advance::Reached(yn) = integrate(&f, r0, y, r1, &mut h, tol, |_, _| false) {
                            y = yn;
                        }
                        if i > match_idx {
                            wv[i] = y[0];
                            dwv[i] = y[1];
                        }
                    }
                    y[0]
                }
                None => match integrate(&f, r_end, y, r_match, &mut h, tol, |_, _| false) {
                    Advance::Reached(yn) => yn[0],
                    Advance::Stopped { y, .. } => y[0],
                },
            }
        };

        // amplitude by secant; the map is linear up to the tiny w^p term
        let mut a0 = target / g(r_match);
        let mut f0 = run(a0, None) - target;
        let mut a1 = a0 * (1.0 - f0 / target);
        for _ in 0..30 {
            let f1 = run(a1, None) - target;
            if f1.abs() <= 1e-15 * target || f1 == f0 {
                break;
            }
            let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
            a0 = a1;
            f0 = f1;
            a1 = a2;
        }
        if !(a1 > 0.0 && a1.is_finite()) {
            return Err(Error::BracketFailure { lo: 0.0, hi: 0.0, reason: "tail amplitude match failed".into() });
        }
        run(a1, Some((w_vals, dw_vals)));
        Ok(())
    }
}

impl RadialProfile {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    pub fn w_vals(&self) -> &[f64] {
        &self.w_vals
    }

    pub fn dw_vals(&self) -> &[f64] {
        &self.dw_vals
    }

    pub fn tail_amp(&self) -> f64 {
        self.tail_amp
    }

    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    pub fn r_max(&self) -> f64 {
        *self.r_grid.last().unwrap()
    }

    pub fn splice_radius(&self) -> f64 {
        self.r_grid[self.splice_index]
    }

    /// Radius up to which the forward shooting trajectory is used.
    pub fn match_radius(&self) -> f64 {
        self.match_radius
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Peak value `w(0)`.
    pub fn w0(&self) -> f64 {
        self.w_vals[0]
    }

    /// `w''(0) = (w(0) − w(0)^p)/N`, the limit of `w'(r)/r` at the origin.
    pub fn curvature_at_origin(&self) -> f64 {
        let w0 = self.w0();
        (w0 - w0.powf(self.p)) / self.dim as f64
    }

    fn second_derivative(&self, i: usize) -> f64 {
        let w = self.w_vals[i];
        let f = w - w.abs().powf(self.p - 1.0) * w;
        if i == 0 {
            f / self.dim as f64
        } else {
            f - (self.dim as f64 - 1.0) / self.r_grid[i] * self.dw_vals[i]
        }
    }

    /// `(w(r), w'(r))` for any `r ≥ 0`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r > self.splice_radius() {
            let power = (self.dim as f64 - 1.0) / 2.0;
            let v = self.tail_amp * r.powf(-power) * (-self.tail_rate * r).exp();
            return (v, v * (-self.tail_rate - power / r));
        }
        let x = r / self.dr;
        let i = (x.floor() as usize).min(self.splice_index - 1);
        let t = x - i as f64;
        let h = self.dr;
        let (f0, d0, s0) = (self.w_vals[i], self.dw_vals[i], self.second_derivative(i));
        let (f1, d1, s1) = (self.w_vals[i + 1], self.dw_vals[i + 1], self.second_derivative(i + 1));
        let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let value = h0 * f0 + h1 * h * d0 + h2 * h * h * s0 + h3 * h * h * s1 + h4 * h * d1 + h5 * f1;
        let g0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let g1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let g2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        let g3 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        let g4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let g5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
        let deriv = (g0 * f0 + g1 * h * d0 + g2 * h * h * s0 + g3 * h * h * s1 + g4 * h * d1 + g5 * f1) / h;
        (value, deriv)
    }

    /// Max over interior nodes of `|w'' + (N−1)/r w' − w + w^p|`, with `w''`
    /// taken from tenth-order differences of the stored derivative (lower orders
    /// are dominated by truncation near the origin when `w(0)` is large).
    pub fn ode_residual_max(&self) -> f64 {
        let offsets: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let weights = fornberg(0.0, &offsets, 1)[1].clone();
        let n = self.dim as f64;
        let mut worst: f64 = 0.0;
        for i in 5..self.splice_index - 5 {
            let d2: f64 = (0..11).map(|k| weights[k] * self.dw_vals[i + k - 5]).sum::<f64>() / self.dr;
            let w = self.w_vals[i];
            let res = d2 + (n - 1.0) / self.r_grid[i] * self.dw_vals[i] - w + w.powf(self.p);
            worst = worst.max(res.abs());
        }
        worst
    }

    /// `∫_{R^N} f(w(|y|), |y|) dy` by Simpson on the radial grid plus the far-field model.
    pub fn radial_integral<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let n = self.dim;
        let area = unit_sphere_area(n);
        let weight = |r: f64, w: f64| f(w, r) * r.powi(n as i32 - 1);
        let m = self.splice_index;
        let m_even = m - m % 2;
        let mut s = 0.0;
        for i in 0..=m_even {
            let c = if i == 0 || i == m_even {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += c * weight(self.r_grid[i], self.w_vals[i]);
        }
        s *= self.dr / 3.0;
        // remainder past the last even node out to where the tail is negligible
        let r0 = self.r_grid[m_even];
        let span = 40.0;
        let k = 8000;
        let dx = span / k as f64;
        let mut t = 0.0;
        for j in 0..=k {
            let r = r0 + j as f64 * dx;
            let c = if j == 0 || j == k {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            t += c * weight(r, self.eval(r).0);
        }
        t *= dx / 3.0;
        area * (s + t)
    }
}

/// Surface area of the unit sphere in `R^n` (2 for n = 1).
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (n as f64 - 2.0) * unit_sphere_area(n - 2),
    }
}

/// `(w(r), w'(r))`; see [`RadialProfile::eval`].
pub fn eval_profile(prof: &RadialProfile, r: f64) -> (f64, f64) {
    prof.eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn one_dimensional_cubic_soliton() {
        let prof = solve_ground_state(3.0, 1, 30.0, 1e-10).unwrap();
        assert!((prof.w0() - 2f64.sqrt()).abs() < 1e-9, "w0 = {}", prof.w0());
        assert_eq!(prof.dw_vals()[0], 0.0);
        let mut worst: f64 = 0.0;
        for k in 0..=4000 {
            let r = k as f64 * 0.0025;
            worst = worst.max((prof.eval(r).0 - 2f64.sqrt() * sech(r)).abs());
        }
        assert!(worst < 1e-8, "sup error {worst}");
    }

    #[test]
    fn quadratic_nonlinearity_one_dimension() {
        // p = 2: w = 3/2 sech^2(r/2)
        let prof = solve_ground_state(2.0, 1, 30.0, 1e-10).unwrap();
        for k in 0..100 {
            let r = k as f64 * 0.1;
            let exact = 1.5 * sech(r / 2.0).powi(2);
            assert!((prof.eval(r).0 - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn eval_at_origin_and_tail() {
        let prof = solve_ground_state(3.0, 1, 30.0, 1e-10).unwrap();
        let (v, d) = prof.eval(0.0);
        assert!((v - 2f64.sqrt()).abs() < 1e-9);
        assert!(d.abs() < 1e-12);

        let prof2 = solve_ground_state(3.0, 2, 30.0, 1e-10).unwrap();
        let r = prof2.r_max() + 5.0;
        let model = prof2.tail_amp() * r.powf(-0.5) * (-prof2.tail_rate() * r).exp();
        assert_eq!(prof2.eval(r).0, model);
    }

    #[test]
    fn splice_is_continuous() {
        for dim in 1..=3 {
            let prof = solve_ground_state(3.0, dim, 30.0, 1e-10).unwrap();
            let rs = prof.splice_radius();
            let below = prof.eval(rs - 1e-9).0;
            let above = prof.eval(rs + 1e-9).0;
            assert!(((below - above) / below).abs() < 1e-6, "dim {dim}");
        }
    }

    #[test]
    fn positive_decreasing_with_unit_decay_rate() {
        for dim in 1..=3 {
            let prof = solve_ground_state(3.0, dim, 30.0, 1e-10).unwrap();
            let w = prof.w_vals();
            assert!(w.iter().all(|&v| v > 0.0));
            assert!(w.windows(2).all(|p| p[1] < p[0]), "dim {dim}");
            assert!((prof.tail_rate() - 1.0).abs() < 0.01);
            assert!(prof.ode_residual_max() < 1e-9, "dim {dim}: {}", prof.ode_residual_max());
        }
    }

    #[test]
    fn quintic_hermite_reproduces_nodes() {
        let prof = solve_ground_state(3.0, 2, 25.0, 1e-10).unwrap();
        for i in [0usize, 1, 17, 500, 1000] {
            let r = prof.r_grid()[i];
            let (v, d) = prof.eval(r);
            assert!((v - prof.w_vals()[i]).abs() < 1e-15);
            assert!((d - prof.dw_vals()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_supercritical_and_bad_inputs() {
        assert!(matches!(solve_ground_state(5.0, 3, 30.0, 1e-10), Err(Error::NonSubcritical { .. })));
        assert!(matches!(solve_ground_state(1.0, 2, 30.0, 1e-10), Err(Error::NonSubcritical { .. })));
        assert!(matches!(solve_ground_state(3.0, 2, 10.0, 1e-10), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_ground_state(3.0, 2, 30.0, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(unit_sphere_area(1), 2.0);
        assert!((unit_sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-13);
    }
}
