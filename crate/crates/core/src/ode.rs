//! Adaptive Dormand–Prince 5(4) integration for small first-order systems.

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn lin(y: &State, h: f64, ks: &[State], coeffs: &[f64]) -> State {
    let mut out = *y;
    for (k, &c) in ks.iter().zip(coeffs) {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One Dormand–Prince step; returns the fifth-order solution and the error estimate.
pub fn dopri_step<F>(f: &F, t: f64, y: &State, h: f64) -> (State, State)
where
    F: Fn(f64, &State) -> State,
{
    let k1 = f(t, y);
    let k2 = f(t + C[1] * h, &lin(y, h, &[k1], &A2));
    let k3 = f(t + C[2] * h, &lin(y, h, &[k1, k2], &A3));
    let k4 = f(t + C[3] * h, &lin(y, h, &[k1, k2, k3], &A4));
    let k5 = f(t + C[4] * h, &lin(y, h, &[k1, k2, k3, k4], &A5));
    let k6 = f(t + C[5] * h, &lin(y, h, &[k1, k2, k3, k4, k5], &A6));
    let y5 = lin(y, h, &[k1, k2, k3, k4, k5, k6], &B);
    let k7 = f(t + h, &y5);
    let ks = [k1, k2, k3, k4, k5, k6, k7];
    let mut err = [0.0; 2];
    for (k, &e) in ks.iter().zip(E.iter()) {
        err[0] += h * e * k[0];
        err[1] += h * e * k[1];
    }
    (y5, err)
}

/// Outcome of an interval integration with a stopping predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance {
    Reached(State),
    /// The predicate fired after an accepted step ending at `t`.
    Stopped { t: f64, y: State },
}

/// Integrate from `t0` to `t1` (either direction) with step control.
///
/// `stop` is checked after every accepted step. `h` carries the step-size
/// guess in and the last successful size out.
pub fn integrate<F, S>(f: &F, t0: f64, y0: State, t1: f64, h: &mut f64, tol: Tolerance, mut stop: S) -> Advance
where
    F: Fn(f64, &State) -> State,
    S: FnMut(f64, &State) -> bool,
{
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Advance::Reached(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut step = h.abs().min(span).max(span * 1e-12);
    loop {
        let remaining = (t1 - t).abs();
        let last = step >= remaining * (1.0 - 1e-12);
        let hh = if last { remaining } else { step };
        let (yn, err) = dopri_step(f, t, &y, dir * hh);
        let mut norm = 0.0;
        for i in 0..2 {
            let sc = tol.atol + tol.rtol * y[i].abs().max(yn[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / 2.0).sqrt();
        if norm <= 1.0 || hh < 1e-14 {
            t = if last { t1 } else { t + dir * hh };
            y = yn;
            let fac = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || fac < 1.0 {
                step = hh * fac;
            }
            *h = step;
            if stop(t, &y) {
                return Advance::Stopped { t, y };
            }
            if last {
                return Advance::Reached(y);
            }
        } else {
            step = hh * (0.9 * norm.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let f = |_t: f64, y: &State| [y[1], -y[0]];
        let mut h = 0.1;
        let tol = Tolerance { rtol: 1e-12, atol: 1e-14 };
        let end = integrate(&f, 0.0, [1.0, 0.0], 2.0 * std::f64::consts::PI, &mut h, tol, |_, _| false);
        match end {
            Advance::Reached(y) => {
                assert!((y[0] - 1.0).abs() < 1e-9);
                assert!(y[1].abs() < 1e-9);
            }
            _ => panic!("unexpected stop"),
        }
    }

    #[test]
    fn backward_decay_is_exact_exponential() {
        let f = |_t: f64, y: &State| [y[1], y[0]];
        let mut h = 0.1;
        let tol = Tolerance { rtol: 1e-13, atol: 1e-300 };
        let y0 = [(-30.0f64).exp(), -(-30.0f64).exp()];
        let end = integrate(&f, 30.0, y0, 10.0, &mut h, tol, |_, _| false);
        let Advance::Reached(y) = end else { panic!() };
        assert!((y[0] / (-10.0f64).exp() - 1.0).abs() < 1e-10);
    }
}
