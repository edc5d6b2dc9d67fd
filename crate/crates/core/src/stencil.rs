//! Finite-difference weights on uniform grids.
//!
//! Weights are generated with Fornberg's recursion, so any even central order
//! (and the matching one-sided edge stencils) is available without tables.

/// Fornberg weights for derivatives `0..=max_deriv` at `x0` from nodes `xs`.
///
/// Returns `w[d][j]`, the weight of `f(xs[j])` in the `d`-th derivative.
pub fn fornberg(x0: f64, xs: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// How a stencil treats nodes that fall outside the grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// Values beyond the line are zero (homogeneous Dirichlet extension).
    /// Central stencils then give exactly (anti)symmetric matrices.
    ZeroExtension,
    /// Shifted one-sided stencils of the same width near the ends.
    OneSided,
}

/// Central first- and second-derivative stencils of a given even order,
/// plus one-sided variants for the `half` nodes nearest each end.
#[derive(Debug, Clone)]
pub struct Stencil {
    order: usize,
    half: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// `d1_left[k]` is the first-derivative stencil at node `k` using nodes `0..width`.
    d1_left: Vec<Vec<f64>>,
    d2_left: Vec<Vec<f64>>,
}

impl Stencil {
    pub fn new(order: usize) -> Self {
        assert!(order >= 2 && order % 2 == 0, "stencil order must be even and >= 2");
        let half = order / 2;
        let offsets: Vec<f64> = (-(half as i64)..=half as i64).map(|k| k as f64).collect();
        let w = fornberg(0.0, &offsets, 2);
        // enforce exact (anti)symmetry so the assembled operators are exactly (skew-)symmetric
        let m = offsets.len();
        let d1: Vec<f64> = (0..m).map(|k| 0.5 * (w[1][k] - w[1][m - 1 - k])).collect();
        let d2: Vec<f64> = (0..m).map(|k| 0.5 * (w[2][k] + w[2][m - 1 - k])).collect();
        // one-sided: width order+1 for d1 keeps the order; d2 needs order+2 nodes
        let width1 = order + 1;
        let width2 = order + 2;
        let nodes1: Vec<f64> = (0..width1).map(|k| k as f64).collect();
        let nodes2: Vec<f64> = (0..width2).map(|k| k as f64).collect();
        let d1_left = (0..half).map(|k| fornberg(k as f64, &nodes1, 1)[1].clone()).collect();
        let d2_left = (0..half).map(|k| fornberg(k as f64, &nodes2, 2)[2].clone()).collect();
        Self { order, half, d1, d2, d1_left, d2_left }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn d1_weights(&self) -> &[f64] {
        &self.d1
    }

    pub fn d2_weights(&self) -> &[f64] {
        &self.d2
    }

    /// Apply the first-derivative stencil (unit spacing) along a strided line.
    pub fn apply_d1<T>(&self, src: &[T], dst: &mut [T], mode: EdgeMode)
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
    {
        self.apply(src, dst, &self.d1, &self.d1_left, mode, true);
    }

    pub fn apply_d2<T>(&self, src: &[T], dst: &mut [T], mode: EdgeMode)
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
    {
        self.apply(src, dst, &self.d2, &self.d2_left, mode, false);
    }

    fn apply<T>(&self, src: &[T], dst: &mut [T], central: &[f64], left: &[Vec<f64>], mode: EdgeMode, odd: bool)
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
    {
        let n = src.len();
        let h = self.half;
        for i in 0..n {
            let interior = i >= h && i + h < n;
            if interior || mode == EdgeMode::ZeroExtension {
                let mut acc = T::default();
                for (k, &wk) in central.iter().enumerate() {
                    let j = i as i64 + k as i64 - h as i64;
                    if j >= 0 && (j as usize) < n && wk != 0.0 {
                        acc = acc + src[j as usize] * wk;
                    }
                }
                dst[i] = acc;
            } else if i < h {
                let w = &left[i];
                let mut acc = T::default();
                for (k, &wk) in w.iter().enumerate().take(n) {
                    acc = acc + src[k] * wk;
                }
                dst[i] = acc;
            } else {
                // mirror of the left stencil; odd derivatives flip sign
                let w = &left[n - 1 - i];
                let mut acc = T::default();
                for (k, &wk) in w.iter().enumerate().take(n) {
                    acc = acc + src[n - 1 - k] * wk;
                }
                dst[i] = if odd { -acc } else { acc };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_fourth_order_weights() {
        let s = Stencil::new(4);
        let d1 = s.d1_weights();
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in d1.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let d2 = s.d2_weights();
        let expect2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in d2.iter().zip(expect2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn central_weights_are_antisymmetric_and_symmetric() {
        for order in [2, 4, 8, 12] {
            let s = Stencil::new(order);
            let d1 = s.d1_weights();
            let d2 = s.d2_weights();
            let m = d1.len();
            for k in 0..m {
                assert_eq!(d1[k], -d1[m - 1 - k]);
                assert_eq!(d2[k], d2[m - 1 - k]);
            }
        }
    }

    #[test]
    fn one_sided_edges_differentiate_polynomials_exactly() {
        let s = Stencil::new(6);
        let n = 20;
        let h = 1.0;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(5) * 1e-3).collect();
        let mut d = vec![0.0; n];
        s.apply_d1(&f, &mut d, EdgeMode::OneSided);
        for (i, di) in d.iter().enumerate() {
            let x = i as f64;
            assert!((di - 5e-3 * x.powi(4)).abs() < 1e-8, "node {i}");
        }
        s.apply_d2(&f, &mut d, EdgeMode::OneSided);
        for (i, di) in d.iter().enumerate() {
            let x = i as f64;
            assert!((di - 2e-2 * x.powi(3)).abs() < 1e-7, "node {i}");
        }
    }
}
