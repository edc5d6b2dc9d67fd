//! Patched tensor grids in the blown-up variable `y = x/ε`.
//!
//! Each concentration point gets its own axis-aligned cube of nodes centred on
//! it. Patches never overlap, so integrals are plain sums over patches.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Minimum patch half-width; `w(10) < 5e-5`.
pub const MIN_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    dim: usize,
    center: [f64; 3],
    half_width: f64,
    spacing: f64,
    n: usize,
}

pub fn make_patch(center: &[f64], half_width: f64, spacing: f64) -> Result<Patch> {
    Patch::new(center, half_width, spacing)
}

impl Patch {
    pub fn new(center: &[f64], half_width: f64, spacing: f64) -> Result<Self> {
        let dim = center.len();
        if dim == 0 || dim > 3 {
            return Err(Error::BadGeometry(format!("patch dimension {dim} not in 1..=3")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::BadGeometry(format!("spacing {spacing} must be positive")));
        }
        if !(half_width >= MIN_HALF_WIDTH) {
            return Err(Error::BadGeometry(format!("half-width {half_width} below {MIN_HALF_WIDTH}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::BadGeometry("non-finite patch center".into()));
        }
        let half_nodes = (half_width / spacing + 1e-9).floor() as usize;
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(center);
        Ok(Self { dim, center: c, half_width, spacing, n: 2 * half_nodes + 1 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    /// Total node count `n^N`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance from the center to the outermost node along an axis.
    pub fn extent(&self) -> f64 {
        (self.n / 2) as f64 * self.spacing
    }

    /// Stride of `axis` in the row-major node ordering (last axis fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Integer multi-index of a flat node index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut k = [0; 3];
        for d in (0..self.dim).rev() {
            k[d] = idx % self.n;
            idx /= self.n;
        }
        k
    }

    /// Offset `y − center` of a node; exactly `(k − n/2)·h` per axis.
    pub fn offset(&self, idx: usize) -> [f64; 3] {
        let k = self.multi_index(idx);
        let mid = (self.n / 2) as i64;
        let mut s = [0.0; 3];
        for d in 0..self.dim {
            s[d] = (k[d] as i64 - mid) as f64 * self.spacing;
        }
        s
    }

    /// Node coordinates `center + k·h`.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let s = self.offset(idx);
        let mut y = [0.0; 3];
        for d in 0..self.dim {
            y[d] = self.center[d] + s[d];
        }
        y
    }

    /// Flat index of the center node.
    pub fn center_index(&self) -> usize {
        (0..self.dim).map(|d| (self.n / 2) * self.stride(d)).sum()
    }

    /// Trapezoid weight of a node, including `h^N`.
    pub fn trapezoid_weight(&self, idx: usize) -> f64 {
        let k = self.multi_index(idx);
        let mut w = self.spacing.powi(self.dim as i32);
        for d in 0..self.dim {
            if k[d] == 0 || k[d] == self.n - 1 {
                w *= 0.5;
            }
        }
        w
    }

    /// Two patches overlap when their cubes intersect along every axis.
    pub fn overlaps(&self, other: &Patch) -> bool {
        (0..self.dim).all(|d| (self.center[d] - other.center[d]).abs() <= self.extent() + other.extent())
    }
}

/// A set of pairwise disjoint patches sharing dimension and spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    patches: Vec<Patch>,
}

impl Grid {
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::BadGeometry("grid needs at least one patch".into()));
        }
        let (dim, h) = (patches[0].dim, patches[0].spacing);
        for (i, p) in patches.iter().enumerate() {
            if p.dim != dim || p.spacing != h {
                return Err(Error::BadGeometry("patches must share dimension and spacing".into()));
            }
            for (j, q) in patches.iter().enumerate().skip(i + 1) {
                if p.overlaps(q) {
                    return Err(Error::BadGeometry(format!("patches {i} and {j} overlap")));
                }
            }
        }
        Ok(Self { patches })
    }

    pub fn single(patch: Patch) -> Self {
        Self { patches: vec![patch] }
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn dim(&self) -> usize {
        self.patches[0].dim
    }

    pub fn spacing(&self) -> f64 {
        self.patches[0].spacing
    }

    /// Total node count over all patches.
    pub fn len(&self) -> usize {
        self.patches.iter().map(Patch::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Values on every node of a grid, one contiguous block per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedField<T = Complex64> {
    grid: Arc<Grid>,
    values: Vec<Vec<T>>,
}

pub type RealField = PatchedField<f64>;

impl<T: Copy + Default> PatchedField<T> {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = grid.patches.iter().map(|p| vec![T::default(); p.len()]).collect();
        Self { grid, values }
    }

    /// Evaluate `f(patch index, patch, node index)` on every node.
    pub fn from_fn<F>(grid: Arc<Grid>, mut f: F) -> Self
    where
        F: FnMut(usize, &Patch, usize) -> T,
    {
        let values = grid
            .patches
            .iter()
            .enumerate()
            .map(|(m, p)| (0..p.len()).map(|i| f(m, p, i)).collect())
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<Vec<T>>) -> Result<Self> {
        if values.len() != grid.patches.len() || values.iter().zip(&grid.patches).any(|(v, p)| v.len() != p.len()) {
            return Err(Error::InvalidInput("value blocks do not match the grid".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.values
    }

    pub fn patch_values(&self, m: usize) -> &[T] {
        &self.values[m]
    }

    pub fn map<U: Copy + Default, F: Fn(T) -> U>(&self, f: F) -> PatchedField<U> {
        PatchedField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.iter().map(|&x| f(x)).collect()).collect(),
        }
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip_map<U: Copy + Default, V: Copy + Default, F: Fn(T, U) -> V>(
        &self,
        other: &PatchedField<U>,
        f: F,
    ) -> PatchedField<V> {
        debug_assert!(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid);
        PatchedField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }

    /// Same grid, values kept only on patch `m`.
    pub fn restricted_to(&self, m: usize) -> Self {
        let mut out = Self::zeros(self.grid.clone());
        out.values[m].copy_from_slice(&self.values[m]);
        out
    }
}

impl PatchedField<Complex64> {
    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn abs(&self) -> RealField {
        self.map(|z| z.norm())
    }

    pub fn scale(&self, a: Complex64) -> Self {
        self.map(|z| z * a)
    }

    /// `self + a·other`
    pub fn axpy(&self, a: Complex64, other: &Self) -> Self {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, z| m.max(z.norm()))
    }
}

impl PatchedField<f64> {
    pub fn to_complex(&self) -> PatchedField<Complex64> {
        self.map(|x| Complex64::new(x, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Composite trapezoid rule summed over patches.
pub fn integrate(s: &RealField) -> f64 {
    let mut total = 0.0;
    for (p, vals) in s.grid.patches.iter().zip(&s.values) {
        total += vals.iter().enumerate().map(|(i, v)| p.trapezoid_weight(i) * v).sum::<f64>();
    }
    total
}

/// `Re ∫ u·conj(v)`
pub fn inner(u: &PatchedField, v: &PatchedField) -> f64 {
    integrate(&u.zip_map(v, |a, b| (a * b.conj()).re))
}

pub fn l2_norm(u: &PatchedField) -> f64 {
    integrate(&u.map(|z| z.norm_sqr())).sqrt()
}

pub fn real_l2_norm(u: &RealField) -> f64 {
    integrate(&u.map(|x| x * x)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_shape_and_center_node() {
        let p = make_patch(&[0.0, 0.0], 16.0, 0.25).unwrap();
        assert_eq!(p.nodes_per_axis(), 129);
        assert_eq!(p.len(), 129 * 129);
        let c = p.center_index();
        assert_eq!(p.node(c)[..2], [0.0, 0.0]);
        let q = make_patch(&[40.0, 0.0], 16.0, 0.25).unwrap();
        assert_eq!(q.nodes_per_axis(), 129);
        assert_eq!(q.node(q.center_index())[..2], [40.0, 0.0]);
        assert_eq!(q.node(0)[..2], [24.0, -16.0]);
    }

    #[test]
    fn overlapping_patches_are_rejected() {
        let a = make_patch(&[0.0, 0.0], 16.0, 0.25).unwrap();
        let b = make_patch(&[20.0, 0.0], 16.0, 0.25).unwrap();
        assert!(matches!(Grid::new(vec![a.clone(), b]), Err(Error::BadGeometry(_))));
        let c = make_patch(&[40.0, 0.0], 16.0, 0.25).unwrap();
        assert!(Grid::new(vec![a, c]).is_ok());
    }

    #[test]
    fn bad_geometry() {
        assert!(make_patch(&[0.0], 5.0, 0.25).is_err());
        assert!(make_patch(&[0.0], 16.0, 0.0).is_err());
        assert!(make_patch(&[0.0; 4], 16.0, 0.25).is_err());
    }

    #[test]
    fn trapezoid_of_constant_is_exact() {
        let g = Arc::new(Grid::single(make_patch(&[3.0, -1.0], 16.0, 0.25).unwrap()));
        let one = RealField::from_fn(g, |_, _, _| 1.0);
        assert!((integrate(&one) - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let g = Arc::new(Grid::single(make_patch(&[0.0, 0.0], 16.0, 0.25).unwrap()));
        let f = RealField::from_fn(g, |_, p, i| {
            let s = p.offset(i);
            s[0] * (-(s[0] * s[0] + s[1] * s[1])).exp()
        });
        assert!(integrate(&f).abs() <= 1e-13);
    }

    #[test]
    fn inner_of_real_field_with_its_rotation_is_zero() {
        let g = Arc::new(Grid::single(make_patch(&[0.0], 12.0, 0.5).unwrap()));
        let u = PatchedField::from_fn(g, |_, p, i| Complex64::new((-p.offset(i)[0].powi(2)).exp(), 0.0));
        let iu = u.scale(Complex64::i());
        assert_eq!(inner(&u, &iu), 0.0);
        assert!((l2_norm(&u).powi(2) - inner(&u, &u)).abs() < 1e-15);
    }
}
