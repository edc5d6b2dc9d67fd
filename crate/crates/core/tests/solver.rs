mod common;

use std::sync::OnceLock;

use common::*;
use magconc::fieldio::{read_field, write_field};
use magconc::grid::{inner, l2_norm};
use magconc::reduction::{solve_inner, solve_projected, Linearization};
use magconc::{BumpConfig, ParamValue, PatchGeometry, PatchedField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> PatchGeometry {
    PatchGeometry { half_width: 10.0, spacing: 0.25, stencil_order: 6 }
}

fn bump_cfg(eps: f64, geometry: PatchGeometry) -> BumpConfig {
    let v = preset("gaussian_bump", &[]);
    BumpConfig::on_geometry(eps, profile(2), v, vec![vec![0.5, 0.0]], geometry).unwrap()
}

fn lin() -> &'static Linearization {
    static L: OnceLock<Linearization> = OnceLock::new();
    L.get_or_init(|| Linearization::new(&bump_cfg(0.1, small())).unwrap())
}

fn random_field(l: &Linearization, seed: u64) -> PatchedField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PatchedField::from_fn(l.grid().clone(), |_, p, i| {
        let s = p.offset(i);
        let env = (-0.05 * (s[0] * s[0] + s[1] * s[1])).exp();
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * env
    })
}

fn node_dot(a: &PatchedField, b: &PatchedField) -> f64 {
    a.patch_values(0).iter().zip(b.patch_values(0)).map(|(x, y)| (x * y.conj()).re).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linearization_is_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let l = lin();
        let (u, v) = (random_field(l, s1), random_field(l, s2));
        let lhs = node_dot(&l.apply(&u), &v);
        let rhs = node_dot(&u, &l.apply(&v));
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{} {}", lhs, rhs);
    }

    #[test]
    fn linearization_is_real_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let l = lin();
        let (u, v) = (random_field(l, s1), random_field(l, s2));
        let combo = u.scale(Complex64::new(a, 0.0)).axpy(Complex64::new(b, 0.0), &v);
        let expect = l.apply(&u).scale(Complex64::new(a, 0.0)).axpy(Complex64::new(b, 0.0), &l.apply(&v));
        let err = l2_norm(&l.apply(&combo).axpy(Complex64::new(-1.0, 0.0), &expect));
        prop_assert!(err < 1e-10 * l2_norm(&expect).max(1.0), "{}", err);
    }

    #[test]
    fn field_files_roundtrip(seed in any::<u64>()) {
        let u = random_field(lin(), seed);
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        prop_assert_eq!(back.patch_values(0), u.patch_values(0));
        prop_assert_eq!(&**back.grid(), &**u.grid());
    }
}

#[test]
fn projected_solve_meets_constraints() {
    let cfg = bump_cfg(0.1, small());
    let rhs = random_field(lin(), 11);
    let sol = solve_projected(&rhs, &cfg).unwrap();
    assert!(sol.rel_residual < 1e-8, "{}", sol.rel_residual);
    assert!(sol.constraint_violation < 1e-10 * l2_norm(&rhs), "{}", sol.constraint_violation);
    // the output is orthogonal to every χZ direction, so re-solving Lφ
    // reproduces φ and the multipliers of the original right-hand side
    let l = lin();
    for z in l.constraint_basis() {
        assert!(inner(&z, &sol.phi).abs() < 1e-8);
    }
    let again = l.solve_projected(&l.apply(&sol.phi), &Default::default()).unwrap();
    let diff = l2_norm(&again.phi.axpy(Complex64::new(-1.0, 0.0), &sol.phi));
    assert!(diff < 1e-7 * l2_norm(&sol.phi), "{diff}");
}

#[test]
fn constant_potential_needs_no_correction() {
    let v = preset("constant", &[("a", ParamValue::Vector(vec![0.3, -0.2]))]);
    let cfg = BumpConfig::on_geometry(0.1, profile(2), v, vec![vec![0.5, 0.0]], PatchGeometry::solver()).unwrap();
    // a constant A is pure gauge, so only discretization error is left to correct
    let state = solve_inner(&cfg, 1e-10).unwrap();
    assert!(state.inner_iters <= 2, "{}", state.inner_iters);
    assert!(state.phi_norm < 1e-6, "{}", state.phi_norm);
    assert!(state.max_multiplier() < 1e-8, "{}", state.max_multiplier());
}

#[test]
fn inner_fixed_point_contracts_on_a_bump() {
    let state = solve_inner(&bump_cfg(0.1, small()), 1e-10).unwrap();
    assert!(state.contraction_ratios.iter().all(|r| *r < 0.5), "{:?}", state.contraction_ratios);
    assert!(state.residual_norm < 1e-8, "{}", state.residual_norm);
    assert!(state.phi_norm > 0.0);
}
