#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use magconc::field::make_potential;
use magconc::radial::solve_ground_state;
use magconc::{ParamValue, Params, PotentialModel, RadialProfile};

/// Cubic ground states for N = 1, 2, 3, solved once per test binary.
pub fn profile(dim: usize) -> Arc<RadialProfile> {
    static P: OnceLock<Vec<Arc<RadialProfile>>> = OnceLock::new();
    P.get_or_init(|| (1..=3).map(|d| Arc::new(solve_ground_state(3.0, d, 40.0, 1e-10).unwrap())).collect())[dim - 1]
        .clone()
}

pub fn params(items: &[(&str, ParamValue)]) -> Params {
    items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn preset(name: &str, items: &[(&str, ParamValue)]) -> PotentialModel {
    make_potential(name, &params(items)).unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

// independent shooting + quadrature oracles (p = 3)
pub const W0_N2: f64 = 2.2062008646507145;
pub const W0_N3: f64 = 4.3373876799770095;
pub const A0_N2: f64 = 5.850448310;
pub const B0_N2: f64 = 1.7368577;
pub const A0_N3: f64 = 18.897251302546042;
pub const B0_N3: f64 = 1.692962131608401;
