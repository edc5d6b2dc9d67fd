//! Experiment configuration: JSON schema, validation with field paths, and
//! construction of the core objects.

use std::path::PathBuf;
use std::sync::Arc;

use magconc::radial::solve_ground_state;
use magconc::{BumpConfig, Params, PatchGeometry, PotentialModel, RadialProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Groundstate,
    FieldScan,
    Ansatz,
    ResidualScaling,
    EnergyExpansion,
    Landscape,
    Solve,
    GaugeCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Groundstate => "groundstate",
            Kind::FieldScan => "field-scan",
            Kind::Ansatz => "ansatz",
            Kind::ResidualScaling => "residual-scaling",
            Kind::EnergyExpansion => "energy-expansion",
            Kind::Landscape => "landscape",
            Kind::Solve => "solve",
            Kind::GaugeCheck => "gauge-check",
        }
    }
}

/// Which gauge the bumps are built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeMode {
    /// The preset's own potential.
    Preset,
    /// Linear shift so that `A(ζ₁) = 0`.
    Recenter,
    /// Quadratic shift so that also `∂A(ζ₁)` is antisymmetric.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub preset: String,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub half_width: Option<f64>,
    pub spacing: Option<f64>,
    pub stencil_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub rmax: f64,
    pub tol: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self { rmax: 40.0, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeShiftSpec {
    /// `linear` (param `c`) or `quadratic` (param `M`).
    pub preset: String,
    #[serde(default)]
    pub params: Params,
    /// Halving sequence of spacings for a refined (extrapolated) check.
    pub spacings: Option<Vec<f64>>,
}

/// One experiment. Which fields are required depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub p: f64,
    pub dim: usize,
    pub eps: Option<f64>,
    pub potential: Option<PotentialSpec>,
    /// Bump centers in `x` units.
    pub centers: Option<Vec<Vec<f64>>>,
    pub phases: Option<Vec<f64>>,
    pub geometry: GeometrySpec,
    pub cutoff_radius: Option<f64>,
    /// Defaults to `recenter` for one bump and `preset` otherwise.
    pub gauge: Option<GaugeMode>,
    pub profile: ProfileSpec,
    /// ε list for scaling studies and fits.
    pub sweep: Option<Vec<f64>>,
    /// Starting centers of a solve (overrides `centers`).
    pub seeds: Option<Vec<Vec<f64>>>,
    /// Multiplier tolerance of a solve.
    pub tol: Option<f64>,
    /// `[lo₀, hi₀, lo₁, hi₁, …]`
    #[serde(rename = "box")]
    pub bounds: Option<Vec<f64>>,
    /// Points per axis of a scan.
    pub resolution: Option<usize>,
    /// Newton seeds per axis of the critical-point search.
    pub critical_seeds: Option<usize>,
    pub gauge_shift: Option<GaugeShiftSpec>,
    /// Fit `E` with an `ε⁴` term.
    pub quartic: bool,
    /// Output file, or directory for `solve`.
    pub out: Option<PathBuf>,
    /// Seeds the random probe points of derivative cross-validation.
    pub rng_seed: u64,
    pub probes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            p: 3.0,
            dim: 2,
            eps: None,
            potential: None,
            centers: None,
            phases: None,
            geometry: GeometrySpec::default(),
            cutoff_radius: None,
            gauge: None,
            profile: ProfileSpec::default(),
            sweep: None,
            seeds: None,
            tol: None,
            bounds: None,
            resolution: None,
            critical_seeds: None,
            gauge_shift: None,
            quartic: true,
            out: None,
            rng_seed: 0,
            probes: 16,
        }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> Result<Kind, CliError> {
        self.kind.ok_or_else(|| bad("kind", "missing"))
    }

    fn require<'a, T>(&'a self, field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        field.as_ref().ok_or_else(|| {
            bad(name, format!("required for kind `{}`", self.kind.map(Kind::name).unwrap_or("?")))
        })
    }

    /// Kind-specific presence checks and range checks on every tolerance.
    pub fn validate(&self) -> Result<Kind, CliError> {
        let kind = self.kind()?;
        positive("p", self.p)?;
        if !(1..=3).contains(&self.dim) {
            return Err(bad("dim", format!("must be 1, 2 or 3, got {}", self.dim)));
        }
        positive("profile.tol", self.profile.tol)?;
        positive("profile.rmax", self.profile.rmax)?;
        if let Some(e) = self.eps {
            positive("eps", e)?;
        }
        if let Some(t) = self.tol {
            positive("tol", t)?;
        }
        if let Some(h) = self.geometry.spacing {
            positive("geometry.spacing", h)?;
        }
        if let Some(l) = self.geometry.half_width {
            positive("geometry.half_width", l)?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.len() < 2 {
                return Err(bad("sweep", "needs at least two values"));
            }
            for (i, e) in sweep.iter().enumerate() {
                positive(&format!("sweep[{i}]"), *e)?;
            }
            if sweep.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad("sweep", "must be strictly decreasing"));
            }
        }
        self.out.as_ref().ok_or_else(|| bad("out", "missing"))?;
        match kind {
            Kind::Groundstate => {}
            Kind::FieldScan => {
                self.require(&self.potential, "potential")?;
                self.require(&self.bounds, "box")?;
                self.require(&self.resolution, "resolution")?;
            }
            Kind::Ansatz => {
                self.require(&self.eps, "eps")?;
                self.require(&self.potential, "potential")?;
                self.require(&self.centers, "centers")?;
            }
            Kind::ResidualScaling | Kind::EnergyExpansion => {
                self.require(&self.potential, "potential")?;
                self.require(&self.centers, "centers")?;
                self.require(&self.sweep, "sweep")?;
            }
            Kind::Landscape => {
                self.require(&self.eps, "eps")?;
                self.require(&self.potential, "potential")?;
                self.require(&self.bounds, "box")?;
                self.require(&self.resolution, "resolution")?;
            }
            Kind::Solve => {
                self.require(&self.eps, "eps")?;
                self.require(&self.potential, "potential")?;
                if self.seeds.is_none() {
                    self.require(&self.centers, "seeds")?;
                }
            }
            Kind::GaugeCheck => {
                self.require(&self.eps, "eps")?;
                self.require(&self.potential, "potential")?;
                self.require(&self.centers, "centers")?;
                let g = self.require(&self.gauge_shift, "gauge_shift")?;
                if let Some(hs) = &g.spacings {
                    for (i, h) in hs.iter().enumerate() {
                        positive(&format!("gauge_shift.spacings[{i}]"), *h)?;
                    }
                }
            }
        }
        if let Some(r) = self.resolution {
            if r < 2 {
                return Err(bad("resolution", "must be at least 2"));
            }
        }
        if let Some(b) = &self.bounds {
            let dim = self.potential_model()?.map(|m| m.dim()).unwrap_or(self.dim);
            if b.len() != 2 * dim {
                return Err(bad("box", format!("needs {} numbers (lo, hi per axis), got {}", 2 * dim, b.len())));
            }
            if let Some(k) = (0..dim).find(|&k| !(b[2 * k] < b[2 * k + 1])) {
                return Err(bad(&format!("box[{}]", 2 * k), "lower bound must be below the upper bound"));
            }
        }
        Ok(kind)
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.as_deref().unwrap_or_default().chunks(2).map(|c| (c[0], c[1])).collect()
    }

    pub fn potential_model(&self) -> Result<Option<PotentialModel>, CliError> {
        let Some(spec) = &self.potential else { return Ok(None) };
        magconc::field::make_potential(&spec.preset, &spec.params)
            .map(Some)
            .map_err(|e| bad("potential", e))
    }

    pub fn profile(&self) -> Result<Arc<RadialProfile>, CliError> {
        Ok(Arc::new(solve_ground_state(self.p, self.dim, self.profile.rmax, self.profile.tol)?))
    }

    fn geometry_for(&self, kind: Kind) -> PatchGeometry {
        let base = if kind == Kind::Solve { PatchGeometry::solver() } else { PatchGeometry::default() };
        PatchGeometry {
            half_width: self.geometry.half_width.unwrap_or(base.half_width),
            spacing: self.geometry.spacing.unwrap_or(base.spacing),
            stencil_order: self.geometry.stencil_order.unwrap_or(base.stencil_order),
        }
    }

    pub fn gauge_mode(&self, k: usize) -> GaugeMode {
        self.gauge.unwrap_or(if k == 1 { GaugeMode::Recenter } else { GaugeMode::Preset })
    }

    /// The bump configuration at `eps` (or the configured ε), gauge applied at the first center.
    pub fn bump_config(&self, kind: Kind, eps: Option<f64>) -> Result<BumpConfig, CliError> {
        let centers = match kind {
            Kind::Solve => self.seeds.clone().or_else(|| self.centers.clone()),
            _ => self.centers.clone(),
        }
        .ok_or_else(|| bad("centers", "missing"))?;
        if let Some((m, c)) = centers.iter().enumerate().find(|(_, c)| c.len() != self.dim) {
            let field = if kind == Kind::Solve && self.seeds.is_some() { "seeds" } else { "centers" };
            return Err(bad(&format!("{field}[{m}]"), format!("needs {} coordinates, got {}", self.dim, c.len())));
        }
        let model = self.potential_model()?.ok_or_else(|| bad("potential", "missing"))?;
        let model = match self.gauge_mode(centers.len()) {
            GaugeMode::Preset => model,
            GaugeMode::Recenter => model.recentered_at(&centers[0]),
            GaugeMode::Symmetric => model.symmetric_gauge_at(&centers[0]),
        };
        let eps = eps.or(self.eps).or_else(|| self.sweep.as_ref().map(|s| s[0])).ok_or_else(|| bad("eps", "missing"))?;
        let mut cfg = BumpConfig::on_geometry(eps, self.profile()?, model, centers, self.geometry_for(kind))?;
        if let Some(ph) = &self.phases {
            cfg.phases = ph.clone();
        }
        if let Some(r) = self.cutoff_radius {
            cfg.cutoff_radius = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_eps_is_named() {
        let cfg = parse(r#"{"kind": "ansatz", "potential": {"preset": "gaussian_bump"}, "centers": [[0, 0]], "out": "x"}"#)
            .unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("eps:"), "{err}");
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let err = parse(r#"{"kind": "solve", "sweep": [0.1, "a"]}"#).unwrap_err().to_string();
        assert!(err.contains("sweep[1]"), "{err}");
        let err = parse(r#"{"kind": "solve", "geometry": {"spacing": 0.1, "wat": 1}}"#).unwrap_err().to_string();
        assert!(err.contains("geometry") && err.contains("wat"), "{err}");
        let err = parse(r#"{"kind": "teleport"}"#).unwrap_err().to_string();
        assert!(err.contains("kind"), "{err}");
    }

    #[test]
    fn tolerances_must_be_positive() {
        let cfg = parse(r#"{"kind": "groundstate", "profile": {"tol": 0}, "out": "x"}"#).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("profile.tol:"));
        let cfg = parse(r#"{"kind": "residual-scaling", "sweep": [0.1, 0.2], "out": "x"}"#).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("decreasing"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse(r#"{"kind": "groundstate", "out": "x"}"#).unwrap();
        let b = parse(r#"{"out": "x", "kind": "groundstate"}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse(r#"{"kind": "groundstate", "out": "x", "p": 2}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
