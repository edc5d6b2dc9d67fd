//! `magconc` — experiments on concentrating magnetic NLS solutions.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical failure.

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magconc::{ParamValue, Params};

use config::{ExperimentConfig, GaugeMode, GaugeShiftSpec, Kind, PotentialSpec};
use error::CliError;

#[derive(Parser)]
#[command(name = "magconc", version, about = "Concentrating standing waves of the semiclassical magnetic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that read a bump configuration.
#[derive(Args)]
struct BumpArgs {
    /// JSON experiment config carrying the bump fields (p, dim, eps, potential, centers, geometry, …).
    #[arg(long)]
    config: PathBuf,
    /// Gauge the bumps are built in [default: recenter for one bump, preset otherwise].
    #[arg(long, value_enum)]
    gauge: Option<GaugeMode>,
    /// Shorthand for `--gauge recenter`: shift A so that A(ζ₁) = 0.
    #[arg(long, conflicts_with = "gauge")]
    recenter_gauge: bool,
}

impl BumpArgs {
    fn load(&self, kind: Kind) -> Result<ExperimentConfig, CliError> {
        let mut cfg = config::load(&self.config)?;
        cfg.kind = Some(kind);
        if self.recenter_gauge {
            cfg.gauge = Some(GaugeMode::Recenter);
        } else if self.gauge.is_some() {
            cfg.gauge = self.gauge;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Radial ground state of Δw − w + w^p = 0; CSV columns r, w, dw.
    Groundstate {
        /// Nonlinearity exponent.
        #[arg(long)]
        p: f64,
        /// Space dimension (1–3).
        #[arg(long)]
        dim: usize,
        /// Outer radius of the shooting domain.
        #[arg(long, default_value_t = 40.0)]
        rmax: f64,
        /// Target accuracy of the profile.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Field invariants on a grid plus a `<out>_critical.csv` of critical points.
    FieldScan {
        /// Potential preset: constant, landau, gaussian_bump, double_bump, poly_saddle.
        #[arg(long)]
        preset: String,
        /// Preset parameter `name=value`; vectors as `a,b`, matrices as `a,b;c,d`. Repeatable.
        #[arg(long = "param", value_parser = parse_param, allow_hyphen_values = true)]
        params: Vec<(String, ParamValue)>,
        /// Scan box `lo0,hi0,lo1,hi1[,lo2,hi2]`.
        #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        bounds: Vec<f64>,
        /// Points per axis.
        #[arg(long)]
        n: usize,
        /// Newton seeds per axis for the critical-point search.
        #[arg(long, default_value_t = 9)]
        seeds: usize,
        /// Seed of the random probe points of the derivative check.
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the corrected ansatz and write it as a binary field file.
    Ansatz {
        #[command(flatten)]
        bump: BumpArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// ‖R‖ of the ansatz over an ε list; CSV columns eps, l2_residual.
    ResidualScaling {
        #[command(flatten)]
        bump: BumpArgs,
        /// Decreasing ε list, e.g. 0.2,0.1,0.05,0.025.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy of the ansatz over an ε list and its fit c0 + c2 ε² (+ c4 ε⁴).
    EnergyExpansion {
        #[command(flatten)]
        bump: BumpArgs,
        /// Decreasing ε list.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// Fit without the ε⁴ term.
        #[arg(long)]
        no_quartic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ansatz energy and curl invariant over a grid of single-bump centers.
    Landscape {
        /// Potential preset.
        #[arg(long)]
        preset: String,
        /// Preset parameter `name=value`. Repeatable.
        #[arg(long = "param", value_parser = parse_param, allow_hyphen_values = true)]
        params: Vec<(String, ParamValue)>,
        #[arg(long)]
        eps: f64,
        /// Scan box `lo0,hi0,lo1,hi1`.
        #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        bounds: Vec<f64>,
        /// Points per axis.
        #[arg(long, default_value_t = 9)]
        n: usize,
        /// Profile dimension (must match the preset).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full Lyapunov–Schmidt solve; writes solution.field, report.json and iterations.csv into a directory.
    Solve {
        #[command(flatten)]
        bump: BumpArgs,
        /// Seed centers `x,y[;x,y…]`, one group per bump.
        #[arg(long, allow_hyphen_values = true)]
        seed: Option<String>,
        /// Tolerance on max|c|.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy change of the ansatz under a gauge shift A → A + ∇f.
    GaugeCheck {
        #[command(flatten)]
        bump: BumpArgs,
        /// Gauge function: linear (needs --c) or quadratic (needs --m).
        #[arg(long = "f")]
        f_preset: Option<String>,
        /// Coefficients of f = c·x.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c: Option<Vec<f64>>,
        /// Matrix of f = xᵀMx/2, `a,b;c,d`.
        #[arg(long, allow_hyphen_values = true)]
        m: Option<String>,
        /// Halving sequence of spacings for an extrapolated check.
        #[arg(long, value_delimiter = ',')]
        spacings: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment described by a JSON config (its `kind` selects the experiment).
    Run {
        config: PathBuf,
    },
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_list).collect()
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect()
}

fn parse_param(s: &str) -> Result<(String, ParamValue), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = if value.contains(';') {
        ParamValue::Matrix(parse_matrix(value)?)
    } else if value.contains(',') {
        ParamValue::Vector(parse_list(value)?)
    } else {
        ParamValue::Scalar(value.trim().parse::<f64>().map_err(|e| format!("`{value}`: {e}"))?)
    };
    Ok((name.to_string(), v))
}

fn preset_config(kind: Kind, preset: String, params: Vec<(String, ParamValue)>) -> ExperimentConfig {
    let params: Params = params.into_iter().collect();
    let dim = match params.get("dim") {
        Some(ParamValue::Scalar(d)) => *d as usize,
        _ => 2,
    };
    ExperimentConfig { kind: Some(kind), dim, potential: Some(PotentialSpec { preset, params }), ..Default::default() }
}

fn build(cmd: Command) -> Result<ExperimentConfig, CliError> {
    let cfg = match cmd {
        Command::Groundstate { p, dim, rmax, tol, out } => ExperimentConfig {
            kind: Some(Kind::Groundstate),
            p,
            dim,
            profile: config::ProfileSpec { rmax, tol },
            out: Some(out),
            ..Default::default()
        },
        Command::FieldScan { preset, params, bounds, n, seeds, rng_seed, out } => {
            let mut c = preset_config(Kind::FieldScan, preset, params);
            c.bounds = Some(bounds);
            c.resolution = Some(n);
            c.critical_seeds = Some(seeds);
            c.rng_seed = rng_seed;
            c.out = Some(out);
            c
        }
        Command::Ansatz { bump, out } => {
            let mut c = bump.load(Kind::Ansatz)?;
            c.out = Some(out);
            c
        }
        Command::ResidualScaling { bump, eps, out } => {
            let mut c = bump.load(Kind::ResidualScaling)?;
            c.sweep = eps.or(c.sweep);
            c.out = Some(out);
            c
        }
        Command::EnergyExpansion { bump, eps, no_quartic, out } => {
            let mut c = bump.load(Kind::EnergyExpansion)?;
            c.sweep = eps.or(c.sweep);
            c.quartic &= !no_quartic;
            c.out = Some(out);
            c
        }
        Command::Landscape { preset, params, eps, bounds, n, dim, p, out } => {
            let mut c = preset_config(Kind::Landscape, preset, params);
            c.eps = Some(eps);
            c.bounds = Some(bounds);
            c.resolution = Some(n);
            c.dim = dim;
            c.p = p;
            c.out = Some(out);
            c
        }
        Command::Solve { bump, seed, tol, out } => {
            let mut c = bump.load(Kind::Solve)?;
            if let Some(s) = seed {
                c.seeds = Some(parse_matrix(&s).map_err(|e| CliError::Config(format!("--seed: {e}")))?);
            }
            c.tol = tol.or(c.tol);
            c.out = Some(out);
            c
        }
        Command::GaugeCheck { bump, f_preset, c: coeffs, m, spacings, out } => {
            let mut c = bump.load(Kind::GaugeCheck)?;
            if let Some(f) = f_preset {
                let mut params = Params::new();
                if let Some(v) = coeffs {
                    params.insert("c".into(), ParamValue::Vector(v));
                }
                if let Some(s) = m {
                    params.insert("M".into(), ParamValue::Matrix(parse_matrix(&s).map_err(|e| CliError::Config(format!("--m: {e}")))?));
                }
                c.gauge_shift = Some(GaugeShiftSpec { preset: f, params, spacings: None });
            }
            if let (Some(hs), Some(g)) = (spacings, c.gauge_shift.as_mut()) {
                g.spacings = Some(hs);
            }
            c.out = Some(out);
            c
        }
        Command::Run { config } => config::load(&config)?,
    };
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match build(cli.command).and_then(|cfg| experiments::run(&cfg)) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let label = match e.exit_code() {
                2 => "config error",
                3 => "numerical failure",
                _ => "error",
            };
            eprintln!("{label}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
