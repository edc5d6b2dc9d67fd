//! One function per experiment kind; each writes its artifacts and returns a
//! one-line summary for the terminal.

use std::path::{Path, PathBuf};

use magconc::ansatz::build_ansatz;
use magconc::energy::{
    ansatz_energy, expansion_constants, fit_expansion_values, gauge_check, gauge_check_refined, landscape_scan,
    loglog_fit,
};
use magconc::field::{derivative_fd_error, field_at, find_field_critical_points, frobenius_sq, CriticalKind};
use magconc::fieldio::save_field;
use magconc::grid::l2_norm;
use magconc::reduction::reduce_outer;
use magconc::residual::ansatz_residual;
use magconc::SolverSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::output::{num, write_csv, write_json, write_sidecar};

/// Derivative cross-validation: central-difference step and pass threshold.
const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-6;
/// Default multiplier tolerance of `solve`.
const DEFAULT_SOLVE_TOL: f64 = 1e-9;

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn run(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let kind = cfg.validate()?;
    let out = cfg.out.clone().expect("validated");
    match kind {
        Kind::Groundstate => groundstate(cfg, &out),
        Kind::FieldScan => field_scan(cfg, &out),
        Kind::Ansatz => ansatz(cfg, &out),
        Kind::ResidualScaling => residual_scaling(cfg, &out),
        Kind::EnergyExpansion => energy_expansion(cfg, &out),
        Kind::Landscape => landscape(cfg, &out),
        Kind::Solve => solve(cfg, &out),
        Kind::GaugeCheck => gauge(cfg, &out),
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn groundstate(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let prof = cfg.profile()?;
    let rows: Vec<Vec<String>> = prof
        .r_grid()
        .iter()
        .zip(prof.w_vals())
        .zip(prof.dw_vals())
        .map(|((r, w), dw)| vec![num(*r), num(*w), num(*dw)])
        .collect();
    write_csv(out, &header(&["r", "w", "dw"]), &rows)?;
    let k = expansion_constants(&prof);
    let summary = json!({
        "w0": prof.w0(),
        "tail_amp": prof.tail_amp(),
        "tail_rate": prof.tail_rate(),
        "ode_residual_max": prof.ode_residual_max(),
        "a0": k.a0,
        "b0": k.b0,
    });
    write_sidecar(out, cfg, Kind::Groundstate, &[out], summary)?;
    Ok(format!("w(0) = {}, {} rows", prof.w0(), rows.len()))
}

/// Row-major points of a `n^dim` grid over `bounds`.
fn grid_points(bounds: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let dim = bounds.len();
    (0..n.pow(dim as u32))
        .map(|flat| {
            let mut rem = flat;
            let mut x = vec![0.0; dim];
            for d in (0..dim).rev() {
                let (lo, hi) = bounds[d];
                x[d] = lo + (hi - lo) * (rem % n) as f64 / (n - 1) as f64;
                rem /= n;
            }
            x
        })
        .collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn field_scan(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let model = cfg.potential_model()?.expect("validated");
    let bounds = cfg.bounds();
    let dim = model.dim();
    let n = cfg.resolution.expect("validated");
    let mut cols: Vec<&str> = AXES[..dim].to_vec();
    if dim == 2 {
        cols.push("scalar_b");
    }
    cols.push("frobenius_sq");
    let rows: Vec<Vec<String>> = grid_points(&bounds, n)
        .into_iter()
        .map(|x| {
            let fm = field_at(&model, &x);
            let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
            if let Some(b) = fm.scalar_b() {
                row.push(num(b));
            }
            row.push(num(frobenius_sq(&fm)));
            row
        })
        .collect();
    write_csv(out, &header(&cols), &rows)?;

    let scan = find_field_critical_points(&model, &bounds, cfg.critical_seeds.unwrap_or(9))?;
    let crit_path = with_suffix(out, "_critical.csv");
    let mut crit_cols: Vec<String> = header(&AXES[..dim]);
    crit_cols.extend(header(&["kind", "frobenius_sq"]));
    crit_cols.extend((0..dim).map(|i| format!("hessian_eig{i}")));
    let crit_rows: Vec<Vec<String>> = scan
        .points
        .iter()
        .map(|c| {
            let mut row: Vec<String> = c.point.iter().map(|v| num(*v)).collect();
            row.push(kind_name(c.kind).into());
            row.push(num(c.value));
            row.extend(c.hessian_eigenvalues.iter().map(|v| num(*v)));
            row
        })
        .collect();
    write_csv(&crit_path, &crit_cols, &crit_rows)?;

    // analytic derivatives against central differences at random points of the box
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let probes: Vec<Vec<f64>> =
        (0..cfg.probes).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect()).collect();
    let fd_errors: Vec<f64> = probes.iter().map(|x| derivative_fd_error(&model, x, FD_STEP)).collect();
    let fd_max = fd_errors.iter().copied().fold(0.0, f64::max);
    let summary = json!({
        "points": rows.len(),
        "critical_points": scan.points.len(),
        "constant_field": scan.constant_field,
        "failed_seeds": scan.failed_seeds,
        "derivative_check": {
            "step": FD_STEP,
            "tolerance": FD_TOL,
            "probes": probes,
            "max_error": fd_max,
            "passed": fd_max < FD_TOL,
        },
    });
    write_sidecar(out, cfg, Kind::FieldScan, &[out, &crit_path], summary.clone())?;
    write_sidecar(&crit_path, cfg, Kind::FieldScan, &[out, &crit_path], summary)?;
    if fd_max >= FD_TOL {
        return Err(CliError::Check(format!("analytic derivatives deviate from central differences by {fd_max:.3e}")));
    }
    Ok(format!("{} points, {} critical points, derivative check {fd_max:.1e}", rows.len(), scan.points.len()))
}

fn kind_name(k: CriticalKind) -> &'static str {
    match k {
        CriticalKind::Max => "max",
        CriticalKind::Min => "min",
        CriticalKind::Saddle => "saddle",
        CriticalKind::Degenerate => "degenerate",
    }
}

fn ansatz(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let bc = cfg.bump_config(Kind::Ansatz, None)?;
    let w = build_ansatz(&bc)?;
    save_field(out, &w)?;
    let (_, r) = ansatz_residual(&bc)?;
    let summary = json!({
        "nodes": w.grid().len(),
        "l2_norm": l2_norm(&w),
        "max_abs": w.max_abs(),
        "l2_residual": l2_norm(&r),
        "dropped_tail_bound": bc.dropped_tail_bound(),
        "tail_threshold": 1e-12,
    });
    write_sidecar(out, cfg, Kind::Ansatz, &[out], summary)?;
    Ok(format!("{} nodes, ‖R‖ = {:.3e}", w.grid().len(), l2_norm(&r)))
}

fn residual_scaling(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let sweep = cfg.sweep.clone().expect("validated");
    let base = cfg.bump_config(Kind::ResidualScaling, Some(sweep[0]))?;
    let norms = sweep
        .iter()
        .map(|&e| Ok(l2_norm(&ansatz_residual(&base.with_eps(e)?)?.1)))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let rows: Vec<Vec<String>> = sweep.iter().zip(&norms).map(|(e, r)| vec![num(*e), num(*r)]).collect();
    write_csv(out, &header(&["eps", "l2_residual"]), &rows)?;
    // a vanishing residual (constant field) has no meaningful slope
    let fit = if norms.iter().all(|r| *r > 0.0) { Some(loglog_fit(&sweep, &norms)?) } else { None };
    let slope = fit.as_ref().map(|f| f.fitted_slope);
    write_sidecar(out, cfg, Kind::ResidualScaling, &[out], json!({ "fit": fit, "max_residual": norms.iter().copied().fold(0.0, f64::max) }))?;
    Ok(match slope {
        Some(s) => format!("log–log slope {s:.4}"),
        None => "residual vanishes".into(),
    })
}

fn energy_expansion(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let sweep = cfg.sweep.clone().expect("validated");
    let base = cfg.bump_config(Kind::EnergyExpansion, Some(sweep[0]))?;
    let parts = sweep.iter().map(|&e| Ok(ansatz_energy(&base.with_eps(e)?)?)).collect::<Result<Vec<_>, CliError>>()?;
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .zip(&parts)
        .map(|(e, b)| vec![num(*e), num(b.total), num(b.kinetic), num(b.mass), num(b.nonlinear)])
        .collect();
    write_csv(out, &header(&["eps", "E", "kinetic", "mass", "nonlinear"]), &rows)?;
    let energies: Vec<f64> = parts.iter().map(|b| b.total).collect();
    let fit = fit_expansion_values(&base, &sweep, energies.clone(), cfg.quartic)?;
    // c2 counts as resolved only well above what the fit residual could fake over the sweep
    let e2_span = sweep[0].powi(2) - sweep[sweep.len() - 1].powi(2);
    let c2_noise = 10.0 * fit.rms_residual / e2_span;
    let dev: Vec<f64> = energies.iter().map(|e| (e - fit.c0).abs()).collect();
    let slope = if fit.c2.abs() > c2_noise && dev.iter().all(|d| *d > 0.0) {
        loglog_fit(&sweep, &dev).ok().map(|f| f.fitted_slope)
    } else {
        None
    };
    let k = expansion_constants(&base.profile);
    let summary = json!({
        "c0": fit.c0,
        "c2": fit.c2,
        "c4": fit.c4,
        "slope": slope,
        "curl_sum": fit.curl_sum,
        "c2_over_curl_sum": fit.ratio,
        "rms_residual": fit.rms_residual,
        "c2_noise": c2_noise,
        "c2_resolved": fit.c2.abs() > c2_noise,
        "a0": k.a0,
        "b0": k.b0,
        "c0_over_a0": fit.c0 / k.a0,
    });
    write_sidecar(out, cfg, Kind::EnergyExpansion, &[out], summary)?;
    Ok(format!("c0 = {:.8}, c2 = {:.6}, c2/curl = {:.5}", fit.c0, fit.c2, fit.ratio))
}

fn landscape(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let bounds = cfg.bounds();
    let mut tpl = cfg.clone();
    let mid: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    tpl.centers = Some(vec![mid]);
    tpl.gauge = Some(crate::config::GaugeMode::Recenter);
    let template = tpl.bump_config(Kind::Landscape, None)?;
    let scan = landscape_scan(&template, &bounds, template.eps, cfg.resolution.expect("validated"))?;
    let dim = bounds.len();
    let mut cols: Vec<&str> = AXES[..dim].to_vec();
    cols.extend(["energy", "curl_invariant"]);
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.zeta.iter().map(|v| num(*v)).collect();
            row.push(num(r.energy));
            row.push(num(r.curl_invariant));
            row
        })
        .collect();
    write_csv(out, &header(&cols), &rows)?;
    let summary = json!({
        "argmax_energy": scan.rows[scan.argmax_energy].zeta,
        "argmax_curl_invariant": scan.rows[scan.argmax_curl].zeta,
        "argmax_cell_distance": scan.argmax_cell_distance(),
    });
    write_sidecar(out, cfg, Kind::Landscape, &[out], summary)?;
    Ok(format!("{} points, argmax distance {} cells", rows.len(), scan.argmax_cell_distance()))
}

fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let bc = cfg.bump_config(Kind::Solve, None)?;
    let tol = cfg.tol.unwrap_or(DEFAULT_SOLVE_TOL);
    let res = reduce_outer(&bc, tol, &SolverSettings::default())?;
    let field_path = out.join("solution.field");
    let log_path = out.join("iterations.csv");
    let report_path = out.join("report.json");
    save_field(&field_path, &res.u)?;
    let mut cols: Vec<String> = header(&["iteration"]);
    for m in 0..bc.k() {
        cols.extend(AXES[..bc.dim].iter().map(|a| format!("zeta{m}_{a}")));
    }
    cols.extend(header(&["max_multiplier", "inner_iters", "residual_norm"]));
    let rows: Vec<Vec<String>> = res
        .history
        .iter()
        .map(|s| {
            let mut row = vec![s.iteration.to_string()];
            row.extend(s.centers.iter().flatten().map(|v| num(*v)));
            row.extend([num(s.max_multiplier), s.inner_iters.to_string(), num(s.residual_norm)]);
            row
        })
        .collect();
    write_csv(&log_path, &cols, &rows)?;
    let summary = json!({
        "converged": true,
        "zeta": res.cfg.centers,
        "sigma": res.cfg.phases,
        "peaks": res.peaks,
        "max_multiplier": res.state.max_multiplier(),
        "multipliers": res.state.c,
        "projected_residual": res.state.residual_norm,
        "full_residual": res.full_residual,
        "phi_norm": res.state.phi_norm,
        "outer_iterations": res.state.outer_iters,
        "inner_iterations": res.state.inner_iters,
        "krylov_iterations": res.state.krylov_iters,
        "contraction_ratios": res.state.contraction_ratios,
        "tol": tol,
        "dropped_tail_bound": res.cfg.dropped_tail_bound(),
    });
    let outputs: [&Path; 3] = [&field_path, &log_path, &report_path];
    let mut report = crate::output::provenance(cfg, Kind::Solve);
    report["outputs"] = json!(["solution.field", "iterations.csv", "report.json"]);
    report["summary"] = summary.clone();
    write_json(&report_path, &report)?;
    write_sidecar(&log_path, cfg, Kind::Solve, &outputs, summary.clone())?;
    write_sidecar(&field_path, cfg, Kind::Solve, &outputs, summary)?;
    Ok(format!(
        "ζ = {:?}, max|c| = {:.2e}, residual {:.2e}",
        res.cfg.centers,
        res.state.max_multiplier(),
        res.full_residual
    ))
}

fn gauge(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let bc = cfg.bump_config(Kind::GaugeCheck, None)?;
    let spec = cfg.gauge_shift.as_ref().expect("validated");
    let (rows, summary, line) = match &spec.spacings {
        Some(hs) => {
            let r = gauge_check_refined(&bc, &spec.preset, &spec.params, hs, bc.stencil_order)?;
            let rows = r.spacings.iter().zip(&r.differences).map(|(h, d)| vec![num(*h), num(*d)]).collect();
            let line = format!("extrapolated relative difference {:.3e}", r.extrapolated.abs());
            (rows, serde_json::to_value(&r).map_err(|e| CliError::Io(e.to_string()))?, line)
        }
        None => {
            let g = gauge_check(&bc, &spec.preset, &spec.params)?;
            let rows = vec![vec![num(bc.spacing), num((g.shifted_energy - g.energy) / g.energy)]];
            let line = format!("relative difference {:.3e}", g.relative_difference);
            (rows, serde_json::to_value(&g).map_err(|e| CliError::Io(e.to_string()))?, line)
        }
    };
    write_csv(out, &header(&["spacing", "relative_difference"]), &rows)?;
    write_sidecar(out, cfg, Kind::GaugeCheck, &[out], summary)?;
    Ok(line)
}
