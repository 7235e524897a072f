use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use kinetic_core::chains::{build_chain, chain_lower_bound, perturbation_check, NearDiagonalParams};
use kinetic_core::coefficients::{measure_ellipticity, CoefficientField, EllipticitySampling, FieldKind};
use kinetic_core::geometry::PhasePoint;
use kinetic_core::nash_g::{adjoint_kernel_residual, nash_campaign, write_level_set_csv, GWeight, NashParams};
use kinetic_core::profiles::fit_envelope;
use kinetic_core::solver::{chapman_kolmogorov_residual, estimate_kernel, Grid, SolverConfig};
use kinetic_core::trajectories::{check_properties, default_r_grid, TrajectoryFamily};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CampaignConfig, Command};
use crate::CliError;

/// What a command measured, plus the assertions it failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub failures: Vec<String>,
    pub files: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

fn relative(out: &Path, file: &Path) -> String {
    file.strip_prefix(out).unwrap_or(file).display().to_string()
}

pub fn run(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    match cfg.command.expect("resolved config names its command") {
        Command::Simulate => simulate(cfg, out),
        Command::VerifyBounds => verify_bounds(cfg, out),
        Command::GBound => g_bound(cfg),
        Command::LevelSet => level_set(cfg, out),
        Command::Chain => chain(cfg, out),
        Command::Trajectories => trajectories(cfg, out),
        Command::Adjoint => adjoint(cfg),
    }
}

fn setup(cfg: &CampaignConfig) -> Result<(Grid, SolverConfig, Vec<(String, CoefficientField)>), CliError> {
    let grid = cfg.grid()?;
    let solver = cfg.solver_config(&grid)?;
    Ok((grid, solver, cfg.fields()?))
}

fn simulate(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    let (grid, solver, fields) = setup(cfg)?;
    let p = &cfg.simulate;
    let mut outcome = Outcome::default();
    let mut runs = Vec::new();
    for (label, field) in &fields {
        let source = PhasePoint::d1(0.0, p.source[0], p.source[1]);
        let kernel = estimate_kernel(&source, p.t_end, field, &grid, &solver)?;
        let oracle = match field.descriptor().kind {
            FieldKind::Constant { value } => Some(kernel.oracle_l1_error(value)?),
            _ => None,
        };
        outcome.check(kernel.mass_drift() <= p.mass_tol, || {
            format!("{label}: mass drift {:.3e} exceeds {:.1e}", kernel.mass_drift(), p.mass_tol)
        });
        if let Some(err) = oracle {
            outcome.check(err <= p.oracle_tol, || {
                format!("{label}: oracle L1 error {err:.3e} exceeds {:.1e}", p.oracle_tol)
            });
        }
        let ck = match p.chapman_kolmogorov {
            Some([t0, t1, t2]) => {
                let src = PhasePoint::d1(t0, p.source[0], p.source[1]);
                let report = chapman_kolmogorov_residual(&src, (t0, t1, t2), field, &grid, &solver)?;
                outcome.check(report.residual <= p.ck_tol, || {
                    format!("{label}: Chapman-Kolmogorov residual {:.3e} exceeds {:.1e}", report.residual, p.ck_tol)
                });
                Some(report)
            }
            None => None,
        };
        if p.export {
            let (csv, json) = kernel.export(out, &format!("kernel-{label}"))?;
            outcome.files.push(relative(out, &csv));
            outcome.files.push(relative(out, &json));
        }
        runs.push(json!({
            "label": label,
            "field": field.descriptor(),
            "steps": kernel.run.steps,
            "dt": kernel.run.dt,
            "mass": kernel.field.mass(&grid),
            "mass_drift": kernel.mass_drift(),
            "min_value": kernel.min_value(),
            "peak": kernel.field.max(),
            "boundary_tail_ratio": kernel.boundary_tail_ratio,
            "widths": kernel.widths,
            "oracle_l1_error": oracle,
            "chapman_kolmogorov": ck,
        }));
    }
    outcome.result = json!({ "runs": runs });
    Ok(outcome)
}

fn verify_bounds(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    let (grid, solver, fields) = setup(cfg)?;
    let p = &cfg.bounds;
    let mut outcome = Outcome::default();
    let mut members = Vec::new();
    let origin = PhasePoint::d1(0.0, 0.0, 0.0);
    for (label, field) in &fields {
        let kernel = estimate_kernel(&origin, 1.0, field, &grid, &solver)?;
        let samples = kernel.envelope_samples(p.e_max, p.per_axis)?;
        let near = kinetic_core::chains::near_diagonal_minimum(&kernel, p.rho0, p.near_diagonal_samples)?;
        outcome.check(kernel.mass_drift() <= p.mass_tol, || {
            format!("{label}: mass drift {:.3e} exceeds {:.1e}", kernel.mass_drift(), p.mass_tol)
        });
        outcome.check(near > 0.0, || format!("{label}: near-diagonal minimum {near:.3e} is not positive"));
        let path = out.join(format!("envelope-{label}.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "x_bar,v_bar,value")?;
        for (gap, value) in &samples {
            writeln!(w, "{},{},{:e}", gap.x_bar[0], gap.v_bar[0], value)?;
        }
        w.flush()?;
        outcome.files.push(relative(out, &path));
        let fit = match fit_envelope(&samples, 1) {
            Ok(fit) => {
                let brackets = fit.brackets(&samples, 1, p.rel_tol);
                outcome.check(brackets, || format!("{label}: fitted envelopes do not bracket every sample"));
                outcome.check(fit.constants.is_ordered(), || {
                    format!(
                        "{label}: rates out of order, c1_low = {:.4} < C1_up = {:.4}",
                        fit.constants.c1_low, fit.constants.c1_up
                    )
                });
                Some(fit)
            }
            Err(e) => {
                outcome.failures.push(format!("{label}: envelope fit failed: {e}"));
                None
            }
        };
        members.push(json!({
            "label": label,
            "field": field.descriptor(),
            "mass_drift": kernel.mass_drift(),
            "near_diagonal_minimum": near,
            "fit": fit,
            "samples": samples.len(),
        }));
    }
    outcome.result = json!({ "members": members });
    Ok(outcome)
}

fn g_bound(cfg: &CampaignConfig) -> Result<Outcome, CliError> {
    let (grid, solver, fields) = setup(cfg)?;
    let p = &cfg.g_bound;
    let params = NashParams { weight: GWeight::new(p.weight_radius)?, floor: p.floor, ..NashParams::default() };
    let mut outcome = Outcome::default();
    let mut runs = Vec::new();
    let mut worst = f64::INFINITY;
    for (label, field) in &fields {
        for &[x, v] in &p.sources {
            let r = nash_campaign((x, v), field, &grid, &solver, &params)?;
            outcome.check(r.g1.is_finite(), || format!("{label} at ({x}, {v}): G(1) is not finite"));
            outcome.check(r.g_floor_sensitivity <= p.floor_tol, || {
                format!(
                    "{label} at ({x}, {v}): floor sensitivity {:.3e} exceeds {:.1e}",
                    r.g_floor_sensitivity, p.floor_tol
                )
            });
            if let Some(reference) = p.reference {
                outcome.check((r.g1 - reference).abs() <= p.reference_tol, || {
                    format!(
                        "{label} at ({x}, {v}): G(1) = {:.4} is not within {} of {reference}",
                        r.g1, p.reference_tol
                    )
                });
            }
            worst = worst.min(r.g1);
            runs.push(json!({
                "label": label,
                "source": [x, v],
                "G1": r.g1,
                "floor_sensitivity": r.g_floor_sensitivity,
                "moments": r.moments,
            }));
        }
    }
    outcome.result = json!({ "runs": runs, "C_emp": -worst });
    Ok(outcome)
}

fn level_set(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    let (grid, solver, fields) = setup(cfg)?;
    let p = &cfg.level_set;
    let mut outcome = Outcome::default();
    let mut members = Vec::new();
    let sampling = EllipticitySampling::uniform((0.0, 1.0), 9, grid.lx, 65, grid.lv, 65);
    let mut worst: f64 = 0.0;
    let mut shape: f64 = 0.0;
    for (label, field) in &fields {
        let r = nash_campaign((p.source[0], p.source[1]), field, &grid, &solver, &p.nash)?;
        let ell = measure_ellipticity(field, &sampling)?;
        let weight = 1.0 / ell.lambda_hat + ell.big_lambda_hat;
        outcome.check(r.statistic.is_finite(), || format!("{label}: level-set statistic is not finite"));
        let path = out.join(format!("level-set-{label}.csv"));
        let curve = kinetic_core::nash_g::LevelSetCurve { c: r.c_f, statistic: r.statistic, curve: r.curve.clone() };
        write_level_set_csv(&curve, &path)?;
        outcome.files.push(relative(out, &path));
        worst = worst.max(r.statistic);
        shape = shape.max(r.statistic / weight);
        members.push(json!({
            "label": label,
            "field": field.descriptor(),
            "statistic": r.statistic,
            "c_f": r.c_f,
            "ellipticity": ell,
            "statistic_over_weight": r.statistic / weight,
            "omega_measure": r.omega_measure,
            "omega_s_measure": r.omega_s_measure,
            "smallest_half_s": r.smallest_half_s,
            "moments": r.moments,
        }));
    }
    outcome.result = json!({ "members": members, "max_statistic": worst, "max_statistic_over_weight": shape });
    Ok(outcome)
}

fn chain(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    let c = &cfg.chain;
    let p = NearDiagonalParams::new(c.rho0, c.c0)?;
    let k0 = c.k0.unwrap_or(p.default_k0());
    let eta = c.eta.unwrap_or(c.rho0 / 4.0);
    let mut outcome = Outcome::default();
    let chain = match build_chain(&c.x_bar, &c.v_bar, &p, k0) {
        Ok(chain) => chain,
        Err(e) => {
            outcome.failures.push(e.to_string());
            outcome.result = json!({ "k0": k0, "error": e.to_string() });
            return Ok(outcome);
        }
    };
    let bound = 0.5 * c.rho0 * chain.dt.sqrt();
    let flags = json!({
        "endpoints": chain.endpoint_error() <= 1e-10,
        "transport": chain.max_transport_defect() <= 1e-10 * (1.0 + c.x_bar.iter().map(|x| x.abs()).fold(0.0, f64::max)),
        "increments": chain.max_increment() <= bound,
        "perturbation": perturbation_check(&chain, eta, c.random_per_box, c.seed),
    });
    for (name, ok) in flags.as_object().expect("object literal") {
        outcome.check(ok.as_bool() == Some(true), || format!("chain constraint '{name}' failed"));
    }
    let lower = chain_lower_bound(chain.k, eta, &p, chain.dim())?;
    if c.write_centres {
        let path = out.join("chain-centres.csv");
        let mut w = BufWriter::new(fs::File::create(&path)?);
        let d = chain.dim();
        let header: Vec<String> = std::iter::once("j,t".to_string())
            .chain((0..d).map(|i| format!("x{i}")))
            .chain((0..d).map(|i| format!("v{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for j in 0..=chain.k {
            let row: Vec<String> = chain.x(j).iter().chain(chain.v(j)).map(|c| format!("{c:e}")).collect();
            writeln!(w, "{j},{:e},{}", j as f64 * chain.dt, row.join(","))?;
        }
        w.flush()?;
        outcome.files.push(relative(out, &path));
    }
    outcome.result = json!({
        "k": chain.k,
        "k0": k0,
        "dt": chain.dt,
        "mu": chain.mu,
        "eta": eta,
        "rho0": c.rho0,
        "max_increment": chain.max_increment(),
        "increment_bound": bound,
        "endpoint_error": chain.endpoint_error(),
        "max_transport_defect": chain.max_transport_defect(),
        "constraints": flags,
        "lower_bound": lower,
    });
    Ok(outcome)
}

fn trajectories(cfg: &CampaignConfig, out: &Path) -> Result<Outcome, CliError> {
    let t = &cfg.trajectories;
    let mut outcome = Outcome::default();
    let grid = default_r_grid();
    let mut reports = Vec::new();
    for (i, kind) in t.families.iter().enumerate() {
        let name = match kind {
            kinetic_core::trajectories::FamilyKind::Straight => "straight",
            kinetic_core::trajectories::FamilyKind::LogOscillatory(_) => "log-oscillatory",
        };
        let fam = TrajectoryFamily::new(name, t.gap, t.dim, *kind)
            .map_err(|e| CliError::Config(format!("trajectories.families[{i}]: {e}")))?;
        let report = check_properties(&fam, &t.tolerances, &grid)?;
        let path = out.join(format!("trajectory-{i}-{name}.csv"));
        report.write_curve_csv(&path)?;
        outcome.files.push(relative(out, &path));
        let f = report.pass;
        for (prop, ok) in [
            ("endpoints", f.endpoints),
            ("kinetic relation", f.kinetic_relation),
            ("det B near 0", f.det_b),
            ("property (4)", f.property4),
        ] {
            outcome.check(ok, || format!("family {i} ({name}): {prop} failed"));
        }
        if t.require_critical {
            outcome.check(f.critical(), || format!("family {i} ({name}) is not critical"));
        }
        let mut summary = to_value(&report)?;
        summary.as_object_mut().expect("struct serializes to an object").remove("curve");
        reports.push(summary);
    }
    outcome.result = json!({ "families": reports });
    Ok(outcome)
}

fn adjoint(cfg: &CampaignConfig) -> Result<Outcome, CliError> {
    let (grid, solver, fields) = setup(cfg)?;
    let p = &cfg.adjoint;
    let points: Vec<(f64, f64)> = p.points.iter().map(|q| (q[0], q[1])).collect();
    let mut outcome = Outcome::default();
    let mut runs = Vec::new();
    for (label, field) in &fields {
        let r = adjoint_kernel_residual(field, (p.target[0], p.target[1]), &points, &grid, &solver)?;
        outcome.check(r.max_relative_error <= p.tol, || {
            format!("{label}: adjoint residual {:.3e} exceeds {}", r.max_relative_error, p.tol)
        });
        runs.push(json!({ "label": label, "report": r }));
    }
    outcome.result = json!({ "runs": runs });
    Ok(outcome)
}
