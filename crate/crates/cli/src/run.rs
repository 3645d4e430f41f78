//! Experiment orchestration: each experiment builds its pipeline from the
//! resolved config, runs it, and leaves CSV artifacts plus a manifest in
//! the output directory. Failures surface as coded errors (2 config,
//! 3 solver non-convergence, 4 internal) with single-line records.

use crate::config::{Experiment, RunConfig};
use nullctrl_core::forward::{
    solve_heat_neumann, solve_trajectory, stream_velocity, Operators, TrajectoryBar,
};
use nullctrl_core::hum::{hum_solve, DualConfig, HumProblem, HumResult, TerminalPair};
use nullctrl_core::io::{
    write_carleman_table, write_cg_log, write_e_norm_report, write_manifest, write_neumann_report,
    write_picard_history, write_scalar_field, write_sweep_summary, write_vector_field,
    write_weight_report, write_weight_table, SweepRow,
};
use nullctrl_core::picard::picard_control;
use nullctrl_core::verify::{carleman_ratio, neumann_obstruction};
use nullctrl_core::weights::{build_weights, check_weight_inequalities};
use nullctrl_core::{
    CoreError, EtaField, GridSpec, MaskField, ScalarField, TimeProfile, VectorField, WeightBundle,
    WeightReport,
};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    NonConvergence(String),
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::NonConvergence(_) => 3,
            RunError::Internal(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::NonConvergence(_) => "non-convergence",
            RunError::Internal(_) => "internal",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::NonConvergence(m) | RunError::Internal(m) => m,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Cfl { .. } => RunError::NonConvergence(e.to_string()),
            CoreError::Io(_) => RunError::Internal(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

struct Pipeline {
    ops: Operators,
    bundle: WeightBundle,
    bar: TrajectoryBar,
    mask: MaskField,
}

fn build_bundle(cfg: &RunConfig) -> Result<WeightBundle, RunError> {
    let eta = EtaField::build(&cfg.domain, &cfg.grid)?;
    let profile = TimeProfile::build(cfg.domain.t_final, cfg.grid.nt)?;
    Ok(build_weights(eta, profile, cfg.s, cfg.lambda)?)
}

fn build_pipeline(cfg: &RunConfig) -> Result<Pipeline, RunError> {
    let g = &cfg.grid;
    let ops = Operators::new(g);
    let bundle = build_bundle(cfg)?;
    let amp = cfg.bar_amp;
    let th_bar0 = ScalarField::from_fn(g, |_, y| amp * (PI * y).sin());
    let bar = solve_trajectory(&th_bar0, g)?;
    let mask = MaskField::from_region(g, &cfg.domain, &cfg.domain.omega);
    Ok(Pipeline {
        ops,
        bundle,
        bar,
        mask,
    })
}

fn sine_data(g: &GridSpec, amp: f64) -> ScalarField {
    ScalarField::from_fn(g, |x, y| amp * (PI * x).sin() * (PI * y).sin())
}

/// Table printed by `--check`; no artifacts are written.
pub fn check(cfg: &RunConfig) -> Result<WeightReport, RunError> {
    let bundle = build_bundle(cfg)?;
    let report = check_weight_inequalities(&bundle);
    for c in &report.checks {
        println!(
            "{}: {} (worst relative slack {:.3e})",
            c.name,
            if c.passed { "ok" } else { "VIOLATED" },
            c.worst_slack
        );
    }
    println!(
        "weight inequalities on {}x{}x{}: {}",
        cfg.grid.nx,
        cfg.grid.ny,
        cfg.grid.nt,
        if report.all_passed { "all passed" } else { "FAILED" }
    );
    Ok(report)
}

/// Runs the configured experiment; the manifest is written before any
/// solver starts, so even an aborted run records what it attempted.
pub fn execute(cfg: &RunConfig) -> Result<(), RunError> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| {
        RunError::Internal(format!("cannot create {}: {e}", dir.display()))
    })?;
    write_manifest(&dir.join("run.manifest"), &cfg.manifest_pairs())?;
    match cfg.experiment {
        Experiment::WeightReport => weight_report(cfg, &dir),
        Experiment::Trajectory => trajectory(cfg, &dir),
        Experiment::LinearControl => linear_control(cfg, &dir),
        Experiment::NonlinearControl => nonlinear_control(cfg, &dir),
        Experiment::CarlemanRatio => carleman(cfg, &dir),
        Experiment::NeumannDemo => neumann_demo(cfg, &dir),
    }
}

fn weight_report(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let bundle = build_bundle(cfg)?;
    write_weight_table(&dir.join("weights.csv"), &bundle)?;
    let report = check_weight_inequalities(&bundle);
    write_weight_report(&dir.join("weight_report.csv"), &report)?;
    println!(
        "weight report: {} checks, all passed: {}",
        report.checks.len(),
        report.all_passed
    );
    Ok(())
}

fn dump_levels(
    dir: &Path,
    g: &GridSpec,
    prefix: &str,
    fields: &[ScalarField],
    stride: usize,
) -> Result<(), RunError> {
    for (m, f) in fields.iter().enumerate() {
        if m % stride == 0 || m == fields.len() - 1 {
            write_scalar_field(&dir.join(format!("{prefix}_{m:04}.csv")), g, f)?;
        }
    }
    Ok(())
}

fn trajectory(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let g = &cfg.grid;
    let amp = cfg.bar_amp;
    let th_bar0 = ScalarField::from_fn(g, |_, y| amp * (PI * y).sin());
    let bar = solve_trajectory(&th_bar0, g)?;
    dump_levels(dir, g, "theta_bar", &bar.theta_bar, cfg.stride)?;
    dump_levels(dir, g, "p_bar", &bar.p_bar, cfg.stride)?;
    write_manifest(
        &dir.join("trajectory.txt"),
        &[
            ("levels", (g.nt + 1).to_string()),
            ("w3_inf_proxy", bar.w3_inf_proxy.to_string()),
            ("grad_t_inf_proxy", bar.grad_t_inf_proxy.to_string()),
        ],
    )?;
    println!(
        "trajectory: {} levels, W3inf proxy {:.3e}, time-regularity proxy {:.3e}",
        g.nt + 1,
        bar.w3_inf_proxy,
        bar.grad_t_inf_proxy
    );
    Ok(())
}

fn dump_solution(
    dir: &Path,
    g: &GridSpec,
    res: &HumResult,
    stride: usize,
) -> Result<(), RunError> {
    write_e_norm_report(&dir.join("e_norm.csv"), &res.e_norm_report)?;
    for (m, v) in res.controls.v0.iter().enumerate() {
        if m % stride == 0 || m == res.controls.v0.len() - 1 {
            write_scalar_field(&dir.join(format!("v0_{m:04}.csv")), g, v)?;
        }
    }
    let last = res.trajectory.terminal();
    write_scalar_field(&dir.join("theta_T.csv"), g, &last.theta)?;
    write_vector_field(&dir.join("y_T.csv"), g, &last.y)?;
    Ok(())
}

fn linear_control(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let g = &cfg.grid;
    let pipe = build_pipeline(cfg)?;
    let y0 = VectorField::zeros(g);
    let th0 = sine_data(g, cfg.resolved_theta_amp());
    let prob = HumProblem {
        g,
        ops: &pipe.ops,
        bundle: &pipe.bundle,
        bar: &pipe.bar,
        mask: &pipe.mask,
        y0: &y0,
        theta0: &th0,
        src: None,
    };
    let mut warm: Option<TerminalPair> = None;
    let mut rows = Vec::new();
    let mut stalled = None;
    let mut last: Option<HumResult> = None;
    for (k, eps) in cfg.sweep_epsilons.iter().enumerate() {
        let dual = DualConfig {
            epsilon: *eps,
            ..cfg.dual.clone()
        };
        let res = hum_solve(&prob, &dual, warm.as_ref());
        write_cg_log(&dir.join(format!("cg_{k}.csv")), &res.cg_log)?;
        println!(
            "eps {eps:.3e}: cg_iters {} terminal {:.6e} kkt {:.3e}",
            res.cg_iters, res.terminal_norm, res.kkt_residual
        );
        rows.push(SweepRow {
            epsilon: *eps,
            terminal_norm: res.terminal_norm,
            kkt_residual: res.kkt_residual,
            cg_iters: res.cg_iters,
        });
        if !res.converged && stalled.is_none() {
            stalled = Some(*eps);
        }
        warm = Some(TerminalPair {
            y: res.phi_t_opt.clone(),
            theta: res.psi_t_opt.clone(),
        });
        last = Some(res);
    }
    write_sweep_summary(&dir.join("summary.csv"), &rows)?;
    if let Some(res) = &last {
        dump_solution(dir, g, res, cfg.stride)?;
    }
    if let Some(eps) = stalled {
        return Err(RunError::NonConvergence(format!(
            "conjugate gradient hit its iteration cap at eps {eps:.3e}; artifacts were written"
        )));
    }
    println!("linear control: {} sweep points written to {}", rows.len(), dir.display());
    Ok(())
}

fn nonlinear_control(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let g = &cfg.grid;
    let pipe = build_pipeline(cfg)?;
    let y0 = VectorField::zeros(g);
    let mut th0 = pipe.bar.theta_bar0.clone();
    th0.axpy(1.0, &sine_data(g, cfg.resolved_theta_amp()));
    let res = picard_control(
        g,
        &pipe.ops,
        &pipe.bundle,
        &pipe.bar,
        &pipe.mask,
        &y0,
        &th0,
        &cfg.picard,
    )?;
    write_picard_history(&dir.join("history.csv"), &res.history)?;
    write_cg_log(&dir.join("cg_final.csv"), &res.linear.cg_log)?;
    dump_solution(dir, g, &res.linear, cfg.stride)?;
    let final_row = res.history.last().expect("history holds >= 1 row");
    write_manifest(
        &dir.join("result.txt"),
        &[
            ("converged", res.converged.to_string()),
            ("smallness_exceeded", res.smallness_exceeded.to_string()),
            ("outer_iters", res.history.len().to_string()),
            ("final_diff", final_row.diff.to_string()),
            (
                "terminal_norm_nonlinear",
                final_row.terminal_norm_nonlinear.to_string(),
            ),
            ("terminal_norm_linear", final_row.terminal_norm_linear.to_string()),
        ],
    )?;
    for r in &res.history {
        println!(
            "outer {}: lin {:.4e} nonlin {:.4e} diff {:.3e} cg {}",
            r.outer_iter, r.terminal_norm_linear, r.terminal_norm_nonlinear, r.diff, r.cg_iters
        );
    }
    if !res.converged {
        return Err(RunError::NonConvergence(format!(
            "fixed point missed tolerance {} within {} outer iterations; artifacts were written",
            cfg.picard.outer_tol, cfg.picard.max_outer
        )));
    }
    println!(
        "nonlinear control: converged in {} outer iterations, final gap {:.3e}",
        res.history.len(),
        final_row.diff
    );
    Ok(())
}

fn carleman(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let g = &cfg.grid;
    let pipe = build_pipeline(cfg)?;
    let report = carleman_ratio(
        g,
        &pipe.ops,
        &pipe.bundle,
        &pipe.bar,
        &pipe.mask,
        cfg.samples,
        cfg.seed,
        cfg.alpha_family,
    );
    let grid_label = format!("{}x{}x{}", g.nx, g.ny, g.nt);
    write_carleman_table(&dir.join("carleman.csv"), &report, cfg.s, cfg.lambda, &grid_label)?;
    write_manifest(
        &dir.join("result.txt"),
        &[
            ("samples", report.samples.len().to_string()),
            ("max_ratio", report.max_ratio.to_string()),
            ("median_ratio", report.median_ratio.to_string()),
            ("alpha_family", report.alpha_family.to_string()),
        ],
    )?;
    println!(
        "carleman ratio: {} samples on {grid_label}, max {:.4e}, median {:.4e}",
        report.samples.len(),
        report.max_ratio,
        report.median_ratio
    );
    Ok(())
}

fn neumann_demo(cfg: &RunConfig, dir: &Path) -> Result<(), RunError> {
    let g = &cfg.grid;
    let ops = Operators::new(g);
    // fixed demonstration data: nonzero mean temperature stirred by a
    // weak vortex; the insulated walls conserve the mean exactly
    let th0 = ScalarField::from_fn(g, |x, y| {
        0.7 + 0.3 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
    });
    let wind = stream_velocity(g, |x, y| 0.05 * (PI * x).sin() * (PI * y).sin());
    let levels = solve_heat_neumann(g, &ops, &th0, &wind)?;
    write_scalar_field(&dir.join("theta_T.csv"), g, levels.last().expect("nt >= 1"))?;
    let report = neumann_obstruction(g, &ops, &th0, &wind)?;
    write_neumann_report(&dir.join("neumann.txt"), &report)?;
    println!(
        "neumann demo: mass {:.6e} -> {:.6e} (drift {:.3e}), terminal L1 {:.4e}",
        report.mass_initial, report.mass_final, report.drift, report.l1_terminal
    );
    Ok(())
}
