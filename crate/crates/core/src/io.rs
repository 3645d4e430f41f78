//! Deterministic plain-text emission: every artifact of a run is either
//! a CSV table or a key=value manifest, written with the default f64
//! formatting (shortest round-trip), so identical solver output produces
//! byte-identical files. Infinities print as `inf`; the log-scaled
//! columns carry the `_log10` suffix they were computed under.

use crate::error::Result;
use crate::forward::Trajectory;
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::hum::{CgRow, ENormReport};
use crate::picard::PicardRow;
use crate::verify::{CarlemanReport, NeumannReport};
use crate::weights::WeightBundle;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// One line of the epsilon-sweep summary table.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub epsilon: f64,
    pub terminal_norm: f64,
    pub kkt_residual: f64,
    pub cg_iters: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Aggregate table of the weight bundle, one row per time node.
pub fn write_weight_table(path: &Path, w: &WeightBundle) -> Result<()> {
    let mut f = create(path)?;
    writeln!(
        f,
        "t,alpha_star,xi_star,alpha_hat,xi_hat,beta_star,gamma_star,beta_hat,gamma_hat"
    )?;
    let nt = w.profile.nt;
    for m in 0..=nt {
        let t = w.profile.t_final * m as f64 / nt as f64;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            t,
            w.alpha_star[m],
            w.xi_star[m],
            w.alpha_hat[m],
            w.xi_hat[m],
            w.beta_star[m],
            w.gamma_star[m],
            w.beta_hat[m],
            w.gamma_hat[m]
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Inequality check table: one row per check, empty node columns when a
/// check has no finite worst node.
pub fn write_weight_report(path: &Path, rep: &crate::weights::WeightReport) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "check,passed,worst_slack,worst_i,worst_j,worst_m")?;
    for c in &rep.checks {
        let node = match c.worst_node {
            Some((i, j, m)) => format!("{i},{j},{m}"),
            None => ",,".to_string(),
        };
        writeln!(f, "{},{},{},{}", c.name, c.passed, c.worst_slack, node)?;
    }
    f.flush()?;
    Ok(())
}

fn write_meta(path: &Path, g: &GridSpec, kind: &str) -> Result<()> {
    let mut side = path.as_os_str().to_owned();
    side.push(".meta");
    let mut f = create(Path::new(&side))?;
    writeln!(f, "nx={}", g.nx)?;
    writeln!(f, "ny={}", g.ny)?;
    writeln!(f, "hx={}", g.hx)?;
    writeln!(f, "hy={}", g.hy)?;
    writeln!(f, "kind={kind}")?;
    f.flush()?;
    Ok(())
}

/// Flat `i,j,value` dump of a cell field with its `.meta` sidecar.
pub fn write_scalar_field(path: &Path, g: &GridSpec, s: &ScalarField) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "i,j,value")?;
    for ((i, j), v) in s.data.indexed_iter() {
        writeln!(f, "{i},{j},{v}")?;
    }
    f.flush()?;
    write_meta(path, g, "cell")
}

/// Face dumps of a staggered vector field: `<stem>_u.csv` and
/// `<stem>_v.csv` next to the given path, each with a sidecar.
pub fn write_vector_field(path: &Path, g: &GridSpec, w: &VectorField) -> Result<()> {
    let stem = path.with_extension("");
    for (suffix, arr, kind) in [("u", &w.u, "u_face"), ("v", &w.v, "v_face")] {
        let mut p = stem.as_os_str().to_owned();
        p.push(format!("_{suffix}.csv"));
        let p = Path::new(&p).to_path_buf();
        let mut f = create(&p)?;
        writeln!(f, "i,j,value")?;
        for ((i, j), v) in arr.indexed_iter() {
            writeln!(f, "{i},{j},{v}")?;
        }
        f.flush()?;
        write_meta(&p, g, kind)?;
    }
    Ok(())
}

/// One CSV per field per saved level: `<dir>/theta_0000.csv`,
/// `<dir>/p_0000.csv`, and the velocity face pair, every `stride`-th
/// node plus the terminal one.
pub fn write_trajectory(dir: &Path, g: &GridSpec, traj: &Trajectory, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    for (m, st) in traj.states.iter().enumerate() {
        if m % stride != 0 && m != g.nt {
            continue;
        }
        write_scalar_field(&dir.join(format!("theta_{m:04}.csv")), g, &st.theta)?;
        write_scalar_field(&dir.join(format!("p_{m:04}.csv")), g, &st.p)?;
        write_vector_field(&dir.join(format!("y_{m:04}.csv")), g, &st.y)?;
    }
    Ok(())
}

/// Per-iteration conjugate-gradient record.
pub fn write_cg_log(path: &Path, rows: &[CgRow]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "iter,j_value,grad_norm")?;
    for r in rows {
        writeln!(f, "{},{},{}", r.iter, r.j_value, r.grad_norm)?;
    }
    f.flush()?;
    Ok(())
}

/// Epsilon-sweep summary, one row per solved penalization.
pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "epsilon,terminal_norm,kkt_residual,cg_iters")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{}",
            r.epsilon, r.terminal_norm, r.kkt_residual, r.cg_iters
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Component table of the weighted-norm report.
pub fn write_e_norm_report(path: &Path, rep: &ENormReport) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "component,value")?;
    for (name, v) in [
        ("y_l2_log10", rep.y_l2_log10),
        ("theta_l2_log10", rep.theta_l2_log10),
        ("vj_log10", rep.vj_log10),
        ("v0_log10", rep.v0_log10),
        ("y_h2_log10", rep.y_h2_log10),
        ("y_h1_linf_log10", rep.y_h1_linf_log10),
        ("resid_momentum_log10", rep.resid_momentum_log10),
        ("resid_heat_log10", rep.resid_heat_log10),
        ("terminal_norm", rep.terminal_norm),
        ("terminal_scale_log10", rep.terminal_scale_log10),
    ] {
        writeln!(f, "{name},{v}")?;
    }
    writeln!(f, "terminal_within_scale,{}", rep.terminal_within_scale)?;
    f.flush()?;
    Ok(())
}

/// Outer fixed-point history.
pub fn write_picard_history(path: &Path, rows: &[PicardRow]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(
        f,
        "outer_iter,terminal_norm_linear,terminal_norm_nonlinear,diff,f_norm_weighted_log10,f0_norm_weighted_log10,cg_iters"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.outer_iter,
            r.terminal_norm_linear,
            r.terminal_norm_nonlinear,
            r.diff,
            r.f_log10,
            r.f0_log10,
            r.cg_iters
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Sample table of the observability-ratio experiment.
pub fn write_carleman_table(
    path: &Path,
    rep: &CarlemanReport,
    s: f64,
    lambda: f64,
    grid: &str,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "seed,lhs,rhs,ratio,s,lambda,grid")?;
    for r in &rep.samples {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.seed, r.lhs, r.rhs, r.ratio, s, lambda, grid
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Key=value report of the insulated-wall run.
pub fn write_neumann_report(path: &Path, rep: &NeumannReport) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "mass_initial={}", rep.mass_initial)?;
    writeln!(f, "mass_final={}", rep.mass_final)?;
    writeln!(f, "drift={}", rep.drift)?;
    writeln!(f, "l1_terminal={}", rep.l1_terminal)?;
    writeln!(f, "obstruction_implied={}", rep.obstruction_implied)?;
    writeln!(f, "implied_lower_bound={}", rep.implied_lower_bound)?;
    f.flush()?;
    Ok(())
}

/// Plain key=value manifest, one pair per line, in the given order.
pub fn write_manifest(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut f = create(path)?;
    for (k, v) in pairs {
        writeln!(f, "{k}={v}")?;
    }
    f.flush()?;
    Ok(())
}
