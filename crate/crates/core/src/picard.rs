//! Outer fixed-point loop for the nonlinear reduced system: repeatedly
//! solve the linear control problem with the quadratic terms of the
//! previous controlled trajectory lagged as sources,
//!
//! ```text
//! iterate k:  f^k  = -(y_{k-1} . grad) y_{k-1}
//!             f0^k = -(y_{k-1} . grad) theta_{k-1}
//!             v0^k = penalized dual solve with sources (f^k, f0^k)
//!             (y_k, theta_k) = nonlinear march driven by v0^k
//! ```
//!
//! with iterate 0 running zero sources (the plain linearized problem).
//! One nonlinear step equals one linear step fed the upwind advection of
//! its own previous level, so a stationary iterate solves the true
//! nonlinear system with the computed control exactly, not to O(dt).
//! States are deviations from the target: the physical temperature comes
//! in, the march runs on theta - theta_bar. Successive iterates are
//! compared in the relative sup-in-time L2 norm, and the inner dual
//! solves are warm started from the previous optimal terminal data.

use crate::error::{CoreError, Result};
use crate::forward::{
    solve_nonlinear, ControlPair, Operators, SourcePair, Trajectory, TrajectoryBar,
};
use crate::grid::{GridSpec, MaskField, ScalarField, VectorField};
use crate::hum::{
    e_norm_report, hum_solve, weighted_l2_log10, DualConfig, HumProblem, HumResult, TerminalPair,
};
use crate::ops::{norm_pair, norm_scalar, norm_vector, upwind_scalar, upwind_vector};
use crate::weights::{Agg, WeightBundle, WeightExpr};

/// Penalization strength used by the inner dual solve at each outer
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    /// same eps for every outer iteration (the default)
    Fixed(f64),
    /// eps_k = eps0 * 2^{-k}, tightening the inner problem as the lagged
    /// sources settle
    Geometric(f64),
}

impl EpsilonSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            EpsilonSchedule::Fixed(e) => *e,
            EpsilonSchedule::Geometric(e0) => e0 * (0.5f64).powi(k as i32),
        }
    }

    fn base(&self) -> f64 {
        match self {
            EpsilonSchedule::Fixed(e) | EpsilonSchedule::Geometric(e) => *e,
        }
    }
}

/// Knobs of the outer loop.
#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// smallness target for the initial deviation |(y0, theta0 - theta_bar0)|;
    /// exceeding it is reported, not fatal
    pub delta: f64,
    pub max_outer: usize,
    /// relative successive-iterate tolerance on the trajectory gap
    pub outer_tol: f64,
    pub epsilon_schedule: EpsilonSchedule,
    /// inner solver settings; its epsilon field is superseded by the
    /// schedule and its velocity observation is forced off (the two-
    /// dimensional path controls the temperature only)
    pub dual: DualConfig,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            max_outer: 8,
            outer_tol: 1e-8,
            epsilon_schedule: EpsilonSchedule::Fixed(1e-4),
            dual: DualConfig::default(),
        }
    }
}

/// One line of the outer-iteration history.
#[derive(Debug, Clone, Copy)]
pub struct PicardRow {
    pub outer_iter: usize,
    pub epsilon: f64,
    pub terminal_norm_linear: f64,
    pub terminal_norm_nonlinear: f64,
    /// relative sup-in-time gap to the previous nonlinear iterate
    pub diff: f64,
    /// log10 of the weighted momentum-source norm |W f|, -inf when zero
    pub f_log10: f64,
    /// log10 of the weighted heat-source norm |W f0|, -inf when zero
    pub f0_log10: f64,
    pub cg_iters: usize,
}

/// Final controls and nonlinear trajectory with the per-iteration record.
#[derive(Debug, Clone)]
pub struct PicardResult {
    pub controls: ControlPair,
    /// controlled trajectory of the nonlinear deviation system
    pub trajectory: Trajectory,
    pub history: Vec<PicardRow>,
    pub converged: bool,
    /// initial deviation exceeded cfg.delta
    pub smallness_exceeded: bool,
    /// last inner solve; its e_norm_report is re-scored against the
    /// returned nonlinear trajectory and sources
    pub linear: HumResult,
}

/// Quadratic terms of a controlled trajectory rearranged as per-step
/// sources: entry m-1 is the advection of level m-1, exactly what the
/// nonlinear step m would compute for itself.
pub fn lagged_sources(g: &GridSpec, traj: &Trajectory) -> Vec<SourcePair> {
    (1..=g.nt)
        .map(|m| {
            let prev = &traj.states[m - 1];
            let mut sp = SourcePair::zeros(g);
            sp.f.axpy(-1.0, &upwind_vector(g, &prev.y));
            sp.f0.axpy(-1.0, &upwind_scalar(g, &prev.y, &prev.theta));
            sp
        })
        .collect()
}

fn sup_norm(g: &GridSpec, a: &Trajectory) -> f64 {
    a.states
        .iter()
        .map(|s| norm_pair(g, &s.y, &s.theta))
        .fold(0.0, f64::max)
}

fn sup_gap(g: &GridSpec, a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(sa, sb)| {
            let mut dy = sa.y.clone();
            dy.axpy(-1.0, &sb.y);
            let mut dth = sa.theta.clone();
            dth.axpy(-1.0, &sb.theta);
            norm_pair(g, &dy, &dth)
        })
        .fold(0.0, f64::max)
}

/// Controls the nonlinear deviation system by successive substitution.
/// Each outer iteration solves the penalized linear problem with the
/// previous iterate's quadratic terms as sources and then marches the
/// nonlinear system under the resulting temperature control. Failure to
/// reach the tolerance within the cap is reported through `converged`,
/// not an error; CFL violations of the nonlinear march propagate.
pub fn picard_control(
    g: &GridSpec,
    ops: &Operators,
    bundle: &WeightBundle,
    bar: &TrajectoryBar,
    mask: &MaskField,
    y0: &VectorField,
    theta0: &ScalarField,
    cfg: &PicardConfig,
) -> Result<PicardResult> {
    if cfg.delta < 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "smallness target must be nonnegative, got {}",
            cfg.delta
        )));
    }
    if cfg.outer_tol <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "outer tolerance must be positive, got {}",
            cfg.outer_tol
        )));
    }
    if cfg.max_outer == 0 {
        return Err(CoreError::InvalidParameter(
            "outer iteration cap must be at least 1".into(),
        ));
    }
    if cfg.epsilon_schedule.base() <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "epsilon schedule must start positive, got {}",
            cfg.epsilon_schedule.base()
        )));
    }

    let mut tilde0 = theta0.clone();
    tilde0.axpy(-1.0, &bar.theta_bar0);
    let smallness_exceeded = norm_pair(g, y0, &tilde0) > cfg.delta;

    let fw = bundle.log_weight(&WeightExpr::new(
        vec![(2.5, Agg::BetaStar)],
        vec![(-2.0, Agg::GammaStar)],
    ));
    let f0w = bundle.log_weight(&WeightExpr::new(
        vec![(2.5, Agg::BetaStar)],
        vec![(-5.0 / 2.0, Agg::GammaStar)],
    ));

    let mut dual = cfg.dual.clone();
    dual.observe_velocity = false;

    let mut history = Vec::new();
    let mut prev: Option<Trajectory> = None;
    let mut warm: Option<TerminalPair> = None;
    let mut best: Option<(ControlPair, Trajectory, HumResult)> = None;
    let mut converged = false;

    for k in 0..cfg.max_outer {
        let src = prev.as_ref().map(|tr| lagged_sources(g, tr));
        let (f_log10, f0_log10) = match &src {
            None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
            Some(series) => {
                let fn_norms: Vec<(usize, f64)> = (1..g.nt)
                    .map(|m| (m, norm_vector(g, &series[m - 1].f)))
                    .collect();
                let f0_norms: Vec<(usize, f64)> = (1..g.nt)
                    .map(|m| (m, norm_scalar(g, &series[m - 1].f0)))
                    .collect();
                (
                    weighted_l2_log10(g.dt, &fw, &fn_norms),
                    weighted_l2_log10(g.dt, &f0w, &f0_norms),
                )
            }
        };

        dual.epsilon = cfg.epsilon_schedule.at(k);
        let prob = HumProblem {
            g,
            ops,
            bundle,
            bar,
            mask,
            y0,
            theta0: &tilde0,
            src: src.as_deref(),
        };
        let res = hum_solve(&prob, &dual, warm.as_ref());
        let traj = solve_nonlinear(g, ops, y0, &tilde0, &res.controls, bar)?;

        let peak = sup_norm(g, &traj);
        let diff = match &prev {
            None => {
                if peak == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Some(p) => sup_gap(g, &traj, p) / peak.max(f64::MIN_POSITIVE),
        };
        let terminal = traj.terminal();
        history.push(PicardRow {
            outer_iter: k,
            epsilon: dual.epsilon,
            terminal_norm_linear: res.terminal_norm,
            terminal_norm_nonlinear: norm_pair(g, &terminal.y, &terminal.theta),
            diff,
            f_log10,
            f0_log10,
            cg_iters: res.cg_iters,
        });

        warm = Some(TerminalPair {
            y: res.phi_t_opt.clone(),
            theta: res.psi_t_opt.clone(),
        });
        best = Some((res.controls.clone(), traj, res));
        if diff <= cfg.outer_tol {
            converged = true;
            break;
        }
        prev = Some(best.as_ref().unwrap().1.clone());
    }

    let (controls, trajectory, mut linear) = best.unwrap();
    // the stored report described the linear run; re-score against the
    // nonlinear trajectory the caller actually receives
    let final_src = lagged_sources(g, &trajectory);
    linear.e_norm_report = e_norm_report(g, bundle, &trajectory, &controls, Some(&final_src));
    Ok(PicardResult {
        controls,
        trajectory,
        history,
        converged,
        smallness_exceeded,
        linear,
    })
}
