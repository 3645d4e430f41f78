//! Penalized dual solver: drives the terminal pair of the linearized
//! system toward zero by minimizing, over terminal adjoint data
//! w = (phi_T, psi_T),
//!
//! ```text
//! J_eps(w) = 1/2 sum_m dt w0(t_m) |psi~^(m) 1_omega|^2     (observation)
//!          [ + 1/2 sum_m dt wj(t_m) |phi~_j^(m) 1_omega|^2 ]
//!          + (eps/2) |w|^2
//!          + <y0, phi(0)> + <theta0, psi(0)>
//!          + sum_m dt ( <f^m, phi~^(m)> + <f0^m, psi~^(m)> )
//! ```
//!
//! where (phi, psi) solves the dual system from w. By the discrete duality
//! identity the linear part equals <u_f(T), w>, so grad J = eps w + u(T; v)
//! with the forward run driven by the extracted controls
//! v0^(m) = w0(t_m) psi~^(m) 1_omega (and the j-component analogue when
//! velocity observation is enabled), and the minimizer satisfies the
//! optimality identity eps w_opt = -(y(T), theta(T)). Conjugate gradient
//! on (H + eps) w = -u_f(T) therefore needs one dual and one forward march
//! per iteration, both exact transposes of each other.
//!
//! The observation weights are evaluated through the composite-weight
//! machinery and used normalized by their plateau value: the raw formulas
//! underflow past e^{-700} at standard parameters, and a common positive
//! rescaling of the observation term only reparametrizes eps.

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::forward::{
    solve_linear, solve_linear_terminal, ControlPair, Operators, SourcePair, Trajectory,
    TrajectoryBar, VelocityControl,
};
use crate::grid::{GridSpec, MaskField, ScalarField, VectorField};
use crate::ops::{
    inner_scalar, inner_vector, laplacian_vector, norm_pair, norm_scalar, norm_vector,
};
use crate::weights::{Agg, NormalizedWeight, WeightBundle, WeightExpr};

/// Knobs of the penalized dual optimization.
#[derive(Debug, Clone)]
pub struct DualConfig {
    pub epsilon: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub observe_velocity: bool,
    /// velocity component observed/controlled when enabled (0 horizontal)
    pub j_index: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            cg_tol: 1e-8,
            cg_max_iters: 500,
            observe_velocity: false,
            j_index: 0,
        }
    }
}

/// Terminal adjoint data (phi_T, psi_T), also reused for terminal states.
#[derive(Debug, Clone)]
pub struct TerminalPair {
    pub y: VectorField,
    pub theta: ScalarField,
}

impl TerminalPair {
    pub fn zeros(g: &GridSpec) -> Self {
        Self {
            y: VectorField::zeros(g),
            theta: ScalarField::zeros(g),
        }
    }

    pub fn dot(&self, g: &GridSpec, o: &Self) -> f64 {
        inner_vector(g, &self.y, &o.y) + inner_scalar(g, &self.theta, &o.theta)
    }

    pub fn norm(&self, g: &GridSpec) -> f64 {
        norm_pair(g, &self.y, &self.theta)
    }

    pub fn axpy(&mut self, a: f64, o: &Self) {
        self.y.axpy(a, &o.y);
        self.theta.axpy(a, &o.theta);
    }

    pub fn scale(&mut self, a: f64) {
        self.y.scale(a);
        self.theta.scale(a);
    }
}

/// One line of the conjugate-gradient log.
#[derive(Debug, Clone, Copy)]
pub struct CgRow {
    pub iter: usize,
    pub j_value: f64,
    pub grad_norm: f64,
}

/// log10 of each weighted-norm summand of the solution space; -inf marks
/// an identically zero component.
#[derive(Debug, Clone)]
pub struct ENormReport {
    pub y_l2_log10: f64,
    pub theta_l2_log10: f64,
    pub vj_log10: f64,
    pub v0_log10: f64,
    pub y_h2_log10: f64,
    pub y_h1_linf_log10: f64,
    pub resid_momentum_log10: f64,
    pub resid_heat_log10: f64,
    pub terminal_norm: f64,
    /// log10 of the state-norm bound implied at the last interior node
    pub terminal_scale_log10: f64,
    pub terminal_within_scale: bool,
}

/// Everything the minimization returns.
#[derive(Debug, Clone)]
pub struct HumResult {
    pub phi_t_opt: VectorField,
    pub psi_t_opt: ScalarField,
    pub controls: ControlPair,
    pub trajectory: Trajectory,
    pub terminal_norm: f64,
    pub dual_value: f64,
    pub kkt_residual: f64,
    pub e_norm_report: ENormReport,
    pub cg_log: Vec<CgRow>,
    pub cg_iters: usize,
    pub converged: bool,
}

/// Borrowed problem data shared by the functional, its gradient, and the
/// solver.
#[derive(Clone, Copy)]
pub struct HumProblem<'a> {
    pub g: &'a GridSpec,
    pub ops: &'a Operators,
    pub bundle: &'a WeightBundle,
    pub bar: &'a TrajectoryBar,
    pub mask: &'a MaskField,
    pub y0: &'a VectorField,
    pub theta0: &'a ScalarField,
    pub src: Option<&'a [SourcePair]>,
}

pub fn w0_expr() -> WeightExpr {
    WeightExpr::new(
        vec![(-4.0, Agg::BetaHat), (-1.0, Agg::BetaStar)],
        vec![(49.0 / 4.0, Agg::GammaHat)],
    )
}

pub fn wj_expr() -> WeightExpr {
    WeightExpr::new(
        vec![(-2.0, Agg::BetaHat), (-3.0, Agg::BetaStar)],
        vec![(7.0, Agg::GammaHat)],
    )
}

/// Raw observation-weight series over the time nodes (underflow-flushed;
/// identically the exported formula values).
pub fn control_weights(w: &WeightBundle) -> (Vec<f64>, Vec<f64>) {
    (w.weight_values(&w0_expr()), w.weight_values(&wj_expr()))
}

/// Plateau-normalized observation weights actually used by the functional.
pub fn control_weights_normalized(w: &WeightBundle) -> (NormalizedWeight, NormalizedWeight) {
    (
        w.normalized_weight(&w0_expr()),
        w.normalized_weight(&wj_expr()),
    )
}

/// Builds the control series from a dual sweep: entry m-1 holds
/// w0(t_m) psi~^(m) 1_omega (cells), and the observed velocity component
/// analogue when enabled. Masking makes the outside-omega values exact
/// zeros.
pub fn extract_controls(
    prob: &HumProblem,
    cfg: &DualConfig,
    adj: &AdjointTrajectory,
    w0n: &NormalizedWeight,
    wjn: &NormalizedWeight,
) -> ControlPair {
    let g = prob.g;
    let nt = g.nt;
    let mut v0 = Vec::with_capacity(nt);
    for m in 1..=nt {
        let pair = &adj.pairings[m - 1];
        let mut v = pair.psi_tilde.clone();
        let w = w0n.values[m];
        for ((i, j), x) in v.data.indexed_iter_mut() {
            *x *= w * prob.mask.cells[[i, j]];
        }
        v0.push(v);
    }
    let vj = if cfg.observe_velocity {
        let mut values = Vec::with_capacity(nt);
        for m in 1..=nt {
            let pair = &adj.pairings[m - 1];
            let w = wjn.values[m];
            let mut field = VectorField::zeros(g);
            if cfg.j_index == 0 {
                for ((i, j), x) in field.u.indexed_iter_mut() {
                    *x = w * pair.phi_tilde.u[[i, j]] * prob.mask.u_faces[[i, j]];
                }
            } else {
                for ((i, j), x) in field.v.indexed_iter_mut() {
                    *x = w * pair.phi_tilde.v[[i, j]] * prob.mask.v_faces[[i, j]];
                }
            }
            values.push(field);
        }
        Some(VelocityControl {
            j_index: cfg.j_index,
            values,
        })
    } else {
        None
    };
    ControlPair { v0, vj }
}

fn observation_value(
    prob: &HumProblem,
    cfg: &DualConfig,
    adj: &AdjointTrajectory,
    w0n: &NormalizedWeight,
    wjn: &NormalizedWeight,
) -> f64 {
    let g = prob.g;
    let area = g.cell_area();
    let mut acc = 0.0;
    for m in 1..=g.nt {
        let pair = &adj.pairings[m - 1];
        let mut s = 0.0;
        for ((i, j), &x) in pair.psi_tilde.data.indexed_iter() {
            let masked = x * prob.mask.cells[[i, j]];
            s += masked * masked;
        }
        acc += 0.5 * g.dt * w0n.values[m] * area * s;
        if cfg.observe_velocity {
            let mut sv = 0.0;
            if cfg.j_index == 0 {
                for ((i, j), &x) in pair.phi_tilde.u.indexed_iter() {
                    let masked = x * prob.mask.u_faces[[i, j]];
                    sv += masked * masked;
                }
            } else {
                for ((i, j), &x) in pair.phi_tilde.v.indexed_iter() {
                    let masked = x * prob.mask.v_faces[[i, j]];
                    sv += masked * masked;
                }
            }
            acc += 0.5 * g.dt * wjn.values[m] * area * sv;
        }
    }
    acc
}

/// Forward run from the problem data with the given controls, keeping only
/// the terminal pair.
fn forward_terminal(prob: &HumProblem, ctrl: Option<&ControlPair>) -> TerminalPair {
    let (y, theta) = solve_linear_terminal(
        prob.g,
        prob.ops,
        prob.y0,
        prob.theta0,
        prob.src,
        ctrl,
        prob.bar,
    );
    TerminalPair { y, theta }
}

/// Forward run from ZERO data with the given controls (the coercive part
/// of the quadratic).
fn hessian_forward(prob: &HumProblem, ctrl: &ControlPair) -> TerminalPair {
    let zero_y = VectorField::zeros(prob.g);
    let zero_th = ScalarField::zeros(prob.g);
    let (y, theta) = solve_linear_terminal(
        prob.g,
        prob.ops,
        &zero_y,
        &zero_th,
        None,
        Some(ctrl),
        prob.bar,
    );
    TerminalPair { y, theta }
}

/// (H + eps) w: dual sweep from w, control extraction, forward from zero.
fn apply_quadratic(
    prob: &HumProblem,
    cfg: &DualConfig,
    w0n: &NormalizedWeight,
    wjn: &NormalizedWeight,
    w: &TerminalPair,
) -> TerminalPair {
    let adj = solve_adjoint(prob.g, prob.ops, &w.y, &w.theta, None, prob.bar);
    let ctrl = extract_controls(prob, cfg, &adj, w0n, wjn);
    let mut out = hessian_forward(prob, &ctrl);
    out.axpy(cfg.epsilon, w);
    out
}

/// Value and gradient of J_eps at w. phi_T is projected divergence-free on
/// entry; the returned gradient lives in the same projected space.
pub fn dual_functional(
    prob: &HumProblem,
    cfg: &DualConfig,
    w: &TerminalPair,
) -> (f64, TerminalPair) {
    let g = prob.g;
    let (w0n, wjn) = control_weights_normalized(prob.bundle);
    let (proj_y, _) = prob.ops.projector.project(g, &w.y);
    let wp = TerminalPair {
        y: proj_y,
        theta: w.theta.clone(),
    };
    let adj = solve_adjoint(g, prob.ops, &wp.y, &wp.theta, None, prob.bar);

    let mut value = observation_value(prob, cfg, &adj, &w0n, &wjn);
    value += 0.5 * cfg.epsilon * wp.dot(g, &wp);
    value += inner_vector(g, prob.y0, &adj.states[0].phi);
    value += inner_scalar(g, prob.theta0, &adj.states[0].psi);
    if let Some(series) = prob.src {
        for m in 1..=g.nt {
            let pair = &adj.pairings[m - 1];
            value += g.dt * inner_vector(g, &series[m - 1].f, &pair.phi_tilde);
            value += g.dt * inner_scalar(g, &series[m - 1].f0, &pair.psi_tilde);
        }
    }

    let ctrl = extract_controls(prob, cfg, &adj, &w0n, &wjn);
    let mut grad = forward_terminal(prob, Some(&ctrl));
    grad.axpy(cfg.epsilon, &wp);
    (value, grad)
}

/// Minimizes J_eps by conjugate gradient on its normal equations
/// (H + eps) w = -u_f(T). Returns the best iterate flagged when the cap is
/// reached before the relative residual drops under cg_tol.
pub fn hum_solve(
    prob: &HumProblem,
    cfg: &DualConfig,
    w_init: Option<&TerminalPair>,
) -> HumResult {
    let g = prob.g;
    let (w0n, wjn) = control_weights_normalized(prob.bundle);

    // right-hand side: minus the uncontrolled terminal state
    let mut b = forward_terminal(prob, None);
    b.scale(-1.0);
    let b_norm = b.norm(g);

    let mut x = match w_init {
        Some(w) => {
            let (proj_y, _) = prob.ops.projector.project(g, &w.y);
            TerminalPair {
                y: proj_y,
                theta: w.theta.clone(),
            }
        }
        None => TerminalPair::zeros(g),
    };

    let mut cg_log = Vec::new();
    let mut converged = b_norm == 0.0;
    let mut iters = 0usize;
    if b_norm > 0.0 {
        let mut r = b.clone();
        if x.norm(g) > 0.0 {
            let ax = apply_quadratic(prob, cfg, &w0n, &wjn, &x);
            r.axpy(-1.0, &ax);
        }
        let mut p = r.clone();
        let mut rs = r.dot(g, &r);
        if rs.sqrt() / b_norm <= cfg.cg_tol {
            converged = true;
        }
        while !converged && iters < cfg.cg_max_iters {
            iters += 1;
            let ap = apply_quadratic(prob, cfg, &w0n, &wjn, &p);
            let denom = p.dot(g, &ap);
            if denom <= 0.0 {
                // numerically lost positive-definiteness; stop with the
                // current iterate
                break;
            }
            let alpha = rs / denom;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            let rs_new = r.dot(g, &r);
            let j_value = -0.5 * (b.dot(g, &x) + r.dot(g, &x));
            let grad_norm = rs_new.sqrt();
            cg_log.push(CgRow {
                iter: iters,
                j_value,
                grad_norm,
            });
            if grad_norm / b_norm <= cfg.cg_tol {
                converged = true;
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            let mut p_next = r.clone();
            p_next.axpy(beta, &p);
            p = p_next;
        }
    }

    // final sweep at the minimizer: controls, controlled trajectory, and
    // honest (re-evaluated, not recurrence) optimality diagnostics
    let adj = solve_adjoint(g, prob.ops, &x.y, &x.theta, None, prob.bar);
    let controls = extract_controls(prob, cfg, &adj, &w0n, &wjn);
    let trajectory = solve_linear(
        g,
        prob.ops,
        prob.y0,
        prob.theta0,
        prob.src,
        Some(&controls),
        prob.bar,
    );
    let last = trajectory.terminal();
    let terminal = TerminalPair {
        y: last.y.clone(),
        theta: last.theta.clone(),
    };
    let terminal_norm = terminal.norm(g);
    let mut kkt = terminal.clone();
    kkt.axpy(cfg.epsilon, &x);
    let kkt_residual = kkt.norm(g);

    let mut dual_value = observation_value(prob, cfg, &adj, &w0n, &wjn);
    dual_value += 0.5 * cfg.epsilon * x.dot(g, &x);
    dual_value += inner_vector(g, prob.y0, &adj.states[0].phi);
    dual_value += inner_scalar(g, prob.theta0, &adj.states[0].psi);
    if let Some(series) = prob.src {
        for m in 1..=g.nt {
            let pair = &adj.pairings[m - 1];
            dual_value += g.dt * inner_vector(g, &series[m - 1].f, &pair.phi_tilde);
            dual_value += g.dt * inner_scalar(g, &series[m - 1].f0, &pair.psi_tilde);
        }
    }

    let e_norm_report = e_norm_report(g, prob.bundle, &trajectory, &controls, prob.src);

    HumResult {
        phi_t_opt: x.y,
        psi_t_opt: x.theta,
        controls,
        trajectory,
        terminal_norm,
        dual_value,
        kkt_residual,
        e_norm_report,
        cg_log,
        cg_iters: iters,
        converged,
    }
}

const LN10: f64 = std::f64::consts::LN_10;

/// log-sum-exp; skips -inf entries, saturates on +inf.
fn lse(terms: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = terms.filter(|v| *v != f64::NEG_INFINITY).collect();
    if vals.is_empty() {
        return f64::NEG_INFINITY;
    }
    if vals.iter().any(|v| *v == f64::INFINITY) {
        return f64::INFINITY;
    }
    let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    peak + vals.iter().map(|v| (v - peak).exp()).sum::<f64>().ln()
}

/// log10 of sqrt( sum_m dt W(t_m)^2 |field_m|^2 ) over the given nodes,
/// with W supplied as natural-log values per node.
pub fn weighted_l2_log10(dt: f64, logw: &[f64], norms: &[(usize, f64)]) -> f64 {
    lse(norms.iter().map(|&(m, n)| {
        if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * logw[m] + dt.ln() + 2.0 * n.ln()
        }
    })) / (2.0 * LN10)
}

/// Discrete weighted-norm components of the controlled tuple. Sums run
/// over the interior time nodes (the last node's growing weights are
/// +inf); every value is log10 of the corresponding norm, -inf for an
/// identically zero series.
pub fn e_norm_report(
    g: &GridSpec,
    bundle: &WeightBundle,
    traj: &Trajectory,
    ctrl: &ControlPair,
    src: Option<&[SourcePair]>,
) -> ENormReport {
    let nt = g.nt;
    let state_w = bundle.log_weight(&WeightExpr::new(vec![(1.5, Agg::BetaStar)], vec![]));
    let h2_w = bundle.log_weight(&WeightExpr::new(
        vec![(1.5, Agg::BetaStar)],
        vec![(-9.0 / 8.0, Agg::GammaStar)],
    ));
    let v0_w = bundle.log_weight(&WeightExpr::new(
        vec![(2.0, Agg::BetaHat), (0.5, Agg::BetaStar)],
        vec![(-49.0 / 8.0, Agg::GammaHat)],
    ));
    let vj_w = bundle.log_weight(&WeightExpr::new(
        vec![(1.0, Agg::BetaHat), (1.5, Agg::BetaStar)],
        vec![(-7.0 / 2.0, Agg::GammaHat)],
    ));
    let rm_w = bundle.log_weight(&WeightExpr::new(
        vec![(2.5, Agg::BetaStar)],
        vec![(-2.0, Agg::GammaStar)],
    ));
    let rh_w = bundle.log_weight(&WeightExpr::new(
        vec![(2.5, Agg::BetaStar)],
        vec![(-5.0 / 2.0, Agg::GammaStar)],
    ));

    let y_norms: Vec<(usize, f64)> = (0..nt)
        .map(|m| (m, norm_vector(g, &traj.states[m].y)))
        .collect();
    let th_norms: Vec<(usize, f64)> = (0..nt)
        .map(|m| (m, norm_scalar(g, &traj.states[m].theta)))
        .collect();
    let h2_norms: Vec<(usize, f64)> = (0..nt)
        .map(|m| (m, norm_vector(g, &laplacian_vector(g, &traj.states[m].y))))
        .collect();
    let v0_norms: Vec<(usize, f64)> = (1..nt)
        .map(|m| (m, norm_scalar(g, &ctrl.v0[m - 1])))
        .collect();
    let vj_norms: Vec<(usize, f64)> = match &ctrl.vj {
        Some(vc) => (1..nt)
            .map(|m| (m, norm_vector(g, &vc.values[m - 1])))
            .collect(),
        None => Vec::new(),
    };
    let (rm_norms, rh_norms): (Vec<(usize, f64)>, Vec<(usize, f64)>) = match src {
        Some(series) => (
            (1..nt)
                .map(|m| (m, norm_vector(g, &series[m - 1].f)))
                .collect(),
            (1..nt)
                .map(|m| (m, norm_scalar(g, &series[m - 1].f0)))
                .collect(),
        ),
        None => (Vec::new(), Vec::new()),
    };

    // L-inf in time of the weighted discrete H1 seminorm
    let mut h1_linf = f64::NEG_INFINITY;
    for m in 0..nt {
        let y = &traj.states[m].y;
        let lap = laplacian_vector(g, y);
        let sq = -inner_vector(g, &lap, y);
        let h1 = sq.max(0.0).sqrt();
        if h1 > 0.0 {
            h1_linf = h1_linf.max((h2_w[m] + h1.ln()) / LN10);
        }
    }

    let y_l2_log10 = weighted_l2_log10(g.dt, &state_w, &y_norms);
    let theta_l2_log10 = weighted_l2_log10(g.dt, &state_w, &th_norms);
    let terminal = traj.terminal();
    let terminal_norm = norm_pair(g, &terminal.y, &terminal.theta);
    let state_bound = y_l2_log10.max(theta_l2_log10);
    let terminal_scale_log10 = state_bound - state_w[nt - 1] / LN10;
    let terminal_within_scale = if terminal_norm == 0.0 {
        true
    } else {
        terminal_norm.log10() <= terminal_scale_log10 + 2.0
    };

    ENormReport {
        y_l2_log10,
        theta_l2_log10,
        vj_log10: weighted_l2_log10(g.dt, &vj_w, &vj_norms),
        v0_log10: weighted_l2_log10(g.dt, &v0_w, &v0_norms),
        y_h2_log10: weighted_l2_log10(g.dt, &h2_w, &h2_norms),
        y_h1_linf_log10: h1_linf,
        resid_momentum_log10: weighted_l2_log10(g.dt, &rm_w, &rm_norms),
        resid_heat_log10: weighted_l2_log10(g.dt, &rh_w, &rh_norms),
        terminal_norm,
        terminal_scale_log10,
        terminal_within_scale,
    }
}
