//! Backward-in-time dual system: the exact algebraic transpose of the
//! linearized stepper, marched from a terminal pair.
//!
//! Writing one forward step into node m as the composition of three maps
//! (buoyancy lift, projected viscous solve A = P Dv^-1 P, implicit heat
//! solve with the frozen-gradient coupling C_m), its transpose runs the
//! same symmetric blocks in reverse order:
//!
//! ```text
//! psi~^(m)  = Ds^-1 psi^m
//! phi^{m-1} = A (phi^m - dt C_m^T psi~^(m))
//! psi^{m-1} = psi~^(m) + dt B^T phi^{m-1}
//! ```
//!
//! The two intermediate fields psi~ and phi^{m-1} are exactly the duals of
//! the forward source slots, so they are kept as pairing states: a source
//! f (or a velocity control) applied on the step into node m pairs with
//! phi~^(m) = phi^{m-1}, and f0 or v0 pairs with psi~^(m). With adjoint
//! sources injected after each backward step, the summation-by-parts
//! identity
//!
//! ```text
//! <u^nt, w^nt> - <u^0, w^0> =
//!     sum_m dt [ <f^m + vj^m, phi~^(m)> + <f0^m + v0^m, psi~^(m)> ]
//!   - sum_m dt [ <g^m, y^{m-1}> + <g0^m, theta^{m-1}> ]
//! ```
//!
//! holds to round-off, because every block (P, Dv^-1, Ds^-1, B/B^T,
//! C/C^T) is either exactly symmetric or an exactly transposed pair.

use crate::forward::{Operators, SourcePair, TrajectoryBar, Trajectory, ControlPair};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::ops::{advect_coeff_t, buoyancy_t, inner_scalar, inner_vector};

/// One snapshot of the dual pair.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub phi: VectorField,
    pub psi: ScalarField,
}

impl AdjointState {
    pub fn zeros(g: &GridSpec) -> Self {
        Self {
            phi: VectorField::zeros(g),
            psi: ScalarField::zeros(g),
        }
    }
}

/// The source-slot duals of one forward step; entry m-1 belongs to the
/// step into node m.
#[derive(Debug, Clone)]
pub struct PairingState {
    pub phi_tilde: VectorField,
    pub psi_tilde: ScalarField,
}

/// Full backward sweep: states 0..=nt plus the nt pairing states.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub states: Vec<AdjointState>,
    pub pairings: Vec<PairingState>,
}

impl AdjointTrajectory {
    pub fn initial(&self) -> &AdjointState {
        &self.states[0]
    }
}

/// Transposes the forward step into node m. Returns the new dual pair at
/// m-1 and the pairing state of the step.
pub fn step_adjoint(
    g: &GridSpec,
    ops: &Operators,
    next: &AdjointState,
    bar: &TrajectoryBar,
    m: usize,
) -> (AdjointState, PairingState) {
    let dt = g.dt;
    let psi_tilde = ops.theta_solve(&next.psi);
    let (gx, gy) = bar.grad_at(m);
    let mut lifted = next.phi.clone();
    lifted.axpy(-dt, &advect_coeff_t(g, &psi_tilde, gx, gy));
    let (phi_prev, _, _) = ops.stokes_solve(g, &lifted);
    let mut psi_prev = psi_tilde.clone();
    psi_prev.axpy(dt, &buoyancy_t(g, &phi_prev));
    (
        AdjointState {
            phi: phi_prev.clone(),
            psi: psi_prev,
        },
        PairingState {
            phi_tilde: phi_prev,
            psi_tilde,
        },
    )
}

/// Marches the dual system backward from (phi_T, psi_T). The terminal
/// velocity is projected, mirroring the forward initial projection.
/// `src[m-1]`, when given, is injected into the pair at node m-1 after the
/// transposed step, scaled by dt.
pub fn solve_adjoint(
    g: &GridSpec,
    ops: &Operators,
    phi_t: &VectorField,
    psi_t: &ScalarField,
    src: Option<&[SourcePair]>,
    bar: &TrajectoryBar,
) -> AdjointTrajectory {
    let nt = g.nt;
    let (phi_init, _) = ops.projector.project(g, phi_t);
    let mut states: Vec<Option<AdjointState>> = (0..=nt).map(|_| None).collect();
    let mut pairings: Vec<Option<PairingState>> = (0..nt).map(|_| None).collect();
    states[nt] = Some(AdjointState {
        phi: phi_init,
        psi: psi_t.clone(),
    });
    for m in (1..=nt).rev() {
        let (mut prev, pair) = step_adjoint(g, ops, states[m].as_ref().unwrap(), bar, m);
        if let Some(s) = src {
            prev.phi.axpy(g.dt, &s[m - 1].f);
            prev.psi.axpy(g.dt, &s[m - 1].f0);
        }
        states[m - 1] = Some(prev);
        pairings[m - 1] = Some(pair);
    }
    AdjointTrajectory {
        states: states.into_iter().map(|s| s.unwrap()).collect(),
        pairings: pairings.into_iter().map(|p| p.unwrap()).collect(),
    }
}

/// Both sides of the summation-by-parts identity for a forward/adjoint
/// pair of runs that shared the grid and the target trajectory.
pub fn duality_terms(
    g: &GridSpec,
    fwd: &Trajectory,
    adj: &AdjointTrajectory,
    src: Option<&[SourcePair]>,
    ctrl: Option<&ControlPair>,
    adj_src: Option<&[SourcePair]>,
) -> (f64, f64) {
    let nt = g.nt;
    let last_f = &fwd.states[nt];
    let last_a = &adj.states[nt];
    let first_f = &fwd.states[0];
    let first_a = &adj.states[0];
    let lhs = inner_vector(g, &last_f.y, &last_a.phi) + inner_scalar(g, &last_f.theta, &last_a.psi)
        - inner_vector(g, &first_f.y, &first_a.phi)
        - inner_scalar(g, &first_f.theta, &first_a.psi);

    let mut rhs = 0.0;
    for m in 1..=nt {
        let pair = &adj.pairings[m - 1];
        if let Some(s) = src {
            rhs += g.dt * inner_vector(g, &s[m - 1].f, &pair.phi_tilde);
            rhs += g.dt * inner_scalar(g, &s[m - 1].f0, &pair.psi_tilde);
        }
        if let Some(c) = ctrl {
            rhs += g.dt * inner_scalar(g, &c.v0[m - 1], &pair.psi_tilde);
            if let Some(vc) = &c.vj {
                rhs += g.dt * inner_vector(g, &vc.values[m - 1], &pair.phi_tilde);
            }
        }
        if let Some(s) = adj_src {
            let prev = &fwd.states[m - 1];
            rhs -= g.dt * inner_vector(g, &s[m - 1].f, &prev.y);
            rhs -= g.dt * inner_scalar(g, &s[m - 1].f0, &prev.theta);
        }
    }
    (lhs, rhs)
}

/// Relative defect of the identity; round-off-sized for matching runs.
pub fn duality_gap(
    g: &GridSpec,
    fwd: &Trajectory,
    adj: &AdjointTrajectory,
    src: Option<&[SourcePair]>,
    ctrl: Option<&ControlPair>,
    adj_src: Option<&[SourcePair]>,
) -> f64 {
    let (lhs, rhs) = duality_terms(g, fwd, adj, src, ctrl, adj_src);
    let scale = lhs.abs().max(rhs.abs()).max(1e-300);
    (lhs - rhs).abs() / scale
}
