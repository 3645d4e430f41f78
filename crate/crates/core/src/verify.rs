//! Empirical checks of the weighted observability inequality and of the
//! insulated-wall obstruction. The inequality experiment draws smooth
//! random adjoint data, solves the dual system, and scores
//!
//! ```text
//! lhs = sum_m dt ( W_phi |phi^m|^2 + W_psi |psi^m|^2 )  [ + |phi(0)|^2 + |psi(0)|^2 ]
//! rhs = sum_m dt ( W_src ( |g|^2 + |g0|^2 ) + W_obs |psi^m 1_omega|^2 )
//! ```
//!
//! with W_phi = e^{-5 s b*} (c*)^4, W_psi = e^{-5 s b*} (c*)^5,
//! W_src = e^{-3 s b*}, W_obs = e^{-4 s b^ - s b*} (c^)^{49/4}, where
//! (b, c) are the plateau weight family by default and the vanishing-at-
//! both-ends family under the alpha flag; the initial-state terms belong
//! to the plateau variant only, which is the point of freezing the
//! profile on [0, T/2]. Every composite is evaluated in log space and
//! rescaled by its plateau-variant peak, the same convention the dual
//! functional uses: the raw values sit far below the floating-point
//! range, a common positive factor cancels in no inequality, and one
//! shared constant per term keeps the two variants pointwise comparable.
//! The measured ratio lhs/rhs plays the role of the observability
//! constant; nothing asserts its size, only finiteness and stability
//! under grid refinement.
//!
//! Samples are grid-independent: each seed draws four 8x8 coefficient
//! blocks (standard normal, unit length) before any grid evaluation, so
//! refining the grid re-samples the same smooth functions. Vector data
//! comes from differencing a vertex streamfunction and is therefore
//! exactly divergence-free on the staggered grid.

use crate::adjoint::solve_adjoint;
use crate::error::Result;
use crate::forward::{solve_heat_neumann, Operators, SourcePair, TrajectoryBar};
use crate::grid::{GridSpec, MaskField, ScalarField, VectorField};
use crate::ops::{norm_scalar, norm_vector};
use crate::weights::{Agg, WeightBundle, WeightExpr};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

const MODES: usize = 8;

/// One scored draw of adjoint data.
#[derive(Debug, Clone)]
pub struct CarlemanSample {
    pub seed: u64,
    pub phi_t: VectorField,
    pub psi_t: ScalarField,
    pub g_src: VectorField,
    pub g0_src: ScalarField,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Sample table with its summary statistics.
#[derive(Debug, Clone)]
pub struct CarlemanReport {
    pub samples: Vec<CarlemanSample>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub alpha_family: bool,
}

/// Normalized node profiles of the four composite weights entering the
/// inequality, in the order (phi, psi, source, observation).
struct Profiles {
    w_phi: Vec<f64>,
    w_psi: Vec<f64>,
    w_src: Vec<f64>,
    w_obs: Vec<f64>,
}

fn swap_family(alpha: bool, beta_agg: Agg) -> Agg {
    if !alpha {
        return beta_agg;
    }
    match beta_agg {
        Agg::BetaStar => Agg::AlphaStar,
        Agg::BetaHat => Agg::AlphaHat,
        Agg::GammaStar => Agg::XiStar,
        Agg::GammaHat => Agg::XiHat,
        other => other,
    }
}

/// Evaluates one composite for the requested family, rescaled by the
/// plateau value of its plateau-family twin so both variants share a
/// constant and stay representable.
fn profile(bundle: &WeightBundle, alpha: bool, exps: &[(f64, Agg)], pows: &[(f64, Agg)]) -> Vec<f64> {
    let beta_expr = WeightExpr::new(exps.to_vec(), pows.to_vec());
    let shift = bundle.log_weight(&beta_expr)[0];
    let expr = WeightExpr::new(
        exps.iter().map(|&(c, a)| (c, swap_family(alpha, a))).collect(),
        pows.iter().map(|&(p, a)| (p, swap_family(alpha, a))).collect(),
    );
    bundle
        .log_weight(&expr)
        .iter()
        .map(|lw| {
            if lw.is_finite() {
                (lw - shift).exp()
            } else {
                0.0
            }
        })
        .collect()
}

fn profiles(bundle: &WeightBundle, alpha: bool) -> Profiles {
    Profiles {
        w_phi: profile(
            bundle,
            alpha,
            &[(-5.0, Agg::BetaStar)],
            &[(4.0, Agg::GammaStar)],
        ),
        w_psi: profile(
            bundle,
            alpha,
            &[(-5.0, Agg::BetaStar)],
            &[(5.0, Agg::GammaStar)],
        ),
        w_src: profile(bundle, alpha, &[(-3.0, Agg::BetaStar)], &[]),
        w_obs: profile(
            bundle,
            alpha,
            &[(-4.0, Agg::BetaHat), (-1.0, Agg::BetaStar)],
            &[(49.0 / 4.0, Agg::GammaHat)],
        ),
    }
}

fn unit_coeffs(rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut c = Array2::zeros((MODES, MODES));
    for k in 0..MODES {
        for l in 0..MODES {
            c[[k, l]] = StandardNormal.sample(rng);
        }
    }
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        c.mapv_inplace(|v| v / n);
    }
    c
}

fn sine_sum(c: &Array2<f64>, x: f64, y: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..MODES {
        for l in 0..MODES {
            acc += c[[k, l]]
                * ((k + 1) as f64 * PI * x).sin()
                * ((l + 1) as f64 * PI * y).sin();
        }
    }
    acc
}

fn scalar_sample(g: &GridSpec, c: &Array2<f64>) -> ScalarField {
    ScalarField::from_fn(g, |x, y| sine_sum(c, x, y))
}

fn stream_sample(g: &GridSpec, c: &Array2<f64>) -> VectorField {
    let mut vals = Array2::zeros((g.nx + 1, g.ny + 1));
    for i in 1..g.nx {
        for j in 1..g.ny {
            vals[[i, j]] = sine_sum(c, i as f64 * g.hx, j as f64 * g.hy);
        }
    }
    let mut w = VectorField::zeros(g);
    for i in 1..g.nx {
        for j in 0..g.ny {
            w.u[[i, j]] = (vals[[i, j + 1]] - vals[[i, j]]) / g.hy;
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            w.v[[i, j]] = -(vals[[i + 1, j]] - vals[[i, j]]) / g.hx;
        }
    }
    w
}

/// Draws (phi_T, psi_T, g, g0) for a seed; the coefficient blocks come
/// out of the stream in a fixed order before any grid evaluation.
fn draw_sample(g: &GridSpec, seed: u64) -> (VectorField, ScalarField, VectorField, ScalarField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_phi = unit_coeffs(&mut rng);
    let c_psi = unit_coeffs(&mut rng);
    let c_g = unit_coeffs(&mut rng);
    let c_g0 = unit_coeffs(&mut rng);
    (
        stream_sample(g, &c_phi),
        scalar_sample(g, &c_psi),
        stream_sample(g, &c_g),
        scalar_sample(g, &c_g0),
    )
}

fn score(
    g: &GridSpec,
    ops: &Operators,
    bar: &TrajectoryBar,
    mask: &MaskField,
    pr: &Profiles,
    alpha: bool,
    phi_t: &VectorField,
    psi_t: &ScalarField,
    g_src: &VectorField,
    g0_src: &ScalarField,
) -> (f64, f64, f64) {
    let srcs: Vec<SourcePair> = (0..g.nt)
        .map(|_| SourcePair {
            f: g_src.clone(),
            f0: g0_src.clone(),
        })
        .collect();
    let adj = solve_adjoint(g, ops, phi_t, psi_t, Some(&srcs), bar);

    let mut lhs = 0.0;
    let mut obs = 0.0;
    for (m, st) in adj.states.iter().enumerate() {
        let np = norm_vector(g, &st.phi);
        let ns = norm_scalar(g, &st.psi);
        lhs += g.dt * (pr.w_phi[m] * np * np + pr.w_psi[m] * ns * ns);
        if pr.w_obs[m] > 0.0 {
            let mut masked = st.psi.clone();
            for ((i, j), v) in masked.data.indexed_iter_mut() {
                *v *= mask.cells[[i, j]];
            }
            let no = norm_scalar(g, &masked);
            obs += g.dt * pr.w_obs[m] * no * no;
        }
    }
    if !alpha {
        let first = &adj.states[0];
        let np0 = norm_vector(g, &first.phi);
        let ns0 = norm_scalar(g, &first.psi);
        lhs += np0 * np0 + ns0 * ns0;
    }
    let ng = norm_vector(g, g_src);
    let ng0 = norm_scalar(g, g0_src);
    let src_profile: f64 = pr.w_src.iter().map(|w| g.dt * w).sum();
    let rhs = src_profile * (ng * ng + ng0 * ng0) + obs;

    let ratio = if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    };
    (lhs, rhs, ratio)
}

/// Scores one externally supplied sample under the same weight profiles
/// as the seeded experiment. Returns (lhs, rhs, ratio); all-zero data
/// lands on the 0/0 convention and scores ratio 0.
pub fn score_sample(
    g: &GridSpec,
    ops: &Operators,
    bundle: &WeightBundle,
    bar: &TrajectoryBar,
    mask: &MaskField,
    use_alpha_family: bool,
    phi_t: &VectorField,
    psi_t: &ScalarField,
    g_src: &VectorField,
    g0_src: &ScalarField,
) -> (f64, f64, f64) {
    let pr = profiles(bundle, use_alpha_family);
    score(
        g,
        ops,
        bar,
        mask,
        &pr,
        use_alpha_family,
        phi_t,
        psi_t,
        g_src,
        g0_src,
    )
}

/// Scores `samples` seeded draws and reports the full table with max and
/// median ratios. Deterministic: seed k of a run is `seed0 + k`.
pub fn carleman_ratio(
    g: &GridSpec,
    ops: &Operators,
    bundle: &WeightBundle,
    bar: &TrajectoryBar,
    mask: &MaskField,
    samples: usize,
    seed0: u64,
    use_alpha_family: bool,
) -> CarlemanReport {
    let pr = profiles(bundle, use_alpha_family);
    let mut rows = Vec::with_capacity(samples);
    for k in 0..samples {
        let seed = seed0 + k as u64;
        let (phi_t, psi_t, g_src, g0_src) = draw_sample(g, seed);
        let (lhs, rhs, ratio) = score(
            g,
            ops,
            bar,
            mask,
            &pr,
            use_alpha_family,
            &phi_t,
            &psi_t,
            &g_src,
            &g0_src,
        );
        rows.push(CarlemanSample {
            seed,
            phi_t,
            psi_t,
            g_src,
            g0_src,
            lhs,
            rhs,
            ratio,
        });
    }
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max_ratio = ratios.last().copied().unwrap_or(0.0);
    let median_ratio = if ratios.is_empty() {
        0.0
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    CarlemanReport {
        samples: rows,
        max_ratio,
        median_ratio,
        alpha_family: use_alpha_family,
    }
}

/// What the insulated-wall run implies for controllability.
#[derive(Debug, Clone, Copy)]
pub struct NeumannReport {
    pub mass_initial: f64,
    pub mass_final: f64,
    pub drift: f64,
    pub l1_terminal: f64,
    /// nonzero initial mass pins |theta(T)|_L1 away from zero
    pub obstruction_implied: bool,
    pub implied_lower_bound: f64,
}

fn mass(g: &GridSpec, th: &ScalarField) -> f64 {
    th.data.iter().sum::<f64>() * g.hx * g.hy
}

/// Runs the insulated-wall heat march and reports the conserved mass,
/// its round-off drift, and the L1 lower bound it forces on the terminal
/// state whenever the initial mass is nonzero.
pub fn neumann_obstruction(
    g: &GridSpec,
    ops: &Operators,
    theta0: &ScalarField,
    y: &VectorField,
) -> Result<NeumannReport> {
    let levels = solve_heat_neumann(g, ops, theta0, y)?;
    let m0 = mass(g, &levels[0]);
    let mt = mass(g, levels.last().unwrap());
    let l1 = levels
        .last()
        .unwrap()
        .data
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        * g.hx
        * g.hy;
    let implied = m0.abs() > 1e-12;
    Ok(NeumannReport {
        mass_initial: m0,
        mass_final: mt,
        drift: (mt - m0).abs(),
        l1_terminal: l1,
        obstruction_implied: implied,
        implied_lower_bound: if implied { m0.abs() } else { 0.0 },
    })
}
