//! Exponential observation weights on the space-time cylinder.
//!
//! Spatial shape function on the box (0,Lx) x (0,Ly), normalized so its
//! sup is exactly 1 at the box center:
//!
//! ```text
//! eta(x1, x2) = 16 x1 (Lx - x1) x2 (Ly - x2) / (Lx^2 Ly^2)
//! ```
//!
//! Time profile: ell(t) = t on [0, T/4], ell(t) = T - t on [3T/4, T], with a
//! C^2 quintic blend in between that peaks at t = T/2 with value 13T/32.
//! The frozen variant ell_tilde equals max ell on [0, T/2] and ell after,
//! so the beta family below does not vanish at t = 0.
//!
//! Weight families on vertex nodes x and time nodes t:
//!
//! ```text
//! alpha(x,t) = (e^{2 lambda |eta|_inf} - e^{lambda eta(x)}) / ell(t)^8
//! xi(x,t)    = e^{lambda eta(x)} / ell(t)^8
//! beta, gamma: same expressions with ell_tilde in place of ell
//! ```
//!
//! Starred aggregates are the space max of alpha / min of xi, hatted ones
//! the opposite extreme. alpha and xi blow up at t = 0 and t = T, beta and
//! gamma only at t = T; those nodes are stored as +inf and flagged, and
//! every consumer works with e^{-s(...)} composites that are exactly zero
//! there. Composites are evaluated in log space and exponentiated last;
//! results below 1e-300 flush to zero.

use ndarray::Array2;

use crate::domain::DomainSpec;
use crate::error::{CoreError, Result};
use crate::grid::GridSpec;

/// Values a stored weight may underflow to before being flushed to zero.
pub const UNDERFLOW_FLUSH: f64 = 1e-300;

/// Relative slack for the inequality report (pure round-off allowance).
pub const INEQ_SLACK: f64 = 1e-12;

/// Shape function samples on the (nx+1) x (ny+1) vertex grid together with
/// its analytic gradient and the admissibility minimum.
#[derive(Debug, Clone)]
pub struct EtaField {
    pub values: Array2<f64>,
    pub grad_x: Array2<f64>,
    pub grad_y: Array2<f64>,
    /// analytic sup of eta (1 by construction)
    pub norm_inf: f64,
    /// min |grad eta| over vertex nodes outside omega0, box corners
    /// excluded (the product shape is critical there by construction)
    pub grad_min_off_omega0: f64,
}

impl EtaField {
    /// Builds eta and verifies admissibility: the inner region omega0 must
    /// contain the box center (the unique interior critical point), eta
    /// must vanish on boundary nodes and be positive inside, and the
    /// gradient must be bounded away from zero off omega0.
    pub fn build(domain: &DomainSpec, grid: &GridSpec) -> Result<Self> {
        let c = domain.center();
        if !domain.omega0.contains(&c, domain.n_dim) {
            return Err(CoreError::Admissibility(format!(
                "omega0 {:?}..{:?} must contain the box center ({}, {}); the default shape \
                 function has its only interior critical point there",
                domain.omega0.lo, domain.omega0.hi, c[0], c[1]
            )));
        }
        let (lx, ly) = (grid.lx, grid.ly);
        let scale = 16.0 / (lx * lx * ly * ly);
        let (nvx, nvy) = (grid.nx + 1, grid.ny + 1);
        let mut values = Array2::zeros((nvx, nvy));
        let mut grad_x = Array2::zeros((nvx, nvy));
        let mut grad_y = Array2::zeros((nvx, nvy));
        for i in 0..nvx {
            for j in 0..nvy {
                let x = i as f64 * grid.hx;
                let y = j as f64 * grid.hy;
                values[[i, j]] = scale * x * (lx - x) * y * (ly - y);
                grad_x[[i, j]] = scale * (lx - 2.0 * x) * y * (ly - y);
                grad_y[[i, j]] = scale * x * (lx - x) * (ly - 2.0 * y);
            }
        }
        let mut grad_min = f64::INFINITY;
        for i in 0..nvx {
            for j in 0..nvy {
                let corner = (i == 0 || i == nvx - 1) && (j == 0 || j == nvy - 1);
                if corner {
                    continue;
                }
                let p = [i as f64 * grid.hx, j as f64 * grid.hy, 0.0];
                if domain.omega0.contains(&p, 2) {
                    continue;
                }
                let gm = grad_x[[i, j]].hypot(grad_y[[i, j]]);
                if gm < grad_min {
                    grad_min = gm;
                }
            }
        }
        if !(grad_min > 0.0) {
            return Err(CoreError::Admissibility(format!(
                "shape-function gradient vanishes at a node outside omega0 (min {grad_min:.3e})"
            )));
        }
        Ok(Self {
            values,
            grad_x,
            grad_y,
            norm_inf: 1.0,
            grad_min_off_omega0: grad_min,
        })
    }
}

/// Samples of ell and ell_tilde on the uniform time grid.
#[derive(Debug, Clone)]
pub struct TimeProfile {
    pub t_final: f64,
    pub nt: usize,
    pub ell: Vec<f64>,
    pub ell_tilde: Vec<f64>,
}

impl TimeProfile {
    pub fn build(t_final: f64, nt: usize) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if nt < 8 {
            return Err(CoreError::InvalidParameter(format!(
                "time profile needs nt >= 8, got {nt}"
            )));
        }
        let dt = t_final / nt as f64;
        let peak = Self::ell_continuous(t_final, 0.5 * t_final);
        let mut ell = Vec::with_capacity(nt + 1);
        let mut ell_tilde = Vec::with_capacity(nt + 1);
        for m in 0..=nt {
            let t = m as f64 * dt;
            let l = Self::ell_continuous(t_final, t);
            ell.push(l);
            ell_tilde.push(if t <= 0.5 * t_final { peak } else { l });
        }
        Ok(Self {
            t_final,
            nt,
            ell,
            ell_tilde,
        })
    }

    /// Pointwise ell: linear ramps joined by the quintic blend
    /// `T/4 + (T/2) u (1 - 2u^2 + u^3)`, u = (t - T/4)/(T/2), which matches
    /// value and slope of both ramps with zero curvature at the junctions.
    pub fn ell_continuous(t_final: f64, t: f64) -> f64 {
        let tq = 0.25 * t_final;
        if t <= tq {
            t
        } else if t >= 3.0 * tq {
            t_final - t
        } else {
            let u = (t - tq) / (2.0 * tq);
            tq + 2.0 * tq * (u * (1.0 - 2.0 * u * u + u * u * u))
        }
    }
}

/// Time-only weight aggregates addressable inside composite expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agg {
    AlphaStar,
    AlphaHat,
    XiStar,
    XiHat,
    BetaStar,
    BetaHat,
    GammaStar,
    GammaHat,
}

impl Agg {
    fn is_alpha_family(self) -> bool {
        matches!(self, Agg::AlphaStar | Agg::AlphaHat | Agg::XiStar | Agg::XiHat)
    }
}

/// Composite weight `exp(s * sum c_k A_k(t)) * prod B_j(t)^{p_j}` with all
/// factors drawn from the aggregate arrays.
#[derive(Debug, Clone)]
pub struct WeightExpr {
    pub exp_terms: Vec<(f64, Agg)>,
    pub pow_terms: Vec<(f64, Agg)>,
}

impl WeightExpr {
    pub fn new(exp_terms: Vec<(f64, Agg)>, pow_terms: Vec<(f64, Agg)>) -> Self {
        Self {
            exp_terms,
            pow_terms,
        }
    }
}

/// A composite weight normalized by its plateau maximum; `values[m]` is
/// `w(t_m) / max_m w`, and `log_peak` is ln of that maximum.
#[derive(Debug, Clone)]
pub struct NormalizedWeight {
    pub values: Vec<f64>,
    pub log_peak: f64,
}

/// One line of the inequality report.
#[derive(Debug, Clone)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub passed: bool,
    /// most negative relative slack seen (>= 0 when passed)
    pub worst_slack: f64,
    /// (i, j, m) vertex/time node of the worst slack, if any node applies
    pub worst_node: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct WeightReport {
    pub checks: Vec<InequalityCheck>,
    pub all_passed: bool,
}

/// The four weight families with their space-time samples and the eight
/// time-only aggregates. Slices at flagged blow-up nodes hold +inf.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub s: f64,
    pub lambda: f64,
    pub eta: EtaField,
    pub profile: TimeProfile,
    pub alpha: Vec<Array2<f64>>,
    pub xi: Vec<Array2<f64>>,
    pub beta: Vec<Array2<f64>>,
    pub gamma: Vec<Array2<f64>>,
    pub alpha_star: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub xi_star: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    /// alpha/xi blow-up flags per time node (true at t = 0 and t = T)
    pub alpha_infinite: Vec<bool>,
    /// beta/gamma blow-up flags per time node (true at t = T)
    pub beta_infinite: Vec<bool>,
}

pub fn build_weights(
    eta: EtaField,
    profile: TimeProfile,
    s: f64,
    lambda: f64,
) -> Result<WeightBundle> {
    if !(s >= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "weight parameter s must be >= 1, got {s}"
        )));
    }
    if !(lambda >= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "weight parameter lambda must be >= 1, got {lambda}"
        )));
    }
    let nt = profile.nt;
    let dim = eta.values.dim();
    let top = (2.0 * lambda * eta.norm_inf).exp();
    let exp_eta = eta.values.mapv(|e| (lambda * e).exp());

    let mut b = WeightBundle {
        s,
        lambda,
        alpha: Vec::with_capacity(nt + 1),
        xi: Vec::with_capacity(nt + 1),
        beta: Vec::with_capacity(nt + 1),
        gamma: Vec::with_capacity(nt + 1),
        alpha_star: vec![0.0; nt + 1],
        alpha_hat: vec![0.0; nt + 1],
        xi_star: vec![0.0; nt + 1],
        xi_hat: vec![0.0; nt + 1],
        beta_star: vec![0.0; nt + 1],
        beta_hat: vec![0.0; nt + 1],
        gamma_star: vec![0.0; nt + 1],
        gamma_hat: vec![0.0; nt + 1],
        alpha_infinite: vec![false; nt + 1],
        beta_infinite: vec![false; nt + 1],
        eta,
        profile,
    };

    for m in 0..=nt {
        let ell = b.profile.ell[m];
        let ellt = b.profile.ell_tilde[m];
        for (family_ell, fields, stars, infinite) in [
            (
                ell,
                (&mut b.alpha, &mut b.xi),
                (
                    &mut b.alpha_star,
                    &mut b.alpha_hat,
                    &mut b.xi_star,
                    &mut b.xi_hat,
                ),
                &mut b.alpha_infinite,
            ),
            (
                ellt,
                (&mut b.beta, &mut b.gamma),
                (
                    &mut b.beta_star,
                    &mut b.beta_hat,
                    &mut b.gamma_star,
                    &mut b.gamma_hat,
                ),
                &mut b.beta_infinite,
            ),
        ] {
            let (a_field, x_field) = fields;
            let (a_star, a_hat, x_star, x_hat) = stars;
            if family_ell <= 0.0 {
                infinite[m] = true;
                a_field.push(Array2::from_elem(dim, f64::INFINITY));
                x_field.push(Array2::from_elem(dim, f64::INFINITY));
                a_star[m] = f64::INFINITY;
                a_hat[m] = f64::INFINITY;
                x_star[m] = f64::INFINITY;
                x_hat[m] = f64::INFINITY;
                continue;
            }
            let inv8 = family_ell.powi(-8);
            let a = exp_eta.mapv(|e| (top - e) * inv8);
            let x = exp_eta.mapv(|e| e * inv8);
            let (mut amax, mut amin) = (f64::NEG_INFINITY, f64::INFINITY);
            let (mut xmax, mut xmin) = (f64::NEG_INFINITY, f64::INFINITY);
            for v in a.iter() {
                amax = amax.max(*v);
                amin = amin.min(*v);
            }
            for v in x.iter() {
                xmax = xmax.max(*v);
                xmin = xmin.min(*v);
            }
            a_star[m] = amax;
            a_hat[m] = amin;
            x_star[m] = xmin;
            x_hat[m] = xmax;
            a_field.push(a);
            x_field.push(x);
        }
    }

    for m in 0..=nt {
        if !b.alpha_infinite[m]
            && (!b.alpha_star[m].is_finite() || !b.xi_hat[m].is_finite())
        {
            return Err(CoreError::Overflow(format!(
                "alpha-family weight overflows double range at interior time node {m} \
                 (t = {:.6}); lower s or lambda",
                m as f64 * b.profile.t_final / nt as f64
            )));
        }
        if !b.beta_infinite[m] && (!b.beta_star[m].is_finite() || !b.gamma_hat[m].is_finite()) {
            return Err(CoreError::Overflow(format!(
                "beta-family weight overflows double range at interior time node {m}"
            )));
        }
    }
    Ok(b)
}

impl WeightBundle {
    pub fn nt(&self) -> usize {
        self.profile.nt
    }

    pub fn aggregate(&self, a: Agg) -> &[f64] {
        match a {
            Agg::AlphaStar => &self.alpha_star,
            Agg::AlphaHat => &self.alpha_hat,
            Agg::XiStar => &self.xi_star,
            Agg::XiHat => &self.xi_hat,
            Agg::BetaStar => &self.beta_star,
            Agg::BetaHat => &self.beta_hat,
            Agg::GammaStar => &self.gamma_star,
            Agg::GammaHat => &self.gamma_hat,
        }
    }

    fn is_infinite_at(&self, a: Agg, m: usize) -> bool {
        if a.is_alpha_family() {
            self.alpha_infinite[m]
        } else {
            self.beta_infinite[m]
        }
    }

    /// eta-independent numerator constant of an aggregate; at a blow-up
    /// node the aggregate behaves like this constant over ell^8, so signed
    /// sums of these constants decide composite limits.
    fn rate_constant(&self, a: Agg) -> f64 {
        let top = (2.0 * self.lambda * self.eta.norm_inf).exp();
        let peak = (self.lambda * self.eta.norm_inf).exp();
        match a {
            Agg::AlphaStar | Agg::BetaStar => top - 1.0,
            Agg::AlphaHat | Agg::BetaHat => top - peak,
            Agg::XiStar | Agg::GammaStar => 1.0,
            Agg::XiHat | Agg::GammaHat => peak,
        }
    }

    /// Natural log of a composite weight at every time node. Blow-up nodes
    /// resolve to +-inf by the sign of the combined exponential rate (all
    /// infinite aggregates diverge at the shared 1/ell^8 speed, so the
    /// signed sum of their numerator constants decides); pure power-law
    /// divergences only matter when that rate sum is exactly zero.
    pub fn log_weight(&self, expr: &WeightExpr) -> Vec<f64> {
        let nt = self.nt();
        let mut out = vec![0.0; nt + 1];
        for m in 0..=nt {
            let mut finite = 0.0;
            let mut exp_rate = 0.0;
            let mut any_exp_inf = false;
            for &(c, a) in &expr.exp_terms {
                if self.is_infinite_at(a, m) {
                    any_exp_inf = true;
                    exp_rate += c * self.rate_constant(a);
                } else {
                    finite += self.s * c * self.aggregate(a)[m];
                }
            }
            let mut pow_rate = 0.0;
            let mut any_pow_inf = false;
            for &(p, a) in &expr.pow_terms {
                if self.is_infinite_at(a, m) {
                    any_pow_inf = true;
                    pow_rate += p;
                } else {
                    finite += p * self.aggregate(a)[m].ln();
                }
            }
            out[m] = if any_exp_inf && exp_rate != 0.0 {
                if exp_rate > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            } else if any_pow_inf && pow_rate != 0.0 {
                if pow_rate > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                finite
            };
        }
        out
    }

    /// Raw composite values, exponentiated last with the underflow flush.
    pub fn weight_values(&self, expr: &WeightExpr) -> Vec<f64> {
        self.log_weight(expr)
            .into_iter()
            .map(|l| {
                let v = l.exp();
                if v < UNDERFLOW_FLUSH {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }

    /// Composite values scaled by the plateau maximum so the largest node
    /// is exactly 1; keeps s-sweeps inside double range. Returns all zeros
    /// (log_peak = -inf) for an identically vanishing composite.
    pub fn normalized_weight(&self, expr: &WeightExpr) -> NormalizedWeight {
        let logs = self.log_weight(expr);
        let peak = logs
            .iter()
            .copied()
            .filter(|l| l.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let values = logs
            .iter()
            .map(|&l| {
                if !peak.is_finite() {
                    return 0.0;
                }
                let v = (l - peak).exp();
                if v < UNDERFLOW_FLUSH {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        NormalizedWeight {
            values,
            log_peak: peak,
        }
    }
}

/// Verifies the orderings every downstream formula relies on; failures are
/// reported with the worst node, never thrown.
pub fn check_weight_inequalities(w: &WeightBundle) -> WeightReport {
    let nt = w.nt();
    let mut checks = Vec::new();

    // pointwise sandwich and the e^{-2s alpha} <= e^{-4s alpha + 2s alpha*}
    // comparison (log-equivalent to alpha <= alpha*)
    let mut sandwich = |name: &'static str,
                        field: &[Array2<f64>],
                        lo: &[f64],
                        hi: &[f64],
                        skip: &[bool]| {
        let mut worst = f64::INFINITY;
        let mut node = None;
        for m in 0..=nt {
            if skip[m] {
                continue;
            }
            let scale = hi[m].abs().max(1.0);
            for ((i, j), &v) in field[m].indexed_iter() {
                let slack = ((hi[m] - v).min(v - lo[m])) / scale;
                if slack < worst {
                    worst = slack;
                    node = Some((i, j, m));
                }
            }
        }
        checks.push(InequalityCheck {
            name,
            passed: worst >= -INEQ_SLACK,
            worst_slack: worst,
            worst_node: node,
        });
    };
    sandwich(
        "alpha_hat <= alpha <= alpha_star",
        &w.alpha,
        &w.alpha_hat,
        &w.alpha_star,
        &w.alpha_infinite,
    );
    sandwich(
        "xi_star <= xi <= xi_hat",
        &w.xi,
        &w.xi_star,
        &w.xi_hat,
        &w.alpha_infinite,
    );
    sandwich(
        "beta_hat <= beta <= beta_star",
        &w.beta,
        &w.beta_hat,
        &w.beta_star,
        &w.beta_infinite,
    );

    // exp(-2s alpha) <= exp(-4s alpha + 2s alpha_star), compared in log space
    {
        let mut worst = f64::INFINITY;
        let mut node = None;
        for m in 0..=nt {
            if w.alpha_infinite[m] {
                continue;
            }
            let scale = (2.0 * w.s * w.alpha_star[m]).abs().max(1.0);
            for ((i, j), &a) in w.alpha[m].indexed_iter() {
                // (-4s a + 2s a*) - (-2s a) = 2s (a* - a)
                let slack = 2.0 * w.s * (w.alpha_star[m] - a) / scale;
                if slack < worst {
                    worst = slack;
                    node = Some((i, j, m));
                }
            }
        }
        checks.push(InequalityCheck {
            name: "exp(-2s*alpha) <= exp(-4s*alpha + 2s*alpha_star)",
            passed: worst >= -INEQ_SLACK,
            worst_slack: worst,
            worst_node: node,
        });
    }

    // beta family equals the alpha family strictly after T/2
    {
        let mut worst = f64::INFINITY;
        let mut node = None;
        for m in 0..=nt {
            let t = m as f64 * w.profile.t_final / nt as f64;
            if t <= 0.5 * w.profile.t_final || w.beta_infinite[m] {
                continue;
            }
            let scale = w.alpha_star[m].abs().max(1.0);
            for ((i, j), &bv) in w.beta[m].indexed_iter() {
                let slack = -((bv - w.alpha[m][[i, j]]).abs()) / scale;
                if slack < worst {
                    worst = slack;
                    node = Some((i, j, m));
                }
            }
        }
        checks.push(InequalityCheck {
            name: "beta == alpha on (T/2, T]",
            passed: worst >= -INEQ_SLACK,
            worst_slack: worst,
            worst_node: node,
        });
    }

    // beta family constant in t on [0, T/2]
    {
        let mut worst = f64::INFINITY;
        let mut node = None;
        let base = &w.beta[0];
        let scale = w.beta_star[0].abs().max(1.0);
        for m in 0..=nt {
            let t = m as f64 * w.profile.t_final / nt as f64;
            if t > 0.5 * w.profile.t_final {
                continue;
            }
            for ((i, j), &bv) in w.beta[m].indexed_iter() {
                let slack = -((bv - base[[i, j]]).abs()) / scale;
                if slack < worst {
                    worst = slack;
                    node = Some((i, j, m));
                }
            }
        }
        checks.push(InequalityCheck {
            name: "beta constant on [0, T/2]",
            passed: worst >= -INEQ_SLACK,
            worst_slack: worst,
            worst_node: node,
        });
    }

    let all_passed = checks.iter().all(|c| c.passed);
    WeightReport {
        checks,
        all_passed,
    }
}
