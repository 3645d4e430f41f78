//! Second-order MAC stencils and the discrete operators shared by the
//! forward and adjoint solvers.
//!
//! The operator pairs used inside time steps are exact algebraic
//! transposes of each other in the grid inner products:
//!
//! ```text
//! <gradient(p), w>_faces = -<p, divergence(w)>_cells   (wall faces zero)
//! <buoyancy(theta), w>   =  <theta, buoyancy_t(w)>
//! <advect_coeff(y), s>   =  <y, advect_coeff_t(s)>
//! ```
//!
//! Ghost handling: Dirichlet walls reflect (`ghost = -inner`), Neumann walls
//! mirror (`ghost = inner`).

use crate::fdm::{Basis1d, Layout1d, TensorSolver};
use crate::grid::{GridSpec, ScalarField, VectorField};

/// Wall condition for cell-centered stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Cell-centered divergence of a face field.
pub fn divergence(g: &GridSpec, w: &VectorField) -> ScalarField {
    let mut d = ScalarField::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            d.data[[i, j]] = (w.u[[i + 1, j]] - w.u[[i, j]]) / g.hx
                + (w.v[[i, j + 1]] - w.v[[i, j]]) / g.hy;
        }
    }
    d
}

/// Face gradient of a cell field; wall faces carry zero.
pub fn gradient(g: &GridSpec, p: &ScalarField) -> VectorField {
    let mut w = VectorField::zeros(g);
    for i in 1..g.nx {
        for j in 0..g.ny {
            w.u[[i, j]] = (p.data[[i, j]] - p.data[[i - 1, j]]) / g.hx;
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            w.v[[i, j]] = (p.data[[i, j]] - p.data[[i, j - 1]]) / g.hy;
        }
    }
    w
}

/// Five-point Laplacian of a cell field under the given wall condition.
pub fn laplacian_scalar(g: &GridSpec, s: &ScalarField, bc: Bc) -> ScalarField {
    let refl = |inner: f64| match bc {
        Bc::Dirichlet => -inner,
        Bc::Neumann => inner,
    };
    let mut out = ScalarField::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let c = s.data[[i, j]];
            let w = if i > 0 { s.data[[i - 1, j]] } else { refl(c) };
            let e = if i + 1 < g.nx {
                s.data[[i + 1, j]]
            } else {
                refl(c)
            };
            let so = if j > 0 { s.data[[i, j - 1]] } else { refl(c) };
            let n = if j + 1 < g.ny {
                s.data[[i, j + 1]]
            } else {
                refl(c)
            };
            out.data[[i, j]] = (w - 2.0 * c + e) / (g.hx * g.hx) + (so - 2.0 * c + n) / (g.hy * g.hy);
        }
    }
    out
}

/// Component-wise Laplacian of a face field with no-slip walls: normal
/// neighbors are the stored wall zeros, tangential walls reflect.
pub fn laplacian_vector(g: &GridSpec, w: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(g);
    for i in 1..g.nx {
        for j in 0..g.ny {
            let c = w.u[[i, j]];
            let so = if j > 0 { w.u[[i, j - 1]] } else { -c };
            let n = if j + 1 < g.ny { w.u[[i, j + 1]] } else { -c };
            out.u[[i, j]] = (w.u[[i - 1, j]] - 2.0 * c + w.u[[i + 1, j]]) / (g.hx * g.hx)
                + (so - 2.0 * c + n) / (g.hy * g.hy);
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            let c = w.v[[i, j]];
            let we = if i > 0 { w.v[[i - 1, j]] } else { -c };
            let e = if i + 1 < g.nx { w.v[[i + 1, j]] } else { -c };
            out.v[[i, j]] = (we - 2.0 * c + e) / (g.hx * g.hx)
                + (w.v[[i, j - 1]] - 2.0 * c + w.v[[i, j + 1]]) / (g.hy * g.hy);
        }
    }
    out
}

/// L2 inner product of cell fields.
pub fn inner_scalar(g: &GridSpec, a: &ScalarField, b: &ScalarField) -> f64 {
    g.cell_area() * (&a.data * &b.data).sum()
}

/// L2 inner product of face fields (wall faces contribute zero).
pub fn inner_vector(g: &GridSpec, a: &VectorField, b: &VectorField) -> f64 {
    g.cell_area() * ((&a.u * &b.u).sum() + (&a.v * &b.v).sum())
}

pub fn norm_scalar(g: &GridSpec, a: &ScalarField) -> f64 {
    inner_scalar(g, a, a).sqrt()
}

pub fn norm_vector(g: &GridSpec, a: &VectorField) -> f64 {
    inner_vector(g, a, a).sqrt()
}

/// L2 norm of a (velocity, temperature) pair.
pub fn norm_pair(g: &GridSpec, y: &VectorField, th: &ScalarField) -> f64 {
    (inner_vector(g, y, y) + inner_scalar(g, th, th)).sqrt()
}

/// Discrete L1 norm of a cell field.
pub fn l1_scalar(g: &GridSpec, a: &ScalarField) -> f64 {
    g.cell_area() * a.data.iter().map(|x| x.abs()).sum::<f64>()
}

/// Sum of a cell field times cell area (the discrete mass).
pub fn mass(g: &GridSpec, a: &ScalarField) -> f64 {
    g.cell_area() * a.data.sum()
}

/// Leray projector onto discretely divergence-free fields, realized through
/// an exact all-Neumann Poisson solve; returns the projected field and the
/// mean-zero potential.
#[derive(Debug, Clone)]
pub struct Projector {
    solver: TensorSolver,
}

impl Projector {
    pub fn new(g: &GridSpec) -> Self {
        Self {
            solver: TensorSolver::poisson_neumann(
                Basis1d::new(Layout1d::CellNeumann, g.nx, g.hx),
                Basis1d::new(Layout1d::CellNeumann, g.ny, g.hy),
            ),
        }
    }

    pub fn project(&self, g: &GridSpec, w: &VectorField) -> (VectorField, ScalarField) {
        let d = divergence(g, w);
        let q = ScalarField {
            data: self.solver.solve(&d.data),
        };
        let mut out = w.clone();
        out.axpy(-1.0, &gradient(g, &q));
        (out, q)
    }
}

/// Buoyancy lift: cell temperature averaged onto interior vertical faces,
/// horizontal component zero.
pub fn buoyancy(g: &GridSpec, theta: &ScalarField) -> VectorField {
    let mut w = VectorField::zeros(g);
    for i in 0..g.nx {
        for j in 1..g.ny {
            w.v[[i, j]] = 0.5 * (theta.data[[i, j - 1]] + theta.data[[i, j]]);
        }
    }
    w
}

/// Transpose of [`buoyancy`]: vertical faces averaged back to cells. With
/// zero wall faces this is exactly the vertical-velocity cell average.
pub fn buoyancy_t(g: &GridSpec, w: &VectorField) -> ScalarField {
    let mut s = ScalarField::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            s.data[[i, j]] = 0.5 * (w.v[[i, j]] + w.v[[i, j + 1]]);
        }
    }
    s
}

/// Advection of a frozen cell-centered gradient pair by a face velocity:
/// `(C y)(cell) = y_cc . (gx, gy)` with `y_cc` the face-to-center average.
pub fn advect_coeff(
    g: &GridSpec,
    y: &VectorField,
    gx: &ScalarField,
    gy: &ScalarField,
) -> ScalarField {
    let mut s = ScalarField::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let ucc = 0.5 * (y.u[[i, j]] + y.u[[i + 1, j]]);
            let vcc = 0.5 * (y.v[[i, j]] + y.v[[i, j + 1]]);
            s.data[[i, j]] = ucc * gx.data[[i, j]] + vcc * gy.data[[i, j]];
        }
    }
    s
}

/// Transpose of [`advect_coeff`] against a cell field: distributes
/// `(gx, gy) * s` back onto the adjacent faces.
pub fn advect_coeff_t(
    g: &GridSpec,
    s: &ScalarField,
    gx: &ScalarField,
    gy: &ScalarField,
) -> VectorField {
    let mut w = VectorField::zeros(g);
    for i in 1..g.nx {
        for j in 0..g.ny {
            w.u[[i, j]] = 0.5
                * (gx.data[[i - 1, j]] * s.data[[i - 1, j]] + gx.data[[i, j]] * s.data[[i, j]]);
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            w.v[[i, j]] = 0.5
                * (gy.data[[i, j - 1]] * s.data[[i, j - 1]] + gy.data[[i, j]] * s.data[[i, j]]);
        }
    }
    w
}

/// Conservative first-order upwind divergence of the scalar flux `y * s`.
/// Wall fluxes vanish with the wall-normal velocity, so the cell sum
/// telescopes to zero exactly.
pub fn upwind_scalar(g: &GridSpec, y: &VectorField, s: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(g);
    let up = |vel: f64, lo: f64, hi: f64| if vel > 0.0 { vel * lo } else { vel * hi };
    for i in 0..g.nx {
        for j in 0..g.ny {
            let fxw = if i > 0 {
                up(y.u[[i, j]], s.data[[i - 1, j]], s.data[[i, j]])
            } else {
                0.0
            };
            let fxe = if i + 1 < g.nx {
                up(y.u[[i + 1, j]], s.data[[i, j]], s.data[[i + 1, j]])
            } else {
                0.0
            };
            let fys = if j > 0 {
                up(y.v[[i, j]], s.data[[i, j - 1]], s.data[[i, j]])
            } else {
                0.0
            };
            let fyn = if j + 1 < g.ny {
                up(y.v[[i, j + 1]], s.data[[i, j]], s.data[[i, j + 1]])
            } else {
                0.0
            };
            out.data[[i, j]] = (fxe - fxw) / g.hx + (fyn - fys) / g.hy;
        }
    }
    out
}

/// Conservative first-order upwind self-advection `div(y (x) y)` evaluated
/// per velocity component on its own staggered control volumes.
pub fn upwind_vector(g: &GridSpec, y: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(g);
    let up = |vel: f64, lo: f64, hi: f64| if vel > 0.0 { vel * lo } else { vel * hi };
    // u control volumes: x-fluxes at cell centers, y-fluxes at vertices.
    for i in 1..g.nx {
        for j in 0..g.ny {
            let fw = {
                let a = 0.5 * (y.u[[i - 1, j]] + y.u[[i, j]]);
                up(a, y.u[[i - 1, j]], y.u[[i, j]])
            };
            let fe = {
                let a = 0.5 * (y.u[[i, j]] + y.u[[i + 1, j]]);
                up(a, y.u[[i, j]], y.u[[i + 1, j]])
            };
            let fs = if j > 0 {
                let a = 0.5 * (y.v[[i - 1, j]] + y.v[[i, j]]);
                up(a, y.u[[i, j - 1]], y.u[[i, j]])
            } else {
                0.0
            };
            let fn_ = if j + 1 < g.ny {
                let a = 0.5 * (y.v[[i - 1, j + 1]] + y.v[[i, j + 1]]);
                up(a, y.u[[i, j]], y.u[[i, j + 1]])
            } else {
                0.0
            };
            out.u[[i, j]] = (fe - fw) / g.hx + (fn_ - fs) / g.hy;
        }
    }
    // v control volumes: mirrored.
    for i in 0..g.nx {
        for j in 1..g.ny {
            let fs = {
                let a = 0.5 * (y.v[[i, j - 1]] + y.v[[i, j]]);
                up(a, y.v[[i, j - 1]], y.v[[i, j]])
            };
            let fn_ = {
                let a = 0.5 * (y.v[[i, j]] + y.v[[i, j + 1]]);
                up(a, y.v[[i, j]], y.v[[i, j + 1]])
            };
            let fw = if i > 0 {
                let a = 0.5 * (y.u[[i, j - 1]] + y.u[[i, j]]);
                up(a, y.v[[i - 1, j]], y.v[[i, j]])
            } else {
                0.0
            };
            let fe = if i + 1 < g.nx {
                let a = 0.5 * (y.u[[i + 1, j - 1]] + y.u[[i + 1, j]]);
                up(a, y.v[[i, j]], y.v[[i + 1, j]])
            } else {
                0.0
            };
            out.v[[i, j]] = (fe - fw) / g.hx + (fn_ - fs) / g.hy;
        }
    }
    out
}

/// Advective Courant number `||y||_inf dt / min(hx, hy)`.
pub fn cfl_number(g: &GridSpec, y: &VectorField, dt: f64) -> f64 {
    y.linf() * dt / g.hx.min(g.hy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(&DomainSpec::unit_square(1.0), n, n, 4).unwrap()
    }

    fn random_fields(g: &GridSpec, seed: u64) -> (VectorField, ScalarField) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = VectorField::zeros(g);
        for i in 1..g.nx {
            for j in 0..g.ny {
                w.u[[i, j]] = rng.random_range(-1.0..1.0);
            }
        }
        for i in 0..g.nx {
            for j in 1..g.ny {
                w.v[[i, j]] = rng.random_range(-1.0..1.0);
            }
        }
        let mut s = ScalarField::zeros(g);
        s.data.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        (w, s)
    }

    #[test]
    fn divergence_of_solenoidal_samples_shrinks_at_second_order() {
        // u = sin(pi x) cos(3 pi y), v = -cos(pi x) sin(3 pi y)/3 is
        // solenoidal and wall-compatible; the mismatched wavenumbers keep
        // the truncation terms from cancelling, so the discrete divergence
        // of the exact samples decays like h^2.
        let sample = |n: usize| -> f64 {
            let g = grid(n);
            let w = VectorField::from_fn(
                &g,
                |x, y| (PI * x).sin() * (3.0 * PI * y).cos(),
                |x, y| -(PI * x).cos() * (3.0 * PI * y).sin() / 3.0,
            );
            divergence(&g, &w).linf()
        };
        let (d16, d32) = (sample(16), sample(32));
        assert!(d16 < 0.05, "coarse divergence {d16:.3e}");
        assert!(
            d16 / d32 >= 3.5,
            "divergence not second order: {d16:.3e} -> {d32:.3e}"
        );
    }

    #[test]
    fn gradient_is_second_order_at_interior_faces() {
        let err = |n: usize| -> f64 {
            let g = grid(n);
            let p = ScalarField::from_fn(&g, |x, y| (PI * x).cos() * (PI * y).cos());
            let w = gradient(&g, &p);
            let mut e = 0.0f64;
            for i in 1..g.nx {
                for j in 0..g.ny {
                    let (x, y) = (i as f64 * g.hx, (j as f64 + 0.5) * g.hy);
                    let exact = -PI * (PI * x).sin() * (PI * y).cos();
                    e = e.max((w.u[[i, j]] - exact).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(16), err(32));
        assert!(
            e1 / e2 >= 3.5,
            "gradient not second order: {e1:.3e} -> {e2:.3e}"
        );
    }

    #[test]
    fn laplacian_dirichlet_is_second_order_on_odd_symmetric_data() {
        let err = |n: usize| -> f64 {
            let g = grid(n);
            let s = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
            let lap = laplacian_scalar(&g, &s, Bc::Dirichlet);
            let mut e = 0.0f64;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let exact = -2.0 * PI * PI * s.data[[i, j]];
                    e = e.max((lap.data[[i, j]] - exact).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(16), err(32));
        assert!(
            e1 / e2 >= 3.5,
            "laplacian not second order: {e1:.3e} -> {e2:.3e}"
        );
    }

    #[test]
    fn laplacian_neumann_annihilates_constants_including_walls() {
        let g = grid(12);
        let mut s = ScalarField::zeros(&g);
        s.data.fill(3.25);
        let lap = laplacian_scalar(&g, &s, Bc::Neumann);
        assert_eq!(lap.linf(), 0.0);
    }

    #[test]
    fn gradient_divergence_duality_is_exact() {
        let g = grid(13);
        let (w, p) = random_fields(&g, 41);
        let lhs = inner_vector(&g, &gradient(&g, &p), &w);
        let rhs = -inner_scalar(&g, &p, &divergence(&g, &w));
        assert!(
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0),
            "duality gap {:.3e}",
            (lhs - rhs).abs()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn duality_holds_for_random_seeds(seed in 0u64..1u64 << 48) {
            let g = grid(9);
            let (w, p) = random_fields(&g, seed);
            let lhs = inner_vector(&g, &gradient(&g, &p), &w);
            let rhs = -inner_scalar(&g, &p, &divergence(&g, &w));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn projection_removes_gradients_and_fixes_divergence() {
        let g = grid(16);
        let proj = Projector::new(&g);
        let (w, p) = random_fields(&g, 5);
        // pure gradient input projects to ~0
        let gp = gradient(&g, &p);
        let (z, _) = proj.project(&g, &gp);
        assert!(z.linf() < 1e-10 * p.linf().max(1.0), "residual {:.3e}", z.linf());
        // arbitrary input becomes divergence free
        let (wp, _) = proj.project(&g, &w);
        assert!(divergence(&g, &wp).linf() < 1e-10);
        // idempotency
        let (wpp, _) = proj.project(&g, &wp);
        let mut diff = wpp.clone();
        diff.axpy(-1.0, &wp);
        assert!(diff.linf() < 1e-12);
        // zero maps to zero
        let (z0, q0) = proj.project(&g, &VectorField::zeros(&g));
        assert_eq!(z0.linf(), 0.0);
        assert_eq!(q0.linf(), 0.0);
    }

    #[test]
    fn projection_preserves_divergence_free_fields() {
        let g = grid(16);
        let proj = Projector::new(&g);
        let (w, _) = random_fields(&g, 17);
        let (wp, _) = proj.project(&g, &w);
        let (wpp, _) = proj.project(&g, &wp);
        let mut diff = wpp;
        diff.axpy(-1.0, &wp);
        assert!(diff.linf() < 1e-12);
    }

    #[test]
    fn buoyancy_and_transpose_are_adjoint() {
        let g = grid(11);
        let (w, s) = random_fields(&g, 23);
        let lhs = inner_vector(&g, &buoyancy(&g, &s), &w);
        let rhs = inner_scalar(&g, &s, &buoyancy_t(&g, &w));
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn advect_coeff_and_transpose_are_adjoint() {
        let g = grid(11);
        let (y, s) = random_fields(&g, 29);
        let (_, gy) = random_fields(&g, 31);
        let (_, gx) = random_fields(&g, 37);
        let lhs = inner_scalar(&g, &advect_coeff(&g, &y, &gx, &gy), &s);
        let rhs = inner_vector(&g, &y, &advect_coeff_t(&g, &s, &gx, &gy));
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn upwind_scalar_mass_telescopes_to_zero() {
        let g = grid(14);
        let (y, s) = random_fields(&g, 43);
        let adv = upwind_scalar(&g, &y, &s);
        assert!(
            mass(&g, &adv).abs() < 1e-14 * s.linf() * y.linf() * (g.nx * g.ny) as f64,
            "advective mass {:.3e}",
            mass(&g, &adv)
        );
    }

    #[test]
    fn upwind_transports_a_blob_at_first_order() {
        // uniform rightward wind away from walls; compare against the
        // translated profile after time t.
        let run = |n: usize| -> f64 {
            let g = grid(n);
            let c = 0.5;
            let mut y = VectorField::zeros(&g);
            for i in 1..g.nx {
                for j in 0..g.ny {
                    y.u[[i, j]] = c;
                }
            }
            let blob =
                |x: f64, y: f64| (-((x - 0.35) / 0.08).powi(2) - ((y - 0.5) / 0.08).powi(2)).exp();
            let mut s = ScalarField::from_fn(&g, blob);
            let dt = 0.2 * g.hx / c;
            let steps = (0.2 / (c * dt)).round() as usize;
            for _ in 0..steps {
                let adv = upwind_scalar(&g, &y, &s);
                s.axpy(-dt, &adv);
                // forward Euler transport only; no diffusion
            }
            let t = steps as f64 * dt;
            let exact = ScalarField::from_fn(&g, |x, yy| blob(x - c * t, yy));
            let mut diff = s;
            diff.axpy(-1.0, &exact);
            diff.linf()
        };
        let (e1, e2) = (run(32), run(64));
        assert!(e1 < 0.5, "coarse transport error {e1:.3}");
        assert!(
            e1 / e2 > 1.35,
            "upwind transport not converging at first order: {e1:.3e} -> {e2:.3e}"
        );
    }

    #[test]
    fn cfl_number_formula() {
        let g = grid(10);
        let mut y = VectorField::zeros(&g);
        y.u[[3, 4]] = 2.0;
        assert!((cfl_number(&g, &y, 0.05) - 2.0 * 0.05 / 0.1).abs() < 1e-15);
    }
}
