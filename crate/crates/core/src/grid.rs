//! MAC staggered grid and field containers.
//!
//! Layout on an `nx x ny` cell grid over `(0,lx) x (0,ly)`:
//!
//! ```text
//! scalars (theta, p, psi, pi)   cell centers   ((i+1/2)hx, (j+1/2)hy)   nx   x ny
//! u (horizontal velocity)       x-faces        (i hx, (j+1/2)hy)        nx+1 x ny
//! v (vertical velocity)         y-faces        ((i+1/2)hx, j hy)        nx   x ny+1
//! ```
//!
//! Boundary faces (`u` at i = 0, nx; `v` at j = 0, ny) hold the impermeable
//! wall condition and are kept identically zero by every solver.

use ndarray::Array2;

use crate::domain::DomainSpec;
use crate::error::{CoreError, Result};

/// Uniform space-time grid over a 2D box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub lx: f64,
    pub ly: f64,
    pub nt: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Spatial dimension of the underlying model; solvers require 2.
    pub n_dim: usize,
}

impl GridSpec {
    pub fn new(domain: &DomainSpec, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if domain.n_dim != 2 {
            return Err(CoreError::InvalidParameter(
                "grid construction requires a 2D domain".into(),
            ));
        }
        if nx < 2 || ny < 2 || nt < 1 {
            return Err(CoreError::InvalidParameter(format!(
                "grid must have nx, ny >= 2 and nt >= 1, got {nx} x {ny} x {nt}"
            )));
        }
        let (lx, ly) = (domain.lengths[0], domain.lengths[1]);
        Ok(Self {
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            lx,
            ly,
            nt,
            dt: domain.t_final / nt as f64,
            t_final: domain.t_final,
            n_dim: 2,
        })
    }

    /// Time node `t_m = m dt`.
    pub fn time(&self, m: usize) -> f64 {
        self.dt * m as f64
    }

    /// Cell-center coordinates of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
}

/// Cell-centered scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub data: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(g: &GridSpec) -> Self {
        Self {
            data: Array2::zeros((g.nx, g.ny)),
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(g: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut s = Self::zeros(g);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let (x, y) = g.cell_center(i, j);
                s.data[[i, j]] = f(x, y);
            }
        }
        s
    }

    pub fn scale(&mut self, a: f64) {
        self.data.mapv_inplace(|x| a * x);
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        self.data.zip_mut_with(&other.data, |x, &y| *x += a * y);
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// MAC face-centered velocity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    /// x-component on x-faces, shape (nx+1, ny); columns 0 and nx are walls.
    pub u: Array2<f64>,
    /// y-component on y-faces, shape (nx, ny+1); rows 0 and ny are walls.
    pub v: Array2<f64>,
}

impl VectorField {
    pub fn zeros(g: &GridSpec) -> Self {
        Self {
            u: Array2::zeros((g.nx + 1, g.ny)),
            v: Array2::zeros((g.nx, g.ny + 1)),
        }
    }

    /// Samples components at their face positions, then zeroes wall faces.
    pub fn from_fn(
        g: &GridSpec,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut w = Self::zeros(g);
        for i in 1..g.nx {
            for j in 0..g.ny {
                w.u[[i, j]] = fu(i as f64 * g.hx, (j as f64 + 0.5) * g.hy);
            }
        }
        for i in 0..g.nx {
            for j in 1..g.ny {
                w.v[[i, j]] = fv((i as f64 + 0.5) * g.hx, j as f64 * g.hy);
            }
        }
        w
    }

    pub fn scale(&mut self, a: f64) {
        self.u.mapv_inplace(|x| a * x);
        self.v.mapv_inplace(|x| a * x);
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.u.zip_mut_with(&other.u, |x, &y| *x += a * y);
        self.v.zip_mut_with(&other.v, |x, &y| *x += a * y);
    }

    pub fn linf(&self) -> f64 {
        let mu = self.u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        self.v.iter().fold(mu, |m, &x| m.max(x.abs()))
    }

    /// Asserts the impermeable-wall entries are exactly zero (debug aid).
    pub fn walls_are_zero(&self) -> bool {
        let (nu, _) = self.u.dim();
        let (_, nv) = self.v.dim();
        self.u.row(0).iter().all(|&x| x == 0.0)
            && self.u.row(nu - 1).iter().all(|&x| x == 0.0)
            && self.v.column(0).iter().all(|&x| x == 0.0)
            && self.v.column(nv - 1).iter().all(|&x| x == 0.0)
    }
}

/// Sharp 0/1 indicator of a patch, sampled at cell centers and at interior
/// faces (the face masks gate the optional velocity-component control).
#[derive(Debug, Clone)]
pub struct MaskField {
    pub cells: Array2<f64>,
    pub u_faces: Array2<f64>,
    pub v_faces: Array2<f64>,
}

impl MaskField {
    /// Builds the indicator of `region` (strict interior membership).
    pub fn from_region(g: &GridSpec, d: &DomainSpec, region: &crate::domain::BoxRegion) -> Self {
        let mut cells = Array2::zeros((g.nx, g.ny));
        for i in 0..g.nx {
            for j in 0..g.ny {
                let (x, y) = g.cell_center(i, j);
                if region.contains(&[x, y, 0.0], d.n_dim.min(2)) {
                    cells[[i, j]] = 1.0;
                }
            }
        }
        let mut u_faces = Array2::zeros((g.nx + 1, g.ny));
        for i in 1..g.nx {
            for j in 0..g.ny {
                let p = [i as f64 * g.hx, (j as f64 + 0.5) * g.hy, 0.0];
                if region.contains(&p, 2) {
                    u_faces[[i, j]] = 1.0;
                }
            }
        }
        let mut v_faces = Array2::zeros((g.nx, g.ny + 1));
        for i in 0..g.nx {
            for j in 1..g.ny {
                let p = [(i as f64 + 0.5) * g.hx, j as f64 * g.hy, 0.0];
                if region.contains(&p, 2) {
                    v_faces[[i, j]] = 1.0;
                }
            }
        }
        Self {
            cells,
            u_faces,
            v_faces,
        }
    }

    /// Number of cells inside the patch.
    pub fn cell_count(&self) -> usize {
        self.cells.iter().filter(|&&m| m == 1.0).count()
    }
}
