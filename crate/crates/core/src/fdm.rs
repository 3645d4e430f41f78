//! Tensor-product direct solves for the implicit steps.
//!
//! Every implicit operator in the pipeline is a Kronecker sum of 1D second
//! differences on a uniform grid, so it diagonalizes in a product of 1D
//! trigonometric eigenbases:
//!
//! ```text
//! (I - dt L) x = b      =>      x = Qx [ S .* (Qx' b Qy) ] Qy'
//! ```
//!
//! with `S` the per-mode reciprocal. The solve is exact to round-off and,
//! decisively for the adjoint machinery, exactly symmetric as a bilinear
//! form: `<solve(b), c> = <b, solve(c)>` holds to floating round-off, which
//! an iterative solver truncated at a tolerance cannot guarantee.

use ndarray::Array2;

/// Boundary treatment of the 1D second-difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout1d {
    /// Cell-centered samples, homogeneous Dirichlet wall via ghost = -inner.
    CellDirichlet,
    /// Cell-centered samples, homogeneous Neumann wall via ghost = inner.
    CellNeumann,
    /// Interior face samples with the wall faces pinned to zero.
    FaceInteriorDirichlet,
}

/// Orthonormal eigenbasis of a 1D second-difference operator.
#[derive(Debug, Clone)]
pub struct Basis1d {
    /// Unknown count (cells, or faces minus the two walls).
    pub n: usize,
    /// Columns are orthonormal eigenvectors.
    pub q: Array2<f64>,
    /// Eigenvalues (non-positive).
    pub lam: Vec<f64>,
}

impl Basis1d {
    /// Builds the eigenbasis for `n_cells` cells of width `h`.
    pub fn new(layout: Layout1d, n_cells: usize, h: f64) -> Self {
        let pi = std::f64::consts::PI;
        let nc = n_cells as f64;
        let eig = |k: f64| -(4.0 / (h * h)) * (k * pi / (2.0 * nc)).sin().powi(2);
        match layout {
            Layout1d::CellDirichlet => {
                let n = n_cells;
                let mut q = Array2::zeros((n, n));
                let mut lam = vec![0.0; n];
                for kk in 0..n {
                    let k = (kk + 1) as f64;
                    // sin(k pi (i+1/2)/n); the top mode k = n alternates +-1.
                    let norm = if kk + 1 == n_cells {
                        (1.0 / nc).sqrt()
                    } else {
                        (2.0 / nc).sqrt()
                    };
                    for i in 0..n {
                        q[[i, kk]] = norm * (k * pi * (i as f64 + 0.5) / nc).sin();
                    }
                    lam[kk] = eig(k);
                }
                Self { n, q, lam }
            }
            Layout1d::CellNeumann => {
                let n = n_cells;
                let mut q = Array2::zeros((n, n));
                let mut lam = vec![0.0; n];
                for kk in 0..n {
                    let k = kk as f64;
                    let norm = if kk == 0 {
                        (1.0 / nc).sqrt()
                    } else {
                        (2.0 / nc).sqrt()
                    };
                    for i in 0..n {
                        q[[i, kk]] = norm * (k * pi * (i as f64 + 0.5) / nc).cos();
                    }
                    lam[kk] = eig(k);
                }
                Self { n, q, lam }
            }
            Layout1d::FaceInteriorDirichlet => {
                let n = n_cells - 1;
                let mut q = Array2::zeros((n, n));
                let mut lam = vec![0.0; n];
                for kk in 0..n {
                    let k = (kk + 1) as f64;
                    let norm = (2.0 / nc).sqrt();
                    for i in 0..n {
                        // unknown i sits at face i+1
                        q[[i, kk]] = norm * (k * pi * (i as f64 + 1.0) / nc).sin();
                    }
                    lam[kk] = eig(k);
                }
                Self { n, q, lam }
            }
        }
    }
}

/// Direct 2D solver `x = Qx (S .* (Qx' b Qy)) Qy'` for a fixed mode scaling.
#[derive(Debug, Clone)]
pub struct TensorSolver {
    bx: Basis1d,
    by: Basis1d,
    scale: Array2<f64>,
}

impl TensorSolver {
    /// Solver for `(I - dt L)` where `L = Lx (+) Ly` is the Kronecker sum.
    pub fn helmholtz(bx: Basis1d, by: Basis1d, dt: f64) -> Self {
        let mut scale = Array2::zeros((bx.n, by.n));
        for k in 0..bx.n {
            for l in 0..by.n {
                scale[[k, l]] = 1.0 / (1.0 - dt * (bx.lam[k] + by.lam[l]));
            }
        }
        Self { bx, by, scale }
    }

    /// Solver for the all-Neumann Poisson problem `L q = b` returning the
    /// mean-zero solution; the constant mode of `b` is discarded.
    pub fn poisson_neumann(bx: Basis1d, by: Basis1d) -> Self {
        let mut scale = Array2::zeros((bx.n, by.n));
        for k in 0..bx.n {
            for l in 0..by.n {
                let lam = bx.lam[k] + by.lam[l];
                scale[[k, l]] = if k == 0 && l == 0 { 0.0 } else { 1.0 / lam };
            }
        }
        Self { bx, by, scale }
    }

    /// Applies the solve; `rhs` must have shape `(bx.n, by.n)`.
    pub fn solve(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let coeff = self.bx.q.t().dot(rhs).dot(&self.by.q);
        let scaled = &coeff * &self.scale;
        self.bx.q.dot(&scaled).dot(&self.by.q.t())
    }
}
