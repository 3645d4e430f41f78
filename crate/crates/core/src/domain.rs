//! Box domain description: the spatial box, the control patch `omega`, and
//! the inner patch `omega0` that must absorb the critical set of the
//! Carleman bump function.

use crate::error::{CoreError, Result};

/// Axis-aligned open box, dimension 2 or 3 (third axis ignored when n = 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxRegion {
    pub fn new2(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            lo: [x0, y0, 0.0],
            hi: [x1, y1, 0.0],
        }
    }

    /// Strict interior membership over the first `n` coordinates.
    pub fn contains(&self, p: &[f64], n: usize) -> bool {
        (0..n).all(|k| self.lo[k] < p[k] && p[k] < self.hi[k])
    }

    /// True when `self` is strictly inside `outer` (closure containment).
    pub fn strictly_inside(&self, outer: &BoxRegion, n: usize) -> bool {
        (0..n).all(|k| outer.lo[k] < self.lo[k] && self.hi[k] < outer.hi[k])
    }

    fn well_formed(&self, n: usize) -> bool {
        (0..n).all(|k| self.lo[k] < self.hi[k])
    }
}

/// Spatial box `(0,L1) x ... x (0,LN)` with control patches and horizon.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    /// Spatial dimension, 2 or 3. Solvers operate on n_dim = 2; n_dim = 3 is
    /// accepted by the data model only.
    pub n_dim: usize,
    /// Box side lengths; `lengths[2]` is ignored when n_dim = 2.
    pub lengths: [f64; 3],
    /// Control patch, open box strictly inside the domain.
    pub omega: BoxRegion,
    /// Inner patch, strictly inside omega; must contain the box center.
    pub omega0: BoxRegion,
    /// Final time.
    pub t_final: f64,
}

impl DomainSpec {
    /// Validates all geometric invariants; returns the description unchanged.
    pub fn new(
        n_dim: usize,
        lengths: [f64; 3],
        omega: BoxRegion,
        omega0: BoxRegion,
        t_final: f64,
    ) -> Result<Self> {
        if n_dim != 2 && n_dim != 3 {
            return Err(CoreError::InvalidParameter(format!(
                "n_dim must be 2 or 3, got {n_dim}"
            )));
        }
        if !(t_final > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "t_final must be positive, got {t_final}"
            )));
        }
        if !(0..n_dim).all(|k| lengths[k] > 0.0) {
            return Err(CoreError::InvalidParameter(
                "box side lengths must be positive".into(),
            ));
        }
        let full = BoxRegion {
            lo: [0.0; 3],
            hi: lengths,
        };
        if !omega.well_formed(n_dim) || !omega0.well_formed(n_dim) {
            return Err(CoreError::InvalidParameter(
                "omega/omega0 must have lo < hi per axis".into(),
            ));
        }
        if !omega.strictly_inside(&full, n_dim) {
            return Err(CoreError::InvalidParameter(
                "omega must be strictly inside the domain box".into(),
            ));
        }
        if !omega0.strictly_inside(&omega, n_dim) {
            return Err(CoreError::InvalidParameter(
                "omega0 must be strictly inside omega".into(),
            ));
        }
        Ok(Self {
            n_dim,
            lengths,
            omega,
            omega0,
            t_final,
        })
    }

    /// Unit square with a centered patch pair, the default experiment domain.
    pub fn unit_square(t_final: f64) -> Self {
        Self::new(
            2,
            [1.0, 1.0, 0.0],
            BoxRegion::new2(0.25, 0.75, 0.25, 0.75),
            BoxRegion::new2(0.4, 0.6, 0.4, 0.6),
            t_final,
        )
        .expect("default geometry is valid")
    }

    /// Geometric center of the box.
    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for k in 0..self.n_dim {
            c[k] = 0.5 * self.lengths[k];
        }
        c
    }
}
