//! Structured Cartesian grid shared by the prior generator and the forward model.
//!
//! Cells are indexed `i + nx * (j + ny * k)`; `k = 0` is the top layer and depth
//! increases with `k`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return invalid(format!("grid dims must be positive, got {nx}x{ny}x{nz}"));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// Grid geometry in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Depth of the top face of layer 0.
    pub top_depth: f64,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        GridDims::new(self.nx, self.ny, self.nz)?;
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dz > 0.0) {
            return invalid("cell sizes must be positive");
        }
        if !(self.top_depth >= 0.0) {
            return invalid("top depth must be non-negative");
        }
        Ok(())
    }

    pub fn dims(&self) -> GridDims {
        GridDims {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn cell_size(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn layer_depth(&self, k: usize) -> f64 {
        self.top_depth + (k as f64 + 0.5) * self.dz
    }

    /// Cell centre as `(x, y, depth)`.
    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.dims().ijk(idx);
        [
            (i as f64 + 0.5) * self.dx,
            (j as f64 + 0.5) * self.dy,
            self.layer_depth(k),
        ]
    }

    /// Flat indices of all layers in column `(i, j)`, top to bottom.
    pub fn column(&self, i: usize, j: usize) -> Vec<usize> {
        let d = self.dims();
        (0..self.nz).map(|k| d.index(i, j, k)).collect()
    }
}
