//! Uniform dyadic meshes of an interval. A level-j mesh has base_cells * 2^j
//! equal cells; refining doubles the count, and every coarse edge reappears
//! bit-for-bit on the finer mesh, so nested-mesh error quadrature can find
//! the containing coarse cell by index shifts alone.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    base_cells: usize,
    level: u32,
    edges: Vec<f64>,
}

/// Refinement depth past which cell counts stop being useful and risk
/// overflowing downstream index arithmetic.
const MAX_CELLS: usize = 1 << 26;

impl Mesh1D {
    /// Level-0 uniform mesh of (a, b) with `base_cells` cells.
    pub fn uniform(a: f64, b: f64, base_cells: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a >= b {
            return Err(Error::InvalidArgument(format!(
                "domain ({a}, {b}) is not a finite interval with a < b"
            )));
        }
        if base_cells == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one cell".into()));
        }
        if base_cells > MAX_CELLS {
            return Err(Error::InvalidArgument(format!(
                "cell count {base_cells} exceeds supported maximum {MAX_CELLS}"
            )));
        }
        Ok(Self::build(a, b, base_cells, 0))
    }

    fn build(a: f64, b: f64, base_cells: usize, level: u32) -> Self {
        let n = base_cells << level;
        let width = b - a;
        let mut edges = Vec::with_capacity(n + 1);
        for i in 0..=n {
            // i/n is identical across levels for shared edges (both operands
            // scale by the same power of two), which keeps nesting exact
            edges.push(a + width * (i as f64 / n as f64));
        }
        edges[0] = a;
        edges[n] = b;
        Self {
            a,
            b,
            base_cells,
            level,
            edges,
        }
    }

    /// The next dyadic refinement: twice the cells, half the width.
    pub fn refined(&self) -> Result<Self> {
        self.refined_to(self.level + 1)
    }

    /// The mesh of the same family at an arbitrary level.
    pub fn refined_to(&self, level: u32) -> Result<Self> {
        let cells = (self.base_cells as u128) << level;
        if cells > MAX_CELLS as u128 {
            return Err(Error::InvalidArgument(format!(
                "level {level} would need {cells} cells, above the supported maximum"
            )));
        }
        Ok(Self::build(self.a, self.b, self.base_cells, level))
    }

    pub fn ncells(&self) -> usize {
        self.edges.len() - 1
    }

    /// Uniform cell width.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.ncells() as f64
    }

    pub fn span(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn base_cells(&self) -> usize {
        self.base_cells
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Map a reference coordinate xi in [-1,1] within cell i to x.
    pub fn cell_x(&self, i: usize, xi: f64) -> f64 {
        let (lo, hi) = self.cell(i);
        0.5 * (lo + hi) + 0.5 * (hi - lo) * xi
    }
}

/// Number of levels separating a coarse mesh from a finer mesh of the same
/// family, or None if the pair is not nested.
pub fn nesting_gap(coarse: &Mesh1D, fine: &Mesh1D) -> Option<u32> {
    if coarse.a == fine.a
        && coarse.b == fine.b
        && coarse.base_cells == fine.base_cells
        && fine.level >= coarse.level
    {
        Some(fine.level - coarse.level)
    } else {
        None
    }
}
