//! Uniform grids anchored at the origin.
//!
//! Node `i` of a grid sits at `(first + i)·h`. Anchoring every grid at `0`
//! makes grids of spacing `h` and `h/k` share nodes, so fields computed at
//! different resolutions can be compared node by node.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub h: f64,
    pub first: i64,
    pub n: usize,
}

impl Grid {
    /// Nodes `-m..=m` with `m = ⌊radius/h⌋`.
    pub fn symmetric(radius: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("bad grid: radius {radius}, spacing {h}")));
        }
        let m = index_radius(radius, h);
        Ok(Grid::centered(m, h))
    }

    /// Nodes `-m..=m`.
    pub fn centered(m: usize, h: f64) -> Self {
        Grid {
            h,
            first: -(m as i64),
            n: 2 * m + 1,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.h
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn last(&self) -> i64 {
        self.first + self.n as i64 - 1
    }

    /// Local index of the node with global label `k`.
    pub fn local(&self, k: i64) -> Option<usize> {
        (k >= self.first && k <= self.last()).then(|| (k - self.first) as usize)
    }

    /// Nearest node to `x` and the snapping distance.
    pub fn nearest(&self, x: f64) -> Result<(usize, f64)> {
        let k = (x / self.h).round() as i64;
        let i = self.local(k).ok_or_else(|| {
            Error::Config(format!(
                "point {x} outside grid [{}, {}]",
                self.x(0),
                self.x(self.n - 1)
            ))
        })?;
        Ok((i, (x - self.x(i)).abs()))
    }

    /// Linear interpolation of node values; `x` must lie inside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        let s = x / self.h - self.first as f64;
        let top = (self.n - 1) as f64;
        if !(s >= -1e-9 && s <= top + 1e-9) {
            return Err(Error::Range(format!("{x} outside grid")));
        }
        let s = s.clamp(0.0, top);
        let i = (s.floor() as usize).min(self.n.saturating_sub(2));
        let w = s - i as f64;
        if w == 0.0 || self.n == 1 {
            return Ok(values[i]);
        }
        Ok(values[i] * (1.0 - w) + values[i + 1] * w)
    }

    pub fn same_nodes(&self, other: &Grid) -> bool {
        self.first == other.first && self.n == other.n && (self.h - other.h).abs() <= 1e-12 * self.h
    }
}

/// `⌊radius/h⌋`, robust to `radius` being an exact multiple of `h` up to rounding.
pub fn index_radius(radius: f64, h: f64) -> usize {
    (radius / h + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_contains_origin_and_ends() {
        let g = Grid::symmetric(1.0, 0.25).unwrap();
        assert_eq!(g.n, 9);
        assert_eq!(g.x(0), -1.0);
        assert_eq!(g.x(4), 0.0);
        assert_eq!(g.x(8), 1.0);
        assert_eq!(g.nearest(0.3).unwrap().0, 5);
        assert!(g.nearest(1.3).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_lines() {
        let g = Grid::symmetric(2.0, 0.1).unwrap();
        let v: Vec<f64> = g.xs().iter().map(|x| 3.0 * x - 1.0).collect();
        for x in [-2.0, -1.234, 0.0, 0.05, 1.999, 2.0] {
            assert!((g.interpolate(&v, x).unwrap() - (3.0 * x - 1.0)).abs() < 1e-12);
        }
        assert!(g.interpolate(&v, 2.5).is_err());
    }
}
