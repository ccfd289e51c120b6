//! Balls, annuli and uniform Cartesian grids.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LabError::OutOfRange {
                what: "ball radius",
                value: radius,
                range: "(0, inf)".into(),
            });
        }
        Ok(Self { center, radius })
    }

    /// Ball of the given radius centred at the origin.
    pub fn centered(radius: f64) -> Result<Self> {
        Self::new(Point::zeros(), radius)
    }

    pub fn contains(&self, x: &Point) -> bool {
        (x - self.center).norm() < self.radius
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub center: Point,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl AnnulusSpec {
    pub fn new(center: Point, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "annulus needs 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
            )));
        }
        Ok(Self {
            center,
            r_inner,
            r_outer,
        })
    }

    pub fn centered(r_inner: f64, r_outer: f64) -> Result<Self> {
        Self::new(Point::zeros(), r_inner, r_outer)
    }

    pub fn contains(&self, x: &Point) -> bool {
        let r = (x - self.center).norm();
        r > self.r_inner && r < self.r_outer
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * (self.r_outer.powi(3) - self.r_inner.powi(3))
    }
}

/// Uniform node-centred grid. Node `(i, j, k)` sits at `origin + h * (i, j, k)`
/// and linear indices run x-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub origin: Point,
    pub h: f64,
    pub dims: [usize; 3],
}

impl Grid3 {
    pub fn new(origin: Point, h: f64, dims: [usize; 3]) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(LabError::OutOfRange {
                what: "grid spacing",
                value: h,
                range: "(0, inf)".into(),
            });
        }
        if dims.iter().any(|&n| n < 3) {
            return Err(LabError::InvalidInput(format!(
                "grid needs at least 3 nodes per axis, got {dims:?}"
            )));
        }
        Ok(Self { origin, h, dims })
    }

    /// Cube `[lo, hi]^3` sampled with spacing `h`; `(hi - lo) / h` must be
    /// (close to) an integer.
    pub fn cube(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let cells = (hi - lo) / h;
        let n = cells.round();
        if (cells - n).abs() > 1e-9 * cells.max(1.0) {
            return Err(LabError::InvalidInput(format!(
                "spacing {h} does not divide the interval [{lo}, {hi}]"
            )));
        }
        Self::new(Point::new(lo, lo, lo), h, [n as usize + 1; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        self.origin + self.h * Point::new(i as f64, j as f64, k as f64)
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> Point {
        let [i, j, k] = self.coords(idx);
        self.point(i, j, k)
    }

    /// Index stride along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// True when the node lies on a face of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// True when the node is at least `layers` nodes away from every face.
    pub fn is_interior(&self, idx: usize, layers: usize) -> bool {
        let c = self.coords(idx);
        (0..3).all(|a| c[a] >= layers && c[a] + layers < self.dims[a])
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(3)
    }

    pub fn upper(&self) -> Point {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(BallSpec::centered(0.0).is_err());
        assert!(AnnulusSpec::centered(0.5, 0.5).is_err());
        assert!(Grid3::new(Point::zeros(), 0.1, [2, 3, 3]).is_err());
        assert!(Grid3::cube(0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid3::new(Point::zeros(), 0.5, [4, 5, 6]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.stride(1), 4);
        assert_eq!(g.stride(2), 20);
    }

    #[test]
    fn cube_dims() {
        let g = Grid3::cube(-1.0, 1.0, 1.0 / 16.0).unwrap();
        assert_eq!(g.dims, [33; 3]);
        assert!((g.upper() - Point::new(1.0, 1.0, 1.0)).norm() < 1e-14);
    }
}
