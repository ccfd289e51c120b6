//! Grid-backed vector fields: central-difference derivatives, trilinear
//! interpolation and masked Cartesian norms.
//!
//! The masked rule counts a node (the centre of its cell) iff the mask holds
//! there and weights it by `h^3`. For a ball this carries an O(h) boundary
//! error.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::VectorField;
use crate::geometry::Grid3;
use crate::quadrature::CompensatedSum;
use crate::Point;

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid3,
    pub values: Vec<Vector3<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevNorms {
    pub l2: f64,
    pub h1_seminorm: f64,
    pub h2_seminorm: f64,
}

impl SobolevNorms {
    /// Full `H^2` norm.
    pub fn h2(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_seminorm * self.h1_seminorm + self.h2_seminorm * self.h2_seminorm).sqrt()
    }

    pub fn h1(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_seminorm * self.h1_seminorm).sqrt()
    }
}

impl GridField {
    pub fn new(grid: Grid3, values: Vec<Vector3<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidInput(format!(
                "grid has {} nodes but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self {
            values: vec![Vector3::zeros(); grid.len()],
            grid,
        }
    }

    /// Sample a field at every node.
    pub fn sample<F: VectorField + ?Sized>(grid: Grid3, f: &F) -> Self {
        let values = (0..grid.len()).map(|n| f.value(&grid.point_of(n))).collect();
        Self { grid, values }
    }

    /// Central-difference gradient matrix at an interior node.
    pub fn gradient_at(&self, n: usize) -> Matrix3<f64> {
        let h2 = 2.0 * self.grid.h;
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            let s = self.grid.stride(j);
            let d = (self.values[n + s] - self.values[n - s]) / h2;
            m.set_column(j, &d);
        }
        m
    }

    /// Central-difference second derivatives at an interior node.
    pub fn hessians_at(&self, n: usize) -> [Matrix3<f64>; 3] {
        let h = self.grid.h;
        let u = &self.values;
        let mut out = [Matrix3::zeros(); 3];
        for j in 0..3 {
            let sj = self.grid.stride(j);
            let d2 = (u[n + sj] - u[n] * 2.0 + u[n - sj]) / (h * h);
            for (i, hess) in out.iter_mut().enumerate() {
                hess[(j, j)] = d2[i];
            }
            for k in j + 1..3 {
                let sk = self.grid.stride(k);
                let m = (u[n + sj + sk] - u[n + sj - sk] - u[n - sj + sk] + u[n - sj - sk]) / (4.0 * h * h);
                for (i, hess) in out.iter_mut().enumerate() {
                    hess[(j, k)] = m[i];
                    hess[(k, j)] = m[i];
                }
            }
        }
        out
    }

    /// Cell containing `x` and the local coordinates in it, or `None` when
    /// `x` is outside the grid box.
    fn locate(&self, x: &Point) -> Option<([usize; 3], [f64; 3])> {
        let g = &self.grid;
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] - g.origin[a]) / g.h;
            if !(s >= 0.0 && s <= (g.dims[a] - 1) as f64) {
                return None;
            }
            let c = (s.floor() as usize).min(g.dims[a] - 2);
            cell[a] = c;
            t[a] = s - c as f64;
        }
        Some((cell, t))
    }

    /// Trilinear interpolation weights: eight `(node, weight)` pairs.
    pub fn trilinear_weights(&self, x: &Point) -> Option<[(usize, f64); 8]> {
        let (c, t) = self.locate(x)?;
        let g = &self.grid;
        let mut out = [(0usize, 0.0); 8];
        for (m, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (m & 1, (m >> 1) & 1, (m >> 2) & 1);
            let w = (if di == 1 { t[0] } else { 1.0 - t[0] })
                * (if dj == 1 { t[1] } else { 1.0 - t[1] })
                * (if dk == 1 { t[2] } else { 1.0 - t[2] });
            *slot = (g.index(c[0] + di, c[1] + dj, c[2] + dk), w);
        }
        Some(out)
    }

    pub fn interpolate(&self, x: &Point) -> Option<Vector3<f64>> {
        let w = self.trilinear_weights(x)?;
        Some(w.iter().map(|&(n, w)| self.values[n] * w).sum())
    }

    /// Trilinear interpolation of the nodal central-difference gradients.
    /// Every involved node must be interior.
    pub fn interpolate_gradient(&self, x: &Point) -> Option<Matrix3<f64>> {
        let w = self.trilinear_weights(x)?;
        if w.iter().any(|&(n, _)| !self.grid.is_interior(n, 1)) {
            return None;
        }
        Some(w.iter().map(|&(n, w)| self.gradient_at(n) * w).sum())
    }

    /// Trilinear transfer onto another grid; zero where `grid` leaves this box.
    pub fn resample(&self, grid: Grid3) -> GridField {
        let values = (0..grid.len())
            .map(|n| self.interpolate(&grid.point_of(n)).unwrap_or_else(Vector3::zeros))
            .collect();
        GridField { grid, values }
    }

    /// `sqrt(h^3 sum |u|^2)` over masked nodes.
    pub fn masked_l2(&self, mask: impl Fn(&Point) -> bool) -> f64 {
        let vol = self.grid.cell_volume();
        let s: CompensatedSum = (0..self.grid.len())
            .filter(|&n| mask(&self.grid.point_of(n)))
            .map(|n| vol * self.values[n].norm_squared())
            .collect();
        s.value().sqrt()
    }
}

impl VectorField for GridField {
    /// Trilinear interpolation; NaN outside the grid box.
    fn value(&self, x: &Point) -> Vector3<f64> {
        self.interpolate(x).unwrap_or_else(|| Vector3::repeat(f64::NAN))
    }
}

/// `L^2` norm with `H^1` and `H^2` seminorms over the masked nodes, using
/// second-order central differences. Masked nodes must lie at least one node
/// inside the grid box.
pub fn sobolev_norms_grid(field: &GridField, mask: impl Fn(&Point) -> bool) -> Result<SobolevNorms> {
    let g = &field.grid;
    let vol = g.cell_volume();
    let (mut l2, mut h1, mut h2) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for n in 0..g.len() {
        let x = g.point_of(n);
        if !mask(&x) {
            continue;
        }
        if !g.is_interior(n, 1) {
            return Err(LabError::Precondition(format!(
                "masked node ({:.4}, {:.4}, {:.4}) touches the grid boundary",
                x.x, x.y, x.z
            )));
        }
        l2.add(vol * field.values[n].norm_squared());
        h1.add(vol * field.gradient_at(n).norm_squared());
        h2.add(vol * field.hessians_at(n).iter().map(|m| m.norm_squared()).sum::<f64>());
    }
    Ok(SobolevNorms {
        l2: l2.value().sqrt(),
        h1_seminorm: h1.value().sqrt(),
        h2_seminorm: h2.value().sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantField, LinearField};
    use crate::solutions::{harmonic_gradient_field, HarmonicGradient};
    use std::f64::consts::PI;

    #[test]
    fn constant_field_norms() {
        let grid = Grid3::cube(-1.0, 1.0, 0.125).unwrap();
        let c = Vector3::new(1.0, -2.0, 0.5);
        let f = GridField::sample(grid, &ConstantField(c));
        let mask = |x: &Point| x.x.abs() < 0.5 && x.y.abs() < 0.5 && x.z.abs() < 0.5;
        let n = sobolev_norms_grid(&f, mask).unwrap();
        let count = (0..grid.len()).filter(|&k| mask(&grid.point_of(k))).count() as f64;
        assert!((n.l2 - (count * grid.cell_volume()).sqrt() * c.norm()).abs() < 1e-12);
        assert_eq!((n.h1_seminorm, n.h2_seminorm), (0.0, 0.0));
    }

    #[test]
    fn linear_field_has_no_second_derivatives() {
        let grid = Grid3::cube(-1.0, 1.0, 0.25).unwrap();
        let f = GridField::sample(
            grid,
            &LinearField {
                matrix: Matrix3::new(1.0, 2.0, 0.0, 0.0, -1.0, 3.0, 0.5, 0.0, 1.0),
                offset: Vector3::zeros(),
            },
        );
        let n = sobolev_norms_grid(&f, |x| x.norm() < 0.7).unwrap();
        assert!(n.h2_seminorm < 1e-12);
        assert!(n.h1_seminorm > 0.0);
    }

    #[test]
    fn mask_touching_boundary_is_rejected() {
        let grid = Grid3::cube(-1.0, 1.0, 0.25).unwrap();
        let f = GridField::zeros(grid);
        assert!(matches!(sobolev_norms_grid(&f, |x| x.norm() <= 1.0), Err(LabError::Precondition(_))));
    }

    #[test]
    fn masked_ball_l2_of_x1x2x3_gradient() {
        let grid = Grid3::cube(-1.125, 1.125, 1.0 / 64.0).unwrap();
        let u = harmonic_gradient_field(&HarmonicGradient::x1x2x3());
        let f = GridField::sample(grid, &u);
        let n = sobolev_norms_grid(&f, |x| x.norm() < 1.0).unwrap();
        let exact = (4.0 * PI / 35.0).sqrt();
        assert!((n.l2 / exact - 1.0).abs() < 0.02, "{} vs {exact}", n.l2);
    }

    #[test]
    fn interpolation_reproduces_linear_data() {
        let grid = Grid3::cube(0.0, 1.0, 0.25).unwrap();
        let lin = LinearField {
            matrix: Matrix3::new(1.0, 2.0, 3.0, 0.0, -1.0, 0.5, 2.0, 0.0, 1.0),
            offset: Vector3::new(0.1, 0.0, -0.3),
        };
        let f = GridField::sample(grid, &lin);
        let x = Point::new(0.31, 0.62, 0.47);
        assert!((f.interpolate(&x).unwrap() - lin.value(&x)).amax() < 1e-14);
        assert!((f.interpolate_gradient(&x).unwrap() - lin.matrix).amax() < 1e-12);
        assert!(f.interpolate(&Point::new(1.2, 0.0, 0.0)).is_none());
        let w = f.trilinear_weights(&x).unwrap();
        assert!((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
