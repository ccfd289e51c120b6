//! Finite-difference Dirichlet solver on a box and the interior-estimate
//! ratio.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{CoefficientPair, DisplacementField, VectorField};
use crate::geometry::{BallSpec, Grid3};
use crate::grid::{sobolev_norms_grid, GridField};
use crate::quadrature::{integrate_ball, ProductBallRule};
use crate::stencil::LameStencil;
use crate::Point;

/// Metadata written next to a [`GridSolution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub method: String,
    pub coefficients: String,
    pub tol: f64,
    pub iterations: usize,
    /// Relative residual of the linear solve.
    pub residual: f64,
    /// Euclidean norm of the right-hand side the residual is relative to.
    pub rhs_norm: f64,
    /// Largest absolute stencil residual over the equation nodes; bounded by
    /// `residual * rhs_norm`.
    pub max_residual: f64,
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GridSolution {
    pub field: GridField,
    /// Nodes whose values were prescribed rather than solved for.
    pub boundary: Vec<bool>,
    pub meta: SolverMeta,
}

impl GridSolution {
    pub fn grid(&self) -> &Grid3 {
        &self.field.grid
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.field.values
    }

    /// Header: dims (3 x u64), spacing, origin (3 x f64), all little-endian;
    /// then 3 f64 per node in x-fastest order.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let g = self.grid();
        for d in g.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&g.h.to_le_bytes())?;
        for a in 0..3 {
            w.write_all(&g.origin[a].to_le_bytes())?;
        }
        for v in self.values() {
            for a in 0..3 {
                w.write_all(&v[a].to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`GridSolution::write_binary`].
    pub fn read_binary(mut r: impl Read) -> Result<GridField> {
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u64::from_le_bytes(next(&mut r)?) as usize;
        }
        let h = f64::from_le_bytes(next(&mut r)?);
        let mut origin = Point::zeros();
        for a in 0..3 {
            origin[a] = f64::from_le_bytes(next(&mut r)?);
        }
        let grid = Grid3::new(origin, h, dims)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let mut v = Vector3::zeros();
            for a in 0..3 {
                v[a] = f64::from_le_bytes(next(&mut r)?);
            }
            values.push(v);
        }
        GridField::new(grid, values)
    }

    /// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let mut w = BufWriter::new(File::create(&bin)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(&json)?), &self.meta)?;
        Ok((bin, json))
    }

    pub fn load(stem: &Path) -> Result<(GridField, SolverMeta)> {
        let field = Self::read_binary(BufReader::new(File::open(stem.with_extension("bin"))?))?;
        let meta = serde_json::from_reader(BufReader::new(File::open(stem.with_extension("json"))?))?;
        Ok((field, meta))
    }
}

impl VectorField for GridSolution {
    fn value(&self, x: &Point) -> Vector3<f64> {
        self.field.value(x)
    }
}

pub(crate) fn to_flat(values: &[Vector3<f64>]) -> Vec<f64> {
    values.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

pub(crate) fn from_flat(flat: &[f64]) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Diagonally preconditioned conjugate gradients for `M x = b` with `M`
/// symmetric positive definite. Entries where `diag_inv` is zero are frozen.
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag_inv: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    cap: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    apply(x, &mut q);
    for k in 0..n {
        r[k] = b[k] - q[k];
    }
    let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![dot(&r, &r).sqrt() / b_norm];
    for it in 1..=cap {
        if *history.last().unwrap() <= tol {
            return Ok(CgOutcome {
                iterations: it - 1,
                residual: *history.last().unwrap(),
                history,
            });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(LabError::Precondition(format!(
                "discrete operator is not positive definite (p.Mp = {pq:.3e})"
            )));
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            z[k] = r[k] * diag_inv[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        history.push(dot(&r, &r).sqrt() / b_norm);
    }
    let residual = *history.last().unwrap();
    if residual <= tol {
        return Ok(CgOutcome {
            iterations: cap,
            residual,
            history,
        });
    }
    Err(LabError::NotConverged {
        iterations: cap,
        residual,
        history,
    })
}

/// Solve `L~_h u = f` in the box with `u = g` on its faces.
pub fn solve_dirichlet<F: VectorField + ?Sized, G: VectorField + ?Sized>(
    coeffs: &CoefficientPair,
    f: &F,
    g: &G,
    grid: Grid3,
    tol: f64,
) -> Result<GridSolution> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(LabError::OutOfRange {
            what: "solver tolerance",
            value: tol,
            range: "(0, inf)".into(),
        });
    }
    let st = LameStencil::new(coeffs, grid);
    for n in 0..grid.len() {
        let (mu, la) = (st.mu()[n], st.lambda()[n]);
        if !(mu > 0.0) {
            return Err(LabError::Ellipticity(format!("mu = {mu} at node {n}")));
        }
        if la < 0.0 {
            return Err(LabError::Precondition(format!(
                "lambda = {la} < 0 at node {n}; the solver requires lambda >= 0"
            )));
        }
    }
    let len = 3 * grid.len();
    let interior = st.interior_nodes();
    let boundary: Vec<bool> = (0..grid.len()).map(|n| grid.is_boundary(n)).collect();

    let mut lifted = vec![0.0; len];
    let mut forcing = vec![0.0; len];
    for n in 0..grid.len() {
        let x = grid.point_of(n);
        let v = if boundary[n] { g.value(&x) } else { f.value(&x) };
        let target = if boundary[n] { &mut lifted } else { &mut forcing };
        target[3 * n..3 * n + 3].copy_from_slice(v.as_slice());
    }
    for (k, v) in lifted.iter().chain(&forcing).enumerate() {
        if !v.is_finite() {
            let idx = (k % len) / 3;
            return Err(LabError::NonFinite {
                index: idx,
                point: grid.point_of(idx),
            });
        }
    }

    // M = -A on interior unknowns, b = A g - f.
    let mut b = vec![0.0; len];
    let mut diag_inv = vec![0.0; len];
    for &n in &interior {
        for i in 0..3 {
            b[3 * n + i] = st.apply_row(&lifted, n, i) - forcing[3 * n + i];
            diag_inv[3 * n + i] = -1.0 / st.diagonal(n, i);
        }
    }
    let apply = |p: &[f64], out: &mut [f64]| {
        for &n in &interior {
            for i in 0..3 {
                out[3 * n + i] = -st.apply_row(p, n, i);
            }
        }
    };
    let cap = (20.0 * ((3 * interior.len()) as f64).sqrt()).ceil() as usize;
    let mut x = vec![0.0; len];
    let out = pcg(apply, &diag_inv, &b, &mut x, tol, cap)?;

    for (xv, lv) in x.iter_mut().zip(&lifted) {
        *xv += lv;
    }
    let max_residual = interior
        .iter()
        .flat_map(|&n| (0..3).map(move |i| (n, i)))
        .map(|(n, i)| (st.apply_row(&x, n, i) - forcing[3 * n + i]).abs())
        .fold(0.0, f64::max);
    Ok(GridSolution {
        field: GridField::new(grid, from_flat(&x))?,
        boundary,
        meta: SolverMeta {
            method: "dirichlet-pcg".into(),
            coefficients: coeffs.label().to_string(),
            tol,
            iterations: out.iterations,
            residual: out.residual,
            rhs_norm: dot(&b, &b).sqrt(),
            max_residual,
            history: out.history,
        },
    })
}

/// `||u||_{H^2(B_r)} / ||u||_{L^2(B_R)}` for an analytic field, both balls
/// centred at `center`.
pub fn interior_ratio<F: DisplacementField + ?Sized>(
    u: &F,
    center: Point,
    r: f64,
    big_r: f64,
    rule: &ProductBallRule,
) -> Result<f64> {
    check_radii(r, big_r)?;
    let inner = BallSpec::new(center, r)?;
    let outer = BallSpec::new(center, big_r)?;
    let num = integrate_ball(
        |x| {
            let j = u.jet(x);
            j.value.norm_squared() + j.gradient_norm_sq() + j.hessian_norm_sq()
        },
        &inner,
        rule,
    )?;
    let den = integrate_ball(|x| u.value(x).norm_squared(), &outer, rule)?;
    ratio(num, den)
}

/// Grid version of [`interior_ratio`] using masked Cartesian sums.
pub fn interior_ratio_grid(u: &GridField, center: Point, r: f64, big_r: f64) -> Result<f64> {
    check_radii(r, big_r)?;
    let num = sobolev_norms_grid(u, |x| (x - center).norm() < r)?.h2();
    let den = u.masked_l2(|x| (x - center).norm() < big_r);
    ratio(num * num, den * den)
}

fn check_radii(r: f64, big_r: f64) -> Result<()> {
    if !(r > 0.0 && r < big_r) {
        return Err(LabError::InvalidInput(format!("need 0 < r < R, got r = {r}, R = {big_r}")));
    }
    Ok(())
}

fn ratio(num_sq: f64, den_sq: f64) -> Result<f64> {
    if !(den_sq > 0.0) {
        return Err(LabError::Degenerate("field vanishes on the outer ball".into()));
    }
    Ok((num_sq / den_sq).sqrt())
}
