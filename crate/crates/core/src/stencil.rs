//! Flux-form finite-difference stencil for
//! `div(mu (grad u + grad u^T)) + grad(lambda div u)`.
//!
//! Unknowns are stored node-major: component `c` of node `n` lives at
//! `3 n + c`. Diagonal terms `d_j(mu d_j u_i)` and `d_i((mu + lambda) d_i u_i)`
//! use face-averaged moduli on a compact stencil; the mixed terms
//! `d_j(mu d_i u_j)` and `d_i(lambda d_j u_j)` use wide central differences
//! with nodal moduli. The resulting matrix is symmetric, and negative
//! definite on the interior unknowns when `lambda >= 0`.

use crate::fields::CoefficientPair;
use crate::geometry::Grid3;

#[derive(Clone, Debug)]
pub struct LameStencil {
    pub grid: Grid3,
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

impl LameStencil {
    pub fn new(coeffs: &CoefficientPair, grid: Grid3) -> Self {
        let (mu, lambda) = (0..grid.len())
            .map(|n| {
                let x = grid.point_of(n);
                (coeffs.mu_at(&x), coeffs.lambda_at(&x))
            })
            .unzip();
        Self { grid, mu, lambda }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Visit the nonzero entries `(column, coefficient)` of row `3 n + i`.
    /// `n` must be at least one node inside the box.
    #[inline]
    pub fn row(&self, n: usize, i: usize, mut emit: impl FnMut(usize, f64)) {
        let h2 = self.grid.h * self.grid.h;
        let (mu, la) = (&self.mu, &self.lambda);
        let si = self.grid.stride(i);
        let mut centre = 0.0;
        for j in 0..3 {
            let sj = self.grid.stride(j);
            let mut a = 0.5 * (mu[n] + mu[n + sj]);
            let mut b = 0.5 * (mu[n] + mu[n - sj]);
            if j == i {
                a += 0.5 * (mu[n] + la[n] + mu[n + sj] + la[n + sj]);
                b += 0.5 * (mu[n] + la[n] + mu[n - sj] + la[n - sj]);
            }
            emit(3 * (n + sj) + i, a / h2);
            emit(3 * (n - sj) + i, b / h2);
            centre -= (a + b) / h2;
        }
        emit(3 * n + i, centre);
        let q = 0.25 / h2;
        for j in (0..3).filter(|&j| j != i) {
            let sj = self.grid.stride(j);
            let (mp, mm) = (mu[n + sj] * q, mu[n - sj] * q);
            let (lp, lm) = (la[n + si] * q, la[n - si] * q);
            emit(3 * (n + sj + si) + j, mp + lp);
            emit(3 * (n + sj - si) + j, -mp - lm);
            emit(3 * (n - sj + si) + j, -mm - lp);
            emit(3 * (n - sj - si) + j, mm + lm);
        }
    }

    /// Row `3 n + i` applied to `u`.
    #[inline]
    pub fn apply_row(&self, u: &[f64], n: usize, i: usize) -> f64 {
        let mut acc = 0.0;
        self.row(n, i, |c, w| acc += w * u[c]);
        acc
    }

    /// Diagonal entry of row `3 n + i`.
    pub fn diagonal(&self, n: usize, i: usize) -> f64 {
        let mut d = 0.0;
        self.row(n, i, |c, w| {
            if c == 3 * n + i {
                d += w
            }
        });
        d
    }

    /// Indices of nodes at least one node inside the box.
    pub fn interior_nodes(&self) -> Vec<usize> {
        let [nx, ny, nz] = self.grid.dims;
        let mut out = Vec::with_capacity((nx - 2) * (ny - 2) * (nz - 2));
        for k in 1..nz - 1 {
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    out.push(self.grid.index(i, j, k));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PolynomialField, VectorField};
    use crate::lame::apply_lame_full;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stencil_is_symmetric() {
        let grid = Grid3::cube(0.0, 1.0, 0.2).unwrap();
        let st = LameStencil::new(&CoefficientPair::smooth_variable(), grid);
        let mut entries = std::collections::HashMap::new();
        let interior = st.interior_nodes();
        let inside: std::collections::HashSet<usize> = interior.iter().copied().collect();
        for &n in &interior {
            for i in 0..3 {
                st.row(n, i, |c, w| {
                    if inside.contains(&(c / 3)) {
                        *entries.entry((3 * n + i, c)).or_insert(0.0) += w;
                    }
                });
            }
        }
        for (&(r, c), &w) in &entries {
            let t = entries.get(&(c, r)).copied().unwrap_or(0.0);
            assert!((w - t).abs() < 1e-9 * w.abs().max(1.0), "({r},{c}): {w} vs {t}");
        }
    }

    #[test]
    fn quadratic_fields_are_reproduced_for_constant_moduli() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = PolynomialField::random(2, &mut rng);
        let coeffs = CoefficientPair::constant(1.3, 0.7).unwrap();
        let grid = Grid3::cube(-1.0, 1.0, 0.25).unwrap();
        let st = LameStencil::new(&coeffs, grid);
        let flat: Vec<f64> = (0..grid.len())
            .flat_map(|n| {
                let v = u.value(&grid.point_of(n));
                [v.x, v.y, v.z]
            })
            .collect();
        for n in st.interior_nodes() {
            let x = grid.point_of(n);
            let exact = apply_lame_full(&coeffs, &u, &x);
            for i in 0..3 {
                assert!((st.apply_row(&flat, n, i) - exact[i]).abs() < 1e-10);
            }
        }
    }
}
