//! Fast inverse of the 7-point Dirichlet Laplacian on a box by sine
//! transforms, applied componentwise to node-major vector fields.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::geometry::Grid3;

pub struct BoxLaplacianInverse {
    grid: Grid3,
    n: [usize; 3],
    ffts: [Arc<dyn Fft<f64>>; 3],
    eig: [Vec<f64>; 3],
}

impl BoxLaplacianInverse {
    pub fn new(grid: Grid3) -> Self {
        let n = [grid.dims[0] - 2, grid.dims[1] - 2, grid.dims[2] - 2];
        let mut planner = FftPlanner::new();
        let ffts = n.map(|m| planner.plan_fft_forward(2 * (m + 1)));
        let h2 = grid.h * grid.h;
        let eig = n.map(|m| {
            (1..=m)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin();
                    4.0 * s * s / h2
                })
                .collect()
        });
        Self { grid, n, ffts, eig }
    }

    /// Unnormalised DST-I along `axis` of the interior block `buf`. Lines
    /// are transformed in pairs, one in the real and one in the imaginary part.
    fn dst(&self, buf: &mut [f64], axis: usize, work: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = n[axis];
        let len = 2 * (m + 1);
        let stride = match axis {
            0 => 1,
            1 => n[0],
            _ => n[0] * n[1],
        };
        let starts: Vec<usize> = (0..buf.len()).filter(|&p| (p / stride) % m == 0).collect();
        let pairs = starts.len().div_ceil(2);
        work.clear();
        work.resize(pairs * len, Complex::new(0.0, 0.0));
        for (l, pair) in starts.chunks(2).enumerate() {
            let w = &mut work[l * len..(l + 1) * len];
            for k in 0..m {
                let a = buf[pair[0] + k * stride];
                let b = pair.get(1).map_or(0.0, |&s| buf[s + k * stride]);
                w[k + 1] = Complex::new(a, b);
                w[len - 1 - k] = Complex::new(-a, -b);
            }
        }
        self.ffts[axis].process(work);
        for (l, pair) in starts.chunks(2).enumerate() {
            let w = &work[l * len..(l + 1) * len];
            for k in 0..m {
                buf[pair[0] + k * stride] = -0.5 * w[k + 1].im;
                if let Some(&s) = pair.get(1) {
                    buf[s + k * stride] = 0.5 * w[k + 1].re;
                }
            }
        }
    }

    /// Replace every component of `v` (length `3 * nodes`) by
    /// `(-Lap_h)^-1` of its interior values; face entries become zero.
    pub fn apply(&self, v: &mut [f64]) {
        let g = &self.grid;
        let n = self.n;
        let total = n[0] * n[1] * n[2];
        let scale = 8.0 / ((n[0] + 1) * (n[1] + 1) * (n[2] + 1)) as f64;
        let mut buf = vec![0.0; total];
        let mut work = Vec::new();
        for c in 0..3 {
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        buf[i + n[0] * (j + n[1] * k)] = v[3 * g.index(i + 1, j + 1, k + 1) + c];
                    }
                }
            }
            for axis in 0..3 {
                self.dst(&mut buf, axis, &mut work);
            }
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        buf[i + n[0] * (j + n[1] * k)] /= self.eig[0][i] + self.eig[1][j] + self.eig[2][k];
                    }
                }
            }
            for axis in 0..3 {
                self.dst(&mut buf, axis, &mut work);
            }
            v.iter_mut().skip(c).step_by(3).for_each(|slot| *slot = 0.0);
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        v[3 * g.index(i + 1, j + 1, k + 1) + c] = scale * buf[i + n[0] * (j + n[1] * k)];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_the_seven_point_laplacian() {
        let grid = crate::geometry::Grid3::new(crate::Point::zeros(), 0.1, [7, 6, 9]).unwrap();
        let len = 3 * grid.len();
        let mut u: Vec<f64> = (0..len).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        for n in 0..grid.len() {
            if grid.is_boundary(n) {
                u[3 * n..3 * n + 3].fill(0.0);
            }
        }
        let mut f = vec![0.0; len];
        let h2 = grid.h * grid.h;
        for n in 0..grid.len() {
            if grid.is_boundary(n) {
                continue;
            }
            for c in 0..3 {
                let mut acc = 6.0 * u[3 * n + c];
                for a in 0..3 {
                    let s = grid.stride(a);
                    acc -= u[3 * (n + s) + c] + u[3 * (n - s) + c];
                }
                f[3 * n + c] = acc / h2;
            }
        }
        let inv = BoxLaplacianInverse::new(grid);
        inv.apply(&mut f);
        let err = f.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
