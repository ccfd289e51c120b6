//! Cauchy data on the inner sphere `|x| = theta`, least-squares continuation
//! into the annulus `theta < |x| < R`, and the noise-to-error experiment.
//!
//! The continuation minimises
//! `h^3 |L_h u|^2 + beta sum_a |d^a u - f_a|^2_gamma + beta_out |u|^2_{|x|=R}`
//! over grid fields vanishing on the box faces, by CGLS right-preconditioned
//! with the inverse box Laplacian. Equation rows reach `PDE_COLLAR` spacings
//! past both spheres.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanWeights;
use crate::error::{LabError, Result};
use crate::fields::{CoefficientPair, DisplacementField};
use crate::geometry::Grid3;
use crate::grid::{sobolev_norms_grid, GridField};
use crate::quadrature::SphereRule;
use crate::solutions::{dot, from_flat, to_flat, GridSolution, SolverMeta};
use crate::spectral::BoxLaplacianInverse;
use crate::stencil::LameStencil;
use crate::Point;

/// Outer penalty weight relative to the data weight.
pub const OUTER_WEIGHT_RATIO: f64 = 1e-2;

/// Equation rows extend this many spacings past both spheres, so that every
/// node read by a trace is held by the equation.
pub const PDE_COLLAR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyData {
    pub theta: f64,
    pub nodes: Vec<Point>,
    /// Surface quadrature weights on `|x| = theta`.
    pub weights: Vec<f64>,
    pub f0: Vec<Vector3<f64>>,
    /// Gradient traces, `f1[q][(i, j)] = d_j u_i`.
    pub f1: Vec<Matrix3<f64>>,
    pub noise_level: f64,
    pub seed: u64,
    /// Size of the injected perturbation, [`CauchyData::trace_norm`] style.
    pub zeta0: f64,
}

impl CauchyData {
    /// `sum over a in {0, e1, e2, e3}` of the surface-weighted `L^2` norms.
    pub fn trace_norm(&self) -> f64 {
        trace_norm(&self.weights, &self.f0, &self.f1)
    }

    /// Sum of two data sets on the same nodes (noise bookkeeping dropped).
    pub fn add(&self, other: &CauchyData) -> Result<CauchyData> {
        if self.nodes != other.nodes || self.theta != other.theta {
            return Err(LabError::InvalidInput("Cauchy data live on different node sets".into()));
        }
        let mut out = self.clone();
        for q in 0..out.nodes.len() {
            out.f0[q] += other.f0[q];
            out.f1[q] += other.f1[q];
        }
        out.noise_level = 0.0;
        out.zeta0 = 0.0;
        Ok(out)
    }
}

fn trace_norm(weights: &[f64], f0: &[Vector3<f64>], f1: &[Matrix3<f64>]) -> f64 {
    let mut parts = [0.0; 4];
    for q in 0..weights.len() {
        parts[0] += weights[q] * f0[q].norm_squared();
        for j in 0..3 {
            parts[j + 1] += weights[q] * f1[q].column(j).norm_squared();
        }
    }
    parts.iter().map(|p| p.sqrt()).sum()
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Exact traces of `u` on `|x| = theta`, perturbed per trace by independent
/// uniform noise whose root-mean-square is `zeta_rel` times that of the trace.
pub fn make_cauchy_data<F: DisplacementField + ?Sized>(
    u: &F,
    theta: f64,
    rule: &SphereRule,
    zeta_rel: f64,
    seed: u64,
) -> Result<CauchyData> {
    if !(theta > 0.0) || !(zeta_rel >= 0.0 && zeta_rel.is_finite()) {
        return Err(LabError::InvalidInput(format!(
            "need theta > 0 and zeta_rel >= 0, got ({theta}, {zeta_rel})"
        )));
    }
    let (nodes, weights): (Vec<Point>, Vec<f64>) = rule.on_sphere(&Point::zeros(), theta).into_iter().unzip();
    let mut f0 = Vec::with_capacity(nodes.len());
    let mut f1 = Vec::with_capacity(nodes.len());
    for (index, x) in nodes.iter().enumerate() {
        let j = u.jet(x);
        if !(j.value.iter().all(|v| v.is_finite()) && j.jacobian.iter().all(|v| v.is_finite())) {
            return Err(LabError::NonFinite { index, point: *x });
        }
        f0.push(j.value);
        f1.push(j.jacobian);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 3f64.sqrt();
    let mut d0 = vec![Vector3::zeros(); nodes.len()];
    let mut d1 = vec![Matrix3::zeros(); nodes.len()];
    let scale0 = zeta_rel * rms(f0.iter().flat_map(|v| v.iter().copied()));
    for d in &mut d0 {
        *d = Vector3::from_fn(|_, _| scale0 * rng.random_range(-amp..amp));
    }
    for j in 0..3 {
        let scale = zeta_rel * rms(f1.iter().flat_map(|m| (0..3).map(move |i| m[(i, j)])));
        for d in &mut d1 {
            for i in 0..3 {
                d[(i, j)] = scale * rng.random_range(-amp..amp);
            }
        }
    }
    let zeta0 = trace_norm(&weights, &d0, &d1);
    for q in 0..nodes.len() {
        f0[q] += d0[q];
        f1[q] += d1[q];
    }
    Ok(CauchyData {
        theta,
        nodes,
        weights,
        f0,
        f1,
        noise_level: zeta_rel,
        seed,
        zeta0,
    })
}

struct SampleRow {
    sqrt_w: f64,
    interp: [(usize, f64); 8],
}

/// Fitted quantities of one continuation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuationFit {
    pub beta: f64,
    /// Data misfit on `gamma`, measured like [`CauchyData::trace_norm`].
    pub misfit: f64,
    /// `sqrt(h^3 sum |L_h u|^2)` over the equation nodes.
    pub pde_residual: f64,
    /// `sqrt(sum w |u|^2)` on the outer sphere.
    pub outer_trace: f64,
    /// Objective after every iteration.
    pub objective: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Continuation {
    pub solution: GridSolution,
    pub fit: ContinuationFit,
}

/// Least-squares system for one data set; `beta` enters only at solve time.
pub struct CauchySolver<'a> {
    data: &'a CauchyData,
    st: LameStencil,
    pde_nodes: Vec<usize>,
    gamma: Vec<SampleRow>,
    outer: Vec<SampleRow>,
    frozen: Vec<bool>,
    sqrt_vol: f64,
    inv_2h: f64,
    label: String,
}

impl<'a> CauchySolver<'a> {
    pub fn new(
        coeffs: &CoefficientPair,
        data: &'a CauchyData,
        r_out: f64,
        grid: Grid3,
        outer_rule: &SphereRule,
    ) -> Result<Self> {
        if !(data.theta < r_out) {
            return Err(LabError::InvalidInput(format!(
                "need theta < R, got theta = {}, R = {r_out}",
                data.theta
            )));
        }
        let st = LameStencil::new(coeffs, grid);
        if let Some(n) = (0..grid.len()).find(|&n| st.lambda()[n] < 0.0 || !(st.mu()[n] > 0.0)) {
            return Err(LabError::Precondition(format!(
                "moduli (mu, lambda) = ({}, {}) at node {n}; the continuation requires mu > 0, lambda >= 0",
                st.mu()[n],
                st.lambda()[n]
            )));
        }
        let field = GridField::zeros(grid);
        let pde_nodes: Vec<usize> = st
            .interior_nodes()
            .into_iter()
            .filter(|&n| {
                let r = grid.point_of(n).norm();
                data.theta - PDE_COLLAR * grid.h < r && r < r_out + PDE_COLLAR * grid.h
            })
            .collect();
        if pde_nodes.iter().any(|&n| !grid.is_interior(n, 2)) {
            return Err(LabError::InvalidInput("the annulus must lie two nodes inside the grid".into()));
        }
        let mut gamma = Vec::with_capacity(data.nodes.len());
        for (x, &w) in data.nodes.iter().zip(&data.weights) {
            let interp = field
                .trilinear_weights(x)
                .filter(|ws| ws.iter().all(|&(m, _)| grid.is_interior(m, 2)))
                .ok_or_else(|| LabError::InvalidInput("inner sphere must lie two nodes inside the grid".into()))?;
            gamma.push(SampleRow { sqrt_w: w.sqrt(), interp });
        }
        let mut outer = Vec::new();
        for (x, w) in outer_rule.on_sphere(&Point::zeros(), r_out) {
            if field.trilinear_weights(&x).is_none() {
                return Err(LabError::InvalidInput("outer sphere leaves the grid box".into()));
            }
            outer.push(SampleRow {
                sqrt_w: w.sqrt(),
                interp: field.trilinear_weights(&x).expect("checked"),
            });
        }
        Ok(Self {
            data,
            pde_nodes,
            gamma,
            outer,
            frozen: (0..grid.len()).map(|n| grid.is_boundary(n)).collect(),
            sqrt_vol: grid.cell_volume().sqrt(),
            inv_2h: 0.5 / grid.h,
            label: coeffs.label().to_string(),
            st,
        })
    }

    fn grid(&self) -> Grid3 {
        self.st.grid
    }

    fn rows(&self) -> usize {
        3 * self.pde_nodes.len() + 12 * self.gamma.len() + 3 * self.outer.len()
    }

    /// Visit every nonzero `(row, column, value)`; `sb`, `so` scale the data
    /// and outer blocks.
    #[inline]
    fn visit(&self, sb: f64, so: f64, mut f: impl FnMut(usize, usize, f64)) {
        let mut row = 0;
        let sv = self.sqrt_vol;
        for &n in &self.pde_nodes {
            for i in 0..3 {
                self.st.row(n, i, |c, w| f(row, c, sv * w));
                row += 1;
            }
        }
        for g in &self.gamma {
            let s = sb * g.sqrt_w;
            for i in 0..3 {
                for &(m, w) in &g.interp {
                    f(row, 3 * m + i, s * w);
                }
                row += 1;
            }
            for j in 0..3 {
                let sj = self.grid().stride(j);
                let k = s * self.inv_2h;
                for i in 0..3 {
                    for &(m, w) in &g.interp {
                        f(row, 3 * (m + sj) + i, k * w);
                        f(row, 3 * (m - sj) + i, -k * w);
                    }
                    row += 1;
                }
            }
        }
        for o in &self.outer {
            let s = so * o.sqrt_w;
            for i in 0..3 {
                for &(m, w) in &o.interp {
                    f(row, 3 * m + i, s * w);
                }
                row += 1;
            }
        }
    }

    fn apply(&self, sb: f64, so: f64, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.visit(sb, so, |r, c, w| y[r] += w * x[c]);
    }

    fn adjoint(&self, sb: f64, so: f64, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        self.visit(sb, so, |r, c, w| x[c] += w * y[r]);
        for (n, &fz) in self.frozen.iter().enumerate() {
            if fz {
                x[3 * n..3 * n + 3].fill(0.0);
            }
        }
    }

    fn rhs(&self, sb: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.rows()];
        let mut row = 3 * self.pde_nodes.len();
        for (q, g) in self.gamma.iter().enumerate() {
            let s = sb * g.sqrt_w;
            for i in 0..3 {
                b[row] = s * self.data.f0[q][i];
                row += 1;
            }
            for j in 0..3 {
                for i in 0..3 {
                    b[row] = s * self.data.f1[q][(i, j)];
                    row += 1;
                }
            }
        }
        b
    }

    /// Minimise the objective for weight `beta`, starting from `warm` when
    /// given. Stops when the preconditioned normal-equation residual
    /// `|P K^T r|` drops below `tol` times `|P K^T b|`.
    pub fn solve(&self, beta: f64, tol: f64, warm: Option<&[Vector3<f64>]>, max_iter: Option<usize>) -> Result<Continuation> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(LabError::OutOfRange {
                what: "beta",
                value: beta,
                range: "(0, inf)".into(),
            });
        }
        if !(tol > 0.0) {
            return Err(LabError::OutOfRange {
                what: "tolerance",
                value: tol,
                range: "(0, inf)".into(),
            });
        }
        let sb = beta.sqrt();
        let so = (beta * OUTER_WEIGHT_RATIO).sqrt();
        let ncol = 3 * self.grid().len();
        let nrow = self.rows();

        let cap = max_iter.unwrap_or_else(|| (40.0 * (ncol as f64).cbrt()).ceil() as usize);

        let b = self.rhs(sb);
        let mut x = match warm {
            Some(w) if w.len() == self.grid().len() => to_flat(w),
            Some(_) => return Err(LabError::InvalidInput("warm start has the wrong length".into())),
            None => vec![0.0; ncol],
        };
        for (n, &fz) in self.frozen.iter().enumerate() {
            if fz {
                x[3 * n..3 * n + 3].fill(0.0);
            }
        }
        let precond = BoxLaplacianInverse::new(self.grid());
        let mut s = vec![0.0; ncol];
        self.adjoint(sb, so, &b, &mut s);
        precond.apply(&mut s);
        let ref_norm = dot(&s, &s).sqrt();

        let mut r = vec![0.0; nrow];
        self.apply(sb, so, &x, &mut r);
        for (rv, bv) in r.iter_mut().zip(&b) {
            *rv = bv - *rv;
        }
        self.adjoint(sb, so, &r, &mut s);
        precond.apply(&mut s);
        let mut p = s.clone();
        let mut gamma = dot(&s, &s);
        let mut q = vec![0.0; nrow];
        let mut dp = vec![0.0; ncol];
        let mut history = vec![if ref_norm > 0.0 { gamma.sqrt() / ref_norm } else { 0.0 }];
        let mut objective = vec![dot(&r, &r)];
        let mut iterations = 0;
        while *history.last().unwrap() > tol {
            if iterations == cap {
                return Err(LabError::NotConverged {
                    iterations,
                    residual: *history.last().unwrap(),
                    history,
                });
            }
            dp.copy_from_slice(&p);
            precond.apply(&mut dp);
            self.apply(sb, so, &dp, &mut q);
            let qq = dot(&q, &q);
            if qq == 0.0 {
                break;
            }
            let alpha = gamma / qq;
            for k in 0..ncol {
                x[k] += alpha * dp[k];
            }
            for k in 0..nrow {
                r[k] -= alpha * q[k];
            }
            self.adjoint(sb, so, &r, &mut s);
            precond.apply(&mut s);
            let gamma_new = dot(&s, &s);
            let ratio = gamma_new / gamma;
            gamma = gamma_new;
            for k in 0..ncol {
                p[k] = s[k] + ratio * p[k];
            }
            iterations += 1;
            history.push(gamma.sqrt() / ref_norm);
            objective.push(dot(&r, &r));
        }

        let fit = self.measure(&x, beta, objective);
        let max_residual = self
            .pde_nodes
            .iter()
            .flat_map(|&n| (0..3).map(move |i| (n, i)))
            .map(|(n, i)| self.st.apply_row(&x, n, i).abs())
            .fold(0.0, f64::max);
        let grid = self.grid();
        Ok(Continuation {
            solution: GridSolution {
                field: GridField::new(grid, from_flat(&x))?,
                boundary: self.frozen.clone(),
                meta: SolverMeta {
                    method: "cauchy-cgls".into(),
                    coefficients: self.label.clone(),
                    tol,
                    iterations,
                    residual: *history.last().unwrap(),
                    rhs_norm: ref_norm,
                    max_residual,
                    history,
                },
            },
            fit,
        })
    }

    /// `|P K^T (b - K x)|` for a grid field `x`, with `P` the inverse box
    /// Laplacian; the quantity the solver drives below `tol |P K^T b|`.
    pub fn normal_residual(&self, beta: f64, field: &[Vector3<f64>]) -> Result<f64> {
        if field.len() != self.grid().len() {
            return Err(LabError::InvalidInput("field has the wrong length".into()));
        }
        let mut x = to_flat(field);
        for (n, &fz) in self.frozen.iter().enumerate() {
            if fz {
                x[3 * n..3 * n + 3].fill(0.0);
            }
        }
        let (sb, so) = (beta.sqrt(), (beta * OUTER_WEIGHT_RATIO).sqrt());
        let mut r = self.rhs(sb);
        let mut kx = vec![0.0; r.len()];
        self.apply(sb, so, &x, &mut kx);
        for (rv, k) in r.iter_mut().zip(&kx) {
            *rv -= k;
        }
        let mut s = vec![0.0; x.len()];
        self.adjoint(sb, so, &r, &mut s);
        BoxLaplacianInverse::new(self.grid()).apply(&mut s);
        Ok(dot(&s, &s).sqrt())
    }

    /// Objective terms of an arbitrary grid field, e.g. a sampled exact solution.
    pub fn evaluate(&self, beta: f64, field: &[Vector3<f64>]) -> Result<ContinuationFit> {
        if field.len() != self.grid().len() {
            return Err(LabError::InvalidInput("field has the wrong length".into()));
        }
        let mut x = to_flat(field);
        for (n, &fz) in self.frozen.iter().enumerate() {
            if fz {
                x[3 * n..3 * n + 3].fill(0.0);
            }
        }
        let (sb, so) = (beta.sqrt(), (beta * OUTER_WEIGHT_RATIO).sqrt());
        let mut r = vec![0.0; self.rows()];
        self.apply(sb, so, &x, &mut r);
        for (rv, bv) in r.iter_mut().zip(self.rhs(sb)) {
            *rv -= bv;
        }
        Ok(self.measure(&x, beta, vec![dot(&r, &r)]))
    }

    fn measure(&self, x: &[f64], beta: f64, objective: Vec<f64>) -> ContinuationFit {
        let mut y = vec![0.0; self.rows()];
        self.apply(1.0, 1.0, x, &mut y);
        let npde = 3 * self.pde_nodes.len();
        let pde_residual = dot(&y[..npde], &y[..npde]).sqrt();
        let mut parts = [0.0; 4];
        let mut row = npde;
        for (q, g) in self.gamma.iter().enumerate() {
            for i in 0..3 {
                let e = y[row] - g.sqrt_w * self.data.f0[q][i];
                parts[0] += e * e;
                row += 1;
            }
            for j in 0..3 {
                for i in 0..3 {
                    let e = y[row] - g.sqrt_w * self.data.f1[q][(i, j)];
                    parts[j + 1] += e * e;
                    row += 1;
                }
            }
        }
        let outer_trace = dot(&y[row..], &y[row..]).sqrt();
        ContinuationFit {
            beta,
            misfit: parts.iter().map(|p| p.sqrt()).sum(),
            pde_residual,
            outer_trace,
            objective,
        }
    }

    /// Dot-product test `<K x, y> - <x, K^T y>` relative to the larger term,
    /// for pseudo-random `x`, `y`.
    pub fn adjoint_defect(&self, beta: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ncol = 3 * self.grid().len();
        let mut x: Vec<f64> = (0..ncol).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (n, &fz) in self.frozen.iter().enumerate() {
            if fz {
                x[3 * n..3 * n + 3].fill(0.0);
            }
        }
        let y: Vec<f64> = (0..self.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (sb, so) = (beta.sqrt(), (beta * OUTER_WEIGHT_RATIO).sqrt());
        let mut kx = vec![0.0; self.rows()];
        self.apply(sb, so, &x, &mut kx);
        let mut kty = vec![0.0; ncol];
        self.adjoint(sb, so, &y, &mut kty);
        let (a, b) = (dot(&kx, &y), dot(&x, &kty));
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Cube around `B_R` with two spare layers of nodes on every side.
pub fn padded_grid(r_out: f64, h: f64) -> Result<Grid3> {
    let cells = (r_out / h).ceil() + PDE_COLLAR + 2.0;
    Grid3::new(Point::repeat(-cells * h), h, [2 * cells as usize + 1; 3])
}

/// Default angular rule on the outer sphere.
pub fn default_outer_rule() -> SphereRule {
    SphereRule::new(24, 48).expect("valid rule")
}

/// One continuation with a fixed weight.
pub fn continue_solution(
    coeffs: &CoefficientPair,
    data: &CauchyData,
    r_out: f64,
    grid: Grid3,
    beta: f64,
    tol: f64,
) -> Result<Continuation> {
    CauchySolver::new(coeffs, data, r_out, grid, &default_outer_rule())?.solve(beta, tol, None, None)
}

/// How the data weight is chosen at each noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaRule {
    Fixed { beta: f64 },
    /// Geometric grid `lo * ratio^k <= hi`; pick the weight whose misfit is
    /// within a factor 2 of the noise size, else the closest in log scale.
    Discrepancy { lo: f64, hi: f64, ratio: f64 },
}

impl BetaRule {
    pub fn grid(&self) -> Result<Vec<f64>> {
        match *self {
            BetaRule::Fixed { beta } => Ok(vec![beta]),
            BetaRule::Discrepancy { lo, hi, ratio } => {
                if !(lo > 0.0 && hi >= lo && ratio > 1.0) {
                    return Err(LabError::InvalidInput(format!(
                        "beta grid needs 0 < lo <= hi and ratio > 1, got ({lo}, {hi}, {ratio})"
                    )));
                }
                let mut out = vec![lo];
                while *out.last().unwrap() * ratio <= hi * (1.0 + 1e-12) {
                    out.push(out.last().unwrap() * ratio);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelResult {
    pub zeta_rel: f64,
    pub zeta0: f64,
    pub beta: f64,
    pub misfit: f64,
    pub error: f64,
    pub relative_error: f64,
    pub iterations: usize,
    pub solves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub theta: f64,
    pub r_out: f64,
    pub s: f64,
    /// The measurement shell `theta < |x| < theta1`.
    pub omega: (f64, f64),
    pub m0: f64,
    pub exact_omega_norm: f64,
    pub levels: Vec<LevelResult>,
    pub eps_emp: f64,
    /// Largest `error(k + 1) / error(k)` with `zeta0` decreasing.
    pub worst_increase: f64,
    pub holder_consistent: bool,
}

impl StabilityReport {
    pub fn zeta0(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.zeta0).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.error).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySettings {
    pub theta: f64,
    pub r_out: f64,
    pub s: f64,
    pub zeta_list: Vec<f64>,
    pub h: f64,
    pub beta_rule: BetaRule,
    pub tol: f64,
    pub seed: u64,
    /// Angular resolution `(n_p, n_a)` on the inner sphere.
    pub data_rule: (usize, usize),
    pub max_iter: Option<usize>,
}

pub fn stability_experiment<F: DisplacementField + ?Sized>(
    coeffs: &CoefficientPair,
    u: &F,
    cfg: &StabilitySettings,
    mut progress: impl FnMut(&LevelResult),
) -> Result<StabilityReport> {
    let z = &cfg.zeta_list;
    if z.len() < 3 || z.windows(2).any(|w| w[1] >= w[0]) || z.iter().any(|&v| !(v > 0.0)) {
        return Err(LabError::Precondition(
            "zeta_list needs at least 3 strictly decreasing positive levels".into(),
        ));
    }
    let w = CarlemanWeights::new(cfg.r_out, cfg.theta, cfg.s)?;
    let theta1 = w.sublevel_radius(0.5 * w.phi_star())?;
    let grid = padded_grid(cfg.r_out, cfg.h)?;
    let exact = GridField::sample(grid, u);
    let m0 = sobolev_norms_grid(&exact, |x| {
        let r = x.norm();
        cfg.theta < r && r < cfg.r_out
    })?
    .h1();
    if !(m0 > 0.0) {
        return Err(LabError::Degenerate("exact solution vanishes on the annulus".into()));
    }
    let in_omega = |x: &Point| {
        let r = x.norm();
        cfg.theta < r && r < theta1
    };
    let exact_omega_norm = exact.masked_l2(in_omega);
    let data_rule = SphereRule::new(cfg.data_rule.0, cfg.data_rule.1)?;
    let outer_rule = default_outer_rule();
    let betas = cfg.beta_rule.grid()?;

    let mut levels = Vec::with_capacity(z.len());
    let mut warm: Option<Vec<Vector3<f64>>> = None;
    for &zeta_rel in z {
        let data = make_cauchy_data(u, cfg.theta, &data_rule, zeta_rel, cfg.seed)?;
        let solver = CauchySolver::new(coeffs, &data, cfg.r_out, grid, &outer_rule)?;
        if warm.is_none() {
            let beta = betas[betas.len() / 2];
            warm = coarse_start(coeffs, &data, cfg.r_out, grid, beta, cfg.tol, cfg.max_iter)?;
        }
        let (best, solves) = pick_beta(&solver, &betas, data.zeta0, cfg.tol, cfg.max_iter, &mut warm)?;
        let diff: Vec<Vector3<f64>> = best
            .solution
            .values()
            .iter()
            .zip(&exact.values)
            .map(|(a, b)| a - b)
            .collect();
        let error = GridField::new(grid, diff)?.masked_l2(in_omega);
        let level = LevelResult {
            zeta_rel,
            zeta0: data.zeta0,
            beta: best.fit.beta,
            misfit: best.fit.misfit,
            error,
            relative_error: error / exact_omega_norm,
            iterations: best.solution.meta.iterations,
            solves,
        };
        progress(&level);
        levels.push(level);
    }
    let lz: Vec<f64> = levels.iter().map(|l| l.zeta0.ln()).collect();
    let le: Vec<f64> = levels.iter().map(|l| l.error.ln()).collect();
    let eps_emp = slope(&lz, &le);
    let worst_increase = levels
        .windows(2)
        .map(|w| w[1].error / w[0].error)
        .fold(0.0, f64::max);
    let holder_consistent = eps_emp > 0.05 && eps_emp <= 1.05 && worst_increase <= 1.5;
    Ok(StabilityReport {
        theta: cfg.theta,
        r_out: cfg.r_out,
        s: cfg.s,
        omega: (cfg.theta, theta1),
        m0,
        exact_omega_norm,
        levels,
        eps_emp,
        worst_increase,
        holder_consistent,
    })
}

/// Solve on the grids with spacing `4h` and `2h` in turn, each warm-started
/// from the previous one, and transfer the result to `grid`. Levels whose
/// geometry does not fit are skipped.
fn coarse_start(
    coeffs: &CoefficientPair,
    data: &CauchyData,
    r_out: f64,
    grid: Grid3,
    beta: f64,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<Option<Vec<Vector3<f64>>>> {
    let mut prev: Option<GridField> = None;
    for k in [4.0, 2.0] {
        let coarse = padded_grid(r_out, k * grid.h)?;
        let Ok(solver) = CauchySolver::new(coeffs, data, r_out, coarse, &default_outer_rule()) else {
            continue;
        };
        let warm = prev.as_ref().map(|p| p.resample(coarse).values);
        prev = Some(solver.solve(beta, tol, warm.as_deref(), max_iter)?.solution.field);
    }
    Ok(prev.map(|p| p.resample(grid).values))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Discrepancy search over the weight grid, walking from the middle towards
/// the side indicated by the misfit. Returns the chosen continuation and the
/// number of solves.
fn pick_beta(
    solver: &CauchySolver,
    betas: &[f64],
    zeta0: f64,
    tol: f64,
    max_iter: Option<usize>,
    warm: &mut Option<Vec<Vector3<f64>>>,
) -> Result<(Continuation, usize)> {
    let mut k = betas.len() / 2;
    let mut solves = 0;
    let mut best: Option<(f64, Continuation)> = None;
    let mut direction = 0i32;
    loop {
        let c = solver.solve(betas[k], tol, warm.as_deref(), max_iter)?;
        solves += 1;
        *warm = Some(c.solution.values().to_vec());
        if zeta0 == 0.0 || betas.len() == 1 {
            return Ok((c, solves));
        }
        let gap = (c.fit.misfit / zeta0).ln();
        let step = if gap > 2f64.ln() {
            1
        } else if gap < -(2f64.ln()) {
            -1
        } else {
            0
        };
        let better = best.as_ref().is_none_or(|(g, _)| gap.abs() < g.abs());
        if better {
            best = Some((gap, c));
        }
        let stop = step == 0
            || (direction != 0 && step != direction)
            || (step > 0 && k + 1 == betas.len())
            || (step < 0 && k == 0);
        if stop {
            return Ok((best.expect("at least one solve").1, solves));
        }
        direction = step;
        k = (k as i32 + step) as usize;
    }
}
