//! Finite-difference solvers: linear theta-scheme kernel, quasilinear Newton stepping, fluxes.

pub mod linear;
pub mod quasilinear;
pub mod sparse;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{SpaceTimeGrid, Vec2};
use crate::laws::DiffusionLaw;

pub use linear::{
    linear_residual, solve_linear, solve_linear_adjoint, solve_linear_forward, LinearOperator,
    LinearProblem, Source,
};
pub use quasilinear::{solve_quasilinear, NewtonOptions, QuasilinearProblem};

/// Values on every (time, spatial node) pair; inactive nodes hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub nt: usize,
    pub n_nodes: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        ScalarField {
            nt: grid.nt,
            n_nodes: grid.n_nodes(),
            data: vec![0.0; (grid.nt + 1) * grid.n_nodes()],
        }
    }

    pub fn constant(grid: &SpaceTimeGrid, v: f64) -> Self {
        let mut f = Self::zeros(grid);
        for k in 0..=grid.nt {
            for idx in 0..grid.n_nodes() {
                if grid.is_active(idx) {
                    f.data[k * f.n_nodes + idx] = v;
                }
            }
        }
        f
    }

    /// Samples f(t, x) on active nodes.
    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(f64, Vec2) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let n = grid.n_nodes();
        for k in 0..=grid.nt {
            let t = grid.time(k);
            for idx in 0..n {
                if grid.is_active(idx) {
                    out.data[k * n + idx] = f(t, grid.coords(idx));
                }
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, k: usize, idx: usize) -> f64 {
        self.data[k * self.n_nodes + idx]
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    #[inline]
    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn check_shape(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if self.nt != grid.nt || self.n_nodes != grid.n_nodes() {
            return Err(Error::Shape(format!(
                "field has {}x{} entries, grid needs {}x{}",
                self.nt + 1,
                self.n_nodes,
                grid.nt + 1,
                grid.n_nodes()
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        ScalarField {
            nt: self.nt,
            n_nodes: self.n_nodes,
            data,
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        ScalarField {
            nt: self.nt,
            n_nodes: self.n_nodes,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            nt: self.nt,
            n_nodes: self.n_nodes,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (y, v) in self.data.iter_mut().zip(&x.data) {
            *y += a * v;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            nt: self.nt,
            n_nodes: self.n_nodes,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Space-time trapezoid integral over M.
    pub fn integrate(&self, grid: &SpaceTimeGrid) -> f64 {
        let mut acc = 0.0;
        for k in 0..=grid.nt {
            let s = self.slice(k);
            let mut sk = 0.0;
            for idx in 0..grid.n_nodes() {
                let w = grid.cell_weight(idx);
                if w != 0.0 {
                    sk += w * s[idx];
                }
            }
            acc += grid.time_weight(k) * sk;
        }
        acc
    }

    pub fn l2_norm(&self, grid: &SpaceTimeGrid) -> f64 {
        self.map(|v| v * v).integrate(grid).sqrt()
    }

    /// Max over interior nodes and all time levels.
    pub fn max_abs_interior(&self, grid: &SpaceTimeGrid) -> f64 {
        let mut m = 0.0f64;
        for k in 0..=self.nt {
            let s = self.slice(k);
            for &idx in grid.interior() {
                m = m.max(s[idx].abs());
            }
        }
        m
    }

    /// CSV with header `t,x,y,value`, active nodes only.
    pub fn write_csv(&self, grid: &SpaceTimeGrid, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", "y", "value"])?;
        for k in 0..=self.nt {
            let t = grid.time(k);
            for idx in 0..self.n_nodes {
                if grid.is_active(idx) {
                    let x = grid.coords(idx);
                    w.serialize((t, x[0], x[1], self.at(k, idx)))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian row-major f64 dump (time-major, then node index).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Values on (time, boundary node) pairs, ordered like `grid.boundary()`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace {
    pub nt: usize,
    pub nb: usize,
    pub data: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        let nb = grid.boundary().len();
        BoundaryTrace {
            nt: grid.nt,
            nb,
            data: vec![0.0; (grid.nt + 1) * nb],
        }
    }

    /// Samples g(t, x) at the boundary sample points.
    pub fn from_fn(grid: &SpaceTimeGrid, g: impl Fn(f64, Vec2) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..=grid.nt {
            let t = grid.time(k);
            for (b, node) in grid.boundary().iter().enumerate() {
                out.data[k * out.nb + b] = g(t, node.point);
            }
        }
        out
    }

    /// Restriction of a field to the boundary nodes.
    pub fn from_field(grid: &SpaceTimeGrid, u: &ScalarField) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..=grid.nt {
            for (b, node) in grid.boundary().iter().enumerate() {
                out.data[k * out.nb + b] = u.at(k, node.node);
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, k: usize, b: usize) -> f64 {
        self.data[k * self.nb + b]
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.nb..(k + 1) * self.nb]
    }

    pub fn check_shape(&self, grid: &SpaceTimeGrid) -> Result<()> {
        if self.nt != grid.nt || self.nb != grid.boundary().len() {
            return Err(Error::Shape(format!(
                "trace has {}x{} entries, grid needs {}x{}",
                self.nt + 1,
                self.nb,
                grid.nt + 1,
                grid.boundary().len()
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        BoundaryTrace {
            nt: self.nt,
            nb: self.nb,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &BoundaryTrace) -> Self {
        BoundaryTrace {
            nt: self.nt,
            nb: self.nb,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &BoundaryTrace) -> Self {
        BoundaryTrace {
            nt: self.nt,
            nb: self.nb,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// f(0) = 0 and the second-order one-sided time derivative at t = 0 vanishes.
    pub fn is_admissible(&self, dt: f64) -> bool {
        let scale = self.max_abs().max(1e-300);
        let tol = 1e-9 * scale;
        (0..self.nb).all(|b| {
            let (f0, f1, f2) = (self.at(0, b), self.at(1, b), self.at(2, b));
            f0.abs() <= tol && ((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * dt)).abs() * dt <= tol
        })
    }
}

/// Diagnostics of a time-stepping solve.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveReport {
    pub newton_iterations: Vec<usize>,
    pub linear_iterations: usize,
    pub max_residual: f64,
    pub small_data_violation: bool,
}

/// Coefficient multiplying the normal derivative in a flux.
pub enum FluxMode<'a> {
    /// a(t, u) at the boundary value.
    Quasilinear(&'a DiffusionLaw),
    /// a0(t).
    Linear(&'a dyn Fn(f64) -> f64),
}

/// One-sided second-order inward derivative along axis `d` (0 = x, 1 = y); `s` is the inward sign.
fn inward_derivative(grid: &SpaceTimeGrid, u: &[f64], node: usize, d: usize, s: isize) -> f64 {
    let (i, j) = grid.ij(node);
    let n = grid.nx as isize;
    let step = |m: isize| -> Option<usize> {
        let (ii, jj) = if d == 0 {
            (i as isize + s * m, j as isize)
        } else {
            (i as isize, j as isize + s * m)
        };
        if ii < 0 || jj < 0 || ii > n || jj > n {
            return None;
        }
        let idx = grid.index(ii as usize, jj as usize);
        grid.is_active(idx).then_some(idx)
    };
    let sf = s as f64;
    match (step(1), step(2)) {
        (Some(p1), Some(p2)) => sf * (4.0 * (u[p1] - u[node]) - (u[p2] - u[node])) / (2.0 * grid.h),
        (Some(p1), None) => sf * (u[p1] - u[node]) / grid.h,
        _ => 0.0,
    }
}

/// Gradient contracted with the boundary flux direction at one boundary node.
pub fn normal_derivative(grid: &SpaceTimeGrid, u: &[f64], b: usize) -> f64 {
    let node = &grid.boundary()[b];
    let mut acc = 0.0;
    for d in 0..2 {
        let c = node.flux_dir[d];
        if c.abs() > 1e-12 {
            let s = if c > 0.0 { -1 } else { 1 };
            acc += c * inward_derivative(grid, u, node.node, d, s);
        }
    }
    acc
}

/// Flux a * d_nu u on Sigma.
pub fn flux_trace(
    grid: &SpaceTimeGrid,
    u: &ScalarField,
    mode: FluxMode<'_>,
) -> Result<BoundaryTrace> {
    u.check_shape(grid)?;
    let mut out = BoundaryTrace::zeros(grid);
    for k in 0..=grid.nt {
        let t = grid.time(k);
        let s = u.slice(k);
        for (b, node) in grid.boundary().iter().enumerate() {
            let dn = normal_derivative(grid, s, b);
            let a = match &mode {
                FluxMode::Quasilinear(law) => law.value(t, s[node.node]),
                FluxMode::Linear(a0) => a0(t),
            };
            out.data[k * out.nb + b] = a * dn;
        }
    }
    Ok(out)
}

/// Central gradient at an interior node.
#[inline]
pub fn central_gradient(grid: &SpaceTimeGrid, u: &[f64], idx: usize) -> Vec2 {
    let side = grid.side();
    let h2 = 2.0 * grid.h;
    [
        (u[idx + side] - u[idx - side]) / h2,
        (u[idx + 1] - u[idx - 1]) / h2,
    ]
}

/// Five-point Laplacian at an interior node.
#[inline]
pub fn laplacian(grid: &SpaceTimeGrid, u: &[f64], idx: usize) -> f64 {
    let side = grid.side();
    (u[idx + side] + u[idx - side] + u[idx + 1] + u[idx - 1] - 4.0 * u[idx]) / (grid.h * grid.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn flux_of_constant_and_linear_profiles() {
        let g = build_grid(Domain::unit_square(), 1.0, 4, 16).unwrap();
        let c = ScalarField::constant(&g, 0.7);
        let one = |_: f64| 1.0;
        let f = flux_trace(&g, &c, FluxMode::Linear(&one)).unwrap();
        assert!(f.max_abs() < 1e-12);
        let u = ScalarField::from_fn(&g, |_, x| x[0]);
        let f = flux_trace(&g, &u, FluxMode::Linear(&one)).unwrap();
        for (b, node) in g.boundary().iter().enumerate() {
            let want = node.flux_dir[0];
            assert!((f.at(2, b) - want).abs() < 1e-12, "{:?}", node.point);
        }
    }

    #[test]
    fn admissibility() {
        let g = build_grid(Domain::unit_square(), 1.0, 16, 8).unwrap();
        let ok = BoundaryTrace::from_fn(&g, |t, x| t * t * x[0]);
        assert!(ok.is_admissible(g.dt));
        let bad = BoundaryTrace::from_fn(&g, |t, x| t * x[0]);
        assert!(!bad.is_admissible(g.dt));
    }

    #[test]
    fn integrate_constant() {
        let g = build_grid(Domain::unit_square(), 2.0, 8, 8).unwrap();
        let c = ScalarField::constant(&g, 1.5);
        assert!((c.integrate(&g) - 3.0).abs() < 1e-12);
    }
}
