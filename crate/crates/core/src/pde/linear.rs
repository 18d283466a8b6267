//! Theta-scheme for v_t - a(t) Lap v + beta . grad v + div(gamma v) + c v = F with Dirichlet data.

use crate::error::{Error, Result};
use crate::geometry::{SpaceTimeGrid, Vec2, NOT_UNKNOWN};

use super::sparse::{bicgstab, Csr, Ilu0, KrylovOptions};
use super::{BoundaryTrace, ScalarField};

pub type TimeFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);
pub type VecFn<'a> = &'a (dyn Fn(f64, Vec2) -> Vec2 + Sync);
pub type ScalarFn<'a> = &'a (dyn Fn(f64, Vec2) -> f64 + Sync);

#[derive(Clone, Copy)]
pub enum Source<'a> {
    Zero,
    Field(&'a ScalarField),
    Func(ScalarFn<'a>),
    /// Consecutive node slices for time levels k0, k0+1, ..., scaled by `scale`; zero elsewhere.
    Window {
        k0: usize,
        data: &'a [f64],
        scale: f64,
    },
}

impl<'a> Source<'a> {
    fn fill(&self, grid: &SpaceTimeGrid, k: usize, out: &mut [f64]) {
        match self {
            Source::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Source::Field(f) => out.copy_from_slice(f.slice(k)),
            Source::Func(f) => {
                let t = grid.time(k);
                for (idx, v) in out.iter_mut().enumerate() {
                    *v = if grid.is_active(idx) {
                        f(t, grid.coords(idx))
                    } else {
                        0.0
                    };
                }
            }
            Source::Window { k0, data, scale } => {
                let n = grid.n_nodes();
                let nk = data.len() / n;
                if k >= *k0 && k < k0 + nk {
                    let s = &data[(k - k0) * n..(k - k0 + 1) * n];
                    for (o, v) in out.iter_mut().zip(s) {
                        *o = scale * v;
                    }
                } else {
                    out.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

/// The spatial operator A(t) v = -a Lap v + beta . grad v + div(gamma v) + c v.
#[derive(Clone, Copy)]
pub struct LinearOperator<'a> {
    pub diffusion: TimeFn<'a>,
    pub advection: Option<VecFn<'a>>,
    pub conservative: Option<VecFn<'a>>,
    pub potential: Option<ScalarFn<'a>>,
}

impl<'a> LinearOperator<'a> {
    pub fn diffusion_only(diffusion: TimeFn<'a>) -> Self {
        LinearOperator {
            diffusion,
            advection: None,
            conservative: None,
            potential: None,
        }
    }

    /// Stencil weights [center, east(+x), west, north(+y), south] per interior node.
    pub fn stencils(&self, grid: &SpaceTimeGrid, t: f64) -> Vec<[f64; 5]> {
        let h = grid.h;
        let side = grid.side();
        let a = (self.diffusion)(t);
        let dc = a / (h * h);
        grid.interior()
            .iter()
            .map(|&idx| {
                let mut w = [4.0 * dc, -dc, -dc, -dc, -dc];
                let x = grid.coords(idx);
                if let Some(beta) = self.advection {
                    let b = beta(t, x);
                    w[1] += b[0] / (2.0 * h);
                    w[2] -= b[0] / (2.0 * h);
                    w[3] += b[1] / (2.0 * h);
                    w[4] -= b[1] / (2.0 * h);
                }
                if let Some(gamma) = self.conservative {
                    w[1] += gamma(t, grid.coords(idx + side))[0] / (2.0 * h);
                    w[2] -= gamma(t, grid.coords(idx - side))[0] / (2.0 * h);
                    w[3] += gamma(t, grid.coords(idx + 1))[1] / (2.0 * h);
                    w[4] -= gamma(t, grid.coords(idx - 1))[1] / (2.0 * h);
                }
                if let Some(c) = self.potential {
                    w[0] += c(t, x);
                }
                w
            })
            .collect()
    }

    /// (A v) at interior nodes, ordered like `grid.interior()`.
    pub fn apply(&self, grid: &SpaceTimeGrid, t: f64, v: &[f64]) -> Vec<f64> {
        let st = self.stencils(grid, t);
        apply_stencils(grid, &st, v)
    }
}

fn neighbours(grid: &SpaceTimeGrid, idx: usize) -> [usize; 5] {
    let side = grid.side();
    [idx, idx + side, idx - side, idx + 1, idx - 1]
}

fn apply_stencils(grid: &SpaceTimeGrid, st: &[[f64; 5]], v: &[f64]) -> Vec<f64> {
    grid.interior()
        .iter()
        .zip(st)
        .map(|(&idx, w)| {
            neighbours(grid, idx)
                .iter()
                .zip(w)
                .map(|(&n, c)| c * v[n])
                .sum()
        })
        .collect()
}

/// A linear parabolic problem posed forward (or, with `reversed`, backward from t = T).
#[derive(Clone, Copy)]
pub struct LinearProblem<'a> {
    pub operator: LinearOperator<'a>,
    pub source: Source<'a>,
    pub dirichlet: Option<&'a BoundaryTrace>,
    /// Data at the starting time level (t = 0 forward, t = T reversed, or the window start).
    pub initial: Option<&'a [f64]>,
    /// 1 = implicit Euler, 0.5 = Crank-Nicolson.
    pub theta: f64,
    /// Solve -v_t + A v = F backward from the final time.
    pub reversed: bool,
    /// Physical time-level range [k_lo, k_hi] to integrate over; the field is zero outside.
    pub window: Option<(usize, usize)>,
    pub equilibrate: bool,
    pub krylov: KrylovOptions,
}

impl<'a> LinearProblem<'a> {
    pub fn new(operator: LinearOperator<'a>) -> Self {
        LinearProblem {
            operator,
            source: Source::Zero,
            dirichlet: None,
            initial: None,
            theta: 1.0,
            reversed: false,
            window: None,
            equilibrate: false,
            krylov: KrylovOptions::default(),
        }
    }
}

/// Diagnostics of a linear solve.
#[derive(Clone, Debug, Default)]
pub struct LinearReport {
    pub krylov_iterations: usize,
}

pub fn solve_linear(
    grid: &SpaceTimeGrid,
    p: &LinearProblem<'_>,
) -> Result<(ScalarField, LinearReport)> {
    if !(0.0..=1.0).contains(&p.theta) {
        return Err(Error::InvalidConfig(format!(
            "theta must lie in [0, 1], got {}",
            p.theta
        )));
    }
    if let Some(g) = p.dirichlet {
        g.check_shape(grid)?;
    }
    if let Source::Field(f) = p.source {
        f.check_shape(grid)?;
    }
    let nt = grid.nt;
    let (k_lo, k_hi) = p.window.unwrap_or((0, nt));
    if k_lo > k_hi || k_hi > nt {
        return Err(Error::InvalidConfig(format!(
            "time window ({k_lo}, {k_hi}) outside 0..={nt}"
        )));
    }
    // solve-order step j maps to physical level phys(j)
    let (j0, j1) = if p.reversed {
        (nt - k_hi, nt - k_lo)
    } else {
        (k_lo, k_hi)
    };
    let phys = |j: usize| if p.reversed { nt - j } else { j };
    let n_nodes = grid.n_nodes();
    let interior = grid.interior();
    let nu = interior.len();

    let mut u = ScalarField::zeros(grid);
    {
        let k = phys(j0);
        let s = u.slice_mut(k);
        if let Some(init) = p.initial {
            if init.len() != n_nodes {
                return Err(Error::Shape("initial data has the wrong length".into()));
            }
            s.copy_from_slice(init);
        }
        if let Some(g) = p.dirichlet {
            for (b, node) in grid.boundary().iter().enumerate() {
                s[node.node] = g.at(k, b);
            }
        }
    }

    let rows: Vec<Vec<usize>> = interior
        .iter()
        .map(|&idx| {
            neighbours(grid, idx)
                .iter()
                .map(|&n| grid.unknown_of(n))
                .filter(|&c| c != NOT_UNKNOWN)
                .collect()
        })
        .collect();
    let mut mat = Csr::from_pattern(&rows);
    let dt = grid.dt;
    let theta = p.theta;
    let mut f_new = vec![0.0; n_nodes];
    let mut f_old = vec![0.0; n_nodes];
    let mut rhs = vec![0.0; nu];
    let mut x = vec![0.0; nu];
    let mut report = LinearReport::default();
    let mut st_old: Option<Vec<[f64; 5]>> = None;

    for j in j0..j1 {
        let (ko, kn) = (phys(j), phys(j + 1));
        let (to, tn) = (grid.time(ko), grid.time(kn));
        let st_new = p.operator.stencils(grid, tn);
        // boundary values at the new level
        let mut unew = u.slice(ko).to_vec();
        for &idx in interior {
            unew[idx] = 0.0;
        }
        match p.dirichlet {
            Some(g) => {
                for (b, node) in grid.boundary().iter().enumerate() {
                    unew[node.node] = g.at(kn, b);
                }
            }
            None => {
                for node in grid.boundary() {
                    unew[node.node] = 0.0;
                }
            }
        }
        let uold = u.slice(ko);
        if !p.source.is_zero() {
            p.source.fill(grid, kn, &mut f_new);
            if theta < 1.0 {
                p.source.fill(grid, ko, &mut f_old);
            }
        }
        let explicit = if theta < 1.0 {
            let st = match st_old.take() {
                Some(s) => s,
                None => p.operator.stencils(grid, to),
            };
            Some(apply_stencils(grid, &st, uold))
        } else {
            None
        };
        mat.clear();
        for (r, &idx) in interior.iter().enumerate() {
            let w = &st_new[r];
            let nb = neighbours(grid, idx);
            let mut b = uold[idx] / dt;
            if !p.source.is_zero() {
                b += theta * f_new[idx] + (1.0 - theta) * f_old[idx];
            }
            if let Some(e) = &explicit {
                b -= (1.0 - theta) * e[r];
            }
            mat.add(r, r, 1.0 / dt + theta * w[0]);
            for q in 1..5 {
                let c = grid.unknown_of(nb[q]);
                if c == NOT_UNKNOWN {
                    b -= theta * w[q] * unew[nb[q]];
                } else {
                    mat.add(r, c, theta * w[q]);
                }
            }
            rhs[r] = b;
            x[r] = uold[idx];
        }
        if p.equilibrate {
            mat.equilibrate_rows(&mut rhs);
        }
        let ilu = Ilu0::new(&mat)?;
        report.krylov_iterations += bicgstab(&mat, &ilu, &rhs, &mut x, p.krylov)
            .map_err(|e| Error::Solver(format!("step {j} (t = {tn:.4}): {e}")))?;
        for (r, &idx) in interior.iter().enumerate() {
            unew[idx] = x[r];
        }
        u.slice_mut(kn).copy_from_slice(&unew);
        if theta < 1.0 {
            st_old = Some(st_new);
        }
    }
    if !u.is_finite() {
        return Err(Error::Solver("non-finite values in linear solve".into()));
    }
    Ok((u, report))
}

/// v_t - a0 Lap v + B0 . grad v = F, v = g on Sigma, v(0) = 0.
pub fn solve_linear_forward(
    grid: &SpaceTimeGrid,
    a0: TimeFn<'_>,
    b0: Option<VecFn<'_>>,
    dirichlet: Option<&BoundaryTrace>,
    source: Source<'_>,
) -> Result<ScalarField> {
    let op = LinearOperator {
        diffusion: a0,
        advection: b0,
        conservative: None,
        potential: None,
    };
    let mut p = LinearProblem::new(op);
    p.dirichlet = dirichlet;
    p.source = source;
    Ok(solve_linear(grid, &p)?.0)
}

/// -w_t - a0 Lap w - div(B0 w) = F, w = g on Sigma, w(T) = 0, solved in reversed time.
pub fn solve_linear_adjoint(
    grid: &SpaceTimeGrid,
    a0: TimeFn<'_>,
    b0: Option<VecFn<'_>>,
    dirichlet: Option<&BoundaryTrace>,
    source: Source<'_>,
) -> Result<ScalarField> {
    let neg = b0.map(|b| {
        move |t: f64, x: Vec2| {
            let v = b(t, x);
            [-v[0], -v[1]]
        }
    });
    let neg_ref: Option<&(dyn Fn(f64, Vec2) -> Vec2 + Sync)> = neg.as_ref().map(|f| f as _);
    let op = LinearOperator {
        diffusion: a0,
        advection: None,
        conservative: neg_ref,
        potential: None,
    };
    let mut p = LinearProblem::new(op);
    p.dirichlet = dirichlet;
    p.source = source;
    p.reversed = true;
    Ok(solve_linear(grid, &p)?.0)
}

/// Interior residual of the implicit-Euler discretization applied to a given field:
/// (v^{k} - v^{k-1})/dt + A(t_k) v^k - F^k at k = 1..nt (level 0 is left zero).
pub fn linear_residual(
    grid: &SpaceTimeGrid,
    op: &LinearOperator<'_>,
    v: &ScalarField,
    source: Source<'_>,
    reversed: bool,
) -> Result<ScalarField> {
    v.check_shape(grid)?;
    let mut out = ScalarField::zeros(grid);
    let mut f = vec![0.0; grid.n_nodes()];
    for j in 1..=grid.nt {
        let (ko, kn) = if reversed {
            (grid.nt - j + 1, grid.nt - j)
        } else {
            (j - 1, j)
        };
        let av = op.apply(grid, grid.time(kn), v.slice(kn));
        source.fill(grid, kn, &mut f);
        let (so, sn) = (v.slice(ko), v.slice(kn));
        let o = out.slice_mut(kn);
        for (r, &idx) in grid.interior().iter().enumerate() {
            o[idx] = (sn[idx] - so[idx]) / grid.dt + av[r] - f[idx];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn zero_data_gives_zero() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let one = |_: f64| 1.0;
        let v = solve_linear_forward(&g, &one, None, None, Source::Zero).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        let w = solve_linear_adjoint(&g, &one, None, None, Source::Zero).unwrap();
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn additivity() {
        let g = build_grid(Domain::unit_square(), 0.5, 16, 16).unwrap();
        let one = |_: f64| 1.0;
        let b = |_: f64, x: Vec2| [x[1], -x[0]];
        let g1 = BoundaryTrace::from_fn(&g, |t, x| t * t * x[0]);
        let g2 = BoundaryTrace::from_fn(&g, |t, x| t * t * (x[1] - 0.3).powi(2));
        let f = |t: f64, x: Vec2| t * x[0] * x[1];
        let v1 = solve_linear_forward(&g, &one, Some(&b), Some(&g1), Source::Func(&f)).unwrap();
        let v2 = solve_linear_forward(&g, &one, Some(&b), Some(&g2), Source::Zero).unwrap();
        let v12 =
            solve_linear_forward(&g, &one, Some(&b), Some(&g1.add(&g2)), Source::Func(&f)).unwrap();
        let d = v12.sub(&v1.add(&v2)).max_abs();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn crank_nicolson_beats_euler_in_time() {
        // exact solution e^{-2 pi^2 t} sin(pi x) sin(pi y)
        let g = build_grid(Domain::unit_square(), 0.1, 10, 32).unwrap();
        let pi = std::f64::consts::PI;
        let exact =
            |t: f64, x: Vec2| (-2.0 * pi * pi * t).exp() * (pi * x[0]).sin() * (pi * x[1]).sin();
        let one = |_: f64| 1.0;
        let init: Vec<f64> = (0..g.n_nodes()).map(|i| exact(0.0, g.coords(i))).collect();
        let mut errs = vec![];
        for theta in [1.0, 0.5] {
            let mut p = LinearProblem::new(LinearOperator::diffusion_only(&one));
            p.initial = Some(&init);
            p.theta = theta;
            let (v, _) = solve_linear(&g, &p).unwrap();
            let e = ScalarField::from_fn(&g, exact);
            errs.push(v.sub(&e).max_abs());
        }
        assert!(errs[1] < 0.2 * errs[0], "{errs:?}");
    }
}
