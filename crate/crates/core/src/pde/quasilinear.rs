//! Implicit Euler + damped Newton for u_t - div(a(t,u) grad u) + b(t,x,u,grad u) B(t,x,u) . grad u = F.

use crate::error::{Error, Result};
use crate::geometry::{dot, SpaceTimeGrid, Vec2, NOT_UNKNOWN};
use crate::laws::CoefficientLaw;

use super::sparse::{bicgstab, Csr, Ilu0, KrylovOptions};
use super::{central_gradient, BoundaryTrace, ScalarField, SolveReport};

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Convergence when dt * max|residual| <= tol.
    pub tol: f64,
    pub max_iter: usize,
    /// Reject sources that are not admissible (zero value and first derivative at t = 0).
    pub require_admissible: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 25,
            require_admissible: true,
        }
    }
}

pub struct QuasilinearProblem<'a> {
    pub law: &'a CoefficientLaw,
    pub lambda: f64,
    /// Boundary source f; u = lambda + f on Sigma.
    pub source: &'a BoundaryTrace,
    /// Optional interior forcing F(t, x) (manufactured solutions).
    pub forcing: Option<&'a (dyn Fn(f64, Vec2) -> f64 + Sync)>,
    pub options: NewtonOptions,
}

struct Step<'a> {
    grid: &'a SpaceTimeGrid,
    law: &'a CoefficientLaw,
    t: f64,
    dt: f64,
    forcing: Vec<f64>,
}

impl<'a> Step<'a> {
    fn residual(&self, u: &[f64], u_old: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let side = g.side();
        let h2 = g.h * g.h;
        let a = &self.law.a;
        for (r, &idx) in g.interior().iter().enumerate() {
            let ui = u[idx];
            let ai = a.value(self.t, ui);
            let mut diff = 0.0;
            for nb in [idx + side, idx - side, idx + 1, idx - 1] {
                let af = 0.5 * (ai + a.value(self.t, u[nb]));
                diff += af * (u[nb] - ui);
            }
            let grad = central_gradient(g, u, idx);
            let x = g.coords(idx);
            let c = self.law.convection.eval(self.t, x, ui, grad);
            out[r] = (ui - u_old[idx]) / self.dt - diff / h2 + dot(c, grad) - self.forcing[idx];
        }
    }

    fn jacobian(&self, u: &[f64], mat: &mut Csr) {
        let g = self.grid;
        let side = g.side();
        let h = g.h;
        let h2 = h * h;
        let a = &self.law.a;
        let conv = &self.law.convection;
        mat.clear();
        for (r, &idx) in g.interior().iter().enumerate() {
            let ui = u[idx];
            let ai = a.value(self.t, ui);
            let dai = a.dlambda(self.t, ui);
            let mut diag = 1.0 / self.dt;
            let grad = central_gradient(g, u, idx);
            let x = g.coords(idx);
            let bval = conv.b.value(self.t, x, ui, grad);
            let bvec = conv.vector.value(self.t, x, ui);
            let bxi = conv.b.grad_xi(self.t, x, ui, grad);
            let dtau_b = conv.b.dtau(self.t, x, ui, grad);
            let dtau_bvec = conv.vector.dtau(self.t, x, ui);
            let bdotg = dot(bvec, grad);
            // tau-derivative of the full coefficient, contracted with the gradient
            diag += dtau_b * bdotg + bval * dot(dtau_bvec, grad);
            let full = [bval * bvec[0], bval * bvec[1]];
            let nbs = [
                (idx + side, 0usize, 1.0),
                (idx - side, 0, -1.0),
                (idx + 1, 1, 1.0),
                (idx - 1, 1, -1.0),
            ];
            for (nb, d, sgn) in nbs {
                let un = u[nb];
                let an = a.value(self.t, un);
                let af = 0.5 * (ai + an);
                diag += (af - 0.5 * dai * (un - ui)) / h2;
                let c = g.unknown_of(nb);
                if c != NOT_UNKNOWN {
                    let dan = a.dlambda(self.t, un);
                    let mut v = -(0.5 * dan * (un - ui) + af) / h2;
                    v += sgn / (2.0 * h) * (full[d] + bxi[d] * bdotg);
                    mat.add(r, c, v);
                }
            }
            mat.add(r, r, diag);
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the quasilinear IBVP with u(0) = lambda and u = lambda + f on Sigma.
pub fn solve_quasilinear(
    grid: &SpaceTimeGrid,
    p: &QuasilinearProblem<'_>,
) -> Result<(ScalarField, SolveReport)> {
    p.source.check_shape(grid)?;
    if p.options.require_admissible && !p.source.is_admissible(grid.dt) {
        return Err(Error::Precondition(
            "boundary source must vanish with its first time derivative at t = 0".into(),
        ));
    }
    let n_nodes = grid.n_nodes();
    let interior = grid.interior();
    let nu = interior.len();
    let mut u = ScalarField::constant(grid, p.lambda);
    let mut report = SolveReport::default();
    if p.source.max_abs() == 0.0 && p.forcing.is_none() {
        report.newton_iterations = vec![0; grid.nt];
        return Ok((u, report));
    }
    let rows: Vec<Vec<usize>> = interior
        .iter()
        .map(|&idx| {
            let side = grid.side();
            [idx, idx + side, idx - side, idx + 1, idx - 1]
                .iter()
                .map(|&n| grid.unknown_of(n))
                .filter(|&c| c != NOT_UNKNOWN)
                .collect()
        })
        .collect();
    let mut jac = Csr::from_pattern(&rows);
    let mut res = vec![0.0; nu];
    let mut trial_res = vec![0.0; nu];
    let mut delta = vec![0.0; nu];
    let krylov = KrylovOptions {
        rel_tol: 1e-13,
        ..Default::default()
    };
    let tol = p.options.tol;

    for k in 1..=grid.nt {
        let t = grid.time(k);
        let mut forcing = vec![0.0; n_nodes];
        if let Some(f) = p.forcing {
            for &idx in interior {
                forcing[idx] = f(t, grid.coords(idx));
            }
        }
        let step = Step {
            grid,
            law: p.law,
            t,
            dt: grid.dt,
            forcing,
        };
        let u_old = u.slice(k - 1).to_vec();
        let mut cur = u_old.clone();
        for (b, node) in grid.boundary().iter().enumerate() {
            cur[node.node] = p.lambda + p.source.at(k, b);
        }
        step.residual(&cur, &u_old, &mut res);
        let mut rn = max_abs(&res);
        let mut iters = 0;
        while rn * grid.dt > tol {
            if iters >= p.options.max_iter {
                return Err(Error::SmallData {
                    step: k,
                    t,
                    residual: rn * grid.dt,
                });
            }
            iters += 1;
            step.jacobian(&cur, &mut jac);
            let ilu = Ilu0::new(&jac)?;
            let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
            delta.iter_mut().for_each(|d| *d = 0.0);
            report.linear_iterations +=
                bicgstab(&jac, &ilu, &rhs, &mut delta, krylov).map_err(|_| Error::SmallData {
                    step: k,
                    t,
                    residual: rn * grid.dt,
                })?;
            let mut alpha = 1.0;
            loop {
                let mut trial = cur.clone();
                for (r, &idx) in interior.iter().enumerate() {
                    trial[idx] += alpha * delta[r];
                }
                step.residual(&trial, &u_old, &mut trial_res);
                let tn = max_abs(&trial_res);
                if tn.is_finite() && (tn < rn || tn * grid.dt <= tol) {
                    cur = trial;
                    std::mem::swap(&mut res, &mut trial_res);
                    rn = tn;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1.0 / 1024.0 {
                    return Err(Error::SmallData {
                        step: k,
                        t,
                        residual: rn * grid.dt,
                    });
                }
            }
        }
        report.newton_iterations.push(iters);
        report.max_residual = report.max_residual.max(rn * grid.dt);
        u.slice_mut(k).copy_from_slice(&cur);
    }
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::laws::builtin_law;

    #[test]
    fn zero_source_keeps_constant() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let law = builtin_law("quasilinear").unwrap();
        let f = BoundaryTrace::zeros(&g);
        let p = QuasilinearProblem {
            law: &law,
            lambda: 0.3,
            source: &f,
            forcing: None,
            options: Default::default(),
        };
        let (u, _) = solve_quasilinear(&g, &p).unwrap();
        for k in 0..=g.nt {
            for idx in 0..g.n_nodes() {
                assert_eq!(u.at(k, idx), 0.3);
            }
        }
    }

    #[test]
    fn newton_converges_quadratically_small_source() {
        let g = build_grid(Domain::unit_square(), 0.5, 8, 16).unwrap();
        let law = builtin_law("quasilinear").unwrap();
        let f = BoundaryTrace::from_fn(&g, |t, x| t * t * (x[0] + 2.0 * x[1]));
        let p = QuasilinearProblem {
            law: &law,
            lambda: 0.5,
            source: &f,
            forcing: None,
            options: Default::default(),
        };
        let (_, rep) = solve_quasilinear(&g, &p).unwrap();
        assert!(
            rep.newton_iterations.iter().all(|&n| n <= 5),
            "{:?}",
            rep.newton_iterations
        );
        assert!(rep.max_residual <= 1e-10);
    }

    #[test]
    fn inadmissible_source_rejected() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let law = builtin_law("heat").unwrap();
        let f = BoundaryTrace::from_fn(&g, |t, _| t);
        let p = QuasilinearProblem {
            law: &law,
            lambda: 0.0,
            source: &f,
            forcing: None,
            options: Default::default(),
        };
        assert!(matches!(
            solve_quasilinear(&g, &p),
            Err(Error::Precondition(_))
        ));
    }
}
