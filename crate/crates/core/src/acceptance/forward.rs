use serde_json::json;

use super::{failed, loglog_slope, Outcome};
use crate::error::Result;
use crate::geometry::{build_grid, dot, Domain, SpaceTimeGrid, Vec2};
use crate::laws::{builtin_law, CoefficientLaw, ConvectionLaw, DiffusionLaw, ScalarLaw, VectorLaw};
use crate::linearize::{
    divided_difference_order, first_linearization, second_linearization, MultiSourceConfig,
};
use crate::pde::{
    linear_residual, solve_quasilinear, BoundaryTrace, LinearOperator, NewtonOptions,
    QuasilinearProblem, ScalarField, Source,
};

fn phi(x: Vec2) -> (f64, Vec2, f64) {
    let (s, c) = ((1.3 * x[0] + 0.4).sin(), (0.9 * x[1]).cos());
    let v = s * c + 0.5 * x[0] * x[1];
    let g = [
        1.3 * (1.3 * x[0] + 0.4).cos() * c + 0.5 * x[1],
        -0.9 * s * (0.9 * x[1]).sin() + 0.5 * x[0],
    ];
    let lap = -(1.69 + 0.81) * s * c;
    (v, g, lap)
}

/// Max error of the quasilinear solver against u = lambda + s(t) phi(x) with matching forcing.
pub fn manufactured_error(
    law: &CoefficientLaw,
    lambda: f64,
    nx: usize,
    nt: usize,
    t_final: f64,
    s: &(dyn Fn(f64) -> (f64, f64) + Sync),
) -> Result<f64> {
    let grid = build_grid(Domain::unit_square(), t_final, nt, nx)?;
    let exact = |t: f64, x: Vec2| lambda + s(t).0 * phi(x).0;
    let forcing = |t: f64, x: Vec2| {
        let (st, dst) = s(t);
        let (p, gp, lp) = phi(x);
        let u = lambda + st * p;
        let gu = [st * gp[0], st * gp[1]];
        let lu = st * lp;
        dst * p - law.a.value(t, u) * lu - law.a.dlambda(t, u) * dot(gu, gu)
            + dot(law.convection.eval(t, x, u, gu), gu)
    };
    let f = BoundaryTrace::from_fn(&grid, |t, x| exact(t, x) - lambda);
    let p = QuasilinearProblem {
        law,
        lambda,
        source: &f,
        forcing: Some(&forcing),
        options: NewtonOptions {
            require_admissible: false,
            ..Default::default()
        },
    };
    let (u, _) = solve_quasilinear(&grid, &p)?;
    Ok(u.sub(&ScalarField::from_fn(&grid, exact)).max_abs())
}

pub fn criterion_01_forward_convergence() -> Outcome {
    let name = "forward convergence (manufactured quasilinear solution)";
    let run = || -> Result<Outcome> {
        let law = builtin_law("quasilinear").expect("builtin");
        let lin = |t: f64| (t, 1.0);
        let quad = |t: f64| (t * t, 2.0 * t);
        let hs = [16usize, 32, 64];
        let mut space = vec![];
        for &n in &hs {
            space.push(manufactured_error(&law, 0.5, n, 4, 0.5, &lin)?);
        }
        let nts = [8usize, 16, 32];
        let mut time = vec![];
        for &n in &nts {
            time.push(manufactured_error(&law, 0.5, 64, n, 0.5, &quad)?);
        }
        let hx: Vec<f64> = hs.iter().map(|&n| 1.0 / n as f64).collect();
        let ht: Vec<f64> = nts.iter().map(|&n| 0.5 / n as f64).collect();
        let ps = loglog_slope(&hx, &space);
        let pt = loglog_slope(&ht, &time);
        Ok(Outcome {
            id: 1,
            name: name.into(),
            passed: ps >= 1.7 && pt >= 0.9,
            summary: format!("spatial order {ps:.3} (>= 1.7), temporal order {pt:.3} (>= 0.9)"),
            details: json!({"nx": hs, "space_errors": space, "nt": nts, "time_errors": time,
                            "spatial_order": ps, "temporal_order": pt}),
        })
    };
    run().unwrap_or_else(|e| failed(1, name, e))
}

/// Relative L2 residual of e^{rho^2 t + rho x.omega} in the implicit-Euler heat scheme.
pub fn exponential_residual(grid: &SpaceTimeGrid, rho: f64, omega: Vec2) -> Result<f64> {
    let u = ScalarField::from_fn(grid, |t, x| (rho * rho * t + rho * dot(x, omega)).exp());
    let one = |_: f64| 1.0;
    let op = LinearOperator::diffusion_only(&one);
    let r = linear_residual(grid, &op, &u, Source::Zero, false)?;
    // restrict the reference to the levels and nodes where the residual is defined
    let mut ut = ScalarField::zeros(grid);
    for k in 1..=grid.nt {
        for &idx in grid.interior() {
            ut.data[k * ut.n_nodes + idx] = rho * rho * u.at(k, idx);
        }
    }
    Ok(r.l2_norm(grid) / ut.l2_norm(grid))
}

pub fn criterion_02_exact_exponential() -> Outcome {
    let name = "exact exponential solution of the heat scheme";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 1.0, 256, 128)?;
        let rel = exponential_residual(&grid, 2.0, [0.6, 0.8])?;
        let bound = 5.0 * (grid.h * grid.h + grid.dt);
        Ok(Outcome {
            id: 2,
            name: name.into(),
            passed: rel <= bound,
            summary: format!("relative residual {rel:.3e} <= {bound:.3e}"),
            details: json!({"relative_residual": rel, "bound": bound, "rho": 2.0}),
        })
    };
    run().unwrap_or_else(|e| failed(2, name, e))
}

const STEPS: [f64; 4] = [4e-2, 2e-2, 1e-2, 5e-3];

pub fn criterion_03_first_linearization() -> Outcome {
    let name = "first linearization: divided difference vs direct solve";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 0.5, 32, 32)?;
        let law = builtin_law("quasilinear").expect("builtin");
        let lambda = 0.5;
        let g = BoundaryTrace::from_fn(&grid, |t, x| 4.0 * t * t * ((2.0 * x[0]).cos() + x[1]));
        let v = first_linearization(&grid, &law, lambda, &g)?;
        let mut errs = vec![];
        for &h in &STEPS {
            let cfg = MultiSourceConfig::new(lambda, vec![g.clone()], h);
            let d = divided_difference_order(&grid, &cfg, &law)?;
            errs.push(d.field.sub(&v).max_abs());
        }
        let slope = loglog_slope(&STEPS, &errs);
        Ok(Outcome {
            id: 3,
            name: name.into(),
            passed: slope >= 0.8,
            summary: format!("log-log slope {slope:.3} (>= 0.8)"),
            details: json!({"steps": STEPS, "errors": errs, "slope": slope}),
        })
    };
    run().unwrap_or_else(|e| failed(3, name, e))
}

/// A law with every second-order ingredient switched on.
pub fn second_order_law() -> CoefficientLaw {
    CoefficientLaw::new(
        "second-order",
        DiffusionLaw::Quadratic {
            base: 1.0,
            coef: 0.2,
        },
        ConvectionLaw {
            b: ScalarLaw::linear([0.4, -0.3]),
            vector: VectorLaw::Bump {
                amplitude: [0.8, 0.5],
                center: [0.4, 0.6],
                width: 0.5,
                time_slope: 0.3,
                tau_slope: 0.7,
            },
        },
    )
}

pub fn criterion_04_second_linearization() -> Outcome {
    let name = "second linearization: mixed difference vs direct solve";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 0.5, 32, 32)?;
        let law = second_order_law();
        let lambda = 0.5;
        let g1 = BoundaryTrace::from_fn(&grid, |t, x| 4.0 * t * t * (x[0] + 0.5 * x[1] * x[1]));
        let g2 = BoundaryTrace::from_fn(&grid, |t, x| 4.0 * t * t * (2.0 * x[1] + x[0]).cos());
        let v1 = first_linearization(&grid, &law, lambda, &g1)?;
        let v2 = first_linearization(&grid, &law, lambda, &g2)?;
        let w = second_linearization(&grid, &law, lambda, &v1, &v2)?;
        let mut errs = vec![];
        for &h in &STEPS {
            let cfg = MultiSourceConfig::new(lambda, vec![g1.clone(), g2.clone()], h);
            let d = divided_difference_order(&grid, &cfg, &law)?;
            errs.push(d.field.sub(&w).max_abs());
        }
        let slope = loglog_slope(&STEPS, &errs);
        Ok(Outcome {
            id: 4,
            name: name.into(),
            passed: slope >= 0.8,
            summary: format!(
                "log-log slope {slope:.3} (>= 0.8), |w| = {:.3e}",
                w.max_abs()
            ),
            details: json!({"steps": STEPS, "errors": errs, "slope": slope, "w_max": w.max_abs()}),
        })
    };
    run().unwrap_or_else(|e| failed(4, name, e))
}
