//! Higher-order linearization: mixed divided differences, first and second order linearized
//! fields, the leading multilinear source and the integral identity between two laws.

use rayon::prelude::*;

use crate::dtn::boundary_pairing;
use crate::error::{Error, Result};
use crate::geometry::{dot, SpaceTimeGrid, Vec2};
use crate::laws::CoefficientLaw;
use crate::pde::{
    central_gradient, flux_trace, laplacian, solve_linear_adjoint, solve_linear_forward,
    solve_quasilinear, BoundaryTrace, FluxMode, NewtonOptions, QuasilinearProblem, ScalarField,
    Source,
};

#[derive(Clone, Debug)]
pub struct MultiSourceConfig {
    pub lambda: f64,
    /// g_1 ... g_{m+1}
    pub sources: Vec<BoundaryTrace>,
    pub step: f64,
    pub options: NewtonOptions,
}

impl MultiSourceConfig {
    pub fn new(lambda: f64, sources: Vec<BoundaryTrace>, step: f64) -> Self {
        MultiSourceConfig {
            lambda,
            sources,
            step,
            options: NewtonOptions {
                tol: 1e-13,
                ..Default::default()
            },
        }
    }

    /// m, the linearization order (number of sources minus one).
    pub fn order(&self) -> usize {
        self.sources.len().saturating_sub(1)
    }
}

/// Mixed first-order difference of the solutions and of the boundary fluxes.
#[derive(Clone, Debug)]
pub struct DividedDifference {
    pub field: ScalarField,
    pub flux: BoundaryTrace,
    pub step: f64,
}

/// h^{-(m+1)} sum over corners sigma in {0,1}^{m+1} of (-1)^{m+1-|sigma|} u_{h sigma}.
pub fn divided_difference_order(
    grid: &SpaceTimeGrid,
    cfg: &MultiSourceConfig,
    law: &CoefficientLaw,
) -> Result<DividedDifference> {
    let n = cfg.sources.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "at least one source is required".into(),
        ));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step must be positive, got {}",
            cfg.step
        )));
    }
    for g in &cfg.sources {
        g.check_shape(grid)?;
    }
    let corners: Vec<u32> = (0..(1u32 << n)).collect();
    let solve_corner = |mask: u32| -> Result<(ScalarField, BoundaryTrace)> {
        let mut f = BoundaryTrace::zeros(grid);
        for (i, g) in cfg.sources.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for (d, v) in f.data.iter_mut().zip(&g.data) {
                    *d += cfg.step * v;
                }
            }
        }
        let p = QuasilinearProblem {
            law,
            lambda: cfg.lambda,
            source: &f,
            forcing: None,
            options: cfg.options,
        };
        let (u, _) = solve_quasilinear(grid, &p).map_err(|e| Error::Corner {
            corner: (0..n).map(|i| ((mask >> i) & 1) as u8).collect(),
            source: Box::new(e),
        })?;
        let flux = flux_trace(grid, &u, FluxMode::Quasilinear(&law.a))?;
        Ok((u, flux))
    };
    let results: Vec<Result<(ScalarField, BoundaryTrace)>> =
        corners.par_iter().map(|&m| solve_corner(m)).collect();
    let mut field = ScalarField::zeros(grid);
    let mut flux = BoundaryTrace::zeros(grid);
    let scale = cfg.step.powi(-(n as i32));
    // fixed summation order over corners
    for (mask, r) in corners.iter().zip(results) {
        let (u, fl) = r?;
        let ones = mask.count_ones() as usize;
        let sign = if (n - ones).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        field.axpy(sign * scale, &u);
        for (d, v) in flux.data.iter_mut().zip(&fl.data) {
            *d += sign * scale * v;
        }
    }
    Ok(DividedDifference {
        field,
        flux,
        step: cfg.step,
    })
}

/// Halves the step from `cfg.step` until successive differences agree to `rel_tol` (relative
/// max norm) or `min_step` is reached. Returns the finest difference and the step history.
pub fn divided_difference_adaptive(
    grid: &SpaceTimeGrid,
    cfg: &MultiSourceConfig,
    law: &CoefficientLaw,
    rel_tol: f64,
    min_step: f64,
) -> Result<(DividedDifference, Vec<(f64, f64)>)> {
    let mut c = cfg.clone();
    let mut prev = divided_difference_order(grid, &c, law)?;
    let mut history = Vec::new();
    while c.step * 0.5 >= min_step {
        c.step *= 0.5;
        let next = divided_difference_order(grid, &c, law)?;
        let scale = next.field.max_abs().max(1e-300);
        let change = next.field.sub(&prev.field).max_abs() / scale;
        history.push((c.step, change));
        prev = next;
        if change <= rel_tol {
            break;
        }
    }
    Ok((prev, history))
}

/// v solving v_t - a(t, lambda) Lap v + B(t, x, lambda) . grad v = 0, v = g on Sigma, v(0) = 0.
pub fn first_linearization(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    g: &BoundaryTrace,
) -> Result<ScalarField> {
    let a0 = |t: f64| law.a.value(t, lambda);
    let b0 = |t: f64, x: Vec2| law.convection.frozen(t, x, lambda);
    solve_linear_forward(grid, &a0, Some(&b0), Some(g), Source::Zero)
}

/// Backward companion: -w_t - a Lap w - div(B w) = 0, w = g on Sigma, w(T) = 0.
pub fn adjoint_linearization(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    g: &BoundaryTrace,
) -> Result<ScalarField> {
    let a0 = |t: f64| law.a.value(t, lambda);
    let b0 = |t: f64, x: Vec2| law.convection.frozen(t, x, lambda);
    solve_linear_adjoint(grid, &a0, Some(&b0), Some(g), Source::Zero)
}

/// Source of the second-order system: w_t - a Lap w + B . grad w = H with
/// H = a_lambda Lap(v1 v2) - (d_tau B . grad v1) v2 - (d_tau B . grad v2) v1
///     - (grad_xi b . grad v1)(B . grad v2) - (grad_xi b . grad v2)(B . grad v1).
/// The Laplacian of the product is the five-point one, which is what the face-averaged
/// divergence form produces at second order.
pub fn second_order_source(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    v1: &ScalarField,
    v2: &ScalarField,
) -> Result<ScalarField> {
    v1.check_shape(grid)?;
    v2.check_shape(grid)?;
    let mut out = ScalarField::zeros(grid);
    let mut prod = vec![0.0; grid.n_nodes()];
    for k in 0..=grid.nt {
        let t = grid.time(k);
        let (s1, s2) = (v1.slice(k), v2.slice(k));
        for (p, (a, b)) in prod.iter_mut().zip(s1.iter().zip(s2)) {
            *p = a * b;
        }
        let a_tau = law.a.dlambda(t, lambda);
        let o = out.slice_mut(k);
        for &idx in grid.interior() {
            let x = grid.coords(idx);
            let g1 = central_gradient(grid, s1, idx);
            let g2 = central_gradient(grid, s2, idx);
            let bvec = law.convection.vector.value(t, x, lambda);
            let dtb = law.convection.dtau_at_zero(t, x, lambda);
            let q = law.convection.b.taylor(1, t, x, lambda)?;
            let qv = [q.get(&[0]), q.get(&[1])];
            o[idx] = a_tau * laplacian(grid, &prod, idx)
                - dot(dtb, g1) * s2[idx]
                - dot(dtb, g2) * s1[idx]
                - dot(qv, g1) * dot(bvec, g2)
                - dot(qv, g2) * dot(bvec, g1);
        }
    }
    Ok(out)
}

/// Directly solved second linearization: the system driven by `second_order_source`.
pub fn second_linearization(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    v1: &ScalarField,
    v2: &ScalarField,
) -> Result<ScalarField> {
    let h = second_order_source(grid, law, lambda, v1, v2)?;
    let a0 = |t: f64| law.a.value(t, lambda);
    let b0 = |t: f64, x: Vec2| law.convection.frozen(t, x, lambda);
    solve_linear_forward(grid, &a0, Some(&b0), None, Source::Field(&h))
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// sum over permutations l of (1..m+1) of Q(grad v_{l1}, ..., grad v_{lm}) (B . grad v_{l(m+1)}),
/// where Q is the m-th xi-derivative tensor of `law`'s b at xi = 0. Evaluated as
/// m! sum_k Q(all gradients but the k-th)(B . grad v_k), which is the same sum by symmetry.
pub fn leading_source_hm(
    grid: &SpaceTimeGrid,
    m: usize,
    law: &CoefficientLaw,
    lambda: f64,
    vs: &[&ScalarField],
) -> Result<ScalarField> {
    if vs.len() != m + 1 {
        return Err(Error::Shape(format!(
            "order {m} needs {} fields, got {}",
            m + 1,
            vs.len()
        )));
    }
    for v in vs {
        v.check_shape(grid)?;
    }
    let mf = factorial(m);
    let mut out = ScalarField::zeros(grid);
    for k in 0..=grid.nt {
        let t = grid.time(k);
        let o = out.slice_mut(k);
        for &idx in grid.interior() {
            let x = grid.coords(idx);
            let q = law.convection.b.taylor(m, t, x, lambda)?;
            let bvec = law.convection.vector.value(t, x, lambda);
            let grads: Vec<Vec2> = vs
                .iter()
                .map(|v| central_gradient(grid, v.slice(k), idx))
                .collect();
            let mut acc = 0.0;
            for kk in 0..=m {
                let others: Vec<Vec2> = grads
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != kk)
                    .map(|(_, g)| *g)
                    .collect();
                acc += q.eval2(&others) * dot(bvec, grads[kk]);
            }
            o[idx] = mf * acc;
        }
    }
    Ok(out)
}

/// Both sides of the order-m identity between two laws sharing a, B and lower Taylor data.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    /// int_Sigma (flux_1 - flux_2 of the mixed differences) v_{m+2}.
    pub pairing: f64,
    /// int_M [sum over permutations of Q(grad v ...)(B . grad v)] v_{m+2} with Q = T_1 - T_2.
    pub volume: f64,
}

pub fn mth_order_identity(
    grid: &SpaceTimeGrid,
    cfg: &MultiSourceConfig,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    probe: &BoundaryTrace,
) -> Result<IdentityReport> {
    let m = cfg.order();
    let d1 = divided_difference_order(grid, cfg, law1)?;
    let d2 = divided_difference_order(grid, cfg, law2)?;
    let pairing = boundary_pairing(grid, &d1.flux.sub(&d2.flux), probe)?;
    let volume = volume_side(grid, m, law1, law2, cfg.lambda, &cfg.sources, probe)?;
    Ok(IdentityReport { pairing, volume })
}

/// Volume side only (used when the pairing side is computed elsewhere).
pub fn volume_side(
    grid: &SpaceTimeGrid,
    m: usize,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    sources: &[BoundaryTrace],
    probe: &BoundaryTrace,
) -> Result<f64> {
    let vs: Vec<ScalarField> = sources
        .par_iter()
        .map(|g| first_linearization(grid, law1, lambda, g))
        .collect::<Result<_>>()?;
    let vref: Vec<&ScalarField> = vs.iter().collect();
    let w = adjoint_linearization(grid, law1, lambda, probe)?;
    let h1 = leading_source_hm(grid, m, law1, lambda, &vref)?;
    let h2 = leading_source_hm(grid, m, law2, lambda, &vref)?;
    let diff = h1.sub(&h2);
    let integrand = ScalarField {
        nt: diff.nt,
        n_nodes: diff.n_nodes,
        data: diff.data.iter().zip(&w.data).map(|(a, b)| a * b).collect(),
    };
    Ok(integrand.integrate(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::laws::{builtin_law, ConvectionLaw, DiffusionLaw, ScalarLaw, VectorLaw};

    #[test]
    fn zero_sources_give_zero() {
        let g = build_grid(Domain::unit_square(), 0.5, 8, 8).unwrap();
        let law = builtin_law("quasilinear").unwrap();
        let cfg = MultiSourceConfig::new(0.2, vec![BoundaryTrace::zeros(&g); 2], 1e-2);
        let d = divided_difference_order(&g, &cfg, &law).unwrap();
        assert_eq!(d.field.max_abs(), 0.0);
    }

    #[test]
    fn linear_law_has_no_second_order_response() {
        let g = build_grid(Domain::unit_square(), 0.5, 8, 8).unwrap();
        let law = CoefficientLaw::new(
            "lin",
            DiffusionLaw::Constant { value: 1.0 },
            ConvectionLaw::linear(VectorLaw::Constant { value: [0.5, 0.2] }),
        );
        let g1 = BoundaryTrace::from_fn(&g, |t, x| t * t * x[0]);
        let g2 = BoundaryTrace::from_fn(&g, |t, x| t * t * x[1] * x[1]);
        let cfg = MultiSourceConfig::new(0.0, vec![g1, g2], 1e-2);
        let d = divided_difference_order(&g, &cfg, &law).unwrap();
        assert!(d.field.max_abs() < 1e-6, "{}", d.field.max_abs());
    }

    #[test]
    fn leading_source_hand_expansion() {
        let g = build_grid(Domain::unit_square(), 0.5, 4, 4).unwrap();
        let c = [0.3, -0.7];
        let bv = [1.5, 0.5];
        let law = CoefficientLaw::new(
            "lin-b",
            DiffusionLaw::Constant { value: 1.0 },
            ConvectionLaw {
                b: ScalarLaw::linear(c),
                vector: VectorLaw::Constant { value: bv },
            },
        );
        let v1 = ScalarField::from_fn(&g, |t, x| t + x[0] * x[0]);
        let v2 = ScalarField::from_fn(&g, |_, x| x[0] + 3.0 * x[1]);
        let h = leading_source_hm(&g, 1, &law, 0.0, &[&v1, &v2]).unwrap();
        let idx = g.index(2, 2);
        let g1 = central_gradient(&g, v1.slice(1), idx);
        let g2 = central_gradient(&g, v2.slice(1), idx);
        let want = dot(c, g1) * dot(bv, g2) + dot(c, g2) * dot(bv, g1);
        assert!((h.at(1, idx) - want).abs() < 1e-12);
        let hs = leading_source_hm(&g, 1, &law, 0.0, &[&v2, &v1]).unwrap();
        assert!(h.sub(&hs).max_abs() < 1e-12);
    }

    #[test]
    fn second_order_source_symmetric_and_vanishing() {
        let g = build_grid(Domain::unit_square(), 0.5, 4, 8).unwrap();
        let law = builtin_law("quasilinear").unwrap();
        let v1 = ScalarField::from_fn(&g, |t, x| t * x[0] * x[1]);
        let v2 = ScalarField::from_fn(&g, |t, x| t * t + x[1]);
        let a = second_order_source(&g, &law, 0.3, &v1, &v2).unwrap();
        let b = second_order_source(&g, &law, 0.3, &v2, &v1).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-12);
        let zero = ScalarField::zeros(&g);
        assert_eq!(
            second_order_source(&g, &law, 0.3, &zero, &v2)
                .unwrap()
                .max_abs(),
            0.0
        );
        let heat = builtin_law("heat").unwrap();
        assert_eq!(
            second_order_source(&g, &heat, 0.3, &v1, &v2)
                .unwrap()
                .max_abs(),
            0.0
        );
    }
}
