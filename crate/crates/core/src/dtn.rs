//! Dirichlet-to-Neumann measurements around a constant state, and boundary pairings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::SpaceTimeGrid;
use crate::laws::CoefficientLaw;
use crate::pde::linear::{TimeFn, VecFn};
use crate::pde::{
    flux_trace, solve_linear_forward, solve_quasilinear, BoundaryTrace, FluxMode, NewtonOptions,
    QuasilinearProblem, ScalarField, SolveReport, Source,
};

#[derive(Clone, Debug)]
pub struct DtnSample {
    pub lambda: f64,
    pub source: BoundaryTrace,
    pub flux: BoundaryTrace,
    pub report: SolveReport,
}

/// Flux a(t, u) d_nu u of the solution with boundary data lambda + f.
pub fn dtn_apply(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    f: &BoundaryTrace,
) -> Result<DtnSample> {
    dtn_apply_with(grid, law, lambda, f, NewtonOptions::default()).map(|(s, _)| s)
}

/// Like `dtn_apply` but with explicit Newton options; also returns the solution field.
pub fn dtn_apply_with(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    f: &BoundaryTrace,
    options: NewtonOptions,
) -> Result<(DtnSample, ScalarField)> {
    let p = QuasilinearProblem {
        law,
        lambda,
        source: f,
        forcing: None,
        options,
    };
    let (u, report) = solve_quasilinear(grid, &p)?;
    let flux = flux_trace(grid, &u, FluxMode::Quasilinear(&law.a))?;
    Ok((
        DtnSample {
            lambda,
            source: f.clone(),
            flux,
            report,
        },
        u,
    ))
}

/// Applies the source scaled to `max_amplitude`, halving the amplitude on small-data failures.
/// Returns the sample and the amplitude factor actually used.
pub fn dtn_guarded(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    f: &BoundaryTrace,
    max_amplitude: f64,
    max_halvings: usize,
) -> Result<(DtnSample, f64)> {
    let peak = f.max_abs();
    if peak == 0.0 {
        return Ok((dtn_apply(grid, law, lambda, f)?, 0.0));
    }
    let mut scale = max_amplitude / peak;
    let mut last = None;
    for _ in 0..=max_halvings {
        match dtn_apply(grid, law, lambda, &f.scaled(scale)) {
            Ok(s) => return Ok((s, scale)),
            Err(e @ Error::SmallData { .. }) => {
                last = Some(e);
                scale *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Solver("no attempt made".into())))
}

/// Linearized map g -> a0(t) d_nu w with w_t - a0 Lap w + B0 . grad w = 0, w = g on Sigma.
pub fn linearized_dtn(
    grid: &SpaceTimeGrid,
    a0: TimeFn<'_>,
    b0: Option<VecFn<'_>>,
    g: &BoundaryTrace,
) -> Result<BoundaryTrace> {
    let w = solve_linear_forward(grid, a0, b0, Some(g), Source::Zero)?;
    flux_trace(grid, &w, FluxMode::Linear(&|t| a0(t)))
}

/// Trapezoid-in-time, arc-length-in-space quadrature of the product of two traces over Sigma.
pub fn boundary_pairing(grid: &SpaceTimeGrid, a: &BoundaryTrace, b: &BoundaryTrace) -> Result<f64> {
    a.check_shape(grid)?;
    b.check_shape(grid)?;
    let mut acc = 0.0;
    for k in 0..=grid.nt {
        let (sa, sb) = (a.slice(k), b.slice(k));
        let s: f64 = grid
            .boundary()
            .iter()
            .enumerate()
            .map(|(i, node)| node.weight * sa[i] * sb[i])
            .sum();
        acc += grid.time_weight(k) * s;
    }
    Ok(acc)
}

/// Adds Gaussian noise with standard deviation `level * max|trace|`.
pub fn add_noise(trace: &BoundaryTrace, level: f64, seed: u64) -> BoundaryTrace {
    let sigma = level * trace.max_abs();
    if sigma == 0.0 {
        return trace.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive standard deviation");
    let data = trace
        .data
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    BoundaryTrace {
        nt: trace.nt,
        nb: trace.nb,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::laws::builtin_law;

    #[test]
    fn pairing_of_ones_is_measure() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let one = BoundaryTrace::from_fn(&g, |_, _| 1.0);
        assert!((boundary_pairing(&g, &one, &one).unwrap() - 4.0).abs() < 1e-12);
        let zero = BoundaryTrace::zeros(&g);
        assert_eq!(boundary_pairing(&g, &one, &zero).unwrap(), 0.0);
    }

    #[test]
    fn zero_source_zero_flux() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let law = builtin_law("quasilinear").unwrap();
        let s = dtn_apply(&g, &law, 0.4, &BoundaryTrace::zeros(&g)).unwrap();
        assert_eq!(s.flux.max_abs(), 0.0);
    }

    #[test]
    fn noise_is_seeded() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let f = BoundaryTrace::from_fn(&g, |t, x| t * x[0]);
        assert_eq!(add_noise(&f, 0.01, 3), add_noise(&f, 0.01, 3));
        assert_ne!(add_noise(&f, 0.01, 3), add_noise(&f, 0.01, 4));
    }
}
