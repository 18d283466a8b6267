use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtn::{add_noise, dtn_apply};
use crate::error::{Error, Result};
use crate::geometry::SpaceTimeGrid;
use crate::laws::{CoefficientLaw, ConvectionLaw, DiffusionLaw};
use crate::pde::BoundaryTrace;

/// Sources and their measured fluxes around the constant state lambda.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub lambda: f64,
    pub sources: Vec<BoundaryTrace>,
    pub fluxes: Vec<BoundaryTrace>,
}

/// Runs the true law on every source; `noise` is relative to each flux's peak.
pub fn measure_campaign(
    grid: &SpaceTimeGrid,
    law: &CoefficientLaw,
    lambda: f64,
    sources: Vec<BoundaryTrace>,
    noise: f64,
    seed: u64,
) -> Result<Campaign> {
    let fluxes: Result<Vec<BoundaryTrace>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let s = dtn_apply(grid, law, lambda, f)?;
            Ok(if noise > 0.0 {
                add_noise(&s.flux, noise, seed.wrapping_add(i as u64))
            } else {
                s.flux
            })
        })
        .collect();
    Ok(Campaign {
        lambda,
        sources,
        fluxes: fluxes?,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parametrization {
    PiecewiseConstant { segments: usize },
}

impl Parametrization {
    pub fn len(&self) -> usize {
        match self {
            Parametrization::PiecewiseConstant { segments } => *segments,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn law(&self, t_final: f64, theta: &[f64]) -> DiffusionLaw {
        match self {
            Parametrization::PiecewiseConstant { .. } => DiffusionLaw::PiecewiseConstant {
                t_final,
                values: theta.to_vec(),
            },
        }
    }
}

/// Segment averages of a time function (trapezoid, 64 panels per segment).
pub fn segment_means(f: impl Fn(f64) -> f64, t_final: f64, segments: usize) -> Vec<f64> {
    let w = t_final / segments as f64;
    (0..segments)
        .map(|p| {
            let n = 64;
            let h = w / n as f64;
            let s: f64 = (0..=n)
                .map(|i| {
                    let c = if i == 0 || i == n { 0.5 } else { 1.0 };
                    c * f(p as f64 * w + i as f64 * h)
                })
                .sum();
            s * h / w
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReconstructionOptions {
    pub initial: f64,
    pub max_iterations: usize,
    pub tikhonov: f64,
    /// Relative finite-difference step for Jacobian columns.
    pub fd_step: f64,
    /// Stop once the relative update falls below this.
    pub step_tol: f64,
    pub max_halvings: usize,
    pub floor: f64,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            initial: 1.0,
            max_iterations: 20,
            tikhonov: 1e-8,
            fd_step: 1e-4,
            step_tol: 1e-7,
            max_halvings: 12,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub parametrization: Parametrization,
    pub coefficients: Vec<f64>,
    /// Misfit 1/2 sum ||F(theta) - d||^2 per accepted iterate, starting with the initial guess.
    pub misfit_history: Vec<f64>,
    pub iterations: usize,
}

/// Gauss-Newton fit of a(., lambda) to the campaign with the convection law held known.
pub fn reconstruct_a(
    grid: &SpaceTimeGrid,
    convection: &ConvectionLaw,
    campaign: &Campaign,
    param: Parametrization,
    opts: &ReconstructionOptions,
) -> Result<Reconstruction> {
    if param.is_empty() {
        return Err(Error::InvalidConfig(
            "parametrization has no segments".into(),
        ));
    }
    if campaign.sources.len() != campaign.fluxes.len() {
        return Err(Error::Shape(format!(
            "{} sources but {} fluxes",
            campaign.sources.len(),
            campaign.fluxes.len()
        )));
    }
    for f in campaign.sources.iter().chain(&campaign.fluxes) {
        f.check_shape(grid)?;
    }
    // square-root quadrature weights turn the Sigma pairing into a Euclidean norm
    let sw: Vec<f64> = (0..=grid.nt)
        .flat_map(|k| {
            let tw = grid.time_weight(k);
            grid.boundary().iter().map(move |b| (tw * b.weight).sqrt())
        })
        .collect();
    let data: Vec<f64> = campaign
        .fluxes
        .iter()
        .flat_map(|f| f.data.iter().zip(&sw).map(|(v, w)| v * w))
        .collect();
    let predict = |theta: &[f64]| -> Result<Vec<f64>> {
        let law = CoefficientLaw::new("fit", param.law(grid.t_final, theta), convection.clone());
        let out: Result<Vec<Vec<f64>>> = campaign
            .sources
            .par_iter()
            .map(|s| {
                let f = dtn_apply(grid, &law, campaign.lambda, s)?.flux;
                Ok(f.data.iter().zip(&sw).map(|(v, w)| v * w).collect())
            })
            .collect();
        Ok(out?.concat())
    };
    let misfit = |pred: &[f64]| -> f64 {
        0.5 * pred
            .iter()
            .zip(&data)
            .map(|(p, d)| (p - d) * (p - d))
            .sum::<f64>()
    };
    let np = param.len();
    let mut theta = vec![opts.initial; np];
    let mut pred = predict(&theta)?;
    let mut phi = misfit(&pred);
    let mut history = vec![phi];
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let cols: Result<Vec<Vec<f64>>> = (0..np)
            .into_par_iter()
            .map(|p| {
                let h = opts.fd_step * theta[p].abs().max(1.0);
                let mut th = theta.clone();
                th[p] += h;
                let fp = predict(&th)?;
                Ok(fp.iter().zip(&pred).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        let cols = cols?;
        if cols.iter().all(|c| c.iter().all(|v| *v == 0.0)) {
            return Err(Error::Stagnation(
                "flux Jacobian vanishes identically: the campaign carries no information".into(),
            ));
        }
        let j = DMatrix::from_fn(data.len(), np, |i, p| cols[p][i]);
        let r = DVector::from_iterator(data.len(), pred.iter().zip(&data).map(|(p, d)| p - d));
        let lhs = j.transpose() * &j + DMatrix::identity(np, np) * opts.tikhonov;
        let rhs = -(j.transpose() * r);
        let step = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular normal equations".into()))?;
        let scale_th = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| (t + alpha * s).max(opts.floor))
                .collect();
            let tp = predict(&trial)?;
            let tphi = misfit(&tp);
            if tphi < phi {
                accepted = Some((trial, tp, tphi));
                break;
            }
            alpha *= 0.5;
        }
        let rel = step.norm() / scale_th;
        match accepted {
            Some((t, p, m)) => {
                theta = t;
                pred = p;
                phi = m;
                history.push(phi);
                if alpha * rel < opts.step_tol {
                    break;
                }
            }
            // no decrease along a negligible step: the optimum is reached
            None if rel < 1e-4 => break,
            None => {
                return Err(Error::Stagnation(format!(
                    "misfit {phi:.3e} did not decrease after {} halvings",
                    opts.max_halvings
                )))
            }
        }
    }
    Ok(Reconstruction {
        parametrization: param,
        coefficients: theta,
        misfit_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, smooth_step, Domain};
    use crate::laws::VectorLaw;

    fn sources(grid: &SpaceTimeGrid) -> Vec<BoundaryTrace> {
        vec![
            BoundaryTrace::from_fn(grid, |t, x| {
                0.1 * smooth_step((t - 0.1) / 0.2)
                    * (2.0 * std::f64::consts::PI * t).cos()
                    * (std::f64::consts::PI * x[0]).cos()
            }),
            BoundaryTrace::from_fn(grid, |t, x| {
                0.1 * smooth_step((t - 0.1) / 0.2) * (3.0 * std::f64::consts::PI * t).cos() * x[1]
            }),
        ]
    }

    #[test]
    fn constant_in_span_is_recovered() {
        let g = build_grid(Domain::unit_square(), 1.0, 24, 12).unwrap();
        let conv = ConvectionLaw::linear(VectorLaw::Constant { value: [0.3, 0.1] });
        let truth = CoefficientLaw::new("t", DiffusionLaw::Constant { value: 1.3 }, conv.clone());
        let c = measure_campaign(&g, &truth, 0.5, sources(&g), 0.0, 1).unwrap();
        let param = Parametrization::PiecewiseConstant { segments: 1 };
        let rec = reconstruct_a(&g, &conv, &c, param, &ReconstructionOptions::default()).unwrap();
        assert!(
            (rec.coefficients[0] - 1.3).abs() < 1e-3,
            "{:?}",
            rec.coefficients
        );
        assert!(rec.misfit_history.last().unwrap() < &(1e-12 * rec.misfit_history[0]));
    }

    #[test]
    fn zero_sources_stagnate() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        let conv = ConvectionLaw::zero();
        let truth = CoefficientLaw::new("t", DiffusionLaw::Constant { value: 1.3 }, conv.clone());
        let c = measure_campaign(&g, &truth, 0.5, vec![BoundaryTrace::zeros(&g)], 0.0, 1).unwrap();
        let param = Parametrization::PiecewiseConstant { segments: 2 };
        let r = reconstruct_a(&g, &conv, &c, param, &ReconstructionOptions::default());
        assert!(matches!(r, Err(Error::Stagnation(_))));
    }

    #[test]
    fn segment_means_of_sinusoid() {
        let m = segment_means(|t| (2.0 * std::f64::consts::PI * t).sin(), 1.0, 2);
        assert!((m[0] - 2.0 / std::f64::consts::PI).abs() < 1e-3);
        assert!((m[0] + m[1]).abs() < 1e-12);
    }
}
