use std::sync::Arc;

use serde_json::json;

use super::{failed, loglog_slope, Outcome};
use crate::error::Result;
use crate::geometry::{build_grid, Domain};
use crate::go::{
    go_residual, remainder_solve, Background, FrameAmplitudes, GoSpec, GridAmplitudes, Sign,
    EXTENSION_MARGIN,
};
use crate::laws::builtin_law;

/// Time-dependent diffusion and a non-uniform convection bump.
pub fn go_background(domain: &Domain) -> Result<Background> {
    let law = builtin_law("bump").expect("builtin");
    Background::from_law(&law, 0.5, domain, EXTENSION_MARGIN)
}

pub fn criterion_05_transport_hierarchy() -> Outcome {
    let name = "transport hierarchy refinement";
    let run = || -> Result<Outcome> {
        let mut lead = vec![];
        let mut first = vec![];
        let sizes = [32usize, 64, 128];
        for &nx in &sizes {
            let grid = build_grid(Domain::unit_square(), 1.0, 64, nx)?;
            let bg = go_background(&grid.domain)?;
            let mut spec = GoSpec::new(Sign::Plus, 8.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3);
            spec.n1 = 1;
            let amps = FrameAmplitudes::compute(&spec, &bg, &grid)?;
            let r = amps.transport_residuals(&grid);
            lead.push(r.leading);
            first.push(r.hierarchy[0]);
        }
        let ratios = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| w[0] / w[1]).collect() };
        let (rl, rf) = (ratios(&lead), ratios(&first));
        let worst = rl.iter().chain(&rf).cloned().fold(f64::INFINITY, f64::min);
        Ok(Outcome {
            id: 5,
            name: name.into(),
            passed: worst >= 1.6,
            summary: format!("smallest reduction factor per halving {worst:.2} (>= 1.6)"),
            details: json!({"nx": sizes, "leading": lead, "first_order": first,
                            "leading_ratios": rl, "first_order_ratios": rf}),
        })
    };
    run().unwrap_or_else(|e| failed(5, name, e))
}

const SWEEP: [f64; 3] = [8.0, 16.0, 32.0];

fn residual_setup() -> Result<(crate::geometry::SpaceTimeGrid, Background, GoSpec)> {
    let grid = build_grid(Domain::unit_square(), 1.0, 256, 128)?;
    let bg = go_background(&grid.domain)?;
    let spec = GoSpec::new(Sign::Plus, SWEEP[0], [0.6, 0.8], 0.5, [0.5, 0.5], 0.45);
    Ok((grid, bg, spec))
}

pub fn criterion_06_go_residual_order() -> Outcome {
    let name = "GO residual decay order";
    let run = || -> Result<Outcome> {
        let (grid, bg, spec) = residual_setup()?;
        let amps = FrameAmplitudes::compute(&spec, &bg, &grid)?;
        let res = go_residual(&amps, &grid, &SWEEP);
        let order = -loglog_slope(&SWEEP, &res);
        let target = spec.n1 as f64;
        Ok(Outcome {
            id: 6,
            name: name.into(),
            passed: (order - target).abs() <= 0.5,
            summary: format!("fitted decay exponent {order:.3} vs N1 = {target} (tolerance 0.5)"),
            details: json!({"rho": SWEEP, "residual": res, "order": order, "n1": spec.n1}),
        })
    };
    run().unwrap_or_else(|e| failed(6, name, e))
}

pub fn criterion_07_remainder_decay() -> Outcome {
    let name = "remainder decay rho * ||R||";
    let run = || -> Result<Outcome> {
        let (grid, bg, spec) = residual_setup()?;
        let amps = Arc::new(GridAmplitudes::compute(&spec, &bg, &grid)?);
        let mut norms = vec![];
        for &rho in &SWEEP {
            norms.push(remainder_solve(&amps, &bg, &grid, rho)?.l2);
        }
        let scaled: Vec<f64> = norms.iter().zip(&SWEEP).map(|(n, r)| n * r).collect();
        let ratio = scaled.iter().cloned().fold(0.0, f64::max) / scaled[0];
        Ok(Outcome {
            id: 7,
            name: name.into(),
            passed: ratio <= 1.5,
            summary: format!("max rho||R|| / (rho||R|| at rho=8) = {ratio:.3} (<= 1.5)"),
            details: json!({"rho": SWEEP, "remainder_l2": norms, "rho_times_norm": scaled, "ratio": ratio}),
        })
    };
    run().unwrap_or_else(|e| failed(7, name, e))
}
