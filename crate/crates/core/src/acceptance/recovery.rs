use std::f64::consts::PI;

use serde_json::json;

use super::{failed, Outcome};
use crate::error::Result;
use crate::geometry::{build_grid, smooth_step, Domain, SpaceTimeGrid};
use crate::go::{Background, EXTENSION_MARGIN};
use crate::laws::{CoefficientLaw, ConvectionLaw, DiffusionLaw, VectorLaw};
use crate::pde::BoundaryTrace;
use crate::recovery::{
    discrimination_sweep, fourier_lattice, measure_campaign, reconstruct_a, segment_means,
    FourierPoint, FourierSetup, Parametrization, ReconstructionOptions, SweepConfig,
};

fn law(name: &str, a: DiffusionLaw, v: VectorLaw) -> CoefficientLaw {
    CoefficientLaw::new(name, a, ConvectionLaw::linear(v))
}

fn constant(a: f64) -> DiffusionLaw {
    DiffusionLaw::Constant { value: a }
}

/// Discrimination statistics together with the log-profile prediction they are compared to.
pub fn criterion_12_diffusion_discrimination() -> Outcome {
    let name = "diffusion discrimination (n=2)";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 1.0, 128, 128)?;
        let cfg = SweepConfig {
            volume_check: true,
            ..SweepConfig::default()
        };
        let b = VectorLaw::Constant { value: [0.3, 0.1] };
        let diff = discrimination_sweep(
            &grid,
            &law("a=1", constant(1.0), b.clone()),
            &law("a=1.2", constant(1.2), b),
            0.0,
            &cfg,
        )?;
        let conv = discrimination_sweep(
            &grid,
            &law("B=0", constant(1.0), VectorLaw::Zero),
            &law(
                "B=e1/2",
                constant(1.0),
                VectorLaw::Constant { value: [0.5, 0.0] },
            ),
            0.0,
            &cfg,
        )?;
        // |I| ~ r^slope: decay as r shrinks needs a positive slope
        let passed = diff.fixed_sign && diff.variation <= 0.30 && conv.slope >= 0.6;
        let volume_gap = diff
            .points
            .iter()
            .chain(&conv.points)
            .filter_map(|p| p.volume.map(|v| (v - p.value).abs() / p.value.abs()))
            .fold(0.0, f64::max);
        let matches_prediction = diff.fixed_sign
            && (diff.variation - diff.predicted_variation).abs() <= 0.15 * diff.predicted_variation
            && (conv.slope - conv.predicted_slope).abs() <= 0.15
            && conv.predicted_slope < 0.6
            && diff.predicted_variation > 0.30
            && volume_gap <= 0.01;
        Ok(Outcome {
            id: 12,
            name: name.into(),
            passed,
            summary: format!(
                "a1<a2: fixed sign {}, variation {:.0}% (<= 30%; log profile predicts {:.0}%); B1!=B2: fitted slope of |I| in r {:.2} (>= 0.6; log profile predicts {:.2})",
                diff.fixed_sign,
                100.0 * diff.variation,
                100.0 * diff.predicted_variation,
                conv.slope,
                conv.predicted_slope
            ),
            details: json!({
                "diffusion": diff,
                "convection": conv,
                "volume_identity_gap": volume_gap,
                "matches_log_profile_prediction": matches_prediction,
            }),
        })
    };
    run().unwrap_or_else(|e| failed(12, name, e))
}

fn reconstruction_sources(grid: &SpaceTimeGrid) -> Vec<BoundaryTrace> {
    (1..=3)
        .map(|k| {
            let k = k as f64;
            BoundaryTrace::from_fn(grid, move |t, x| {
                0.1 * smooth_step((t - 0.01) / 0.03)
                    * (PI * k * t).cos()
                    * (1.0 + (PI * k * x[0]).cos() * (PI * x[1]).sin())
            })
        })
        .collect()
}

pub fn criterion_13_reconstruct_a() -> Outcome {
    let name = "reconstruct a(t)";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 1.0, 256, 32)?;
        let conv = ConvectionLaw::linear(VectorLaw::Constant { value: [0.3, 0.1] });
        let truth = CoefficientLaw::new(
            "truth",
            DiffusionLaw::Sinusoid {
                base: 1.0,
                amplitude: 0.25,
                period: 1.0,
            },
            conv.clone(),
        );
        let param = Parametrization::PiecewiseConstant { segments: 8 };
        let means = segment_means(|t| truth.a.value(t, 0.5), 1.0, 8);
        let opts = ReconstructionOptions::default();
        let mut errs = vec![];
        let mut fits = vec![];
        for noise in [0.0, 0.01] {
            let c = measure_campaign(&grid, &truth, 0.5, reconstruction_sources(&grid), noise, 13)?;
            let rec = reconstruct_a(&grid, &conv, &c, param, &opts)?;
            errs.push(
                rec.coefficients
                    .iter()
                    .zip(&means)
                    .map(|(a, m)| (a - m).abs() / m)
                    .fold(0.0, f64::max),
            );
            fits.push(rec);
        }
        Ok(Outcome {
            id: 13,
            name: name.into(),
            passed: errs[0] <= 0.05 && errs[1] <= 0.15,
            summary: format!(
                "P=8 worst segment error {:.2}% noiseless (<= 5%), {:.2}% with 1% noise (<= 15%)",
                100.0 * errs[0],
                100.0 * errs[1]
            ),
            details: json!({"segment_means": means, "noiseless": fits[0], "noisy": fits[1]}),
        })
    };
    run().unwrap_or_else(|e| failed(13, name, e))
}

fn lattice_error(lat: &[FourierPoint]) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut omax: f64 = 0.0;
    for p in lat {
        let o = p.oracle.0.hypot(p.oracle.1);
        worst = worst.max((p.probe.0 - p.oracle.0).hypot(p.probe.1 - p.oracle.1) / o);
        omax = omax.max(o);
    }
    (worst, omax)
}

pub fn criterion_14_fourier_probe() -> Outcome {
    let name = "Fourier probe of the B difference";
    let run = || -> Result<Outcome> {
        let grid = build_grid(Domain::unit_square(), 1.0, 128, 64)?;
        let base = VectorLaw::Constant { value: [0.2, 0.1] };
        let l1 = law("common", constant(1.0), base.clone());
        let l2 = law(
            "common+bump",
            constant(1.0),
            VectorLaw::Sum {
                parts: vec![
                    base,
                    VectorLaw::Bump {
                        amplitude: [0.5, 0.0],
                        center: [0.5, 0.5],
                        width: 0.2,
                        time_slope: 0.5,
                        tau_slope: 0.0,
                    },
                ],
            },
        );
        let bg = Background::from_law(&l1, 0.0, &grid.domain, EXTENSION_MARGIN)?;
        let setup = FourierSetup::default();
        let ks: Vec<f64> = (-2..=2).map(|k| k as f64 * PI).collect();
        let lat = fourier_lattice(&grid, &l1, &l2, 0.0, &bg, &setup, &ks, &ks)?;
        let (worst, omax) = lattice_error(&lat);
        let same = fourier_lattice(&grid, &l1, &l1, 0.0, &bg, &setup, &ks, &ks)?;
        let same_max = same
            .iter()
            .map(|p| p.probe.0.hypot(p.probe.1))
            .fold(0.0, f64::max);
        // round-off level of the lattice quadrature
        let floor = 1e-12 * omax;
        let n = ks.len();
        let mut conj: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (&lat[i * n + j], &lat[(n - 1 - i) * n + (n - 1 - j)]);
                conj = conj.max((a.probe.0 - b.probe.0).hypot(a.probe.1 + b.probe.1) / omax);
            }
        }
        Ok(Outcome {
            id: 14,
            name: name.into(),
            passed: worst <= 0.10 && same_max <= 10.0 * floor && conj <= 1e-12,
            summary: format!(
                "5x5 lattice worst relative error {:.2}% (<= 10%); B1=B2 max {same_max:.1e} (<= 10 x floor {floor:.1e}); conjugate symmetry {conj:.1e}",
                100.0 * worst
            ),
            details: json!({"rho": setup.rho, "lattice": lat, "identical_laws_max": same_max,
                            "floor": floor, "conjugate_symmetry": conj}),
        })
    };
    run().unwrap_or_else(|e| failed(14, name, e))
}
