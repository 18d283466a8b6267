use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, perp, scale, sub, SpaceTimeGrid, Vec2};
use crate::go::{oscillatory_go, Background, GoSpec, OscillatoryGo, Sign};
use crate::laws::CoefficientLaw;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierSetup {
    pub omega: Vec2,
    pub rho: f64,
    pub delta: f64,
    pub t0: f64,
    pub x0: Vec2,
}

impl Default for FourierSetup {
    fn default() -> Self {
        FourierSetup {
            omega: [1.0, 0.0],
            rho: 200.0,
            delta: 0.45,
            t0: 0.5,
            x0: [0.5, 0.5],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierPoint {
    pub tau: f64,
    pub xi: Vec2,
    /// (re, im)
    pub probe: (f64, f64),
    pub oracle: (f64, f64),
}

fn check_orthogonal(omega: Vec2, xi: Vec2) -> Result<()> {
    if dot(xi, omega).abs() > 1e-12 * (1.0 + norm(xi)) {
        return Err(Error::Precondition(format!(
            "xi = {xi:?} is not orthogonal to omega = {omega:?}"
        )));
    }
    Ok(())
}

fn check_same_diffusion(
    grid: &SpaceTimeGrid,
    l1: &CoefficientLaw,
    l2: &CoefficientLaw,
    lambda: f64,
) -> Result<()> {
    for k in 0..=64 {
        let t = grid.t_final * k as f64 / 64.0;
        let (a, b) = (l1.a.value(t, lambda), l2.a.value(t, lambda));
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "diffusion differs at t = {t}: {a} vs {b}; recover a first"
            )));
        }
    }
    Ok(())
}

fn pair(
    grid: &SpaceTimeGrid,
    l1: &CoefficientLaw,
    l2: &CoefficientLaw,
    lambda: f64,
    w1: &OscillatoryGo,
    w2: &OscillatoryGo,
) -> Complex64 {
    let levels: Vec<Complex64> = (0..=grid.nt)
        .into_par_iter()
        .map(|k| {
            let t = grid.time(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for idx in 0..grid.n_nodes() {
                let cw = grid.cell_weight(idx);
                if cw == 0.0 {
                    continue;
                }
                let x = grid.coords(idx);
                let d = sub(
                    l1.convection.frozen(t, x, lambda),
                    l2.convection.frozen(t, x, lambda),
                );
                if d == [0.0, 0.0] {
                    continue;
                }
                let g = w1.conjugated_grad(grid, k, idx);
                acc += cw * (g[0] * d[0] + g[1] * d[1]) * w2.weighted(grid, k, idx);
            }
            acc * grid.time_weight(k)
        })
        .collect();
    levels.iter().sum::<Complex64>() / w1.spec.rho
}

fn pair_of_solutions(
    grid: &SpaceTimeGrid,
    bg: &Background,
    setup: &FourierSetup,
) -> Result<(OscillatoryGo, OscillatoryGo)> {
    let spec = |sign| {
        GoSpec::new(
            sign,
            setup.rho,
            setup.omega,
            setup.t0,
            setup.x0,
            setup.delta,
        )
    };
    let (p, m) = (spec(Sign::Plus), spec(Sign::Minus));
    p.validate(grid.t_final)?;
    Ok((
        oscillatory_go(&p, bg, grid, 0.0, [0.0, 0.0])?,
        oscillatory_go(&m, bg, grid, 0.0, [0.0, 0.0])?,
    ))
}

/// rho^{-1} int ((B1 - B2) . grad w1) w2 with w1, w2 the leading oscillatory GO pair on `bg`.
#[allow(clippy::too_many_arguments)]
pub fn fourier_probe(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    bg: &Background,
    setup: &FourierSetup,
    tau: f64,
    xi: Vec2,
) -> Result<Complex64> {
    check_orthogonal(setup.omega, xi)?;
    check_same_diffusion(grid, law1, law2, lambda)?;
    let (mut w1, w2) = pair_of_solutions(grid, bg, setup)?;
    w1.tau = tau;
    w1.xi = xi;
    Ok(pair(grid, law1, law2, lambda, &w1, &w2))
}

/// Direct quadrature of int a^{-1/2} ((B1 - B2) . omega) win_+ win_- e^{-i t tau - i x.xi}.
pub fn fourier_oracle(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    setup: &FourierSetup,
    tau: f64,
    xi: Vec2,
) -> Complex64 {
    let tf = grid.t_final;
    let levels: Vec<Complex64> = (0..=grid.nt)
        .into_par_iter()
        .map(|k| {
            let t = grid.time(k);
            let win = (1.0 - (-setup.delta * t).exp()) * (1.0 - (-setup.delta * (tf - t)).exp());
            let w = win / law1.a.value(t, lambda).sqrt();
            let mut acc = Complex64::new(0.0, 0.0);
            for idx in 0..grid.n_nodes() {
                let cw = grid.cell_weight(idx);
                if cw == 0.0 {
                    continue;
                }
                let x = grid.coords(idx);
                let d = sub(
                    law1.convection.frozen(t, x, lambda),
                    law2.convection.frozen(t, x, lambda),
                );
                acc +=
                    cw * dot(d, setup.omega) * Complex64::from_polar(1.0, -(t * tau + dot(x, xi)));
            }
            acc * (w * grid.time_weight(k))
        })
        .collect();
    levels.iter().sum()
}

/// Probe and oracle on the lattice taus x (etas along omega-perp); the GO pair is built once.
#[allow(clippy::too_many_arguments)]
pub fn fourier_lattice(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    bg: &Background,
    setup: &FourierSetup,
    taus: &[f64],
    etas: &[f64],
) -> Result<Vec<FourierPoint>> {
    check_same_diffusion(grid, law1, law2, lambda)?;
    let (w1, w2) = pair_of_solutions(grid, bg, setup)?;
    let alpha = perp(setup.omega);
    let mut out = Vec::with_capacity(taus.len() * etas.len());
    for &tau in taus {
        for &eta in etas {
            let xi = scale(alpha, eta);
            let mut w = w1.clone();
            w.tau = tau;
            w.xi = xi;
            let p = pair(grid, law1, law2, lambda, &w, &w2);
            let o = fourier_oracle(grid, law1, law2, lambda, setup, tau, xi);
            out.push(FourierPoint {
                tau,
                xi,
                probe: (p.re, p.im),
                oracle: (o.re, o.im),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::laws::{ConvectionLaw, DiffusionLaw, VectorLaw};

    fn laws(bump: f64) -> (CoefficientLaw, CoefficientLaw) {
        let base = VectorLaw::Constant { value: [0.2, 0.1] };
        let l1 = CoefficientLaw::new(
            "1",
            DiffusionLaw::Constant { value: 1.0 },
            ConvectionLaw::linear(base.clone()),
        );
        let l2 = CoefficientLaw::new(
            "2",
            DiffusionLaw::Constant { value: 1.0 },
            ConvectionLaw::linear(VectorLaw::Sum {
                parts: vec![
                    base,
                    VectorLaw::Bump {
                        amplitude: [bump, 0.0],
                        center: [0.5, 0.5],
                        width: 0.2,
                        time_slope: 0.0,
                        tau_slope: 0.0,
                    },
                ],
            }),
        );
        (l1, l2)
    }

    #[test]
    fn precondition_and_identical_laws() {
        let g = build_grid(Domain::unit_square(), 1.0, 16, 16).unwrap();
        let (l1, _) = laws(0.5);
        let bg = Background::constant(&g.domain, 1.0, [0.2, 0.1], 0.25).unwrap();
        let s = FourierSetup::default();
        assert!(matches!(
            fourier_probe(&g, &l1, &l1, 0.0, &bg, &s, 0.0, [1.0, 0.0]),
            Err(Error::Precondition(_))
        ));
        let p = fourier_probe(&g, &l1, &l1, 0.0, &bg, &s, 1.0, [0.0, 2.0]).unwrap();
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn conjugate_symmetry_and_oracle() {
        let g = build_grid(Domain::unit_square(), 1.0, 32, 32).unwrap();
        let (l1, l2) = laws(0.5);
        let bg = Background::constant(&g.domain, 1.0, [0.2, 0.1], 0.25).unwrap();
        let s = FourierSetup::default();
        let lat = fourier_lattice(&g, &l1, &l2, 0.0, &bg, &s, &[-3.0, 3.0], &[-2.0, 2.0]).unwrap();
        let (a, b) = (&lat[0], &lat[3]);
        assert!((a.probe.0 - b.probe.0).abs() < 1e-12 * a.probe.0.abs().max(1e-30));
        assert!((a.probe.1 + b.probe.1).abs() < 1e-12 * a.probe.1.abs().max(1e-30));
        for p in &lat {
            let e = ((p.probe.0 - p.oracle.0).powi(2) + (p.probe.1 - p.oracle.1).powi(2)).sqrt();
            let o = (p.oracle.0.powi(2) + p.oracle.1.powi(2)).sqrt();
            assert!(e < 0.1 * o, "{p:?}");
        }
    }
}
