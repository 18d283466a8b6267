//! Coefficient recovery: singular-solution probes discriminating two diffusion laws,
//! least-squares reconstruction of a(., lambda), and Fourier-modulated GO pairings for B.

mod fourier;
mod reconstruct;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtn::{boundary_pairing, linearized_dtn};
use crate::error::{Error, Result};
use crate::geometry::{add, dot, norm, scale, smooth_step, sub, unit, Domain, SpaceTimeGrid, Vec2};
use crate::go::node_gradient;
use crate::laws::CoefficientLaw;
use crate::pde::{solve_linear_adjoint, solve_linear_forward, BoundaryTrace, ScalarField, Source};

pub use fourier::{fourier_lattice, fourier_oracle, fourier_probe, FourierPoint, FourierSetup};
pub use reconstruct::{
    measure_campaign, reconstruct_a, segment_means, Campaign, Parametrization, Reconstruction,
    ReconstructionOptions,
};

/// Plateau cutoff on (t0, t1): 1 on [t0 + delta, t1 - delta], smooth transitions of width delta.
pub fn time_cutoff(t: f64, t0: f64, t1: f64, delta: f64) -> f64 {
    if t <= t0 || t >= t1 {
        0.0
    } else if t < t0 + delta {
        smooth_step((t - t0) / delta)
    } else if t > t1 - delta {
        smooth_step((t1 - t) / delta)
    } else {
        1.0
    }
}

/// Fundamental harmonic profile centred at y: ln|x - y| / (2 pi) in two dimensions.
pub fn harmonic_profile(x: Vec2, y: Vec2) -> f64 {
    norm(sub(x, y)).ln() / (2.0 * std::f64::consts::PI)
}

pub fn harmonic_profile_grad(x: Vec2, y: Vec2) -> Vec2 {
    let d = sub(x, y);
    scale(d, 1.0 / (2.0 * std::f64::consts::PI * dot(d, d)))
}

#[derive(Clone, Debug)]
pub struct SingularProbe {
    pub y: Vec2,
    pub r: f64,
    pub t0: f64,
    pub t1: f64,
    pub delta: f64,
    /// Phi_y at every node.
    pub phi: Vec<f64>,
    /// Psi_y = chi(t) Phi_y.
    pub psi: ScalarField,
    pub trace: BoundaryTrace,
}

impl SingularProbe {
    pub fn chi(&self, t: f64) -> f64 {
        time_cutoff(t, self.t0, self.t1, self.delta)
    }
}

/// Largest admissible pole distance: the bounding-box diameter.
pub fn r_max(domain: &Domain) -> f64 {
    let (lo, hi) = domain.bounding_box();
    norm(sub(hi, lo))
}

/// Pole at distance r from the domain, reached by leaving the box centre along `direction`.
pub fn singular_probe(
    grid: &SpaceTimeGrid,
    r: f64,
    direction: Vec2,
    t0: f64,
    t1: f64,
    delta: f64,
) -> Result<SingularProbe> {
    let domain = &grid.domain;
    let rm = r_max(domain);
    if !(r > 0.0 && r < rm) {
        return Err(Error::InvalidConfig(format!("r = {r} outside (0, {rm})")));
    }
    if !(0.0 < t0 && t0 < t1 && t1 < grid.t_final) {
        return Err(Error::InvalidConfig(format!(
            "window ({t0}, {t1}) not inside (0, {})",
            grid.t_final
        )));
    }
    if !(delta > 0.0 && delta < (t1 - t0) / 4.0) {
        return Err(Error::InvalidConfig(format!(
            "delta = {delta} must lie in (0, (t1 - t0)/4)"
        )));
    }
    let dir = unit(direction)?;
    let (lo, hi) = domain.bounding_box();
    let c = scale(add(lo, hi), 0.5);
    let y = pole_along(domain, c, dir, r);
    if domain.contains(y) {
        return Err(Error::Precondition(format!(
            "pole {y:?} lies in the closed domain"
        )));
    }
    let phi: Vec<f64> = (0..grid.n_nodes())
        .map(|idx| {
            if grid.is_active(idx) {
                harmonic_profile(grid.coords(idx), y)
            } else {
                0.0
            }
        })
        .collect();
    let mut psi = ScalarField::zeros(grid);
    for k in 0..=grid.nt {
        let chi = time_cutoff(grid.time(k), t0, t1, delta);
        if chi != 0.0 {
            for (v, p) in psi.slice_mut(k).iter_mut().zip(&phi) {
                *v = chi * p;
            }
        }
    }
    let trace = BoundaryTrace::from_fn(grid, |t, x| {
        time_cutoff(t, t0, t1, delta) * harmonic_profile(x, y)
    });
    Ok(SingularProbe {
        y,
        r,
        t0,
        t1,
        delta,
        phi,
        psi,
        trace,
    })
}

/// Point c + s dir with distance exactly r to the domain (bisection on s; convex domains).
fn pole_along(domain: &Domain, c: Vec2, dir: Vec2, r: f64) -> Vec2 {
    let at = |s: f64| add(c, scale(dir, s));
    let (mut lo, mut hi) = (0.0, 1.0);
    while domain.distance_outside(at(hi)) < r {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if domain.distance_outside(at(mid)) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// I = <Lambda_1 Psi - Lambda_2 Psi, Psi> with both linearized DtN maps frozen at lambda.
pub fn discrimination_functional(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    probe: &SingularProbe,
) -> Result<f64> {
    let flux = |law: &CoefficientLaw| {
        let a = law.a.frozen(lambda);
        let b = |t: f64, x: Vec2| law.convection.frozen(t, x, lambda);
        linearized_dtn(grid, &a, Some(&b), &probe.trace)
    };
    let (f1, f2) = rayon::join(|| flux(law1), || flux(law2));
    boundary_pairing(grid, &f1?.sub(&f2?), &probe.trace)
}

/// Volume side of the pairing identity:
/// int (a1 - a2) grad w2 . grad w1* + int ((B1 - B2) . grad w2) w1*,
/// with w2 the forward solution of law 2 and w1* the adjoint solution of law 1, both equal to Psi on Sigma.
pub fn volume_identity(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    probe: &SingularProbe,
) -> Result<f64> {
    let (a1, a2) = (law1.a.frozen(lambda), law2.a.frozen(lambda));
    let b1 = |t: f64, x: Vec2| law1.convection.frozen(t, x, lambda);
    let b2 = |t: f64, x: Vec2| law2.convection.frozen(t, x, lambda);
    let (w2, w1) = rayon::join(
        || solve_linear_forward(grid, &a2, Some(&b2), Some(&probe.trace), Source::Zero),
        || solve_linear_adjoint(grid, &a1, Some(&b1), Some(&probe.trace), Source::Zero),
    );
    let (w2, w1) = (w2?, w1?);
    let levels: Vec<f64> = (0..=grid.nt)
        .into_par_iter()
        .map(|k| {
            let t = grid.time(k);
            let da = a1(t) - a2(t);
            let (s2, s1) = (w2.slice(k), w1.slice(k));
            let mut acc = 0.0;
            for idx in 0..grid.n_nodes() {
                let w = grid.cell_weight(idx);
                if w == 0.0 {
                    continue;
                }
                let x = grid.coords(idx);
                let g2 = node_gradient(grid, s2, idx);
                let g1 = node_gradient(grid, s1, idx);
                let db = sub(b1(t, x), b2(t, x));
                acc += w * (da * dot(g2, g1) + dot(db, g2) * s1[idx]);
            }
            grid.time_weight(k) * acc
        })
        .collect();
    Ok(levels.iter().sum())
}

/// Leading-order prediction of I(r): the volume identity evaluated on Psi itself,
/// int chi^2 dt * int (a1 - a2) |grad Phi|^2 + ((B1 - B2) . grad Phi) Phi, with exact gradients.
pub fn leading_prediction(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    probe: &SingularProbe,
) -> f64 {
    let (a1, a2) = (law1.a.frozen(lambda), law2.a.frozen(lambda));
    let mut acc = 0.0;
    for k in 0..=grid.nt {
        let t = grid.time(k);
        let chi = probe.chi(t);
        if chi == 0.0 {
            continue;
        }
        let da = a1(t) - a2(t);
        let mut s = 0.0;
        for idx in 0..grid.n_nodes() {
            let w = grid.cell_weight(idx);
            if w == 0.0 {
                continue;
            }
            let x = grid.coords(idx);
            let g = harmonic_profile_grad(x, probe.y);
            let db = sub(
                law1.convection.frozen(t, x, lambda),
                law2.convection.frozen(t, x, lambda),
            );
            s += w * (da * dot(g, g) + dot(db, g) * probe.phi[idx]);
        }
        acc += grid.time_weight(k) * chi * chi * s;
    }
    acc
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub value: f64,
    pub prediction: f64,
    pub volume: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscriminationSweep {
    pub t0: f64,
    pub t1: f64,
    pub points: Vec<SweepPoint>,
    pub fixed_sign: bool,
    /// max|I| / min|I| - 1 over the sweep.
    pub variation: f64,
    /// Fitted d log|I| / d log r.
    pub slope: f64,
    pub predicted_variation: f64,
    pub predicted_slope: f64,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub rs: Vec<f64>,
    pub direction: Vec2,
    pub t0: f64,
    pub t1: f64,
    pub delta: f64,
    pub volume_check: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rs: vec![0.4, 0.2, 0.1],
            direction: [-1.0, 0.0],
            t0: 0.2,
            t1: 0.8,
            delta: 0.1,
            volume_check: false,
        }
    }
}

fn variation(v: &[f64]) -> f64 {
    let mx = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mn = v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    mx / mn - 1.0
}

fn log_slope(rs: &[f64], v: &[f64]) -> f64 {
    let lx: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = v.iter().map(|x| x.abs().ln()).collect();
    crate::acceptance::linear_fit(&lx, &ly).1
}

/// r-sweep of the discrimination functional with its leading-order prediction.
pub fn discrimination_sweep(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    cfg: &SweepConfig,
) -> Result<DiscriminationSweep> {
    let points: Result<Vec<SweepPoint>> = cfg
        .rs
        .par_iter()
        .map(|&r| {
            let p = singular_probe(grid, r, cfg.direction, cfg.t0, cfg.t1, cfg.delta)?;
            let value = discrimination_functional(grid, law1, law2, lambda, &p)?;
            let volume = if cfg.volume_check {
                Some(volume_identity(grid, law1, law2, lambda, &p)?)
            } else {
                None
            };
            Ok(SweepPoint {
                r,
                value,
                prediction: leading_prediction(grid, law1, law2, lambda, &p),
                volume,
            })
        })
        .collect();
    let points = points?;
    let vals: Vec<f64> = points.iter().map(|p| p.value).collect();
    let preds: Vec<f64> = points.iter().map(|p| p.prediction).collect();
    let fixed_sign = vals.iter().all(|v| *v > 0.0) || vals.iter().all(|v| *v < 0.0);
    Ok(DiscriminationSweep {
        t0: cfg.t0,
        t1: cfg.t1,
        fixed_sign,
        variation: variation(&vals),
        slope: log_slope(&cfg.rs, &vals),
        predicted_variation: variation(&preds),
        predicted_slope: log_slope(&cfg.rs, &preds),
        points,
    })
}

/// Sweeps over a family of windows [t0, t0 + width] tiling (0, T); used when a1 - a2 changes sign.
pub fn window_scan(
    grid: &SpaceTimeGrid,
    law1: &CoefficientLaw,
    law2: &CoefficientLaw,
    lambda: f64,
    cfg: &SweepConfig,
    windows: usize,
) -> Result<Vec<DiscriminationSweep>> {
    let tf = grid.t_final;
    let width = tf / (windows as f64 + 1.0);
    (0..windows)
        .map(|i| {
            let t0 = width * (i as f64 + 0.5);
            let c = SweepConfig {
                t0,
                t1: t0 + width,
                delta: width / 5.0,
                ..cfg.clone()
            };
            discrimination_sweep(grid, law1, law2, lambda, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::laws::{ConvectionLaw, DiffusionLaw, VectorLaw};
    use crate::pde::laplacian;

    fn grid(n: usize) -> SpaceTimeGrid {
        build_grid(Domain::unit_square(), 1.0, 32, n).unwrap()
    }

    #[test]
    fn log_profile_and_cutoff() {
        assert_eq!(harmonic_profile([1.0, 0.0], [0.0, 0.0]), 0.0);
        assert_eq!(time_cutoff(0.1, 0.2, 0.8, 0.1), 0.0);
        assert_eq!(time_cutoff(0.5, 0.2, 0.8, 0.1), 1.0);
        assert_eq!(time_cutoff(0.3, 0.2, 0.8, 0.1), 1.0);
        let v = time_cutoff(0.25, 0.2, 0.8, 0.1);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn pole_distance_and_vanishing() {
        let g = grid(32);
        for dir in [[-1.0, 0.0], [0.6, 0.8], [1.0, 1.0]] {
            let p = singular_probe(&g, 0.2, dir, 0.2, 0.8, 0.1).unwrap();
            assert!((g.domain.distance_outside(p.y) - 0.2).abs() < 1e-12);
        }
        let p = singular_probe(&g, 0.2, [-1.0, 0.0], 0.2, 0.8, 0.1).unwrap();
        assert!((p.y[0] + 0.2).abs() < 1e-12 && (p.y[1] - 0.5).abs() < 1e-12);
        assert!(p.psi.slice(0).iter().all(|v| *v == 0.0));
        assert!(p.psi.slice(g.nt).iter().all(|v| *v == 0.0));
        assert!(singular_probe(&g, 0.2, [-1.0, 0.0], 0.2, 0.8, 0.2).is_err());
        assert!(singular_probe(&g, 0.0, [-1.0, 0.0], 0.2, 0.8, 0.1).is_err());
    }

    #[test]
    fn discrete_harmonicity_is_second_order() {
        let worst = |n: usize| {
            let g = grid(n);
            let p = singular_probe(&g, 0.3, [-1.0, 0.0], 0.2, 0.8, 0.1).unwrap();
            g.interior()
                .iter()
                .filter(|&&i| norm(sub(g.coords(i), p.y)) > 0.6)
                .map(|&i| laplacian(&g, &p.phi, i).abs())
                .fold(0.0, f64::max)
        };
        let (c, f) = (worst(16), worst(32));
        assert!(c / f > 3.5, "{c} -> {f}");
    }

    fn law(a: f64, b: Vec2) -> CoefficientLaw {
        CoefficientLaw::new(
            "t",
            DiffusionLaw::Constant { value: a },
            ConvectionLaw::linear(VectorLaw::Constant { value: b }),
        )
    }

    #[test]
    fn identical_laws_vanish_and_swap_is_antisymmetric() {
        let g = build_grid(Domain::unit_square(), 1.0, 32, 24).unwrap();
        let p = singular_probe(&g, 0.2, [-1.0, 0.0], 0.2, 0.8, 0.1).unwrap();
        let (l1, l2) = (law(1.0, [0.3, 0.1]), law(1.2, [0.3, 0.1]));
        assert_eq!(
            discrimination_functional(&g, &l1, &l1, 0.0, &p).unwrap(),
            0.0
        );
        let i12 = discrimination_functional(&g, &l1, &l2, 0.0, &p).unwrap();
        let i21 = discrimination_functional(&g, &l2, &l1, 0.0, &p).unwrap();
        assert!(i12 < 0.0);
        assert!((i12 + i21).abs() < 1e-12 * i12.abs());
    }

    #[test]
    fn volume_identity_matches_pairing() {
        let g = build_grid(Domain::unit_square(), 1.0, 64, 48).unwrap();
        let p = singular_probe(&g, 0.3, [-1.0, 0.0], 0.2, 0.8, 0.1).unwrap();
        let (l1, l2) = (law(1.0, [0.3, 0.1]), law(1.2, [-0.2, 0.4]));
        let i = discrimination_functional(&g, &l1, &l2, 0.0, &p).unwrap();
        let v = volume_identity(&g, &l1, &l2, 0.0, &p).unwrap();
        assert!((i - v).abs() < 0.05 * i.abs(), "{i} vs {v}");
    }
}
