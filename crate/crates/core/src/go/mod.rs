//! Geometric-optics solutions e^{±phase}(sum c_l rho^-l + R) of the linearized problem.
//!
//! Amplitudes are built once per (direction, sign, concentration point, width) on a ray-aligned
//! frame and interpolated to the physical grid; they do not depend on rho, so a rho sweep only
//! re-solves the remainder.

mod ansatz;
mod frame;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    chi0, dot, extend_coefficient, perp, ray_integral_forward, Domain, Extension, SpaceTimeGrid,
    Vec2, VectorField,
};
use crate::laws::CoefficientLaw;
use crate::pde::ScalarField;

pub use ansatz::{
    build_go, oscillatory_go, remainder_solve, rho_max, GoAnsatz, GridAmplitudes, OscillatoryGo,
    RemainderReport,
};
pub use frame::{go_residual, transport_solve, Frame, FrameAmplitudes, TransportResiduals};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Parameters of one GO solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoSpec {
    pub sign: Sign,
    pub rho: f64,
    pub omega: Vec2,
    pub t0: f64,
    pub x0: Vec2,
    pub delta: f64,
    pub n1: usize,
}

/// Default truncation order of the amplitude series.
pub const DEFAULT_N1: usize = 2;

/// Truncation order [n/2] + 5, large enough for the Sobolev embedding in the uniqueness argument.
pub fn embedding_n1(dim: usize) -> usize {
    dim / 2 + 5
}

impl GoSpec {
    pub fn new(sign: Sign, rho: f64, omega: Vec2, t0: f64, x0: Vec2, delta: f64) -> Self {
        GoSpec {
            sign,
            rho,
            omega,
            t0,
            x0,
            delta,
            n1: DEFAULT_N1,
        }
    }

    pub fn alpha(&self) -> Vec2 {
        perp(self.omega)
    }

    pub fn validate(&self, t_final: f64) -> Result<()> {
        if ((dot(self.omega, self.omega)).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "omega {:?} is not a unit vector",
                self.omega
            )));
        }
        if !(self.rho > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must exceed 1, got {}",
                self.rho
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.delta < self.t0 && self.delta < t_final - self.t0) {
            return Err(Error::InvalidConfig(format!(
                "delta = {} must be below min(t0, T - t0) with t0 = {}, T = {t_final}",
                self.delta, self.t0
            )));
        }
        if self.n1 < 1 {
            return Err(Error::InvalidConfig(
                "truncation order N1 must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Same amplitudes, different frequency.
    pub fn with_rho(&self, rho: f64) -> Self {
        GoSpec {
            rho,
            ..self.clone()
        }
    }
}

/// The frozen coefficients a0(t) = a(t, lambda) and B0 = B(., ., lambda) with its compact extension.
#[derive(Clone)]
pub struct Background {
    pub domain: Domain,
    pub a0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub da0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub b0: Option<Extension>,
}

/// Default width of the layer in which the extended convection is cut off.
pub const EXTENSION_MARGIN: f64 = 0.25;

impl Background {
    pub fn from_law(
        law: &CoefficientLaw,
        lambda: f64,
        domain: &Domain,
        margin: f64,
    ) -> Result<Self> {
        let (a, a2) = (law.a.clone(), law.a.clone());
        let conv = law.convection.clone();
        let field = Arc::new(move |t: f64, x: Vec2| conv.frozen(t, x, lambda));
        Ok(Background {
            domain: domain.clone(),
            a0: Arc::new(move |t| a.value(t, lambda)),
            da0: Arc::new(move |t| a2.dt(t, lambda)),
            b0: Some(extend_coefficient(domain, field, margin)?),
        })
    }

    /// a0 constant and B0 a constant vector (cut off outside the margin layer).
    pub fn constant(domain: &Domain, a0: f64, b: Vec2, margin: f64) -> Result<Self> {
        let field = Arc::new(move |_: f64, _: Vec2| b);
        Ok(Background {
            domain: domain.clone(),
            a0: Arc::new(move |_| a0),
            da0: Arc::new(|_| 0.0),
            b0: if b == [0.0, 0.0] {
                None
            } else {
                Some(extend_coefficient(domain, field, margin)?)
            },
        })
    }

    pub fn with_field(
        domain: &Domain,
        a0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        da0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        b0: Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>,
        margin: f64,
    ) -> Result<Self> {
        Ok(Background {
            domain: domain.clone(),
            a0,
            da0,
            b0: Some(extend_coefficient(domain, b0, margin)?),
        })
    }

    /// Extended convection field.
    pub fn b(&self, t: f64, x: Vec2) -> Vec2 {
        match &self.b0 {
            Some(e) => e.eval(t, x),
            None => [0.0, 0.0],
        }
    }

    pub fn div_b(&self, t: f64, x: Vec2) -> f64 {
        if self.b0.is_none() {
            return 0.0;
        }
        let e = 1e-5;
        let px = self.b(t, [x[0] + e, x[1]])[0] - self.b(t, [x[0] - e, x[1]])[0];
        let py = self.b(t, [x[0], x[1] + e])[1] - self.b(t, [x[0], x[1] - e])[1];
        (px + py) / (2.0 * e)
    }

    /// Box outside which B0 vanishes (the domain's bounding box when B0 = 0).
    pub fn support_box(&self) -> (Vec2, Vec2) {
        match &self.b0 {
            Some(e) => e.support_box(),
            None => self.domain.bounding_box(),
        }
    }

    /// Potential of the conjugated transport operator.
    pub fn potential(&self, t: f64, x: Vec2, omega: Vec2) -> f64 {
        let a = (self.a0)(t);
        dot(self.b(t, x), omega) / a.sqrt() - (self.da0)(t) * dot(x, omega) / (2.0 * a.powf(1.5))
    }
}

/// sigma (rho^2 t + rho x.omega / sqrt(a0(t))).
pub fn phase(spec: &GoSpec, a0: f64, t: f64, x: Vec2) -> f64 {
    spec.sign.value() * (spec.rho * spec.rho * t + spec.rho * dot(x, spec.omega) / a0.sqrt())
}

/// Log of the amplitude factor e_sigma; the ray integral runs to the exit of the support box.
pub fn log_amplitude_e(sign: Sign, t: f64, x: Vec2, omega: Vec2, bg: &Background) -> Result<f64> {
    let a = (bg.a0)(t);
    let xw = dot(x, omega);
    let integral = match &bg.b0 {
        Some(e) => {
            let (lo, hi) = e.support_box();
            ray_integral_forward(e, x, omega, t, lo, hi, 2e-3)?
        }
        None => 0.0,
    };
    Ok(-sign.value() * ((bg.da0)(t) * xw * xw / (8.0 * a * a) + integral / (2.0 * a)))
}

pub fn amplitude_e(sign: Sign, t: f64, x: Vec2, omega: Vec2, bg: &Background) -> Result<f64> {
    Ok(log_amplitude_e(sign, t, x, omega, bg)?.exp())
}

/// Tube cutoff chi0((x - x0).alpha / delta).
pub fn bump_d(x: Vec2, x0: Vec2, omega: Vec2, delta: f64) -> f64 {
    let a = perp(omega);
    chi0(((x[0] - x0[0]) * a[0] + (x[1] - x0[1]) * a[1]) / delta)
}

/// Time cutoff chi0((t - t0) / delta).
pub fn zeta(t: f64, t0: f64, delta: f64) -> f64 {
    chi0((t - t0) / delta)
}

/// zeta * e_sigma * d on the physical grid, by direct ray integration at every node.
pub fn leading_amplitude(
    spec: &GoSpec,
    bg: &Background,
    grid: &SpaceTimeGrid,
) -> Result<ScalarField> {
    spec.validate(grid.t_final)?;
    let mut out = ScalarField::zeros(grid);
    for k in 0..=grid.nt {
        let t = grid.time(k);
        let z = zeta(t, spec.t0, spec.delta);
        if z == 0.0 {
            continue;
        }
        for idx in 0..grid.n_nodes() {
            if !grid.is_active(idx) {
                continue;
            }
            let x = grid.coords(idx);
            let d = bump_d(x, spec.x0, spec.omega, spec.delta);
            if d == 0.0 {
                continue;
            }
            out.data[k * out.n_nodes + idx] = z * d * amplitude_e(spec.sign, t, x, spec.omega, bg)?;
        }
    }
    Ok(out)
}

/// Gradient at an active node: central where both neighbours are active, one-sided otherwise.
pub fn node_gradient(grid: &SpaceTimeGrid, u: &[f64], idx: usize) -> Vec2 {
    let side = grid.side();
    let (i, j) = grid.ij(idx);
    let h = grid.h;
    let mut g = [0.0; 2];
    for (d, (pos, stride)) in [(i, side), (j, 1)].into_iter().enumerate() {
        let ok = |p: isize| {
            p >= 0
                && (p as usize) < side
                && grid.is_active(idx - pos * stride + p as usize * stride)
        };
        let at = |p: isize| u[idx - pos * stride + p as usize * stride];
        let p = pos as isize;
        g[d] = if ok(p - 1) && ok(p + 1) {
            (at(p + 1) - at(p - 1)) / (2.0 * h)
        } else if ok(p + 1) && ok(p + 2) {
            (-3.0 * at(p) + 4.0 * at(p + 1) - at(p + 2)) / (2.0 * h)
        } else if ok(p - 1) && ok(p - 2) {
            (3.0 * at(p) - 4.0 * at(p - 1) + at(p - 2)) / (2.0 * h)
        } else {
            0.0
        };
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GoSpec {
        GoSpec::new(Sign::Plus, 2.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3)
    }

    #[test]
    fn phase_examples() {
        let mut s = spec();
        s.omega = [0.6, 0.8];
        let x = [0.25 / 0.6, 0.0];
        assert!((phase(&s, 1.0, 0.5, x) - 2.5).abs() < 1e-14);
        s.sign = Sign::Minus;
        assert!((phase(&s, 1.0, 0.5, x) + 2.5).abs() < 1e-14);
        let s = GoSpec { rho: 1.0, ..spec() };
        // a0(t) = 1 + t at t = 3: 3 + 2/2
        assert!((phase(&s, 4.0, 3.0, [2.0, 0.0]) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn amplitude_factors() {
        let dom = Domain::unit_square();
        let bg = Background::constant(&dom, 1.0, [0.0, 0.0], 0.25).unwrap();
        assert_eq!(
            amplitude_e(Sign::Plus, 0.3, [0.2, 0.7], [1.0, 0.0], &bg).unwrap(),
            1.0
        );
        let bg = Background::constant(&dom, 2.0, [0.5, 0.3], 0.25).unwrap();
        let x = [0.3, 0.4];
        let ep = amplitude_e(Sign::Plus, 0.3, x, [1.0, 0.0], &bg).unwrap();
        let em = amplitude_e(Sign::Minus, 0.3, x, [1.0, 0.0], &bg).unwrap();
        assert!((ep * em - 1.0).abs() < 1e-14);
        // flat part 0.7 long, cutoff layer contributes 0.5 * int_0^0.25 chi0(u/0.25) du
        let tail: Vec<f64> = (0..=2000).map(|k| chi0(k as f64 / 2000.0)).collect();
        let layer = 0.25 * crate::geometry::simpson(&tail, 1.0 / 2000.0);
        let want = (-(0.5 * (0.7 + layer)) / 4.0).exp();
        assert!((ep - want).abs() < 1e-8, "{ep} vs {want}");
    }

    #[test]
    fn bump_properties() {
        let om = [0.6, 0.8];
        let x0 = [0.4, 0.5];
        assert_eq!(bump_d(x0, x0, om, 0.2), 1.0);
        for s in [-0.7, 0.1, 2.3] {
            assert_eq!(
                bump_d([x0[0] + s * om[0], x0[1] + s * om[1]], x0, om, 0.2),
                1.0
            );
        }
        let a = perp(om);
        assert_eq!(
            bump_d([x0[0] + 0.2 * a[0], x0[1] + 0.2 * a[1]], x0, om, 0.2),
            0.0
        );
        assert_eq!(zeta(0.5, 0.5, 0.1), 1.0);
        assert_eq!(zeta(0.61, 0.5, 0.1), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(spec().validate(1.0).is_ok());
        assert!(GoSpec {
            delta: 0.6,
            ..spec()
        }
        .validate(1.0)
        .is_err());
        assert!(GoSpec {
            omega: [1.0, 1.0],
            ..spec()
        }
        .validate(1.0)
        .is_err());
        assert_eq!(embedding_n1(2), 6);
    }
}
