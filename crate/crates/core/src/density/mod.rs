//! Direction schemes with exact exponent cancellation, the multilinear functional S_rho,
//! concentration limits, and recovery of the Taylor tensor Q from kernel samples.

mod concentration;
mod recover;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{add, dot, norm, scale, Vec2};
use crate::laws::SymmetricTensor;

pub use concentration::{
    concentration_limit, delta_sweep, reference_integrals, s_rho, scheme_amplitudes,
    schemes_for_samples, verify_density, ConcentrationConfig, ConcentrationReport, DeltaPoint,
    DensityReport,
};
pub use recover::{default_sample_set, kernel_samples, recover_q, KSample};

/// A (possibly space-time dependent) symmetric tensor field Q.
#[derive(Clone)]
pub enum TensorField {
    Constant(SymmetricTensor),
    Func {
        rank: usize,
        f: Arc<dyn Fn(f64, Vec2) -> SymmetricTensor + Send + Sync>,
    },
}

impl TensorField {
    pub fn rank(&self) -> usize {
        match self {
            TensorField::Constant(q) => q.rank,
            TensorField::Func { rank, .. } => *rank,
        }
    }

    pub fn at(&self, t: f64, x: Vec2) -> SymmetricTensor {
        match self {
            TensorField::Constant(q) => q.clone(),
            TensorField::Func { f, .. } => f(t, x),
        }
    }
}

impl std::fmt::Debug for TensorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TensorField::Constant(q) => write!(f, "Constant({q:?})"),
            TensorField::Func { rank, .. } => write!(f, "Func(rank {rank})"),
        }
    }
}

/// Dense row-major expansion of a tensor on R^2 (length 2^rank).
pub fn dense(q: &SymmetricTensor) -> Vec<f64> {
    let m = q.rank;
    (0..1usize << m)
        .map(|flat| {
            let idx: Vec<usize> = (0..m).map(|p| (flat >> (m - 1 - p)) & 1).collect();
            q.get(&idx)
        })
        .collect()
}

/// Contraction of a dense rank-m tensor with m vectors.
#[inline]
pub fn contract(d: &[f64], args: &[Vec2]) -> f64 {
    let m = args.len();
    let mut acc = 0.0;
    for (flat, q) in d.iter().enumerate() {
        let mut w = *q;
        for (p, a) in args.iter().enumerate() {
            w *= a[(flat >> (m - 1 - p)) & 1];
        }
        acc += w;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SchemeMode {
    M1Orthogonal,
    General,
    Split(usize),
}

/// One GO of a scheme: frequency multiplier (times rho) and direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub multiplier: f64,
    pub omega: Vec2,
    pub adjoint: bool,
}

impl Member {
    /// Direction and positive multiplier of the GO actually built.
    pub fn go_direction(&self) -> (Vec2, f64) {
        if self.multiplier < 0.0 {
            (scale(self.omega, -1.0), -self.multiplier)
        } else {
            (self.omega, self.multiplier)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectionScheme {
    pub m: usize,
    pub mode: SchemeMode,
    pub omega1: Vec2,
    pub omega2: Vec2,
    pub omega3: Option<Vec2>,
    pub kappa: Option<f64>,
    pub kappa_tilde: Option<f64>,
    pub kappa_hat: Option<f64>,
    /// m + 1 forward members followed by the adjoint one.
    pub members: Vec<Member>,
}

fn check_unit(w: Vec2, name: &str) -> Result<()> {
    if (norm(w) - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "{name} = {w:?} is not a unit vector"
        )));
    }
    Ok(())
}

fn fwd(multiplier: f64, omega: Vec2) -> Member {
    Member {
        multiplier,
        omega,
        adjoint: false,
    }
}

pub fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// Two forward GO at (rho, w1), (rho, w2); adjoint at (sqrt2 rho, (w1 + w2)/sqrt2).
pub fn scheme_m1(omega1: Vec2, omega2: Vec2) -> Result<DirectionScheme> {
    check_unit(omega1, "omega1")?;
    check_unit(omega2, "omega2")?;
    if dot(omega1, omega2).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "scheme m=1 needs orthogonal directions, w1.w2 = {}",
            dot(omega1, omega2)
        )));
    }
    let w3 = scale(add(omega1, omega2), std::f64::consts::FRAC_1_SQRT_2);
    Ok(DirectionScheme {
        m: 1,
        mode: SchemeMode::M1Orthogonal,
        omega1,
        omega2,
        omega3: Some(w3),
        kappa: None,
        kappa_tilde: None,
        kappa_hat: None,
        members: vec![
            fwd(1.0, omega1),
            fwd(1.0, omega2),
            Member {
                multiplier: 2f64.sqrt(),
                omega: w3,
                adjoint: true,
            },
        ],
    })
}

/// m forward GO at (rho, w1), one at (kappa rho, w2), adjoint at (kappa~ rho, w3).
pub fn scheme_general(m: usize, omega1: Vec2, omega2: Vec2) -> Result<DirectionScheme> {
    check_unit(omega1, "omega1")?;
    check_unit(omega2, "omega2")?;
    if m < 2 {
        return Err(Error::Precondition(
            "the general scheme needs m >= 2".into(),
        ));
    }
    let c = dot(omega1, omega2);
    if c.abs() < 1e-12 || (c.abs() - 1.0).abs() < 1e-12 {
        return Err(Error::Precondition(format!(
            "w1.w2 = {c} is excluded (must avoid -1, 0, 1)"
        )));
    }
    let kappa = -(m as f64 - 1.0) / (2.0 * c);
    let kt = (m as f64 + kappa * kappa).sqrt();
    let w3 = scale(add(scale(omega1, m as f64), scale(omega2, kappa)), 1.0 / kt);
    let mut members: Vec<Member> = (0..m).map(|_| fwd(1.0, omega1)).collect();
    members.push(fwd(kappa, omega2));
    members.push(Member {
        multiplier: kt,
        omega: w3,
        adjoint: true,
    });
    Ok(DirectionScheme {
        m,
        mode: SchemeMode::General,
        omega1,
        omega2,
        omega3: Some(w3),
        kappa: Some(kappa),
        kappa_tilde: Some(kt),
        kappa_hat: None,
        members,
    })
}

/// (s-1) GO at (rho, w1), one at (-(s-1) rho, w1), (m+1-s) at (kappa^ rho, w2), adjoint at
/// (kappa^ (m-s+1) rho, w2). s = m falls back to the general scheme.
pub fn scheme_split(m: usize, s: usize, omega1: Vec2, omega2: Vec2) -> Result<DirectionScheme> {
    check_unit(omega1, "omega1")?;
    check_unit(omega2, "omega2")?;
    if s == m && m >= 2 {
        return scheme_general(m, omega1, omega2);
    }
    if s < 2 || s + 1 > m {
        return Err(Error::Precondition(format!(
            "split index s = {s} must lie in 2..={} (or equal m)",
            m.saturating_sub(1)
        )));
    }
    if (dot(omega1, omega2).abs() - 1.0).abs() < 1e-12 {
        return Err(Error::Precondition("split scheme needs w1 != ±w2".into()));
    }
    let a = (s - 1) as f64;
    let b = (m - s + 1) as f64;
    let kh = ((a + a * a) / (b * b - b)).sqrt();
    let mut members: Vec<Member> = (0..s - 1).map(|_| fwd(1.0, omega1)).collect();
    members.push(fwd(-a, omega1));
    for _ in 0..m + 1 - s {
        members.push(fwd(kh, omega2));
    }
    members.push(Member {
        multiplier: kh * b,
        omega: omega2,
        adjoint: true,
    });
    Ok(DirectionScheme {
        m,
        mode: SchemeMode::Split(s),
        omega1,
        omega2,
        omega3: None,
        kappa: None,
        kappa_tilde: None,
        kappa_hat: Some(kh),
        members,
    })
}

/// Totals of the time and space exponents (per rho^2 and rho) with the magnitude scale they
/// should be compared against.
#[derive(Clone, Copy, Debug)]
pub struct ExponentTotals {
    pub t: f64,
    pub x: Vec2,
    pub scale: f64,
}

impl ExponentTotals {
    pub fn cancels(&self, rel: f64) -> bool {
        self.t.abs() <= rel * self.scale && norm(self.x) <= rel * self.scale
    }
}

pub fn exponent_totals(members: &[Member]) -> ExponentTotals {
    let mut t = 0.0;
    let mut x = [0.0, 0.0];
    let mut s = 0.0;
    for mb in members {
        let sg = if mb.adjoint { -1.0 } else { 1.0 };
        let (dir, mu) = mb.go_direction();
        t += sg * mu * mu;
        x = add(x, scale(dir, sg * mu));
        s += mu * mu + mu;
    }
    ExponentTotals { t, x, scale: s }
}

impl DirectionScheme {
    pub fn forward(&self) -> &[Member] {
        &self.members[..self.members.len() - 1]
    }

    pub fn adjoint(&self) -> &Member {
        &self.members[self.members.len() - 1]
    }

    pub fn exponent_totals(&self) -> ExponentTotals {
        exponent_totals(&self.members)
    }

    /// Index s of the kernel K_s the scheme's limit isolates.
    pub fn kernel_index(&self) -> usize {
        match self.mode {
            SchemeMode::M1Orthogonal => 1,
            SchemeMode::General => self.m,
            SchemeMode::Split(s) => s,
        }
    }

    /// c with lim rho^-(m+1) S_rho = c * int a0^-(m+1)/2 K_s F.
    pub fn limit_prefactor(&self) -> f64 {
        let m = self.m;
        let mf = factorial(m);
        match self.mode {
            SchemeMode::M1Orthogonal => 1.0,
            SchemeMode::General => mf * self.kappa.unwrap_or(0.0),
            SchemeMode::Split(s) => {
                -mf * (s - 1) as f64 * self.kappa_hat.unwrap_or(0.0).powi((m - s + 1) as i32)
            }
        }
    }

    pub fn kernel(&self, q: &SymmetricTensor, b0: Vec2) -> f64 {
        kernel_k(self.m, self.kernel_index(), self.omega1, self.omega2, q, b0)
    }
}

/// K_s = s Q(w1^{s-1}, w2^{m+1-s})(B.w1) + (m-s+1) Q(w1^s, w2^{m-s})(B.w2).
pub fn kernel_k(
    m: usize,
    s: usize,
    omega1: Vec2,
    omega2: Vec2,
    q: &SymmetricTensor,
    b0: Vec2,
) -> f64 {
    let args = |n1: usize, n2: usize| -> Vec<Vec2> {
        std::iter::repeat_n(omega1, n1)
            .chain(std::iter::repeat_n(omega2, n2))
            .collect()
    };
    let mut k = 0.0;
    if s >= 1 {
        k += s as f64 * q.eval2(&args(s - 1, m + 1 - s)) * dot(b0, omega1);
    }
    if s <= m {
        k += (m - s + 1) as f64 * q.eval2(&args(s, m - s)) * dot(b0, omega2);
    }
    k
}

/// m! sum_k Q(v_{-k})(B.v_k) for the scaled directions v_j = multiplier_j * dir_j; equal to
/// prefactor * K_s for every scheme.
pub fn leading_kernel(scheme: &DirectionScheme, q: &SymmetricTensor, b0: Vec2) -> f64 {
    let v: Vec<Vec2> = scheme
        .forward()
        .iter()
        .map(|mb| scale(mb.omega, mb.multiplier))
        .collect();
    let mut acc = 0.0;
    for k in 0..v.len() {
        let others: Vec<Vec2> = v
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, w)| *w)
            .collect();
        acc += q.eval2(&others) * dot(b0, v[k]);
    }
    factorial(scheme.m) * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_dir;

    #[test]
    fn m1_scheme_examples() {
        let s = scheme_m1([1.0, 0.0], [0.0, 1.0]).unwrap();
        let w3 = s.omega3.unwrap();
        assert!((w3[0] - 0.5f64.sqrt()).abs() < 1e-15 && (w3[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(s.exponent_totals().cancels(1e-14));
        assert!(scheme_m1([1.0, 0.0], angle_dir(1.4707963267948966)).is_err());
    }

    #[test]
    fn general_scheme_example() {
        let w1 = [1.0, 0.0];
        let w2 = angle_dir(std::f64::consts::FRAC_PI_3);
        let s = scheme_general(3, w1, w2).unwrap();
        assert!((s.kappa.unwrap() + 2.0).abs() < 1e-12);
        assert!((s.kappa_tilde.unwrap() - 7f64.sqrt()).abs() < 1e-12);
        let w3 = s.omega3.unwrap();
        assert!((norm(w3) - 1.0).abs() < 1e-14);
        assert!(s.exponent_totals().cancels(1e-14));
        assert!(scheme_general(2, w1, [0.0, 1.0]).is_err());
    }

    #[test]
    fn split_scheme_example() {
        let s = scheme_split(3, 2, [1.0, 0.0], angle_dir(0.7)).unwrap();
        assert!((s.kappa_hat.unwrap() - 1.0).abs() < 1e-15);
        assert!(s.exponent_totals().cancels(1e-14));
        assert!(scheme_split(3, 1, [1.0, 0.0], [0.0, 1.0]).is_err());
        assert_eq!(
            scheme_split(3, 3, [1.0, 0.0], angle_dir(0.7)).unwrap().mode,
            SchemeMode::General
        );
    }

    #[test]
    fn kernel_examples() {
        let q = SymmetricTensor::from_fn(2, 2, |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        assert_eq!(kernel_k(2, 2, [1.0, 0.0], [0.0, 1.0], &q, [1.0, 0.0]), 0.0);
        assert_eq!(kernel_k(2, 2, [1.0, 0.0], [0.0, 1.0], &q, [0.0, 0.0]), 0.0);
        let q1 = SymmetricTensor::from_components(1, 2, vec![0.3, -0.8]).unwrap();
        let (w1, w2, b) = ([0.6, 0.8], [-0.8, 0.6], [1.2, 0.4]);
        let want = dot(w1, [0.3, -0.8]) * dot(w2, b) + dot(w2, [0.3, -0.8]) * dot(w1, b);
        assert!((kernel_k(1, 1, w1, w2, &q1, b) - want).abs() < 1e-15);
    }

    #[test]
    fn closed_form_prefactor_matches_leading_kernel() {
        let q3 = SymmetricTensor::from_components(3, 2, vec![0.4, -0.2, 0.7, 1.1]).unwrap();
        let q2 = SymmetricTensor::from_components(2, 2, vec![0.4, -0.2, 0.7]).unwrap();
        let q1 = SymmetricTensor::from_components(1, 2, vec![0.4, -0.2]).unwrap();
        let b = [0.3, 0.9];
        let (w1, w2) = ([1.0, 0.0], angle_dir(1.1));
        for (s, q) in [
            (scheme_m1([1.0, 0.0], [0.0, 1.0]).unwrap(), &q1),
            (scheme_general(2, w1, w2).unwrap(), &q2),
            (scheme_general(3, w1, w2).unwrap(), &q3),
            (scheme_split(3, 2, w1, w2).unwrap(), &q3),
        ] {
            let a = leading_kernel(&s, q, b);
            let c = s.limit_prefactor() * s.kernel(q, b);
            assert!(
                (a - c).abs() < 1e-12 * (1.0 + a.abs()),
                "{:?}: {a} vs {c}",
                s.mode
            );
        }
    }

    #[test]
    fn dense_contraction_matches_eval() {
        let q = SymmetricTensor::from_components(3, 2, vec![0.4, -0.2, 0.7, 1.1]).unwrap();
        let args = [[0.3, -0.5], [1.2, 0.1], [-0.7, 0.4]];
        assert!((contract(&dense(&q), &args) - q.eval2(&args)).abs() < 1e-14);
    }
}
