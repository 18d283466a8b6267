//! Coefficient laws a(t, lambda), B(t, x, tau), b(t, x, tau, xi) and symmetric tensors.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Vec2};

/// Default finite-difference step in xi for Taylor data without analytic closures.
pub const H_XI: f64 = 1e-3;
/// Default highest supported Taylor order.
pub const M_MAX: usize = 3;

type ScalarFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomDiffusion {
    pub value: ScalarFn2,
    pub dt: Option<ScalarFn2>,
    pub dlambda: Option<ScalarFn2>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionLaw {
    Constant {
        value: f64,
    },
    /// base + slope * t
    AffineTime {
        base: f64,
        slope: f64,
    },
    /// base + amplitude * sin(2 pi t / period)
    Sinusoid {
        base: f64,
        amplitude: f64,
        period: f64,
    },
    /// base + coef * lambda^2
    Quadratic {
        base: f64,
        coef: f64,
    },
    /// Piecewise constant on equal segments of [0, t_final].
    PiecewiseConstant {
        t_final: f64,
        values: Vec<f64>,
    },
    #[serde(skip)]
    Custom(CustomDiffusion),
}

impl fmt::Debug for DiffusionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionLaw::Constant { value } => write!(f, "Constant({value})"),
            DiffusionLaw::AffineTime { base, slope } => write!(f, "AffineTime({base} + {slope} t)"),
            DiffusionLaw::Sinusoid {
                base,
                amplitude,
                period,
            } => {
                write!(f, "Sinusoid({base} + {amplitude} sin(2pi t/{period}))")
            }
            DiffusionLaw::Quadratic { base, coef } => write!(f, "Quadratic({base} + {coef} l^2)"),
            DiffusionLaw::PiecewiseConstant { values, .. } => {
                write!(f, "PiecewiseConstant({values:?})")
            }
            DiffusionLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

impl DiffusionLaw {
    pub fn value(&self, t: f64, lambda: f64) -> f64 {
        match self {
            DiffusionLaw::Constant { value } => *value,
            DiffusionLaw::AffineTime { base, slope } => base + slope * t,
            DiffusionLaw::Sinusoid {
                base,
                amplitude,
                period,
            } => base + amplitude * (2.0 * std::f64::consts::PI * t / period).sin(),
            DiffusionLaw::Quadratic { base, coef } => base + coef * lambda * lambda,
            DiffusionLaw::PiecewiseConstant { t_final, values } => {
                let p = values.len();
                let k = ((t / t_final) * p as f64)
                    .floor()
                    .clamp(0.0, (p - 1) as f64) as usize;
                values[k]
            }
            DiffusionLaw::Custom(c) => (c.value)(t, lambda),
        }
    }

    pub fn dt(&self, t: f64, lambda: f64) -> f64 {
        match self {
            DiffusionLaw::Constant { .. } | DiffusionLaw::Quadratic { .. } => 0.0,
            DiffusionLaw::AffineTime { slope, .. } => *slope,
            DiffusionLaw::Sinusoid {
                amplitude, period, ..
            } => {
                let w = 2.0 * std::f64::consts::PI / period;
                amplitude * w * (w * t).cos()
            }
            DiffusionLaw::PiecewiseConstant { .. } => 0.0,
            DiffusionLaw::Custom(c) => match &c.dt {
                Some(d) => d(t, lambda),
                None => central(|s| (c.value)(s, lambda), t, 1e-6),
            },
        }
    }

    pub fn dlambda(&self, t: f64, lambda: f64) -> f64 {
        match self {
            DiffusionLaw::Quadratic { coef, .. } => 2.0 * coef * lambda,
            DiffusionLaw::Custom(c) => match &c.dlambda {
                Some(d) => d(t, lambda),
                None => central(|l| (c.value)(t, l), lambda, 1e-6),
            },
            _ => 0.0,
        }
    }

    /// Minimum over a sample lattice of [0, t_final] x lambda_range; must be positive.
    pub fn check_positive(&self, t_final: f64, lambda_range: (f64, f64)) -> Result<()> {
        for i in 0..=64 {
            let t = t_final * i as f64 / 64.0;
            for j in 0..=16 {
                let l = lambda_range.0 + (lambda_range.1 - lambda_range.0) * j as f64 / 16.0;
                let v = self.value(t, l);
                if !(v > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "diffusion a({t}, {l}) = {v} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The law frozen at a constant lambda, as a function of time.
    pub fn frozen(&self, lambda: f64) -> impl Fn(f64) -> f64 + '_ {
        move |t| self.value(t, lambda)
    }
}

type VectorFn3 = Arc<dyn Fn(f64, Vec2, f64) -> Vec2 + Send + Sync>;

#[derive(Clone)]
pub struct CustomVector {
    pub value: VectorFn3,
    pub dtau: Option<VectorFn3>,
}

/// The vector factor B(t, x, tau).
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorLaw {
    Zero,
    Constant {
        value: Vec2,
    },
    /// amplitude (1 + time_slope t)(1 + tau_slope tau) exp(-|x - center|^2 / width^2)
    Bump {
        amplitude: Vec2,
        center: Vec2,
        width: f64,
        #[serde(default)]
        time_slope: f64,
        #[serde(default)]
        tau_slope: f64,
    },
    /// rate * (-(y - cy), x - cx)
    Rotating {
        rate: f64,
        center: Vec2,
    },
    Sum {
        parts: Vec<VectorLaw>,
    },
    #[serde(skip)]
    Custom(CustomVector),
}

impl fmt::Debug for VectorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorLaw::Zero => write!(f, "Zero"),
            VectorLaw::Constant { value } => write!(f, "Constant({value:?})"),
            VectorLaw::Bump {
                amplitude,
                center,
                width,
                ..
            } => {
                write!(f, "Bump({amplitude:?} at {center:?}, width {width})")
            }
            VectorLaw::Rotating { rate, center } => write!(f, "Rotating({rate} about {center:?})"),
            VectorLaw::Sum { parts } => write!(f, "Sum({parts:?})"),
            VectorLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl VectorLaw {
    pub fn value(&self, t: f64, x: Vec2, tau: f64) -> Vec2 {
        match self {
            VectorLaw::Zero => [0.0, 0.0],
            VectorLaw::Constant { value } => *value,
            VectorLaw::Bump {
                amplitude,
                center,
                width,
                time_slope,
                tau_slope,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                let s = (1.0 + time_slope * t)
                    * (1.0 + tau_slope * tau)
                    * (-r2 / (width * width)).exp();
                [amplitude[0] * s, amplitude[1] * s]
            }
            VectorLaw::Rotating { rate, center } => {
                [-rate * (x[1] - center[1]), rate * (x[0] - center[0])]
            }
            VectorLaw::Sum { parts } => parts.iter().fold([0.0, 0.0], |acc, p| {
                let v = p.value(t, x, tau);
                [acc[0] + v[0], acc[1] + v[1]]
            }),
            VectorLaw::Custom(c) => (c.value)(t, x, tau),
        }
    }

    pub fn dtau(&self, t: f64, x: Vec2, tau: f64) -> Vec2 {
        match self {
            VectorLaw::Bump {
                amplitude,
                center,
                width,
                time_slope,
                tau_slope,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                let s = (1.0 + time_slope * t) * tau_slope * (-r2 / (width * width)).exp();
                [amplitude[0] * s, amplitude[1] * s]
            }
            VectorLaw::Sum { parts } => parts.iter().fold([0.0, 0.0], |acc, p| {
                let v = p.dtau(t, x, tau);
                [acc[0] + v[0], acc[1] + v[1]]
            }),
            VectorLaw::Custom(c) => match &c.dtau {
                Some(d) => d(t, x, tau),
                None => {
                    let h = 1e-6;
                    let a = (c.value)(t, x, tau + h);
                    let b = (c.value)(t, x, tau - h);
                    [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
                }
            },
            _ => [0.0, 0.0],
        }
    }

    /// Divergence in x by central differences (used only by diagnostics).
    pub fn divergence(&self, t: f64, x: Vec2, tau: f64) -> f64 {
        let h = 1e-5;
        let px = self.value(t, [x[0] + h, x[1]], tau)[0] - self.value(t, [x[0] - h, x[1]], tau)[0];
        let py = self.value(t, [x[0], x[1] + h], tau)[1] - self.value(t, [x[0], x[1] - h], tau)[1];
        (px + py) / (2.0 * h)
    }
}

/// One term coef * prod_i (xi . factors[i]) of a polynomial scalar factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub factors: Vec<Vec2>,
}

type ScalarFn4 = Arc<dyn Fn(f64, Vec2, f64, Vec2) -> f64 + Send + Sync>;
type TaylorFn = Arc<dyn Fn(usize, f64, Vec2, f64) -> SymmetricTensor + Send + Sync>;

#[derive(Clone)]
pub struct CustomScalar {
    pub value: ScalarFn4,
    /// Analytic Taylor tensors at xi = 0 by order, if available.
    pub taylor: Option<TaylorFn>,
}

/// The scalar factor b(t, x, tau, xi) with b(., 0) = 1.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarLaw {
    One,
    /// 1 + sum of monomials of degree >= 1
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// exp(xi . c)
    Exponential {
        c: Vec2,
    },
    #[serde(skip)]
    Custom(CustomScalar),
}

impl fmt::Debug for ScalarLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarLaw::One => write!(f, "One"),
            ScalarLaw::Polynomial { terms } => write!(f, "Polynomial({terms:?})"),
            ScalarLaw::Exponential { c } => write!(f, "Exponential({c:?})"),
            ScalarLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarLaw {
    /// b = 1 + xi . c
    pub fn linear(c: Vec2) -> Self {
        ScalarLaw::Polynomial {
            terms: vec![Monomial {
                coef: 1.0,
                factors: vec![c],
            }],
        }
    }

    /// b = 1 + coef * (xi . c)^k
    pub fn power(coef: f64, c: Vec2, k: usize) -> Self {
        ScalarLaw::Polynomial {
            terms: vec![Monomial {
                coef,
                factors: vec![c; k],
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScalarLaw::Polynomial { terms } = self {
            if terms.iter().any(|m| m.factors.is_empty()) {
                return Err(Error::InvalidConfig(
                    "polynomial scalar factor: constant monomials would break b(xi = 0) = 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64, x: Vec2, tau: f64, xi: Vec2) -> f64 {
        match self {
            ScalarLaw::One => 1.0,
            ScalarLaw::Polynomial { terms } => {
                1.0 + terms
                    .iter()
                    .map(|m| m.coef * m.factors.iter().map(|c| dot(xi, *c)).product::<f64>())
                    .sum::<f64>()
            }
            ScalarLaw::Exponential { c } => dot(xi, *c).exp(),
            ScalarLaw::Custom(cs) => (cs.value)(t, x, tau, xi),
        }
    }

    pub fn grad_xi(&self, t: f64, x: Vec2, tau: f64, xi: Vec2) -> Vec2 {
        match self {
            ScalarLaw::One => [0.0, 0.0],
            ScalarLaw::Polynomial { terms } => {
                let mut g = [0.0, 0.0];
                for m in terms {
                    for (i, ci) in m.factors.iter().enumerate() {
                        let rest: f64 = m
                            .factors
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, c)| dot(xi, *c))
                            .product();
                        g[0] += m.coef * ci[0] * rest;
                        g[1] += m.coef * ci[1] * rest;
                    }
                }
                g
            }
            ScalarLaw::Exponential { c } => {
                let e = dot(xi, *c).exp();
                [c[0] * e, c[1] * e]
            }
            ScalarLaw::Custom(cs) => {
                let h = 1e-6;
                let f = |d: Vec2| (cs.value)(t, x, tau, [xi[0] + d[0], xi[1] + d[1]]);
                [
                    (f([h, 0.0]) - f([-h, 0.0])) / (2.0 * h),
                    (f([0.0, h]) - f([0.0, -h])) / (2.0 * h),
                ]
            }
        }
    }

    pub fn dtau(&self, t: f64, x: Vec2, tau: f64, xi: Vec2) -> f64 {
        match self {
            ScalarLaw::Custom(cs) => central(|s| (cs.value)(t, x, s, xi), tau, 1e-6),
            _ => 0.0,
        }
    }

    /// Whether `taylor` is exact (analytic) at this order.
    pub fn has_analytic_taylor(&self, _order: usize) -> bool {
        match self {
            ScalarLaw::Custom(cs) => cs.taylor.is_some(),
            _ => true,
        }
    }

    /// Rank-k tensor of k-th xi-derivatives of b at xi = 0.
    pub fn taylor(&self, k: usize, t: f64, x: Vec2, tau: f64) -> Result<SymmetricTensor> {
        if k > M_MAX
            && !matches!(
                self,
                ScalarLaw::One | ScalarLaw::Polynomial { .. } | ScalarLaw::Exponential { .. }
            )
        {
            return Err(Error::Capability(format!(
                "Taylor order {k} exceeds the supported order {M_MAX}"
            )));
        }
        match self {
            ScalarLaw::One => Ok(if k == 0 {
                SymmetricTensor::scalar(1.0)
            } else {
                SymmetricTensor::zeros(k, 2)
            }),
            ScalarLaw::Polynomial { terms } => {
                if k == 0 {
                    return Ok(SymmetricTensor::scalar(1.0));
                }
                let mut q = SymmetricTensor::zeros(k, 2);
                for m in terms.iter().filter(|m| m.factors.len() == k) {
                    let sym = SymmetricTensor::symmetric_product(&m.factors);
                    q.axpy(m.coef, &sym);
                }
                Ok(q)
            }
            ScalarLaw::Exponential { c } => Ok(SymmetricTensor::from_fn(k, 2, |idx| {
                idx.iter().map(|&j| c[j]).product()
            })),
            ScalarLaw::Custom(cs) => match &cs.taylor {
                Some(f) => Ok(f(k, t, x, tau)),
                None => Ok(fd_taylor(|xi| (cs.value)(t, x, tau, xi), k, H_XI)),
            },
        }
    }
}

/// Mixed k-th derivative tensor at 0 by central differences with one Richardson step.
pub fn fd_taylor(f: impl Fn(Vec2) -> f64, k: usize, h: f64) -> SymmetricTensor {
    let mixed = |idx: &[usize], h: f64| -> f64 {
        let mut acc = 0.0;
        for mask in 0..(1u32 << k) {
            let mut xi = [0.0, 0.0];
            let mut sign = 1.0;
            for (bit, &j) in idx.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    xi[j] += h;
                } else {
                    xi[j] -= h;
                    sign = -sign;
                }
            }
            acc += sign * f(xi);
        }
        acc / (2.0 * h).powi(k as i32)
    };
    if k == 0 {
        return SymmetricTensor::scalar(f([0.0, 0.0]));
    }
    SymmetricTensor::from_fn(k, 2, |idx| {
        let coarse = mixed(idx, h);
        let fine = mixed(idx, h / 2.0);
        (4.0 * fine - coarse) / 3.0
    })
}

/// Convection law: the product b(t, x, tau, xi) B(t, x, tau).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvectionLaw {
    pub b: ScalarLaw,
    pub vector: VectorLaw,
}

impl ConvectionLaw {
    pub fn zero() -> Self {
        ConvectionLaw {
            b: ScalarLaw::One,
            vector: VectorLaw::Zero,
        }
    }

    pub fn linear(vector: VectorLaw) -> Self {
        ConvectionLaw {
            b: ScalarLaw::One,
            vector,
        }
    }

    pub fn eval(&self, t: f64, x: Vec2, tau: f64, xi: Vec2) -> Vec2 {
        let b = self.b.value(t, x, tau, xi);
        let v = self.vector.value(t, x, tau);
        [b * v[0], b * v[1]]
    }

    /// B at xi = 0.
    pub fn frozen(&self, t: f64, x: Vec2, tau: f64) -> Vec2 {
        self.vector.value(t, x, tau)
    }

    /// tau-derivative of the full coefficient at xi = 0 (b(., 0) = 1 so only B contributes).
    pub fn dtau_at_zero(&self, t: f64, x: Vec2, tau: f64) -> Vec2 {
        self.vector.dtau(t, x, tau)
    }

    /// (partial_xi^beta b)(t, x, tau, 0) B(t, x, tau) for a multi-index beta given as exponents.
    pub fn xi_taylor(&self, beta: &[usize], t: f64, x: Vec2, tau: f64) -> Result<Vec2> {
        if beta.len() != 2 {
            return Err(Error::Shape(format!(
                "multi-index {beta:?} has wrong length"
            )));
        }
        let k: usize = beta.iter().sum();
        if k > M_MAX {
            return Err(Error::Capability(format!(
                "Taylor order {k} exceeds the supported order {M_MAX}"
            )));
        }
        let q = self.b.taylor(k, t, x, tau)?;
        let mut idx = Vec::with_capacity(k);
        for (j, &n) in beta.iter().enumerate() {
            idx.extend(std::iter::repeat_n(j, n));
        }
        let c = q.get(&idx);
        let v = self.vector.value(t, x, tau);
        Ok([c * v[0], c * v[1]])
    }

    /// Checks b(., 0) = 1 on a sample set.
    pub fn check_normalized(&self, t_final: f64, lo: Vec2, hi: Vec2) -> Result<()> {
        self.b.validate()?;
        for i in 0..=8 {
            for j in 0..=8 {
                for k in 0..=4 {
                    let x = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / 8.0,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / 8.0,
                    ];
                    let t = t_final * k as f64 / 4.0;
                    for tau in [-1.0, 0.0, 0.5, 2.0] {
                        let v = self.b.value(t, x, tau, [0.0, 0.0]);
                        if (v - 1.0).abs() > 1e-12 {
                            return Err(Error::InvalidConfig(format!(
                                "b(t={t}, x={x:?}, tau={tau}, 0) = {v} != 1"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A full coefficient law (a, b B).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientLaw {
    #[serde(default)]
    pub name: String,
    pub a: DiffusionLaw,
    pub convection: ConvectionLaw,
}

impl CoefficientLaw {
    pub fn new(name: &str, a: DiffusionLaw, convection: ConvectionLaw) -> Self {
        CoefficientLaw {
            name: name.to_string(),
            a,
            convection,
        }
    }

    pub fn validate(&self, t_final: f64, lambda_range: (f64, f64)) -> Result<()> {
        self.a.check_positive(t_final, lambda_range)?;
        self.convection
            .check_normalized(t_final, [-0.5, -0.5], [1.5, 1.5])
    }
}

/// Named built-in laws for configs and `list-laws`.
pub fn builtin_laws() -> Vec<(&'static str, &'static str, CoefficientLaw)> {
    vec![
        (
            "heat",
            "a = 1, no convection",
            CoefficientLaw::new(
                "heat",
                DiffusionLaw::Constant { value: 1.0 },
                ConvectionLaw::zero(),
            ),
        ),
        (
            "quasilinear",
            "a = 1 + lambda^2/10, b = 1 + xi.(0.3, -0.2), rotating B",
            CoefficientLaw::new(
                "quasilinear",
                DiffusionLaw::Quadratic {
                    base: 1.0,
                    coef: 0.1,
                },
                ConvectionLaw {
                    b: ScalarLaw::linear([0.3, -0.2]),
                    vector: VectorLaw::Rotating {
                        rate: 0.5,
                        center: [0.5, 0.5],
                    },
                },
            ),
        ),
        (
            "bump",
            "a = 1 + 0.2 t, Gaussian bump B, b = 1 + (xi.(0.4, 0.1))^2",
            CoefficientLaw::new(
                "bump",
                DiffusionLaw::AffineTime {
                    base: 1.0,
                    slope: 0.2,
                },
                ConvectionLaw {
                    b: ScalarLaw::power(1.0, [0.4, 0.1], 2),
                    vector: VectorLaw::Bump {
                        amplitude: [0.8, 0.4],
                        center: [0.5, 0.5],
                        width: 0.4,
                        time_slope: 0.0,
                        tau_slope: 0.0,
                    },
                },
            ),
        ),
        (
            "sinusoid",
            "a = 1 + 0.25 sin(2 pi t), no convection",
            CoefficientLaw::new(
                "sinusoid",
                DiffusionLaw::Sinusoid {
                    base: 1.0,
                    amplitude: 0.25,
                    period: 1.0,
                },
                ConvectionLaw::zero(),
            ),
        ),
    ]
}

pub fn builtin_law(name: &str) -> Option<CoefficientLaw> {
    builtin_laws()
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, l)| l)
}

/// Rank-m symmetric tensor on R^n, stored on non-decreasing multi-indices in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricTensor {
    pub rank: usize,
    pub dim: usize,
    pub components: Vec<f64>,
}

/// Non-decreasing multi-indices of length `rank` over `0..dim`, lexicographic.
pub fn sorted_indices(rank: usize, dim: usize) -> Vec<Vec<usize>> {
    fn rec(rank: usize, dim: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == rank {
            out.push(cur.clone());
            return;
        }
        for j in start..dim {
            cur.push(j);
            rec(rank, dim, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(rank, dim, 0, &mut Vec::new(), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

impl SymmetricTensor {
    pub fn zeros(rank: usize, dim: usize) -> Self {
        SymmetricTensor {
            rank,
            dim,
            components: vec![0.0; binomial(dim + rank - 1, rank)],
        }
    }

    pub fn scalar(v: f64) -> Self {
        SymmetricTensor {
            rank: 0,
            dim: 2,
            components: vec![v],
        }
    }

    /// Components from a function of sorted multi-indices.
    pub fn from_fn(rank: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let components = sorted_indices(rank, dim).iter().map(|i| f(i)).collect();
        SymmetricTensor {
            rank,
            dim,
            components,
        }
    }

    pub fn from_components(rank: usize, dim: usize, components: Vec<f64>) -> Result<Self> {
        if components.len() != binomial(dim + rank - 1, rank) {
            return Err(Error::Shape(format!(
                "rank {rank} tensor on R^{dim} needs {} components, got {}",
                binomial(dim + rank - 1, rank),
                components.len()
            )));
        }
        Ok(SymmetricTensor {
            rank,
            dim,
            components,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    fn position(&self, sorted: &[usize]) -> usize {
        // rank of a non-decreasing tuple in lexicographic order
        let mut pos = 0;
        let mut lo = 0;
        for (p, &j) in sorted.iter().enumerate() {
            let remaining = self.rank - p - 1;
            for v in lo..j {
                pos += binomial(self.dim - v + remaining - 1, remaining);
            }
            lo = j;
        }
        pos
    }

    /// Component for an arbitrary (unsorted) index tuple.
    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut s = idx.to_vec();
        s.sort_unstable();
        self.components[self.position(&s)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let mut s = idx.to_vec();
        s.sort_unstable();
        let p = self.position(&s);
        self.components[p] = v;
    }

    pub fn axpy(&mut self, a: f64, other: &SymmetricTensor) {
        for (x, y) in self.components.iter_mut().zip(&other.components) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        SymmetricTensor {
            rank: self.rank,
            dim: self.dim,
            components: self.components.iter().map(|c| a * c).collect(),
        }
    }

    /// sum over permutations sigma of c_{sigma(1)} (x) ... (x) c_{sigma(k)}: the k-th derivative of
    /// prod_i (xi . c_i).
    pub fn symmetric_product(factors: &[Vec2]) -> Self {
        let k = factors.len();
        SymmetricTensor::from_fn(k, 2, |idx| {
            let mut acc = 0.0;
            for perm in permutations(k) {
                acc += perm
                    .iter()
                    .enumerate()
                    .map(|(slot, &f)| factors[f][idx[slot]])
                    .product::<f64>();
            }
            acc
        })
    }

    /// Full multilinear contraction over all index tuples.
    pub fn eval(&self, args: &[&[f64]]) -> Result<f64> {
        if args.len() != self.rank {
            return Err(Error::Shape(format!(
                "rank {} tensor given {} arguments",
                self.rank,
                args.len()
            )));
        }
        if args.iter().any(|a| a.len() != self.dim) {
            return Err(Error::Shape(format!(
                "arguments must have length {}",
                self.dim
            )));
        }
        Ok(self.eval_unchecked(args))
    }

    fn eval_unchecked(&self, args: &[&[f64]]) -> f64 {
        let m = self.rank;
        if m == 0 {
            return self.components[0];
        }
        let total = self.dim.pow(m as u32);
        let mut idx = vec![0usize; m];
        let mut acc = 0.0;
        for flat in 0..total {
            let mut r = flat;
            let mut w = 1.0;
            for p in (0..m).rev() {
                idx[p] = r % self.dim;
                r /= self.dim;
                w *= args[p][idx[p]];
            }
            if w != 0.0 {
                acc += w * self.get(&idx);
            }
        }
        acc
    }

    /// Contraction with 2-vectors.
    pub fn eval2(&self, args: &[Vec2]) -> f64 {
        debug_assert_eq!(args.len(), self.rank);
        let refs: Vec<&[f64]> = args.iter().map(|a| a.as_slice()).collect();
        self.eval_unchecked(&refs)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// All permutations of 0..k in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (0..k).permutations(k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn convection_at_zero_is_vector() {
        let law = ConvectionLaw {
            b: ScalarLaw::linear([0.3, 0.7]),
            vector: VectorLaw::Constant { value: [2.0, -1.0] },
        };
        assert_eq!(law.eval(0.1, [0.2, 0.3], 0.4, [0.0, 0.0]), [2.0, -1.0]);
        let v = law.eval(0.1, [0.2, 0.3], 0.4, [1.0, 2.0]);
        let b = 1.0 + 0.3 + 1.4;
        assert!((v[0] - 2.0 * b).abs() < 1e-14 && (v[1] + b).abs() < 1e-14);
        let z = ConvectionLaw::zero();
        assert_eq!(z.eval(0.0, [0.0, 0.0], 1.0, [3.0, 4.0]), [0.0, 0.0]);
    }

    #[test]
    fn xi_taylor_polynomial() {
        let c = [0.5, -2.0];
        let law = ConvectionLaw {
            b: ScalarLaw::power(1.0, c, 2),
            vector: VectorLaw::Constant { value: [1.0, 3.0] },
        };
        assert_eq!(
            law.xi_taylor(&[0, 0], 0.0, [0.0, 0.0], 0.0).unwrap(),
            [1.0, 3.0]
        );
        for (beta, jk) in [
            ([2usize, 0usize], (0, 0)),
            ([1, 1], (0, 1)),
            ([0, 2], (1, 1)),
        ] {
            let v = law.xi_taylor(&beta, 0.0, [0.0, 0.0], 0.0).unwrap();
            let want = 2.0 * c[jk.0] * c[jk.1];
            assert!((v[0] - want).abs() < 1e-14 && (v[1] - 3.0 * want).abs() < 1e-13);
        }
        assert!(matches!(
            law.xi_taylor(&[4, 0], 0.0, [0.0, 0.0], 0.0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn fd_taylor_matches_exponential() {
        let c = [0.7, -0.4];
        let exact = ScalarLaw::Exponential { c };
        let custom = ScalarLaw::Custom(CustomScalar {
            value: Arc::new(move |_t, _x, _tau, xi: Vec2| (xi[0] * c[0] + xi[1] * c[1]).exp()),
            taylor: None,
        });
        for k in 1..=3 {
            let a = exact.taylor(k, 0.0, [0.0, 0.0], 0.0).unwrap();
            let b = custom.taylor(k, 0.0, [0.0, 0.0], 0.0).unwrap();
            for (x, y) in a.components.iter().zip(&b.components) {
                assert!((x - y).abs() < 1e-6, "order {k}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn tensor_eval_examples() {
        let q = SymmetricTensor::from_components(1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(q.eval2(&[[3.0, 4.0]]), 3.0);
        let id = SymmetricTensor::from_fn(2, 2, |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        let w = [0.6, 0.8];
        assert!((id.eval2(&[w, w]) - 1.0).abs() < 1e-15);
        assert!(matches!(id.eval(&[&[1.0, 0.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn tensor_eval_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for rank in 1..=4 {
            for dim in [2usize, 3] {
                let q = SymmetricTensor::from_fn(rank, dim, |_| rng.random_range(-1.0..1.0));
                let args: Vec<Vec<f64>> = (0..rank)
                    .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let refs: Vec<&[f64]> = args.iter().map(|a| a.as_slice()).collect();
                let fast = q.eval(&refs).unwrap();
                let mut naive = 0.0;
                let mut idx = vec![0usize; rank];
                loop {
                    let mut s = idx.clone();
                    s.sort();
                    let comp = sorted_indices(rank, dim)
                        .iter()
                        .position(|v| *v == s)
                        .unwrap();
                    naive += q.components[comp]
                        * idx
                            .iter()
                            .enumerate()
                            .map(|(p, &j)| args[p][j])
                            .product::<f64>();
                    let mut p = rank;
                    loop {
                        if p == 0 {
                            break;
                        }
                        p -= 1;
                        idx[p] += 1;
                        if idx[p] < dim {
                            break;
                        }
                        idx[p] = 0;
                        if p == 0 {
                            p = usize::MAX;
                            break;
                        }
                    }
                    if p == usize::MAX || idx.iter().all(|&v| v == 0) {
                        break;
                    }
                }
                assert!((fast - naive).abs() < 1e-14, "rank {rank} dim {dim}");
            }
        }
    }

    #[test]
    fn tensor_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = SymmetricTensor::from_fn(3, 2, |_| rng.random_range(-1.0..1.0));
        let u: Vec<Vec2> = (0..3)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let base = q.eval2(&u);
        for p in permutations(3) {
            let v: Vec<Vec2> = p.iter().map(|&i| u[i]).collect();
            assert!((q.eval2(&v) - base).abs() < 1e-14);
        }
    }

    #[test]
    fn positivity_and_normalization() {
        for (_, _, law) in builtin_laws() {
            law.validate(1.0, (-1.0, 1.0)).unwrap();
        }
        let bad = DiffusionLaw::AffineTime {
            base: 0.5,
            slope: -1.0,
        };
        assert!(bad.check_positive(1.0, (0.0, 0.0)).is_err());
    }

    #[test]
    fn time_derivative_consistent() {
        let a = DiffusionLaw::Sinusoid {
            base: 1.0,
            amplitude: 0.25,
            period: 1.0,
        };
        for k in 0..10 {
            let t = k as f64 * 0.1;
            let fd = central(|s| a.value(s, 0.0), t, 1e-4);
            assert!((fd - a.dt(t, 0.0)).abs() < 1e-6);
        }
    }
}
