use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recover::{recover_q, KSample};
use super::{contract, dense, DirectionScheme, TensorField};
use crate::acceptance::linear_fit;
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, SpaceTimeGrid, Vec2};
use crate::go::{Background, GoAnsatz, GoSpec, GridAmplitudes, Sign};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub rhos: Vec<f64>,
    pub t0: f64,
    pub x0: Vec2,
    pub delta: f64,
    pub n1: usize,
    pub with_remainder: bool,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        ConcentrationConfig {
            rhos: vec![100.0, 200.0, 400.0, 800.0, 1600.0],
            t0: 0.5,
            x0: [0.5, 0.5],
            delta: 0.45,
            n1: crate::go::DEFAULT_N1,
            with_remainder: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub m: usize,
    pub omega1: Vec2,
    pub omega2: Vec2,
    pub kernel_index: usize,
    pub prefactor: f64,
    pub rhos: Vec<f64>,
    /// rho^-(m+1) S_rho over the sweep.
    pub scaled: Vec<f64>,
    /// Intercept of the fit against 1/rho.
    pub limit: f64,
    pub slope: f64,
    /// prefactor * int a0^-(m+1)/2 K F by quadrature.
    pub reference: f64,
    /// |limit - reference| / |reference|.
    pub gap: f64,
    /// int a0^-(m+1)/2 F.
    pub pure_f: f64,
    pub delta: f64,
    /// delta^-3 * prefactor * pure_f.
    pub c0: f64,
    pub k_point: f64,
    /// limit / (prefactor * pure_f): a weighted mean of K near (t0, x0).
    pub k_estimate: f64,
    /// Series-only values at the same rho when the sweep includes remainders.
    pub series_scaled: Option<Vec<f64>>,
}

fn key(sign: Sign, dir: Vec2) -> (bool, u64, u64) {
    (sign == Sign::Plus, dir[0].to_bits(), dir[1].to_bits())
}

/// Specs (direction, multiplier) and amplitudes of every member, sharing amplitudes between
/// members that build the same GO direction.
pub fn scheme_amplitudes(
    scheme: &DirectionScheme,
    cfg: &ConcentrationConfig,
    bg: &Background,
    grid: &SpaceTimeGrid,
) -> Result<Vec<(f64, Arc<GridAmplitudes>)>> {
    let mut cache: HashMap<(bool, u64, u64), Arc<GridAmplitudes>> = HashMap::new();
    let mut out = Vec::with_capacity(scheme.members.len());
    for mb in &scheme.members {
        let sign = if mb.adjoint { Sign::Minus } else { Sign::Plus };
        let (dir, mu) = mb.go_direction();
        let amps = match cache.get(&key(sign, dir)) {
            Some(a) => a.clone(),
            None => {
                let mut spec = GoSpec::new(
                    sign,
                    cfg.rhos.first().copied().unwrap_or(2.0) * mu,
                    dir,
                    cfg.t0,
                    cfg.x0,
                    cfg.delta,
                );
                spec.n1 = cfg.n1;
                let a = Arc::new(GridAmplitudes::compute(&spec, bg, grid)?);
                cache.insert(key(sign, dir), a.clone());
                a
            }
        };
        out.push((mu, amps));
    }
    Ok(out)
}

/// Time levels on which every member's amplitude window is active.
fn common_window(amps: &[&GridAmplitudes]) -> Option<(usize, usize)> {
    let lo = amps.iter().map(|a| a.window().0).max()?;
    let hi = amps.iter().map(|a| a.window().1).min()?;
    (lo <= hi).then_some((lo, hi))
}

/// Sum over time levels (fixed order) of time-weighted spatial sums computed in parallel.
fn space_time_sum(
    grid: &SpaceTimeGrid,
    window: (usize, usize),
    f: impl Fn(usize, usize) -> f64 + Sync,
) -> f64 {
    let levels: Vec<f64> = (window.0..=window.1)
        .into_par_iter()
        .map(|k| {
            let mut s = 0.0;
            for idx in 0..grid.n_nodes() {
                if grid.is_active(idx) {
                    let v = f(k, idx);
                    if v != 0.0 {
                        s += grid.cell_weight(idx) * v;
                    }
                }
            }
            grid.time_weight(k) * s
        })
        .collect();
    levels.iter().sum()
}

/// The multilinear functional over m + 1 forward GO and one adjoint GO (last), evaluated with
/// the exponentials cancelled symbolically: sum over permutations of
/// int Q(grad v_l1, ..., grad v_lm)(B0 . grad v_l(m+1)) v_(m+2).
pub fn s_rho(
    q: &TensorField,
    bg: &Background,
    solutions: &[GoAnsatz],
    grid: &SpaceTimeGrid,
) -> Result<f64> {
    let m = q.rank();
    if solutions.len() != m + 2 {
        return Err(Error::Shape(format!(
            "rank {m} needs {} GO solutions, got {}",
            m + 2,
            solutions.len()
        )));
    }
    if m + 1 > 8 {
        return Err(Error::Capability("rank above 7 is not supported".into()));
    }
    let (fwd, adj) = solutions.split_at(m + 1);
    if fwd.iter().any(|s| s.spec.sign != Sign::Plus) || adj[0].spec.sign != Sign::Minus {
        return Err(Error::Refused(
            "expected m + 1 forward GO followed by one adjoint GO".into(),
        ));
    }
    let (mut et, mut ex, mut sc) = (0.0, [0.0, 0.0], 0.0);
    for s in solutions {
        let sg = s.spec.sign.value();
        let r = s.spec.rho;
        et += sg * r * r;
        ex[0] += sg * r * s.spec.omega[0];
        ex[1] += sg * r * s.spec.omega[1];
        sc += r * r;
    }
    if et.abs() > 1e-12 * sc || norm(ex) > 1e-12 * sc {
        return Err(Error::Refused(format!(
            "exponents do not cancel (t total {et:.3e}, x total {ex:?}); refusing to integrate"
        )));
    }
    let Some(window) = common_window(
        &solutions
            .iter()
            .map(|s| s.amplitudes.as_ref())
            .collect::<Vec<_>>(),
    ) else {
        return Ok(0.0);
    };
    let qconst = match q {
        TensorField::Constant(t) => Some(dense(t)),
        TensorField::Func { .. } => None,
    };
    let a0 = &solutions[0].amplitudes.a0;
    let f = |k: usize, idx: usize| -> f64 {
        let wa = adj[0].weighted(k, idx);
        if wa == 0.0 {
            return 0.0;
        }
        let t = grid.time(k);
        let x = grid.coords(idx);
        let b = bg.b(t, x);
        let sa = 1.0 / a0[k].sqrt();
        let mut g = [[0.0; 2]; 8];
        let mut any = false;
        for (j, s) in fwd.iter().enumerate() {
            let w = s.weighted(k, idx);
            let gw = s.weighted_grad(grid, k, idx);
            let c = s.spec.rho * sa * w;
            g[j] = [c * s.spec.omega[0] + gw[0], c * s.spec.omega[1] + gw[1]];
            any |= g[j] != [0.0, 0.0];
        }
        if !any {
            return 0.0;
        }
        let qd_owned;
        let qd = match &qconst {
            Some(d) => d,
            None => {
                qd_owned = dense(&q.at(t, x));
                &qd_owned
            }
        };
        let mut acc = 0.0;
        let mut args = [[0.0; 2]; 8];
        for kk in 0..=m {
            let mut p = 0;
            for (j, gj) in g.iter().enumerate().take(m + 1) {
                if j != kk {
                    args[p] = *gj;
                    p += 1;
                }
            }
            acc += contract(qd, &args[..m]) * dot(b, g[kk]);
        }
        acc * wa
    };
    Ok(super::factorial(m) * space_time_sum(grid, window, f))
}

/// (prefactor * int a0^-(m+1)/2 K F, int a0^-(m+1)/2 F) with F the product of leading amplitudes.
pub fn reference_integrals(
    scheme: &DirectionScheme,
    q: &TensorField,
    bg: &Background,
    amps: &[&GridAmplitudes],
    grid: &SpaceTimeGrid,
) -> (f64, f64) {
    let Some(window) = common_window(amps) else {
        return (0.0, 0.0);
    };
    let m = scheme.m;
    let a0 = &amps[0].a0;
    let f_of = |k: usize, idx: usize| -> f64 {
        let mut f = a0[k].powf(-((m + 1) as f64) / 2.0);
        for a in amps {
            f *= a.leading(k, idx);
            if f == 0.0 {
                return 0.0;
            }
        }
        f
    };
    let kf = space_time_sum(grid, window, |k, idx| {
        let f = f_of(k, idx);
        if f == 0.0 {
            return 0.0;
        }
        let (t, x) = (grid.time(k), grid.coords(idx));
        f * scheme.kernel(&q.at(t, x), bg.b(t, x))
    });
    let pf = space_time_sum(grid, window, f_of);
    (scheme.limit_prefactor() * kf, pf)
}

/// Sweep rho, fit rho^-(m+1) S_rho against 1/rho, and compare the intercept with the quadrature
/// reference.
pub fn concentration_limit(
    scheme: &DirectionScheme,
    q: &TensorField,
    bg: &Background,
    grid: &SpaceTimeGrid,
    cfg: &ConcentrationConfig,
) -> Result<ConcentrationReport> {
    if q.rank() != scheme.m {
        return Err(Error::Shape(format!(
            "Q has rank {} but the scheme has m = {}",
            q.rank(),
            scheme.m
        )));
    }
    if !scheme.exponent_totals().cancels(1e-12) {
        return Err(Error::Refused("scheme exponents do not cancel".into()));
    }
    if cfg.rhos.len() < 2 {
        return Err(Error::InvalidConfig(
            "the rho sweep needs at least two values".into(),
        ));
    }
    let members = scheme_amplitudes(scheme, cfg, bg, grid)?;
    let m = scheme.m;
    let mut series = Vec::new();
    let mut scaled = Vec::new();
    for &rho in &cfg.rhos {
        let sols = members
            .iter()
            .map(|(mu, a)| {
                GoAnsatz::from_amplitudes(a.clone(), mu * rho, bg, grid, cfg.with_remainder)
            })
            .collect::<Result<Vec<_>>>()?;
        let norm_rho = rho.powi(-((m + 1) as i32));
        scaled.push(s_rho(q, bg, &sols, grid)? * norm_rho);
        if cfg.with_remainder {
            let bare: Vec<GoAnsatz> = sols
                .into_iter()
                .map(|s| GoAnsatz {
                    remainder: None,
                    ..s
                })
                .collect();
            series.push(s_rho(q, bg, &bare, grid)? * norm_rho);
        }
    }
    let inv: Vec<f64> = cfg.rhos.iter().map(|r| 1.0 / r).collect();
    let (limit, slope) = linear_fit(&inv, &scaled);
    let refs: Vec<&GridAmplitudes> = members.iter().map(|(_, a)| a.as_ref()).collect();
    let (reference, pure_f) = reference_integrals(scheme, q, bg, &refs, grid);
    let prefactor = scheme.limit_prefactor();
    let k_point = scheme.kernel(&q.at(cfg.t0, cfg.x0), bg.b(cfg.t0, cfg.x0));
    let norm_f = prefactor * pure_f;
    Ok(ConcentrationReport {
        m,
        omega1: scheme.omega1,
        omega2: scheme.omega2,
        kernel_index: scheme.kernel_index(),
        prefactor,
        rhos: cfg.rhos.clone(),
        scaled,
        limit,
        slope,
        reference,
        gap: (limit - reference).abs() / reference.abs(),
        pure_f,
        delta: cfg.delta,
        c0: cfg.delta.powi(-3) * norm_f,
        k_point,
        k_estimate: if norm_f != 0.0 { limit / norm_f } else { 0.0 },
        series_scaled: cfg.with_remainder.then_some(series),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub delta: f64,
    pub reference: f64,
    /// delta^-3 * reference.
    pub scaled_reference: f64,
    pub c0: f64,
    pub k_point: f64,
    /// scaled_reference / (c0 * k_point).
    pub ratio: f64,
}

/// Reference integrals over a sequence of concentration widths (leading amplitudes only).
pub fn delta_sweep(
    scheme: &DirectionScheme,
    q: &TensorField,
    bg: &Background,
    grid: &SpaceTimeGrid,
    cfg: &ConcentrationConfig,
    deltas: &[f64],
) -> Result<Vec<DeltaPoint>> {
    let k_point = scheme.kernel(&q.at(cfg.t0, cfg.x0), bg.b(cfg.t0, cfg.x0));
    deltas
        .iter()
        .map(|&delta| {
            let c = ConcentrationConfig {
                delta,
                n1: 1,
                ..cfg.clone()
            };
            let members = scheme_amplitudes(scheme, &c, bg, grid)?;
            let refs: Vec<&GridAmplitudes> = members.iter().map(|(_, a)| a.as_ref()).collect();
            let (reference, pure_f) = reference_integrals(scheme, q, bg, &refs, grid);
            let scaled_reference = delta.powi(-3) * reference;
            let c0 = delta.powi(-3) * scheme.limit_prefactor() * pure_f;
            Ok(DeltaPoint {
                delta,
                reference,
                scaled_reference,
                c0,
                k_point,
                ratio: scaled_reference / (c0 * k_point),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityReport {
    pub m: usize,
    pub t0: f64,
    pub x0: Vec2,
    pub b0: Vec2,
    pub status: String,
    pub planted: Vec<f64>,
    pub limits: Vec<ConcentrationReport>,
    pub samples: Vec<KSample>,
    pub recovered: Option<Vec<f64>>,
    /// max_c |recovered_c - planted_c| / |planted_c| (absolute error when planted is zero).
    pub max_component_error: Option<f64>,
    pub failure: Option<String>,
}

/// End to end: one concentration limit per sample, K estimates, recovery of Q(t0, x0).
pub fn verify_density(
    q: &TensorField,
    bg: &Background,
    grid: &SpaceTimeGrid,
    cfg: &ConcentrationConfig,
    schemes: &[DirectionScheme],
) -> DensityReport {
    let m = q.rank();
    let b0 = bg.b(cfg.t0, cfg.x0);
    let planted = q.at(cfg.t0, cfg.x0);
    let mut rep = DensityReport {
        m,
        t0: cfg.t0,
        x0: cfg.x0,
        b0,
        status: "running".into(),
        planted: planted.components.clone(),
        limits: vec![],
        samples: vec![],
        recovered: None,
        max_component_error: None,
        failure: None,
    };
    if norm(b0) == 0.0 {
        rep.status = "no information: B0(t0, x0) = 0, so every K vanishes regardless of Q".into();
        return rep;
    }
    for sc in schemes {
        match concentration_limit(sc, q, bg, grid, cfg) {
            Ok(r) => {
                rep.samples.push(KSample {
                    s: sc.kernel_index(),
                    omega1: sc.omega1,
                    omega2: sc.omega2,
                    k: r.k_estimate,
                });
                rep.limits.push(r);
            }
            Err(e) => {
                rep.status = "failed during concentration limits".into();
                rep.failure = Some(e.to_string());
                return rep;
            }
        }
    }
    match recover_q(m, b0, &rep.samples) {
        Ok(rec) => {
            let err = rec
                .components
                .iter()
                .zip(&planted.components)
                .map(|(r, p)| {
                    if *p != 0.0 {
                        (r - p).abs() / p.abs()
                    } else {
                        (r - p).abs()
                    }
                })
                .fold(0.0, f64::max);
            rep.recovered = Some(rec.components);
            rep.max_component_error = Some(err);
            rep.status = "complete".into();
        }
        Err(e) => {
            rep.status = "failed during recovery".into();
            rep.failure = Some(e.to_string());
        }
    }
    rep
}

/// Scheme per sample for a rank-m recovery: m = 1 uses orthogonal pairs, otherwise s = m picks the
/// general scheme and smaller s the split one.
pub fn schemes_for_samples(
    m: usize,
    samples: &[(usize, Vec2, Vec2)],
) -> Result<Vec<DirectionScheme>> {
    samples
        .iter()
        .map(|&(s, w1, w2)| {
            if m == 1 {
                super::scheme_m1(w1, w2)
            } else {
                super::scheme_split(m, s, w1, w2)
            }
        })
        .collect()
}
