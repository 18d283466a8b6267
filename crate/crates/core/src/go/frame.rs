//! Ray-aligned frame x = x0 + s omega + r alpha on which the amplitude hierarchy is integrated.

use rayon::prelude::*;

use super::{zeta, Background, GoSpec, Sign};
use crate::error::{Error, Result};
use crate::geometry::{chi0, dot, SpaceTimeGrid, Vec2};

#[derive(Clone, Debug)]
pub struct Frame {
    pub omega: Vec2,
    pub alpha: Vec2,
    pub x0: Vec2,
    pub h: f64,
    /// s index of x0 (s = (is - i0) h).
    pub i0: usize,
    pub ns: usize,
    /// r index of the ray through x0 (r = (ir - j0) h).
    pub j0: usize,
    pub nr: usize,
    /// First physical time level stored; the frame holds levels k_lo .. k_lo + nk.
    pub k_lo: usize,
    pub nk: usize,
    pub dt: f64,
    pub t: Vec<f64>,
}

impl Frame {
    /// Frame covering the support box of B0 along omega and the delta-tube across it, on the
    /// time levels where zeta does not vanish.
    pub fn new(spec: &GoSpec, bg: &Background, grid: &SpaceTimeGrid) -> Result<Frame> {
        spec.validate(grid.t_final)?;
        let h = grid.h;
        let omega = spec.omega;
        let alpha = spec.alpha();
        let (lo, hi) = bg.support_box();
        let (dlo, dhi) = grid.domain.bounding_box();
        let corners = [
            lo,
            hi,
            [lo[0], hi[1]],
            [hi[0], lo[1]],
            dlo,
            dhi,
            [dlo[0], dhi[1]],
            [dhi[0], dlo[1]],
        ];
        let proj: Vec<f64> = corners
            .iter()
            .map(|c| (c[0] - spec.x0[0]) * omega[0] + (c[1] - spec.x0[1]) * omega[1])
            .collect();
        let smin = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = 2 * (spec.n1 + 2) + 4;
        let i0 = (-smin / h).ceil().max(0.0) as usize + pad;
        let ns = i0 + (smax / h).ceil().max(0.0) as usize + pad + 1;
        let j0 = (spec.delta / h).ceil() as usize + 4;
        let nr = 2 * j0 + 1;
        let levels: Vec<usize> = (0..=grid.nt)
            .filter(|&k| (grid.time(k) - spec.t0).abs() < spec.delta)
            .collect();
        let (k_lo, nk) = match (levels.first(), levels.last()) {
            (Some(&a), Some(&b)) => (a, b - a + 1),
            _ => {
                return Err(Error::InvalidConfig(
                    "time window contains no grid level; refine nt".into(),
                ))
            }
        };
        let t = (k_lo..k_lo + nk).map(|k| grid.time(k)).collect();
        Ok(Frame {
            omega,
            alpha,
            x0: spec.x0,
            h,
            i0,
            ns,
            j0,
            nr,
            k_lo,
            nk,
            dt: grid.dt,
            t,
        })
    }

    pub fn s(&self, is: usize) -> f64 {
        (is as f64 - self.i0 as f64) * self.h
    }

    pub fn r(&self, ir: usize) -> f64 {
        (ir as f64 - self.j0 as f64) * self.h
    }

    pub fn point(&self, is: usize, ir: usize) -> Vec2 {
        let (s, r) = (self.s(is), self.r(ir));
        [
            self.x0[0] + s * self.omega[0] + r * self.alpha[0],
            self.x0[1] + s * self.omega[1] + r * self.alpha[1],
        ]
    }

    pub fn level_len(&self) -> usize {
        self.ns * self.nr
    }

    pub fn len(&self) -> usize {
        self.nk * self.level_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, k: usize, is: usize, ir: usize) -> usize {
        (k * self.ns + is) * self.nr + ir
    }

    /// Frame coordinates (s, r) of a physical point.
    pub fn coords_of(&self, x: Vec2) -> (f64, f64) {
        let d = [x[0] - self.x0[0], x[1] - self.x0[1]];
        (dot(d, self.omega), dot(d, self.alpha))
    }

    /// Fill a frame field level by level.
    fn build(&self, f: impl Fn(usize, usize, usize) -> f64 + Sync) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(self.level_len())
            .enumerate()
            .for_each(|(k, lvl)| {
                for is in 0..self.ns {
                    for ir in 0..self.nr {
                        lvl[is * self.nr + ir] = f(k, is, ir);
                    }
                }
            });
        out
    }

    #[inline]
    pub fn ds(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let at = |i: usize| u[self.idx(k, i, ir)];
        let h = self.h;
        if is >= 2 && is + 2 < self.ns {
            (at(is - 2) - 8.0 * at(is - 1) + 8.0 * at(is + 1) - at(is + 2)) / (12.0 * h)
        } else if is >= 1 && is + 1 < self.ns {
            (at(is + 1) - at(is - 1)) / (2.0 * h)
        } else if is == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else {
            (3.0 * at(is) - 4.0 * at(is - 1) + at(is - 2)) / (2.0 * h)
        }
    }

    #[inline]
    pub fn dss(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let at = |i: usize| u[self.idx(k, i, ir)];
        let h2 = self.h * self.h;
        if is >= 2 && is + 2 < self.ns {
            (-at(is - 2) + 16.0 * at(is - 1) - 30.0 * at(is) + 16.0 * at(is + 1) - at(is + 2))
                / (12.0 * h2)
        } else if is >= 1 && is + 1 < self.ns {
            (at(is + 1) - 2.0 * at(is) + at(is - 1)) / h2
        } else if is == 0 {
            (at(0) - 2.0 * at(1) + at(2)) / h2
        } else {
            (at(is) - 2.0 * at(is - 1) + at(is - 2)) / h2
        }
    }

    // across the tube the fields vanish near the frame edge, so zero extension is exact
    #[inline]
    fn at_r(&self, u: &[f64], k: usize, is: usize, ir: isize) -> f64 {
        if ir < 0 || ir as usize >= self.nr {
            0.0
        } else {
            u[self.idx(k, is, ir as usize)]
        }
    }

    #[inline]
    pub fn dr(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let j = ir as isize;
        let at = |d: isize| self.at_r(u, k, is, j + d);
        (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * self.h)
    }

    #[inline]
    pub fn drr(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let j = ir as isize;
        let at = |d: isize| self.at_r(u, k, is, j + d);
        (-at(-2) + 16.0 * at(-1) - 30.0 * at(0) + 16.0 * at(1) - at(2)) / (12.0 * self.h * self.h)
    }

    /// Time derivative; the fields vanish to all orders at the window edges.
    #[inline]
    pub fn dt_of(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let at = |d: isize| {
            let kk = k as isize + d;
            if kk < 0 || kk as usize >= self.nk {
                0.0
            } else {
                u[self.idx(kk as usize, is, ir)]
            }
        };
        (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * self.dt)
    }
}

/// Fourth-order cumulative integral of samples f (spacing h) measured from index `anchor`.
pub fn cumulative_from(f: &[f64], h: f64, anchor: usize) -> Vec<f64> {
    let n = f.len();
    let interval = |i: usize| -> f64 {
        // integral over [i, i+1]
        if n < 4 {
            0.5 * h * (f[i] + f[i + 1])
        } else if i == 0 {
            h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2])
        } else if i + 2 >= n {
            h / 12.0 * (5.0 * f[i + 1] + 8.0 * f[i] - f[i - 1])
        } else {
            h / 24.0 * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        }
    };
    let mut out = vec![0.0; n];
    for i in anchor + 1..n {
        out[i] = out[i - 1] + interval(i - 1);
    }
    for i in (0..anchor).rev() {
        out[i] = out[i + 1] - interval(i);
    }
    out
}

/// Solves J_sigma c = g along every ray, c = 0 on the plane s = 0 through x0.
///
/// J_+ = -2 sqrt(a0) d_s + p,  J_- = 2 sqrt(a0) d_s + p, with e the matching integrating factor
/// (J_sigma e = 0).
pub fn transport_solve(frame: &Frame, sign: Sign, a0: &[f64], e: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; frame.len()];
    let (ns, nr) = (frame.ns, frame.nr);
    out.par_chunks_mut(frame.level_len())
        .enumerate()
        .for_each(|(k, lvl)| {
            let sq = a0[k].sqrt();
            let mut f = vec![0.0; ns];
            for ir in 0..nr {
                let mut any = false;
                for (is, v) in f.iter_mut().enumerate() {
                    let i = frame.idx(k, is, ir);
                    *v = g[i] / (2.0 * sq * e[i]);
                    any |= *v != 0.0;
                }
                if !any {
                    continue;
                }
                let q = cumulative_from(&f, frame.h, frame.i0);
                for is in 0..ns {
                    let i = frame.idx(k, is, ir);
                    lvl[is * nr + ir] = -sign.value() * e[i] * q[is];
                }
            }
        });
    out
}

/// Amplitude stack c_0..c_N1 of one GO on its frame, with L_sigma c_l for every order.
#[derive(Clone, Debug)]
pub struct FrameAmplitudes {
    pub spec: GoSpec,
    pub frame: Frame,
    pub a0: Vec<f64>,
    pub da0: Vec<f64>,
    /// B0.omega and B0.alpha at frame nodes.
    pub bw: Vec<f64>,
    pub ba: Vec<f64>,
    /// div B0, only needed by L_-.
    pub divb: Option<Vec<f64>>,
    pub e: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub lc: Vec<Vec<f64>>,
}

/// Transport residual norms over frame nodes inside the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportResiduals {
    /// max |J c_0|.
    pub leading: f64,
    /// max |J c_l + L c_{l-1}| for l = 1..N1.
    pub hierarchy: Vec<f64>,
}

impl FrameAmplitudes {
    pub fn compute(spec: &GoSpec, bg: &Background, grid: &SpaceTimeGrid) -> Result<Self> {
        let frame = Frame::new(spec, bg, grid)?;
        let a0: Vec<f64> = frame.t.iter().map(|&t| (bg.a0)(t)).collect();
        let da0: Vec<f64> = frame.t.iter().map(|&t| (bg.da0)(t)).collect();
        let (om, al) = (frame.omega, frame.alpha);
        let bvec = |k: usize, is: usize, ir: usize| bg.b(frame.t[k], frame.point(is, ir));
        let bw = frame.build(|k, is, ir| dot(bvec(k, is, ir), om));
        let ba = frame.build(|k, is, ir| dot(bvec(k, is, ir), al));
        let divb = match spec.sign {
            Sign::Minus if bg.b0.is_some() => {
                Some(frame.build(|k, is, ir| bg.div_b(frame.t[k], frame.point(is, ir))))
            }
            _ => None,
        };
        // log e = -sigma (a0' (x.w)^2 / (8 a0^2) + int_s^end B.w / (2 a0))
        let mut e = vec![0.0; frame.len()];
        let x0w = dot(frame.x0, om);
        e.par_chunks_mut(frame.level_len())
            .enumerate()
            .for_each(|(k, lvl)| {
                let (a, da) = (a0[k], da0[k]);
                let mut f = vec![0.0; frame.ns];
                for ir in 0..frame.nr {
                    for (is, v) in f.iter_mut().enumerate() {
                        *v = bw[frame.idx(k, is, ir)];
                    }
                    let cum = cumulative_from(&f, frame.h, frame.ns - 1);
                    for is in 0..frame.ns {
                        let xw = x0w + frame.s(is);
                        let tail = -cum[is];
                        let log_e =
                            -spec.sign.value() * (da * xw * xw / (8.0 * a * a) + tail / (2.0 * a));
                        lvl[is * frame.nr + ir] = log_e.exp();
                    }
                }
            });
        let mut amps = FrameAmplitudes {
            spec: spec.clone(),
            frame,
            a0,
            da0,
            bw,
            ba,
            divb,
            e,
            c: vec![],
            lc: vec![],
        };
        let fr = &amps.frame;
        let c0 = fr.build(|k, is, ir| {
            let z = zeta(fr.t[k], spec.t0, spec.delta);
            let d = chi0(fr.r(ir) / spec.delta);
            z * d * amps.e[fr.idx(k, is, ir)]
        });
        amps.c.push(c0);
        for l in 1..=spec.n1 {
            let lc = amps.apply_l(&amps.c[l - 1]);
            let g: Vec<f64> = lc.par_iter().map(|v| -v).collect();
            let cl = transport_solve(&amps.frame, spec.sign, &amps.a0, &amps.e, &g);
            amps.lc.push(lc);
            amps.c.push(cl);
        }
        let top = amps.apply_l(&amps.c[spec.n1]);
        amps.lc.push(top);
        Ok(amps)
    }

    /// L_sigma u at every frame node.
    pub fn apply_l(&self, u: &[f64]) -> Vec<f64> {
        let fr = &self.frame;
        fr.build(|k, is, ir| self.l_at(u, k, is, ir))
    }

    #[inline]
    pub fn l_at(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let fr = &self.frame;
        let i = fr.idx(k, is, ir);
        let ut = fr.dt_of(u, k, is, ir);
        let lap = fr.dss(u, k, is, ir) + fr.drr(u, k, is, ir);
        let conv = self.bw[i] * fr.ds(u, k, is, ir) + self.ba[i] * fr.dr(u, k, is, ir);
        match self.spec.sign {
            Sign::Plus => ut - self.a0[k] * lap + conv,
            Sign::Minus => {
                let div = self.divb.as_ref().map_or(0.0, |d| d[i]);
                -ut - self.a0[k] * lap - conv - div * u[i]
            }
        }
    }

    #[inline]
    pub fn p_at(&self, k: usize, is: usize, ir: usize) -> f64 {
        let fr = &self.frame;
        let a = self.a0[k];
        let xw = dot(fr.x0, fr.omega) + fr.s(is);
        self.bw[fr.idx(k, is, ir)] / a.sqrt() - self.da0[k] * xw / (2.0 * a.powf(1.5))
    }

    #[inline]
    pub fn j_at(&self, u: &[f64], k: usize, is: usize, ir: usize) -> f64 {
        let fr = &self.frame;
        -self.spec.sign.value() * 2.0 * self.a0[k].sqrt() * fr.ds(u, k, is, ir)
            + self.p_at(k, is, ir) * u[fr.idx(k, is, ir)]
    }

    fn inside(&self, grid: &SpaceTimeGrid, is: usize, ir: usize) -> bool {
        grid.domain.contains(self.frame.point(is, ir))
    }

    pub fn transport_residuals(&self, grid: &SpaceTimeGrid) -> TransportResiduals {
        let fr = &self.frame;
        let n = self.spec.n1;
        let per_level: Vec<Vec<f64>> = (0..fr.nk)
            .into_par_iter()
            .map(|k| {
                let mut m = vec![0.0; n + 1];
                for is in 0..fr.ns {
                    for ir in 0..fr.nr {
                        if !self.inside(grid, is, ir) {
                            continue;
                        }
                        m[0] = f64::max(m[0], self.j_at(&self.c[0], k, is, ir).abs());
                        for l in 1..=n {
                            let i = fr.idx(k, is, ir);
                            let r = self.j_at(&self.c[l], k, is, ir) + self.lc[l - 1][i];
                            m[l] = m[l].max(r.abs());
                        }
                    }
                }
                m
            })
            .collect();
        let mut m = vec![0.0; n + 1];
        for lv in per_level {
            for (a, b) in m.iter_mut().zip(lv) {
                *a = f64::max(*a, b);
            }
        }
        TransportResiduals {
            leading: m[0],
            hierarchy: m[1..].to_vec(),
        }
    }
}

/// ||P_{rho,sigma}(sum_l c_l rho^-l)||_{L2} over the frame nodes inside the domain, per rho.
pub fn go_residual(amps: &FrameAmplitudes, grid: &SpaceTimeGrid, rhos: &[f64]) -> Vec<f64> {
    let fr = &amps.frame;
    let n = amps.spec.n1;
    let w = fr.h * fr.h * fr.dt;
    let per_level: Vec<Vec<f64>> = (0..fr.nk)
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; rhos.len()];
            let mut jc = vec![0.0; n + 1];
            let mut lc = vec![0.0; n + 1];
            for is in 0..fr.ns {
                for ir in 0..fr.nr {
                    if !amps.inside(grid, is, ir) {
                        continue;
                    }
                    let i = fr.idx(k, is, ir);
                    for l in 0..=n {
                        jc[l] = amps.j_at(&amps.c[l], k, is, ir);
                        lc[l] = amps.lc[l][i];
                    }
                    for (a, &rho) in acc.iter_mut().zip(rhos) {
                        let mut v = 0.0;
                        let mut pw = 1.0;
                        for l in 0..=n {
                            v += pw * (lc[l] + rho * jc[l]);
                            pw /= rho;
                        }
                        *a += v * v;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; rhos.len()];
    for lv in per_level {
        for (a, b) in total.iter_mut().zip(lv) {
            *a += b;
        }
    }
    total.into_iter().map(|v| (v * w).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn cumulative_is_exact_for_quadratics() {
        let h = 0.1;
        let f: Vec<f64> = (0..21)
            .map(|i| {
                let s = (i as f64 - 7.0) * h;
                1.0 + s - 2.0 * s * s
            })
            .collect();
        let q = cumulative_from(&f, h, 7);
        for (i, v) in q.iter().enumerate() {
            let s = (i as f64 - 7.0) * h;
            let want = s + s * s / 2.0 - 2.0 * s * s * s / 3.0;
            assert!((v - want).abs() < 1e-12, "{i}: {v} vs {want}");
        }
    }

    #[test]
    fn heat_transport_is_a_line_integral() {
        let grid = build_grid(Domain::unit_square(), 1.0, 32, 64).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.0, 0.0], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 4.0, [0.6, 0.8], 0.5, [0.5, 0.5], 0.3);
        let fr = Frame::new(&spec, &bg, &grid).unwrap();
        let a0 = vec![1.0; fr.nk];
        let e = vec![1.0; fr.len()];
        let g = fr.build(|k, is, ir| (fr.t[k] + fr.s(is)).cos() * (1.0 + fr.r(ir)));
        let c = transport_solve(&fr, Sign::Plus, &a0, &e, &g);
        let mut worst: f64 = 0.0;
        for k in 0..fr.nk {
            for is in 0..fr.ns {
                let s = fr.s(is);
                let t = fr.t[k];
                let ir = fr.j0 + 3;
                // c = -(1/2) int_0^s g
                let want = -0.5 * (1.0 + fr.r(ir)) * ((t + s).sin() - t.sin());
                worst = worst.max((c[fr.idx(k, is, ir)] - want).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
        let zero = transport_solve(&fr, Sign::Plus, &a0, &e, &vec![0.0; fr.len()]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_coefficient_amplitude_is_cutoff_product() {
        let grid = build_grid(Domain::unit_square(), 1.0, 32, 32).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.0, 0.0], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 4.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3);
        let a = FrameAmplitudes::compute(&spec, &bg, &grid).unwrap();
        let fr = &a.frame;
        for k in 0..fr.nk {
            for is in 0..fr.ns {
                for ir in 0..fr.nr {
                    let want = zeta(fr.t[k], 0.5, 0.3) * chi0(fr.r(ir) / 0.3);
                    assert!((a.c[0][fr.idx(k, is, ir)] - want).abs() < 1e-15);
                }
            }
        }
        let res = a.transport_residuals(&grid);
        assert!(res.leading < 1e-12);
    }
}
