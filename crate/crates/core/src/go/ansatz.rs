//! Amplitudes on the physical grid, remainder solves, and the assembled ansatz.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::frame::FrameAmplitudes;
use super::{node_gradient, Background, GoSpec, Sign};
use crate::error::{Error, Result};
use crate::geometry::{dot, ray_integral_forward, SpaceTimeGrid, Vec2};
use crate::pde::linear::{solve_linear, LinearOperator, LinearProblem, Source};
use crate::pde::ScalarField;

/// Amplitude stack interpolated to the physical grid on the time window of the frame.
#[derive(Clone, Debug)]
pub struct GridAmplitudes {
    pub spec: GoSpec,
    pub k_lo: usize,
    pub nk: usize,
    pub n_nodes: usize,
    /// a0 at every grid level (for the phase).
    pub a0: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub gx: Vec<Vec<f64>>,
    pub gy: Vec<Vec<f64>>,
    /// L_sigma c_N1, the source of the remainder equation.
    pub lc_top: Vec<f64>,
}

fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

struct Stencil {
    node: usize,
    is: usize,
    ir: isize,
    ws: [f64; 4],
    wr: [f64; 4],
}

impl GridAmplitudes {
    pub fn compute(spec: &GoSpec, bg: &Background, grid: &SpaceTimeGrid) -> Result<Self> {
        let fa = FrameAmplitudes::compute(spec, bg, grid)?;
        Self::from_frame(&fa, bg, grid)
    }

    pub fn from_frame(fa: &FrameAmplitudes, bg: &Background, grid: &SpaceTimeGrid) -> Result<Self> {
        let fr = &fa.frame;
        let n_nodes = grid.n_nodes();
        let mut stencils = Vec::new();
        for idx in 0..n_nodes {
            if !grid.is_active(idx) {
                continue;
            }
            let (s, r) = fr.coords_of(grid.coords(idx));
            let u = s / fr.h + fr.i0 as f64;
            let v = r / fr.h + fr.j0 as f64;
            if v < -2.0 || v > fr.nr as f64 + 1.0 {
                continue;
            }
            let (iu, iv) = (u.floor(), v.floor());
            if iu < 1.0 || iu as usize + 2 >= fr.ns {
                return Err(Error::Domain(format!(
                    "grid node {idx} lies outside the GO frame"
                )));
            }
            stencils.push(Stencil {
                node: idx,
                is: iu as usize - 1,
                ir: iv as isize - 1,
                ws: cubic_weights(u - iu),
                wr: cubic_weights(v - iv),
            });
        }
        let interp = |field: &(dyn Fn(usize, usize, usize) -> f64 + Sync)| -> Vec<f64> {
            let mut out = vec![0.0; fr.nk * n_nodes];
            out.par_chunks_mut(n_nodes)
                .enumerate()
                .for_each(|(k, lvl)| {
                    for st in &stencils {
                        let mut acc = 0.0;
                        for (a, wa) in st.ws.iter().enumerate() {
                            for (b, wb) in st.wr.iter().enumerate() {
                                let ir = st.ir + b as isize;
                                if ir < 0 || ir as usize >= fr.nr {
                                    continue;
                                }
                                acc += wa * wb * field(k, st.is + a, ir as usize);
                            }
                        }
                        lvl[st.node] = acc;
                    }
                });
            out
        };
        let (om, al) = (fr.omega, fr.alpha);
        let mut c = vec![];
        let mut gx = vec![];
        let mut gy = vec![];
        for cl in &fa.c {
            c.push(interp(&|k, is, ir| cl[fr.idx(k, is, ir)]));
            let ds = interp(&|k, is, ir| fr.ds(cl, k, is, ir));
            let dr = interp(&|k, is, ir| fr.dr(cl, k, is, ir));
            gx.push(
                ds.iter()
                    .zip(&dr)
                    .map(|(a, b)| a * om[0] + b * al[0])
                    .collect(),
            );
            gy.push(
                ds.iter()
                    .zip(&dr)
                    .map(|(a, b)| a * om[1] + b * al[1])
                    .collect(),
            );
        }
        let top = &fa.lc[fa.lc.len() - 1];
        let lc_top = interp(&|k, is, ir| top[fr.idx(k, is, ir)]);
        let a0 = (0..=grid.nt).map(|k| (bg.a0)(grid.time(k))).collect();
        Ok(GridAmplitudes {
            spec: fa.spec.clone(),
            k_lo: fr.k_lo,
            nk: fr.nk,
            n_nodes,
            a0,
            c,
            gx,
            gy,
            lc_top,
        })
    }

    #[inline]
    fn slot(&self, k: usize, idx: usize) -> Option<usize> {
        if k < self.k_lo || k >= self.k_lo + self.nk {
            None
        } else {
            Some((k - self.k_lo) * self.n_nodes + idx)
        }
    }

    /// sum_l c_l rho^-l.
    pub fn series(&self, rho: f64, k: usize, idx: usize) -> f64 {
        let Some(i) = self.slot(k, idx) else {
            return 0.0;
        };
        let mut acc = 0.0;
        let mut pw = 1.0;
        for cl in &self.c {
            acc += pw * cl[i];
            pw /= rho;
        }
        acc
    }

    pub fn series_grad(&self, rho: f64, k: usize, idx: usize) -> Vec2 {
        let Some(i) = self.slot(k, idx) else {
            return [0.0, 0.0];
        };
        let mut acc = [0.0, 0.0];
        let mut pw = 1.0;
        for (x, y) in self.gx.iter().zip(&self.gy) {
            acc[0] += pw * x[i];
            acc[1] += pw * y[i];
            pw /= rho;
        }
        acc
    }

    pub fn leading(&self, k: usize, idx: usize) -> f64 {
        self.slot(k, idx).map_or(0.0, |i| self.c[0][i])
    }

    pub fn window(&self) -> (usize, usize) {
        (self.k_lo, self.k_lo + self.nk - 1)
    }
}

/// Remainder of one GO on the amplitude window.
#[derive(Clone, Debug)]
pub struct RemainderReport {
    pub rho: f64,
    /// Node values on levels k_lo .. k_lo + nk.
    pub field: Vec<f64>,
    pub l2: f64,
    pub max_abs: f64,
    pub krylov_iterations: usize,
}

/// Largest rho for which the conjugated advection stays cell-Peclet resolved.
pub fn rho_max(grid: &SpaceTimeGrid, a0_min: f64) -> f64 {
    a0_min.sqrt() / grid.h
}

/// Solves P_{rho,sigma} R = -rho^-N1 L_sigma c_N1 with zero Dirichlet data and zero data at
/// the start of the window (in the direction of time integration).
pub fn remainder_solve(
    amps: &GridAmplitudes,
    bg: &Background,
    grid: &SpaceTimeGrid,
    rho: f64,
) -> Result<RemainderReport> {
    let spec = &amps.spec;
    let (k_lo, k_hi) = amps.window();
    let a_min = amps.a0[k_lo..=k_hi]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let limit = rho_max(grid, a_min);
    if rho > limit * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "rho = {rho:.3} exceeds rho_max = {limit:.3} for h = {:.4e}; refine the grid or lower rho",
            grid.h
        )));
    }
    let omega = spec.omega;
    let n1 = amps.c.len() - 1;
    let a0 = |t: f64| (bg.a0)(t);
    let potential = |t: f64, x: Vec2| rho * bg.potential(t, x, omega);
    let shift = |t: f64| 2.0 * rho * (bg.a0)(t).sqrt();
    let adv_plus = |t: f64, x: Vec2| {
        let b = bg.b(t, x);
        let s = shift(t);
        [b[0] - s * omega[0], b[1] - s * omega[1]]
    };
    let adv_minus = |t: f64, _: Vec2| {
        let s = shift(t);
        [s * omega[0], s * omega[1]]
    };
    let cons_minus = |t: f64, x: Vec2| {
        let b = bg.b(t, x);
        [-b[0], -b[1]]
    };
    let op = match spec.sign {
        Sign::Plus => LinearOperator {
            diffusion: &a0,
            advection: Some(&adv_plus),
            conservative: None,
            potential: Some(&potential),
        },
        Sign::Minus => LinearOperator {
            diffusion: &a0,
            advection: Some(&adv_minus),
            conservative: if bg.b0.is_some() {
                Some(&cons_minus)
            } else {
                None
            },
            potential: Some(&potential),
        },
    };
    let mut p = LinearProblem::new(op);
    p.source = Source::Window {
        k0: k_lo,
        data: &amps.lc_top,
        scale: -rho.powi(-(n1 as i32)),
    };
    p.equilibrate = true;
    match spec.sign {
        Sign::Plus => p.window = Some((k_lo - 1, k_hi)),
        Sign::Minus => {
            p.reversed = true;
            p.window = Some((k_lo, k_hi + 1));
        }
    }
    let (u, rep) = solve_linear(grid, &p)?;
    let n = grid.n_nodes();
    let field = u.data[k_lo * n..(k_hi + 1) * n].to_vec();
    let mut l2 = 0.0;
    for k in k_lo..=k_hi {
        let s = u.slice(k);
        let lv: f64 = (0..n).map(|i| grid.cell_weight(i) * s[i] * s[i]).sum();
        l2 += grid.time_weight(k) * lv;
    }
    let max_abs = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(RemainderReport {
        rho,
        field,
        l2: l2.sqrt(),
        max_abs,
        krylov_iterations: rep.krylov_iterations,
    })
}

/// An assembled GO solution kept in weighted form: U = exp(phase) * (series + remainder).
#[derive(Clone, Debug)]
pub struct GoAnsatz {
    pub spec: GoSpec,
    pub amplitudes: Arc<GridAmplitudes>,
    pub remainder: Option<RemainderReport>,
}

impl GoAnsatz {
    /// Ansatz at frequency `rho` reusing precomputed amplitudes.
    pub fn from_amplitudes(
        amplitudes: Arc<GridAmplitudes>,
        rho: f64,
        bg: &Background,
        grid: &SpaceTimeGrid,
        with_remainder: bool,
    ) -> Result<Self> {
        let remainder = if with_remainder {
            Some(remainder_solve(&amplitudes, bg, grid, rho)?)
        } else {
            None
        };
        Ok(GoAnsatz {
            spec: amplitudes.spec.with_rho(rho),
            amplitudes,
            remainder,
        })
    }

    fn r_slot(&self, k: usize, idx: usize) -> Option<usize> {
        let a = &self.amplitudes;
        self.remainder.as_ref()?;
        a.slot(k, idx)
    }

    /// series + remainder at a node.
    pub fn weighted(&self, k: usize, idx: usize) -> f64 {
        let v = self.amplitudes.series(self.spec.rho, k, idx);
        match (self.r_slot(k, idx), &self.remainder) {
            (Some(i), Some(r)) => v + r.field[i],
            _ => v,
        }
    }

    /// Gradient of the weighted part: exact for the series, finite differences for the remainder.
    pub fn weighted_grad(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> Vec2 {
        let mut g = self.amplitudes.series_grad(self.spec.rho, k, idx);
        if let (Some(_), Some(r)) = (self.r_slot(k, idx), &self.remainder) {
            let n = grid.n_nodes();
            let lvl = &r.field[(k - self.amplitudes.k_lo) * n..(k - self.amplitudes.k_lo + 1) * n];
            let gr = node_gradient(grid, lvl, idx);
            g[0] += gr[0];
            g[1] += gr[1];
        }
        g
    }

    pub fn log_phase(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> f64 {
        super::phase(
            &self.spec,
            self.amplitudes.a0[k],
            grid.time(k),
            grid.coords(idx),
        )
    }

    /// Exact value exp(phase) * weighted; may overflow for large rho.
    pub fn value(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> f64 {
        let w = self.weighted(k, idx);
        if w == 0.0 {
            0.0
        } else {
            w * self.log_phase(grid, k, idx).exp()
        }
    }

    /// The full field; a range error if any value overflows.
    pub fn assemble(&self, grid: &SpaceTimeGrid) -> Result<ScalarField> {
        let mut out = ScalarField::zeros(grid);
        for k in 0..=grid.nt {
            for idx in 0..grid.n_nodes() {
                out.data[k * out.n_nodes + idx] = self.value(grid, k, idx);
            }
        }
        if !out.is_finite() {
            return Err(Error::Range(format!(
                "exp(phase) overflows at rho = {}; use the weighted accessors",
                self.spec.rho
            )));
        }
        Ok(out)
    }
}

/// Amplitudes, remainder and assembly in one call.
pub fn build_go(spec: &GoSpec, bg: &Background, grid: &SpaceTimeGrid) -> Result<GoAnsatz> {
    let amps = Arc::new(GridAmplitudes::compute(spec, bg, grid)?);
    GoAnsatz::from_amplitudes(amps, spec.rho, bg, grid, true)
}

/// Leading-order oscillatory GO: (1 - e^{-delta t}) e_+ e^{-i t tau - i x.xi} for sigma = +,
/// (1 - e^{-delta (T - t)}) e_- for sigma = -, without tube cutoff.
#[derive(Clone, Debug)]
pub struct OscillatoryGo {
    pub spec: GoSpec,
    pub tau: f64,
    pub xi: Vec2,
    /// Real weighted amplitude at every level and node.
    pub amp: ScalarField,
    pub a0: Vec<f64>,
}

pub fn oscillatory_go(
    spec: &GoSpec,
    bg: &Background,
    grid: &SpaceTimeGrid,
    tau: f64,
    xi: Vec2,
) -> Result<OscillatoryGo> {
    if dot(xi, spec.omega).abs() > 1e-12 * (1.0 + dot(xi, xi).sqrt()) {
        return Err(Error::Precondition(format!(
            "xi = {xi:?} is not orthogonal to omega = {:?}",
            spec.omega
        )));
    }
    let delta = spec.delta;
    let tf = grid.t_final;
    let spacing = grid.h / 2.0;
    let box_ = bg.support_box();
    let mut amp = ScalarField::zeros(grid);
    let n = grid.n_nodes();
    let levels: Result<Vec<Vec<f64>>> = (0..=grid.nt)
        .into_par_iter()
        .map(|k| {
            let t = grid.time(k);
            let win = match spec.sign {
                Sign::Plus => 1.0 - (-delta * t).exp(),
                Sign::Minus => 1.0 - (-delta * (tf - t)).exp(),
            };
            let a = (bg.a0)(t);
            let da = (bg.da0)(t);
            let mut lvl = vec![0.0; n];
            if win == 0.0 {
                return Ok(lvl);
            }
            for (idx, v) in lvl.iter_mut().enumerate() {
                if !grid.is_active(idx) {
                    continue;
                }
                let x = grid.coords(idx);
                let xw = dot(x, spec.omega);
                let integral = match &bg.b0 {
                    Some(e) => ray_integral_forward(e, x, spec.omega, t, box_.0, box_.1, spacing)?,
                    None => 0.0,
                };
                let log_e =
                    -spec.sign.value() * (da * xw * xw / (8.0 * a * a) + integral / (2.0 * a));
                *v = win * log_e.exp();
            }
            Ok(lvl)
        })
        .collect();
    for (k, lvl) in levels?.into_iter().enumerate() {
        amp.slice_mut(k).copy_from_slice(&lvl);
    }
    let a0 = (0..=grid.nt).map(|k| (bg.a0)(grid.time(k))).collect();
    Ok(OscillatoryGo {
        spec: spec.clone(),
        tau,
        xi,
        amp,
        a0,
    })
}

impl OscillatoryGo {
    fn modulation(&self, t: f64, x: Vec2) -> Complex64 {
        if self.spec.sign == Sign::Minus {
            return Complex64::new(1.0, 0.0);
        }
        Complex64::from_polar(1.0, -(t * self.tau + dot(x, self.xi)))
    }

    /// Weighted value (phase factor exp(sigma(rho^2 t + rho x.omega/sqrt a0)) removed).
    pub fn weighted(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> Complex64 {
        self.amp.at(k, idx) * self.modulation(grid.time(k), grid.coords(idx))
    }

    pub fn weighted_grad(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> [Complex64; 2] {
        let g = node_gradient(grid, self.amp.slice(k), idx);
        let m = self.modulation(grid.time(k), grid.coords(idx));
        let a = self.amp.at(k, idx);
        let xi = if self.spec.sign == Sign::Plus {
            self.xi
        } else {
            [0.0, 0.0]
        };
        [
            (Complex64::new(g[0], 0.0) - Complex64::i() * xi[0] * a) * m,
            (Complex64::new(g[1], 0.0) - Complex64::i() * xi[1] * a) * m,
        ]
    }

    /// Gradient of the full solution divided by exp(phase).
    pub fn conjugated_grad(&self, grid: &SpaceTimeGrid, k: usize, idx: usize) -> [Complex64; 2] {
        let w = self.weighted(grid, k, idx);
        let g = self.weighted_grad(grid, k, idx);
        let f = self.spec.sign.value() * self.spec.rho / self.a0[k].sqrt();
        [
            g[0] + f * self.spec.omega[0] * w,
            g[1] + f * self.spec.omega[1] * w,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use crate::go::{leading_amplitude, zeta};

    #[test]
    fn aligned_interpolation_matches_direct_leading_amplitude() {
        let grid = build_grid(Domain::unit_square(), 1.0, 32, 32).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.5, 0.3], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 8.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3);
        let amps = GridAmplitudes::compute(&spec, &bg, &grid).unwrap();
        let direct = leading_amplitude(&spec, &bg, &grid).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=grid.nt {
            for idx in 0..grid.n_nodes() {
                worst = worst.max((amps.leading(k, idx) - direct.at(k, idx)).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn plus_ansatz_vanishes_initially_and_exact_values_match() {
        let grid = build_grid(Domain::unit_square(), 1.0, 32, 32).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.5, 0.3], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 4.0, [0.6, 0.8], 0.5, [0.5, 0.5], 0.3);
        let go = build_go(&spec, &bg, &grid).unwrap();
        for idx in 0..grid.n_nodes() {
            assert_eq!(go.value(&grid, 0, idx), 0.0);
        }
        let u = go.assemble(&grid).unwrap();
        let (k, idx) = (16, grid.index(16, 16));
        let want = go.weighted(k, idx) * go.log_phase(&grid, k, idx).exp();
        assert!((u.at(k, idx) - want).abs() <= 1e-12 * want.abs());
        let r = go.remainder.as_ref().unwrap();
        assert!(r.l2.is_finite());
    }

    #[test]
    fn remainder_rejects_unresolved_rho() {
        let grid = build_grid(Domain::unit_square(), 1.0, 16, 16).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.0, 0.0], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 40.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3);
        assert!(matches!(build_go(&spec, &bg, &grid), Err(Error::Range(_))));
    }

    #[test]
    fn oscillatory_reduces_to_leading_term_on_plateau() {
        let grid = build_grid(Domain::unit_square(), 1.0, 16, 16).unwrap();
        let bg = Background::constant(&grid.domain, 1.0, [0.5, 0.3], 0.25).unwrap();
        let spec = GoSpec::new(Sign::Plus, 8.0, [1.0, 0.0], 0.5, [0.5, 0.5], 0.3);
        let osc = oscillatory_go(&spec, &bg, &grid, 0.0, [0.0, 0.0]).unwrap();
        let lead = leading_amplitude(&spec, &bg, &grid).unwrap();
        let k = 8;
        let t = grid.time(k);
        assert_eq!(zeta(t, 0.5, 0.3), 1.0);
        let idx = grid.index(5, 8);
        let want = (1.0 - (-0.3 * t).exp()) * lead.at(k, idx);
        assert!((osc.weighted(&grid, k, idx).re - want).abs() < 1e-6);
        let osc = oscillatory_go(&spec, &bg, &grid, 3.0, [0.0, 2.0]).unwrap();
        let w = osc.weighted(&grid, k, idx);
        assert!((w.norm() - osc.amp.at(k, idx)).abs() < 1e-14);
        assert!(matches!(
            oscillatory_go(&spec, &bg, &grid, 0.0, [1.0, 0.0]),
            Err(Error::Precondition(_))
        ));
    }
}
