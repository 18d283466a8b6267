//! One runner per experiment kind. Each writes its artifacts into the output directory.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use parlab_core::acceptance::{linear_fit, loglog_slope};
use parlab_core::density::{
    default_sample_set, schemes_for_samples, verify_density, ConcentrationConfig, TensorField,
};
use parlab_core::dtn::{add_noise, dtn_apply, dtn_guarded};
use parlab_core::error::Error as CoreError;
use parlab_core::geometry::{SpaceTimeGrid, Vec2};
use parlab_core::go::{
    go_residual, remainder_solve, Background, FrameAmplitudes, GoSpec, GridAmplitudes, Sign,
    DEFAULT_N1, EXTENSION_MARGIN,
};
use parlab_core::laws::SymmetricTensor;
use parlab_core::linearize::{
    divided_difference_order, first_linearization, second_linearization, MultiSourceConfig,
};
use parlab_core::pde::{
    solve_quasilinear, BoundaryTrace, NewtonOptions, QuasilinearProblem, ScalarField,
};
use parlab_core::recovery::{
    discrimination_sweep, fourier_lattice, measure_campaign, reconstruct_a, segment_means,
    window_scan, FourierSetup, Parametrization, ReconstructionOptions, SweepConfig,
};

use crate::config::{params, ConfigError, ExperimentConfig, Kind, SourceSpec};
use crate::report::{write_json, write_table, Plot, Series};

/// Configuration problems map to exit 1, experiment failures to exit 2.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Experiment(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(m) => Failure::Config(m),
            other => Failure::Experiment(other.to_string()),
        }
    }
}

impl From<Box<dyn std::error::Error>> for Failure {
    fn from(e: Box<dyn std::error::Error>) -> Self {
        Failure::Experiment(e.to_string())
    }
}

type Outcome = Result<serde_json::Value, Failure>;

pub fn run(cfg: &ExperimentConfig) -> Outcome {
    std::fs::create_dir_all(&cfg.output)
        .map_err(|e| Failure::Experiment(format!("{}: {e}", cfg.output.display())))?;
    let grid = cfg.grid.build()?;
    let out = cfg.output.as_path();
    match cfg.kind {
        Kind::Forward => forward(cfg, &grid, out),
        Kind::Dtn => dtn(cfg, &grid, out),
        Kind::Linearize => linearize(cfg, &grid, out),
        Kind::GoVerify => go_verify(cfg, &grid, out),
        Kind::Density => density(cfg, &grid, out),
        Kind::Discriminate => discriminate(cfg, &grid, out),
        Kind::ReconstructA => reconstruct(cfg, &grid, out),
        Kind::RecoverB => recover_b(cfg, &grid, out),
    }
}

fn zero_source() -> SourceSpec {
    SourceSpec {
        amplitude: 0.0,
        onset: 0.05,
        ramp: 0.1,
        frequency: 0.0,
        kx: 0.0,
        ky: 0.0,
    }
}

fn field_table(
    grid: &SpaceTimeGrid,
    u: &ScalarField,
    path: &Path,
    comment: &str,
) -> Result<(), Failure> {
    let rows = (0..=grid.nt).flat_map(|k| {
        (0..grid.n_nodes())
            .filter(|&i| grid.is_active(i))
            .map(move |i| {
                let x = grid.coords(i);
                (grid.time(k), x[0], x[1], u.at(k, i))
            })
    });
    Ok(write_table(path, comment, &["t", "x", "y", "value"], rows)?)
}

fn trace_rows<'a>(
    grid: &'a SpaceTimeGrid,
    f: &'a BoundaryTrace,
) -> impl Iterator<Item = (f64, usize, f64, f64, f64)> + 'a {
    (0..=grid.nt).flat_map(move |k| {
        grid.boundary()
            .iter()
            .enumerate()
            .map(move |(b, node)| (grid.time(k), b, node.point[0], node.point[1], f.at(k, b)))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardParams {
    #[serde(default = "zero_source")]
    source: SourceSpec,
}

fn forward(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: ForwardParams = params(&cfg.params)?;
    let f = p.source.trace(grid);
    let (u, report) = solve_quasilinear(
        grid,
        &QuasilinearProblem {
            law: &cfg.law,
            lambda: cfg.lambda,
            source: &f,
            forcing: None,
            options: NewtonOptions::default(),
        },
    )?;
    let s = dtn_apply(grid, &cfg.law, cfg.lambda, &f)?;
    field_table(
        grid,
        &u,
        &out.join("field.csv"),
        "forward solution u(t, x) with u = lambda + f on the boundary",
    )?;
    write_table(
        &out.join("flux.csv"),
        "boundary flux a(t, u) du/dnu",
        &["t", "node", "x", "y", "flux"],
        trace_rows(grid, &s.flux),
    )?;
    let summary = json!({"kind": "forward", "law": cfg.law.name, "lambda": cfg.lambda,
                         "solve": report, "max_abs_u": u.max_abs(), "max_abs_flux": s.flux.max_abs()});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DtnParams {
    lambdas: Option<Vec<f64>>,
    sources: Vec<SourceSpec>,
    #[serde(default)]
    noise: f64,
    /// Peak boundary amplitude; sources are rescaled to it and halved on small-data failures.
    max_amplitude: Option<f64>,
    #[serde(default = "default_halvings")]
    max_halvings: usize,
}

fn default_halvings() -> usize {
    6
}

type LedgerRow = (String, f64, usize, f64, f64, usize, f64, f64, f64);

fn dtn(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: DtnParams = params(&cfg.params)?;
    let lambdas = p.lambdas.clone().unwrap_or_else(|| vec![cfg.lambda]);
    let cells: Vec<(usize, f64, usize)> = lambdas
        .iter()
        .enumerate()
        .flat_map(|(li, &l)| (0..p.sources.len()).map(move |si| (li, l, si)))
        .collect();
    let results: Vec<Result<(Vec<LedgerRow>, serde_json::Value), CoreError>> = cells
        .par_iter()
        .map(|&(li, lambda, si)| {
            let f = p.sources[si].trace(grid);
            let (s, scale) = match p.max_amplitude {
                Some(m) => dtn_guarded(grid, &cfg.law, lambda, &f, m, p.max_halvings)?,
                None => (dtn_apply(grid, &cfg.law, lambda, &f)?, 1.0),
            };
            let flux = if p.noise > 0.0 {
                add_noise(
                    &s.flux,
                    p.noise,
                    cfg.seed.wrapping_add((li * 1000 + si) as u64),
                )
            } else {
                s.flux
            };
            let rows = trace_rows(grid, &flux)
                .map(|(t, b, x, y, v)| (cfg.law.name.clone(), lambda, si, scale, t, b, x, y, v))
                .collect();
            Ok((
                rows,
                json!({"lambda": lambda, "source": si, "scale": scale, "solve": s.report}),
            ))
        })
        .collect();
    let mut rows = vec![];
    let mut reports = vec![];
    for r in results {
        let (r, rep) = r?;
        rows.extend(r);
        reports.push(rep);
    }
    append_ledger(&out.join("dtn.csv"), &rows)?;
    let summary = json!({"kind": "dtn", "law": cfg.law.name, "noise": p.noise, "samples": reports});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

/// Appends to an existing ledger; a new one gets the comment and header first.
fn append_ledger(path: &Path, rows: &[LedgerRow]) -> Result<(), Failure> {
    if !path.exists() {
        return Ok(write_table(
            path,
            "DtN measurement ledger keyed by (law, lambda, source)",
            &[
                "law", "lambda", "source", "scale", "t", "node", "x", "y", "flux",
            ],
            rows,
        )?);
    }
    let file = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Failure::Experiment(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Failure::Experiment(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Experiment(e.to_string()))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearizeParams {
    sources: Vec<SourceSpec>,
    #[serde(default = "default_steps")]
    steps: Vec<f64>,
}

fn default_steps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}

fn linearize(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: LinearizeParams = params(&cfg.params)?;
    let traces: Vec<BoundaryTrace> = p.sources.iter().map(|s| s.trace(grid)).collect();
    let target = match traces.len() {
        1 => first_linearization(grid, &cfg.law, cfg.lambda, &traces[0])?,
        2 => {
            let v1 = first_linearization(grid, &cfg.law, cfg.lambda, &traces[0])?;
            let v2 = first_linearization(grid, &cfg.law, cfg.lambda, &traces[1])?;
            second_linearization(grid, &cfg.law, cfg.lambda, &v1, &v2)?
        }
        n => {
            return Err(Failure::Config(format!(
                "params.sources: the direct comparison supports 1 or 2 sources, got {n}"
            )))
        }
    };
    let mut rows = vec![];
    for &h in &p.steps {
        let mc = MultiSourceConfig::new(cfg.lambda, traces.clone(), h);
        let dd = divided_difference_order(grid, &mc, &cfg.law)?;
        rows.push((h, dd.field.sub(&target).max_abs()));
    }
    let (hs, es): (Vec<f64>, Vec<f64>) = rows.iter().cloned().unzip();
    let slope = if rows.len() >= 2 && es.iter().all(|e| *e > 0.0) {
        Some(loglog_slope(&hs, &es))
    } else {
        None
    };
    write_table(
        &out.join("linearize.csv"),
        "divided difference minus directly solved linearization, max norm, per step h",
        &["h", "error"],
        &rows,
    )?;
    Plot {
        title: "linearization error".into(),
        x_label: "h".into(),
        y_label: "max error".into(),
        log_x: true,
        log_y: true,
        series: vec![Series {
            label: format!("order {}", traces.len()),
            points: rows.clone(),
            dashed: false,
        }],
    }
    .write(&out.join("linearize.svg"))?;
    let summary = json!({"kind": "linearize", "order": traces.len(), "rows": rows, "slope": slope});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoParams {
    #[serde(default = "plus")]
    sign: String,
    #[serde(default = "e1")]
    omega: Vec2,
    #[serde(default = "half")]
    t0: f64,
    #[serde(default = "centre")]
    x0: Vec2,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_n1")]
    n1: usize,
    rhos: Vec<f64>,
}

fn plus() -> String {
    "plus".into()
}
fn e1() -> Vec2 {
    [1.0, 0.0]
}
fn half() -> f64 {
    0.5
}
fn centre() -> Vec2 {
    [0.5, 0.5]
}
fn default_delta() -> f64 {
    0.45
}
fn default_n1() -> usize {
    DEFAULT_N1
}

fn go_verify(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: GoParams = params(&cfg.params)?;
    let sign = match p.sign.as_str() {
        "plus" => Sign::Plus,
        "minus" => Sign::Minus,
        s => {
            return Err(Failure::Config(format!(
                "params.sign: expected \"plus\" or \"minus\", got \"{s}\""
            )))
        }
    };
    if p.rhos.is_empty() {
        return Err(Failure::Config("params.rhos: empty sweep".into()));
    }
    let bg = Background::from_law(&cfg.law, cfg.lambda, &grid.domain, EXTENSION_MARGIN)?;
    let mut spec = GoSpec::new(sign, p.rhos[0], p.omega, p.t0, p.x0, p.delta);
    spec.n1 = p.n1;
    spec.validate(grid.t_final)?;
    let fa = FrameAmplitudes::compute(&spec, &bg, grid)?;
    let residual = go_residual(&fa, grid, &p.rhos);
    let amps = Arc::new(GridAmplitudes::from_frame(&fa, &bg, grid)?);
    let mut rows = vec![];
    for (i, &rho) in p.rhos.iter().enumerate() {
        let r = remainder_solve(&amps, &bg, grid, rho)?;
        rows.push((rho, residual[i], r.l2, r.max_abs));
    }
    let rhos: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fit = |v: Vec<f64>| {
        (rhos.len() >= 2 && v.iter().all(|x| *x > 0.0)).then(|| loglog_slope(&rhos, &v))
    };
    let res_slope = fit(rows.iter().map(|r| r.1).collect());
    let rem_slope = fit(rows.iter().map(|r| r.2).collect());
    write_table(
        &out.join("go.csv"),
        "GO truncation residual and remainder norms per rho",
        &["rho", "residual", "remainder_l2", "remainder_max"],
        &rows,
    )?;
    Plot {
        title: "GO verification".into(),
        x_label: "rho".into(),
        y_label: "norm".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                label: "residual".into(),
                points: rows.iter().map(|r| (r.0, r.1)).collect(),
                dashed: false,
            },
            Series {
                label: "remainder L2".into(),
                points: rows.iter().map(|r| (r.0, r.2)).collect(),
                dashed: true,
            },
        ],
    }
    .write(&out.join("go.svg"))?;
    let summary = json!({"kind": "go-verify", "spec": spec, "rows": rows,
                         "residual_slope": res_slope, "remainder_slope": rem_slope});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityParams {
    m: usize,
    q: Vec<f64>,
    #[serde(default = "half")]
    t0: f64,
    #[serde(default = "centre")]
    x0: Vec2,
    #[serde(default = "default_delta")]
    delta: f64,
    rhos: Option<Vec<f64>>,
    #[serde(default)]
    with_remainder: bool,
}

fn density(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: DensityParams = params(&cfg.params)?;
    let q = SymmetricTensor::from_components(p.m, 2, p.q.clone())
        .map_err(|e| Failure::Config(format!("params.q: {e}")))?;
    let mut cc = ConcentrationConfig {
        t0: p.t0,
        x0: p.x0,
        delta: p.delta,
        with_remainder: p.with_remainder,
        ..ConcentrationConfig::default()
    };
    if let Some(r) = p.rhos {
        cc.rhos = r;
    }
    let bg = Background::from_law(&cfg.law, cfg.lambda, &grid.domain, EXTENSION_MARGIN)?;
    let schemes = match default_sample_set(p.m, bg.b(p.t0, p.x0)) {
        Ok(set) => schemes_for_samples(p.m, &set)?,
        Err(CoreError::Precondition(_)) => vec![],
        Err(e) => return Err(e.into()),
    };
    let rep = verify_density(&TensorField::Constant(q), &bg, grid, &cc, &schemes);
    write_json(&out.join("density.json"), &rep)?;
    let mut sweep = vec![];
    let mut series = vec![];
    for (i, l) in rep.limits.iter().enumerate() {
        let pts: Vec<(f64, f64)> = l
            .rhos
            .iter()
            .zip(&l.scaled)
            .map(|(r, s)| (1.0 / r, *s))
            .collect();
        for (x, y) in &pts {
            sweep.push((i, 1.0 / x, *x, *y));
        }
        series.push(Series {
            label: format!("sample {i}"),
            points: pts.clone(),
            dashed: false,
        });
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if xs.len() >= 2 {
            let (a, b) = linear_fit(&xs, &ys);
            series.push(Series {
                label: format!("fit {i}"),
                points: vec![(0.0, a), (xs[0], a + b * xs[0])],
                dashed: true,
            });
        }
    }
    write_table(
        &out.join("concentration.csv"),
        "rho^-(m+1) S_rho per sample against 1/rho",
        &["sample", "rho", "inv_rho", "scaled"],
        &sweep,
    )?;
    Plot {
        title: format!("concentration, m = {}", p.m),
        x_label: "1/rho".into(),
        y_label: "rho^-(m+1) S_rho".into(),
        log_x: false,
        log_y: false,
        series,
    }
    .write(&out.join("concentration.svg"))?;
    let rec = rep.recovered.clone().unwrap_or_default();
    write_table(
        &out.join("recovered_q.csv"),
        "planted and recovered independent components of Q",
        &["component", "planted", "recovered"],
        p.q.iter()
            .enumerate()
            .map(|(c, v)| (c, *v, rec.get(c).copied())),
    )?;
    let summary = json!({"kind": "density", "status": rep.status, "recovered": rep.recovered,
                         "max_component_error": rep.max_component_error, "failure": rep.failure});
    if let Some(f) = &rep.failure {
        return Err(Failure::Experiment(f.clone()));
    }
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscriminateParams {
    #[serde(default = "default_rs")]
    rs: Vec<f64>,
    #[serde(default = "west")]
    direction: Vec2,
    #[serde(default = "default_t0")]
    t0: f64,
    #[serde(default = "default_t1")]
    t1: f64,
    #[serde(default = "default_cut")]
    delta: f64,
    #[serde(default)]
    volume_check: bool,
    windows: Option<usize>,
}

fn default_rs() -> Vec<f64> {
    vec![0.4, 0.2, 0.1]
}
fn west() -> Vec2 {
    [-1.0, 0.0]
}
fn default_t0() -> f64 {
    0.2
}
fn default_t1() -> f64 {
    0.8
}
fn default_cut() -> f64 {
    0.1
}

fn discriminate(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: DiscriminateParams = params(&cfg.params)?;
    let law2 = cfg.law2.as_ref().expect("validated");
    let sc = SweepConfig {
        rs: p.rs,
        direction: p.direction,
        t0: p.t0,
        t1: p.t1,
        delta: p.delta,
        volume_check: p.volume_check,
    };
    let sweep = discrimination_sweep(grid, &cfg.law, law2, cfg.lambda, &sc)?;
    write_table(
        &out.join("discrimination.csv"),
        "I(r) = <(Lambda_1 - Lambda_2) Psi_y, Psi_y> and its log-profile prediction",
        &["r", "value", "prediction", "volume"],
        sweep
            .points
            .iter()
            .map(|q| (q.r, q.value, q.prediction, q.volume)),
    )?;
    Plot {
        title: "discrimination sweep".into(),
        x_label: "r".into(),
        y_label: "|I(r)|".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                label: "measured".into(),
                points: sweep.points.iter().map(|q| (q.r, q.value.abs())).collect(),
                dashed: false,
            },
            Series {
                label: "prediction".into(),
                points: sweep
                    .points
                    .iter()
                    .map(|q| (q.r, q.prediction.abs()))
                    .collect(),
                dashed: true,
            },
        ],
    }
    .write(&out.join("discrimination.svg"))?;
    let windows = match p.windows {
        Some(n) if n > 0 => {
            let scan = window_scan(grid, &cfg.law, law2, cfg.lambda, &sc, n)?;
            write_table(
                &out.join("windows.csv"),
                "per-window discrimination statistics",
                &["t0", "t1", "fixed_sign", "variation", "slope"],
                scan.iter()
                    .map(|s| (s.t0, s.t1, s.fixed_sign, s.variation, s.slope)),
            )?;
            Some(scan)
        }
        _ => None,
    };
    let summary = json!({"kind": "discriminate", "sweep": sweep, "windows": windows});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructParams {
    sources: Vec<SourceSpec>,
    segments: usize,
    #[serde(default)]
    noise: f64,
    #[serde(default = "one")]
    initial: f64,
    #[serde(default = "twenty")]
    max_iterations: usize,
}

fn one() -> f64 {
    1.0
}
fn twenty() -> usize {
    20
}

fn reconstruct(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: ReconstructParams = params(&cfg.params)?;
    let traces = p.sources.iter().map(|s| s.trace(grid)).collect();
    let campaign = measure_campaign(grid, &cfg.law, cfg.lambda, traces, p.noise, cfg.seed)?;
    let param = Parametrization::PiecewiseConstant {
        segments: p.segments,
    };
    let opts = ReconstructionOptions {
        initial: p.initial,
        max_iterations: p.max_iterations,
        ..ReconstructionOptions::default()
    };
    let rec = reconstruct_a(grid, &cfg.law.convection, &campaign, param, &opts)?;
    let tf = grid.t_final;
    let means = segment_means(|t| cfg.law.a.value(t, cfg.lambda), tf, p.segments);
    let w = tf / p.segments as f64;
    let rows: Vec<(usize, f64, f64, f64, f64)> = rec
        .coefficients
        .iter()
        .zip(&means)
        .enumerate()
        .map(|(i, (a, m))| (i, i as f64 * w, (i + 1) as f64 * w, *a, *m))
        .collect();
    write_table(
        &out.join("fit.csv"),
        "piecewise-constant fit of a(t, lambda) against the true segment means",
        &["segment", "t_lo", "t_hi", "fitted", "true_mean"],
        &rows,
    )?;
    write_table(
        &out.join("misfit.csv"),
        "Gauss-Newton misfit history",
        &["iterate", "misfit"],
        rec.misfit_history.iter().enumerate(),
    )?;
    let worst = rows
        .iter()
        .map(|r| (r.3 - r.4).abs() / r.4.abs())
        .fold(0.0, f64::max);
    let summary = json!({"kind": "reconstruct-a", "reconstruction": rec, "true_means": means,
                         "max_relative_error": worst});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecoverBParams {
    #[serde(default = "e1")]
    omega: Vec2,
    #[serde(default = "default_rho")]
    rho: f64,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "half")]
    t0: f64,
    #[serde(default = "centre")]
    x0: Vec2,
    taus: Vec<f64>,
    etas: Vec<f64>,
}

fn default_rho() -> f64 {
    200.0
}

fn recover_b(cfg: &ExperimentConfig, grid: &SpaceTimeGrid, out: &Path) -> Outcome {
    let p: RecoverBParams = params(&cfg.params)?;
    let law2 = cfg.law2.as_ref().expect("validated");
    let setup = FourierSetup {
        omega: parlab_core::geometry::unit(p.omega)?,
        rho: p.rho,
        delta: p.delta,
        t0: p.t0,
        x0: p.x0,
    };
    let bg = Background::from_law(&cfg.law, cfg.lambda, &grid.domain, EXTENSION_MARGIN)?;
    let lat = fourier_lattice(
        grid, &cfg.law, law2, cfg.lambda, &bg, &setup, &p.taus, &p.etas,
    )?;
    write_table(
        &out.join("lattice.csv"),
        "Fourier probe of (B1 - B2).omega against the direct windowed transform",
        &[
            "tau",
            "xi_x",
            "xi_y",
            "probe_re",
            "probe_im",
            "oracle_re",
            "oracle_im",
        ],
        lat.iter().map(|q| {
            (
                q.tau, q.xi[0], q.xi[1], q.probe.0, q.probe.1, q.oracle.0, q.oracle.1,
            )
        }),
    )?;
    let summary = json!({"kind": "recover-b", "setup": setup, "lattice": lat});
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}
