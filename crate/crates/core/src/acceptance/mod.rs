//! The acceptance battery. Each criterion returns a structured outcome; the CLI `verify`
//! command and the `acceptance` test target both print one line per criterion.

mod density;
mod forward;
mod go;
mod recovery;

use serde::Serialize;

pub use density::{
    criterion_08_exponent_cancellation, criterion_09_concentration_m1,
    criterion_10_concentration_higher, criterion_11_q_recovery, planted_q1,
};
pub use forward::{
    criterion_01_forward_convergence, criterion_02_exact_exponential,
    criterion_03_first_linearization, criterion_04_second_linearization,
};
pub use go::{
    criterion_05_transport_hierarchy, criterion_06_go_residual_order, criterion_07_remainder_decay,
    go_background,
};
pub use recovery::{
    criterion_12_diffusion_discrimination, criterion_13_reconstruct_a, criterion_14_fourier_probe,
};

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// Short human-readable summary of the measured statistics.
    pub summary: String,
    pub details: serde_json::Value,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary
        )
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).1
}

/// Least-squares line y = a + b x; returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Runs every criterion in order.
pub fn run_all() -> Vec<Outcome> {
    run_all_filtered(&[])
}

/// Runs the criteria whose ids are listed, or all of them when `ids` is empty.
pub fn run_all_filtered(ids: &[u32]) -> Vec<Outcome> {
    let runners: Vec<fn() -> Outcome> = vec![
        criterion_01_forward_convergence,
        criterion_02_exact_exponential,
        criterion_03_first_linearization,
        criterion_04_second_linearization,
        criterion_05_transport_hierarchy,
        criterion_06_go_residual_order,
        criterion_07_remainder_decay,
        criterion_08_exponent_cancellation,
        criterion_09_concentration_m1,
        criterion_10_concentration_higher,
        criterion_11_q_recovery,
        criterion_12_diffusion_discrimination,
        criterion_13_reconstruct_a,
        criterion_14_fourier_probe,
    ];
    runners
        .into_iter()
        .enumerate()
        .filter(|(i, _)| ids.is_empty() || ids.contains(&(*i as u32 + 1)))
        .map(|(_, f)| f())
        .collect()
}

pub(crate) fn failed(id: u32, name: &str, err: impl std::fmt::Display) -> Outcome {
    Outcome {
        id,
        name: name.into(),
        passed: false,
        summary: format!("error: {err}"),
        details: serde_json::Value::Null,
    }
}
