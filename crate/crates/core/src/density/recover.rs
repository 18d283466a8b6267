use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel_k;
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, perp, scale, Vec2};
use crate::laws::SymmetricTensor;

/// One observed kernel value K_s(w1, w2) at the concentration point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSample {
    pub s: usize,
    pub omega1: Vec2,
    pub omega2: Vec2,
    pub k: f64,
}

fn rotate(v: Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Deterministic (s, w1, w2) set adapted to xi = B0/|B0|: xi, its complement and 2m rotations of
/// xi by pi k / 7. For m = 1 the pairs are orthogonal; for m >= 2 every admissible ordered pair
/// (w1.w2 away from -1, 0, 1) is used with s = 2..=m.
pub fn default_sample_set(m: usize, b0: Vec2) -> Result<Vec<(usize, Vec2, Vec2)>> {
    let nb = norm(b0);
    if nb == 0.0 {
        return Err(Error::Precondition(
            "B0 = 0: the kernel carries no information about Q".into(),
        ));
    }
    let xi = scale(b0, 1.0 / nb);
    let mut dirs = vec![xi, perp(xi)];
    for k in 1..=2 * m {
        dirs.push(rotate(xi, std::f64::consts::PI * k as f64 / 7.0));
    }
    let mut out = Vec::new();
    if m == 1 {
        for d in dirs.iter().filter(|d| **d != perp(xi)) {
            out.push((1, *d, perp(*d)));
        }
        return Ok(out);
    }
    for &w1 in &dirs {
        for &w2 in &dirs {
            let c = dot(w1, w2);
            if c.abs() < 1e-3 || (c.abs() - 1.0).abs() < 1e-3 {
                continue;
            }
            for s in 2..=m {
                out.push((s, w1, w2));
            }
        }
    }
    Ok(out)
}

/// Exact kernel values of a known tensor over a sample set.
pub fn kernel_samples(
    m: usize,
    q: &SymmetricTensor,
    b0: Vec2,
    set: &[(usize, Vec2, Vec2)],
) -> Vec<KSample> {
    set.iter()
        .map(|&(s, omega1, omega2)| KSample {
            s,
            omega1,
            omega2,
            k: kernel_k(m, s, omega1, omega2, q, b0),
        })
        .collect()
}

/// Least-squares solve for the independent components of Q from kernel samples.
pub fn recover_q(m: usize, b0: Vec2, samples: &[KSample]) -> Result<SymmetricTensor> {
    if norm(b0) == 0.0 {
        return Err(Error::Precondition(
            "B0 = 0: the kernel carries no information about Q".into(),
        ));
    }
    let nc = SymmetricTensor::zeros(m, 2).n_components();
    if samples.is_empty() {
        return Err(Error::RankDeficient {
            rank: 0,
            nullity: nc,
        });
    }
    let basis: Vec<SymmetricTensor> = (0..nc)
        .map(|c| {
            let mut e = vec![0.0; nc];
            e[c] = 1.0;
            SymmetricTensor::from_components(m, 2, e).expect("component count")
        })
        .collect();
    let a = DMatrix::from_fn(samples.len(), nc, |i, c| {
        let s = &samples[i];
        kernel_k(m, s.s, s.omega1, s.omega2, &basis[c], b0)
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.k));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    if rank < nc {
        return Err(Error::RankDeficient {
            rank,
            nullity: nc - rank,
        });
    }
    let x = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::Solver(e.to_string()))?;
    SymmetricTensor::from_components(m, 2, x.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(m: usize) -> SymmetricTensor {
        let n = SymmetricTensor::zeros(m, 2).n_components();
        SymmetricTensor::from_components(
            m,
            2,
            (0..n)
                .map(|i| 0.7 - 0.45 * i as f64 + 0.1 * (i * i) as f64)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let b0 = [0.8, -0.3];
        for m in 1..=3 {
            let q = planted(m);
            let set = default_sample_set(m, b0).unwrap();
            let rec = recover_q(m, b0, &kernel_samples(m, &q, b0, &set)).unwrap();
            for (r, p) in rec.components.iter().zip(&q.components) {
                assert!((r - p).abs() < 1e-10, "m={m}: {r} vs {p}");
            }
        }
    }

    #[test]
    fn diagonal_example_and_zero_samples() {
        let q = SymmetricTensor::from_fn(2, 2, |i| match (i[0], i[1]) {
            (0, 0) => 1.0,
            (1, 1) => -2.0,
            _ => 0.0,
        });
        let b0 = [1.0, 0.0];
        let set = default_sample_set(2, b0).unwrap();
        let rec = recover_q(2, b0, &kernel_samples(2, &q, b0, &set)).unwrap();
        assert!(rec
            .components
            .iter()
            .zip(&q.components)
            .all(|(r, p)| (r - p).abs() < 1e-10));
        let zero: Vec<KSample> = set
            .iter()
            .map(|&(s, omega1, omega2)| KSample {
                s,
                omega1,
                omega2,
                k: 0.0,
            })
            .collect();
        assert!(recover_q(2, b0, &zero).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn m1_recovers_both_directions() {
        let b0 = [0.0, 2.0];
        let q = SymmetricTensor::from_components(1, 2, vec![0.3, 1.5]).unwrap();
        let set = default_sample_set(1, b0).unwrap();
        assert_eq!(set.len(), 3);
        let rec = recover_q(1, b0, &kernel_samples(1, &q, b0, &set)).unwrap();
        assert!((rec.components[0] - 0.3).abs() < 1e-12 && (rec.components[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn failures() {
        assert!(matches!(
            recover_q(2, [0.0, 0.0], &[]),
            Err(Error::Precondition(_))
        ));
        let one = [KSample {
            s: 2,
            omega1: [1.0, 0.0],
            omega2: [0.6, 0.8],
            k: 1.0,
        }];
        assert!(matches!(
            recover_q(2, [1.0, 0.0], &one),
            Err(Error::RankDeficient {
                rank: 1,
                nullity: 2
            })
        ));
    }

    #[test]
    fn homogeneity() {
        let b0 = [0.4, 0.9];
        let q = planted(2);
        let set = default_sample_set(2, b0).unwrap();
        let mut s = kernel_samples(2, &q, b0, &set);
        for x in &mut s {
            x.k *= -3.0;
        }
        let rec = recover_q(2, b0, &s).unwrap();
        assert!(rec
            .components
            .iter()
            .zip(&q.components)
            .all(|(r, p)| (r + 3.0 * p).abs() < 1e-10));
    }
}
