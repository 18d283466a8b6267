//! Domains, space-time grids, boundary structure, rays and coefficient extension.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Counter-clockwise rotation by 90 degrees; the orthonormal complement of a unit vector.
#[inline]
pub fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

pub fn unit(a: Vec2) -> Result<Vec2> {
    let n = norm(a);
    if !n.is_finite() || n == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "direction {a:?} cannot be normalized"
        )));
    }
    Ok(scale(a, 1.0 / n))
}

pub fn angle_dir(theta: f64) -> Vec2 {
    [theta.cos(), theta.sin()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    UnitSquare,
    Disc { center: Vec2, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: Shape,
}

impl Domain {
    pub fn unit_square() -> Self {
        Domain {
            shape: Shape::UnitSquare,
        }
    }

    pub fn disc(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "disc radius must be positive, got {radius}"
            )));
        }
        Ok(Domain {
            shape: Shape::Disc { center, radius },
        })
    }

    /// Spatial dimension. Grids are two-dimensional.
    pub fn dim(&self) -> usize {
        2
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match self.shape {
            Shape::UnitSquare => ([0.0, 0.0], [1.0, 1.0]),
            Shape::Disc {
                center: c,
                radius: r,
            } => ([c[0] - r, c[1] - r], [c[0] + r, c[1] + r]),
        }
    }

    /// Closed-set membership with a small relative tolerance.
    pub fn contains(&self, x: Vec2) -> bool {
        self.distance_outside(x) <= 1e-12
    }

    /// Euclidean distance from `x` to the closed domain (zero inside).
    pub fn distance_outside(&self, x: Vec2) -> f64 {
        match self.shape {
            Shape::UnitSquare => {
                let dx = (-x[0]).max(x[0] - 1.0).max(0.0);
                let dy = (-x[1]).max(x[1] - 1.0).max(0.0);
                (dx * dx + dy * dy).sqrt()
            }
            Shape::Disc { center, radius } => (norm(sub(x, center)) - radius).max(0.0),
        }
    }

    /// Distance from an interior point to the boundary (zero outside).
    pub fn distance_inside(&self, x: Vec2) -> f64 {
        match self.shape {
            Shape::UnitSquare => x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]).max(0.0),
            Shape::Disc { center, radius } => (radius - norm(sub(x, center))).max(0.0),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self.shape {
            Shape::UnitSquare => 4.0,
            Shape::Disc { radius, .. } => 2.0 * std::f64::consts::PI * radius,
        }
    }

    /// Arc-length chart of the boundary: point at arc length `s` (mod perimeter), counter-clockwise.
    pub fn boundary_point(&self, s: f64) -> Vec2 {
        let p = self.perimeter();
        let s = s.rem_euclid(p);
        match self.shape {
            Shape::UnitSquare => match s {
                s if s < 1.0 => [s, 0.0],
                s if s < 2.0 => [1.0, s - 1.0],
                s if s < 3.0 => [3.0 - s, 1.0],
                s => [0.0, 4.0 - s],
            },
            Shape::Disc { center, radius } => add(center, scale(angle_dir(s / radius), radius)),
        }
    }

    /// Nearest point of the boundary for a point in the closed domain or near it.
    pub fn project_to_boundary(&self, x: Vec2) -> Vec2 {
        match self.shape {
            Shape::UnitSquare => {
                let cands = [(x[0], 0usize), (1.0 - x[0], 1), (x[1], 2), (1.0 - x[1], 3)];
                let (_, face) = cands
                    .iter()
                    .copied()
                    .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
                    .unwrap();
                let c = |v: f64| v.clamp(0.0, 1.0);
                match face {
                    0 => [0.0, c(x[1])],
                    1 => [1.0, c(x[1])],
                    2 => [c(x[0]), 0.0],
                    _ => [c(x[0]), 1.0],
                }
            }
            Shape::Disc { center, radius } => {
                let d = sub(x, center);
                let n = norm(d);
                if n == 0.0 {
                    add(center, [radius, 0.0])
                } else {
                    add(center, scale(d, radius / n))
                }
            }
        }
    }
}

/// Unit outward normal at a boundary point; errors for points off the boundary.
pub fn outward_normal(domain: &Domain, x: Vec2, tol: f64) -> Result<Vec2> {
    match domain.shape {
        Shape::UnitSquare => {
            if x[0] < -tol || x[0] > 1.0 + tol || x[1] < -tol || x[1] > 1.0 + tol {
                return Err(Error::Domain(format!("{x:?} lies outside the unit square")));
            }
            let mut n = [0.0, 0.0];
            if x[0].abs() <= tol {
                n[0] -= 1.0;
            }
            if (x[0] - 1.0).abs() <= tol {
                n[0] += 1.0;
            }
            if x[1].abs() <= tol {
                n[1] -= 1.0;
            }
            if (x[1] - 1.0).abs() <= tol {
                n[1] += 1.0;
            }
            if n == [0.0, 0.0] {
                return Err(Error::Domain(format!("{x:?} is not on the boundary")));
            }
            unit(n)
        }
        Shape::Disc { center, radius } => {
            let d = sub(x, center);
            if (norm(d) - radius).abs() > tol {
                return Err(Error::Domain(format!("{x:?} is not on the circle")));
            }
            unit(d)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Outside,
    Interior,
    Boundary,
}

#[derive(Clone, Debug)]
pub struct BoundaryNode {
    /// Flat spatial node index.
    pub node: usize,
    /// Point on the boundary where Dirichlet data is sampled.
    pub point: Vec2,
    /// Unit outward normal.
    pub normal: Vec2,
    /// Vector contracted with the gradient to form the flux. Equals the normal except at square
    /// corners, where it is the mean of the two face normals.
    pub flux_dir: Vec2,
    /// Arc-length quadrature weight.
    pub weight: f64,
}

/// Tensor-product grid on the bounding box of the domain times a uniform time grid.
#[derive(Clone, Debug)]
pub struct SpaceTimeGrid {
    pub domain: Domain,
    pub t_final: f64,
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub h: f64,
    pub origin: Vec2,
    kinds: Vec<NodeKind>,
    boundary: Vec<BoundaryNode>,
    interior: Vec<usize>,
    unknown: Vec<usize>,
}

pub const NOT_UNKNOWN: usize = usize::MAX;

pub fn build_grid(domain: Domain, t_final: f64, nt: usize, nx: usize) -> Result<SpaceTimeGrid> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "time horizon must be positive, got {t_final}"
        )));
    }
    if nt < 4 || nx < 4 {
        return Err(Error::InvalidConfig(format!(
            "resolutions must be at least 4, got Nt={nt}, Nx={nx}"
        )));
    }
    let (lo, hi) = domain.bounding_box();
    let h = (hi[0] - lo[0]) / nx as f64;
    let side = nx + 1;
    let coord = |idx: usize| -> Vec2 {
        [
            lo[0] + (idx / side) as f64 * h,
            lo[1] + (idx % side) as f64 * h,
        ]
    };
    let mut kinds = vec![NodeKind::Outside; side * side];
    let mut boundary = Vec::new();
    match domain.shape {
        Shape::UnitSquare => {
            for i in 0..side {
                for j in 0..side {
                    let idx = i * side + j;
                    let on_edge = i == 0 || i == nx || j == 0 || j == nx;
                    kinds[idx] = if on_edge {
                        NodeKind::Boundary
                    } else {
                        NodeKind::Interior
                    };
                    if on_edge {
                        let mut faces = Vec::with_capacity(2);
                        if i == 0 {
                            faces.push([-1.0, 0.0]);
                        }
                        if i == nx {
                            faces.push([1.0, 0.0]);
                        }
                        if j == 0 {
                            faces.push([0.0, -1.0]);
                        }
                        if j == nx {
                            faces.push([0.0, 1.0]);
                        }
                        let sum = faces.iter().fold([0.0, 0.0], |a, f| add(a, *f));
                        let normal = unit(sum)?;
                        let flux_dir = scale(sum, 1.0 / faces.len() as f64);
                        boundary.push(BoundaryNode {
                            node: idx,
                            point: coord(idx),
                            normal,
                            flux_dir,
                            weight: h,
                        });
                    }
                }
            }
        }
        Shape::Disc { center, radius } => {
            let inside = |i: isize, j: isize| -> bool {
                if i < 0 || j < 0 || i > nx as isize || j > nx as isize {
                    return false;
                }
                let x = coord(i as usize * side + j as usize);
                norm(sub(x, center)) <= radius * (1.0 + 1e-12)
            };
            for i in 0..side {
                for j in 0..side {
                    let (ii, jj) = (i as isize, j as isize);
                    if !inside(ii, jj) {
                        continue;
                    }
                    let all_in = inside(ii - 1, jj)
                        && inside(ii + 1, jj)
                        && inside(ii, jj - 1)
                        && inside(ii, jj + 1);
                    let idx = i * side + j;
                    if all_in {
                        kinds[idx] = NodeKind::Interior;
                    } else {
                        kinds[idx] = NodeKind::Boundary;
                        let x = coord(idx);
                        let d = sub(x, center);
                        let normal = if norm(d) == 0.0 { [1.0, 0.0] } else { unit(d)? };
                        let point = add(center, scale(normal, radius));
                        boundary.push(BoundaryNode {
                            node: idx,
                            point,
                            normal,
                            flux_dir: normal,
                            weight: 0.0,
                        });
                    }
                }
            }
            // arc-length weights from the angular gaps between neighbouring boundary nodes
            let mut order: Vec<usize> = (0..boundary.len()).collect();
            let ang = |b: &BoundaryNode| b.normal[1].atan2(b.normal[0]);
            order.sort_by(|&a, &b| ang(&boundary[a]).total_cmp(&ang(&boundary[b])));
            let nb = order.len();
            let two_pi = 2.0 * std::f64::consts::PI;
            for k in 0..nb {
                let prev = ang(&boundary[order[(k + nb - 1) % nb]]);
                let cur = ang(&boundary[order[k]]);
                let next = ang(&boundary[order[(k + 1) % nb]]);
                let gap = |a: f64, b: f64| (b - a).rem_euclid(two_pi);
                boundary[order[k]].weight = radius * 0.5 * (gap(prev, cur) + gap(cur, next));
            }
        }
    }
    let mut interior = Vec::new();
    let mut unknown = vec![NOT_UNKNOWN; side * side];
    for (idx, k) in kinds.iter().enumerate() {
        if *k == NodeKind::Interior {
            unknown[idx] = interior.len();
            interior.push(idx);
        }
    }
    Ok(SpaceTimeGrid {
        domain,
        t_final,
        nt,
        nx,
        dt: t_final / nt as f64,
        h,
        origin: lo,
        kinds,
        boundary,
        interior,
        unknown,
    })
}

impl SpaceTimeGrid {
    /// Nodes per axis.
    #[inline]
    pub fn side(&self) -> usize {
        self.nx + 1
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.side() * self.side()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.side(), idx % self.side())
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> Vec2 {
        let (i, j) = self.ij(idx);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    #[inline]
    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.kinds[idx] != NodeKind::Outside
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Position of a node among the interior unknowns, or `NOT_UNKNOWN`.
    #[inline]
    pub fn unknown_of(&self, idx: usize) -> usize {
        self.unknown[idx]
    }

    /// Spatial trapezoid weight of a node (staircase cell measure on the disc).
    pub fn cell_weight(&self, idx: usize) -> f64 {
        match self.domain.shape {
            Shape::UnitSquare => {
                let (i, j) = self.ij(idx);
                let wi = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == self.nx { 0.5 } else { 1.0 };
                wi * wj * self.h * self.h
            }
            Shape::Disc { .. } => {
                if self.is_active(idx) {
                    self.h * self.h
                } else {
                    0.0
                }
            }
        }
    }

    /// Trapezoid weight in time.
    #[inline]
    pub fn time_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.nt {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Same domain and horizon with both resolutions multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<SpaceTimeGrid> {
        build_grid(
            self.domain.clone(),
            self.t_final,
            self.nt * factor,
            self.nx * factor,
        )
    }
}

/// Smooth plateau bump: 1 on [-1/2, 1/2], 0 outside (-1, 1), C-infinity in between.
#[derive(Clone, Default)]
pub enum PlateauBump {
    #[default]
    Standard,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PlateauBump {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlateauBump::Standard => write!(f, "Standard"),
            PlateauBump::Custom(_) => write!(f, "Custom"),
        }
    }
}

pub fn smooth_step(u: f64) -> f64 {
    let f = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    let a = f(u);
    let b = f(1.0 - u);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl PlateauBump {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            PlateauBump::Standard => {
                let a = t.abs();
                if a <= 0.5 {
                    1.0
                } else if a >= 1.0 {
                    0.0
                } else {
                    smooth_step(2.0 - 2.0 * a)
                }
            }
            PlateauBump::Custom(f) => f(t),
        }
    }

    /// Checks plateau and support on a sample set.
    pub fn check_admissible(&self) -> Result<()> {
        for k in 0..=200 {
            let t = -1.5 + 3.0 * k as f64 / 200.0;
            let v = self.eval(t);
            let ok = if t.abs() <= 0.5 {
                (v - 1.0).abs() < 1e-12
            } else if t.abs() >= 1.0 {
                v.abs() < 1e-12
            } else {
                (0.0..=1.0).contains(&v)
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "plateau bump violates plateau/support at t={t}: {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The standard bump as a plain function.
pub fn chi0(t: f64) -> f64 {
    PlateauBump::Standard.eval(t)
}

/// Straight ray x0 + s*omega clipped to an axis-aligned box.
#[derive(Clone, Debug)]
pub struct Ray {
    pub base: Vec2,
    pub direction: Vec2,
    pub entry: f64,
    pub exit: f64,
    pub samples: Vec<f64>,
}

impl Ray {
    /// Forward ray (s >= 0) through the box, sampled with an even number of intervals no wider
    /// than `max_spacing`.
    pub fn forward_in_box(
        base: Vec2,
        direction: Vec2,
        lo: Vec2,
        hi: Vec2,
        max_spacing: f64,
    ) -> Result<Ray> {
        let n = norm(direction);
        if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "ray direction {direction:?} is not a unit vector"
            )));
        }
        if !(max_spacing > 0.0) {
            return Err(Error::InvalidConfig("ray spacing must be positive".into()));
        }
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for d in 0..2 {
            if direction[d].abs() < 1e-300 {
                if base[d] < lo[d] || base[d] > hi[d] {
                    t0 = f64::INFINITY;
                }
                continue;
            }
            let a = (lo[d] - base[d]) / direction[d];
            let b = (hi[d] - base[d]) / direction[d];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if !t1.is_finite() {
            return Err(Error::InvalidConfig(
                "ray never leaves the support box".into(),
            ));
        }
        let entry = t0.max(0.0);
        let exit = t1.max(entry);
        let len = exit - entry;
        let mut m = (len / max_spacing).ceil() as usize;
        m = m.max(2);
        if m % 2 == 1 {
            m += 1;
        }
        let samples = (0..=m).map(|k| entry + len * k as f64 / m as f64).collect();
        Ok(Ray {
            base,
            direction,
            entry,
            exit,
            samples,
        })
    }

    pub fn point(&self, s: f64) -> Vec2 {
        add(self.base, scale(self.direction, s))
    }
}

/// Composite Simpson rule on uniformly spaced samples (even number of intervals).
pub fn simpson(values: &[f64], spacing: f64) -> f64 {
    let m = values.len() - 1;
    debug_assert!(m.is_multiple_of(2));
    let mut acc = values[0] + values[m];
    for (k, v) in values.iter().enumerate().take(m).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * spacing / 3.0
}

/// Vector field on the extension box, e.g. an extended convection coefficient.
pub trait VectorField: Send + Sync {
    fn eval(&self, t: f64, x: Vec2) -> Vec2;
}

impl<F> VectorField for F
where
    F: Fn(f64, Vec2) -> Vec2 + Send + Sync,
{
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        self(t, x)
    }
}

/// Integral of field(x + s omega, t) . omega over s >= 0 up to the box exit.
pub fn ray_integral_forward(
    field: &dyn VectorField,
    x: Vec2,
    omega: Vec2,
    t: f64,
    lo: Vec2,
    hi: Vec2,
    max_spacing: f64,
) -> Result<f64> {
    let ray = Ray::forward_in_box(x, omega, lo, hi, max_spacing)?;
    if ray.exit <= ray.entry {
        return Ok(0.0);
    }
    let vals: Vec<f64> = ray
        .samples
        .iter()
        .map(|&s| dot(field.eval(t, ray.point(s)), omega))
        .collect();
    let spacing = (ray.exit - ray.entry) / (vals.len() - 1) as f64;
    Ok(simpson(&vals, spacing))
}

/// Compactly supported extension: B0 times a plateau cutoff in the distance to the domain.
#[derive(Clone)]
pub struct Extension {
    pub domain: Domain,
    pub margin: f64,
    pub bump: PlateauBump,
    pub field: Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>,
}

impl Extension {
    /// The box outside which the extension vanishes.
    pub fn support_box(&self) -> (Vec2, Vec2) {
        let (lo, hi) = self.domain.bounding_box();
        (
            [lo[0] - self.margin, lo[1] - self.margin],
            [hi[0] + self.margin, hi[1] + self.margin],
        )
    }
}

impl VectorField for Extension {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        let d = self.domain.distance_outside(x);
        if d == 0.0 {
            return (self.field)(t, x);
        }
        let w = self.bump.eval(d / self.margin);
        if w == 0.0 {
            [0.0, 0.0]
        } else {
            scale((self.field)(t, x), w)
        }
    }
}

pub fn extend_coefficient(
    domain: &Domain,
    field: Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>,
    margin: f64,
) -> Result<Extension> {
    if !(margin > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "extension margin must be positive, got {margin}"
        )));
    }
    Ok(Extension {
        domain: domain.clone(),
        margin,
        bump: PlateauBump::Standard,
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_counts() {
        let g = build_grid(Domain::unit_square(), 1.0, 8, 8).unwrap();
        assert_eq!(g.n_nodes(), 81);
        assert_eq!(g.boundary().len(), 32);
        assert_eq!(g.interior().len(), 49);
        assert!((g.dt - 0.125).abs() < 1e-15);
        let total: f64 = g.boundary().iter().map(|b| b.weight).sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn disc_mask_excludes_corners() {
        let g = build_grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0, 4, 16).unwrap();
        let corner = g.index(0, 0);
        assert_eq!(g.kind(corner), NodeKind::Outside);
        assert_eq!(g.kind(g.index(8, 8)), NodeKind::Interior);
        for b in g.boundary() {
            assert!((norm(b.normal) - 1.0).abs() < 1e-14);
            assert!(norm(g.coords(b.node)) <= 1.0 + 1e-12);
        }
        let total: f64 = g.boundary().iter().map(|b| b.weight).sum();
        assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn invalid_resolution() {
        assert!(matches!(
            build_grid(Domain::unit_square(), 1.0, 8, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            build_grid(Domain::unit_square(), -1.0, 8, 8),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn refinement_nests_nodes() {
        let g = build_grid(Domain::unit_square(), 1.0, 4, 8).unwrap();
        let f = g.refined(2).unwrap();
        for idx in 0..g.n_nodes() {
            let (i, j) = g.ij(idx);
            let x = g.coords(idx);
            let y = f.coords(f.index(2 * i, 2 * j));
            assert_eq!(x, y);
        }
    }

    #[test]
    fn normals() {
        let sq = Domain::unit_square();
        assert_eq!(outward_normal(&sq, [1.0, 0.5], 1e-12).unwrap(), [1.0, 0.0]);
        let d = Domain::disc([0.0, 0.0], 1.0).unwrap();
        let n = outward_normal(&d, [0.0, 1.0], 1e-12).unwrap();
        assert!((n[0]).abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15);
        let n = outward_normal(&d, [0.6, 0.8], 1e-12).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-15 && (n[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            outward_normal(&sq, [0.5, 0.5], 1e-12),
            Err(Error::Domain(_))
        ));
        // points outward
        let x = [0.6, 0.8];
        assert!(!d.contains(add(x, scale(n, 1e-6))));
    }

    #[test]
    fn plateau_bump_shape() {
        assert_eq!(chi0(0.0), 1.0);
        assert_eq!(chi0(0.5), 1.0);
        assert_eq!(chi0(-1.0), 0.0);
        assert!(chi0(0.75) > 0.0 && chi0(0.75) < 1.0);
        assert!((chi0(0.75) - 0.5).abs() < 1e-12);
        PlateauBump::Standard.check_admissible().unwrap();
    }

    #[test]
    fn ray_integral_slab() {
        let lo = [-1.0, -1.0];
        let hi = [2.0, 2.0];
        let zero = |_t: f64, _x: Vec2| [0.0, 0.0];
        assert_eq!(
            ray_integral_forward(&zero, [0.5, 0.5], [1.0, 0.0], 0.0, lo, hi, 0.01).unwrap(),
            0.0
        );
        // constant on the slab 1 <= x <= 1.5, x before the slab
        let slab = |_t: f64, x: Vec2| {
            if x[0] >= 1.0 && x[0] <= 1.5 {
                [2.0, 3.0]
            } else {
                [0.0, 0.0]
            }
        };
        let v = ray_integral_forward(&slab, [0.2, 0.5], [1.0, 0.0], 0.0, lo, hi, 1e-4).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn ray_integral_additive() {
        let lo = [-1.0, -1.0];
        let hi = [2.0, 2.0];
        let f = |_t: f64, x: Vec2| [(-(x[0] - 0.5).powi(2) * 8.0).exp(), x[1]];
        let om = unit([0.6, 0.8]).unwrap();
        let x = [0.1, 0.2];
        let full = ray_integral_forward(&f, x, om, 0.0, lo, hi, 1e-3).unwrap();
        // split at s = 0.7
        let ray = Ray::forward_in_box(x, om, lo, hi, 1e-3).unwrap();
        let mid = ray.point(0.7);
        let tail = ray_integral_forward(&f, mid, om, 0.0, lo, hi, 1e-3).unwrap();
        let n = 1400;
        let head: Vec<f64> = (0..=n)
            .map(|k| dot(f(0.0, ray.point(0.7 * k as f64 / n as f64)), om))
            .collect();
        let head = simpson(&head, 0.7 / n as f64);
        assert!((full - head - tail).abs() < 1e-10);
    }

    #[test]
    fn extension_properties() {
        let dom = Domain::unit_square();
        let b = extend_coefficient(&dom, Arc::new(|_t, _x| [1.0, -2.0]), 0.25).unwrap();
        assert_eq!(b.eval(0.3, [0.4, 0.9]), [1.0, -2.0]);
        assert_eq!(b.eval(0.3, [1.3, 0.5]), [0.0, 0.0]);
        assert_eq!(b.eval(0.3, [1.1, 0.5]), [1.0, -2.0]);
        let z = extend_coefficient(&dom, Arc::new(|_t, _x| [0.0, 0.0]), 0.25).unwrap();
        assert_eq!(z.eval(0.0, [1.1, 1.1]), [0.0, 0.0]);
    }
}
