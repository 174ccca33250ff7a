//! Model closed oriented manifolds, their reference volume forms and
//! midpoint quadrature grids.
//!
//! `sphere2` is the unit sphere in R^3 charted by colatitude/longitude with
//! two polar cap cells; `torus2` and `torus3` are flat unit tori `[0,1)^n`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::expr::VarSet;

pub type Point = [f64; 3];

/// Smallest per-axis resolution accepted by [`make_grid`].
pub const MIN_RESOLUTION: usize = 16;

/// Supersampling factor per axis for cells near the zero band.
pub const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("resolution {got:?} is too low: every axis needs at least {min} cells")]
    ResolutionTooLow { got: Vec<usize>, min: usize },
    #[error("resolution {got:?} has the wrong number of axes for {kind} (expected {expected})")]
    ResolutionShape {
        kind: DomainKind,
        got: Vec<usize>,
        expected: usize,
    },
    #[error("point {point:?} is off the unit sphere (|p| = {norm})")]
    OffManifold { point: Point, norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Sphere2,
    Torus2,
    Torus3,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Sphere2 => "sphere2",
            DomainKind::Torus2 => "torus2",
            DomainKind::Torus3 => "torus3",
        }
    }

    /// Number of coordinates a point carries (ambient for the sphere).
    pub fn ambient_dim(self) -> usize {
        match self {
            DomainKind::Sphere2 | DomainKind::Torus3 => 3,
            DomainKind::Torus2 => 2,
        }
    }

    /// Dimension n of the manifold itself.
    pub fn manifold_dim(self) -> usize {
        match self {
            DomainKind::Sphere2 | DomainKind::Torus2 => 2,
            DomainKind::Torus3 => 3,
        }
    }

    /// Total reference volume.
    pub fn total_volume(self) -> f64 {
        match self {
            DomainKind::Sphere2 => 4.0 * PI,
            DomainKind::Torus2 | DomainKind::Torus3 => 1.0,
        }
    }

    pub fn variables(self) -> VarSet {
        match self {
            DomainKind::Torus2 => VarSet::Xy,
            DomainKind::Sphere2 | DomainKind::Torus3 => VarSet::Xyz,
        }
    }

    pub fn is_torus(self) -> bool {
        !matches!(self, DomainKind::Sphere2)
    }

    pub fn default_resolution(self) -> Vec<usize> {
        match self {
            DomainKind::Sphere2 => vec![256, 512],
            DomainKind::Torus2 => vec![256, 256],
            DomainKind::Torus3 => vec![64, 64, 64],
        }
    }

    /// Point coordinates as the slice an expression expects.
    pub fn coords(self, p: &Point) -> &[f64] {
        &p[..self.ambient_dim()]
    }

    /// Displacement from `a` to `b`; minimum image on the tori.
    pub fn displacement(self, a: &Point, b: &Point) -> Point {
        let mut d = sub(b, a);
        if self.is_torus() {
            for c in d.iter_mut().take(self.ambient_dim()) {
                *c -= c.round();
            }
        }
        d
    }

    /// Reference volume form evaluated on tangent vectors at `p`.
    /// Takes `n` vectors; the unused slots are ignored.
    pub fn volume_form(self, p: &Point, v: &[Point]) -> f64 {
        match self {
            DomainKind::Sphere2 => det3(p, &v[0], &v[1]),
            DomainKind::Torus2 => v[0][0] * v[1][1] - v[0][1] * v[1][0],
            DomainKind::Torus3 => det3(&v[0], &v[1], &v[2]),
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere2" => Ok(DomainKind::Sphere2),
            "torus2" => Ok(DomainKind::Torus2),
            "torus3" => Ok(DomainKind::Torus3),
            other => Err(format!(
                "unknown domain `{other}` (expected sphere2, torus2 or torus3)"
            )),
        }
    }
}

pub fn sphere_point(theta: f64, phi: f64) -> Point {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Chart vectors dp/dtheta and dp/dphi at (theta, phi).
pub fn sphere_frame(theta: f64, phi: f64) -> (Point, Point) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    ([ct * cp, ct * sp, -st], [-st * sp, st * cp, 0.0])
}

/// Region of a chart covered by one quadrature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Patch {
    /// Axis-aligned box `[lo, lo + size)` in flat torus coordinates.
    Box { lo: Point, size: Point, dim: usize },
    /// Colatitude/longitude rectangle on the unit sphere.
    Sphere { theta: (f64, f64), phi: (f64, f64) },
}

impl Patch {
    /// Chart center and exact reference measure.
    fn center_and_measure(&self) -> (Point, f64) {
        match *self {
            Patch::Box { lo, size, dim } => {
                let mut c = [0.0; 3];
                let mut m = 1.0;
                for i in 0..dim {
                    c[i] = lo[i] + 0.5 * size[i];
                    m *= size[i];
                }
                (c, m)
            }
            Patch::Sphere { theta, phi } => {
                let m = (phi.1 - phi.0) * (theta.0.cos() - theta.1.cos());
                let c = if theta.0 == 0.0 && phi.1 - phi.0 >= 2.0 * PI {
                    [0.0, 0.0, 1.0]
                } else if theta.1 >= PI && phi.1 - phi.0 >= 2.0 * PI {
                    [0.0, 0.0, -1.0]
                } else {
                    sphere_point(0.5 * (theta.0 + theta.1), 0.5 * (phi.0 + phi.1))
                };
                (c, m)
            }
        }
    }

    /// True for the polar caps, whose chart center is degenerate.
    pub fn is_cap(&self) -> bool {
        matches!(*self, Patch::Sphere { phi, .. } if phi.1 - phi.0 >= 2.0 * PI)
    }

    /// Splits the patch into `s` pieces per axis. Sphere patches wider than
    /// `max_dphi` in longitude get proportionally more longitude pieces.
    pub fn subdivide(&self, s: usize, max_dphi: f64) -> Vec<Cell> {
        let mut out = Vec::new();
        match *self {
            Patch::Box { lo, size, dim } => {
                let sub = size.map(|x| x / s as f64);
                let counts: [usize; 3] = std::array::from_fn(|i| if i < dim { s } else { 1 });
                for i in 0..counts[0] {
                    for j in 0..counts[1] {
                        for k in 0..counts[2] {
                            let idx = [i, j, k];
                            let mut l = lo;
                            for a in 0..dim {
                                l[a] = lo[a] + idx[a] as f64 * sub[a];
                            }
                            out.push(Cell::new(Patch::Box {
                                lo: l,
                                size: sub,
                                dim,
                            }));
                        }
                    }
                }
            }
            Patch::Sphere { theta, phi } => {
                let width = phi.1 - phi.0;
                let m = s * ((width / max_dphi) - 1e-9).ceil().max(1.0) as usize;
                let dt = (theta.1 - theta.0) / s as f64;
                let dp = width / m as f64;
                for i in 0..s {
                    for j in 0..m {
                        out.push(Cell::new(Patch::Sphere {
                            theta: (theta.0 + i as f64 * dt, theta.0 + (i + 1) as f64 * dt),
                            phi: (phi.0 + j as f64 * dp, phi.0 + (j + 1) as f64 * dp),
                        }));
                    }
                }
            }
        }
        out
    }

    /// Half-open ranges of a linear function with ambient gradient `grad`
    /// across the patch, one per chart axis: `|df/du_i| * width_i`.
    pub fn extents(&self, grad: &Point) -> ([f64; 3], usize) {
        match *self {
            Patch::Box { size, dim, .. } => {
                let mut a = [0.0; 3];
                for i in 0..dim {
                    a[i] = (grad[i] * size[i]).abs();
                }
                (a, dim)
            }
            Patch::Sphere { theta, phi } => {
                let (et, ep) = sphere_frame(0.5 * (theta.0 + theta.1), 0.5 * (phi.0 + phi.1));
                (
                    [
                        (dot(grad, &et) * (theta.1 - theta.0)).abs(),
                        (dot(grad, &ep) * (phi.1 - phi.0)).abs(),
                        0.0,
                    ],
                    2,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Quadrature node in ambient coordinates.
    pub center: Point,
    /// Reference measure of the cell.
    pub weight: f64,
    pub patch: Patch,
}

impl Cell {
    pub fn new(patch: Patch) -> Cell {
        let (center, weight) = patch.center_and_measure();
        Cell {
            center,
            weight,
            patch,
        }
    }
}

/// Midpoint quadrature grid over a model domain.
///
/// Torus cells are ordered row-major over `(x, y[, z])`. Sphere cells are
/// the north cap, then `resolution[0] - 4` colatitude rows of
/// `resolution[1]` cells each, then the south cap.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub kind: DomainKind,
    pub resolution: Vec<usize>,
    pub cells: Vec<Cell>,
    pub supersample: usize,
}

impl QuadGrid {
    /// Longitude spacing of regular sphere cells (unused for tori).
    pub fn max_dphi(&self) -> f64 {
        match self.kind {
            DomainKind::Sphere2 => 2.0 * PI / self.resolution[1] as f64,
            _ => f64::INFINITY,
        }
    }

    /// Colatitude below which (and above `pi - cap`) the cap cells take over.
    pub fn cap_angle(&self) -> f64 {
        2.0 * PI / self.resolution[0] as f64
    }

    /// Typical ambient spacing of the grid.
    pub fn spacing(&self) -> f64 {
        match self.kind {
            DomainKind::Sphere2 => PI / self.resolution[0] as f64,
            _ => self
                .resolution
                .iter()
                .map(|&n| 1.0 / n as f64)
                .fold(0.0, f64::max),
        }
    }

    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.cells.iter().map(|c| c.weight))
    }
}

pub fn make_grid(kind: DomainKind, resolution: &[usize]) -> Result<QuadGrid, GeometryError> {
    let expected = kind.manifold_dim();
    if resolution.len() != expected {
        return Err(GeometryError::ResolutionShape {
            kind,
            got: resolution.to_vec(),
            expected,
        });
    }
    if resolution.iter().any(|&n| n < MIN_RESOLUTION) {
        return Err(GeometryError::ResolutionTooLow {
            got: resolution.to_vec(),
            min: MIN_RESOLUTION,
        });
    }
    let mut cells = Vec::new();
    match kind {
        DomainKind::Sphere2 => {
            let (nt, np) = (resolution[0], resolution[1]);
            let dt = PI / nt as f64;
            let dp = 2.0 * PI / np as f64;
            let cap = 2.0 * dt;
            cells.push(Cell::new(Patch::Sphere {
                theta: (0.0, cap),
                phi: (0.0, 2.0 * PI),
            }));
            for i in 2..nt - 2 {
                for j in 0..np {
                    cells.push(Cell::new(Patch::Sphere {
                        theta: (i as f64 * dt, (i + 1) as f64 * dt),
                        phi: (j as f64 * dp, (j + 1) as f64 * dp),
                    }));
                }
            }
            cells.push(Cell::new(Patch::Sphere {
                theta: (PI - cap, PI),
                phi: (0.0, 2.0 * PI),
            }));
        }
        DomainKind::Torus2 | DomainKind::Torus3 => {
            let dim = resolution.len();
            let mut size = [1.0; 3];
            let mut n = [1usize; 3];
            for a in 0..dim {
                size[a] = 1.0 / resolution[a] as f64;
                n[a] = resolution[a];
            }
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        let idx = [i, j, k];
                        let mut lo = [0.0; 3];
                        for a in 0..dim {
                            lo[a] = idx[a] as f64 * size[a];
                        }
                        cells.push(Cell::new(Patch::Box { lo, size, dim }));
                    }
                }
            }
        }
    }
    Ok(QuadGrid {
        kind,
        resolution: resolution.to_vec(),
        cells,
        supersample: SUPERSAMPLE,
    })
}

/// Riemannian gradient of a function on the domain from its ambient
/// gradient: unchanged on the flat tori, tangential projection on the sphere.
pub fn intrinsic_gradient(
    kind: DomainKind,
    p: &Point,
    ambient_grad: &Point,
) -> Result<(Point, f64), GeometryError> {
    match kind {
        DomainKind::Sphere2 => {
            let norm = dot(p, p).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(GeometryError::OffManifold { point: *p, norm });
            }
            let radial = dot(ambient_grad, p);
            let t = [
                ambient_grad[0] - radial * p[0],
                ambient_grad[1] - radial * p[1],
                ambient_grad[2] - radial * p[2],
            ];
            Ok((t, dot(&t, &t).sqrt()))
        }
        _ => Ok((*ambient_grad, dot(ambient_grad, ambient_grad).sqrt())),
    }
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn det3(a: &Point, b: &Point, c: &Point) -> f64 {
    dot(a, &cross(b, c))
}

pub fn normalize(a: &Point) -> Point {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Compensated summation in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus2_uniform_cells() {
        let g = make_grid(DomainKind::Torus2, &[64, 64]).unwrap();
        assert_eq!(g.cells.len(), 4096);
        for c in &g.cells {
            assert!((c.weight - 1.0 / 4096.0).abs() < 1e-18);
        }
    }

    #[test]
    fn total_volumes() {
        let g = make_grid(DomainKind::Sphere2, &[128, 256]).unwrap();
        let total = g.total_weight();
        assert!((total - 4.0 * PI).abs() < 1e-6 * 4.0 * PI, "{total}");
        assert_eq!(g.cells.len(), 2 + 124 * 256);
        for (kind, res) in [
            (DomainKind::Sphere2, vec![256, 512]),
            (DomainKind::Torus2, vec![256, 256]),
            (DomainKind::Torus3, vec![64, 64, 64]),
        ] {
            let g = make_grid(kind, &res).unwrap();
            let v = g.total_weight();
            assert!(
                (v - kind.total_volume()).abs() < 1e-6 * kind.total_volume(),
                "{kind}: {v}"
            );
            assert!(g.cells.iter().all(|c| c.weight > 0.0));
        }
    }

    #[test]
    fn low_resolution_rejected() {
        assert!(matches!(
            make_grid(DomainKind::Torus3, &[8, 8, 8]),
            Err(GeometryError::ResolutionTooLow { .. })
        ));
        assert!(matches!(
            make_grid(DomainKind::Torus3, &[16, 16]),
            Err(GeometryError::ResolutionShape { .. })
        ));
    }

    #[test]
    fn subdivision_preserves_measure() {
        let g = make_grid(DomainKind::Sphere2, &[32, 64]).unwrap();
        for cell in [g.cells[0], g.cells[40], *g.cells.last().unwrap()] {
            let subs = cell.patch.subdivide(4, g.max_dphi());
            let m = neumaier_sum(subs.iter().map(|c| c.weight));
            assert!((m - cell.weight).abs() < 1e-14, "{m} vs {}", cell.weight);
        }
        let t = make_grid(DomainKind::Torus3, &[16, 16, 16]).unwrap();
        let subs = t.cells[7].patch.subdivide(4, t.max_dphi());
        assert_eq!(subs.len(), 64);
        let m = neumaier_sum(subs.iter().map(|c| c.weight));
        assert!((m - t.cells[7].weight).abs() < 1e-18);
    }

    #[test]
    fn cap_cells_sit_on_poles() {
        let g = make_grid(DomainKind::Sphere2, &[32, 64]).unwrap();
        assert_eq!(g.cells[0].center, [0.0, 0.0, 1.0]);
        assert_eq!(g.cells.last().unwrap().center, [0.0, 0.0, -1.0]);
        assert!(g.cells[0].patch.is_cap());
        assert!(!g.cells[1].patch.is_cap());
    }

    #[test]
    fn intrinsic_gradient_examples() {
        let (t, n) =
            intrinsic_gradient(DomainKind::Sphere2, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t, [0.0, 0.0, 1.0]);
        assert_eq!(n, 1.0);
        let (t, n) =
            intrinsic_gradient(DomainKind::Sphere2, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t, [0.0, 0.0, 0.0]);
        assert_eq!(n, 0.0);
        let (t, n) =
            intrinsic_gradient(DomainKind::Torus2, &[0.0, 0.3, 0.0], &[2.0 * PI, 0.0, 0.0])
                .unwrap();
        assert_eq!(t, [2.0 * PI, 0.0, 0.0]);
        assert_eq!(n, 2.0 * PI);
        assert!(matches!(
            intrinsic_gradient(DomainKind::Sphere2, &[1.0, 0.1, 0.0], &[0.0, 0.0, 1.0]),
            Err(GeometryError::OffManifold { .. })
        ));
    }

    #[test]
    fn torus_displacement_wraps() {
        let d = DomainKind::Torus2.displacement(&[0.95, 0.5, 0.0], &[0.05, 0.5, 0.0]);
        assert!((d[0] - 0.1).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn sphere_tangent_is_orthogonal(
            theta in 0.01f64..3.13, phi in 0.0f64..6.2,
            g in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let p = sphere_point(theta, phi);
            let (t, _) = intrinsic_gradient(DomainKind::Sphere2, &p, &g).unwrap();
            proptest::prop_assert!(dot(&t, &p).abs() < 1e-12);
        }
    }
}
