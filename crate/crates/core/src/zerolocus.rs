//! Extraction of the zero locus `H = f^{-1}(0)` and decomposition of its
//! complement into signed regions.
//!
//! The field is sampled on a vertex lattice aligned with the quadrature
//! grid. In 2-D the zero set is traced by marching squares (saddle cells
//! resolved by the sign of `f` at the cell center); on `torus3` every cube
//! is split into the six Kuhn tetrahedra and traced by marching tetrahedra,
//! which has no ambiguous cases and yields closed meshes across the periodic
//! wrap. Crossing points are keyed by lattice edge, so seams and periodic
//! boundaries are stitched by index rather than by distance.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::expr::ExprError;
use crate::geometry::{
    self, cross, dot, norm, sphere_point, DomainKind, GeometryError, Point, QuadGrid,
};
use crate::invariants::NambuField;

/// Default transversality floor, relative to the largest gradient on the lattice.
pub const DEFAULT_TRANSVERSALITY: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZeroLocusError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("field lives on {field} but the grid is on {grid}")]
    DomainMismatch { field: DomainKind, grid: DomainKind },
    #[error("zero component {component} is not transverse: min |grad f| = {min_grad:e} <= floor {floor:e}")]
    NotGeneric {
        component: usize,
        min_grad: f64,
        floor: f64,
    },
    #[error(
        "{pole} pole: {reason}; rotate the scenario so the zero locus stays clear of the poles"
    )]
    PoleViolation { pole: &'static str, reason: String },
    #[error("region {region} has sign {expected} but f has the opposite sign at {point:?}; the grid does not resolve the zero locus, increase the resolution")]
    InconsistentSign {
        region: usize,
        expected: Sign,
        point: Point,
    },
    #[error("extracted surface is not closed: mesh edge ({0}, {1}) has {2} incident triangles")]
    NonManifold(usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Transversality floor: `relative * max |grad f|` over the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transversality {
    pub relative: f64,
}

impl Default for Transversality {
    fn default() -> Self {
        Transversality {
            relative: DEFAULT_TRANSVERSALITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroVertex {
    pub position: Point,
    /// Norm of the intrinsic gradient of f at the vertex.
    pub grad_norm: f64,
    /// Share of the component's (n-1)-measure attributed to the vertex.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Closed polyline through the vertices in order; the last vertex joins the first.
    Loop,
    /// Closed triangle mesh; triangles are wound with their normal toward `f > 0`.
    Mesh { triangles: Vec<[usize; 3]> },
}

/// One connected component of the zero locus.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroComponent {
    pub id: usize,
    pub kind: DomainKind,
    pub vertices: Vec<ZeroVertex>,
    pub shape: Shape,
    pub min_grad: f64,
    /// Length (2-D) or area (3-D).
    pub measure: f64,
    /// V - E + F of the mesh; `None` for curves.
    pub euler_characteristic: Option<i64>,
    /// Lattice vertices on either side of one crossing: (f >= 0, f < 0).
    pub flank: (usize, usize),
    /// Sorted keys of the lattice edges the component crosses.
    pub lattice_edges: Vec<u64>,
}

impl ZeroComponent {
    /// Elements as vertex index lists: segments in 2-D, triangles in 3-D.
    pub fn elements(&self) -> Vec<Vec<usize>> {
        match &self.shape {
            Shape::Loop => {
                let n = self.vertices.len();
                (0..n).map(|i| vec![i, (i + 1) % n]).collect()
            }
            Shape::Mesh { triangles } => triangles.iter().map(|t| t.to_vec()).collect(),
        }
    }

    /// Closed polyline (first vertex repeated at the end). Empty for meshes.
    pub fn polyline(&self) -> Vec<Point> {
        match self.shape {
            Shape::Loop => {
                let mut pts: Vec<Point> = self.vertices.iter().map(|v| v.position).collect();
                if let Some(first) = pts.first().copied() {
                    pts.push(first);
                }
                pts
            }
            Shape::Mesh { .. } => Vec::new(),
        }
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        match &self.shape {
            Shape::Mesh { triangles } => triangles,
            Shape::Loop => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    /// Region on the `f > 0` side.
    pub positive: usize,
    /// Region on the `f < 0` side.
    pub negative: usize,
    pub component: usize,
}

/// Connected components of `M \ H` with their signs and adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    /// Region id per lattice vertex.
    pub vertex_region: Vec<usize>,
    /// Region id per quadrature cell; `None` for cells cut by the zero locus.
    pub cell_region: Vec<Option<usize>>,
    pub signs: Vec<Sign>,
    pub adjacency: Vec<Adjacency>,
}

impl RegionMap {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Lattice

/// Field samples on the vertex lattice underlying a quadrature grid.
pub(crate) struct Lattice {
    kind: DomainKind,
    dim: usize,
    counts: [usize; 3],
    periodic: [bool; 3],
    step: [f64; 3],
    pub(crate) values: Vec<f64>,
    pub(crate) max_grad: f64,
}

impl Lattice {
    pub(crate) fn sample(field: &NambuField, grid: &QuadGrid) -> Result<Lattice, ZeroLocusError> {
        if field.domain != grid.kind {
            return Err(ZeroLocusError::DomainMismatch {
                field: field.domain,
                grid: grid.kind,
            });
        }
        let kind = grid.kind;
        let (dim, counts, periodic, step) = match kind {
            DomainKind::Sphere2 => {
                let (nt, np) = (grid.resolution[0], grid.resolution[1]);
                (
                    2,
                    [nt + 1, np, 1],
                    [false, true, true],
                    [
                        std::f64::consts::PI / nt as f64,
                        2.0 * std::f64::consts::PI / np as f64,
                        0.0,
                    ],
                )
            }
            _ => {
                let dim = grid.resolution.len();
                let mut counts = [1; 3];
                let mut step = [0.0; 3];
                for a in 0..dim {
                    counts[a] = grid.resolution[a];
                    step[a] = 1.0 / grid.resolution[a] as f64;
                }
                (dim, counts, [true; 3], step)
            }
        };
        let mut lat = Lattice {
            kind,
            dim,
            counts,
            periodic,
            step,
            values: Vec::new(),
            max_grad: 0.0,
        };
        let n = counts.iter().product::<usize>();
        let samples: Result<Vec<(f64, f64)>, ZeroLocusError> = (0..n)
            .map(|v| {
                let p = lat.vertex_point(v);
                let (value, _, g) = field.intrinsic(&p)?;
                Ok((value, g))
            })
            .collect();
        let samples = samples?;
        lat.values = samples.iter().map(|s| s.0).collect();
        lat.max_grad = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        Ok(lat)
    }

    pub(crate) fn len(&self) -> usize {
        self.values.len()
    }

    fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.counts[1] + ijk[1]) * self.counts[2] + ijk[2]
    }

    fn unindex(&self, v: usize) -> [usize; 3] {
        let k = v % self.counts[2];
        let j = (v / self.counts[2]) % self.counts[1];
        let i = v / (self.counts[1] * self.counts[2]);
        [i, j, k]
    }

    /// Vertex reached from `ijk` by `offset` (components 0 or 1), with wrap.
    fn step_to(&self, ijk: [usize; 3], offset: [usize; 3]) -> Option<usize> {
        let mut out = [0; 3];
        for a in 0..3 {
            let x = ijk[a] + offset[a];
            out[a] = if x < self.counts[a] {
                x
            } else if self.periodic[a] {
                x % self.counts[a]
            } else {
                return None;
            };
        }
        Some(self.index(out))
    }

    fn chart_point(&self, chart: [f64; 3]) -> Point {
        match self.kind {
            DomainKind::Sphere2 => {
                if chart[0] <= 0.0 {
                    [0.0, 0.0, 1.0]
                } else if chart[0] >= std::f64::consts::PI {
                    [0.0, 0.0, -1.0]
                } else {
                    sphere_point(chart[0], chart[1])
                }
            }
            _ => {
                let mut p = [0.0; 3];
                for a in 0..self.dim {
                    p[a] = chart[a].rem_euclid(1.0);
                }
                p
            }
        }
    }

    fn chart_of(&self, ijk: [f64; 3]) -> [f64; 3] {
        [
            ijk[0] * self.step[0],
            ijk[1] * self.step[1],
            ijk[2] * self.step[2],
        ]
    }

    fn vertex_point(&self, v: usize) -> Point {
        let ijk = self.unindex(v);
        if self.kind == DomainKind::Sphere2 {
            if ijk[0] == 0 {
                return [0.0, 0.0, 1.0];
            }
            if ijk[0] == self.counts[0] - 1 {
                return [0.0, 0.0, -1.0];
            }
        }
        self.chart_point(self.chart_of(ijk.map(|x| x as f64)))
    }

    fn positive(&self, v: usize) -> bool {
        self.values[v] >= 0.0
    }

    fn cells_2d(&self) -> (usize, usize) {
        let c0 = if self.periodic[0] {
            self.counts[0]
        } else {
            self.counts[0] - 1
        };
        (c0, self.counts[1])
    }

    fn cell_center_chart(&self, i: usize, j: usize) -> [f64; 3] {
        self.chart_of([i as f64 + 0.5, j as f64 + 0.5, 0.0])
    }
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    position: Point,
    grad_norm: f64,
    positive: usize,
    negative: usize,
    key: u64,
    t: f64,
}

/// Edge keys: `lower_vertex * 8 + offset_bits`.
fn edge_key(lower: usize, offset_bits: usize) -> u64 {
    (lower as u64) * 8 + offset_bits as u64
}

struct CrossingTable<'a> {
    lat: &'a Lattice,
    field: &'a NambuField,
    index: HashMap<u64, usize>,
    crossings: Vec<Crossing>,
}

impl<'a> CrossingTable<'a> {
    fn new(lat: &'a Lattice, field: &'a NambuField) -> Self {
        CrossingTable {
            lat,
            field,
            index: HashMap::new(),
            crossings: Vec::new(),
        }
    }

    /// Crossing on the lattice edge from `lower` (at index coords `ijk`)
    /// along `offset`, created on first use.
    fn get(&mut self, ijk: [usize; 3], offset: [usize; 3]) -> Result<usize, ZeroLocusError> {
        let lat = self.lat;
        let lower = lat.index(ijk);
        let bits = offset[0] | (offset[1] << 1) | (offset[2] << 2);
        let key = edge_key(lower, bits);
        if let Some(&c) = self.index.get(&key) {
            return Ok(c);
        }
        let upper = lat.step_to(ijk, offset).expect("edge inside lattice");
        let (fa, fb) = (lat.values[lower], lat.values[upper]);
        let t = fa / (fa - fb);
        let mut at = [0.0; 3];
        for a in 0..3 {
            at[a] = ijk[a] as f64 + t * offset[a] as f64;
        }
        let position = lat.chart_point(lat.chart_of(at));
        let (_, _, grad_norm) = self.field.intrinsic(&position)?;
        let (positive, negative) = if lat.positive(lower) {
            (lower, upper)
        } else {
            (upper, lower)
        };
        let id = self.crossings.len();
        self.crossings.push(Crossing {
            position,
            grad_norm,
            positive,
            negative,
            key,
            t,
        });
        self.index.insert(key, id);
        Ok(id)
    }
}

/// Floor below which `|grad f|` on `H` counts as non-transverse.
pub fn transversality_floor(
    field: &NambuField,
    grid: &QuadGrid,
    tr: Transversality,
) -> Result<f64, ZeroLocusError> {
    Ok(tr.relative * Lattice::sample(field, grid)?.max_grad)
}

/// Extracts all connected components of the zero locus, oriented and
/// checked for transversality.
pub fn extract(
    field: &NambuField,
    grid: &QuadGrid,
    tr: Transversality,
) -> Result<Vec<ZeroComponent>, ZeroLocusError> {
    let lat = Lattice::sample(field, grid)?;
    let floor = tr.relative * lat.max_grad;
    if lat.kind == DomainKind::Sphere2 {
        check_poles(&lat, floor)?;
    }
    let comps = match lat.dim {
        2 => extract_2d(field, &lat)?.0,
        _ => extract_3d(field, &lat)?,
    };
    for c in &comps {
        if c.min_grad <= floor {
            return Err(ZeroLocusError::NotGeneric {
                component: c.id,
                min_grad: c.min_grad,
                floor,
            });
        }
    }
    Ok(comps)
}

fn check_poles(lat: &Lattice, floor: f64) -> Result<(), ZeroLocusError> {
    let rows = lat.counts[0];
    for (pole, range) in [("north", 0..3), ("south", rows - 3..rows)] {
        let pole_row = if pole == "north" { 0 } else { rows - 1 };
        let value = lat.values[lat.index([pole_row, 0, 0])];
        if value.abs() <= floor {
            return Err(ZeroLocusError::PoleViolation {
                pole,
                reason: format!(
                    "|f| = {:e} is within the transversality floor {floor:e}",
                    value.abs()
                ),
            });
        }
        for i in range {
            for j in 0..lat.counts[1] {
                if Sign::of(lat.values[lat.index([i, j, 0])]) != Sign::of(value) {
                    return Err(ZeroLocusError::PoleViolation {
                        pole,
                        reason: "the zero locus enters the polar cap cell".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

type Diagonal = (usize, usize);

/// Marching squares. Also returns the same-sign diagonals joined in saddle cells.
fn extract_2d(
    field: &NambuField,
    lat: &Lattice,
) -> Result<(Vec<ZeroComponent>, Vec<Diagonal>), ZeroLocusError> {
    let mut table = CrossingTable::new(lat, field);
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut diagonals = Vec::new();
    let (c0, c1) = lat.cells_2d();
    for i in 0..c0 {
        for j in 0..c1 {
            let ij = [i, j, 0];
            let a = lat.index(ij);
            let b = lat.step_to(ij, [1, 0, 0]).unwrap();
            let c = lat.step_to(ij, [1, 1, 0]).unwrap();
            let d = lat.step_to(ij, [0, 1, 0]).unwrap();
            let s = [a, b, c, d].map(|v| lat.positive(v));
            // Cyclic edge order: ab, bc, cd, da.
            let crossed = [s[0] != s[1], s[1] != s[2], s[2] != s[3], s[3] != s[0]];
            let n = crossed.iter().filter(|&&x| x).count();
            if n == 0 {
                continue;
            }
            let bij = lat.unindex(b);
            let dij = lat.unindex(d);
            let mut edge = |e: usize| -> Result<usize, ZeroLocusError> {
                match e {
                    0 => table.get(ij, [1, 0, 0]),
                    1 => table.get(bij, [0, 1, 0]),
                    2 => table.get(dij, [1, 0, 0]),
                    _ => table.get(ij, [0, 1, 0]),
                }
            };
            if n == 2 {
                let es: Vec<usize> = (0..4).filter(|&e| crossed[e]).collect();
                segments.push((edge(es[0])?, edge(es[1])?));
            } else {
                let center = lat.chart_point(lat.cell_center_chart(i, j));
                let fc = field.value(&center)?;
                if (fc >= 0.0) == s[0] {
                    // a and c joined through the cell: cut off b and d.
                    segments.push((edge(0)?, edge(1)?));
                    segments.push((edge(2)?, edge(3)?));
                    diagonals.push((a, c));
                } else {
                    segments.push((edge(3)?, edge(0)?));
                    segments.push((edge(1)?, edge(2)?));
                    diagonals.push((b, d));
                }
            }
        }
    }
    let crossings = table.crossings;

    // Each crossing is shared by exactly two segments.
    let mut incident: Vec<[usize; 2]> = vec![[usize::MAX; 2]; crossings.len()];
    for (s, &(p, q)) in segments.iter().enumerate() {
        for x in [p, q] {
            let slot = &mut incident[x];
            if slot[0] == usize::MAX {
                slot[0] = s;
            } else {
                slot[1] = s;
            }
        }
    }
    let mut used = vec![false; segments.len()];
    let mut comps = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let mut order = Vec::new();
        let (first, mut cur) = segments[start];
        let mut seg = start;
        order.push(first);
        used[start] = true;
        while cur != first {
            order.push(cur);
            let inc = incident[cur];
            let next = if inc[0] == seg { inc[1] } else { inc[0] };
            if next == usize::MAX || used[next] {
                break;
            }
            used[next] = true;
            let (p, q) = segments[next];
            cur = if p == cur { q } else { p };
            seg = next;
        }
        comps.push(build_loop(comps.len(), lat.kind, &crossings, &order));
    }
    Ok((comps, diagonals))
}

fn build_loop(
    id: usize,
    kind: DomainKind,
    crossings: &[Crossing],
    order: &[usize],
) -> ZeroComponent {
    let n = order.len();
    let lengths: Vec<f64> = (0..n)
        .map(|i| {
            let a = &crossings[order[i]].position;
            let b = &crossings[order[(i + 1) % n]].position;
            norm(&kind.displacement(a, b))
        })
        .collect();
    let vertices: Vec<ZeroVertex> = (0..n)
        .map(|i| {
            let c = &crossings[order[i]];
            ZeroVertex {
                position: c.position,
                grad_norm: c.grad_norm,
                weight: 0.5 * (lengths[i] + lengths[(i + n - 1) % n]),
            }
        })
        .collect();
    let mut keys: Vec<u64> = order.iter().map(|&c| crossings[c].key).collect();
    keys.sort_unstable();
    let first = &crossings[order[0]];
    ZeroComponent {
        id,
        kind,
        min_grad: vertices
            .iter()
            .map(|v| v.grad_norm)
            .fold(f64::INFINITY, f64::min),
        measure: geometry::neumaier_sum(lengths.iter().copied()),
        vertices,
        shape: Shape::Loop,
        euler_characteristic: None,
        flank: (first.positive, first.negative),
        lattice_edges: keys,
    }
}

/// Axis permutations defining the six Kuhn tetrahedra of a cube.
const KUHN: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn bits_offset(bits: usize) -> [usize; 3] {
    [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1]
}

/// Marching tetrahedra over the Kuhn subdivision of the periodic cube lattice.
fn extract_3d(field: &NambuField, lat: &Lattice) -> Result<Vec<ZeroComponent>, ZeroLocusError> {
    let mut table = CrossingTable::new(lat, field);
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for i in 0..lat.counts[0] {
        for j in 0..lat.counts[1] {
            for k in 0..lat.counts[2] {
                let base = [i, j, k];
                let corner: [usize; 8] =
                    std::array::from_fn(|b| lat.step_to(base, bits_offset(b)).unwrap());
                let pos: [bool; 8] = std::array::from_fn(|b| lat.positive(corner[b]));
                if pos.iter().all(|&p| p) || pos.iter().all(|&p| !p) {
                    continue;
                }
                for perm in KUHN {
                    let b1 = 1 << perm[0];
                    let b2 = b1 | (1 << perm[1]);
                    let tet = [0usize, b1, b2, 7];
                    let np = tet.iter().filter(|&&b| pos[b]).count();
                    if np == 0 || np == 4 {
                        continue;
                    }
                    // Chain order makes the earlier vertex the lower end of each edge.
                    let mut cross_on =
                        |u: usize, w: usize| -> Result<(usize, Point), ZeroLocusError> {
                            let (lo, hi) = if tet.iter().position(|&x| x == u)
                                < tet.iter().position(|&x| x == w)
                            {
                                (u, w)
                            } else {
                                (w, u)
                            };
                            let lo_ijk = lat.unindex(corner[lo]);
                            let off = bits_offset(hi & !lo);
                            let id = table.get(lo_ijk, off)?;
                            let t = table.crossings[id].t;
                            let l = bits_offset(lo);
                            let local = std::array::from_fn(|a| l[a] as f64 + t * off[a] as f64);
                            Ok((id, local))
                        };
                    let plus: Vec<usize> = tet.iter().copied().filter(|&b| pos[b]).collect();
                    let minus: Vec<usize> = tet.iter().copied().filter(|&b| !pos[b]).collect();
                    let mut polys: Vec<Vec<(usize, Point)>> = Vec::new();
                    if plus.len() == 1 || minus.len() == 1 {
                        let (lone, rest) = if plus.len() == 1 {
                            (plus[0], &minus)
                        } else {
                            (minus[0], &plus)
                        };
                        polys.push(vec![
                            cross_on(lone, rest[0])?,
                            cross_on(lone, rest[1])?,
                            cross_on(lone, rest[2])?,
                        ]);
                    } else {
                        let q = [
                            cross_on(plus[0], minus[0])?,
                            cross_on(plus[0], minus[1])?,
                            cross_on(plus[1], minus[1])?,
                            cross_on(plus[1], minus[0])?,
                        ];
                        polys.push(vec![q[0], q[1], q[2]]);
                        polys.push(vec![q[0], q[2], q[3]]);
                    }
                    let centroid = |bs: &[usize]| -> Point {
                        let mut c = [0.0; 3];
                        for &b in bs {
                            let o = bits_offset(b);
                            for a in 0..3 {
                                c[a] += o[a] as f64 / bs.len() as f64;
                            }
                        }
                        c
                    };
                    let toward_plus = geometry::sub(&centroid(&plus), &centroid(&minus));
                    for poly in polys {
                        let n = cross(
                            &geometry::sub(&poly[1].1, &poly[0].1),
                            &geometry::sub(&poly[2].1, &poly[0].1),
                        );
                        if dot(&n, &toward_plus) < 0.0 {
                            triangles.push([poly[0].0, poly[2].0, poly[1].0]);
                        } else {
                            triangles.push([poly[0].0, poly[1].0, poly[2].0]);
                        }
                    }
                }
            }
        }
    }
    let crossings = table.crossings;

    let mut uf = UnionFind::new(crossings.len());
    for t in &triangles {
        uf.union(t[0], t[1]);
        uf.union(t[0], t[2]);
    }
    // Components numbered by their smallest crossing index.
    let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for c in 0..crossings.len() {
        let r = uf.find(c);
        let id = *comp_of_root.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[id].push(c);
    }
    let mut comp_tris: Vec<Vec<[usize; 3]>> = vec![Vec::new(); members.len()];
    for t in &triangles {
        comp_tris[comp_of_root[&uf.find(t[0])]].push(*t);
    }

    let mut comps = Vec::with_capacity(members.len());
    for (id, (verts, tris)) in members.into_iter().zip(comp_tris).enumerate() {
        let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let tris: Vec<[usize; 3]> = tris.iter().map(|t| t.map(|c| local[&c])).collect();
        let mut weights = vec![0.0; verts.len()];
        let mut areas = Vec::with_capacity(tris.len());
        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &tris {
            let p0 = crossings[verts[t[0]]].position;
            let u = lat.kind.displacement(&p0, &crossings[verts[t[1]]].position);
            let v = lat.kind.displacement(&p0, &crossings[verts[t[2]]].position);
            let area = 0.5 * norm(&cross(&u, &v));
            areas.push(area);
            for &x in t {
                weights[x] += area / 3.0;
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if let Some((&(a, b), &n)) = edge_use.iter().filter(|(_, &n)| n != 2).min() {
            return Err(ZeroLocusError::NonManifold(a, b, n));
        }
        let vertices: Vec<ZeroVertex> = verts
            .iter()
            .zip(&weights)
            .map(|(&c, &w)| ZeroVertex {
                position: crossings[c].position,
                grad_norm: crossings[c].grad_norm,
                weight: w,
            })
            .collect();
        let mut keys: Vec<u64> = verts.iter().map(|&c| crossings[c].key).collect();
        keys.sort_unstable();
        let first = &crossings[verts[0]];
        comps.push(ZeroComponent {
            id,
            kind: lat.kind,
            min_grad: vertices
                .iter()
                .map(|v| v.grad_norm)
                .fold(f64::INFINITY, f64::min),
            measure: geometry::neumaier_sum(areas),
            euler_characteristic: Some(
                vertices.len() as i64 - edge_use.len() as i64 + tris.len() as i64,
            ),
            vertices,
            shape: Shape::Mesh { triangles: tris },
            flank: (first.positive, first.negative),
            lattice_edges: keys,
        });
    }
    Ok(comps)
}

/// Labels the connected components of the complement of the zero locus.
pub fn regions(
    field: &NambuField,
    grid: &QuadGrid,
    comps: &[ZeroComponent],
) -> Result<RegionMap, ZeroLocusError> {
    let lat = Lattice::sample(field, grid)?;
    let mut uf = UnionFind::new(lat.len());
    if lat.dim == 2 {
        let diagonals = extract_2d(field, &lat)?.1;
        for v in 0..lat.len() {
            let ijk = lat.unindex(v);
            for off in [[1, 0, 0], [0, 1, 0]] {
                if let Some(w) = lat.step_to(ijk, off) {
                    if lat.positive(v) == lat.positive(w) {
                        uf.union(v, w);
                    }
                }
            }
        }
        for (a, b) in diagonals {
            uf.union(a, b);
        }
        if lat.kind == DomainKind::Sphere2 {
            let last = lat.counts[0] - 1;
            for j in 1..lat.counts[1] {
                uf.union(lat.index([0, 0, 0]), lat.index([0, j, 0]));
                uf.union(lat.index([last, 0, 0]), lat.index([last, j, 0]));
            }
        }
    } else {
        for v in 0..lat.len() {
            let ijk = lat.unindex(v);
            for bits in 1..8 {
                let w = lat.step_to(ijk, bits_offset(bits)).unwrap();
                if lat.positive(v) == lat.positive(w) {
                    uf.union(v, w);
                }
            }
        }
    }

    let mut id_of_root: HashMap<usize, usize> = HashMap::new();
    let mut signs = Vec::new();
    let vertex_region: Vec<usize> = (0..lat.len())
        .map(|v| {
            let r = uf.find(v);
            *id_of_root.entry(r).or_insert_with(|| {
                signs.push(Sign::of(lat.values[v]));
                signs.len() - 1
            })
        })
        .collect();

    let adjacency = comps
        .iter()
        .map(|c| Adjacency {
            positive: vertex_region[c.flank.0],
            negative: vertex_region[c.flank.1],
            component: c.id,
        })
        .collect();

    let cell_region = cell_regions(field, grid, &lat, &vertex_region, &signs)?;
    Ok(RegionMap {
        vertex_region,
        cell_region,
        signs,
        adjacency,
    })
}

fn cell_regions(
    field: &NambuField,
    grid: &QuadGrid,
    lat: &Lattice,
    vertex_region: &[usize],
    signs: &[Sign],
) -> Result<Vec<Option<usize>>, ZeroLocusError> {
    let corner_sets: Vec<Vec<usize>> = match lat.kind {
        DomainKind::Sphere2 => {
            let (nt, np) = (grid.resolution[0], grid.resolution[1]);
            let mut sets = vec![vec![lat.index([0, 0, 0])]];
            for i in 2..nt - 2 {
                for j in 0..np {
                    let ij = [i, j, 0];
                    sets.push(vec![
                        lat.index(ij),
                        lat.step_to(ij, [1, 0, 0]).unwrap(),
                        lat.step_to(ij, [1, 1, 0]).unwrap(),
                        lat.step_to(ij, [0, 1, 0]).unwrap(),
                    ]);
                }
            }
            sets.push(vec![lat.index([nt, 0, 0])]);
            sets
        }
        _ => {
            let corners = 1usize << lat.dim;
            (0..lat.len())
                .map(|v| {
                    let ijk = lat.unindex(v);
                    (0..corners)
                        .map(|b| lat.step_to(ijk, bits_offset(b)).unwrap())
                        .collect()
                })
                .collect()
        }
    };
    debug_assert_eq!(corner_sets.len(), grid.cells.len());
    let mut out = Vec::with_capacity(corner_sets.len());
    for (cell, corners) in grid.cells.iter().zip(&corner_sets) {
        let r = vertex_region[corners[0]];
        if corners.iter().any(|&v| vertex_region[v] != r) {
            out.push(None);
            continue;
        }
        if !cell.patch.is_cap() {
            let fc = field.value(&cell.center)?;
            if Sign::of(fc) != signs[r] {
                return Err(ZeroLocusError::InconsistentSign {
                    region: r,
                    expected: signs[r],
                    point: cell.center,
                });
            }
        }
        out.push(Some(r));
    }
    Ok(out)
}

/// Lattice vertex nearest to a chart point: `(theta, phi)` on the sphere,
/// flat coordinates on the tori.
pub fn nearest_vertex(grid: &QuadGrid, chart: [f64; 3]) -> usize {
    let r = &grid.resolution;
    match grid.kind {
        DomainKind::Sphere2 => {
            let i = (chart[0] / (std::f64::consts::PI / r[0] as f64))
                .round()
                .clamp(0.0, r[0] as f64) as usize;
            let j = (chart[1] / (2.0 * std::f64::consts::PI / r[1] as f64))
                .round()
                .rem_euclid(r[1] as f64) as usize;
            i * r[1] + j % r[1]
        }
        _ => {
            let mut v = 0;
            for (a, &n) in r.iter().enumerate() {
                let i = (chart[a] * n as f64).round().rem_euclid(n as f64) as usize % n;
                v = v * n + i;
            }
            v
        }
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels do not depend on union order.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}
