//! Classification invariants of a generic top-degree Nambu structure
//! `Λ = f / μ`: modular periods of the zero components, the regularized
//! Liouville volume, deformation coordinates and the second cohomology count.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::{ExprError, Expression};
use crate::geometry::{
    dot, intrinsic_gradient, neumaier_sum, normalize, Cell, DomainKind, GeometryError, Point,
    QuadGrid,
};
use crate::zerolocus::{
    self, Adjacency, RegionMap, Sign, Transversality, ZeroComponent, ZeroLocusError,
};

pub const DEFAULT_SCHEDULE: [f64; 3] = [0.1, 0.05, 0.025];
pub const DEFAULT_VOLUME_TOLERANCE: f64 = 1e-2;

/// Below `FALLBACK * |grad f|` the quotient `num / f` is replaced by its
/// limit along the normal direction.
const FALLBACK: f64 = 1e-7;
/// Chart extents smaller than this fraction of the largest are treated as flat.
const FLAT_AXIS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvariantsError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    ZeroLocus(#[from] ZeroLocusError),
    #[error("expression is over {got:?} but the domain {domain} needs {expected:?}")]
    FieldDomain {
        domain: DomainKind,
        got: Vec<&'static str>,
        expected: Vec<&'static str>,
    },
    #[error("invalid epsilon schedule: {0}")]
    BadSchedule(String),
    #[error("epsilon {eps} (band width {width:e}) is below the grid's resolving power {floor:e}; use a coarser schedule or a finer grid")]
    ScheduleTooFine { eps: f64, width: f64, floor: f64 },
    #[error("extrapolation did not converge: final pair gives {last}, previous pair {previous} (tolerance {tolerance})")]
    NonConvergent {
        last: f64,
        previous: f64,
        tolerance: f64,
    },
    #[error("cutoff changes sign where f does not, near {point:?}")]
    CutoffMismatch { point: Point },
    #[error("zero component {component} of the base field has no matching component in theta")]
    LocusMismatch { component: usize },
    #[error("theta: {0}")]
    NotGenericTheta(ZeroLocusError),
    #[error("component {component} has a degenerate gradient")]
    DegenerateGradient { component: usize },
    #[error("the field has f = 0 identically at the band scale")]
    ZeroField,
}

/// `Λ = f · (1/μ)` on a model domain.
#[derive(Debug, Clone, PartialEq)]
pub struct NambuField {
    pub domain: DomainKind,
    pub f: Expression,
}

impl NambuField {
    pub fn new(domain: DomainKind, f: Expression) -> Result<NambuField, InvariantsError> {
        if f.vars() != domain.variables() {
            return Err(InvariantsError::FieldDomain {
                domain,
                got: f.vars().names().to_vec(),
                expected: domain.variables().names().to_vec(),
            });
        }
        Ok(NambuField { domain, f })
    }

    pub fn parse(domain: DomainKind, text: &str) -> Result<NambuField, ExprError> {
        Ok(NambuField {
            domain,
            f: Expression::parse(text, domain)?,
        })
    }

    /// The field `c · f`.
    pub fn scaled(&self, c: f64) -> NambuField {
        NambuField {
            domain: self.domain,
            f: self.f.scaled(c),
        }
    }

    pub fn value(&self, p: &Point) -> Result<f64, ExprError> {
        self.f.eval(self.domain.coords(p))
    }

    /// Value, ambient gradient padded to three components.
    pub fn value_grad(&self, p: &Point) -> Result<(f64, Point), ExprError> {
        let vg = self.f.eval_with_gradient(self.domain.coords(p))?;
        Ok((vg.value, vg.grad3()))
    }

    /// Value, intrinsic gradient and its norm.
    pub fn intrinsic(&self, p: &Point) -> Result<(f64, Point, f64), FieldError> {
        let (v, g) = self.value_grad(p)?;
        let (t, n) = intrinsic_gradient(self.domain, p, &g)?;
        Ok((v, t, n))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<FieldError> for ZeroLocusError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Expr(e) => ZeroLocusError::Expr(e),
            FieldError::Geometry(e) => ZeroLocusError::Geometry(e),
        }
    }
}

impl From<FieldError> for InvariantsError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Expr(e) => InvariantsError::Expr(e),
            FieldError::Geometry(e) => InvariantsError::Geometry(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Modular periods

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModularData {
    pub component: usize,
    pub period: f64,
    /// `1 / |grad f|` at each vertex of the component.
    #[serde(skip)]
    pub density: Vec<f64>,
    /// The raw traversal orientation of the component gave a negative integral.
    pub sign_flip: bool,
}

/// Period of one zero component with the metric transverse field
/// `Y = grad f / |grad f|^2`.
pub fn modular_period(
    field: &NambuField,
    comp: &ZeroComponent,
) -> Result<ModularData, InvariantsError> {
    modular_period_with(field, comp, |_| 1.0)
}

/// Period with the transverse field `Y = scale(p) · grad f / |grad f|^2`.
/// Any nonvanishing `scale` gives the same result.
pub fn modular_period_with<F>(
    field: &NambuField,
    comp: &ZeroComponent,
    scale: F,
) -> Result<ModularData, InvariantsError>
where
    F: Fn(&Point) -> f64,
{
    let kind = field.domain;
    let n = kind.manifold_dim();
    let sign = if n.is_multiple_of(2) { -1.0 } else { 1.0 };
    let mut terms = Vec::new();
    for el in comp.elements() {
        let p0 = comp.vertices[el[0]].position;
        let edges: Vec<Point> = el[1..]
            .iter()
            .map(|&i| kind.displacement(&p0, &comp.vertices[i].position))
            .collect();
        let mut mid = p0;
        for e in &edges {
            for a in 0..3 {
                mid[a] += e[a] / el.len() as f64;
            }
        }
        if kind == DomainKind::Sphere2 {
            mid = normalize(&mid);
        } else {
            mid = mid.map(|c| c.rem_euclid(1.0));
        }
        let (_, g, gn) = field.intrinsic(&mid)?;
        if gn == 0.0 {
            return Err(InvariantsError::DegenerateGradient { component: comp.id });
        }
        let w = scale(&mid);
        let y = g.map(|c| w * c / (gn * gn));
        let dfy = dot(&g, &y);
        // Simplex volume factor: a triangle spanned by two edges has half their parallelogram.
        let simplex = if edges.len() == 2 { 0.5 } else { 1.0 };
        let mut args = vec![y];
        args.extend(edges.iter().copied());
        let mu = kind.volume_form(&mid, &args);
        terms.push(sign * simplex * mu / dfy);
    }
    let raw = neumaier_sum(terms);
    let density = comp.vertices.iter().map(|v| 1.0 / v.grad_norm).collect();
    Ok(ModularData {
        component: comp.id,
        period: raw.abs(),
        density,
        sign_flip: raw < 0.0,
    })
}

// ---------------------------------------------------------------------------
// Regularized volume

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeOptions {
    /// Strictly decreasing cutoffs, in units of the band scale `max |f|`.
    pub schedule: Vec<f64>,
    /// Allowed disagreement between the last two extrapolations, relative to `max(1, |V|)`.
    pub tolerance: f64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        VolumeOptions {
            schedule: DEFAULT_SCHEDULE.to_vec(),
            tolerance: DEFAULT_VOLUME_TOLERANCE,
        }
    }
}

impl VolumeOptions {
    pub fn validate(&self) -> Result<(), InvariantsError> {
        let s = &self.schedule;
        if s.len() < 2 {
            return Err(InvariantsError::BadSchedule(format!(
                "need at least 2 values, got {}",
                s.len()
            )));
        }
        if s.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(InvariantsError::BadSchedule(
                "values must be positive".into(),
            ));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(InvariantsError::BadSchedule(
                "values must be strictly decreasing".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(InvariantsError::BadSchedule(
                "tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeDiagnostics {
    pub schedule: Vec<f64>,
    /// `I(ε)` for each schedule entry.
    pub samples: Vec<f64>,
    /// Fitted `a` in `I(ε) = V + a ε` from the final pair.
    pub slope: f64,
    /// Extrapolation from the pair before the final one, if any.
    pub previous: Option<f64>,
    /// `max |f|` over the cell centers; cutoffs are `ε · scale`.
    pub scale: f64,
    pub band_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub diagnostics: VolumeDiagnostics,
}

/// What is integrated over `{|h| ≥ ε}`: always `q / h` for a smooth `q`.
enum Integrand<'a> {
    /// `1 / f` with `h = f`.
    Plain,
    /// `1 / f` masked by a cutoff `h`: `q = h / f`.
    Cutoff(&'a NambuField),
    /// `θ / f²` masked by `f`: `q = θ / f`.
    Ratio(&'a NambuField),
}

/// `V = lim ∫_{|f| ≥ ε} μ / f`.
pub fn regularized_volume(
    field: &NambuField,
    grid: &QuadGrid,
    opts: &VolumeOptions,
) -> Result<VolumeEstimate, InvariantsError> {
    regularize(field, grid, Integrand::Plain, opts)
}

/// The same limit taken over `{|h| ≥ ε}` for a cutoff `h` vanishing exactly on `H`.
pub fn volume_with_cutoff(
    field: &NambuField,
    grid: &QuadGrid,
    h: &Expression,
    opts: &VolumeOptions,
) -> Result<VolumeEstimate, InvariantsError> {
    let h = NambuField::new(field.domain, h.clone())?;
    regularize(field, grid, Integrand::Cutoff(&h), opts)
}

/// Samples at one quadrature node: mask value, its ambient gradient, and `q`.
struct Sample {
    f: f64,
    h: f64,
    grad: Point,
    q: f64,
}

fn quotient(num: f64, num_grad: &Point, den: f64, den_grad: &Point) -> f64 {
    let gg = dot(den_grad, den_grad);
    if den.abs() < FALLBACK * gg.sqrt() {
        dot(num_grad, den_grad) / gg
    } else {
        num / den
    }
}

impl Integrand<'_> {
    fn sample(&self, field: &NambuField, p: &Point) -> Result<Sample, FieldError> {
        let (f, gf, _) = field.intrinsic(p)?;
        Ok(match self {
            Integrand::Plain => Sample {
                f,
                h: f,
                grad: gf,
                q: 1.0,
            },
            Integrand::Cutoff(h) => {
                let (hv, gh, _) = h.intrinsic(p)?;
                Sample {
                    f,
                    h: hv,
                    grad: gh,
                    q: quotient(hv, &gh, f, &gf),
                }
            }
            Integrand::Ratio(theta) => {
                let (tv, gt, _) = theta.intrinsic(p)?;
                Sample {
                    f,
                    h: f,
                    grad: gf,
                    q: quotient(tv, &gt, f, &gf),
                }
            }
        })
    }
}

/// Antiderivatives of `1{|t| ≥ ε} / t` of order 1, 2, 3, each vanishing on `|t| < ε`.
fn band_antiderivative(order: usize, t: f64, eps: f64) -> f64 {
    let at = t.abs();
    if at < eps {
        return 0.0;
    }
    let l = (at / eps).ln();
    match order {
        1 => l,
        2 => t.signum() * (at * l - at + eps),
        _ => 0.5 * t * t * l - 0.75 * t * t + eps * at - 0.25 * eps * eps,
    }
}

/// Mean of `1{|t| ≥ ε} / t` over a box on which `t = t0 + Σ a_i u_i`,
/// `u_i ∈ [-1/2, 1/2]`, computed exactly by divided differences.
fn band_mean(t0: f64, extents: &[f64], eps: f64) -> f64 {
    let spread = 0.5 * extents.iter().sum::<f64>();
    if t0.abs() - spread >= eps {
        return 1.0 / t0;
    }
    if t0.abs() + spread <= eps {
        return 0.0;
    }
    let amax = extents.iter().copied().fold(0.0, f64::max);
    let kept: Vec<f64> = extents
        .iter()
        .copied()
        .filter(|&a| a > 0.0 && a >= FLAT_AXIS * amax)
        .collect();
    if kept.is_empty() {
        return if t0.abs() >= eps { 1.0 / t0 } else { 0.0 };
    }
    let d = kept.len();
    let mut total = 0.0;
    for pattern in 0..(1usize << d) {
        let mut t = t0;
        let mut s = 1.0;
        for (i, a) in kept.iter().enumerate() {
            if pattern >> i & 1 == 1 {
                t += 0.5 * a;
            } else {
                t -= 0.5 * a;
                s = -s;
            }
        }
        total += s * band_antiderivative(d, t, eps);
    }
    total / kept.iter().product::<f64>()
}

struct CellResult {
    /// Contribution per schedule entry.
    values: Vec<f64>,
    band: bool,
    /// `|mean of sub-cell values - center value| / S²`.
    nonlinearity: f64,
    /// A cell center where the cutoff and `f` disagree in sign.
    mismatch: Option<Point>,
}

fn regularize(
    field: &NambuField,
    grid: &QuadGrid,
    integrand: Integrand<'_>,
    opts: &VolumeOptions,
) -> Result<VolumeEstimate, InvariantsError> {
    opts.validate()?;
    if field.domain != grid.kind {
        return Err(ZeroLocusError::DomainMismatch {
            field: field.domain,
            grid: grid.kind,
        }
        .into());
    }
    let centers: Vec<Sample> = grid
        .cells
        .par_iter()
        .map(|c| integrand.sample(field, &c.center))
        .collect::<Result<_, _>>()?;
    let scale = centers.iter().map(|s| s.f.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(InvariantsError::ZeroField);
    }
    let cuts: Vec<f64> = opts.schedule.iter().map(|e| e * scale).collect();
    let widest = cuts[0];
    let s = grid.supersample;
    let max_dphi = grid.max_dphi();
    let check_sign = matches!(integrand, Integrand::Cutoff(_));

    let results: Vec<CellResult> = grid
        .cells
        .par_iter()
        .zip(&centers)
        .map(|(cell, smp)| -> Result<CellResult, InvariantsError> {
            let (ext, dim) = extents(cell, &smp.grad);
            let spread = 0.5 * ext[..dim].iter().sum::<f64>();
            let mismatch =
                (check_sign && smp.h.abs() > spread && smp.q < 0.0).then_some(cell.center);
            let band = cell.patch.is_cap() || smp.h.abs() - spread < 2.0 * widest;
            if !band {
                let v = cell.weight * smp.q / smp.h;
                return Ok(CellResult {
                    values: vec![v; cuts.len()],
                    band,
                    nonlinearity: 0.0,
                    mismatch,
                });
            }
            let subs = cell.patch.subdivide(s, max_dphi);
            let mut acc = vec![Vec::with_capacity(subs.len()); cuts.len()];
            let mut hsum = Vec::with_capacity(subs.len());
            for sub in &subs {
                let ss = integrand.sample(field, &sub.center)?;
                let (e, d) = extents(sub, &ss.grad);
                hsum.push(ss.h * sub.weight);
                for (k, &eps) in cuts.iter().enumerate() {
                    acc[k].push(sub.weight * ss.q * band_mean(ss.h, &e[..d], eps));
                }
            }
            let mean = neumaier_sum(hsum) / cell.weight;
            Ok(CellResult {
                values: acc.into_iter().map(neumaier_sum).collect(),
                band,
                nonlinearity: if cell.patch.is_cap() {
                    0.0
                } else {
                    (mean - smp.h).abs() / (s * s) as f64
                },
                mismatch,
            })
        })
        .collect::<Result<_, _>>()?;

    if let Some(point) = results.iter().find_map(|r| r.mismatch) {
        return Err(InvariantsError::CutoffMismatch { point });
    }
    let residual = results.iter().map(|r| r.nonlinearity).fold(0.0, f64::max);
    let finest = *cuts.last().unwrap();
    if finest < 3.0 * residual {
        return Err(InvariantsError::ScheduleTooFine {
            eps: *opts.schedule.last().unwrap(),
            width: finest,
            floor: 3.0 * residual,
        });
    }
    let samples: Vec<f64> = (0..cuts.len())
        .map(|k| neumaier_sum(results.iter().map(|r| r.values[k])))
        .collect();
    let sched = &opts.schedule;
    let m = sched.len();
    let richardson = |i: usize, j: usize| {
        (sched[i] * samples[j] - sched[j] * samples[i]) / (sched[i] - sched[j])
    };
    let value = richardson(m - 2, m - 1);
    let previous = (m >= 3).then(|| richardson(m - 3, m - 2));
    if let Some(prev) = previous {
        if (value - prev).abs() > opts.tolerance * value.abs().max(1.0) {
            return Err(InvariantsError::NonConvergent {
                last: value,
                previous: prev,
                tolerance: opts.tolerance,
            });
        }
    }
    Ok(VolumeEstimate {
        value,
        diagnostics: VolumeDiagnostics {
            schedule: sched.clone(),
            slope: (samples[m - 2] - samples[m - 1]) / (sched[m - 2] - sched[m - 1]),
            samples,
            previous,
            scale,
            band_cells: results.iter().filter(|r| r.band).count(),
        },
    })
}

/// Chart extents of a linear function over the cell; none for the polar caps.
fn extents(cell: &Cell, grad: &Point) -> ([f64; 3], usize) {
    if cell.patch.is_cap() {
        return ([0.0; 3], 0);
    }
    cell.patch.extents(grad)
}

// ---------------------------------------------------------------------------
// Deformations and cohomology

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeformationCoordinates {
    /// `T_base / T_theta` per component, signed by the relative orientation.
    pub c: Vec<f64>,
    pub v_rel: f64,
    pub diagnostics: VolumeDiagnostics,
}

/// Coordinates of the class of `theta` in `H²_Λ`, `Λ` given by `base`.
pub fn deformation_coordinates(
    base: &NambuField,
    theta: &NambuField,
    grid: &QuadGrid,
    tr: Transversality,
    opts: &VolumeOptions,
) -> Result<DeformationCoordinates, InvariantsError> {
    let comps = zerolocus::extract(base, grid, tr)?;
    let theta_comps = zerolocus::extract(theta, grid, tr).map_err(|e| match e {
        e @ ZeroLocusError::NotGeneric { .. } => InvariantsError::NotGenericTheta(e),
        e => e.into(),
    })?;
    if theta_comps.len() != comps.len() {
        let component = comps
            .iter()
            .find(|c| {
                !theta_comps
                    .iter()
                    .any(|t| t.lattice_edges == c.lattice_edges)
            })
            .map_or(comps.len(), |c| c.id);
        return Err(InvariantsError::LocusMismatch { component });
    }
    let mut c = Vec::with_capacity(comps.len());
    for comp in &comps {
        let twin = theta_comps
            .iter()
            .find(|t| t.lattice_edges == comp.lattice_edges)
            .ok_or(InvariantsError::LocusMismatch { component: comp.id })?;
        let tb = modular_period(base, comp)?.period;
        let tt = modular_period(theta, twin)?.period;
        let p = comp.vertices[0].position;
        let (_, gb, _) = base.intrinsic(&p)?;
        let (_, gt, _) = theta.intrinsic(&p)?;
        let orient = if dot(&gb, &gt) < 0.0 { -1.0 } else { 1.0 };
        c.push(orient * tb / tt);
    }
    let v = regularize(base, grid, Integrand::Ratio(theta), opts)?;
    Ok(DeformationCoordinates {
        c,
        v_rel: v.value,
        diagnostics: v.diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Bump function in a collar of the component times the linearized structure.
    CollarBump { component: usize },
    /// The reference volume form.
    VolumeForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct H2Report {
    pub dimension: usize,
    pub generators: Vec<Generator>,
}

pub fn h2_report(comps: &[ZeroComponent]) -> H2Report {
    let mut generators: Vec<Generator> = comps
        .iter()
        .map(|c| Generator::CollarBump { component: c.id })
        .collect();
    generators.push(Generator::VolumeForm);
    H2Report {
        dimension: generators.len(),
        generators,
    }
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisOptions {
    pub transversality: Transversality,
    pub volume: VolumeOptions,
}

/// Everything computed for one field.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub domain: DomainKind,
    pub resolution: Vec<usize>,
    pub f: String,
    pub components: Vec<ZeroComponent>,
    pub regions: RegionMap,
    pub modular: Vec<ModularData>,
    pub volume: VolumeEstimate,
}

pub fn analyze(
    field: &NambuField,
    grid: &QuadGrid,
    opts: &AnalysisOptions,
) -> Result<Analysis, InvariantsError> {
    let components = zerolocus::extract(field, grid, opts.transversality)?;
    let regions = zerolocus::regions(field, grid, &components)?;
    let modular = components
        .iter()
        .map(|c| modular_period(field, c))
        .collect::<Result<Vec<_>, _>>()?;
    let volume = regularized_volume(field, grid, &opts.volume)?;
    Ok(Analysis {
        domain: field.domain,
        resolution: grid.resolution.clone(),
        f: field.f.to_string(),
        components,
        regions,
        modular,
        volume,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub id: usize,
    pub period: f64,
    /// Length (2-D) or area (3-D).
    pub measure: f64,
    pub vertices: usize,
    pub min_grad: f64,
    pub sign_flip: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euler_characteristic: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionReport {
    pub id: usize,
    pub sign: Sign,
}

/// Serializable summary of an [`Analysis`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub domain: DomainKind,
    pub resolution: Vec<usize>,
    pub f: String,
    pub components: Vec<ComponentReport>,
    pub regions: Vec<RegionReport>,
    pub adjacency: Vec<Adjacency>,
    pub volume: f64,
    pub diagnostics: VolumeDiagnostics,
    pub h2: H2Report,
}

impl Analysis {
    pub fn report(&self) -> InvariantReport {
        InvariantReport {
            domain: self.domain,
            resolution: self.resolution.clone(),
            f: self.f.clone(),
            components: self
                .components
                .iter()
                .zip(&self.modular)
                .map(|(c, m)| ComponentReport {
                    id: c.id,
                    period: m.period,
                    measure: c.measure,
                    vertices: c.vertices.len(),
                    min_grad: c.min_grad,
                    sign_flip: m.sign_flip,
                    euler_characteristic: c.euler_characteristic,
                })
                .collect(),
            regions: self
                .regions
                .signs
                .iter()
                .enumerate()
                .map(|(id, &sign)| RegionReport { id, sign })
                .collect(),
            adjacency: self.regions.adjacency.clone(),
            volume: self.volume.value,
            diagnostics: self.volume.diagnostics.clone(),
            h2: h2_report(&self.components),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;
    use std::f64::consts::PI;

    fn field(kind: DomainKind, f: &str) -> NambuField {
        NambuField::parse(kind, f).unwrap()
    }

    fn periods(kind: DomainKind, res: &[usize], f: &str) -> Vec<f64> {
        let grid = make_grid(kind, res).unwrap();
        let fld = field(kind, f);
        zerolocus::extract(&fld, &grid, Transversality::default())
            .unwrap()
            .iter()
            .map(|c| modular_period(&fld, c).unwrap().period)
            .collect()
    }

    fn volume(kind: DomainKind, res: &[usize], f: &str) -> f64 {
        let grid = make_grid(kind, res).unwrap();
        regularized_volume(&field(kind, f), &grid, &VolumeOptions::default())
            .unwrap()
            .value
    }

    /// Mean of `1{|t| ≥ ε}/t` over the box by brute-force midpoint sampling.
    fn brute_mean(t0: f64, a: &[f64], eps: f64) -> f64 {
        let n = 200usize;
        let mut total = 0.0;
        let mut count = 0usize;
        let idx: Vec<usize> = vec![0; a.len()];
        let mut idx = idx;
        loop {
            let t = t0
                + idx
                    .iter()
                    .zip(a)
                    .map(|(&i, &ai)| ai * ((i as f64 + 0.5) / n as f64 - 0.5))
                    .sum::<f64>();
            if t.abs() >= eps {
                total += 1.0 / t;
            }
            count += 1;
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return total / count as f64;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn band_mean_matches_brute_force() {
        for (t0, a, eps) in [
            (0.01, vec![0.05], 0.02),
            (-0.03, vec![0.04, 0.02], 0.025),
            (0.0, vec![0.03, 0.01], 0.005),
            (0.02, vec![0.02, 0.015], 0.01),
        ] {
            let exact = band_mean(t0, &a, eps);
            let brute = brute_mean(t0, &a, eps);
            assert!(
                (exact - brute).abs() < 3e-2 * brute.abs().max(1.0),
                "{t0} {a:?}: {exact} vs {brute}"
            );
        }
        // Three axes, coarser brute force.
        let exact = band_mean(0.01, &[0.03, 0.02, 0.01], 0.012);
        let brute = brute_mean_3(0.01, [0.03, 0.02, 0.01], 0.012);
        assert!(
            (exact - brute).abs() < 0.05 * brute.abs().max(1.0),
            "{exact} vs {brute}"
        );
    }

    fn brute_mean_3(t0: f64, a: [f64; 3], eps: f64) -> f64 {
        let n = 60;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let u = |m: usize| (m as f64 + 0.5) / n as f64 - 0.5;
                    let t = t0 + a[0] * u(i) + a[1] * u(j) + a[2] * u(k);
                    if t.abs() >= eps {
                        total += 1.0 / t;
                    }
                }
            }
        }
        total / (n * n * n) as f64
    }

    #[test]
    fn band_mean_limits() {
        assert_eq!(band_mean(1.0, &[0.1, 0.1], 0.05), 1.0);
        assert_eq!(band_mean(0.0, &[0.01], 0.05), 0.0);
        assert_eq!(band_mean(0.5, &[], 0.05), 2.0);
        // Symmetric box around zero: contributions cancel.
        assert!(band_mean(0.0, &[0.2, 0.1], 0.01).abs() < 1e-12);
    }

    #[test]
    fn latitude_periods() {
        for f in ["z", "z + 0.5", "z - 0.5"] {
            let t = periods(DomainKind::Sphere2, &[128, 256], f);
            assert_eq!(t.len(), 1);
            assert!((t[0] - 2.0 * PI).abs() < 2e-3 * 2.0 * PI, "{f}: {}", t[0]);
        }
    }

    #[test]
    fn torus_periods() {
        let t = periods(DomainKind::Torus2, &[128, 128], "sin(2*pi*x)");
        assert_eq!(t.len(), 2);
        for p in t {
            assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-4, "{p}");
        }
    }

    #[test]
    fn transverse_field_does_not_matter() {
        let grid = make_grid(DomainKind::Sphere2, &[64, 128]).unwrap();
        let fld = field(DomainKind::Sphere2, "z - 0.3*x + 0.2");
        let comp = &zerolocus::extract(&fld, &grid, Transversality::default()).unwrap()[0];
        let a = modular_period(&fld, comp).unwrap().period;
        let b = modular_period_with(&fld, comp, |p| 1.0 + 0.3 * (5.0 * p[1].atan2(p[0])).sin())
            .unwrap()
            .period;
        assert!((a - b).abs() / a < 1e-10);
    }

    #[test]
    fn volumes() {
        assert!(volume(DomainKind::Sphere2, &[128, 256], "z").abs() < 1e-3);
        let v = volume(DomainKind::Sphere2, &[128, 256], "z + 0.5");
        assert!((v - 2.0 * PI * 3f64.ln()).abs() < 1e-2, "{v}");
        assert!(volume(DomainKind::Torus2, &[128, 128], "sin(2*pi*x)").abs() < 1e-3);
        let v = volume(DomainKind::Sphere2, &[64, 128], "0.5");
        assert!((v - 8.0 * PI).abs() < 1e-6, "{v}");
    }

    #[test]
    fn samples_match_closed_form() {
        // I(ε) for z² - 1/4 from the antiderivative ln|(z - 1/2)/(z + 1/2)|.
        let grid = make_grid(DomainKind::Sphere2, &[256, 512]).unwrap();
        let fld = field(DomainKind::Sphere2, "z*z - 0.25");
        let est = regularized_volume(&fld, &grid, &VolumeOptions::default()).unwrap();
        assert_eq!(est.diagnostics.scale, 0.75);
        let anti = |z: f64| ((z - 0.5) / (z + 0.5)).abs().ln();
        for (eps, got) in est
            .diagnostics
            .schedule
            .iter()
            .zip(&est.diagnostics.samples)
        {
            let e = eps * 0.75;
            let (a, b) = ((0.25 + e).sqrt(), (0.25 - e).sqrt());
            let exact =
                2.0 * PI * (anti(-a) - anti(-1.0) + anti(b) - anti(-b) + anti(1.0) - anti(a));
            assert!((got - exact).abs() < 2e-3, "{eps}: {got} vs {exact}");
        }
    }

    #[test]
    fn volume_scales_inversely() {
        let grid = make_grid(DomainKind::Sphere2, &[64, 128]).unwrap();
        let fld = field(DomainKind::Sphere2, "z + 0.5");
        let opts = VolumeOptions::default();
        let v = regularized_volume(&fld, &grid, &opts).unwrap().value;
        for c in [3.0, -0.5] {
            let w = regularized_volume(&fld.scaled(c), &grid, &opts)
                .unwrap()
                .value;
            assert!((w - v / c).abs() < 1e-9 * v.abs(), "{c}: {w} vs {}", v / c);
        }
    }

    #[test]
    fn cutoff_identity_and_mismatch() {
        let grid = make_grid(DomainKind::Sphere2, &[64, 128]).unwrap();
        let fld = field(DomainKind::Sphere2, "z + 0.5");
        let opts = VolumeOptions::default();
        let a = regularized_volume(&fld, &grid, &opts).unwrap();
        let b = volume_with_cutoff(&fld, &grid, &fld.f, &opts).unwrap();
        assert_eq!(a, b);
        let bad = Expression::parse("z - 0.5", DomainKind::Sphere2).unwrap();
        let err = volume_with_cutoff(&fld, &grid, &bad, &opts).unwrap_err();
        assert!(
            matches!(err, InvariantsError::CutoffMismatch { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn schedule_validation() {
        let grid = make_grid(DomainKind::Torus2, &[32, 32]).unwrap();
        let fld = field(DomainKind::Torus2, "sin(2*pi*x)");
        for s in [vec![0.1], vec![0.05, 0.1], vec![0.1, -0.05]] {
            let opts = VolumeOptions {
                schedule: s,
                ..Default::default()
            };
            assert!(matches!(
                regularized_volume(&fld, &grid, &opts),
                Err(InvariantsError::BadSchedule(_))
            ));
        }
        let opts = VolumeOptions {
            schedule: vec![1e-3, 1e-4, 1e-5],
            ..Default::default()
        };
        let err = regularized_volume(&fld, &grid, &opts).unwrap_err();
        assert!(
            matches!(err, InvariantsError::ScheduleTooFine { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn non_convergence_is_reported() {
        // A strongly curved cutoff makes I(ε) far from linear at coarse ε.
        let grid = make_grid(DomainKind::Sphere2, &[64, 128]).unwrap();
        let fld = field(DomainKind::Sphere2, "z + 0.5");
        let h = Expression::parse("(z + 0.5)*exp(8*(z + 0.5))", DomainKind::Sphere2).unwrap();
        let opts = VolumeOptions {
            schedule: vec![0.4, 0.2, 0.1],
            tolerance: 1e-6,
        };
        let err = volume_with_cutoff(&fld, &grid, &h, &opts).unwrap_err();
        assert!(
            matches!(err, InvariantsError::NonConvergent { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn deformation_of_itself() {
        let grid = make_grid(DomainKind::Sphere2, &[64, 128]).unwrap();
        let base = field(DomainKind::Sphere2, "z + 0.5");
        let opts = VolumeOptions::default();
        let d =
            deformation_coordinates(&base, &base, &grid, Transversality::default(), &opts).unwrap();
        let v = regularized_volume(&base, &grid, &opts).unwrap().value;
        assert_eq!(d.c, vec![1.0]);
        assert!((d.v_rel - v).abs() < 1e-12);
        let shifted = field(DomainKind::Sphere2, "z + 0.3");
        let err = deformation_coordinates(&base, &shifted, &grid, Transversality::default(), &opts)
            .unwrap_err();
        assert!(
            matches!(err, InvariantsError::LocusMismatch { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn h2_counts() {
        let g = h2_report(&[]);
        assert_eq!(g.dimension, 1);
        assert_eq!(g.generators, vec![Generator::VolumeForm]);
    }

    #[test]
    fn field_must_match_domain() {
        let e = Expression::parse("x + y", DomainKind::Torus2).unwrap();
        assert!(NambuField::new(DomainKind::Torus2, e.clone()).is_ok());
        assert!(matches!(
            NambuField::new(DomainKind::Sphere2, e),
            Err(InvariantsError::FieldDomain { .. })
        ));
    }
}
