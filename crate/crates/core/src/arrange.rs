//! Signed weighted dual graphs, canonical codes for signed weighted trees,
//! equivalence verdicts and enumeration of signed trees.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::DomainKind;
use crate::invariants::InvariantReport;
use crate::zerolocus::Sign;

/// Largest `k` accepted by [`enumerate_signed_trees`].
pub const MAX_K: usize = 9;
const MAX_N: usize = MAX_K + 1;
/// Default weight quantum relative to the largest weight.
pub const DEFAULT_RELATIVE_QUANTUM: f64 = 1e-3;
pub const DEFAULT_TOL_VOLUME: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArrangeError {
    #[error("graph is not a tree: {vertices} vertices, {edges} edges")]
    NotATree { vertices: usize, edges: usize },
    #[error("cannot compare a {0} report with a {1} report")]
    DomainMismatch(DomainKind, DomainKind),
    #[error("k = {k} is outside 1..={max}")]
    KTooLarge { k: usize, max: usize },
    #[error("weight quantum must be positive, got {0}")]
    BadQuantum(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub component: usize,
}

/// Dual multigraph of `(M, H)`: one vertex per region, one edge per zero component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedWeightedGraph {
    pub domain: DomainKind,
    pub signs: Vec<Sign>,
    pub edges: Vec<GraphEdge>,
    pub global_volume: f64,
}

impl SignedWeightedGraph {
    pub fn is_tree(&self) -> bool {
        let n = self.signs.len();
        if n == 0 || self.edges.len() + 1 != n {
            return false;
        }
        let mut uf = crate::zerolocus::UnionFind::new(n);
        for e in &self.edges {
            if uf.find(e.a) == uf.find(e.b) {
                return false;
            }
            uf.union(e.a, e.b);
        }
        true
    }

    /// The same graph with every sign reversed.
    pub fn flipped(&self) -> SignedWeightedGraph {
        SignedWeightedGraph {
            signs: self.signs.iter().map(|s| s.flip()).collect(),
            ..self.clone()
        }
    }

    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(0.0, f64::max)
    }
}

/// One vertex per region with its sign, one edge per component weighted by its period.
pub fn build_graph(report: &InvariantReport) -> SignedWeightedGraph {
    let edges = report
        .adjacency
        .iter()
        .map(|adj| GraphEdge {
            a: adj.positive,
            b: adj.negative,
            weight: report
                .components
                .iter()
                .find(|c| c.id == adj.component)
                .map_or(f64::NAN, |c| c.period),
            component: adj.component,
        })
        .collect();
    SignedWeightedGraph {
        domain: report.domain,
        signs: report.regions.iter().map(|r| r.sign).collect(),
        edges,
        global_volume: report.volume,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CanonicalCode {
    pub code: String,
    #[serde(skip)]
    quantum_bits: u64,
}

impl CanonicalCode {
    pub fn weight_quantum(&self) -> f64 {
        f64::from_bits(self.quantum_bits)
    }
}

impl std::fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.code)
    }
}

/// Canonical code of a signed weighted tree. Weights are rounded to
/// multiples of `weight_quantum`; `None` uses 1e-3 of the largest weight.
pub fn canonical_code(
    g: &SignedWeightedGraph,
    weight_quantum: Option<f64>,
) -> Result<CanonicalCode, ArrangeError> {
    let q = weight_quantum.unwrap_or(DEFAULT_RELATIVE_QUANTUM * g.max_weight());
    weighted_code(g, q, 0.0)
}

fn quantize(w: f64, quantum: f64, offset: f64) -> i64 {
    if quantum > 0.0 {
        (w / quantum + offset).round() as i64
    } else {
        0
    }
}

fn weighted_code(
    g: &SignedWeightedGraph,
    quantum: f64,
    offset: f64,
) -> Result<CanonicalCode, ArrangeError> {
    if !(quantum >= 0.0 && quantum.is_finite()) {
        return Err(ArrangeError::BadQuantum(quantum));
    }
    if !g.is_tree() {
        return Err(ArrangeError::NotATree {
            vertices: g.signs.len(),
            edges: g.edges.len(),
        });
    }
    let labels: Vec<i64> = g
        .edges
        .iter()
        .map(|e| quantize(e.weight, quantum, offset))
        .collect();
    let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.a, e.b)).collect();
    Ok(CanonicalCode {
        code: tree_code(&g.signs, &pairs, Some(&labels)),
        quantum_bits: quantum.to_bits(),
    })
}

/// AHU encoding rooted at the tree's center; the smaller code for bicentral trees.
fn tree_code(signs: &[Sign], edges: &[(usize, usize)], labels: Option<&[i64]>) -> String {
    let n = signs.len();
    let mut adj: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    for (i, &(a, b)) in edges.iter().enumerate() {
        let l = labels.map_or(0, |l| l[i]);
        adj[a].push((b, l));
        adj[b].push((a, l));
    }
    centers(&adj)
        .into_iter()
        .map(|c| rooted_code(&adj, signs, c, usize::MAX, labels.is_some()))
        .min()
        .unwrap_or_default()
}

fn centers(adj: &[Vec<(usize, i64)>]) -> Vec<usize> {
    let n = adj.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut leaves: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1).collect();
    let mut remaining = n;
    while remaining > 2 {
        remaining -= leaves.len();
        for &v in &leaves {
            degree[v] = 0;
        }
        let mut next = Vec::new();
        for &v in &leaves {
            for &(w, _) in &adj[v] {
                if degree[w] > 0 {
                    degree[w] -= 1;
                    if degree[w] == 1 {
                        next.push(w);
                    }
                }
            }
        }
        leaves = next;
    }
    leaves.sort_unstable();
    leaves
}

fn rooted_code(
    adj: &[Vec<(usize, i64)>],
    signs: &[Sign],
    v: usize,
    parent: usize,
    weighted: bool,
) -> String {
    let mut children: Vec<(i64, String)> = adj[v]
        .iter()
        .filter(|&&(w, _)| w != parent)
        .map(|&(w, l)| (l, rooted_code(adj, signs, w, v, weighted)))
        .collect();
    children.sort();
    let mut s = String::new();
    s.push(signs[v].symbol());
    s.push('(');
    for (l, c) in children {
        if weighted {
            let _ = write!(s, "{l}:");
        }
        s.push_str(&c);
    }
    s.push(')');
    s
}

// ---------------------------------------------------------------------------
// Equivalence

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reason {
    #[serde(rename = "tree shape")]
    TreeShape,
    #[serde(rename = "weights")]
    Weights,
    #[serde(rename = "volume")]
    Volume,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reason::TreeShape => "tree shape",
            Reason::Weights => "weights",
            Reason::Volume => "volume",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    EquivalentOrientationPreserving,
    EquivalentOrientationReversing,
    Inequivalent(Reason),
    Undecided,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::EquivalentOrientationPreserving => "equivalent_orientation_preserving",
            Verdict::EquivalentOrientationReversing => "equivalent_orientation_reversing",
            Verdict::Inequivalent(_) => "inequivalent",
            Verdict::Undecided => "undecided",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Inequivalent(r) => write!(f, "inequivalent ({r})"),
            v => f.write_str(v.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceOptions {
    /// Absolute weight quantum; `None` uses 1e-3 of the largest weight in either report.
    pub weight_quantum: Option<f64>,
    pub tol_volume: f64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            weight_quantum: None,
            tol_volume: DEFAULT_TOL_VOLUME,
        }
    }
}

/// How one orientation of the comparison fares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Match {
    Shape,
    Weights,
    Volume,
    Full,
}

impl Match {
    fn reason(self) -> Reason {
        match self {
            Match::Shape => Reason::TreeShape,
            Match::Weights => Reason::Weights,
            _ => Reason::Volume,
        }
    }
}

pub fn is_equivalent(
    r1: &InvariantReport,
    r2: &InvariantReport,
    opts: &EquivalenceOptions,
) -> Result<Verdict, ArrangeError> {
    if r1.domain != r2.domain {
        return Err(ArrangeError::DomainMismatch(r1.domain, r2.domain));
    }
    let g1 = build_graph(r1);
    let g2 = build_graph(r2);
    let quantum = opts
        .weight_quantum
        .unwrap_or(DEFAULT_RELATIVE_QUANTUM * g1.max_weight().max(g2.max_weight()));
    if !(quantum > 0.0) && !(g1.edges.is_empty() && g2.edges.is_empty()) {
        return Err(ArrangeError::BadQuantum(quantum));
    }
    let tol = opts.tol_volume;
    let flipped = g2.flipped();
    let (preserving, reversing) = if r1.domain == DomainKind::Sphere2 {
        (
            tree_match(
                &g1,
                &g2,
                quantum,
                (g1.global_volume - g2.global_volume).abs() <= tol,
            )?,
            tree_match(
                &g1,
                &flipped,
                quantum,
                (g1.global_volume + g2.global_volume).abs() <= tol,
            )?,
        )
    } else {
        (
            multiset_match(
                &g1,
                &g2,
                quantum,
                (g1.global_volume - g2.global_volume).abs() <= tol,
            ),
            multiset_match(
                &g1,
                &flipped,
                quantum,
                (g1.global_volume + g2.global_volume).abs() <= tol,
            ),
        )
    };
    let full_verdict = |m: Match, v: Verdict| (m == Match::Full).then_some(v);
    if r1.domain == DomainKind::Sphere2 {
        if let Some(v) = full_verdict(preserving, Verdict::EquivalentOrientationPreserving).or(
            full_verdict(reversing, Verdict::EquivalentOrientationReversing),
        ) {
            return Ok(v);
        }
    } else if preserving == Match::Full || reversing == Match::Full {
        return Ok(Verdict::Undecided);
    }
    Ok(Verdict::Inequivalent(preserving.max(reversing).reason()))
}

fn tree_match(
    g1: &SignedWeightedGraph,
    g2: &SignedWeightedGraph,
    quantum: f64,
    volume_ok: bool,
) -> Result<Match, ArrangeError> {
    let shape = |g: &SignedWeightedGraph| weighted_code(g, 0.0, 0.0);
    if shape(g1)? != shape(g2)? {
        return Ok(Match::Shape);
    }
    // A second grid shifted by half a quantum catches pairs split by a rounding boundary.
    let same_weights = [0.0, 0.5].iter().try_fold(false, |found, &offset| {
        Ok::<bool, ArrangeError>(
            found
                || weighted_code(g1, quantum, offset)?.code
                    == weighted_code(g2, quantum, offset)?.code,
        )
    })?;
    Ok(if !same_weights {
        Match::Weights
    } else if !volume_ok {
        Match::Volume
    } else {
        Match::Full
    })
}

fn multiset_match(
    g1: &SignedWeightedGraph,
    g2: &SignedWeightedGraph,
    quantum: f64,
    volume_ok: bool,
) -> Match {
    let shape = |g: &SignedWeightedGraph| {
        let mut degree = vec![0usize; g.signs.len()];
        let mut loops = 0;
        for e in &g.edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
            loops += usize::from(e.a == e.b);
        }
        let mut by_vertex: Vec<(Sign, usize)> = g.signs.iter().copied().zip(degree).collect();
        by_vertex.sort();
        (by_vertex, g.edges.len(), loops)
    };
    if shape(g1) != shape(g2) {
        return Match::Shape;
    }
    let weights = |g: &SignedWeightedGraph, offset: f64| {
        let mut w: Vec<i64> = g
            .edges
            .iter()
            .map(|e| quantize(e.weight, quantum, offset))
            .collect();
        w.sort_unstable();
        w
    };
    if weights(g1, 0.0) != weights(g2, 0.0) && weights(g1, 0.5) != weights(g2, 0.5) {
        return Match::Weights;
    }
    if volume_ok {
        Match::Full
    } else {
        Match::Volume
    }
}

// ---------------------------------------------------------------------------
// Enumeration

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeEnumeration {
    pub k: usize,
    pub count: usize,
    pub codes: Vec<String>,
}

/// Isomorphism classes of signed trees with `k` edges, from all labeled
/// trees on `k + 1` vertices and both proper signings of each.
pub fn enumerate_signed_trees(k: usize) -> Result<TreeEnumeration, ArrangeError> {
    if k == 0 || k > MAX_K {
        return Err(ArrangeError::KTooLarge { k, max: MAX_K });
    }
    let n = k + 1;
    // Unlabeled shapes first; signings are applied once per shape.
    let shapes: BTreeSet<Vec<(usize, usize)>> = if n == 2 {
        std::iter::once(vec![(0, 1)]).collect()
    } else {
        let total = n.pow((n - 2) as u32);
        let chunk = n.pow((n - 3) as u32);
        (0..total / chunk)
            .into_par_iter()
            .map(|c| {
                let mut local: BTreeSet<(u64, Vec<(usize, usize)>)> = BTreeSet::new();
                let mut seen = std::collections::HashSet::new();
                let mut seq = [0usize; MAX_N];
                let mut edges = [(0usize, 0usize); MAX_N];
                for idx in c * chunk..(c + 1) * chunk {
                    let mut x = idx;
                    for s in seq[..n - 2].iter_mut().rev() {
                        *s = x % n;
                        x /= n;
                    }
                    decode_into(&seq[..n - 2], n, &mut edges);
                    let key = shape_key(&edges[..n - 1], n);
                    if seen.insert(key) {
                        local.insert((key, edges[..n - 1].to_vec()));
                    }
                }
                local
            })
            .reduce(BTreeSet::new, |mut a, b| {
                for item in b {
                    if !a.iter().any(|(k, _)| *k == item.0) {
                        a.insert(item);
                    }
                }
                a
            })
            .into_iter()
            .map(|(_, e)| e)
            .collect()
    };
    let mut codes = BTreeSet::new();
    for edges in &shapes {
        for root_sign in [Sign::Plus, Sign::Minus] {
            let signs = proper_signing(edges, n, root_sign);
            codes.insert(tree_code(&signs, edges, None));
        }
    }
    Ok(TreeEnumeration {
        k,
        count: codes.len(),
        codes: codes.into_iter().collect(),
    })
}

/// The labeled tree with Prüfer sequence `seq` on `n` vertices.
pub fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut edges = vec![(0, 0); n - 1];
    decode_into(seq, n, &mut edges);
    edges
}

fn decode_into(seq: &[usize], n: usize, edges: &mut [(usize, usize)]) {
    let mut degree = [1u8; 64];
    let degree = &mut degree[..n.max(seq.len() + 2)];
    for &s in seq {
        degree[s] += 1;
    }
    for (i, &s) in seq.iter().enumerate() {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges[i] = (leaf, s);
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let mut rest = (0..n).filter(|&v| degree[v] == 1);
    edges[seq.len()] = (rest.next().unwrap(), rest.next().unwrap());
}

/// Signs alternating along edges, vertex 0 receiving `root`.
fn proper_signing(edges: &[(usize, usize)], n: usize, root: Sign) -> Vec<Sign> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut signs = vec![None; n];
    signs[0] = Some(root);
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        let s = signs[v].unwrap();
        for &w in &adj[v] {
            if signs[w].is_none() {
                signs[w] = Some(s.flip());
                stack.push(w);
            }
        }
    }
    signs.into_iter().map(|s| s.unwrap()).collect()
}

/// Bit-packed unsigned AHU code (`1 children 0`), canonical over both centers.
fn shape_key(edges: &[(usize, usize)], n: usize) -> u64 {
    let mut adj = [[0u8; MAX_N]; MAX_N];
    let mut deg = [0u8; MAX_N];
    for &(a, b) in edges {
        adj[a][deg[a] as usize] = b as u8;
        deg[a] += 1;
        adj[b][deg[b] as usize] = a as u8;
        deg[b] += 1;
    }
    fn code(adj: &[[u8; MAX_N]; MAX_N], deg: &[u8; MAX_N], v: usize, parent: usize) -> (u32, u64) {
        let mut kids = [(0u32, 0u64); MAX_N];
        let mut m = 0;
        for &w in &adj[v][..deg[v] as usize] {
            if w as usize != parent {
                kids[m] = code(adj, deg, w as usize, v);
                m += 1;
            }
        }
        kids[..m].sort_unstable();
        let mut len = 1;
        let mut bits = 1u64;
        for &(l, b) in &kids[..m] {
            bits = (bits << l) | b;
            len += l;
        }
        (len + 1, bits << 1)
    }
    // Peel leaves down to the one or two centers.
    let mut d = deg;
    let mut removed = [false; MAX_N];
    let mut remaining = n;
    while remaining > 2 {
        let mut leaves = [0usize; MAX_N];
        let mut m = 0;
        for v in 0..n {
            if !removed[v] && d[v] <= 1 {
                leaves[m] = v;
                m += 1;
            }
        }
        for &v in &leaves[..m] {
            removed[v] = true;
            remaining -= 1;
            for &w in &adj[v][..deg[v] as usize] {
                d[w as usize] = d[w as usize].saturating_sub(1);
            }
        }
    }
    (0..n)
        .filter(|&v| !removed[v])
        .map(|c| code(&adj, &deg, c, usize::MAX).1)
        .min()
        .unwrap()
}

// ---------------------------------------------------------------------------
// DOT

/// `x` with six significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn to_dot(g: &SignedWeightedGraph) -> String {
    let mut s = String::from("graph nambu {\n");
    let _ = writeln!(s, "  label=\"{} V = {}\";", g.domain, sig6(g.global_volume));
    for (i, sign) in g.signs.iter().enumerate() {
        let _ = writeln!(s, "  r{i} [label=\"{sign}\"];");
    }
    for e in &g.edges {
        let _ = writeln!(s, "  r{} -- r{} [label=\"{}\"];", e.a, e.b, sig6(e.weight));
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(signs: &str, edges: &[(usize, usize, f64)]) -> SignedWeightedGraph {
        SignedWeightedGraph {
            domain: DomainKind::Sphere2,
            signs: signs
                .chars()
                .map(|c| if c == '+' { Sign::Plus } else { Sign::Minus })
                .collect(),
            edges: edges
                .iter()
                .enumerate()
                .map(|(i, &(a, b, weight))| GraphEdge {
                    a,
                    b,
                    weight,
                    component: i,
                })
                .collect(),
            global_volume: 0.0,
        }
    }

    fn code(g: &SignedWeightedGraph) -> String {
        canonical_code(g, Some(1e-3)).unwrap().code
    }

    #[test]
    fn single_edge_is_label_invariant() {
        let w = 2.0 * std::f64::consts::PI;
        assert_eq!(
            code(&tree("+-", &[(0, 1, w)])),
            code(&tree("-+", &[(1, 0, w)]))
        );
    }

    #[test]
    fn path_and_star_differ() {
        let path = tree("+-+-", &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let star = tree("+---", &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]);
        assert_ne!(code(&path), code(&star));
    }

    #[test]
    fn path_reflection() {
        let a = tree("+-+", &[(0, 1, 1.5), (1, 2, 2.5)]);
        let b = tree("+-+", &[(0, 1, 2.5), (1, 2, 1.5)]);
        assert_eq!(code(&a), code(&b));
        let c = tree("+-+", &[(0, 1, 1.5), (1, 2, 1.5)]);
        assert_ne!(code(&a), code(&c));
    }

    #[test]
    fn not_a_tree() {
        let cycle = tree("+-", &[(0, 1, 1.0), (0, 1, 1.0)]);
        assert!(matches!(
            canonical_code(&cycle, None),
            Err(ArrangeError::NotATree { .. })
        ));
        let forest = tree("+-+-", &[(0, 1, 1.0), (2, 3, 1.0), (2, 3, 1.0)]);
        assert!(!forest.is_tree());
    }

    #[test]
    fn default_quantum_is_relative() {
        let g = tree("+-+", &[(0, 1, 3.0), (1, 2, 6.0)]);
        let c = canonical_code(&g, None).unwrap();
        assert!((c.weight_quantum() - 6e-3).abs() < 1e-15);
        assert_eq!(c.code, "-(500:+()1000:+())");
    }

    #[test]
    fn bicentral_takes_smaller_code() {
        let g = tree("+-", &[(0, 1, 1.0)]);
        assert_eq!(code(&g), "+(1000:-())");
    }

    #[test]
    fn prufer_round_trip_counts() {
        // Cayley: n^(n-2) distinct labeled trees.
        let n = 5;
        let mut all = BTreeSet::new();
        for idx in 0..5usize.pow(3) {
            let seq = [idx / 25, (idx / 5) % 5, idx % 5];
            let mut e: Vec<(usize, usize)> = prufer_decode(&seq, n)
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            e.sort();
            all.insert(e);
        }
        assert_eq!(all.len(), 125);
    }

    #[test]
    fn small_enumerations() {
        let counts: Vec<usize> = (1..=4)
            .map(|k| enumerate_signed_trees(k).unwrap().count)
            .collect();
        assert_eq!(counts, vec![1, 2, 3, 6]);
        assert_eq!(
            enumerate_signed_trees(1).unwrap().codes,
            vec!["+(-())".to_string()]
        );
        assert!(matches!(
            enumerate_signed_trees(10),
            Err(ArrangeError::KTooLarge { .. })
        ));
        assert!(matches!(
            enumerate_signed_trees(0),
            Err(ArrangeError::KTooLarge { .. })
        ));
    }

    #[test]
    fn dot_output() {
        let mut g = tree("+-", &[(0, 1, 2.0 * std::f64::consts::PI)]);
        g.global_volume = 6.902_9;
        let dot = to_dot(&g);
        assert!(dot.contains("r0 [label=\"+\"]"));
        assert!(dot.contains("r0 -- r1 [label=\"6.28319\"]"));
        assert!(dot.contains("V = 6.9029"));
    }

    #[test]
    fn six_digits() {
        assert_eq!(sig6(0.159154943), "0.159155");
        assert_eq!(sig6(std::f64::consts::TAU), "6.28319");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(-2.0), "-2");
        assert_eq!(sig6(0.0), "0");
    }

    /// Random tree on `n` vertices with alternating signs and weights from a small set.
    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> SignedWeightedGraph {
        use rand::Rng;
        let seq: Vec<usize> = (0..n.saturating_sub(2))
            .map(|_| rng.random_range(0..n))
            .collect();
        let edges = if n == 2 {
            vec![(0, 1)]
        } else {
            prufer_decode(&seq, n)
        };
        let root = if rng.random_bool(0.5) {
            Sign::Plus
        } else {
            Sign::Minus
        };
        let signs = proper_signing(&edges, n, root);
        SignedWeightedGraph {
            domain: DomainKind::Sphere2,
            signs,
            edges: edges
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| GraphEdge {
                    a,
                    b,
                    weight: [1.0, 2.0, 3.5][rng.random_range(0..3)],
                    component: i,
                })
                .collect(),
            global_volume: 0.0,
        }
    }

    fn relabel(g: &SignedWeightedGraph, rng: &mut ChaCha8Rng) -> SignedWeightedGraph {
        let n = g.signs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut signs = vec![Sign::Plus; n];
        for v in 0..n {
            signs[perm[v]] = g.signs[v];
        }
        let mut edges: Vec<GraphEdge> = g
            .edges
            .iter()
            .map(|e| {
                use rand::Rng;
                let (a, b) = (perm[e.a], perm[e.b]);
                let (a, b) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                GraphEdge { a, b, ..*e }
            })
            .collect();
        edges.shuffle(rng);
        SignedWeightedGraph {
            signs,
            edges,
            ..g.clone()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn code_survives_relabeling(seed in any::<u64>(), n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_tree(&mut rng, n);
            let c = code(&g);
            for _ in 0..20 {
                prop_assert_eq!(&code(&relabel(&g, &mut rng)), &c);
            }
        }
    }
}
