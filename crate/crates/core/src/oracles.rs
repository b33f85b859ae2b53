//! Dense ground truth: Laplacians, matrix-tree determinants, exact Schur
//! complements, effective resistances, leverage scores, spanning-tree
//! enumeration and transfer-current subset marginals.
//!
//! Nothing here is fast. These routines are the reference every randomized
//! algorithm in the crate is checked against.

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, UnionFind, WeightedMultiGraph};
use crate::linalg::{pivoted_log_det, Cholesky, DenseMatrix};
use crate::logweight::LogWeight;

/// Relative pivot floor below which a minor is treated as singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Refuse to enumerate graphs with more spanning trees than this.
pub const ENUMERATION_GUARD: f64 = 1e7;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLaplacian {
    m: DenseMatrix,
}

impl DenseLaplacian {
    pub fn from_graph(g: &WeightedMultiGraph) -> Self {
        let mut m = DenseMatrix::zeros(g.n());
        for e in g.edges() {
            m[(e.u, e.u)] += e.weight;
            m[(e.v, e.v)] += e.weight;
            m[(e.u, e.v)] -= e.weight;
            m[(e.v, e.u)] -= e.weight;
        }
        DenseLaplacian { m }
    }

    /// Validates symmetry (1e-12), nonpositive off-diagonals and zero row
    /// sums (1e-9, both relative to the largest diagonal entry).
    pub fn from_matrix(m: DenseMatrix) -> Result<Self> {
        let scale = m.max_abs_diagonal().max(f64::MIN_POSITIVE);
        let asym = m.asymmetry();
        if asym > 1e-12 * scale.max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let n = m.dim();
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                if i != j && m[(i, j)] > 1e-12 * scale {
                    return Err(Error::param(format!(
                        "positive off-diagonal entry at ({i}, {j})"
                    )));
                }
                sum += m[(i, j)];
            }
            if sum.abs() > 1e-9 * scale {
                return Err(Error::param(format!("row {i} sums to {sum:e}, not zero")));
            }
        }
        Ok(DenseLaplacian { m })
    }

    pub(crate) fn from_matrix_unchecked(m: DenseMatrix) -> Self {
        DenseLaplacian { m }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.m.dim()
    }

    /// Simple graph with one edge per negative off-diagonal entry.
    pub fn to_graph(&self) -> WeightedMultiGraph {
        let n = self.n();
        let floor = 1e-14 * self.m.max_abs_diagonal();
        let mut b = GraphBuilder::new(n);
        for i in 0..n {
            for j in i + 1..n {
                let w = -0.5 * (self.m[(i, j)] + self.m[(j, i)]);
                if w > floor {
                    b.edge(i, j, w).expect("validated entry");
                }
            }
        }
        b.build()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if self.m[(i, j)] < 0.0 {
                    uf.union(i, j);
                }
            }
        }
        n <= 1 || uf.count() == 1
    }
}

pub fn laplacian(g: &WeightedMultiGraph) -> DenseLaplacian {
    DenseLaplacian::from_graph(g)
}

/// `ln det` of the Laplacian with its last row and column removed, which by
/// the matrix-tree theorem is the log of the total spanning-tree weight.
/// Disconnected graphs give [`LogWeight::ZERO`].
pub fn log_det_plus(l: &DenseLaplacian) -> Result<LogWeight> {
    let asym = l.m.asymmetry();
    if asym > 1e-12 * l.m.max_abs_diagonal().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(match pivoted_log_det(&l.m.without_last(), SINGULAR_PIVOT) {
        Some(x) => LogWeight::from_ln(x),
        None => LogWeight::ZERO,
    })
}

/// Total spanning-tree weight of `g` in the log domain.
pub fn log_tree_weight(g: &WeightedMultiGraph) -> LogWeight {
    log_det_plus(&laplacian(g)).expect("graph Laplacians are symmetric")
}

/// Gaussian elimination of every vertex not in `v1`; the result is indexed
/// in the order of `v1`.
pub fn exact_schur_matrix(l: &DenseLaplacian, v1: &[usize]) -> Result<DenseLaplacian> {
    let n = l.n();
    let mut keep = vec![false; n];
    for &v in v1 {
        if v >= n {
            return Err(Error::UnknownVertex(v));
        }
        keep[v] = true;
    }
    if v1.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let mut a = l.m.clone();
    let scale = a.max_abs_diagonal();
    let mut alive = vec![true; n];
    for k in (0..n).filter(|&k| !keep[k]) {
        let pivot = a[(k, k)];
        if !(pivot > 1e-14 * scale) {
            return Err(Error::Singular);
        }
        alive[k] = false;
        let nz: Vec<usize> = (0..n).filter(|&i| alive[i] && a[(i, k)] != 0.0).collect();
        for (x, &i) in nz.iter().enumerate() {
            let aik = a[(i, k)];
            for &j in &nz[x..] {
                let upd = aik * a[(k, j)] / pivot;
                a[(i, j)] -= upd;
                if i != j {
                    a[(j, i)] = a[(i, j)];
                }
            }
        }
    }
    Ok(DenseLaplacian::from_matrix_unchecked(a.principal(v1)))
}

pub fn exact_schur(g: &WeightedMultiGraph, v1: &[usize]) -> Result<DenseLaplacian> {
    exact_schur_matrix(&laplacian(g), v1)
}

/// Schur complement onto `v1` as a simple weighted graph on `0..|v1|`.
pub fn schur_graph(g: &WeightedMultiGraph, v1: &[usize]) -> Result<WeightedMultiGraph> {
    Ok(exact_schur(g, v1)?.to_graph())
}

/// Dense pseudoinverse of a connected graph's Laplacian, built from
/// grounded solves against right-hand sides projected off the all-ones
/// vector.
#[derive(Clone, Debug)]
pub struct Pseudoinverse {
    p: DenseMatrix,
}

impl Pseudoinverse {
    pub fn of_graph(g: &WeightedMultiGraph) -> Result<Self> {
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Self::of_laplacian(&laplacian(g))
    }

    pub fn of_laplacian(l: &DenseLaplacian) -> Result<Self> {
        let n = l.n();
        let mut p = DenseMatrix::zeros(n);
        if n <= 1 {
            return Ok(Pseudoinverse { p });
        }
        let grounded = GroundedSolver::new(l)?;
        let mut x = vec![0.0; n];
        for i in 0..n {
            x.iter_mut().for_each(|v| *v = -1.0 / n as f64);
            x[i] += 1.0;
            grounded.solve(&mut x);
            for j in 0..n {
                p[(j, i)] = x[j];
            }
        }
        // symmetrize away rounding noise
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (p[(i, j)] + p[(j, i)]);
                p[(i, j)] = s;
                p[(j, i)] = s;
            }
        }
        Ok(Pseudoinverse { p })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn resistance(&self, u: usize, v: usize) -> f64 {
        self.p[(u, u)] + self.p[(v, v)] - 2.0 * self.p[(u, v)]
    }

    /// `χ_{ab}^T L^+ χ_{cd}`.
    pub fn transfer(&self, (a, b): (usize, usize), (c, d): (usize, usize)) -> f64 {
        self.p[(a, c)] - self.p[(a, d)] - self.p[(b, c)] + self.p[(b, d)]
    }
}

/// Solves `L x = b` for `b ⟂ 1` on a connected Laplacian by grounding the
/// last vertex; the returned solution is centered.
#[derive(Clone, Debug)]
pub(crate) struct GroundedSolver {
    n: usize,
    chol: Cholesky,
}

impl GroundedSolver {
    pub(crate) fn new(l: &DenseLaplacian) -> Result<Self> {
        let n = l.n();
        let chol = Cholesky::factor(&l.m.without_last(), 1e-13).map_err(|e| match e {
            Error::Singular => Error::Disconnected,
            other => other,
        })?;
        Ok(GroundedSolver { n, chol })
    }

    /// In place: `b` (summing to zero) becomes the centered solution.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        self.chol.solve_in_place(&mut b[..n - 1]);
        b[n - 1] = 0.0;
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|x| *x -= mean);
    }
}

/// `χ_uv^T L^+ χ_uv`; `u` and `v` must share a component.
pub fn exact_effective_resistance(g: &WeightedMultiGraph, u: usize, v: usize) -> Result<f64> {
    for x in [u, v] {
        if x >= g.n() {
            return Err(Error::UnknownVertex(x));
        }
    }
    if u == v {
        return Ok(0.0);
    }
    let mut uf = g.components();
    if uf.find(u) != uf.find(v) {
        return Err(Error::Disconnected);
    }
    if uf.count() == 1 {
        return Ok(Pseudoinverse::of_graph(g)?.resistance(u, v));
    }
    let root = uf.find(u);
    let members: Vec<usize> = (0..g.n()).filter(|&x| uf.find(x) == root).collect();
    let (sub, _) = g.induced_subgraph(&members)?;
    let pu = members.binary_search(&u).unwrap();
    let pv = members.binary_search(&v).unwrap();
    Ok(Pseudoinverse::of_graph(&sub)?.resistance(pu, pv))
}

/// `w_e · ER(u, v)` for every edge, indexed by edge id.
pub fn exact_leverage_scores(g: &WeightedMultiGraph) -> Result<Vec<f64>> {
    let p = Pseudoinverse::of_graph(g)?;
    Ok(g.edges()
        .iter()
        .map(|e| e.weight * p.resistance(e.u, e.v))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanningTree {
    edges: Vec<usize>,
    log_weight: f64,
}

impl SpanningTree {
    /// Validates that `edges` span `g` without cycles.
    pub fn new(g: &WeightedMultiGraph, mut edges: Vec<usize>) -> Result<Self> {
        edges.sort_unstable();
        if !is_spanning_tree(g, &edges) {
            return Err(Error::ContractViolation {
                stage: "spanning tree",
                detail: format!("edge set {edges:?} is not a spanning tree"),
            });
        }
        let log_weight = edges.iter().map(|&id| g.edges()[id].weight.ln()).sum();
        Ok(SpanningTree { edges, log_weight })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.edges.binary_search(&id).is_ok()
    }

    /// Sorted `"u-v"` pairs, the text form used by the CLI.
    pub fn render(&self, g: &WeightedMultiGraph) -> String {
        let mut pairs: Vec<(usize, usize)> = self.edges.iter().map(|&id| g.edges()[id].key()).collect();
        pairs.sort_unstable();
        pairs
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn is_spanning_tree(g: &WeightedMultiGraph, edges: &[usize]) -> bool {
    if edges.len() + 1 != g.n().max(1) {
        return false;
    }
    let mut uf = UnionFind::new(g.n());
    edges
        .iter()
        .all(|&id| id < g.m() && uf.union(g.edges()[id].u, g.edges()[id].v))
}

/// Every spanning tree of `g` (parallel edges give distinct trees).
///
/// Include/exclude recursion over edges: including an edge contracts it,
/// excluding deletes it, and branches that can no longer span are cut.
pub fn enumerate_spanning_trees(g: &WeightedMultiGraph) -> Result<Vec<SpanningTree>> {
    let unit = WeightedMultiGraph::from_edges(g.n(), g.edges().iter().map(|e| (e.u, e.v, 1.0)))?;
    let count = log_tree_weight(&unit);
    if count.is_zero() {
        return Ok(Vec::new());
    }
    if count.ln() > ENUMERATION_GUARD.ln() {
        return Err(Error::TooManyTrees(count.ln().exp()));
    }
    let mut out = Vec::with_capacity(count.to_linear().round() as usize);
    let mut uf = RollbackUnionFind::new(g.n());
    let mut chosen = Vec::with_capacity(g.n());
    enumerate_rec(g, 0, &mut uf, &mut chosen, &mut out);
    Ok(out)
}

fn enumerate_rec(
    g: &WeightedMultiGraph,
    i: usize,
    uf: &mut RollbackUnionFind,
    chosen: &mut Vec<usize>,
    out: &mut Vec<SpanningTree>,
) {
    let need = g.n() - 1 - chosen.len();
    if need == 0 {
        let log_weight = chosen.iter().map(|&id| g.edges()[id].weight.ln()).sum();
        out.push(SpanningTree {
            edges: chosen.clone(),
            log_weight,
        });
        return;
    }
    if g.m() - i < need {
        return;
    }
    let e = &g.edges()[i];
    if uf.union(e.u, e.v) {
        chosen.push(i);
        enumerate_rec(g, i + 1, uf, chosen, out);
        chosen.pop();
        uf.rollback();
    }
    if uf.spans_with(g, i + 1) {
        enumerate_rec(g, i + 1, uf, chosen, out);
    }
}

struct RollbackUnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    history: Vec<usize>,
    sets: usize,
}

impl RollbackUnionFind {
    fn new(n: usize) -> Self {
        RollbackUnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            history: Vec::new(),
            sets: n,
        }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.history.push(rb);
        self.sets -= 1;
        true
    }

    fn rollback(&mut self) {
        let rb = self.history.pop().expect("rollback without union");
        let ra = self.parent[rb];
        self.size[ra] -= self.size[rb];
        self.parent[rb] = rb;
        self.sets += 1;
    }

    /// Whether the current forest plus edges `from..` connects everything.
    fn spans_with(&self, g: &WeightedMultiGraph, from: usize) -> bool {
        let mut uf = UnionFind::new(g.n());
        for v in 0..g.n() {
            uf.union(v, self.find(v));
        }
        for e in &g.edges()[from..] {
            uf.union(e.u, e.v);
        }
        uf.count() == 1
    }
}

/// Probability that a `w`-uniform random spanning tree contains every edge
/// of `edges`, as the determinant of the transfer-current matrix
/// `M_ef = sqrt(w_e w_f) χ_e^T L^+ χ_f`.
pub fn subset_marginal(g: &WeightedMultiGraph, edges: &[usize]) -> Result<f64> {
    let mut ids = edges.to_vec();
    ids.sort_unstable();
    ids.dedup();
    for &id in &ids {
        g.edge(id)?;
    }
    let p = Pseudoinverse::of_graph(g)?;
    let mut uf = UnionFind::new(g.n());
    if !ids.iter().all(|&id| uf.union(g.edges()[id].u, g.edges()[id].v)) {
        return Ok(0.0);
    }
    let k = ids.len();
    let mut m = DenseMatrix::zeros(k);
    for (a, &ea) in ids.iter().enumerate() {
        let ea = &g.edges()[ea];
        for (b, &eb) in ids.iter().enumerate() {
            let eb = &g.edges()[eb];
            m[(a, b)] = (ea.weight * eb.weight).sqrt() * p.transfer((ea.u, ea.v), (eb.u, eb.v));
        }
    }
    Ok(pivoted_log_det(&m, 1e-13).map_or(0.0, f64::exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use approx::assert_relative_eq;

    fn weighted_triangle() -> WeightedMultiGraph {
        WeightedMultiGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&complete(3));
        assert_eq!(l.matrix().to_rows(), vec![vec![2.0, -1.0, -1.0], vec![-1.0, 2.0, -1.0], vec![-1.0, -1.0, 2.0]]);
        let g = WeightedMultiGraph::from_edges(2, [(0, 1, 5.0)]).unwrap();
        assert_eq!(laplacian(&g).matrix().to_rows(), vec![vec![5.0, -5.0], vec![-5.0, 5.0]]);
        assert_eq!(laplacian(&WeightedMultiGraph::empty(2)).matrix(), &DenseMatrix::zeros(2));
    }

    #[test]
    fn log_det_plus_examples() {
        assert_relative_eq!(log_tree_weight(&complete(3)).ln(), 3f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(log_tree_weight(&complete(4)).ln(), 16f64.ln(), max_relative = 1e-12);
        // trees of the (1,2,3) triangle: 1·2 + 1·3 + 2·3
        assert_relative_eq!(log_tree_weight(&weighted_triangle()).ln(), 11f64.ln(), max_relative = 1e-12);
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(log_tree_weight(&two).is_zero());
        let bad = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-0.5, 1.0]]).unwrap();
        assert!(matches!(
            log_det_plus(&DenseLaplacian::from_matrix_unchecked(bad)),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn schur_examples() {
        let s = exact_schur(&path(3), &[0, 2]).unwrap();
        assert_relative_eq!(s.matrix()[(0, 1)], -0.5, max_relative = 1e-14);
        let s = exact_schur(&star(3), &[1, 2, 3]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_relative_eq!(s.matrix()[(i, j)], -1.0 / 3.0, max_relative = 1e-14);
        }
        // K3 eliminating vertex 2: 1 + 1·1/2
        let s = exact_schur(&complete(3), &[0, 1]).unwrap();
        assert_relative_eq!(s.matrix()[(0, 1)], -1.5, max_relative = 1e-14);
        let g = WeightedMultiGraph::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert!(matches!(exact_schur(&g, &[0, 1]), Err(Error::Singular)));
    }

    #[test]
    fn resistance_examples() {
        assert_relative_eq!(exact_effective_resistance(&complete(3), 0, 1).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(exact_effective_resistance(&path(3), 0, 2).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(exact_effective_resistance(&complete(4), 1, 3).unwrap(), 0.5, max_relative = 1e-12);
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 2.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(exact_effective_resistance(&two, 0, 2), Err(Error::Disconnected)));
        assert_relative_eq!(exact_effective_resistance(&two, 0, 1).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn leverage_examples() {
        let lev = exact_leverage_scores(&complete(3)).unwrap();
        lev.iter().for_each(|&x| assert_relative_eq!(x, 2.0 / 3.0, max_relative = 1e-12));
        let lev = exact_leverage_scores(&complete(4)).unwrap();
        assert_relative_eq!(lev.iter().sum::<f64>(), 3.0, max_relative = 1e-12);
        lev.iter().for_each(|&x| assert_relative_eq!(x, 0.5, max_relative = 1e-12));
        // edge 3-4 is a bridge hanging off a triangle
        let g = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 4.0)]).unwrap();
        assert_relative_eq!(exact_leverage_scores(&g).unwrap()[3], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn enumeration_examples() {
        let trees = enumerate_spanning_trees(&complete(3)).unwrap();
        assert_eq!(trees.len(), 3);
        assert!(trees.iter().all(|t| t.weight() == 1.0));
        assert_eq!(enumerate_spanning_trees(&path(4)).unwrap().len(), 1);
        assert_eq!(enumerate_spanning_trees(&complete(4)).unwrap().len(), 16);
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(enumerate_spanning_trees(&two).unwrap().is_empty());
        assert!(matches!(enumerate_spanning_trees(&complete(12)), Err(Error::TooManyTrees(_))));
    }

    #[test]
    fn subset_marginal_examples() {
        let k3 = complete(3);
        assert_relative_eq!(subset_marginal(&k3, &[0]).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(subset_marginal(&k3, &[0, 1]).unwrap(), 1.0 / 3.0, max_relative = 1e-12);
        assert_eq!(subset_marginal(&k3, &[]).unwrap(), 1.0);
        assert_eq!(subset_marginal(&k3, &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn single_vertex_is_its_own_tree() {
        let g = WeightedMultiGraph::empty(1);
        assert_eq!(log_tree_weight(&g), LogWeight::ONE);
        let trees = enumerate_spanning_trees(&g).unwrap();
        assert_eq!(trees.len(), 1);
        assert!(trees[0].edges().is_empty());
    }
}
