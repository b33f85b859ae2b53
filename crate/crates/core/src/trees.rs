//! Random spanning trees.
//!
//! [`exact_tree`] recurses on exact Schur complements: it samples the part
//! of the tree inside one half of the vertices from a tree of the Schur
//! complement onto that half, then lifts a tree of the remaining graph's
//! Schur complement through [`prolongate_tree`]. [`approx_tree`] follows the
//! same recursion with sparsified Schur complements. [`WilsonSampler`] is an
//! independent reference built on loop-erased random walks.

use crate::error::{Error, Result};
use crate::graph::{UnionFind, VertexPartition, WeightedMultiGraph};
use crate::oracles::{schur_graph, SpanningTree};
use crate::resistance::ResistanceEmbedding;
use crate::schur::{almost_independent, schur_sparse_with};
use crate::sparsify::{CRUDE_EPS, SPARSIFIER_RETRIES};
use crate::Origin;
use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::WeightedAliasIndex;
use serde::Serialize;

/// Diagonal-dominance parameter used when splitting for [`approx_tree`].
pub const SPLIT_ALPHA: f64 = 0.1;

/// Replaces every edge of a tree of `merged` (the parallel-merged form of
/// `multi`) by one of the multi-edges it merged, chosen in proportion to
/// weight.
pub fn unsplit_tree<R: Rng + ?Sized>(
    multi: &WeightedMultiGraph,
    merge_map: &[Vec<usize>],
    tree: &SpanningTree,
    rng: &mut R,
) -> Result<SpanningTree> {
    let ids = unsplit_ids(multi, merge_map, tree.edges(), rng)?;
    SpanningTree::new(multi, ids)
}

fn unsplit_ids<R: Rng + ?Sized>(
    multi: &WeightedMultiGraph,
    merge_map: &[Vec<usize>],
    ids: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&k| {
            let group = merge_map.get(k).ok_or_else(|| Error::UnknownEdge(k))?;
            Ok(multi.pick_by_weight(group, rng))
        })
        .collect()
}

/// Lifts a tree of `Sc(g, V2)`, given as vertex pairs of `g`, to a tree of
/// `g` when `V1` is independent.
///
/// Each pair `xy` is attributed either to a direct edge (mass `w(x, y)`) or
/// to the clique left by eliminating some `v` in `V1` adjacent to both
/// (mass `w(v, x) w(v, y) / deg v`). Then, one `v` at a time, the current
/// tree loses the pairs attributed to `v` and `v` is joined to every
/// resulting piece through one edge drawn in proportion to weight.
pub fn prolongate_tree<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    partition: &VertexPartition,
    t2: &[(usize, usize)],
    rng: &mut R,
) -> Result<SpanningTree> {
    if partition.n() != g.n() {
        return Err(Error::param("partition does not cover the graph"));
    }
    let ids = prolongate_ids(g, &partition.v1, t2, rng)?;
    SpanningTree::new(g, ids)
}

fn prolongate_ids<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    v1: &[usize],
    t2: &[(usize, usize)],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = g.n();
    let mut rank = vec![usize::MAX; n];
    for (i, &v) in v1.iter().enumerate() {
        rank[v] = i;
    }
    if let Some(e) = g.edges().iter().find(|e| rank[e.u] != usize::MAX && rank[e.v] != usize::MAX) {
        return Err(Error::param(format!("V1 is not independent: edge ({}, {})", e.u, e.v)));
    }
    const DIRECT: usize = usize::MAX;
    let mut scratch = vec![0.0; n];
    let mut assigned = Vec::with_capacity(t2.len());
    let mut masses: Vec<(usize, f64)> = Vec::new();
    for &(x, y) in t2 {
        masses.clear();
        masses.push((DIRECT, g.pair_weight(x, y)));
        for &id in g.incident(x) {
            let v = g.edges()[id].other(x);
            if rank[v] != usize::MAX {
                scratch[v] += g.edges()[id].weight;
            }
        }
        let mut seen: Vec<usize> = Vec::new();
        for &id in g.incident(y) {
            let v = g.edges()[id].other(y);
            if rank[v] != usize::MAX && scratch[v] > 0.0 && !seen.contains(&v) {
                seen.push(v);
                masses.push((v, scratch[v] * g.pair_weight(v, y) / g.degree(v)));
            }
        }
        for &id in g.incident(x) {
            scratch[g.edges()[id].other(x)] = 0.0;
        }
        let total: f64 = masses.iter().map(|m| m.1).sum();
        if !(total > 0.0) {
            return Err(Error::ContractViolation {
                stage: "prolongation",
                detail: format!("pair ({x}, {y}) is not an edge of the Schur complement"),
            });
        }
        let mut r = rng.gen::<f64>() * total;
        let mut pick = masses.last().unwrap().0;
        for &(v, m) in &masses {
            if r < m {
                pick = v;
                break;
            }
            r -= m;
        }
        assigned.push(pick);
    }
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (&(x, y), &f) in t2.iter().zip(&assigned) {
        if f == DIRECT {
            out.push(g.pick_by_weight(&g.edges_between(x, y), rng));
        }
    }
    let mut processed = vec![false; n];
    let mut stars: Vec<usize> = Vec::new();
    for &v in v1 {
        let mut uf = UnionFind::new(n);
        for (&(x, y), &f) in t2.iter().zip(&assigned) {
            if f == DIRECT || (f != v && !processed[f]) {
                uf.union(x, y);
            }
        }
        for &id in &stars {
            let e = &g.edges()[id];
            uf.union(e.u, e.v);
        }
        // group v's edges by the piece their far endpoint lies in
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for &id in g.incident(v) {
            let root = uf.find(g.edges()[id].other(v));
            match groups.iter_mut().find(|gr| gr.0 == root) {
                Some(gr) => gr.1.push(id),
                None => groups.push((root, vec![id])),
            }
        }
        for (_, ids) in &groups {
            stars.push(g.pick_by_weight(ids, rng));
        }
        processed[v] = true;
    }
    out.extend(stars);
    Ok(out)
}

/// Exact `w`-uniform spanning tree of a connected (multi)graph.
pub fn exact_tree<R: Rng + ?Sized>(g: &WeightedMultiGraph, rng: &mut R) -> Result<SpanningTree> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let ids = exact_ids(g, rng)?;
    SpanningTree::new(g, ids)
}

fn exact_ids<R: Rng + ?Sized>(g: &WeightedMultiGraph, rng: &mut R) -> Result<Vec<usize>> {
    let n = g.n();
    match n {
        1 => return Ok(Vec::new()),
        2 => return Ok(vec![g.pick_by_weight(&(0..g.m()).collect::<Vec<_>>(), rng)]),
        _ => {}
    }
    let h = n / 2;
    let v1: Vec<usize> = (0..h).collect();
    let sc1 = schur_graph(g, &v1)?;
    let mut keep = Vec::new();
    for id in exact_ids(&sc1, rng)? {
        let e = &sc1.edges()[id];
        let direct = g.edges_between(e.u, e.v);
        let w: f64 = direct.iter().map(|&d| g.edges()[d].weight).sum();
        if rng.gen::<f64>() * e.weight < w {
            keep.push(g.pick_by_weight(&direct, rng));
        }
    }
    let (g2, to_g, remap) = contract_inside(g, &v1, &keep)?;
    let v2: Vec<usize> = (h..n).map(|v| remap[v]).collect();
    let mut in_v2 = vec![false; g2.n()];
    v2.iter().for_each(|&v| in_v2[v] = true);
    let remnants: Vec<usize> = (0..g2.n()).filter(|&v| !in_v2[v]).collect();
    let sc2 = schur_graph(&g2, &v2)?;
    let pairs: Vec<(usize, usize)> = exact_ids(&sc2, rng)?
        .into_iter()
        .map(|id| (v2[sc2.edges()[id].u], v2[sc2.edges()[id].v]))
        .collect();
    let lifted = prolongate_ids(&g2, &remnants, &pairs, rng)?;
    keep.extend(lifted.into_iter().map(|id| to_g[id]));
    Ok(keep)
}

/// Contracts `keep` and deletes every other edge with both endpoints in
/// `inside`. Returns the new graph, its edge ids mapped back to `g`, and the
/// vertex remap table.
fn contract_inside(
    g: &WeightedMultiGraph,
    inside: &[usize],
    keep: &[usize],
) -> Result<(WeightedMultiGraph, Vec<usize>, Vec<usize>)> {
    let mut mark = vec![false; g.n()];
    inside.iter().for_each(|&v| mark[v] = true);
    let mut kept = vec![false; g.m()];
    keep.iter().for_each(|&id| kept[id] = true);
    let drop: Vec<usize> = g
        .edges()
        .iter()
        .filter(|e| mark[e.u] && mark[e.v] && !kept[e.id])
        .map(|e| e.id)
        .collect();
    let deleted = g.delete_edges(&drop)?;
    let mut new_id = vec![usize::MAX; g.m()];
    for e in deleted.edges() {
        new_id[e.parent.unwrap()] = e.id;
    }
    let contract: Vec<usize> = keep.iter().map(|&id| new_id[id]).collect();
    let (g2, remap) = deleted.contract_edges(&contract)?;
    let to_g = g2
        .edges()
        .iter()
        .map(|e| deleted.edges()[e.parent.unwrap()].parent.unwrap())
        .collect();
    Ok((g2, to_g, remap))
}

/// Counters from [`approx_tree`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ApproxTreeStats {
    pub schur_calls: u64,
    pub retries: u64,
    pub depth: u32,
}

/// A spanning tree whose law is close to `w`-uniform, recursing on
/// sparsified Schur complements with error budget `delta * |V_i| / n_bar`.
pub fn approx_tree<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    delta: f64,
    n_bar: usize,
    rng: &mut R,
) -> Result<(SpanningTree, ApproxTreeStats)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut stats = ApproxTreeStats::default();
    let ids = approx_ids(g, delta, n_bar.max(g.n()) as f64, 1, rng, &mut stats)?;
    Ok((SpanningTree::new(g, ids)?, stats))
}

fn connected_schur_sparse<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    v1: &[usize],
    delta: f64,
    rng: &mut R,
    stats: &mut ApproxTreeStats,
) -> Result<WeightedMultiGraph> {
    let emb = ResistanceEmbedding::auto(g, CRUDE_EPS, rng)?;
    for _ in 0..SPARSIFIER_RETRIES {
        stats.schur_calls += 1;
        let (h, _) = schur_sparse_with(g, v1, delta, &emb, rng)?;
        if h.is_connected() {
            return Ok(h);
        }
        stats.retries += 1;
    }
    Err(Error::RetriesExhausted(SPARSIFIER_RETRIES))
}

fn approx_ids<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    delta: f64,
    n_bar: f64,
    level: u32,
    rng: &mut R,
    stats: &mut ApproxTreeStats,
) -> Result<Vec<usize>> {
    stats.depth = stats.depth.max(level);
    let n = g.n();
    match n {
        1 => return Ok(Vec::new()),
        2 => return Ok(vec![g.pick_by_weight(&(0..g.m()).collect::<Vec<_>>(), rng)]),
        _ => {}
    }
    let v2_set = almost_independent(g, SPLIT_ALPHA, rng)?.v2;
    let mut in_v2 = vec![false; n];
    v2_set.iter().for_each(|&v| in_v2[v] = true);
    let v1: Vec<usize> = (0..n).filter(|&v| !in_v2[v]).collect();

    let h1 = connected_schur_sparse(g, &v1, delta * v1.len() as f64 / n_bar, rng, stats)?;
    let (h1s, merge_map) = h1.merge_parallel();
    let mut keep = Vec::new();
    for k in approx_ids(&h1s, delta, n_bar, level + 1, rng, stats)? {
        let chosen = &h1.edges()[h1.pick_by_weight(&merge_map[k], rng)];
        if chosen.origin == Origin::Original {
            keep.push(chosen.parent.expect("original sampled edges keep their source"));
        }
    }
    let (g2, to_g, remap) = contract_inside(g, &v1, &keep)?;
    let v2: Vec<usize> = v2_set.iter().map(|&v| remap[v]).collect();
    let mut mark = vec![false; g2.n()];
    v2.iter().for_each(|&v| mark[v] = true);
    let remnants: Vec<usize> = (0..g2.n()).filter(|&v| !mark[v]).collect();

    let pairs: Vec<(usize, usize)> = if v2.len() == 1 {
        Vec::new()
    } else {
        let h2 = connected_schur_sparse(&g2, &v2, delta * v2.len() as f64 / n_bar, rng, stats)?;
        let (h2s, _) = h2.merge_parallel();
        approx_ids(&h2s, delta, n_bar, level + 1, rng, stats)?
            .into_iter()
            .map(|id| (v2[h2s.edges()[id].u], v2[h2s.edges()[id].v]))
            .collect()
    };
    let lifted = prolongate_ids(&g2, &remnants, &pairs, rng)?;
    keep.extend(lifted.into_iter().map(|id| to_g[id]));
    Ok(keep)
}

/// Wilson's algorithm: loop-erased random walks towards a growing tree.
#[derive(Clone, Debug)]
pub struct WilsonSampler {
    steps: Vec<WeightedAliasIndex<f64>>,
}

impl WilsonSampler {
    pub fn new(g: &WeightedMultiGraph) -> Result<Self> {
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        let steps = (0..g.n())
            .map(|u| {
                let w: Vec<f64> = g.incident(u).iter().map(|&id| g.edges()[id].weight).collect();
                let w = if w.is_empty() { vec![1.0] } else { w };
                WeightedAliasIndex::new(w).map_err(|e| Error::param(format!("step table: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(WilsonSampler { steps })
    }

    pub fn sample<R: Rng + ?Sized>(&self, g: &WeightedMultiGraph, rng: &mut R) -> Result<SpanningTree> {
        let n = g.n();
        let mut in_tree = vec![false; n];
        let mut next = vec![usize::MAX; n];
        if n > 0 {
            in_tree[n - 1] = true;
        }
        let mut ids = Vec::with_capacity(n.saturating_sub(1));
        for start in 0..n {
            let mut u = start;
            while !in_tree[u] {
                let id = g.incident(u)[self.steps[u].sample(rng)];
                next[u] = id;
                u = g.edges()[id].other(u);
            }
            let mut u = start;
            while !in_tree[u] {
                in_tree[u] = true;
                ids.push(next[u]);
                u = g.edges()[next[u]].other(u);
            }
        }
        SpanningTree::new(g, ids)
    }
}

pub fn wilson_tree<R: Rng + ?Sized>(g: &WeightedMultiGraph, rng: &mut R) -> Result<SpanningTree> {
    WilsonSampler::new(g)?.sample(g, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::rng::seeded;
    use std::collections::HashMap;

    fn frequencies(draws: usize, mut f: impl FnMut() -> SpanningTree) -> HashMap<Vec<usize>, f64> {
        let mut counts = HashMap::new();
        for _ in 0..draws {
            *counts.entry(f().edges().to_vec()).or_insert(0.0) += 1.0 / draws as f64;
        }
        counts
    }

    fn weighted_triangle() -> WeightedMultiGraph {
        WeightedMultiGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]).unwrap()
    }

    #[test]
    fn exact_tree_on_weighted_triangle() {
        let g = weighted_triangle();
        let mut rng = seeded(1);
        let draws = 100_000;
        let freq = frequencies(draws, || exact_tree(&g, &mut rng).unwrap());
        let p = 6.0 / 11.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((freq[&vec![1, 2]] - p).abs() < 3.0 * sigma, "{freq:?}");
    }

    #[test]
    fn wilson_on_weighted_triangle_and_path() {
        let g = weighted_triangle();
        let mut rng = seeded(2);
        let draws = 100_000;
        let freq = frequencies(draws, || wilson_tree(&g, &mut rng).unwrap());
        let p = 6.0 / 11.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((freq[&vec![1, 2]] - p).abs() < 3.0 * sigma, "{freq:?}");
        let p4 = path(4);
        for _ in 0..20 {
            assert_eq!(wilson_tree(&p4, &mut rng).unwrap().edges(), &[0, 1, 2]);
        }
    }

    #[test]
    fn prolongation_of_unique_trees() {
        let g = star(3);
        let part = VertexPartition::from_v1(4, &[0]).unwrap();
        for t2 in [[(1, 2), (2, 3)], [(1, 3), (1, 2)], [(2, 3), (1, 3)]] {
            let t = prolongate_tree(&g, &part, &t2, &mut seeded(0)).unwrap();
            assert_eq!(t.edges(), &[0, 1, 2]);
        }
        let p3 = path(3);
        let part = VertexPartition::from_v1(3, &[1]).unwrap();
        for seed in 0..10 {
            let t = prolongate_tree(&p3, &part, &[(0, 2)], &mut seeded(seed)).unwrap();
            assert_eq!(t.edges(), &[0, 1]);
        }
        let k3 = complete(3);
        let bad = VertexPartition::from_v1(3, &[0, 1]).unwrap();
        assert!(prolongate_tree(&k3, &bad, &[], &mut seeded(0)).is_err());
    }

    #[test]
    fn unsplit_shares_follow_weights() {
        let g = WeightedMultiGraph::from_edges(2, [(0, 1, 1.0), (0, 1, 2.0)]).unwrap();
        let (s, map) = g.merge_parallel();
        let t = SpanningTree::new(&s, vec![0]).unwrap();
        let mut rng = seeded(4);
        let draws = 100_000;
        let first = (0..draws)
            .filter(|_| unsplit_tree(&g, &map, &t, &mut rng).unwrap().edges() == [0])
            .count() as f64
            / draws as f64;
        let sigma = (2.0 / 9.0 / draws as f64).sqrt();
        assert!((first - 1.0 / 3.0).abs() < 3.0 * sigma);
        let k4 = complete(4);
        let (s, map) = k4.merge_parallel();
        let t = SpanningTree::new(&s, vec![0, 1, 2]).unwrap();
        assert_eq!(unsplit_tree(&k4, &map, &t, &mut rng).unwrap(), t);
    }

    #[test]
    fn approx_tree_outputs_spanning_trees_deterministically() {
        let g = with_chords(&cycle(6), &[(0, 3), (1, 4)]);
        for seed in 0..30 {
            let (t, stats) = approx_tree(&g, 1.0, 6, &mut seeded(seed)).unwrap();
            assert_eq!(t.edges().len(), 5);
            assert!(stats.schur_calls > 0);
            let (again, _) = approx_tree(&g, 1.0, 6, &mut seeded(seed)).unwrap();
            assert_eq!(t, again);
        }
        let g = random_connected_weighted(10, 0.5, &mut seeded(1));
        for seed in 0..10 {
            approx_tree(&g, 0.5, 10, &mut seeded(seed)).unwrap();
        }
    }

    #[test]
    fn exact_tree_is_spanning_on_random_graphs() {
        for seed in 0..20 {
            let g = random_connected_weighted(9, 0.4, &mut seeded(seed));
            let t = exact_tree(&g, &mut seeded(seed + 100)).unwrap();
            assert_eq!(t.edges().len(), 8);
        }
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(exact_tree(&two, &mut seeded(0)), Err(Error::Disconnected)));
    }
}
