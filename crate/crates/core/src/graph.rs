//! Weighted multigraphs and the surgery the samplers rely on: contraction,
//! deletion, induced subgraphs and merging of parallel edges.
//!
//! Graph values are immutable once built. Every derived graph gets fresh,
//! dense edge ids; each derived edge records the id it came from in the
//! source graph (`parent`), so callers can walk results back up a chain of
//! contractions.

use crate::error::{Error, Result};
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;

pub mod generators;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Origin {
    Original,
    SchurGenerated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRecord {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub origin: Origin,
    pub parent: Option<usize>,
}

impl EdgeRecord {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }

    /// Endpoints as `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        (self.u.min(self.v), self.u.max(self.v))
    }
}

#[derive(Clone, Debug)]
pub struct WeightedMultiGraph {
    n: usize,
    edges: Vec<EdgeRecord>,
    adjacency: Vec<Vec<usize>>,
    degrees: Vec<f64>,
}

/// Accumulates validated edges for a [`WeightedMultiGraph`].
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    n: usize,
    edges: Vec<EdgeRecord>,
}

impl GraphBuilder {
    pub fn new(n: usize) -> Self {
        GraphBuilder {
            n,
            edges: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, m: usize) -> Self {
        GraphBuilder {
            n,
            edges: Vec::with_capacity(m),
        }
    }

    pub fn edge(&mut self, u: usize, v: usize, weight: f64) -> Result<usize> {
        self.tagged_edge(u, v, weight, Origin::Original, None)
    }

    pub fn tagged_edge(
        &mut self,
        u: usize,
        v: usize,
        weight: f64,
        origin: Origin,
        parent: Option<usize>,
    ) -> Result<usize> {
        let bad = |reason| Error::InvalidEdge {
            u,
            v,
            weight,
            reason,
        };
        if u >= self.n || v >= self.n {
            return Err(bad("endpoint out of range"));
        }
        if u == v {
            return Err(bad("self-loop"));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(bad("weight must be positive and finite"));
        }
        let id = self.edges.len();
        self.edges.push(EdgeRecord {
            id,
            u,
            v,
            weight,
            origin,
            parent,
        });
        Ok(id)
    }

    pub fn build(self) -> WeightedMultiGraph {
        let mut adjacency = vec![Vec::new(); self.n];
        let mut degrees = vec![0.0; self.n];
        for e in &self.edges {
            adjacency[e.u].push(e.id);
            adjacency[e.v].push(e.id);
            degrees[e.u] += e.weight;
            degrees[e.v] += e.weight;
        }
        WeightedMultiGraph {
            n: self.n,
            edges: self.edges,
            adjacency,
            degrees,
        }
    }
}

impl WeightedMultiGraph {
    pub fn empty(n: usize) -> Self {
        GraphBuilder::new(n).build()
    }

    /// Builds from `(u, v, w)` triples, all tagged [`Origin::Original`].
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut b = GraphBuilder::new(n);
        for (u, v, w) in edges {
            b.edge(u, v, w)?;
        }
        Ok(b.build())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Result<&EdgeRecord> {
        self.edges.get(id).ok_or_else(|| Error::UnknownEdge(id))
    }

    pub fn incident(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    /// Weighted degree.
    pub fn degree(&self, u: usize) -> f64 {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Summed weight of all parallel edges between `u` and `v`.
    pub fn pair_weight(&self, u: usize, v: usize) -> f64 {
        self.adjacency[u]
            .iter()
            .map(|&id| &self.edges[id])
            .filter(|e| e.other(u) == v)
            .map(|e| e.weight)
            .sum()
    }

    /// Ids of the edges joining `u` and `v`.
    pub fn edges_between(&self, u: usize, v: usize) -> Vec<usize> {
        self.adjacency[u]
            .iter()
            .copied()
            .filter(|&id| self.edges[id].other(u) == v)
            .collect()
    }

    pub fn components(&self) -> UnionFind {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.u, e.v);
        }
        uf
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().count() == 1
    }

    fn check_edge_ids(&self, ids: &[usize]) -> Result<Vec<bool>> {
        let mut mark = vec![false; self.m()];
        for &id in ids {
            if id >= self.m() {
                return Err(Error::UnknownEdge(id));
            }
            mark[id] = true;
        }
        Ok(mark)
    }

    /// Identifies the endpoints of every edge in `ids`.
    ///
    /// Self-loops produced by the contraction are dropped. Returns the new
    /// graph and the old-to-new vertex table; new vertex ids follow the
    /// order of the smallest old id in each class.
    pub fn contract_edges(&self, ids: &[usize]) -> Result<(WeightedMultiGraph, Vec<usize>)> {
        let mark = self.check_edge_ids(ids)?;
        let mut uf = UnionFind::new(self.n);
        for &id in ids {
            let e = &self.edges[id];
            uf.union(e.u, e.v);
        }
        let mut class_id = vec![usize::MAX; self.n];
        let mut remap = vec![0; self.n];
        let mut next = 0;
        for v in 0..self.n {
            let r = uf.find(v);
            if class_id[r] == usize::MAX {
                class_id[r] = next;
                next += 1;
            }
            remap[v] = class_id[r];
        }
        let mut b = GraphBuilder::with_capacity(next, self.m());
        for e in &self.edges {
            if mark[e.id] {
                continue;
            }
            let (a, c) = (remap[e.u], remap[e.v]);
            if a != c {
                b.tagged_edge(a, c, e.weight, e.origin, Some(e.id))?;
            }
        }
        Ok((b.build(), remap))
    }

    /// Removes the edges in `ids`; the vertex set is unchanged.
    pub fn delete_edges(&self, ids: &[usize]) -> Result<WeightedMultiGraph> {
        let mark = self.check_edge_ids(ids)?;
        let mut b = GraphBuilder::with_capacity(self.n, self.m());
        for e in self.edges.iter().filter(|e| !mark[e.id]) {
            b.tagged_edge(e.u, e.v, e.weight, e.origin, Some(e.id))?;
        }
        Ok(b.build())
    }

    /// Subgraph induced on `vertices`, reindexed in the given order.
    /// The second value maps new ids to old ones.
    pub fn induced_subgraph(&self, vertices: &[usize]) -> Result<(WeightedMultiGraph, Vec<usize>)> {
        if vertices.is_empty() {
            return Err(Error::EmptyVertexSet);
        }
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in vertices.iter().enumerate() {
            if v >= self.n {
                return Err(Error::UnknownVertex(v));
            }
            if local[v] != usize::MAX {
                return Err(Error::param(format!("vertex {v} listed twice")));
            }
            local[v] = i;
        }
        let mut b = GraphBuilder::new(vertices.len());
        for e in &self.edges {
            let (a, c) = (local[e.u], local[e.v]);
            if a != usize::MAX && c != usize::MAX {
                b.tagged_edge(a, c, e.weight, e.origin, Some(e.id))?;
            }
        }
        Ok((b.build(), vertices.to_vec()))
    }

    /// Collapses parallel edges into one edge per vertex pair whose weight is
    /// the sum. `merge_map[k]` lists the ids merged into simple edge `k`.
    pub fn merge_parallel(&self) -> (WeightedMultiGraph, Vec<Vec<usize>>) {
        let mut slot: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.m());
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut keys = Vec::new();
        for e in &self.edges {
            let k = e.key();
            let idx = *slot.entry(k).or_insert_with(|| {
                groups.push(Vec::new());
                keys.push(k);
                groups.len() - 1
            });
            groups[idx].push(e.id);
        }
        let mut b = GraphBuilder::with_capacity(self.n, groups.len());
        for (k, group) in keys.iter().zip(&groups) {
            let w: f64 = group.iter().map(|&id| self.edges[id].weight).sum();
            let origin = if group
                .iter()
                .all(|&id| self.edges[id].origin == Origin::SchurGenerated)
            {
                Origin::SchurGenerated
            } else {
                Origin::Original
            };
            let parent = (group.len() == 1).then(|| group[0]);
            b.tagged_edge(k.0, k.1, w, origin, parent)
                .expect("merged edge inherits valid endpoints");
        }
        (b.build(), groups)
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.m());
        self.edges.iter().all(|e| seen.insert(e.key()))
    }

    /// Canonical edge-list text: edges ordered by (min endpoint, max
    /// endpoint, id), weights in shortest round-trip decimal form. With
    /// `with_origin` a fourth column `o`/`s` records the origin tag.
    pub fn to_edge_list(&self, with_origin: bool) -> String {
        let mut order: Vec<&EdgeRecord> = self.edges.iter().collect();
        order.sort_by_key(|e| (e.key(), e.id));
        let mut out = String::with_capacity(16 * order.len());
        for e in order {
            let (a, b) = e.key();
            write!(out, "{a} {b} {}", e.weight).unwrap();
            if with_origin {
                out.push_str(match e.origin {
                    Origin::Original => " o",
                    Origin::SchurGenerated => " s",
                });
            }
            out.push('\n');
        }
        out
    }

    /// Uniformly random edge id weighted by edge weight among `ids`.
    pub(crate) fn pick_by_weight<R: Rng + ?Sized>(&self, ids: &[usize], rng: &mut R) -> usize {
        debug_assert!(!ids.is_empty());
        let total: f64 = ids.iter().map(|&id| self.edges[id].weight).sum();
        let mut x = rng.gen::<f64>() * total;
        for &id in ids {
            x -= self.edges[id].weight;
            if x < 0.0 {
                return id;
            }
        }
        *ids.last().unwrap()
    }
}

/// Parses the edge-list format: `#` comment lines, blank lines, and
/// whitespace-separated `u v w` records with an optional origin column
/// (`o` or `s`).
pub fn parse_edge_list(text: &str) -> Result<WeightedMultiGraph> {
    let mut raw = Vec::new();
    let mut max_vertex = 0usize;
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(err(format!("expected \"u v w\", got {t:?}")));
        }
        let u: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad vertex id {:?}", fields[0])))?;
        let v: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("bad vertex id {:?}", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("bad weight {:?}", fields[2])))?;
        if !w.is_finite() {
            return Err(err(format!("non-finite weight {w}")));
        }
        if w <= 0.0 {
            return Err(err("non-positive weight".to_string()));
        }
        if u == v {
            return Err(err(format!("self-loop at vertex {u}")));
        }
        let origin = match fields.get(3) {
            None | Some(&"o") => Origin::Original,
            Some(&"s") => Origin::SchurGenerated,
            Some(other) => return Err(err(format!("bad origin tag {other:?}"))),
        };
        max_vertex = max_vertex.max(u).max(v);
        raw.push((u, v, w, origin));
    }
    if raw.is_empty() {
        return Err(Error::Parse {
            line: last_line,
            msg: "empty graph".to_string(),
        });
    }
    let mut b = GraphBuilder::with_capacity(max_vertex + 1, raw.len());
    for (u, v, w, origin) in raw {
        b.tagged_edge(u, v, w, origin, None)?;
    }
    Ok(b.build())
}

pub fn load_graph(path: &std::path::Path) -> Result<WeightedMultiGraph> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexPartition {
    pub v1: Vec<usize>,
    pub v2: Vec<usize>,
}

impl VertexPartition {
    /// `v1` and its complement in `0..n`; both sides must be nonempty.
    pub fn from_v1(n: usize, v1: &[usize]) -> Result<Self> {
        let mut in_v1 = vec![false; n];
        for &v in v1 {
            if v >= n {
                return Err(Error::UnknownVertex(v));
            }
            if in_v1[v] {
                return Err(Error::param(format!("vertex {v} listed twice")));
            }
            in_v1[v] = true;
        }
        let v2: Vec<usize> = (0..n).filter(|&v| !in_v1[v]).collect();
        if v1.is_empty() || v2.is_empty() {
            return Err(Error::EmptyVertexSet);
        }
        Ok(VertexPartition {
            v1: v1.to_vec(),
            v2,
        })
    }

    pub fn from_v2(n: usize, v2: &[usize]) -> Result<Self> {
        let p = Self::from_v1(n, v2)?;
        Ok(VertexPartition { v1: p.v2, v2: p.v1 })
    }

    pub fn n(&self) -> usize {
        self.v1.len() + self.v2.len()
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn count(&self) -> usize {
        self.sets
    }
}
