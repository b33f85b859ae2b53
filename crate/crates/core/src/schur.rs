//! Sparsifying Schur complements without forming them.
//!
//! When the eliminated block `V2` is diagonally dominant, `Sc(G, V1)` is the
//! multigraph of walks that start and end in `V1` and pass only through
//! `V2`. A walk `u_0 .. u_k` carries weight
//! `prod w(u_i, u_{i+1}) / prod_{0<i<k} deg(u_i)`. [`SchurWalkSampler`]
//! draws such walks from a start edge extended by random walks at both
//! ends, and [`schur_sparse`] feeds them through the rejection sampler.

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, Origin, WeightedMultiGraph};
use crate::resistance::{LeverageOracle, ResistanceEmbedding, ResistanceTable};
use crate::sparsify::{det_sparsify_with, leverage_rho, EdgeSampler, Proposal, SparsifyStats, CRUDE_EPS};
use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::WeightedAliasIndex;

/// Walks longer than this abort the sampler.
pub const MAX_WALK_STEPS: usize = 1_000_000;

/// Randomized greedy passes tried by [`almost_independent`].
const DD_ATTEMPTS: usize = 8;

/// A vertex set in which every member sends at least `1/(1+alpha)` of its
/// weighted degree outside the set.
#[derive(Clone, Debug, PartialEq)]
pub struct DDSubset {
    pub v2: Vec<usize>,
    pub alpha: f64,
}

impl DDSubset {
    /// The complement of `v2`, sorted.
    pub fn v1(&self, n: usize) -> Vec<usize> {
        let mut mark = vec![false; n];
        self.v2.iter().for_each(|&v| mark[v] = true);
        (0..n).filter(|&v| !mark[v]).collect()
    }
}

/// The diagonal-dominance test, with a `1e-12` relative slack.
pub fn is_dd_subset(g: &WeightedMultiGraph, v2: &[usize], alpha: f64) -> bool {
    let mut inside = vec![false; g.n()];
    v2.iter().for_each(|&v| inside[v] = true);
    v2.iter().all(|&u| {
        let out: f64 = g
            .incident(u)
            .iter()
            .map(|&id| &g.edges()[id])
            .filter(|e| !inside[e.other(u)])
            .map(|e| e.weight)
            .sum();
        out >= g.degree(u) / (1.0 + alpha) * (1.0 - 1e-12)
    })
}

/// Picks a `(1+alpha)`-DD set by greedy insertion in random vertex order,
/// keeping the largest of a few passes and stopping early once the set
/// reaches `n / (8 (1 + alpha))` vertices. The result is never empty and
/// never all of `V`.
pub fn almost_independent<R: Rng + ?Sized>(g: &WeightedMultiGraph, alpha: f64, rng: &mut R) -> Result<DDSubset> {
    let n = g.n();
    if n < 2 {
        return Err(Error::param("need at least two vertices to split"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::param(format!("alpha must be nonnegative, got {alpha}")));
    }
    let cap = alpha / (1.0 + alpha);
    let target = n as f64 / (8.0 * (1.0 + alpha));
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Vec<usize> = Vec::new();
    let mut inner = vec![0.0; n];
    let mut member = vec![false; n];
    for _ in 0..DD_ATTEMPTS {
        order.shuffle(rng);
        inner.iter_mut().for_each(|x| *x = 0.0);
        member.iter_mut().for_each(|x| *x = false);
        let mut chosen = Vec::new();
        let mut touched: Vec<(usize, f64)> = Vec::new();
        for &v in &order {
            if chosen.len() + 1 == n {
                break;
            }
            touched.clear();
            for &id in g.incident(v) {
                let e = &g.edges()[id];
                let x = e.other(v);
                if member[x] {
                    touched.push((x, e.weight));
                }
            }
            touched.sort_unstable_by_key(|t| t.0);
            touched.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            let fits = |x: usize, total: f64| total <= cap * g.degree(x) * (1.0 + 1e-12);
            let own: f64 = touched.iter().map(|t| t.1).sum();
            if !fits(v, own) || !touched.iter().all(|&(x, w)| fits(x, inner[x] + w)) {
                continue;
            }
            for &(x, w) in &touched {
                inner[x] += w;
            }
            inner[v] = own;
            member[v] = true;
            chosen.push(v);
        }
        if chosen.len() > best.len() {
            best = chosen;
        }
        if best.len() as f64 >= target {
            break;
        }
    }
    best.sort_unstable();
    Ok(DDSubset { v2: best, alpha })
}

/// A walk `u_0 .. u_k` through `V2` between two `V1` vertices, as a
/// multi-edge of the Schur complement.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkEdge {
    pub vertices: Vec<usize>,
    /// `edges[j]` joins `vertices[j]` and `vertices[j + 1]`.
    pub edges: Vec<usize>,
    pub weight: f64,
    pub p: f64,
}

impl WalkEdge {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn origin(&self) -> Origin {
        if self.edges.len() == 1 {
            Origin::Original
        } else {
            Origin::SchurGenerated
        }
    }
}

/// Samples walk multi-edges of `Sc(G, V1)`: a start edge in proportion to
/// leverage estimates, then independent random walks from both endpoints
/// until each hits `V1`.
#[derive(Clone, Debug)]
pub struct SchurWalkSampler<'g> {
    g: &'g WeightedMultiGraph,
    local: Vec<usize>,
    tau: Vec<f64>,
    tau_total: f64,
    start: WeightedAliasIndex<f64>,
    steps: Vec<Option<(WeightedAliasIndex<f64>, Vec<Step>)>>,
    ratio: Vec<f64>,
    scratch: (Vec<usize>, Vec<usize>),
}

const NOT_IN_V1: usize = usize::MAX;

/// One outgoing edge of a walk vertex, in alias-table order.
#[derive(Clone, Debug)]
struct Step {
    id: usize,
    next: usize,
    next_in_v1: bool,
    /// `w / deg` of the vertex stepped from
    factor: f64,
    /// `tau / w` of the edge
    ratio: f64,
}

impl<'g> SchurWalkSampler<'g> {
    /// `tau[e]` are positive leverage estimates for every edge of `g`.
    pub fn new(g: &'g WeightedMultiGraph, v1: &[usize], tau: &[f64]) -> Result<Self> {
        if tau.len() != g.m() || g.m() == 0 {
            return Err(Error::param(format!("expected {} leverage estimates, got {}", g.m(), tau.len())));
        }
        let mut local = vec![NOT_IN_V1; g.n()];
        for (i, &v) in v1.iter().enumerate() {
            if v >= g.n() {
                return Err(Error::UnknownVertex(v));
            }
            local[v] = i;
        }
        let start = WeightedAliasIndex::new(tau.to_vec()).map_err(|e| Error::param(format!("leverage estimates: {e}")))?;
        let ratio: Vec<f64> = tau.iter().zip(g.edges()).map(|(t, e)| t / e.weight).collect();
        let mut steps = Vec::with_capacity(g.n());
        for u in 0..g.n() {
            if local[u] != NOT_IN_V1 || g.incident(u).is_empty() {
                steps.push(None);
                continue;
            }
            let w: Vec<f64> = g.incident(u).iter().map(|&id| g.edges()[id].weight).collect();
            let table = WeightedAliasIndex::new(w).map_err(|e| Error::param(format!("step table: {e}")))?;
            let out = g
                .incident(u)
                .iter()
                .map(|&id| {
                    let e = &g.edges()[id];
                    let next = e.other(u);
                    Step {
                        id,
                        next,
                        next_in_v1: local[next] != NOT_IN_V1,
                        factor: e.weight / g.degree(u),
                        ratio: ratio[id],
                    }
                })
                .collect();
            steps.push(Some((table, out)));
        }
        Ok(SchurWalkSampler {
            g,
            local,
            ratio,
            tau: tau.to_vec(),
            tau_total: tau.iter().sum(),
            start,
            steps,
            scratch: Default::default(),
        })
    }

    pub fn tau_total(&self) -> f64 {
        self.tau_total
    }

    /// Position of `v` in `V1`, if it belongs there.
    pub fn local(&self, v: usize) -> Option<usize> {
        (self.local[v] != NOT_IN_V1).then_some(self.local[v])
    }

    /// Walks from `at` until `V1`, pushing edge ids onto `edges` and
    /// folding `w/deg` into `weight` and `tau/w` into `rsum`. Returns the
    /// end vertex.
    fn extend<R: Rng + ?Sized>(
        &self,
        mut at: usize,
        edges: &mut Vec<usize>,
        budget: &mut usize,
        acc: &mut (f64, f64),
        rng: &mut R,
    ) -> Result<usize> {
        if self.local[at] != NOT_IN_V1 {
            return Ok(at);
        }
        loop {
            if *budget == 0 {
                return Err(Error::WalkTooLong(MAX_WALK_STEPS));
            }
            *budget -= 1;
            let (table, out) = self.steps[at].as_ref().ok_or_else(|| Error::Disconnected)?;
            let step = &out[table.sample(rng)];
            acc.0 *= step.factor;
            acc.1 += step.ratio;
            edges.push(step.id);
            at = step.next;
            if step.next_in_v1 {
                return Ok(at);
            }
        }
    }

    pub fn walk<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WalkEdge> {
        let start = self.start.sample(rng);
        let e = &self.g.edges()[start];
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let mut budget = MAX_WALK_STEPS;
        let mut acc = (e.weight, self.ratio[start]);
        let u0 = self.extend(e.u, &mut left, &mut budget, &mut acc, rng)?;
        self.extend(e.v, &mut right, &mut budget, &mut acc, rng)?;
        let mut edges = left;
        edges.reverse();
        edges.push(start);
        edges.extend_from_slice(&right);
        let mut vertices = Vec::with_capacity(edges.len() + 1);
        vertices.push(u0);
        for &id in &edges {
            let at = *vertices.last().unwrap();
            vertices.push(self.g.edges()[id].other(at));
        }
        let (weight, p) = self.weight_and_probability(&vertices, &edges);
        Ok(WalkEdge { vertices, edges, weight, p })
    }

    /// Walk weight and the probability that [`walk`](Self::walk) returns
    /// this walk (or its reversal). Starting the walk at edge `j` and
    /// growing both ends has probability `weight * (tau_j / w_j) / sum(tau)`,
    /// so the total is `weight * sum_j (tau_j / w_j) / sum(tau)`.
    /// Palindromic walks are always closed, so the sparsifier rejects them
    /// whatever their probability.
    pub fn weight_and_probability(&self, verts: &[usize], edges: &[usize]) -> (f64, f64) {
        let k = edges.len();
        let g = self.g;
        let mut weight = g.edges()[edges[0]].weight;
        let mut rsum = self.ratio[edges[0]];
        for j in 1..k {
            weight *= g.edges()[edges[j]].weight / g.degree(verts[j]);
            rsum += self.ratio[edges[j]];
        }
        let mut p = weight * rsum / self.tau_total;
        // a palindrome is its own reversal, so each realization was counted twice
        if verts[0] == verts[k] && edges.iter().eq(edges.iter().rev()) {
            p /= 2.0;
        }
        (weight, p)
    }
}

impl EdgeSampler for SchurWalkSampler<'_> {
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Proposal> {
        let i = self.start.sample(rng);
        let e = &self.g.edges()[i];
        if self.local[e.u] != NOT_IN_V1 && self.local[e.v] != NOT_IN_V1 {
            return Ok(Proposal {
                u: self.local[e.u],
                v: self.local[e.v],
                weight: e.weight,
                p: self.tau[i] / self.tau_total,
                origin: Origin::Original,
                parent: Some(e.id),
            });
        }
        let (mut left, mut right) = std::mem::take(&mut self.scratch);
        left.clear();
        right.clear();
        let mut budget = MAX_WALK_STEPS;
        let mut acc = (e.weight, self.ratio[i]);
        let ends = self
            .extend(e.u, &mut left, &mut budget, &mut acc, rng)
            .and_then(|u0| Ok((u0, self.extend(e.v, &mut right, &mut budget, &mut acc, rng)?)));
        let prop = ends.map(|(u0, uk)| {
            let mut p = acc.0 * acc.1 / self.tau_total;
            if u0 == uk {
                let forward = left.iter().rev().chain(std::iter::once(&i)).chain(right.iter());
                let backward = right.iter().rev().chain(std::iter::once(&i)).chain(left.iter());
                if forward.eq(backward) {
                    p /= 2.0;
                }
            }
            let single = left.is_empty() && right.is_empty();
            Proposal {
                u: self.local[u0],
                v: self.local[uk],
                weight: acc.0,
                p,
                origin: if single { Origin::Original } else { Origin::SchurGenerated },
                parent: single.then_some(i),
            }
        });
        self.scratch = (left, right);
        prop
    }
}

/// One walk multi-edge of `Sc(G, V1)`.
pub fn sample_edge_schur<R: Rng + ?Sized>(g: &WeightedMultiGraph, v1: &[usize], tau: &[f64], rng: &mut R) -> Result<WalkEdge> {
    SchurWalkSampler::new(g, v1, tau)?.walk(rng)
}

/// Sample count `ceil(n1^2 / delta)` used for a Schur complement onto
/// `n1` vertices.
pub fn schur_samples(n1: usize, delta: f64) -> usize {
    ((n1 * n1) as f64 / delta).ceil() as usize
}

fn validate_v1(g: &WeightedMultiGraph, v1: &[usize], delta: f64) -> Result<()> {
    if v1.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let mut seen = vec![false; g.n()];
    for &v in v1 {
        if v >= g.n() {
            return Err(Error::UnknownVertex(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::param(format!("vertex {v} listed twice in V1")));
        }
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(format!("delta must be positive, got {delta}")));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// Sparsifies `Sc(g, V1)` with `ceil(|V1|^2 / delta)` samples at leverage
/// accuracy 0.1, answering leverage queries through `emb` on `g`, and
/// streams accepted edges (in `V1` positions) into `sink`.
pub fn schur_sparse_into<R, F>(
    g: &WeightedMultiGraph,
    v1: &[usize],
    delta: f64,
    emb: &ResistanceEmbedding,
    rng: &mut R,
    sink: F,
) -> Result<SparsifyStats>
where
    R: Rng + ?Sized,
    F: FnMut(&Proposal, f64) -> Result<()>,
{
    validate_v1(g, v1, delta)?;
    if v1.len() == 1 {
        return Ok(SparsifyStats::default());
    }
    let tau: Vec<f64> = g
        .edges()
        .iter()
        .map(|e| emb.leverage(e.u, e.v, e.weight, CRUDE_EPS))
        .collect::<Result<_>>()?;
    let mut sampler = SchurWalkSampler::new(g, v1, &tau)?;
    let table = ResistanceTable::from_embedding(emb, v1);
    let n1 = v1.len();
    let rho = leverage_rho(sampler.tau_total(), n1, emb.eps());
    det_sparsify_with(n1, schur_samples(n1, delta), CRUDE_EPS, rho, &mut sampler, &table, rng, sink)
}

/// [`schur_sparse_into`] with a fresh 0.1-accurate sketch of `g`,
/// collecting the result as a multigraph on `0..|V1|` with origin tags.
pub fn schur_sparse<R: Rng + ?Sized>(g: &WeightedMultiGraph, v1: &[usize], delta: f64, rng: &mut R) -> Result<(WeightedMultiGraph, SparsifyStats)> {
    validate_v1(g, v1, delta)?;
    let emb = ResistanceEmbedding::auto(g, CRUDE_EPS, rng)?;
    schur_sparse_with(g, v1, delta, &emb, rng)
}

pub fn schur_sparse_with<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    v1: &[usize],
    delta: f64,
    emb: &ResistanceEmbedding,
    rng: &mut R,
) -> Result<(WeightedMultiGraph, SparsifyStats)> {
    let mut b = GraphBuilder::with_capacity(v1.len(), schur_samples(v1.len(), delta));
    let stats = schur_sparse_into(g, v1, delta, emb, rng, |p, w| b.tagged_edge(p.u, p.v, w, p.origin, p.parent).map(|_| ()))?;
    Ok((b.build(), stats))
}
