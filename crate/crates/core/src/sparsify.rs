//! Determinant-preserving edge sampling.
//!
//! [`ideal_sparsify`] draws `s` edges with replacement in proportion to
//! supplied leverage estimates. [`det_sparsify_with`] realizes the same
//! distribution from any crude proposal distribution by two rounds of
//! rejection, only consulting the accurate oracle for proposals that
//! survive the first round.

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, Origin, WeightedMultiGraph};
use crate::resistance::{embeddings_for, LeverageOracle, OracleLadder, ResistanceTable};
use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::WeightedAliasIndex;
use serde::Serialize;

/// Accuracy of the leverage estimates used for the first rejection round.
pub const CRUDE_EPS: f64 = 0.1;

/// Multiplier in the default sample count `C_S * ceil(n^1.5 / delta^2)`.
pub const C_S: f64 = 8.0;

/// Proposals allowed per requested sample before giving up.
const PROPOSAL_CAP_FACTOR: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleConfig {
    pub s: usize,
    pub eps: f64,
    pub rho: f64,
    pub seed: u64,
}

impl SampleConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s < n.max(1) {
            return Err(Error::param(format!("sample count {} is below n = {n}", self.s)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::param(format!("eps must lie in (0, 1/2), got {}", self.eps)));
        }
        if !(self.rho >= 1.0) || !self.rho.is_finite() {
            return Err(Error::param(format!("rho must be at least 1, got {}", self.rho)));
        }
        Ok(())
    }
}

/// `ceil(n^1.5 / delta^2) * C_S`.
pub fn default_samples(n: usize, delta: f64) -> usize {
    (C_S * ((n as f64).powf(1.5) / (delta * delta)).ceil()) as usize
}

/// `n^{-1/4}`.
pub fn default_eps(n: usize) -> f64 {
    (n.max(1) as f64).powf(-0.25)
}

/// `exp(n^2 / (2 (n - 1) s))`, the per-edge factor that cancels the
/// downward bias of the sampled tree weight.
pub fn exp_correction(n: usize, s: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    let n = n as f64;
    (n * n / (2.0 * (n - 1.0) * s as f64)).exp()
}

/// One candidate edge drawn by an [`EdgeSampler`], with the probability
/// `p` of drawing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub p: f64,
    pub origin: Origin,
    pub parent: Option<usize>,
}

pub trait EdgeSampler {
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Proposal>;
}

/// Draws edges of a graph in proportion to fixed nonnegative scores.
#[derive(Clone, Debug)]
pub struct AliasEdgeSampler {
    edges: Vec<(usize, usize, f64, usize)>,
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl AliasEdgeSampler {
    pub fn new(g: &WeightedMultiGraph, scores: &[f64]) -> Result<Self> {
        if scores.len() != g.m() || g.m() == 0 {
            return Err(Error::param(format!(
                "expected {} sampling scores, got {}",
                g.m(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::param(format!("sampling scores must be positive, found {bad}")));
        }
        let total: f64 = scores.iter().sum();
        let alias = WeightedAliasIndex::new(scores.to_vec())
            .map_err(|e| Error::param(format!("alias table: {e}")))?;
        Ok(AliasEdgeSampler {
            edges: g.edges().iter().map(|e| (e.u, e.v, e.weight, e.id)).collect(),
            probs: scores.iter().map(|x| x / total).collect(),
            alias,
        })
    }

    pub fn uniform(g: &WeightedMultiGraph) -> Result<Self> {
        Self::new(g, &vec![1.0; g.m()])
    }

    pub fn probability(&self, id: usize) -> f64 {
        self.probs[id]
    }
}

impl EdgeSampler for AliasEdgeSampler {
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Proposal> {
        let k = self.alias.sample(rng);
        let (u, v, weight, id) = self.edges[k];
        Ok(Proposal {
            u,
            v,
            weight,
            p: self.probs[k],
            origin: Origin::Original,
            parent: Some(id),
        })
    }
}

/// Counters from one run of the rejection sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SparsifyStats {
    pub proposals: u64,
    pub fine_calls: u64,
    pub accepted: u64,
}

impl SparsifyStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals as f64
    }

    pub fn fine_call_rate(&self) -> f64 {
        self.fine_calls as f64 / self.proposals as f64
    }

    pub fn absorb(&mut self, other: &SparsifyStats) {
        self.proposals += other.proposals;
        self.fine_calls += other.fine_calls;
        self.accepted += other.accepted;
    }
}

/// Samples `s` edges with replacement, edge `e` with probability
/// `tau[e] / sum(tau)`, each copy reweighted to
/// `w_e (n-1) / (tau_e s) * exp_correction(n, s)`.
pub fn ideal_sparsify<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    tau: &[f64],
    s: usize,
    rng: &mut R,
) -> Result<WeightedMultiGraph> {
    if s == 0 {
        return Err(Error::param("sample count must be positive"));
    }
    if tau.is_empty() {
        return Err(Error::param("leverage estimates are empty"));
    }
    let sampler = AliasEdgeSampler::new(g, tau)?;
    let n = g.n();
    let scale = (n as f64 - 1.0) / s as f64 * exp_correction(n, s);
    let mut b = GraphBuilder::with_capacity(n, s);
    for _ in 0..s {
        let k = sampler.alias.sample(rng);
        let e = &g.edges()[k];
        b.tagged_edge(e.u, e.v, e.weight / tau[k] * scale, e.origin, Some(e.id))?;
    }
    Ok(b.build())
}

/// The two-round rejection sampler on a graph with `n` vertices, streaming
/// each accepted edge and its new weight into `sink`.
///
/// Round one keeps a proposal with probability `p' / (4 rho p)` where
/// `p' = 2 lev(e, 0.1) / (n-1)`; round two keeps it with probability
/// `p'' / p'` where `p'' = lev(e, eps) / (n-1)`. Accepted edges therefore
/// arrive in proportion to `lev(e, eps)`.
#[allow(clippy::too_many_arguments)]
pub fn det_sparsify_with<S, O, R, F>(
    n: usize,
    s: usize,
    eps: f64,
    rho: f64,
    sampler: &mut S,
    oracle: &O,
    rng: &mut R,
    mut sink: F,
) -> Result<SparsifyStats>
where
    S: EdgeSampler,
    O: LeverageOracle + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&Proposal, f64) -> Result<()>,
{
    if s == 0 {
        return Err(Error::param("sample count must be positive"));
    }
    if n < 2 {
        return Err(Error::param("sparsification needs at least two vertices"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    let nm1 = n as f64 - 1.0;
    let scale = exp_correction(n, s) / s as f64;
    let cap = (s as u64).saturating_mul(PROPOSAL_CAP_FACTOR as u64).max(1_000_000);
    let mut stats = SparsifyStats::default();
    while (stats.accepted as usize) < s {
        if stats.proposals >= cap {
            return Err(Error::RetriesExhausted(cap as usize));
        }
        stats.proposals += 1;
        let prop = sampler.draw(rng)?;
        let p1 = 2.0 / nm1 * oracle.leverage(prop.u, prop.v, prop.weight, CRUDE_EPS)?;
        let keep1 = p1 / (4.0 * rho * prop.p);
        if keep1 > 1.0 + 1e-9 || !(keep1 >= 0.0) {
            return Err(Error::ContractViolation {
                stage: "first rejection round",
                detail: format!("keep probability {keep1} for edge ({}, {})", prop.u, prop.v),
            });
        }
        // one uniform serves both rounds: given u < keep1, u / keep1 is uniform
        let u = if keep1 > 0.0 { rng.gen::<f64>() } else { 1.0 };
        if u >= keep1 {
            continue;
        }
        stats.fine_calls += 1;
        let p2 = oracle.leverage(prop.u, prop.v, prop.weight, eps)? / nm1;
        let keep2 = p2 / p1;
        if keep2 > 1.0 + 1e-9 || !(keep2 >= 0.0) {
            return Err(Error::ContractViolation {
                stage: "second rejection round",
                detail: format!("keep probability {keep2} for edge ({}, {})", prop.u, prop.v),
            });
        }
        if u >= keep1 * keep2 {
            continue;
        }
        stats.accepted += 1;
        sink(&prop, prop.weight / p2 * scale)?;
    }
    Ok(stats)
}

/// [`det_sparsify_with`] collecting the accepted edges into a multigraph.
pub fn det_sparsify<S, O, R>(
    n: usize,
    cfg: &SampleConfig,
    sampler: &mut S,
    oracle: &O,
    rng: &mut R,
) -> Result<(WeightedMultiGraph, SparsifyStats)>
where
    S: EdgeSampler,
    O: LeverageOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut b = GraphBuilder::with_capacity(n, cfg.s);
    let stats = det_sparsify_with(n, cfg.s, cfg.eps, cfg.rho, sampler, oracle, rng, |p, w| {
        b.tagged_edge(p.u, p.v, w, p.origin, p.parent).map(|_| ())
    })?;
    Ok((b.build(), stats))
}

/// Oversampling bound for a sampler whose probabilities are proportional to
/// leverage estimates of error `eps` summing to `total`, on a graph with
/// `n` vertices.
pub fn leverage_rho(total: f64, n: usize, eps: f64) -> f64 {
    (total * (1.0 + eps) / ((1.0 - eps) * (n as f64 - 1.0))).max(1.0)
}

/// Everything needed to sparsify one graph repeatedly: pair tables for the
/// leverage oracle and the crude proposal sampler.
#[derive(Clone, Debug)]
pub struct Sparsifier {
    n: usize,
    oracle: OracleLadder<ResistanceTable>,
    sampler: AliasEdgeSampler,
    rho: f64,
}

impl Sparsifier {
    /// Builds sketches at accuracies 0.1 and `eps` (or the exact backend
    /// when `eps == 0`) and a proposal sampler proportional to the 0.1
    /// estimates.
    pub fn new<R: Rng + ?Sized>(g: &WeightedMultiGraph, eps: f64, rng: &mut R) -> Result<Self> {
        if g.n() < 2 {
            return Err(Error::param("sparsification needs at least two vertices"));
        }
        let embeddings = embeddings_for(g, eps, rng)?;
        let oracle = OracleLadder::tables(&embeddings, &(0..g.n()).collect::<Vec<_>>());
        let crude_eps = embeddings[0].eps();
        let scores: Vec<f64> = g
            .edges()
            .iter()
            .map(|e| oracle.leverage(e.u, e.v, e.weight, CRUDE_EPS))
            .collect::<Result<_>>()?;
        let total: f64 = scores.iter().sum();
        Ok(Sparsifier {
            n: g.n(),
            sampler: AliasEdgeSampler::new(g, &scores)?,
            rho: leverage_rho(total, g.n(), crude_eps),
            oracle,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn finest_eps(&self) -> f64 {
        self.oracle.finest_eps()
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, s: usize, eps: f64, rng: &mut R) -> Result<(WeightedMultiGraph, SparsifyStats)> {
        let cfg = SampleConfig {
            s,
            eps,
            rho: self.rho,
            seed: 0,
        };
        det_sparsify(self.n, &cfg, &mut self.sampler, &self.oracle, rng)
    }
}

/// One-shot determinant sparsification of `g` with `s` samples at leverage
/// accuracy `eps`.
pub fn sparsify<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    s: usize,
    eps: f64,
    rng: &mut R,
) -> Result<(WeightedMultiGraph, SparsifyStats)> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut sp = Sparsifier::new(g, eps, rng)?;
    sp.sample(s, eps, rng)
}

/// Retry budget for disconnected sparsifiers in the tree pipelines.
pub const SPARSIFIER_RETRIES: usize = 100;

/// Draws trees by sparsifying `g` with `s = C_S ceil(n^1.5 / delta^2)`
/// samples at accuracy `n^{-1/4}` and exactly sampling a tree of the
/// sparsifier.
#[derive(Clone, Debug)]
pub struct OneShotSampler {
    sparsifier: Sparsifier,
    s: usize,
    eps: f64,
    retries: usize,
}

impl OneShotSampler {
    pub fn new<R: Rng + ?Sized>(g: &WeightedMultiGraph, delta: f64, rng: &mut R) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1], got {delta}")));
        }
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        let eps = default_eps(g.n());
        let sparse_eps = if eps >= CRUDE_EPS { CRUDE_EPS } else { eps };
        Ok(OneShotSampler {
            sparsifier: Sparsifier::new(g, sparse_eps, rng)?,
            s: default_samples(g.n(), delta),
            eps,
            retries: 0,
        })
    }

    pub fn samples(&self) -> usize {
        self.s
    }

    /// Disconnected sparsifiers discarded so far.
    pub fn retries(&self) -> usize {
        self.retries
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, g: &WeightedMultiGraph, rng: &mut R) -> Result<crate::oracles::SpanningTree> {
        if g.n() < 2 {
            return crate::oracles::SpanningTree::new(g, Vec::new());
        }
        for _ in 0..SPARSIFIER_RETRIES {
            let (h, _) = self.sparsifier.sample(self.s, self.eps, rng)?;
            if !h.is_connected() {
                self.retries += 1;
                continue;
            }
            let t = crate::trees::exact_tree(&h, rng)?;
            let ids = t
                .edges()
                .iter()
                .map(|&id| h.edges()[id].parent.expect("sampled edges keep their source"))
                .collect();
            return crate::oracles::SpanningTree::new(g, ids);
        }
        Err(Error::RetriesExhausted(SPARSIFIER_RETRIES))
    }
}

/// A single tree from the one-shot pipeline.
pub fn one_shot_tree<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    delta: f64,
    rng: &mut R,
) -> Result<crate::oracles::SpanningTree> {
    OneShotSampler::new(g, delta, rng)?.draw(g, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::oracles::{exact_leverage_scores, log_tree_weight};
    use crate::resistance::ResistanceEmbedding;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn ideal_weight_formula() {
        // w = 1, tau = 2/3, n = 3, s = 6
        let want = 0.5 * 0.375f64.exp();
        assert_relative_eq!(want, 0.72750, epsilon = 5e-6);
        let h = ideal_sparsify(&complete(3), &[2.0 / 3.0; 3], 6, &mut seeded(0)).unwrap();
        assert_eq!(h.m(), 6);
        for e in h.edges() {
            assert_relative_eq!(e.weight, want, max_relative = 1e-14);
            assert!(e.parent.is_some());
        }
    }

    #[test]
    fn ideal_rejects_bad_arguments() {
        let g = complete(3);
        assert!(ideal_sparsify(&g, &[2.0 / 3.0; 3], 0, &mut seeded(0)).is_err());
        assert!(ideal_sparsify(&g, &[], 6, &mut seeded(0)).is_err());
        assert!(ideal_sparsify(&g, &[1.0, 0.0, 1.0], 6, &mut seeded(0)).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = SampleConfig { s: 10, eps: 0.1, rho: 1.0, seed: 0 };
        assert!(ok.validate(5).is_ok());
        assert!(SampleConfig { s: 4, ..ok }.validate(5).is_err());
        assert!(SampleConfig { eps: 0.5, ..ok }.validate(5).is_err());
        assert!(SampleConfig { rho: 0.5, ..ok }.validate(5).is_err());
    }

    #[test]
    fn accepted_weights_recover_source_weights() {
        let g = random_connected_weighted(8, 0.6, &mut seeded(5));
        let emb = ResistanceEmbedding::exact(&g).unwrap();
        let tau = exact_leverage_scores(&g).unwrap();
        let mut sampler = AliasEdgeSampler::uniform(&g).unwrap();
        let rho = tau.iter().cloned().fold(0.0, f64::max) / 7.0 * g.m() as f64;
        let cfg = SampleConfig { s: 200, eps: 0.05, rho, seed: 0 };
        let (h, stats) = det_sparsify(8, &cfg, &mut sampler, &emb, &mut seeded(2)).unwrap();
        assert_eq!(h.m(), 200);
        assert_eq!(stats.accepted, 200);
        let corr = exp_correction(8, 200);
        for e in h.edges() {
            let parent = &g.edges()[e.parent.unwrap()];
            let p2 = tau[parent.id] / 7.0;
            assert_relative_eq!(e.weight * p2 * 200.0 / corr, parent.weight, max_relative = 1e-12);
        }
    }

    #[test]
    fn broken_rho_is_reported_with_stage() {
        let g = complete(4);
        let emb = ResistanceEmbedding::exact(&g).unwrap();
        let mut sampler = AliasEdgeSampler::uniform(&g).unwrap();
        let cfg = SampleConfig { s: 10, eps: 0.1, rho: 0.1, seed: 0 };
        match det_sparsify(4, &cfg, &mut sampler, &emb, &mut seeded(0)) {
            Err(Error::ContractViolation { stage, .. }) => assert_eq!(stage, "first rejection round"),
            other => panic!("expected a contract violation, got {other:?}"),
        }
    }

    #[test]
    fn sparsify_keeps_expected_tree_weight_roughly() {
        let g = complete(8);
        let mut rng = seeded(11);
        let mut sp = Sparsifier::new(&g, 0.1, &mut rng).unwrap();
        assert!(sp.rho() >= 1.0);
        let t = log_tree_weight(&g).ln();
        let trials = 200;
        let mean: f64 = (0..trials)
            .map(|_| {
                let (h, _) = sp.sample(400, 0.1, &mut rng).unwrap();
                (log_tree_weight(&h).ln() - t).exp()
            })
            .sum::<f64>()
            / trials as f64;
        assert!((0.8..1.2).contains(&mean), "mean ratio {mean}");
    }

    #[test]
    fn one_shot_rejects_disconnected_input() {
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(one_shot_tree(&two, 0.2, &mut seeded(0)), Err(Error::Disconnected)));
    }

    #[test]
    fn default_parameters() {
        assert_eq!(default_samples(16, 1.0), 512);
        assert_relative_eq!(default_eps(16), 0.5);
        assert_eq!(exp_correction(1, 10), 1.0);
    }
}
