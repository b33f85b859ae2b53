//! Effective-resistance embeddings and the leverage-score oracles built on
//! them.
//!
//! A [`ResistanceEmbedding`] maps every vertex `u` to a point `z_u` so that
//! `||z_u - z_v||^2` estimates `ER(u, v)`. The exact backend stores `L^+`;
//! the sketch backend projects the weighted incidence matrix onto
//! `d = ceil(c_JL eps^-2 ln m)` random sign vectors and solves one Laplacian
//! system per row.

use crate::error::{Error, Result};
use crate::graph::WeightedMultiGraph;
use crate::oracles::{laplacian, GroundedSolver, Pseudoinverse};
use rand::Rng;

/// Dimension constant of the sketch.
pub const C_JL: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Exact,
    Sketch,
}

#[derive(Clone, Debug)]
pub struct ResistanceEmbedding {
    backend: Backend,
    eps: f64,
    n: usize,
    dim: usize,
    /// Row-major `n x dim` coordinates (sketch) or `L^+` (exact).
    coords: Vec<f64>,
}

/// Sketch dimension for `m` edges at error `eps`.
pub fn sketch_dimension(eps: f64, m: usize) -> usize {
    (C_JL * (m.max(2) as f64).ln() / (eps * eps)).ceil() as usize
}

impl ResistanceEmbedding {
    /// Dense pseudoinverse backend; answers with error 0.
    pub fn exact(g: &WeightedMultiGraph) -> Result<Self> {
        let p = Pseudoinverse::of_graph(g)?;
        let n = g.n();
        let coords = (0..n).flat_map(|i| p.matrix().row(i).to_vec()).collect();
        Ok(ResistanceEmbedding {
            backend: Backend::Exact,
            eps: 0.0,
            n,
            dim: n,
            coords,
        })
    }

    /// Random-projection backend built on the parallel-merged graph.
    pub fn sketch<R: Rng + ?Sized>(g: &WeightedMultiGraph, eps: f64, rng: &mut R) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::param(format!("embedding eps must lie in (0, 1], got {eps}")));
        }
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        let (simple, _) = g.merge_parallel();
        let n = g.n();
        let d = sketch_dimension(eps, simple.m());
        let mut coords = vec![0.0; n * d];
        if n > 1 {
            let solver = GroundedSolver::new(&laplacian(&simple))?;
            let scale: Vec<f64> = simple
                .edges()
                .iter()
                .map(|e| (e.weight / d as f64).sqrt())
                .collect();
            let mut y = vec![0.0; n];
            let mut bits = 0u64;
            let mut left = 0;
            for row in 0..d {
                y.iter_mut().for_each(|x| *x = 0.0);
                for (e, s) in simple.edges().iter().zip(&scale) {
                    if left == 0 {
                        bits = rng.gen();
                        left = 64;
                    }
                    let sign = if bits & 1 == 1 { *s } else { -*s };
                    bits >>= 1;
                    left -= 1;
                    y[e.u] += sign;
                    y[e.v] -= sign;
                }
                solver.solve(&mut y);
                for (u, &val) in y.iter().enumerate() {
                    coords[u * d + row] = val;
                }
            }
        }
        Ok(ResistanceEmbedding {
            backend: Backend::Sketch,
            eps,
            n,
            dim: d,
            coords,
        })
    }

    /// Exact backend for `eps == 0`, sketch otherwise.
    pub fn build<R: Rng + ?Sized>(g: &WeightedMultiGraph, eps: f64, rng: &mut R) -> Result<Self> {
        if eps == 0.0 {
            Self::exact(g)
        } else {
            Self::sketch(g, eps, rng)
        }
    }

    /// The sketch when its dimension is below `n`, the exact backend
    /// otherwise (it is then both cheaper and error-free).
    pub fn auto<R: Rng + ?Sized>(g: &WeightedMultiGraph, eps: f64, rng: &mut R) -> Result<Self> {
        if eps == 0.0 || sketch_dimension(eps, g.merge_parallel().0.m()) >= g.n() {
            Self::exact(g)
        } else {
            Self::sketch(g, eps, rng)
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self, u: usize) -> &[f64] {
        &self.coords[u * self.dim..(u + 1) * self.dim]
    }

    /// Estimated `ER(u, v)`; reads only the rows of `u` and `v`.
    pub fn query(&self, u: usize, v: usize) -> f64 {
        match self.backend {
            Backend::Exact => {
                let d = self.dim;
                self.coords[u * d + u] + self.coords[v * d + v] - 2.0 * self.coords[u * d + v]
            }
            Backend::Sketch => self
                .coords(u)
                .iter()
                .zip(self.coords(v))
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        }
    }
}

/// `w_e * ER~(u, v)` for edge `e` of `g`, provided `emb` is at least as
/// accurate as `eps`.
pub fn approx_leverage(emb: &ResistanceEmbedding, g: &WeightedMultiGraph, e: usize, eps: f64) -> Result<f64> {
    let e = g.edge(e)?;
    emb.leverage(e.u, e.v, e.weight, eps)
}

/// Leverage queries at a requested accuracy. `eps = 0` asks for exact
/// values.
pub trait LeverageOracle {
    fn leverage(&self, u: usize, v: usize, weight: f64, eps: f64) -> Result<f64>;
}

impl LeverageOracle for ResistanceEmbedding {
    fn leverage(&self, u: usize, v: usize, weight: f64, eps: f64) -> Result<f64> {
        if self.eps > eps {
            return Err(Error::AccuracyUnavailable(eps));
        }
        Ok(weight * self.query(u, v))
    }
}

/// Precomputed `ER~` for every pair of a vertex subset, indexed by position
/// in that subset.
#[derive(Clone, Debug)]
pub struct ResistanceTable {
    eps: f64,
    n: usize,
    values: Vec<f64>,
}

impl ResistanceTable {
    pub fn from_embedding(emb: &ResistanceEmbedding, vertices: &[usize]) -> Self {
        let n = vertices.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let r = emb.query(vertices[i], vertices[j]);
                values[i * n + j] = r;
                values[j * n + i] = r;
            }
        }
        ResistanceTable { eps: emb.eps, n, values }
    }

    pub fn all_pairs(emb: &ResistanceEmbedding) -> Self {
        let all: Vec<usize> = (0..emb.n()).collect();
        Self::from_embedding(emb, &all)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }
}

impl LeverageOracle for ResistanceTable {
    fn leverage(&self, u: usize, v: usize, weight: f64, eps: f64) -> Result<f64> {
        if self.eps > eps {
            return Err(Error::AccuracyUnavailable(eps));
        }
        Ok(weight * self.get(u, v))
    }
}

/// Several oracles of decreasing error; each query goes to the coarsest
/// one that is accurate enough.
#[derive(Clone, Debug)]
pub struct OracleLadder<O> {
    rungs: Vec<(f64, O)>,
}

impl<O: LeverageOracle> OracleLadder<O> {
    pub fn new(mut rungs: Vec<(f64, O)>) -> Self {
        rungs.sort_by(|a, b| b.0.total_cmp(&a.0));
        OracleLadder { rungs }
    }

    pub fn finest_eps(&self) -> f64 {
        self.rungs.last().map_or(f64::INFINITY, |r| r.0)
    }
}

impl<O: LeverageOracle> LeverageOracle for OracleLadder<O> {
    fn leverage(&self, u: usize, v: usize, weight: f64, eps: f64) -> Result<f64> {
        self.rungs
            .iter()
            .find(|(e, _)| *e <= eps)
            .ok_or_else(|| Error::AccuracyUnavailable(eps))?
            .1
            .leverage(u, v, weight, eps)
    }
}

impl OracleLadder<ResistanceTable> {
    /// Pair tables over `vertices` for each distinct embedding.
    pub fn tables(embeddings: &[ResistanceEmbedding], vertices: &[usize]) -> Self {
        OracleLadder::new(
            embeddings
                .iter()
                .map(|e| (e.eps(), ResistanceTable::from_embedding(e, vertices)))
                .collect(),
        )
    }
}

/// Embeddings covering the accuracies `0.1` and `eps`, built with
/// [`ResistanceEmbedding::auto`]; one embedding when it already serves both.
pub fn embeddings_for<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<ResistanceEmbedding>> {
    let crude_eps = if eps == 0.0 { 0.0 } else { crate::sparsify::CRUDE_EPS };
    let crude = ResistanceEmbedding::auto(g, crude_eps, rng)?;
    if crude.eps() <= eps {
        return Ok(vec![crude]);
    }
    let fine = ResistanceEmbedding::auto(g, eps, rng)?;
    Ok(vec![crude, fine])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::oracles::exact_effective_resistance;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn sketch_dimension_formula() {
        assert_eq!(sketch_dimension(0.1, 3), (400.0 * 3f64.ln()).ceil() as usize);
        assert_eq!(sketch_dimension(0.5, 1), (16.0 * 2f64.ln()).ceil() as usize);
    }

    #[test]
    fn exact_backend_matches_oracle() {
        let g = random_connected_weighted(9, 0.5, &mut seeded(3));
        let emb = ResistanceEmbedding::exact(&g).unwrap();
        for u in 0..9 {
            for v in 0..9 {
                let want = exact_effective_resistance(&g, u, v).unwrap();
                assert_relative_eq!(emb.query(u, v), want, epsilon = 1e-10, max_relative = 1e-8);
            }
        }
        let k3 = complete(3);
        let emb = ResistanceEmbedding::exact(&k3).unwrap();
        assert_relative_eq!(approx_leverage(&emb, &k3, 0, 0.0).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn bridge_has_unit_leverage() {
        let g = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (2, 3, 7.0)]).unwrap();
        let emb = ResistanceEmbedding::exact(&g).unwrap();
        assert_relative_eq!(approx_leverage(&emb, &g, 3, 0.0).unwrap(), 1.0, max_relative = 1e-12);
    }

    /// The sketch contract holds with high probability; require two of
    /// three seeds to land inside the interval.
    fn passes_in_most_seeds(check: impl Fn(u64) -> bool) -> bool {
        (0..3).filter(|&s| check(s)).count() >= 2
    }

    #[test]
    fn sketch_examples() {
        assert!(passes_in_most_seeds(|seed| {
            let emb = ResistanceEmbedding::sketch(&complete(3), 0.1, &mut seeded(seed)).unwrap();
            [(0, 1), (1, 2), (0, 2)]
                .iter()
                .all(|&(u, v)| (0.606..=0.741).contains(&emb.query(u, v)))
        }));
        assert!(passes_in_most_seeds(|seed| {
            let emb = ResistanceEmbedding::sketch(&path(3), 0.1, &mut seeded(seed)).unwrap();
            (1.818..=2.222).contains(&emb.query(0, 2))
        }));
        assert!(passes_in_most_seeds(|seed| {
            let g = complete(10);
            let emb = ResistanceEmbedding::sketch(&g, 0.2, &mut seeded(seed)).unwrap();
            let sum: f64 = (0..g.m()).map(|e| approx_leverage(&emb, &g, e, 0.2).unwrap()).sum();
            (0.8 * 9.0..=1.2 * 9.0).contains(&sum)
        }));
    }

    #[test]
    fn sketch_rejects_bad_input() {
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(ResistanceEmbedding::sketch(&two, 0.1, &mut seeded(0)), Err(Error::Disconnected)));
        assert!(ResistanceEmbedding::sketch(&complete(3), 0.0, &mut seeded(0)).is_err());
        assert!(ResistanceEmbedding::sketch(&complete(3), 1.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn ladder_routes_to_coarsest_sufficient_rung() {
        let g = complete(5);
        let mut rng = seeded(1);
        let coarse = ResistanceEmbedding::sketch(&g, 0.5, &mut rng).unwrap();
        let exact = ResistanceEmbedding::exact(&g).unwrap();
        let ladder = OracleLadder::new(vec![(0.0, exact.clone()), (0.5, coarse.clone())]);
        assert_eq!(ladder.leverage(0, 1, 1.0, 0.5).unwrap(), coarse.query(0, 1));
        assert_eq!(ladder.leverage(0, 1, 1.0, 0.2).unwrap(), exact.query(0, 1));
        assert!(matches!(coarse.leverage(0, 1, 1.0, 0.1), Err(Error::AccuracyUnavailable(_))));
        let table = ResistanceTable::from_embedding(&exact, &[4, 2]);
        assert_eq!(table.get(0, 1), exact.query(4, 2));
    }
}
