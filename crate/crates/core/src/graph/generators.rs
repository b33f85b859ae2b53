//! Small graph families used by tests, the validation harness and the CLI.

use super::{GraphBuilder, WeightedMultiGraph};
use rand::Rng;

pub fn complete(n: usize) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(n);
    for u in 0..n {
        for v in u + 1..n {
            b.edge(u, v, 1.0).unwrap();
        }
    }
    b.build()
}

/// Path on `n` vertices `0 - 1 - ... - (n-1)`.
pub fn path(n: usize) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(n);
    for u in 1..n {
        b.edge(u - 1, u, 1.0).unwrap();
    }
    b.build()
}

pub fn cycle(n: usize) -> WeightedMultiGraph {
    assert!(n >= 3, "cycle needs at least 3 vertices");
    let mut b = GraphBuilder::new(n);
    for u in 0..n {
        b.edge(u, (u + 1) % n, 1.0).unwrap();
    }
    b.build()
}

/// Star with center `0` and leaves `1..=leaves`.
pub fn star(leaves: usize) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(leaves + 1);
    for v in 1..=leaves {
        b.edge(0, v, 1.0).unwrap();
    }
    b.build()
}

/// Wheel on `n` vertices: hub `0` joined to a rim cycle `1..n`.
pub fn wheel(n: usize) -> WeightedMultiGraph {
    assert!(n >= 4, "wheel needs a rim of at least 3 vertices");
    let rim = n - 1;
    let mut b = GraphBuilder::new(n);
    for i in 0..rim {
        b.edge(0, i + 1, 1.0).unwrap();
    }
    for i in 0..rim {
        b.edge(i + 1, (i + 1) % rim + 1, 1.0).unwrap();
    }
    b.build()
}

/// Erdős–Rényi G(n, p) with unit weights (possibly disconnected).
pub fn gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                b.edge(u, v, 1.0).unwrap();
            }
        }
    }
    b.build()
}

/// G(n, p) redrawn until connected.
pub fn connected_gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> WeightedMultiGraph {
    loop {
        let g = gnp(n, p, rng);
        if g.is_connected() {
            return g;
        }
    }
}

/// Same topology with i.i.d. weights drawn uniformly from `[lo, hi)`.
pub fn reweighted<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(g.n());
    for e in g.edges() {
        b.edge(e.u, e.v, rng.gen_range(lo..hi)).unwrap();
    }
    b.build()
}

/// A connected graph on `n` vertices with random weights in `[0.5, 3)`:
/// a random spanning tree plus each remaining pair with probability `p`.
pub fn random_connected_weighted<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(n);
    let mut present = vec![false; n * n];
    for v in 1..n {
        let u = rng.gen_range(0..v);
        present[u * n + v] = true;
        b.edge(u, v, rng.gen_range(0.5..3.0)).unwrap();
    }
    for u in 0..n {
        for v in u + 1..n {
            if !present[u * n + v] && rng.gen::<f64>() < p {
                b.edge(u, v, rng.gen_range(0.5..3.0)).unwrap();
            }
        }
    }
    b.build()
}

/// Adds unit-weight chords to a graph.
pub fn with_chords(g: &WeightedMultiGraph, chords: &[(usize, usize)]) -> WeightedMultiGraph {
    let mut b = GraphBuilder::new(g.n());
    for e in g.edges() {
        b.edge(e.u, e.v, e.weight).unwrap();
    }
    for &(u, v) in chords {
        b.edge(u, v, 1.0).unwrap();
    }
    b.build()
}
