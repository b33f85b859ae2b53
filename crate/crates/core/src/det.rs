//! Estimating `det_+` of a Laplacian (equivalently `det` of an SDDM
//! matrix) by recursive Schur-complement sparsification.
//!
//! Each level splits off a diagonally dominant set `V2`. The determinant
//! factors exactly as `det(L[V2, V2]) * det_+(Sc(L, V1))`; the first factor
//! recurses on a Laplacian completed from `L[V2, V2]`, the second on a
//! sparsified Schur complement.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::logweight::LogWeight;
use crate::oracles::{log_det_plus, DenseLaplacian};
use crate::resistance::ResistanceEmbedding;
use crate::rng::{child, derive_seed, seeded};
use crate::schur::{almost_independent, schur_sparse_into};
use crate::sparsify::{SparsifyStats, CRUDE_EPS};
use rand::Rng;
use serde::Serialize;

/// Constant in `delta' = delta^2 / (C_DELTA * ceil(log2 n)^3)`.
pub const C_DELTA: f64 = 8.0;

/// Laplacians with at most this many vertices are handled exactly.
pub const EXACT_BASE: usize = 16;

/// Diagonal-dominance parameter of the vertex split.
pub const SPLIT_ALPHA: f64 = 0.1;

/// Completes an SDDM matrix to a Laplacian with one extra vertex that
/// absorbs each row's excess diagonal.
pub fn add_row_column(m: &DenseMatrix) -> Result<DenseLaplacian> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::NotSddm("empty matrix".into()));
    }
    let scale = m.max_abs_diagonal().max(f64::MIN_POSITIVE);
    let asym = m.asymmetry();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut excess = vec![0.0; n];
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            if i != j && m[(i, j)] > 0.0 {
                return Err(Error::NotSddm(format!("positive off-diagonal entry at ({i}, {j})")));
            }
            sum += m[(i, j)];
        }
        if sum < -1e-12 * scale {
            return Err(Error::NotSddm(format!("row {i} is not diagonally dominant")));
        }
        excess[i] = if sum > 1e-12 * scale { sum } else { 0.0 };
    }
    if excess.iter().all(|&x| x == 0.0) {
        return Err(Error::NotSddm("no strictly dominant row".into()));
    }
    let mut l = DenseMatrix::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] = m[(i, j)];
        }
        l[(i, n)] = -excess[i];
        l[(n, i)] = -excess[i];
    }
    l[(n, n)] = excess.iter().sum();
    Ok(DenseLaplacian::from_matrix_unchecked(l))
}

/// Totals over all recursive calls at one depth.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LevelTrace {
    pub calls: u64,
    pub budget_sum: f64,
    pub vertex_sum: u64,
    pub disconnected: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DetTrace {
    pub levels: Vec<LevelTrace>,
    pub disconnected: u64,
    pub sparsify: SparsifyStats,
}

impl DetTrace {
    fn level(&mut self, depth: usize) -> &mut LevelTrace {
        if self.levels.len() <= depth {
            self.levels.resize(depth + 1, LevelTrace::default());
        }
        &mut self.levels[depth]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetEstimate {
    pub log_value: LogWeight,
    pub delta: f64,
    pub delta_prime: f64,
    /// Every run's value when boosted; the single value otherwise.
    pub runs: Vec<LogWeight>,
    pub trace: DetTrace,
}

/// `delta^2 / (C_DELTA * ceil(log2 n)^3)`.
pub fn inner_delta(delta: f64, n: usize) -> f64 {
    let lg = (n.max(2) as f64).log2().ceil();
    delta * delta / (C_DELTA * lg * lg * lg)
}

/// Estimates `det_+(l)` for a connected Laplacian. `n_bar` is the size of
/// the top-level problem (normally `l.n()`).
pub fn det_approx<R: Rng + ?Sized>(l: &DenseLaplacian, delta: f64, n_bar: usize, rng: &mut R) -> Result<DetEstimate> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !l.is_connected() {
        return Err(Error::Disconnected);
    }
    let n_bar = n_bar.max(l.n());
    let delta_prime = inner_delta(delta, n_bar);
    let mut trace = DetTrace::default();
    let seed = rng.gen();
    let log_value = recurse(l, delta_prime, delta_prime, n_bar as f64, 0, seed, &mut trace)?;
    Ok(DetEstimate {
        log_value,
        delta,
        delta_prime,
        runs: vec![log_value],
        trace,
    })
}

fn recurse(
    l: &DenseLaplacian,
    budget: f64,
    delta_prime: f64,
    n_bar: f64,
    depth: usize,
    seed: u64,
    trace: &mut DetTrace,
) -> Result<LogWeight> {
    let n = l.n();
    let level = trace.level(depth);
    level.calls += 1;
    level.budget_sum += budget;
    level.vertex_sum += n as u64;
    if n <= EXACT_BASE.max(2) {
        return log_det_plus(l);
    }
    let mut rng = child(seed, 0);
    let g = l.to_graph();
    let v2 = almost_independent(&g, SPLIT_ALPHA, &mut rng)?.v2;
    let mut in_v2 = vec![false; n];
    v2.iter().for_each(|&v| in_v2[v] = true);
    let v1: Vec<usize> = (0..n).filter(|&v| !in_v2[v]).collect();

    let emb = ResistanceEmbedding::auto(&g, CRUDE_EPS, &mut rng)?;
    let mut sc = DenseMatrix::zeros(v1.len());
    let stats = schur_sparse_into(&g, &v1, budget, &emb, &mut rng, |p, w| {
        sc[(p.u, p.u)] += w;
        sc[(p.v, p.v)] += w;
        sc[(p.u, p.v)] -= w;
        sc[(p.v, p.u)] -= w;
        Ok(())
    })?;
    trace.sparsify.absorb(&stats);
    let l1 = DenseLaplacian::from_matrix_unchecked(sc);
    let l2 = add_row_column(&l.matrix().principal(&v2))?;

    let b1 = delta_prime * v1.len() as f64 / n_bar;
    let b2 = delta_prime * v2.len() as f64 / n_bar;
    let right = recurse(&l2, b2, delta_prime, n_bar, depth + 1, derive_seed(seed, 2), trace)?;
    if !l1.is_connected() {
        trace.disconnected += 1;
        trace.level(depth).disconnected += 1;
        return Ok(LogWeight::ZERO);
    }
    let left = recurse(&l1, b1, delta_prime, n_bar, depth + 1, derive_seed(seed, 1), trace)?;
    Ok(left * right)
}

/// Median of `k` independent runs of [`det_approx`] (log-zero sorts
/// lowest), spread over `threads` workers. Run `i` is seeded from the
/// `i`-th draw of `rng`, so the result does not depend on `threads`. The
/// returned trace is that of the median run.
pub fn det_approx_median<R: Rng + ?Sized>(l: &DenseLaplacian, delta: f64, k: usize, threads: usize, rng: &mut R) -> Result<DetEstimate> {
    if k == 0 {
        return Err(Error::param("boost count must be positive"));
    }
    if threads == 0 {
        return Err(Error::param("thread count must be positive"));
    }
    let seeds: Vec<u64> = (0..k).map(|_| rng.gen()).collect();
    let run = |s: u64| det_approx(l, delta, l.n(), &mut seeded(s));
    let mut runs: Vec<DetEstimate> = if threads == 1 {
        seeds.iter().map(|&s| run(s)).collect::<Result<_>>()?
    } else {
        let chunk = k.div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<Result<Vec<_>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };
    let values: Vec<LogWeight> = runs.iter().map(|r| r.log_value).collect();
    runs.sort_by(|a, b| a.log_value.ln().total_cmp(&b.log_value.ln()));
    let mut median = runs.swap_remove((k - 1) / 2);
    median.runs = values;
    Ok(median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::oracles::laplacian;
    use crate::WeightedMultiGraph;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn add_row_column_examples() {
        let m = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
        assert_eq!(add_row_column(&m).unwrap().matrix().to_rows(), vec![vec![2.0, -2.0], vec![-2.0, 2.0]]);
        let m = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let l = add_row_column(&m).unwrap();
        assert_eq!(l.matrix()[(0, 2)], -1.0);
        assert_eq!(l.matrix()[(1, 2)], -1.0);
        assert_relative_eq!(log_det_plus(&l).unwrap().ln(), 3f64.ln(), max_relative = 1e-12);
        // the minor of K3's Laplacian completes back to K3
        let k3 = laplacian(&complete(3));
        let back = add_row_column(&k3.matrix().without_last()).unwrap();
        assert_eq!(back.matrix(), k3.matrix());
    }

    #[test]
    fn add_row_column_rejects_non_sddm() {
        let lap = laplacian(&complete(3));
        assert!(matches!(add_row_column(lap.matrix()), Err(Error::NotSddm(_))));
        let pos = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(add_row_column(&pos), Err(Error::NotSddm(_))));
        let weak = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![-2.0, 3.0]]).unwrap();
        assert!(matches!(add_row_column(&weak), Err(Error::NotSddm(_))));
    }

    #[test]
    fn base_case_is_exact() {
        let g = WeightedMultiGraph::from_edges(2, [(0, 1, 3.5)]).unwrap();
        let est = det_approx(&laplacian(&g), 0.5, 2, &mut seeded(0)).unwrap();
        assert_eq!(est.log_value.ln(), 3.5f64.ln());
        let est = det_approx(&laplacian(&complete(3)), 0.5, 3, &mut seeded(0)).unwrap();
        assert_relative_eq!(est.log_value.ln(), 3f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn recursion_tracks_budgets_and_is_deterministic() {
        let g = random_connected_weighted(24, 0.4, &mut seeded(8));
        let l = laplacian(&g);
        let a = det_approx(&l, 1.0, 24, &mut seeded(3)).unwrap();
        let b = det_approx(&l, 1.0, 24, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.levels.len() >= 2);
        for (depth, lv) in a.trace.levels.iter().enumerate() {
            assert!(lv.budget_sum <= 2.0 * a.delta_prime * (1.0 + 1e-12));
            assert!(lv.vertex_sum as f64 <= 2.0 * 24.0 + depth as f64);
        }
        let exact = log_det_plus(&l).unwrap().ln();
        assert!((a.log_value.ln() - exact).abs() < 1.5f64.ln(), "{} vs {exact}", a.log_value.ln());
    }

    #[test]
    fn rejects_bad_input() {
        let two = WeightedMultiGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(det_approx(&laplacian(&two), 0.5, 4, &mut seeded(0)), Err(Error::Disconnected)));
        assert!(det_approx(&laplacian(&complete(3)), 0.0, 3, &mut seeded(0)).is_err());
        assert!(det_approx_median(&laplacian(&complete(3)), 0.5, 0, 1, &mut seeded(0)).is_err());
        assert!(det_approx_median(&laplacian(&complete(3)), 0.5, 1, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn median_reports_every_run() {
        let l = laplacian(&complete(3));
        let est = det_approx_median(&l, 0.5, 3, 1, &mut seeded(1)).unwrap();
        assert_eq!(est.runs.len(), 3);
        let l = laplacian(&random_connected_weighted(20, 0.5, &mut seeded(2)));
        let one = det_approx_median(&l, 1.0, 3, 1, &mut seeded(5)).unwrap();
        let two = det_approx_median(&l, 1.0, 3, 2, &mut seeded(5)).unwrap();
        assert_eq!(one, two);
    }
}
