//! Statistical checks: moment estimators for sampled subgraphs, total
//! variation against enumerated tree distributions, Pearson chi-square
//! tests, and enumerated intersection bounds on small complete graphs.

use crate::error::{Error, Result};
use crate::graph::WeightedMultiGraph;
use crate::oracles::{enumerate_spanning_trees, log_tree_weight, SpanningTree};
use crate::rng::seeded;
use rand::seq::index;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashMap;

pub mod suites;

pub use suites::{run_suite, CheckOutcome, Suite};

/// Default significance level of the chi-square tests.
pub const SIGNIFICANCE: f64 = 1e-3;

/// Width of the CLT acceptance bands, in standard errors.
pub const SIGMA_BAND: f64 = 5.0;

/// Limit on subsets visited by [`full_subset_mean`].
pub const FULL_ENUMERATION_LIMIT: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub trials: usize,
    /// `ln` of the value the mean is compared against.
    pub prediction_ln: f64,
    /// `E[T(H)] / prediction`.
    pub mean_ratio: f64,
    pub mean_ratio_se: f64,
    /// `E[T(H)^2] / E[T(H)]^2`.
    pub second_moment_ratio: f64,
    pub second_moment_se: f64,
    pub seeds: Vec<u64>,
    /// Set when the run violates an assumption of the bound it probes.
    pub flags: Vec<String>,
}

impl MomentReport {
    /// Summarizes per-trial log values (`-inf` for zero) against a
    /// predicted mean, working with `exp(x_i - max x)` so nothing overflows.
    pub fn from_logs(logs: &[f64], prediction_ln: f64, seeds: Vec<u64>) -> Result<Self> {
        let n = logs.len();
        if n == 0 {
            return Err(Error::param("no trials"));
        }
        let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Ok(MomentReport {
                trials: n,
                prediction_ln,
                mean_ratio: 0.0,
                mean_ratio_se: 0.0,
                second_moment_ratio: f64::NAN,
                second_moment_se: f64::NAN,
                seeds,
                flags: vec!["every trial produced a zero tree weight".into()],
            });
        }
        let x: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let nf = n as f64;
        let m1 = x.iter().sum::<f64>() / nf;
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / nf;
        let m3 = x.iter().map(|v| v * v * v).sum::<f64>() / nf;
        let m4 = x.iter().map(|v| v * v * v * v).sum::<f64>() / nf;
        let var1 = (m2 - m1 * m1).max(0.0);
        let var2 = (m4 - m2 * m2).max(0.0);
        let cov12 = m3 - m1 * m2;
        let scale = (shift - prediction_ln).exp();
        let ratio = m2 / (m1 * m1);
        // delta method for m2 / m1^2
        let var_ratio = (var2 / m1.powi(4) + 4.0 * m2 * m2 * var1 / m1.powi(6) - 4.0 * m2 * cov12 / m1.powi(5)).max(0.0) / nf;
        Ok(MomentReport {
            trials: n,
            prediction_ln,
            mean_ratio: scale * m1,
            mean_ratio_se: scale * (var1 / nf).sqrt(),
            second_moment_ratio: ratio,
            second_moment_se: var_ratio.sqrt(),
            seeds,
            flags: Vec::new(),
        })
    }

    /// Whether the mean ratio lies within `[lo, hi]` widened by
    /// [`SIGMA_BAND`] standard errors.
    pub fn mean_within(&self, lo: f64, hi: f64) -> bool {
        let slack = SIGMA_BAND * self.mean_ratio_se;
        self.mean_ratio >= lo - slack && self.mean_ratio <= hi + slack
    }

    pub fn second_moment_below(&self, bound: f64) -> bool {
        self.second_moment_ratio <= bound + SIGMA_BAND * self.second_moment_se
    }
}

/// `ln((a)_b)` for the falling factorial `a (a-1) ... (a-b+1)`.
pub fn ln_falling(a: usize, b: usize) -> f64 {
    if b > a {
        return f64::NEG_INFINITY;
    }
    (0..b).map(|i| ((a - i) as f64).ln()).sum()
}

/// `ln(T(G) (s)_{n-1} / (m)_{n-1})`, the expected tree weight of a uniform
/// `s`-subset of the edges.
pub fn uniform_subset_prediction(g: &WeightedMultiGraph, s: usize) -> f64 {
    let k = g.n() - 1;
    log_tree_weight(g).ln() + ln_falling(s, k) - ln_falling(g.m(), k)
}

fn keep_subset(g: &WeightedMultiGraph, keep: &[usize]) -> Result<WeightedMultiGraph> {
    let mut mark = vec![false; g.m()];
    keep.iter().for_each(|&id| mark[id] = true);
    let drop: Vec<usize> = (0..g.m()).filter(|&id| !mark[id]).collect();
    g.delete_edges(&drop)
}

/// Tree weight of uniformly random `s`-subsets of the edges (drawn without
/// replacement, weights unchanged) against the falling-factorial
/// prediction.
pub fn uniform_subset_moment_experiment<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    s: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MomentReport> {
    if s > g.m() || s == 0 {
        return Err(Error::param(format!("subset size {s} must lie in 1..={}", g.m())));
    }
    let mut seeds = Vec::with_capacity(trials);
    let mut logs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let seed: u64 = rng.gen();
        let mut trial = seeded(seed);
        let keep = index::sample(&mut trial, g.m(), s).into_vec();
        logs.push(log_tree_weight(&keep_subset(g, &keep)?).ln());
        seeds.push(seed);
    }
    MomentReport::from_logs(&logs, uniform_subset_prediction(g, s), seeds)
}

/// Exact mean of `T(H)` over every `s`-subset `H`, as a log. Refuses when
/// there are more than [`FULL_ENUMERATION_LIMIT`] subsets.
pub fn full_subset_mean(g: &WeightedMultiGraph, s: usize) -> Result<f64> {
    let m = g.m();
    if s > m {
        return Err(Error::param(format!("subset size {s} exceeds m = {m}")));
    }
    let count = binomial(m, s);
    if count > FULL_ENUMERATION_LIMIT as f64 {
        return Err(Error::param(format!("{count} subsets exceed the enumeration limit")));
    }
    let mut logs = Vec::with_capacity(count as usize);
    let mut pick: Vec<usize> = (0..s).collect();
    loop {
        logs.push(log_tree_weight(&keep_subset(g, &pick)?).ln());
        // next combination in lexicographic order
        let mut i = s;
        while i > 0 && pick[i - 1] == m - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        pick[i - 1] += 1;
        for j in i..s {
            pick[j] = pick[j - 1] + 1;
        }
    }
    let total = crate::logweight::log_sum_exp(&logs).unwrap_or(f64::NEG_INFINITY);
    Ok(total - (logs.len() as f64).ln())
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Tree weight of uniform `s`-subsets forced to contain `t_hat`, compared
/// with `T(G) p^{n-1}` for `p = s / m`. Runs with `s < 4 n^2` are flagged;
/// `s > m` is clamped to `m` and flagged.
pub fn conditional_moment_experiment<R: Rng + ?Sized>(
    g: &WeightedMultiGraph,
    t_hat: &SpanningTree,
    s: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MomentReport> {
    let n = g.n();
    let m = g.m();
    let mut flags = Vec::new();
    let mut s = s;
    if s > m {
        flags.push(format!("s = {s} exceeds m = {m}; clamped to m"));
        s = m;
    }
    if s < n - 1 {
        return Err(Error::param(format!("s = {s} cannot hold a spanning tree")));
    }
    if s < 4 * n * n {
        flags.push(format!("s = {s} is below 4 n^2 = {}", 4 * n * n));
    }
    let rest: Vec<usize> = (0..m).filter(|&id| !t_hat.contains(id)).collect();
    let extra = s - (n - 1);
    let mut seeds = Vec::with_capacity(trials);
    let mut logs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let seed: u64 = rng.gen();
        let mut trial = seeded(seed);
        let mut keep = t_hat.edges().to_vec();
        keep.extend(index::sample(&mut trial, rest.len(), extra).into_iter().map(|i| rest[i]));
        logs.push(log_tree_weight(&keep_subset(g, &keep)?).ln());
        seeds.push(seed);
    }
    let p = s as f64 / m as f64;
    let prediction = log_tree_weight(g).ln() + (n - 1) as f64 * p.ln();
    let mut report = MomentReport::from_logs(&logs, prediction, seeds)?;
    report.flags.extend(flags);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TVReport {
    pub draws: usize,
    pub support: usize,
    /// Empirical frequency of each enumerated tree, in enumeration order.
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub tv: f64,
    /// `sqrt(|support| / draws)`.
    pub mc_error: f64,
}

/// The `w`-uniform law of `g` over its enumerated trees.
pub fn tree_distribution(g: &WeightedMultiGraph) -> Result<(Vec<SpanningTree>, Vec<f64>)> {
    let trees = enumerate_spanning_trees(g)?;
    let logs: Vec<f64> = trees.iter().map(|t| t.log_weight()).collect();
    let total = crate::logweight::log_sum_exp(&logs).ok_or_else(|| Error::Disconnected)?;
    let probs = logs.iter().map(|l| (l - total).exp()).collect();
    Ok((trees, probs))
}

/// Tallies `draws` samples against the enumerated trees of `g`. A sample
/// outside the enumeration is an error.
pub fn tally<F>(g: &WeightedMultiGraph, draws: usize, mut sampler: F) -> Result<(Vec<SpanningTree>, Vec<f64>, Vec<u64>)>
where
    F: FnMut() -> Result<SpanningTree>,
{
    let (trees, probs) = tree_distribution(g)?;
    let index: HashMap<&[usize], usize> = trees.iter().enumerate().map(|(i, t)| (t.edges(), i)).collect();
    let mut counts = vec![0u64; trees.len()];
    for _ in 0..draws {
        let t = sampler()?;
        let i = *index.get(t.edges()).ok_or_else(|| Error::ContractViolation {
            stage: "tally",
            detail: format!("sampled edge set {:?} is not a spanning tree of the input", t.edges()),
        })?;
        counts[i] += 1;
    }
    Ok((trees, probs, counts))
}

/// Total variation between a sampler's empirical law and the `w`-uniform
/// distribution. The sampler receives `rng` on every draw.
pub fn tv_estimate<R, F>(g: &WeightedMultiGraph, draws: usize, rng: &mut R, mut sampler: F) -> Result<TVReport>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<SpanningTree>,
{
    if draws == 0 {
        return Err(Error::param("draws must be positive"));
    }
    let (_, exact, counts) = tally(g, draws, || sampler(rng))?;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    Ok(TVReport {
        draws,
        support: exact.len(),
        tv: total_variation(&empirical, &exact),
        mc_error: (exact.len() as f64 / draws as f64).sqrt(),
        empirical,
        exact,
    })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub pass: bool,
    /// Some cell with zero expected probability was observed.
    pub impossible: bool,
}

/// Upper `significance` quantile of chi-square with `dof` degrees of
/// freedom.
pub fn chi_square_quantile(dof: usize, significance: f64) -> f64 {
    if dof == 0 {
        return 0.0;
    }
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - significance)
}

/// Pearson goodness of fit at significance [`SIGNIFICANCE`].
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    chi_square_test_at(observed, expected, SIGNIFICANCE)
}

pub fn chi_square_test_at(observed: &[u64], expected: &[f64], significance: f64) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::param("observed and expected must be nonempty and the same length"));
    }
    let total: u64 = observed.iter().sum();
    let norm: f64 = expected.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0;
    let mut impossible = false;
    for (&o, &e) in observed.iter().zip(expected) {
        let e = e / norm * total as f64;
        if e <= 0.0 {
            impossible |= o > 0;
            continue;
        }
        cells += 1;
        statistic += (o as f64 - e).powi(2) / e;
    }
    let dof = cells.max(1) - 1;
    let critical = chi_square_quantile(dof, significance);
    Ok(ChiSquare {
        statistic,
        dof,
        critical,
        pass: !impossible && statistic <= critical,
        impossible,
    })
}

/// Per-`k` totals of `w(T1) w(T2)` over ordered tree pairs with
/// `|T1 ∩ T2| = k`, by enumeration. Needs `m <= 64`.
pub fn intersection_pair_weights(g: &WeightedMultiGraph) -> Result<Vec<f64>> {
    if g.m() > 64 {
        return Err(Error::param("intersection enumeration needs at most 64 edges"));
    }
    let trees = enumerate_spanning_trees(g)?;
    let masks: Vec<(u64, f64)> = trees
        .iter()
        .map(|t| (t.edges().iter().fold(0u64, |m, &id| m | 1 << id), t.weight()))
        .collect();
    let mut out = vec![0.0; g.n()];
    for &(a, wa) in &masks {
        for &(b, wb) in &masks {
            out[(a & b).count_ones() as usize] += wa * wb;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub k: usize,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Pair-intersection bound `sum_{|T1∩T2|=k} w(T1)w(T2) <= T(G)^2
/// (n^2/m)^k / k!`, which applies when every leverage score is at most
/// `n / m`.
pub fn intersection_pair_bound(g: &WeightedMultiGraph) -> Result<Vec<BoundCheck>> {
    let sums = intersection_pair_weights(g)?;
    let t = log_tree_weight(g).to_linear();
    let ratio = (g.n() * g.n()) as f64 / g.m() as f64;
    let mut fact = 1.0;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            if k > 0 {
                fact *= k as f64;
            }
            let bound = t * t * ratio.powi(k as i32) / fact;
            BoundCheck {
                k,
                value,
                bound,
                holds: value <= bound * (1.0 + 1e-12),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoIntersectionCheck {
    /// Weight of trees sharing exactly `k` edges with `t_hat`, for each `k`.
    pub by_overlap: Vec<f64>,
    /// `C(n-1, k) T(G) (2n/m)^k` for each `k`.
    pub per_k_bounds: Vec<f64>,
    pub disjoint_weight: f64,
    /// `(1 - sum_{k=1}^{n-1} (2n^2/m)^k) T(G)`.
    pub lower_bound: f64,
    pub holds: bool,
}

/// The no-intersection mass bound for a fixed tree `t_hat`, applicable
/// when every leverage score is at most `2n / m`.
pub fn no_intersection_bound(g: &WeightedMultiGraph, t_hat: &SpanningTree) -> Result<NoIntersectionCheck> {
    let n = g.n();
    let m = g.m() as f64;
    let trees = enumerate_spanning_trees(g)?;
    let mut by_overlap = vec![0.0; n];
    for t in &trees {
        let k = t.edges().iter().filter(|&&id| t_hat.contains(id)).count();
        by_overlap[k] += t.weight();
    }
    let total = log_tree_weight(g).to_linear();
    let per_k_bounds: Vec<f64> = (0..n)
        .map(|k| binomial(n - 1, k) * total * (2.0 * n as f64 / m).powi(k as i32))
        .collect();
    let q = 2.0 * (n * n) as f64 / m;
    let series: f64 = (1..n).map(|k| q.powi(k as i32)).sum();
    let lower_bound = (1.0 - series) * total;
    let tol = 1e-12 * total;
    let holds = by_overlap[0] >= lower_bound - tol
        && by_overlap.iter().zip(&per_k_bounds).skip(1).all(|(v, b)| *v <= b + tol);
    Ok(NoIntersectionCheck {
        disjoint_weight: by_overlap[0],
        by_overlap,
        per_k_bounds,
        lower_bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn k3_pairs_hold_exactly_one_tree() {
        let g = complete(3);
        let r = uniform_subset_moment_experiment(&g, 2, 50, &mut seeded(0)).unwrap();
        assert_relative_eq!(r.mean_ratio, 1.0, max_relative = 1e-12);
        assert!(r.mean_ratio_se < 1e-12);
        assert_relative_eq!(full_subset_mean(&g, 2).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(uniform_subset_prediction(&g, 2), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_sample_is_the_graph() {
        let g = complete(5);
        let r = uniform_subset_moment_experiment(&g, 10, 40, &mut seeded(1)).unwrap();
        assert_relative_eq!(r.mean_ratio, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.second_moment_ratio, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn moments_agree_with_direct_computation() {
        let vals = [0.5f64, 1.5, 2.0, 0.0, 3.25, 1.0];
        let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        let r = MomentReport::from_logs(&logs, 0.0, vec![]).unwrap();
        let mean = vals.iter().sum::<f64>() / 6.0;
        let m2 = vals.iter().map(|v| v * v).sum::<f64>() / 6.0;
        assert_relative_eq!(r.mean_ratio, mean, max_relative = 1e-12);
        assert_relative_eq!(r.second_moment_ratio, m2 / (mean * mean), max_relative = 1e-12);
        // shifting every value by a huge factor changes nothing
        let big: Vec<f64> = logs.iter().map(|l| l + 900.0).collect();
        let r2 = MomentReport::from_logs(&big, 900.0, vec![]).unwrap();
        assert_relative_eq!(r2.mean_ratio, r.mean_ratio, max_relative = 1e-12);
    }

    #[test]
    fn conditional_experiment_flags() {
        let k5 = complete(5);
        let t = SpanningTree::new(&k5, vec![0, 1, 2, 3]).unwrap();
        let r = conditional_moment_experiment(&k5, &t, 10, 20, &mut seeded(0)).unwrap();
        assert_relative_eq!(r.mean_ratio, 1.0, max_relative = 1e-12);
        let k6 = complete(6);
        let t = SpanningTree::new(&k6, vec![0, 1, 2, 3, 4]).unwrap();
        let r = conditional_moment_experiment(&k6, &t, 60, 20, &mut seeded(0)).unwrap();
        assert!(r.flags.iter().any(|f| f.contains("4 n^2")));
        let k4 = complete(4);
        let t = SpanningTree::new(&k4, vec![0, 1, 2]).unwrap();
        let r = conditional_moment_experiment(&k4, &t, 64, 5, &mut seeded(0)).unwrap();
        assert!(r.flags.iter().any(|f| f.contains("clamped")));
        assert_relative_eq!(r.mean_ratio, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn tv_examples() {
        let g = complete(3);
        let fixed = SpanningTree::new(&g, vec![0, 1]).unwrap();
        let r = tv_estimate(&g, 300, &mut seeded(0), |_| Ok(fixed.clone())).unwrap();
        assert_relative_eq!(r.tv, 2.0 / 3.0, max_relative = 1e-12);
        let (trees, probs) = tree_distribution(&g).unwrap();
        let r = tv_estimate(&g, 30_000, &mut seeded(1), |rng| {
            let mut x: f64 = rng.gen();
            for (t, p) in trees.iter().zip(&probs) {
                if x < *p {
                    return Ok(t.clone());
                }
                x -= p;
            }
            Ok(trees[trees.len() - 1].clone())
        })
        .unwrap();
        assert!(r.tv <= r.mc_error);
        assert_relative_eq!(r.empirical.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(tv_estimate(&g, 0, &mut seeded(0), |_| Ok(fixed.clone())).is_err());
    }

    #[test]
    fn chi_square_examples() {
        let r = chi_square_test(&[100, 200, 300], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);
        let r = chi_square_test(&[300, 0, 0], &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(r.statistic, 600.0, max_relative = 1e-12);
        assert!(!r.pass);
        let r = chi_square_test(&[5, 1], &[1.0, 0.0]).unwrap();
        assert!(r.impossible && !r.pass);
    }

    #[test]
    fn chi_square_quantiles_match_tables() {
        // upper 0.1% points of chi-square
        assert_relative_eq!(chi_square_quantile(1, 1e-3), 10.828, max_relative = 1e-3);
        assert_relative_eq!(chi_square_quantile(10, 1e-3), 29.588, max_relative = 1e-3);
        assert_relative_eq!(chi_square_quantile(100, 1e-3), 149.449, max_relative = 1e-3);
    }

    #[test]
    fn enumerated_bounds_on_small_complete_graphs() {
        for n in 3..=5 {
            let g = complete(n);
            assert!(intersection_pair_bound(&g).unwrap().iter().all(|c| c.holds));
            let t = enumerate_spanning_trees(&g).unwrap()[0].clone();
            assert!(no_intersection_bound(&g, &t).unwrap().holds);
        }
        let sums = intersection_pair_weights(&complete(4)).unwrap();
        assert_relative_eq!(sums.iter().sum::<f64>(), 256.0);
        assert_eq!(sums[3], 16.0);
    }
}
