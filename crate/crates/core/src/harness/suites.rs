//! Named experiment suites behind `detspar validate`. Each check reports
//! its statistics and the seeds it consumed.

use super::*;
use crate::graph::generators::{complete, cycle, random_connected_weighted, with_chords};
use crate::rng::{derive_seed, DetRng};
use crate::sparsify::{default_samples, Sparsifier, CRUDE_EPS};
use crate::trees::{approx_tree, exact_tree, WilsonSampler};
use serde_json::{json, Value};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Moments,
    Tv,
    Conditional,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Moments, Suite::Tv, Suite::Conditional];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Suite::Moments),
            "tv" => Ok(Suite::Tv),
            "conditional" => Ok(Suite::Conditional),
            other => Err(Error::param(format!("unknown suite {other:?}"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Moments => "moments",
            Suite::Tv => "tv",
            Suite::Conditional => "conditional",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub suite: Suite,
    pub name: String,
    pub pass: bool,
    pub statistics: Value,
    pub seeds: Vec<u64>,
}

fn outcome(suite: Suite, name: &str, pass: bool, statistics: Value, seeds: Vec<u64>) -> CheckOutcome {
    CheckOutcome {
        suite,
        name: name.to_string(),
        pass,
        statistics,
        seeds,
    }
}

/// Draws used by the tree-distribution checks of the `tv` suite.
pub const TV_DRAWS: usize = 20_000;

/// Allowed total variation of `approx_tree` on the six-cycle with two
/// chords at `delta = 0.05`, before Monte Carlo slack.
pub const APPROX_TV_BUDGET: f64 = 0.25;

/// Runs every check of `suite`. Check `i` of the suite draws from the
/// stream `derive_seed(seed, i)`.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckOutcome>> {
    match suite {
        Suite::Moments => moments(seed),
        Suite::Tv => tv(seed),
        Suite::Conditional => conditional(seed),
    }
}

fn stream(seed: u64, i: u64) -> (u64, DetRng) {
    let s = derive_seed(seed, i);
    (s, seeded(s))
}

fn moments(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let (_, mut rng) = stream(seed, 0);
    let r = uniform_subset_moment_experiment(&complete(10), 30, 2000, &mut rng)?;
    let pass = (r.mean_ratio - 1.0).abs() <= SIGMA_BAND * r.mean_ratio_se;
    let seeds = r.seeds.clone();
    out.push(outcome(Suite::Moments, "uniform_subset_k10_s30", pass, json!(r), seeds));

    let g = complete(5);
    let exact = full_subset_mean(&g, 6)?;
    let predicted = uniform_subset_prediction(&g, 6);
    let pass = ((exact - predicted).exp() - 1.0).abs() <= 1e-12;
    out.push(outcome(
        Suite::Moments,
        "uniform_subset_k5_s6_enumerated",
        pass,
        json!({ "mean_ln": exact, "prediction_ln": predicted }),
        Vec::new(),
    ));

    let (s0, mut rng) = stream(seed, 2);
    let g = complete(16);
    let s = default_samples(16, 1.0);
    let mut sp = Sparsifier::new(&g, 0.0, &mut rng)?;
    let mut logs = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let (h, _) = sp.sample(s, CRUDE_EPS, &mut rng)?;
        logs.push(log_tree_weight(&h).ln());
    }
    let r = MomentReport::from_logs(&logs, log_tree_weight(&g).ln(), vec![s0])?;
    let pass = r.mean_within(0.9, 1.1) && r.second_moment_below(1.1);
    out.push(outcome(Suite::Moments, "det_sparsify_k16", pass, json!({ "samples": s, "report": r }), vec![s0]));
    Ok(out)
}

fn tv(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let (s0, mut rng) = stream(seed, 0);
    let g = random_connected_weighted(5, 0.7, &mut rng);

    let (_, probs, counts) = tally(&g, TV_DRAWS, || exact_tree(&g, &mut rng))?;
    let chi = chi_square_test(&counts, &probs)?;
    out.push(outcome(Suite::Tv, "exact_tree_chi_square", chi.pass, json!(chi), vec![s0]));

    let wilson = WilsonSampler::new(&g)?;
    let (_, probs, counts) = tally(&g, TV_DRAWS, || wilson.sample(&g, &mut rng))?;
    let chi = chi_square_test(&counts, &probs)?;
    out.push(outcome(Suite::Tv, "wilson_tree_chi_square", chi.pass, json!(chi), vec![s0]));

    let (s1, mut rng) = stream(seed, 1);
    let g = with_chords(&cycle(6), &[(0, 3), (1, 4)]);
    let delta = 0.05;
    let mut depth = 0;
    let report = tv_estimate(&g, TV_DRAWS, &mut rng, |rng| {
        let (t, stats) = approx_tree(&g, delta, g.n(), rng)?;
        depth = depth.max(stats.depth);
        Ok(t)
    })?;
    let pass = report.tv <= APPROX_TV_BUDGET + 3.0 * report.mc_error;
    out.push(outcome(
        Suite::Tv,
        "approx_tree_tv",
        pass,
        json!({ "tv": report.tv, "mc_error": report.mc_error, "budget": APPROX_TV_BUDGET, "levels": depth, "draws": report.draws }),
        vec![s1],
    ));
    Ok(out)
}

fn conditional(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let star = |g: &WeightedMultiGraph| SpanningTree::new(g, g.incident(0).to_vec());

    let g = complete(5);
    let (s0, mut rng) = stream(seed, 0);
    let r = conditional_moment_experiment(&g, &star(&g)?, g.m(), 50, &mut rng)?;
    let pass = (r.mean_ratio - 1.0).abs() <= 1e-9;
    out.push(outcome(Suite::Conditional, "conditional_k5_full", pass, json!(r), vec![s0]));

    let g = complete(6);
    let (s1, mut rng) = stream(seed, 1);
    let r = conditional_moment_experiment(&g, &star(&g)?, 10, 2000, &mut rng)?;
    // informational: every K_n run is below the 4 n^2 regime and flagged
    let pass = r.mean_ratio.is_finite() && r.second_moment_ratio.is_finite();
    out.push(outcome(Suite::Conditional, "conditional_k6_s10", pass, json!(r), vec![s1]));

    for n in 3..=7 {
        let g = complete(n);
        let pairs = intersection_pair_bound(&g)?;
        let pass = pairs.iter().all(|c| c.holds);
        out.push(outcome(Suite::Conditional, &format!("intersection_pairs_k{n}"), pass, json!(pairs), Vec::new()));
        let check = no_intersection_bound(&g, &star(&g)?)?;
        out.push(outcome(Suite::Conditional, &format!("no_intersection_k{n}"), check.holds, json!(check), Vec::new()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn conditional_suite_passes() {
        let a = run_suite(Suite::Conditional, 3).unwrap();
        assert!(a.iter().all(|c| c.pass), "{a:?}");
        assert_eq!(a, run_suite(Suite::Conditional, 3).unwrap());
    }
}
