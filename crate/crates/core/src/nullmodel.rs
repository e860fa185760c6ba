//! Closed-form predictions for the rewired null networks and their
//! Monte-Carlo verification.
//!
//! The printed derivation carries the undirected configuration-model stub
//! convention with mean out-degree `2m / n_c`; the directed-bipartite
//! recount of the same stratum gives `m / n_c`. Both constants are exposed
//! and the empirical co-citation check arbitrates which one matches the
//! rewiring algorithm, rather than silently fixing either.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CitationGraph, NodeId};
use crate::metrics::{cd_index, cd_components, MetricConfig};
use crate::rewire;

#[derive(Debug, Error)]
pub enum NullModelError {
    #[error("cited year {cited} is later than citing year {citing}")]
    InvalidYearPair { cited: i32, citing: i32 },
    #[error("stratum has no edges (m = 0)")]
    EmptyStratum,
    #[error("mean out-degree is zero")]
    ZeroMeanDegree,
    #[error("limiting CD denominator is zero")]
    ZeroDenominator,
}

/// Edge count and out-degree moments for one (cited year, citing year)
/// stratum. `mean_b_sq` is the plain second moment of the in-stratum
/// out-degree over all works published in the citing year, including works
/// that make no citations into the cited year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumMoments {
    pub cited_year: i32,
    pub citing_year: i32,
    /// m: edges from citing_year into cited_year.
    pub edge_count: u64,
    /// n_c: works published in citing_year.
    pub citing_work_count: u64,
    /// 2m / n_c, the printed stub-counting convention.
    pub mean_b_printed: f64,
    /// m / n_c, the directed-bipartite recount.
    pub mean_b_recount: f64,
    /// Second moment of the in-stratum out-degree.
    pub mean_b_sq: f64,
}

/// Which mean out-degree constant to plug into the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeConvention {
    /// `<b> = 2m / n_c` exactly as printed.
    Printed,
    /// `<b> = m / n_c` from the directed recount.
    Bipartite,
}

impl StratumMoments {
    pub fn mean_b(&self, convention: DegreeConvention) -> f64 {
        match convention {
            DegreeConvention::Printed => self.mean_b_printed,
            DegreeConvention::Bipartite => self.mean_b_recount,
        }
    }
}

/// Moments over works published in `citing_year` and their citations into
/// `cited_year`. An empty citing year yields zero counts and zero moments.
pub fn stratum_moments(
    graph: &CitationGraph,
    cited_year: i32,
    citing_year: i32,
) -> Result<StratumMoments, NullModelError> {
    if cited_year > citing_year {
        return Err(NullModelError::InvalidYearPair {
            cited: cited_year,
            citing: citing_year,
        });
    }
    let citing_works = graph.works_in_year(citing_year);
    let n_c = citing_works.len() as u64;
    let mut m = 0u64;
    let mut sq_sum = 0f64;
    for &w in citing_works {
        let b = graph
            .references(w)
            .iter()
            .filter(|&&r| graph.year_of(r) == cited_year)
            .count() as u64;
        m += b;
        sq_sum += (b * b) as f64;
    }
    let (mean_b_printed, mean_b_recount, mean_b_sq) = if n_c == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (
            2.0 * m as f64 / n_c as f64,
            m as f64 / n_c as f64,
            sq_sum / n_c as f64,
        )
    };
    Ok(StratumMoments {
        cited_year,
        citing_year,
        edge_count: m,
        citing_work_count: n_c,
        mean_b_printed,
        mean_b_recount,
        mean_b_sq,
    })
}

/// The printed connection probability `c_i * b_j / (2m)`. Values above one
/// are reported as out-of-regime, never clamped: the linear form only holds
/// in the sparse large-m regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbability {
    pub value: f64,
    pub out_of_regime: bool,
}

pub fn edge_probability(
    in_degree: u64,
    out_degree: u64,
    stratum_edges: u64,
) -> Result<EdgeProbability, NullModelError> {
    if stratum_edges == 0 {
        return Err(NullModelError::EmptyStratum);
    }
    let value = (in_degree as f64) * (out_degree as f64) / (2.0 * stratum_edges as f64);
    Ok(EdgeProbability {
        value,
        out_of_regime: value > 1.0,
    })
}

/// Probability that some citing-year work co-cites two cited-year works with
/// in-degrees `c_i` and `c_h`:
/// `(c_i * c_h / (<b> n_c)) * (<b^2> - <b>) / <b>`.
pub fn cocitation_probability(
    c_i: u64,
    c_h: u64,
    moments: &StratumMoments,
    convention: DegreeConvention,
) -> Result<f64, NullModelError> {
    let mean_b = moments.mean_b(convention);
    if mean_b <= 0.0 || moments.citing_work_count == 0 {
        return Err(NullModelError::ZeroMeanDegree);
    }
    let pair = (c_i as f64) * (c_h as f64);
    Ok(pair / (mean_b * moments.citing_work_count as f64) * (moments.mean_b_sq - mean_b)
        / mean_b)
}

/// Large-network limit of the CD index in a rewired graph:
/// `n_I / (n_I + sum of citations received by the focal references)`.
pub fn limiting_cd(n_i: u64, ref_citation_sum: u64) -> Result<f64, NullModelError> {
    let denom = n_i + ref_citation_sum;
    if denom == 0 {
        return Err(NullModelError::ZeroDenominator);
    }
    Ok(n_i as f64 / denom as f64)
}

/// One (c_low, c_high) in-degree bucket of the co-citation check. The
/// empirical rate counts co-citation events per cited-pair per draw; its
/// binomial standard error uses the same trial count. Buckets whose expected
/// event count under the bipartite convention is below 10 are reported but
/// not scored (the normal approximation has no power there).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocitationBucket {
    pub c_low: u64,
    pub c_high: u64,
    pub n_pairs: u64,
    pub events: u64,
    pub empirical: f64,
    pub se_empirical: f64,
    pub predicted_printed: f64,
    pub predicted_bipartite: f64,
    pub expected_events_bipartite: f64,
    pub scored: bool,
    pub pass_printed: bool,
    pub pass_bipartite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocitationReport {
    pub moments: StratumMoments,
    pub draws: u32,
    pub swaps_per_edge: f64,
    pub seed: u64,
    pub buckets: Vec<CocitationBucket>,
    pub scored_buckets: usize,
    pub pass_share_printed: f64,
    pub pass_share_bipartite: f64,
    /// Convention with >= 95% of scored buckets inside 3 standard errors,
    /// preferring the bipartite recount when both qualify.
    pub matched_convention: Option<DegreeConvention>,
}

/// Rewires one stratum `draws` times and compares per-bucket empirical
/// co-citation rates against both analytic conventions.
pub fn verify_cocitation(
    graph: &CitationGraph,
    cited_year: i32,
    citing_year: i32,
    draws: u32,
    swaps_per_edge: f64,
    seed: u64,
) -> Result<CocitationReport, NullModelError> {
    let moments = stratum_moments(graph, cited_year, citing_year)?;
    if moments.edge_count == 0 {
        return Err(NullModelError::EmptyStratum);
    }

    let stratum_edges: Vec<(NodeId, NodeId)> = graph
        .edges()
        .filter(|&(src, dst)| {
            graph.year_of(src) == citing_year && graph.year_of(dst) == cited_year
        })
        .collect();

    // in-stratum in-degree per cited work; preserved by every draw
    let mut in_degree: HashMap<NodeId, u64> = HashMap::new();
    for &(_, dst) in &stratum_edges {
        *in_degree.entry(dst).or_insert(0) += 1;
    }
    let mut degree_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in in_degree.values() {
        *degree_counts.entry(c).or_insert(0) += 1;
    }

    let attempts = (swaps_per_edge * stratum_edges.len() as f64).ceil() as u64;
    let stratum_key = (citing_year, cited_year);
    let events: BTreeMap<(u64, u64), u64> = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let mut edges = stratum_edges.clone();
            let mut rng = rewire::stream_rng(seed, draw, stratum_key);
            rewire::rewire_stratum(&mut edges, attempts, &mut rng);
            let mut refs_by_citer: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
            for (src, dst) in edges {
                refs_by_citer.entry(src).or_default().push(dst);
            }
            let mut local: BTreeMap<(u64, u64), u64> = BTreeMap::new();
            for refs in refs_by_citer.values() {
                for i in 0..refs.len() {
                    for j in (i + 1)..refs.len() {
                        let a = in_degree[&refs[i]];
                        let b = in_degree[&refs[j]];
                        let key = (a.min(b), a.max(b));
                        *local.entry(key).or_insert(0) += 1;
                    }
                }
            }
            local
        })
        .reduce(BTreeMap::new, |mut acc, local| {
            for (key, count) in local {
                *acc.entry(key).or_insert(0) += count;
            }
            acc
        });

    let mut buckets = Vec::new();
    let degrees: Vec<u64> = degree_counts.keys().copied().collect();
    for (ai, &c_low) in degrees.iter().enumerate() {
        for &c_high in &degrees[ai..] {
            let n_low = degree_counts[&c_low];
            let n_high = degree_counts[&c_high];
            let n_pairs = if c_low == c_high {
                n_low * (n_low - 1) / 2
            } else {
                n_low * n_high
            };
            if n_pairs == 0 {
                continue;
            }
            let trials = (n_pairs as f64) * (draws as f64);
            let observed = events.get(&(c_low, c_high)).copied().unwrap_or(0);
            let empirical = observed as f64 / trials;
            let se_empirical = (empirical * (1.0 - empirical) / trials).max(0.0).sqrt();
            let predicted_printed =
                cocitation_probability(c_low, c_high, &moments, DegreeConvention::Printed)?;
            let predicted_bipartite =
                cocitation_probability(c_low, c_high, &moments, DegreeConvention::Bipartite)?;
            let expected_events_bipartite = predicted_bipartite * trials;
            let scored = expected_events_bipartite >= 10.0;
            let pass = |predicted: f64| (empirical - predicted).abs() <= 3.0 * se_empirical;
            buckets.push(CocitationBucket {
                c_low,
                c_high,
                n_pairs,
                events: observed,
                empirical,
                se_empirical,
                predicted_printed,
                predicted_bipartite,
                expected_events_bipartite,
                scored,
                pass_printed: pass(predicted_printed),
                pass_bipartite: pass(predicted_bipartite),
            });
        }
    }

    let scored: Vec<&CocitationBucket> = buckets.iter().filter(|b| b.scored).collect();
    let share = |f: fn(&CocitationBucket) -> bool| {
        if scored.is_empty() {
            0.0
        } else {
            scored.iter().filter(|b| f(b)).count() as f64 / scored.len() as f64
        }
    };
    let pass_share_printed = share(|b| b.pass_printed);
    let pass_share_bipartite = share(|b| b.pass_bipartite);
    let matched_convention = if pass_share_bipartite >= 0.95 {
        Some(DegreeConvention::Bipartite)
    } else if pass_share_printed >= 0.95 {
        Some(DegreeConvention::Printed)
    } else {
        None
    };

    Ok(CocitationReport {
        moments,
        draws,
        swaps_per_edge,
        seed,
        scored_buckets: scored.len(),
        buckets,
        pass_share_printed,
        pass_share_bipartite,
        matched_convention,
    })
}

/// Mean absolute deviation between per-work CD in a rewired replicate and
/// the analytic limit computed from that replicate's structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitingCdCheck {
    pub works_compared: usize,
    pub mean_abs_deviation: f64,
}

pub fn limiting_cd_deviation(
    replicate: &CitationGraph,
    config: &MetricConfig,
) -> LimitingCdCheck {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..replicate.num_nodes() as u32 {
        let node = NodeId(i);
        let components = cd_components(replicate, node, config);
        let Some(cd) = cd_index(&components) else {
            continue;
        };
        let focal_year = replicate.year_of(node);
        let lo = if config.include_same_year {
            focal_year
        } else {
            focal_year + 1
        };
        let hi = focal_year + config.window_years as i32;
        let ref_citation_sum: u64 = replicate
            .references(node)
            .iter()
            .map(|&r| {
                replicate
                    .citers(r)
                    .iter()
                    .filter(|&&w| {
                        let y = replicate.year_of(w);
                        w != node && y >= lo && y <= hi
                    })
                    .count() as u64
            })
            .sum();
        let n_i = (components.n_i + components.n_j) as u64;
        let Ok(limit) = limiting_cd(n_i, ref_citation_sum) else {
            continue;
        };
        total += (cd - limit).abs();
        count += 1;
    }
    LimitingCdCheck {
        works_compared: count,
        mean_abs_deviation: if count == 0 { 0.0 } else { total / count as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LoadPolicy, WorkNode};

    fn stratum_fixture() -> CitationGraph {
        // 4 citing works in 2001, each making 2 cites into 2000
        let mut nodes = Vec::new();
        for i in 0..4 {
            nodes.push(WorkNode::new(format!("cited{i}"), 2000));
            nodes.push(WorkNode::new(format!("citer{i}"), 2001));
        }
        let mut edges = Vec::new();
        for i in 0..4 {
            edges.push((format!("citer{i}"), format!("cited{}", i % 4)));
            edges.push((format!("citer{i}"), format!("cited{}", (i + 1) % 4)));
        }
        CitationGraph::from_parts(nodes, edges, &LoadPolicy::strict()).unwrap()
    }

    #[test]
    fn moments_use_both_conventions() {
        let g = stratum_fixture();
        let m = stratum_moments(&g, 2000, 2001).unwrap();
        assert_eq!(m.edge_count, 8);
        assert_eq!(m.citing_work_count, 4);
        assert_eq!(m.mean_b_printed, 4.0);
        assert_eq!(m.mean_b_recount, 2.0);
        assert_eq!(m.mean_b_sq, 4.0);
    }

    #[test]
    fn moments_empty_stratum() {
        let g = stratum_fixture();
        let m = stratum_moments(&g, 1990, 1995).unwrap();
        assert_eq!(m.edge_count, 0);
        assert_eq!(m.citing_work_count, 0);
        assert_eq!(m.mean_b_printed, 0.0);
        assert!(matches!(
            stratum_moments(&g, 2002, 2001),
            Err(NullModelError::InvalidYearPair { .. })
        ));
    }

    #[test]
    fn moments_match_recount() {
        let g = stratum_fixture();
        let m = stratum_moments(&g, 2000, 2001).unwrap();
        // flat recount over the raw edge list
        let mut count = 0u64;
        for (src, dst) in g.edges() {
            if g.year_of(src) == 2001 && g.year_of(dst) == 2000 {
                count += 1;
            }
        }
        assert_eq!(m.edge_count, count);
        assert_eq!(m.mean_b_recount * m.citing_work_count as f64, count as f64);
    }

    #[test]
    fn edge_probability_values() {
        assert_eq!(edge_probability(0, 5, 100).unwrap().value, 0.0);
        let p = edge_probability(2, 3, 100).unwrap();
        assert_eq!(p.value, 0.03);
        assert!(!p.out_of_regime);
        let extreme = edge_probability(30, 10, 100).unwrap();
        assert!(extreme.value > 1.0);
        assert!(extreme.out_of_regime);
        assert!(matches!(
            edge_probability(2, 3, 0),
            Err(NullModelError::EmptyStratum)
        ));
    }

    #[test]
    fn cocitation_zero_cases() {
        let g = stratum_fixture();
        let m = stratum_moments(&g, 2000, 2001).unwrap();
        assert_eq!(
            cocitation_probability(0, 7, &m, DegreeConvention::Bipartite).unwrap(),
            0.0
        );
        // every citer makes exactly one citation: <b^2> = <b> under the
        // recount convention, so no work can co-cite two papers
        let single = StratumMoments {
            cited_year: 2000,
            citing_year: 2001,
            edge_count: 4,
            citing_work_count: 4,
            mean_b_printed: 2.0,
            mean_b_recount: 1.0,
            mean_b_sq: 1.0,
        };
        assert_eq!(
            cocitation_probability(3, 5, &single, DegreeConvention::Bipartite).unwrap(),
            0.0
        );
    }

    #[test]
    fn cocitation_symmetric_and_nonnegative_under_recount() {
        let g = stratum_fixture();
        let m = stratum_moments(&g, 2000, 2001).unwrap();
        for (a, b) in [(1u64, 4u64), (2, 2), (3, 7)] {
            let p1 = cocitation_probability(a, b, &m, DegreeConvention::Bipartite).unwrap();
            let p2 = cocitation_probability(b, a, &m, DegreeConvention::Bipartite).unwrap();
            assert_eq!(p1, p2);
            assert!(p1 >= 0.0);
        }
    }

    #[test]
    fn limiting_cd_values() {
        assert_eq!(limiting_cd(5, 0).unwrap(), 1.0);
        assert_eq!(limiting_cd(0, 7).unwrap(), 0.0);
        assert_eq!(limiting_cd(3, 9).unwrap(), 0.25);
        assert!(matches!(
            limiting_cd(0, 0),
            Err(NullModelError::ZeroDenominator)
        ));
    }

    #[test]
    fn limiting_cd_always_in_unit_interval() {
        for n_i in 0..20u64 {
            for s in 0..20u64 {
                if n_i + s == 0 {
                    continue;
                }
                let v = limiting_cd(n_i, s).unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
