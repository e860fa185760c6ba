//! Degree- and year-stratum-preserving null networks.
//!
//! Edges are partitioned into strata by (citing year, cited year) and
//! shuffled with double-edge swaps inside each stratum. A swap exchanges the
//! targets of two edges and is rejected if it would create a self-loop or a
//! duplicate, so every replicate preserves all in-degrees, all out-degrees,
//! and every stratum's edge count exactly. Two identical edges always share
//! a stratum, so the per-stratum duplicate check is global.
//!
//! RNG streams derive from (seed, replicate, stratum), making replicates and
//! strata independent jobs with results that do not depend on scheduling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{CitationGraph, NodeId};
use crate::metrics::{compute_all, MetricConfig, MetricsTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    pub replicates: u32,
    /// Swap attempts per stratum edge (mixing knob).
    pub swaps_per_edge: f64,
    pub seed: u64,
}

impl Default for RewireConfig {
    fn default() -> Self {
        RewireConfig {
            replicates: 10,
            swaps_per_edge: 10.0,
            seed: 0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream_rng(seed: u64, replicate: u32, stratum: (i32, i32)) -> ChaCha8Rng {
    let s = splitmix64(seed);
    let s = splitmix64(s ^ replicate as u64);
    let key = ((stratum.0 as u32 as u64) << 32) | stratum.1 as u32 as u64;
    ChaCha8Rng::seed_from_u64(splitmix64(s ^ key))
}

/// Double-edge swaps within one stratum's edge list. Strata with fewer than
/// two edges pass through unchanged.
pub(crate) fn rewire_stratum(
    edges: &mut [(NodeId, NodeId)],
    attempts: u64,
    rng: &mut impl Rng,
) {
    let n = edges.len();
    if n < 2 {
        return;
    }
    let mut present: HashSet<(NodeId, NodeId)> = edges.iter().copied().collect();
    for _ in 0..attempts {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let (a, x) = edges[i];
        let (b, y) = edges[j];
        // reject self-loops; duplicate membership also rejects the
        // degenerate a == b and x == y proposals
        if a == y || b == x {
            continue;
        }
        if present.contains(&(a, y)) || present.contains(&(b, x)) {
            continue;
        }
        present.remove(&(a, x));
        present.remove(&(b, y));
        present.insert((a, y));
        present.insert((b, x));
        edges[i] = (a, y);
        edges[j] = (b, x);
    }
}

fn stratify(graph: &CitationGraph) -> BTreeMap<(i32, i32), Vec<(NodeId, NodeId)>> {
    let mut strata: BTreeMap<(i32, i32), Vec<(NodeId, NodeId)>> = BTreeMap::new();
    for (src, dst) in graph.edges() {
        let key = (graph.year_of(src), graph.year_of(dst));
        strata.entry(key).or_default().push((src, dst));
    }
    strata
}

/// One rewired copy of the graph, deterministic in (seed, replicate_index).
pub fn rewire(graph: &CitationGraph, config: &RewireConfig, replicate_index: u32) -> CitationGraph {
    let strata: Vec<((i32, i32), Vec<(NodeId, NodeId)>)> =
        stratify(graph).into_iter().collect();
    let rewired: Vec<Vec<(NodeId, NodeId)>> = strata
        .into_par_iter()
        .map(|(key, mut edges)| {
            let attempts = (config.swaps_per_edge * edges.len() as f64).ceil() as u64;
            let mut rng = stream_rng(config.seed, replicate_index, key);
            rewire_stratum(&mut edges, attempts, &mut rng);
            edges
        })
        .collect();
    let edges: Vec<(NodeId, NodeId)> = rewired.into_iter().flatten().collect();
    CitationGraph::from_trusted_edges(graph.nodes().to_vec(), edges)
}

/// The per-work quantities tracked across an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    NI,
    NJ,
    NK,
    Cd,
    CdNok,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::NI,
        Quantity::NJ,
        Quantity::NK,
        Quantity::Cd,
        Quantity::CdNok,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::NI => "n_i",
            Quantity::NJ => "n_j",
            Quantity::NK => "n_k",
            Quantity::Cd => "cd",
            Quantity::CdNok => "cd_nok",
        }
    }
}

/// Mean and sample standard deviation over the replicate values that were
/// defined; `sd` needs at least two defined values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n_defined: u32,
}

fn summarize(values: &[Option<f64>]) -> EnsembleStat {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let n = defined.len() as u32;
    if n == 0 {
        return EnsembleStat::default();
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let sd = if n >= 2 {
        let ss: f64 = defined.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some((ss / (n as f64 - 1.0)).sqrt())
    } else {
        None
    };
    EnsembleStat {
        mean: Some(mean),
        sd,
        n_defined: n,
    }
}

/// Per-work summary over all replicates, aligned with [`RewireEnsemble::ids`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkSummary {
    pub n_i: EnsembleStat,
    pub n_j: EnsembleStat,
    pub n_k: EnsembleStat,
    pub cd: EnsembleStat,
    pub cd_nok: EnsembleStat,
}

impl WorkSummary {
    pub fn stat(&self, q: Quantity) -> &EnsembleStat {
        match q {
            Quantity::NI => &self.n_i,
            Quantity::NJ => &self.n_j,
            Quantity::NK => &self.n_k,
            Quantity::Cd => &self.cd,
            Quantity::CdNok => &self.cd_nok,
        }
    }
}

/// Metric values for every work across K independently rewired replicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewireEnsemble {
    pub replicates: u32,
    /// Work ids, sorted; rows of `values` align with this.
    pub ids: Vec<String>,
    /// `values[work][replicate][quantity]`, quantity order per [`Quantity::ALL`].
    pub values: Vec<Vec<[Option<f64>; 5]>>,
    pub summaries: Vec<WorkSummary>,
}

/// Rewires K replicates and computes metrics on each. Replicates run
/// sequentially (each internally parallel) so output is identical for any
/// worker count.
pub fn build_ensemble(
    graph: &CitationGraph,
    config: &RewireConfig,
    metric_config: &MetricConfig,
) -> RewireEnsemble {
    let baseline = compute_all(graph, metric_config);
    let ids: Vec<String> = baseline.records.iter().map(|r| r.id.clone()).collect();
    let mut values: Vec<Vec<[Option<f64>; 5]>> =
        vec![Vec::with_capacity(config.replicates as usize); ids.len()];
    for replicate in 0..config.replicates {
        let copy = rewire(graph, config, replicate);
        let table = compute_all(&copy, metric_config);
        debug_assert_eq!(table.records.len(), ids.len());
        for (work, record) in table.records.iter().enumerate() {
            debug_assert_eq!(record.id, ids[work]);
            values[work].push([
                Some(record.components.n_i as f64),
                Some(record.components.n_j as f64),
                Some(record.components.n_k as f64),
                record.cd,
                record.cd_nok,
            ]);
        }
    }
    let summaries = values
        .iter()
        .map(|rows| {
            let col = |q: usize| -> Vec<Option<f64>> { rows.iter().map(|r| r[q]).collect() };
            WorkSummary {
                n_i: summarize(&col(0)),
                n_j: summarize(&col(1)),
                n_k: summarize(&col(2)),
                cd: summarize(&col(3)),
                cd_nok: summarize(&col(4)),
            }
        })
        .collect();
    RewireEnsemble {
        replicates: config.replicates,
        ids,
        values,
        summaries,
    }
}

/// `(observed - random_mean) / random_sd`; undefined when the ensemble sd is
/// zero rather than +/- infinity.
pub fn zscore(observed: f64, random_mean: f64, random_sd: f64) -> Option<f64> {
    if random_sd > 0.0 && random_sd.is_finite() {
        Some((observed - random_mean) / random_sd)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantityScore {
    pub observed: Option<f64>,
    pub random_mean: Option<f64>,
    pub random_sd: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreRecord {
    pub id: String,
    pub year: i32,
    pub zero_bcite: bool,
    pub n_i: QuantityScore,
    pub n_j: QuantityScore,
    pub n_k: QuantityScore,
    pub cd: QuantityScore,
    pub cd_nok: QuantityScore,
}

impl ZScoreRecord {
    pub fn score(&self, q: Quantity) -> &QuantityScore {
        match q {
            Quantity::NI => &self.n_i,
            Quantity::NJ => &self.n_j,
            Quantity::NK => &self.n_k,
            Quantity::Cd => &self.cd,
            Quantity::CdNok => &self.cd_nok,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZScoreOptions {
    /// Omit 0-bcite works from the output entirely.
    pub exclude_zero_bcite: bool,
}

/// Per-work z-scores of observed metrics and components against the
/// ensemble. The ensemble must have been built from the same graph and
/// metric config.
pub fn component_zscores(
    graph: &CitationGraph,
    ensemble: &RewireEnsemble,
    metric_config: &MetricConfig,
    options: &ZScoreOptions,
) -> Vec<ZScoreRecord> {
    let observed: MetricsTable = compute_all(graph, metric_config);
    observed
        .records
        .iter()
        .zip(ensemble.ids.iter().zip(ensemble.summaries.iter()))
        .filter(|(record, (id, _))| {
            debug_assert_eq!(&record.id, *id);
            !(options.exclude_zero_bcite && record.zero_bcite)
        })
        .map(|(record, (_, summary))| {
            let quantify = |q: Quantity| -> QuantityScore {
                let observed = match q {
                    Quantity::NI => Some(record.components.n_i as f64),
                    Quantity::NJ => Some(record.components.n_j as f64),
                    Quantity::NK => Some(record.components.n_k as f64),
                    Quantity::Cd => record.cd,
                    Quantity::CdNok => record.cd_nok,
                };
                let stat = summary.stat(q);
                let z = match (observed, stat.mean, stat.sd) {
                    (Some(o), Some(m), Some(s)) => zscore(o, m, s),
                    _ => None,
                };
                QuantityScore {
                    observed,
                    random_mean: stat.mean,
                    random_sd: stat.sd,
                    z,
                }
            };
            ZScoreRecord {
                id: record.id.clone(),
                year: record.year,
                zero_bcite: record.zero_bcite,
                n_i: quantify(Quantity::NI),
                n_j: quantify(Quantity::NJ),
                n_k: quantify(Quantity::NK),
                cd: quantify(Quantity::Cd),
                cd_nok: quantify(Quantity::CdNok),
            }
        })
        .collect()
}

/// Long-format serialization: id, quantity, observed, random_mean,
/// random_sd, z. Undefined values are empty fields.
pub fn write_zscores<W: Write>(
    records: &[ZScoreRecord],
    writer: W,
    delimiter: u8,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    w.write_record(["id", "quantity", "observed", "random_mean", "random_sd", "z"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for record in records {
        for q in Quantity::ALL {
            let score = record.score(q);
            w.write_record([
                record.id.as_str(),
                q.as_str(),
                &fmt(score.observed),
                &fmt(score.random_mean),
                &fmt(score.random_sd),
                &fmt(score.z),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Recounts (in-degree, out-degree, stratum sizes) - the invariants every
/// replicate must preserve exactly.
pub fn preservation_check(observed: &CitationGraph, replicate: &CitationGraph) -> bool {
    if observed.num_nodes() != replicate.num_nodes()
        || observed.num_edges() != replicate.num_edges()
    {
        return false;
    }
    for i in 0..observed.num_nodes() as u32 {
        let node = NodeId(i);
        if observed.in_degree(node) != replicate.in_degree(node)
            || observed.out_degree(node) != replicate.out_degree(node)
        {
            return false;
        }
    }
    let strata = |g: &CitationGraph| -> HashMap<(i32, i32), usize> {
        let mut counts = HashMap::new();
        for (src, dst) in g.edges() {
            *counts.entry((g.year_of(src), g.year_of(dst))).or_insert(0) += 1;
        }
        counts
    };
    strata(observed) == strata(replicate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LoadPolicy, WorkNode};
    use rand::SeedableRng;

    fn graph(nodes: Vec<(&str, i32)>, edges: Vec<(&str, &str)>) -> CitationGraph {
        let nodes = nodes
            .into_iter()
            .map(|(id, y)| WorkNode::new(id, y))
            .collect();
        let edges = edges
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        CitationGraph::from_parts(nodes, edges, &LoadPolicy::strict()).unwrap()
    }

    #[test]
    fn single_edge_stratum_unchanged() {
        let g = graph(vec![("a", 2001), ("x", 2000)], vec![("a", "x")]);
        let r = rewire(&g, &RewireConfig::default(), 0);
        let edges: Vec<_> = r.edges().collect();
        assert_eq!(edges.len(), 1);
        assert!(preservation_check(&g, &r));
        assert_eq!(
            r.node(edges[0].0).id,
            "a",
            "one-edge stratum has no swap partner"
        );
    }

    #[test]
    fn swap_primitive_exchanges_targets() {
        let a = NodeId(0);
        let b = NodeId(1);
        let x = NodeId(2);
        let y = NodeId(3);
        let mut edges = vec![(a, x), (b, y)];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // with two edges every accepted proposal is the full swap
        rewire_stratum(&mut edges, 1, &mut rng);
        let set: HashSet<_> = edges.iter().copied().collect();
        assert!(
            set == HashSet::from([(a, y), (b, x)]) || set == HashSet::from([(a, x), (b, y)])
        );
        let mut accepted = false;
        for seed in 0..64 {
            let mut edges = vec![(a, x), (b, y)];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rewire_stratum(&mut edges, 1, &mut rng);
            if edges.iter().copied().collect::<HashSet<_>>() == HashSet::from([(a, y), (b, x)]) {
                accepted = true;
                break;
            }
        }
        assert!(accepted, "some seed must accept the swap in one attempt");
    }

    #[test]
    fn degrees_and_strata_preserved_no_loops_or_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = crate::testkit::random_corpus(&mut rng, 120, 6, 0.08);
        let nodes = raw
            .nodes
            .iter()
            .map(|(id, y)| WorkNode::new(id.clone(), *y))
            .collect();
        let g = CitationGraph::from_parts(nodes, raw.edges.clone(), &LoadPolicy::lenient())
            .unwrap();
        for replicate in 0..5 {
            let r = rewire(&g, &RewireConfig::default(), replicate);
            assert!(preservation_check(&g, &r));
            let mut seen = HashSet::new();
            for (src, dst) in r.edges() {
                assert_ne!(src, dst);
                assert!(seen.insert((src, dst)), "duplicate edge in replicate");
            }
        }
    }

    #[test]
    fn rewire_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = crate::testkit::random_corpus(&mut rng, 80, 5, 0.1);
        let nodes: Vec<WorkNode> = raw
            .nodes
            .iter()
            .map(|(id, y)| WorkNode::new(id.clone(), *y))
            .collect();
        let g =
            CitationGraph::from_parts(nodes, raw.edges, &LoadPolicy::lenient()).unwrap();
        let config = RewireConfig {
            seed: 99,
            ..RewireConfig::default()
        };
        let e1: Vec<_> = rewire(&g, &config, 2).edges().collect();
        let e2: Vec<_> = rewire(&g, &config, 2).edges().collect();
        assert_eq!(e1, e2);
        let other: Vec<_> = rewire(&g, &config, 3).edges().collect();
        assert!(e1 != other || g.num_edges() < 4);
    }

    #[test]
    fn single_replicate_has_undefined_sd() {
        let g = graph(
            vec![("a", 2001), ("b", 2001), ("x", 2000), ("y", 2000)],
            vec![("a", "x"), ("b", "y")],
        );
        let config = RewireConfig {
            replicates: 1,
            ..RewireConfig::default()
        };
        let ensemble = build_ensemble(&g, &config, &MetricConfig::default());
        for summary in &ensemble.summaries {
            assert_eq!(summary.n_i.sd, None);
            assert_eq!(summary.cd.sd, None);
        }
    }

    #[test]
    fn identity_rewire_gives_zero_z() {
        // every stratum has a single edge, so every replicate equals the
        // observed graph and all defined z-scores are exactly zero
        let g = graph(
            vec![("a", 2001), ("x", 2000), ("b", 2002)],
            vec![("a", "x"), ("b", "a")],
        );
        let config = RewireConfig {
            replicates: 4,
            ..RewireConfig::default()
        };
        let ensemble = build_ensemble(&g, &config, &MetricConfig::default());
        let records = component_zscores(
            &g,
            &ensemble,
            &MetricConfig::default(),
            &ZScoreOptions::default(),
        );
        for record in &records {
            for q in Quantity::ALL {
                let score = record.score(q);
                // identical replicates leave sd = 0, so z is undefined
                assert_eq!(score.z, None);
                if let (Some(o), Some(m)) = (score.observed, score.random_mean) {
                    assert_eq!(o, m);
                }
            }
        }
    }

    #[test]
    fn zscore_basics() {
        assert_eq!(zscore(1.0, 1.0, 0.5), Some(0.0));
        assert_eq!(zscore(2.0, 1.0, 0.5), Some(2.0));
        assert_eq!(zscore(0.3, 0.1, 0.0), None);
    }

    #[test]
    fn zero_bcite_set_matches_across_replicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let raw = crate::testkit::random_corpus(&mut rng, 100, 5, 0.07);
        let nodes: Vec<WorkNode> = raw
            .nodes
            .iter()
            .map(|(id, y)| WorkNode::new(id.clone(), *y))
            .collect();
        let g =
            CitationGraph::from_parts(nodes, raw.edges, &LoadPolicy::lenient()).unwrap();
        let r = rewire(&g, &RewireConfig::default(), 0);
        for i in 0..g.num_nodes() as u32 {
            let node = NodeId(i);
            assert_eq!(g.out_degree(node) == 0, r.out_degree(node) == 0);
        }
    }

    #[test]
    fn exclude_zero_bcite_filters_records() {
        let g = graph(vec![("f", 2000), ("c", 2001)], vec![("c", "f")]);
        let ensemble = build_ensemble(&g, &RewireConfig::default(), &MetricConfig::default());
        let all = component_zscores(
            &g,
            &ensemble,
            &MetricConfig::default(),
            &ZScoreOptions::default(),
        );
        assert_eq!(all.len(), 2);
        let filtered = component_zscores(
            &g,
            &ensemble,
            &MetricConfig::default(),
            &ZScoreOptions {
                exclude_zero_bcite: true,
            },
        );
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered[0].id, "c");
    }
}
