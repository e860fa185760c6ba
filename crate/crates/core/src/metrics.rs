//! Disruptiveness metrics per focal work: the CD index and its components,
//! the noK and thresholded variants, citation year gap, mean reference age,
//! and pooled percentile normalization.
//!
//! All classification happens inside a forward window of `t` years after the
//! focal work. A citer counts as consolidating (J-type) when it also cites
//! at least `l` of the focal work's references; K-type works cite at least
//! one reference but not the focal work, regardless of `l`. The focal work
//! itself is never counted in any component even when same-year works are
//! window-eligible.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CitationGraph, GraphError, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Forward window length in years.
    pub window_years: u32,
    /// Minimum shared references for a citer to classify as J-type.
    pub coupling_threshold: u32,
    /// Whether works published in the focal year are window-eligible.
    pub include_same_year: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            window_years: 5,
            coupling_threshold: 1,
            include_same_year: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("window_years must be >= 1, got {0}")]
    InvalidWindow(u32),
    #[error("coupling_threshold must be >= 1, got {0}")]
    InvalidThreshold(u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.window_years < 1 {
            return Err(MetricError::InvalidWindow(self.window_years));
        }
        if self.coupling_threshold < 1 {
            return Err(MetricError::InvalidThreshold(self.coupling_threshold));
        }
        Ok(())
    }

    fn window(&self, focal_year: i32) -> (i32, i32) {
        let lo = if self.include_same_year {
            focal_year
        } else {
            focal_year + 1
        };
        (lo, focal_year + self.window_years as i32)
    }
}

/// Component counts of the CD index for one focal work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdComponents {
    /// In-window citers sharing fewer than `l` of the focal references.
    pub n_i: u32,
    /// In-window citers sharing at least `l` of the focal references.
    pub n_j: u32,
    /// In-window works citing >= 1 focal reference but not the focal work.
    pub n_k: u32,
    /// Size of the focal work's reference set.
    pub bcite_count: u32,
}

pub fn cd_components(graph: &CitationGraph, focal: NodeId, config: &MetricConfig) -> CdComponents {
    let focal_year = graph.year_of(focal);
    let (lo, hi) = config.window(focal_year);
    let in_window = |w: NodeId| {
        let y = graph.year_of(w);
        y >= lo && y <= hi
    };

    let refs = graph.references(focal);
    // shared-reference counts over in-window works reachable from B_f
    let mut shared: HashMap<NodeId, u32> = HashMap::new();
    for &r in refs {
        for &w in graph.citers(r) {
            if w != focal && in_window(w) {
                *shared.entry(w).or_insert(0) += 1;
            }
        }
    }

    let mut n_i = 0u32;
    let mut n_j = 0u32;
    let mut window_citers: HashSet<NodeId> = HashSet::new();
    for &c in graph.citers(focal) {
        if !in_window(c) {
            continue;
        }
        window_citers.insert(c);
        let s = shared.get(&c).copied().unwrap_or(0);
        if s >= config.coupling_threshold {
            n_j += 1;
        } else {
            n_i += 1;
        }
    }
    let n_k = shared
        .keys()
        .filter(|w| !window_citers.contains(w))
        .count() as u32;

    CdComponents {
        n_i,
        n_j,
        n_k,
        bcite_count: refs.len() as u32,
    }
}

pub fn cd_components_by_id(
    graph: &CitationGraph,
    focal: &str,
    config: &MetricConfig,
) -> Result<CdComponents, GraphError> {
    let id = graph.resolve_or_err(focal)?;
    Ok(cd_components(graph, id, config))
}

/// `(n_I - n_J) / (n_I + n_J + n_K)`, undefined on a zero denominator.
pub fn cd_index(c: &CdComponents) -> Option<f64> {
    let denom = c.n_i as u64 + c.n_j as u64 + c.n_k as u64;
    if denom == 0 {
        None
    } else {
        Some((c.n_i as f64 - c.n_j as f64) / denom as f64)
    }
}

/// `(n_I - n_J) / (n_I + n_J)`, undefined when the focal work has no
/// in-window citers.
pub fn cd_nok(c: &CdComponents) -> Option<f64> {
    let denom = c.n_i as u64 + c.n_j as u64;
    if denom == 0 {
        None
    } else {
        Some((c.n_i as f64 - c.n_j as f64) / denom as f64)
    }
}

/// Strictly-positive-CD indicator; undefined propagates.
pub fn is_d(cd: Option<f64>) -> Option<bool> {
    cd.map(|v| v > 0.0)
}

/// Citation year gap: mean of `year(ref of citer) - year(focal)` over all
/// (in-window citer, reference-of-citer) pairs. Citers lean on older
/// literature when the value is negative. The citer's full reference list is
/// used, not a window-restricted one.
pub fn cyg(graph: &CitationGraph, focal: NodeId, config: &MetricConfig) -> Option<f64> {
    let focal_year = graph.year_of(focal);
    let (lo, hi) = config.window(focal_year);
    let mut sum = 0.0f64;
    let mut pairs = 0u64;
    for &c in graph.citers(focal) {
        let y = graph.year_of(c);
        if y < lo || y > hi {
            continue;
        }
        for &r in graph.references(c) {
            sum += (graph.year_of(r) - focal_year) as f64;
            pairs += 1;
        }
    }
    (pairs > 0).then(|| sum / pairs as f64)
}

/// Mean of `year(focal) - year(ref)` over the focal reference set.
pub fn mean_reference_age(graph: &CitationGraph, focal: NodeId) -> Option<f64> {
    let refs = graph.references(focal);
    if refs.is_empty() {
        return None;
    }
    let focal_year = graph.year_of(focal);
    let sum: f64 = refs
        .iter()
        .map(|&r| (focal_year - graph.year_of(r)) as f64)
        .sum();
    Some(sum / refs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: String,
    pub year: i32,
    pub components: CdComponents,
    pub cd: Option<f64>,
    pub cd_nok: Option<f64>,
    pub is_d: Option<bool>,
    pub cyg: Option<f64>,
    pub mean_ref_age: Option<f64>,
    pub zero_bcite: bool,
    pub cd_equals_one: bool,
}

/// One record per work, ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub records: Vec<MetricsRecord>,
}

/// Names of the per-work scalar metrics a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricName {
    Cd,
    CdNok,
    IsD,
    Cyg,
    MeanRefAge,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Cd,
        MetricName::CdNok,
        MetricName::IsD,
        MetricName::Cyg,
        MetricName::MeanRefAge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Cd => "cd",
            MetricName::CdNok => "cd_nok",
            MetricName::IsD => "is_d",
            MetricName::Cyg => "cyg",
            MetricName::MeanRefAge => "mean_ref_age",
        }
    }

    pub fn parse(s: &str) -> Option<MetricName> {
        MetricName::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl MetricsRecord {
    /// Scalar view of a metric; `is_d` maps to 0/1.
    pub fn metric(&self, name: MetricName) -> Option<f64> {
        match name {
            MetricName::Cd => self.cd,
            MetricName::CdNok => self.cd_nok,
            MetricName::IsD => self.is_d.map(|b| if b { 1.0 } else { 0.0 }),
            MetricName::Cyg => self.cyg,
            MetricName::MeanRefAge => self.mean_ref_age,
        }
    }
}

fn record_for(graph: &CitationGraph, node: NodeId, config: &MetricConfig) -> MetricsRecord {
    let components = cd_components(graph, node, config);
    let cd = cd_index(&components);
    let cd_nok_value = cd_nok(&components);
    let work = graph.node(node);
    MetricsRecord {
        id: work.id.clone(),
        year: work.year,
        components,
        cd,
        cd_nok: cd_nok_value,
        is_d: is_d(cd),
        cyg: cyg(graph, node, config),
        mean_ref_age: mean_reference_age(graph, node),
        zero_bcite: components.bcite_count == 0,
        cd_equals_one: cd == Some(1.0),
    }
}

/// Computes every metric for every work. Per-focal computations run in
/// parallel; output is ordered by id and identical for any worker count.
pub fn compute_all(graph: &CitationGraph, config: &MetricConfig) -> MetricsTable {
    let mut records: Vec<MetricsRecord> = (0..graph.num_nodes() as u32)
        .into_par_iter()
        .map(|i| record_for(graph, NodeId(i), config))
        .collect();
    records.sort_unstable_by(|a, b| a.id.cmp(&b.id));
    MetricsTable { records }
}

impl MetricsTable {
    pub fn get(&self, id: &str) -> Option<&MetricsRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn metric_values(&self, name: MetricName) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.metric(name)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record([
            "id",
            "year",
            "n_i",
            "n_j",
            "n_k",
            "bcite_count",
            "cd",
            "cd_nok",
            "is_d",
            "cyg",
            "mean_ref_age",
            "zero_bcite",
            "cd_equals_one",
        ])?;
        for r in &self.records {
            w.write_record([
                r.id.as_str(),
                &r.year.to_string(),
                &r.components.n_i.to_string(),
                &r.components.n_j.to_string(),
                &r.components.n_k.to_string(),
                &r.components.bcite_count.to_string(),
                &fmt_opt(r.cd),
                &fmt_opt(r.cd_nok),
                &r.is_d.map(|b| b.to_string()).unwrap_or_default(),
                &fmt_opt(r.cyg),
                &fmt_opt(r.mean_ref_age),
                &r.zero_bcite.to_string(),
                &r.cd_equals_one.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, delimiter: u8) -> Result<Self, MetricsTableParseError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| MetricsTableParseError::MissingColumn(name.to_string()))
        };
        let cols = [
            col("id")?,
            col("year")?,
            col("n_i")?,
            col("n_j")?,
            col("n_k")?,
            col("bcite_count")?,
            col("cd")?,
            col("cd_nok")?,
            col("is_d")?,
            col("cyg")?,
            col("mean_ref_age")?,
            col("zero_bcite")?,
            col("cd_equals_one")?,
        ];
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            let get = |j: usize| row.get(cols[j]).unwrap_or("");
            let parse_err = |column: &str| MetricsTableParseError::BadValue {
                line,
                column: column.to_string(),
            };
            records.push(MetricsRecord {
                id: get(0).to_string(),
                year: get(1).parse().map_err(|_| parse_err("year"))?,
                components: CdComponents {
                    n_i: get(2).parse().map_err(|_| parse_err("n_i"))?,
                    n_j: get(3).parse().map_err(|_| parse_err("n_j"))?,
                    n_k: get(4).parse().map_err(|_| parse_err("n_k"))?,
                    bcite_count: get(5).parse().map_err(|_| parse_err("bcite_count"))?,
                },
                cd: parse_opt(get(6)).map_err(|_| parse_err("cd"))?,
                cd_nok: parse_opt(get(7)).map_err(|_| parse_err("cd_nok"))?,
                is_d: match get(8) {
                    "" => None,
                    s => Some(s.parse().map_err(|_| parse_err("is_d"))?),
                },
                cyg: parse_opt(get(9)).map_err(|_| parse_err("cyg"))?,
                mean_ref_age: parse_opt(get(10)).map_err(|_| parse_err("mean_ref_age"))?,
                zero_bcite: get(11).parse().map_err(|_| parse_err("zero_bcite"))?,
                cd_equals_one: get(12).parse().map_err(|_| parse_err("cd_equals_one"))?,
            });
        }
        records.sort_unstable_by(|a, b| a.id.cmp(&b.id));
        Ok(MetricsTable { records })
    }
}

#[derive(Debug, Error)]
pub enum MetricsTableParseError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("bad value at line {line}, column {column}")]
    BadValue { line: u64, column: String },
}

/// Undefined metrics serialize as empty fields, never as 0.
fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>, std::num::ParseFloatError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Rank-based rescaling to [0, 100], pooled over the whole input. Defined
/// entries get `100 * (rank - 0.5) / n_defined` with average ranks for ties;
/// undefined entries pass through. The mean over defined entries is exactly
/// 50 by construction.
pub fn percentile_normalize(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut defined: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| match v {
            Some(x) if x.is_finite() => Some((i, *x)),
            _ => None,
        })
        .collect();
    let n = defined.len();
    let mut out = vec![None; values.len()];
    if n == 0 {
        return out;
    }
    defined.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite values"));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && defined[end].1 == defined[start].1 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end, averaged over the tie group
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pct = 100.0 * (avg_rank - 0.5) / n as f64;
        for &(idx, _) in &defined[start..end] {
            out[idx] = Some(pct);
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LoadPolicy, WorkNode};

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
    fn zero_bcite_focal_forces_j_and_k_zero() {
        let g = graph(
            vec![("f", 2000), ("c1", 2001), ("c2", 2002), ("c3", 2003)],
            vec![("c1", "f"), ("c2", "f"), ("c3", "f")],
        );
        let c = cd_components_by_id(&g, "f", &MetricConfig::default()).unwrap();
        assert_eq!(
            c,
            CdComponents {
                n_i: 3,
                n_j: 0,
                n_k: 0,
                bcite_count: 0
            }
        );
        assert_eq!(cd_index(&c), Some(1.0));
        assert_eq!(cd_nok(&c), Some(1.0));
    }

    #[test]
    fn uncited_focal_with_cited_refs_is_pure_k() {
        let g = graph(
            vec![
                ("r", 1995),
                ("f", 2000),
                ("w1", 2001),
                ("w2", 2002),
                ("w3", 2003),
                ("w4", 2004),
            ],
            vec![
                ("f", "r"),
                ("w1", "r"),
                ("w2", "r"),
                ("w3", "r"),
                ("w4", "r"),
            ],
        );
        let c = cd_components_by_id(&g, "f", &MetricConfig::default()).unwrap();
        assert_eq!(
            c,
            CdComponents {
                n_i: 0,
                n_j: 0,
                n_k: 4,
                bcite_count: 1
            }
        );
        assert_eq!(cd_index(&c), Some(0.0));
    }

    #[test]
    fn cd_index_values() {
        let case = |n_i, n_j, n_k| CdComponents {
            n_i,
            n_j,
            n_k,
            bcite_count: 1,
        };
        assert_eq!(cd_index(&case(3, 0, 0)), Some(1.0));
        assert_eq!(cd_index(&case(0, 2, 0)), Some(-1.0));
        assert_eq!(cd_index(&case(2, 1, 5)), Some(0.125));
        assert_eq!(cd_index(&case(0, 0, 0)), None);
    }

    #[test]
    fn cd_nok_values() {
        let case = |n_i, n_j, n_k| CdComponents {
            n_i,
            n_j,
            n_k,
            bcite_count: 1,
        };
        assert_eq!(cd_nok(&case(3, 0, 7)), Some(1.0));
        assert_eq!(cd_nok(&case(1, 1, 0)), Some(0.0));
        assert_eq!(cd_nok(&case(2, 6, 9)), Some(-0.5));
        assert_eq!(cd_nok(&case(0, 0, 4)), None);
    }

    #[test]
    fn is_d_boundary_is_strict() {
        assert_eq!(is_d(Some(0.125)), Some(true));
        assert_eq!(is_d(Some(0.0)), Some(false));
        assert_eq!(is_d(None), None);
    }

    #[test]
    fn window_and_threshold_classification() {
        // f cites r; c_in cites f and r (J at l=1, I at l=2);
        // c_late cites f outside the window.
        let g = graph(
            vec![("r", 1990), ("f", 2000), ("c_in", 2003), ("c_late", 2009)],
            vec![("f", "r"), ("c_in", "f"), ("c_in", "r"), ("c_late", "f")],
        );
        let base = MetricConfig::default();
        let c = cd_components_by_id(&g, "f", &base).unwrap();
        assert_eq!((c.n_i, c.n_j, c.n_k), (0, 1, 0));
        let strict = MetricConfig {
            coupling_threshold: 2,
            ..base
        };
        let c2 = cd_components_by_id(&g, "f", &strict).unwrap();
        assert_eq!((c2.n_i, c2.n_j, c2.n_k), (1, 0, 0));
    }

    #[test]
    fn same_year_window_toggle() {
        let g = graph(
            vec![("f", 2000), ("c_same", 2000)],
            vec![("c_same", "f")],
        );
        let with = cd_components_by_id(&g, "f", &MetricConfig::default()).unwrap();
        assert_eq!(with.n_i, 1);
        let without = cd_components_by_id(
            &g,
            "f",
            &MetricConfig {
                include_same_year: false,
                ..MetricConfig::default()
            },
        )
        .unwrap();
        assert_eq!(without.n_i, 0);
    }

    #[test]
    fn focal_never_counts_itself_as_k_type() {
        // f cites r in the same year; with same-year eligibility f itself
        // cites a focal reference but must not appear in its own n_k.
        let g = graph(vec![("r", 2000), ("f", 2000)], vec![("f", "r")]);
        let c = cd_components_by_id(&g, "f", &MetricConfig::default()).unwrap();
        assert_eq!(c.n_k, 0);
    }

    #[test]
    fn cyg_gap_to_self_is_zero() {
        let g = graph(vec![("f", 2000), ("c", 2001)], vec![("c", "f")]);
        let id = g.resolve("f").unwrap();
        assert_eq!(cyg(&g, id, &MetricConfig::default()), Some(0.0));
    }

    #[test]
    fn cyg_symmetric_gaps_cancel() {
        let g = graph(
            vec![("old", 1995), ("new", 2005), ("f", 2000), ("c", 2001)],
            vec![("c", "f"), ("c", "old"), ("c", "new")],
        );
        let id = g.resolve("f").unwrap();
        // pairs: (c,f)=0, (c,old)=-5, (c,new)=+5
        assert_eq!(cyg(&g, id, &MetricConfig::default()), Some(0.0));
    }

    #[test]
    fn cyg_undefined_without_pairs() {
        let g = graph(vec![("f", 2000)], vec![]);
        let id = g.resolve("f").unwrap();
        assert_eq!(cyg(&g, id, &MetricConfig::default()), None);
    }

    #[test]
    fn mean_reference_age_examples() {
        let g = graph(
            vec![("a", 1990), ("b", 2000), ("f", 2000), ("empty", 2000)],
            vec![("f", "a"), ("f", "b")],
        );
        let f = g.resolve("f").unwrap();
        assert_eq!(mean_reference_age(&g, f), Some(5.0));
        let empty = g.resolve("empty").unwrap();
        assert_eq!(mean_reference_age(&g, empty), None);
    }

    #[test]
    fn compute_all_empty_graph() {
        let g = CitationGraph::from_parts(vec![], vec![], &LoadPolicy::strict()).unwrap();
        assert!(compute_all(&g, &MetricConfig::default()).records.is_empty());
    }

    #[test]
    fn compute_all_matches_single_node_ops() {
        let g = graph(vec![("A", 2000), ("B", 2001)], vec![("B", "A")]);
        let table = compute_all(&g, &MetricConfig::default());
        assert_eq!(table.records.len(), 2);
        let a = table.get("A").unwrap();
        assert_eq!(a.cd, Some(1.0));
        assert!(a.zero_bcite && a.cd_equals_one);
        let b = table.get("B").unwrap();
        assert_eq!(b.cd, None);
        assert_eq!(b.is_d, None);
        assert!(!b.zero_bcite);
        assert_eq!(b.mean_ref_age, Some(1.0));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let g = graph(
            vec![("A", 2000), ("B", 2001), ("C", 2002)],
            vec![("B", "A"), ("C", "A"), ("C", "B")],
        );
        let table = compute_all(&g, &MetricConfig::default());
        let mut buf = Vec::new();
        table.write_csv(&mut buf, b',').unwrap();
        let parsed = MetricsTable::read_csv(buf.as_slice(), b',').unwrap();
        assert_eq!(table, parsed);
    }

    #[test]
    fn percentile_single_value_sits_at_median() {
        assert_eq!(percentile_normalize(&[Some(5.0)]), vec![Some(50.0)]);
    }

    #[test]
    fn percentile_average_ranks_for_ties() {
        let out = percentile_normalize(&[Some(1.0), Some(2.0), Some(2.0), Some(4.0)]);
        assert_eq!(
            out,
            vec![Some(12.5), Some(50.0), Some(50.0), Some(87.5)]
        );
    }

    #[test]
    fn percentile_undefined_passthrough() {
        let out = percentile_normalize(&[None, Some(3.0)]);
        assert_eq!(out, vec![None, Some(50.0)]);
    }

    #[test]
    fn percentile_mean_is_fifty() {
        let values: Vec<Option<f64>> = (0..101)
            .map(|i| Some(((i * 37) % 19) as f64))
            .collect();
        let out = percentile_normalize(&values);
        let defined: Vec<f64> = out.iter().flatten().copied().collect();
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        assert!((mean - 50.0).abs() < 1e-9);
        assert!(defined.iter().all(|&p| p > 0.0 && p < 100.0));
    }
}
