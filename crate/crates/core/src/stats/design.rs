//! Design-matrix assembly from a metrics table and corpus metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::{Array1, Array2};

use crate::graph::CitationGraph;
use crate::metrics::MetricsTable;

use super::{ClusterKey, Control, DesignSpec, FeColumn, StatsError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColKind {
    Intercept,
    YearDummy(i32),
    Control(Control),
    FeDummy(String),
    /// Column supplied directly by the caller (trend fits).
    Raw,
}

/// Bookkeeping for fixed effects absorbed by within-group demeaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Absorbed {
    pub groups: usize,
    pub y_grand_mean: f64,
    /// Pre-demeaning column means, aligned with the design columns.
    pub x_grand_means: Vec<f64>,
}

/// A ready-to-fit design. `x`/`y` are what the solver sees (demeaned on the
/// within path); `y_original` keeps the raw response for R² and prediction.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub y_original: Array1<f64>,
    pub names: Vec<String>,
    pub col_kinds: Vec<ColKind>,
    /// Sample means of the pre-demeaning columns over the rows used.
    pub profile_means: Vec<f64>,
    pub year_levels: Vec<i32>,
    pub base_year: Option<i32>,
    pub cluster_ids: Option<Vec<usize>>,
    pub n_clusters: Option<usize>,
    pub dropped_rows: usize,
    pub absorbed: Option<Absorbed>,
}

impl Design {
    /// Wraps a caller-built matrix (no year structure, no fixed effects).
    pub fn from_matrix(
        x: Array2<f64>,
        y: Array1<f64>,
        names: Vec<String>,
        col_kinds: Vec<ColKind>,
    ) -> Self {
        let profile_means = (0..x.ncols())
            .map(|j| x.column(j).mean().unwrap_or(0.0))
            .collect();
        Design {
            y_original: y.clone(),
            x,
            y,
            names,
            col_kinds,
            profile_means,
            year_levels: Vec::new(),
            base_year: None,
            cluster_ids: None,
            n_clusters: None,
            dropped_rows: 0,
            absorbed: None,
        }
    }
}

struct FieldYearAggregates {
    n_new_works: HashMap<(String, i32), f64>,
    mean_cited: HashMap<(String, i32), f64>,
    mean_authors: HashMap<(String, i32), Option<f64>>,
}

fn field_year_aggregates(graph: &CitationGraph) -> FieldYearAggregates {
    let mut counts: BTreeMap<(String, i32), u64> = BTreeMap::new();
    let mut cited_sums: BTreeMap<(String, i32), f64> = BTreeMap::new();
    let mut author_sums: BTreeMap<(String, i32), (f64, u64)> = BTreeMap::new();
    for (idx, node) in graph.nodes().iter().enumerate() {
        let Some(field) = &node.field else { continue };
        let key = (field.clone(), node.year);
        *counts.entry(key.clone()).or_insert(0) += 1;
        *cited_sums.entry(key.clone()).or_insert(0.0) +=
            graph.out_degree(crate::graph::NodeId(idx as u32)) as f64;
        if let Some(a) = node.author_count {
            let entry = author_sums.entry(key).or_insert((0.0, 0));
            entry.0 += a as f64;
            entry.1 += 1;
        }
    }
    let mut n_new_works = HashMap::new();
    let mut mean_cited = HashMap::new();
    let mut mean_authors = HashMap::new();
    for (key, count) in &counts {
        n_new_works.insert(key.clone(), *count as f64);
        mean_cited.insert(key.clone(), cited_sums[key] / *count as f64);
        let authors = author_sums
            .get(key)
            .filter(|(_, n)| *n > 0)
            .map(|(sum, n)| sum / *n as f64);
        mean_authors.insert(key.clone(), authors);
    }
    FieldYearAggregates {
        n_new_works,
        mean_cited,
        mean_authors,
    }
}

/// Builds the regression design: response, year dummies against the base
/// year, requested controls (field-by-year aggregates computed from the
/// corpus itself), and fixed effects either dummy-expanded or absorbed by
/// within-group demeaning. Rows with any undefined required value are
/// dropped and counted.
pub fn build_design(
    metrics: &MetricsTable,
    graph: &CitationGraph,
    spec: &DesignSpec,
    cd_random: Option<&HashMap<String, f64>>,
) -> Result<Design, StatsError> {
    spec.validate()?;

    let needs_field = spec.controls.iter().any(|c| {
        matches!(
            c,
            Control::NNewWorksFieldYear
                | Control::MeanCitedFieldYear
                | Control::MeanAuthorsFieldYear
        )
    });
    if needs_field && graph.nodes().iter().all(|n| n.field.is_none()) {
        return Err(StatsError::MissingColumn("field".to_string()));
    }
    if spec.controls.contains(&Control::MeanAuthorsFieldYear)
        && graph.nodes().iter().all(|n| n.author_count.is_none())
    {
        return Err(StatsError::MissingColumn("author_count".to_string()));
    }
    if let Some(fe) = spec.fixed_effects {
        let missing_all = graph.nodes().iter().all(|n| match fe {
            FeColumn::Subfield => n.subfield.is_none(),
            FeColumn::Field => n.field.is_none(),
        });
        if missing_all {
            return Err(StatsError::MissingColumn(fe.as_str().to_string()));
        }
    }
    if spec.controls.contains(&Control::CdRandom) && cd_random.is_none() {
        return Err(StatsError::MissingCdRandom);
    }

    let aggregates = field_year_aggregates(graph);

    struct Row {
        y: f64,
        year: i32,
        controls: Vec<f64>,
        fe_group: Option<String>,
        cluster: Option<String>,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut dropped_rows = 0usize;
    'records: for record in &metrics.records {
        let Some(node_id) = graph.resolve(&record.id) else {
            dropped_rows += 1;
            continue;
        };
        let node = graph.node(node_id);
        let Some(y) = record.metric(spec.response) else {
            dropped_rows += 1;
            continue;
        };
        let mut controls = Vec::with_capacity(spec.controls.len());
        for control in &spec.controls {
            let value: Option<f64> = match control {
                Control::ZeroBciteDummy => Some(if record.zero_bcite { 1.0 } else { 0.0 }),
                Control::NCited => Some(record.components.bcite_count as f64),
                Control::UnlinkedRefs => Some(node.unlinked_ref_count as f64),
                Control::CdRandom => cd_random.and_then(|m| m.get(&record.id).copied()),
                Control::NNewWorksFieldYear => node.field.as_ref().and_then(|f| {
                    aggregates
                        .n_new_works
                        .get(&(f.clone(), record.year))
                        .copied()
                }),
                Control::MeanCitedFieldYear => node.field.as_ref().and_then(|f| {
                    aggregates
                        .mean_cited
                        .get(&(f.clone(), record.year))
                        .copied()
                }),
                Control::MeanAuthorsFieldYear => node.field.as_ref().and_then(|f| {
                    aggregates
                        .mean_authors
                        .get(&(f.clone(), record.year))
                        .copied()
                        .flatten()
                }),
            };
            match value {
                Some(v) => controls.push(v),
                None => {
                    dropped_rows += 1;
                    continue 'records;
                }
            }
        }
        let fe_group = match spec.fixed_effects {
            None => None,
            Some(fe) => {
                let label = match fe {
                    FeColumn::Subfield => node.subfield.clone(),
                    FeColumn::Field => node.field.clone(),
                };
                match label {
                    Some(l) => Some(l),
                    None => {
                        dropped_rows += 1;
                        continue;
                    }
                }
            }
        };
        let cluster = match spec.cluster_key {
            None => None,
            Some(key) => {
                let label = match key {
                    ClusterKey::Id => Some(record.id.clone()),
                    ClusterKey::Field => node.field.clone(),
                    ClusterKey::Subfield => node.subfield.clone(),
                    ClusterKey::Year => Some(record.year.to_string()),
                };
                match label {
                    Some(l) => Some(l),
                    None => {
                        dropped_rows += 1;
                        continue;
                    }
                }
            }
        };
        rows.push(Row {
            y,
            year: record.year,
            controls,
            fe_group,
            cluster,
        });
    }

    if rows.is_empty() {
        return Err(StatsError::EmptyDesign);
    }
    let year_levels: Vec<i32> = rows
        .iter()
        .map(|r| r.year)
        .collect::<BTreeSet<i32>>()
        .into_iter()
        .collect();
    if !year_levels.contains(&spec.base_year) {
        return Err(StatsError::BaseYearMissing(spec.base_year));
    }

    // fixed-effect groups, sorted; first group is the dummy reference
    let fe_groups: Vec<String> = rows
        .iter()
        .filter_map(|r| r.fe_group.clone())
        .collect::<BTreeSet<String>>()
        .into_iter()
        .collect();
    let expand_fe = spec.fixed_effects.is_some() && fe_groups.len() <= spec.fe_dummy_threshold;
    let within_fe = spec.fixed_effects.is_some() && !expand_fe;
    let group_index: HashMap<&str, usize> = fe_groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();

    let n = rows.len();
    let mut names: Vec<String> = Vec::new();
    let mut col_kinds: Vec<ColKind> = Vec::new();
    if !within_fe {
        names.push("intercept".to_string());
        col_kinds.push(ColKind::Intercept);
    }
    for &year in year_levels.iter().filter(|&&y| y != spec.base_year) {
        names.push(format!("year={year}"));
        col_kinds.push(ColKind::YearDummy(year));
    }
    for control in &spec.controls {
        names.push(control.as_str().to_string());
        col_kinds.push(ColKind::Control(*control));
    }
    if expand_fe {
        for group in fe_groups.iter().skip(1) {
            names.push(format!("fe={group}"));
            col_kinds.push(ColKind::FeDummy(group.clone()));
        }
    }

    let k = names.len();
    let mut x = Array2::<f64>::zeros((n, k));
    let mut y = Array1::<f64>::zeros(n);
    for (row_idx, row) in rows.iter().enumerate() {
        y[row_idx] = row.y;
        for (col_idx, kind) in col_kinds.iter().enumerate() {
            x[[row_idx, col_idx]] = match kind {
                ColKind::Intercept => 1.0,
                ColKind::YearDummy(year) => {
                    if row.year == *year {
                        1.0
                    } else {
                        0.0
                    }
                }
                ColKind::Control(control) => {
                    let pos = spec.controls.iter().position(|c| c == control).unwrap();
                    row.controls[pos]
                }
                ColKind::FeDummy(group) => {
                    if row.fe_group.as_deref() == Some(group.as_str()) {
                        1.0
                    } else {
                        0.0
                    }
                }
                ColKind::Raw => unreachable!("raw columns are never assembled here"),
            };
        }
    }

    let profile_means: Vec<f64> = (0..k).map(|j| x.column(j).mean().unwrap_or(0.0)).collect();
    let y_original = y.clone();

    let absorbed = if within_fe {
        let row_group: Vec<usize> = rows
            .iter()
            .map(|r| group_index[r.fe_group.as_deref().expect("fe rows kept")])
            .collect();
        let g = fe_groups.len();
        let mut group_sizes = vec![0.0f64; g];
        let mut y_means = vec![0.0f64; g];
        let mut x_means = vec![vec![0.0f64; k]; g];
        for (row_idx, &grp) in row_group.iter().enumerate() {
            group_sizes[grp] += 1.0;
            y_means[grp] += y[row_idx];
            for col in 0..k {
                x_means[grp][col] += x[[row_idx, col]];
            }
        }
        for grp in 0..g {
            y_means[grp] /= group_sizes[grp];
            for col in 0..k {
                x_means[grp][col] /= group_sizes[grp];
            }
        }
        let y_grand_mean = y.mean().unwrap_or(0.0);
        for (row_idx, &grp) in row_group.iter().enumerate() {
            y[row_idx] -= y_means[grp];
            for col in 0..k {
                x[[row_idx, col]] -= x_means[grp][col];
            }
        }
        Some(Absorbed {
            groups: g,
            y_grand_mean,
            x_grand_means: profile_means.clone(),
        })
    } else {
        None
    };

    let (cluster_ids, n_clusters) = match spec.cluster_key {
        None => (None, None),
        Some(_) => {
            let labels: BTreeSet<&str> = rows
                .iter()
                .map(|r| r.cluster.as_deref().expect("cluster rows kept"))
                .collect();
            let index: HashMap<&str, usize> =
                labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
            let ids: Vec<usize> = rows
                .iter()
                .map(|r| index[r.cluster.as_deref().unwrap()])
                .collect();
            (Some(ids), Some(labels.len()))
        }
    };

    Ok(Design {
        x,
        y,
        y_original,
        names,
        col_kinds,
        profile_means,
        year_levels,
        base_year: Some(spec.base_year),
        cluster_ids,
        n_clusters,
        dropped_rows,
        absorbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CitationGraph, LoadPolicy, WorkNode};
    use crate::metrics::{compute_all, MetricConfig, MetricName};
    use crate::stats::SeKind;

    fn toy_corpus() -> (CitationGraph, MetricsTable) {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        // three years, two fields, chained citations so cd is defined
        for year in 2000..2003 {
            for i in 0..4u32 {
                let id = format!("w{year}_{i}");
                let mut node = WorkNode::new(id.clone(), year);
                node.field = Some(if i % 2 == 0 { "biology" } else { "physics" }.to_string());
                node.subfield = Some(format!("sub{}", i % 2));
                node.author_count = Some(i + 1);
                nodes.push(node);
                if year > 2000 {
                    edges.push((id.clone(), format!("w{}_{}", year - 1, i)));
                    edges.push((id, format!("w{}_{}", year - 1, (i + 1) % 4)));
                }
            }
        }
        let g = CitationGraph::from_parts(nodes, edges, &LoadPolicy::strict()).unwrap();
        let table = compute_all(&g, &MetricConfig::default());
        (g, table)
    }

    #[test]
    fn year_dummies_only_design_shape() {
        let (g, table) = toy_corpus();
        let spec = DesignSpec {
            se_kind: SeKind::Classical,
            ..DesignSpec::new(MetricName::Cd, 2000)
        };
        let design = build_design(&table, &g, &spec, None).unwrap();
        // cd undefined rows dropped; remaining years form dummies
        assert_eq!(design.names[0], "intercept");
        assert!(design
            .names
            .iter()
            .skip(1)
            .all(|n| n.starts_with("year=")));
        assert!(!design.names.contains(&"year=2000".to_string()));
    }

    #[test]
    fn zero_bcite_dummy_passthrough() {
        let (g, table) = toy_corpus();
        let mut spec = DesignSpec::new(MetricName::Cd, 2000);
        spec.se_kind = SeKind::Classical;
        spec.controls = vec![Control::ZeroBciteDummy];
        let design = build_design(&table, &g, &spec, None).unwrap();
        let col = design
            .names
            .iter()
            .position(|n| n == "zero_bcite_dummy")
            .unwrap();
        for (row_idx, row) in design.x.outer_iter().enumerate() {
            // response cd defined => match against the record bit
            let defined: Vec<&crate::metrics::MetricsRecord> = table
                .records
                .iter()
                .filter(|r| r.cd.is_some())
                .collect();
            let expected = if defined[row_idx].zero_bcite { 1.0 } else { 0.0 };
            assert_eq!(row[col], expected);
        }
    }

    #[test]
    fn field_year_means_match_hand_computation() {
        let (g, table) = toy_corpus();
        let mut spec = DesignSpec::new(MetricName::MeanRefAge, 2001);
        spec.se_kind = SeKind::Classical;
        spec.controls = vec![Control::MeanCitedFieldYear, Control::NNewWorksFieldYear];
        let design = build_design(&table, &g, &spec, None).unwrap();
        // group-by oracle: every 2001/2002 work cites twice, fields have 2
        // works per year
        let cited_col = design
            .names
            .iter()
            .position(|n| n == "mean_cited_field_year")
            .unwrap();
        let count_col = design
            .names
            .iter()
            .position(|n| n == "n_new_works_field_year")
            .unwrap();
        for row in design.x.outer_iter() {
            assert_eq!(row[cited_col], 2.0);
            assert_eq!(row[count_col], 2.0);
        }
    }

    #[test]
    fn missing_base_year_is_an_error() {
        let (g, table) = toy_corpus();
        let mut spec = DesignSpec::new(MetricName::Cd, 1990);
        spec.se_kind = SeKind::Classical;
        let err = build_design(&table, &g, &spec, None).unwrap_err();
        assert!(matches!(err, StatsError::BaseYearMissing(1990)));
    }

    #[test]
    fn cd_random_requires_values() {
        let (g, table) = toy_corpus();
        let mut spec = DesignSpec::new(MetricName::Cd, 2000);
        spec.se_kind = SeKind::Classical;
        spec.controls = vec![Control::CdRandom];
        assert!(matches!(
            build_design(&table, &g, &spec, None),
            Err(StatsError::MissingCdRandom)
        ));
    }
}
