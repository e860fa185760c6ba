//! Immutable citation graph: loading, validation, and adjacency access.
//!
//! Work ids are opaque strings mapped to dense `u32` indices at load time so
//! the metric kernels can run on compact sorted adjacency slices. A graph is
//! never mutated after construction; all modules read it concurrently.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of a work within a loaded corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Per-work record: publication year plus the optional metadata used as
/// regression controls and audit keys. Absent metadata stays `None`; it is
/// never encoded as a sentinel value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkNode {
    pub id: String,
    pub year: i32,
    pub field: Option<String>,
    pub subfield: Option<String>,
    pub doctype: Option<String>,
    pub language: Option<String>,
    pub author_count: Option<u32>,
    pub unlinked_ref_count: u32,
}

impl WorkNode {
    pub fn new(id: impl Into<String>, year: i32) -> Self {
        WorkNode {
            id: id.into(),
            year,
            field: None,
            subfield: None,
            doctype: None,
            language: None,
            author_count: None,
            unlinked_ref_count: 0,
        }
    }
}

/// What to do with records that violate graph invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultMode {
    /// Any offending record aborts the load with an error.
    Fatal,
    /// Offending records are dropped, counted, and sampled in the report.
    Drop,
}

#[derive(Debug, Clone)]
pub struct LoadPolicy {
    pub fault_mode: FaultMode,
    /// Whether an edge with `year(citing) == year(cited)` is legal.
    /// Backward-in-time edges are always faults.
    pub allow_same_year: bool,
    pub year_min: i32,
    pub year_max: i32,
    /// Maximum offending records kept per fault category in the report.
    pub sample_limit: usize,
}

impl LoadPolicy {
    pub fn strict() -> Self {
        LoadPolicy {
            fault_mode: FaultMode::Fatal,
            ..LoadPolicy::default()
        }
    }

    pub fn lenient() -> Self {
        LoadPolicy::default()
    }
}

impl Default for LoadPolicy {
    fn default() -> Self {
        LoadPolicy {
            fault_mode: FaultMode::Drop,
            allow_same_year: true,
            year_min: 1000,
            year_max: 3000,
            sample_limit: 10,
        }
    }
}

/// Counts of offending input records observed while building a graph.
/// Offenders are dropped (or fatal) per policy, so the finished graph always
/// satisfies its invariants; the report preserves what was seen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dangling_edge_count: u64,
    pub duplicate_edge_count: u64,
    pub self_loop_count: u64,
    pub year_violation_count: u64,
    pub invalid_node_count: u64,
    pub dangling_samples: Vec<(String, String)>,
    pub duplicate_samples: Vec<(String, String)>,
    pub self_loop_samples: Vec<(String, String)>,
    pub year_violation_samples: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.dangling_edge_count == 0
            && self.duplicate_edge_count == 0
            && self.self_loop_count == 0
            && self.year_violation_count == 0
            && self.invalid_node_count == 0
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row in {path} at line {line}, column {column}: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("missing required column {column:?} in {path}")]
    MissingColumn { column: String, path: String },
    #[error("duplicate node id {id:?}")]
    DuplicateNodeId { id: String },
    #[error("work {id:?} has year {year} outside [{min}, {max}]")]
    YearOutOfRange {
        id: String,
        year: i32,
        min: i32,
        max: i32,
    },
    #[error("edge endpoint {id:?} does not resolve to a work")]
    UnknownEndpoint { id: String },
    #[error("self-citation edge on {id:?}")]
    SelfLoop { id: String },
    #[error("duplicate edge {citing:?} -> {cited:?}")]
    DuplicateEdge { citing: String, cited: String },
    #[error("edge {citing:?} ({citing_year}) -> {cited:?} ({cited_year}) cites forward in time")]
    YearOrder {
        citing: String,
        citing_year: i32,
        cited: String,
        cited_year: i32,
    },
    #[error("unknown work id {id:?}")]
    UnknownId { id: String },
}

/// Immutable directed citation network with per-work metadata.
///
/// Edges point from the citing work to the cited work. Adjacency is stored
/// twice in CSR form (references and citers), each segment sorted by target
/// index, so neighborhood reads and set intersections are cache-friendly.
#[derive(Debug, Clone)]
pub struct CitationGraph {
    nodes: Vec<WorkNode>,
    index: HashMap<String, NodeId>,
    ref_offsets: Vec<usize>,
    ref_targets: Vec<NodeId>,
    citer_offsets: Vec<usize>,
    citer_targets: Vec<NodeId>,
    years: BTreeMap<i32, Vec<NodeId>>,
    report: ValidationReport,
}

impl CitationGraph {
    /// Loads a graph from delimited node and edge files (see the file
    /// schemas in the crate README). Offending records are dropped or fatal
    /// per `policy`.
    pub fn load(
        nodes_path: impl AsRef<Path>,
        edges_path: impl AsRef<Path>,
        delimiter: u8,
        policy: &LoadPolicy,
    ) -> Result<Self, GraphError> {
        let nodes_path = nodes_path.as_ref();
        let edges_path = edges_path.as_ref();
        let nodes_file = File::open(nodes_path).map_err(|source| GraphError::Io {
            path: nodes_path.display().to_string(),
            source,
        })?;
        let edges_file = File::open(edges_path).map_err(|source| GraphError::Io {
            path: edges_path.display().to_string(),
            source,
        })?;
        Self::from_readers(
            BufReader::new(nodes_file),
            &nodes_path.display().to_string(),
            BufReader::new(edges_file),
            &edges_path.display().to_string(),
            delimiter,
            policy,
        )
    }

    /// Same as [`CitationGraph::load`] but over arbitrary readers; the path
    /// strings only label error messages.
    pub fn from_readers<R1: Read, R2: Read>(
        nodes: R1,
        nodes_label: &str,
        edges: R2,
        edges_label: &str,
        delimiter: u8,
        policy: &LoadPolicy,
    ) -> Result<Self, GraphError> {
        let parsed_nodes = parse_nodes(nodes, nodes_label, delimiter)?;
        let parsed_edges = parse_edges(edges, edges_label, delimiter)?;
        Self::from_parts(parsed_nodes, parsed_edges, policy)
    }

    /// Builds a graph from in-memory parts, applying the same validation as
    /// the file loaders.
    pub fn from_parts(
        nodes: Vec<WorkNode>,
        edges: Vec<(String, String)>,
        policy: &LoadPolicy,
    ) -> Result<Self, GraphError> {
        let mut report = ValidationReport::default();

        let mut kept_nodes: Vec<WorkNode> = Vec::with_capacity(nodes.len());
        let mut index: HashMap<String, NodeId> = HashMap::with_capacity(nodes.len());
        for node in nodes {
            if index.contains_key(&node.id) {
                return Err(GraphError::DuplicateNodeId { id: node.id });
            }
            if node.year < policy.year_min || node.year > policy.year_max {
                match policy.fault_mode {
                    FaultMode::Fatal => {
                        return Err(GraphError::YearOutOfRange {
                            id: node.id,
                            year: node.year,
                            min: policy.year_min,
                            max: policy.year_max,
                        })
                    }
                    FaultMode::Drop => {
                        report.invalid_node_count += 1;
                        continue;
                    }
                }
            }
            index.insert(node.id.clone(), NodeId(kept_nodes.len() as u32));
            kept_nodes.push(node);
        }

        let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(edges.len());
        let mut kept_edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(edges.len());
        for (citing, cited) in edges {
            let fault = |report: &mut ValidationReport,
                         count: fn(&mut ValidationReport) -> &mut u64,
                         samples: fn(&mut ValidationReport) -> &mut Vec<(String, String)>,
                         citing: &str,
                         cited: &str| {
                *count(report) += 1;
                let samples = samples(report);
                if samples.len() < policy.sample_limit {
                    samples.push((citing.to_string(), cited.to_string()));
                }
            };

            let (Some(&src), Some(&dst)) = (index.get(&citing), index.get(&cited)) else {
                match policy.fault_mode {
                    FaultMode::Fatal => {
                        let id = if index.contains_key(&citing) { cited } else { citing };
                        return Err(GraphError::UnknownEndpoint { id });
                    }
                    FaultMode::Drop => {
                        fault(
                            &mut report,
                            |r| &mut r.dangling_edge_count,
                            |r| &mut r.dangling_samples,
                            &citing,
                            &cited,
                        );
                        continue;
                    }
                }
            };
            if src == dst {
                match policy.fault_mode {
                    FaultMode::Fatal => return Err(GraphError::SelfLoop { id: citing }),
                    FaultMode::Drop => {
                        fault(
                            &mut report,
                            |r| &mut r.self_loop_count,
                            |r| &mut r.self_loop_samples,
                            &citing,
                            &cited,
                        );
                        continue;
                    }
                }
            }
            let citing_year = kept_nodes[src.index()].year;
            let cited_year = kept_nodes[dst.index()].year;
            let backward = citing_year < cited_year
                || (!policy.allow_same_year && citing_year == cited_year);
            if backward {
                match policy.fault_mode {
                    FaultMode::Fatal => {
                        return Err(GraphError::YearOrder {
                            citing,
                            citing_year,
                            cited,
                            cited_year,
                        })
                    }
                    FaultMode::Drop => {
                        fault(
                            &mut report,
                            |r| &mut r.year_violation_count,
                            |r| &mut r.year_violation_samples,
                            &citing,
                            &cited,
                        );
                        continue;
                    }
                }
            }
            if !seen.insert((src, dst)) {
                match policy.fault_mode {
                    FaultMode::Fatal => return Err(GraphError::DuplicateEdge { citing, cited }),
                    FaultMode::Drop => {
                        fault(
                            &mut report,
                            |r| &mut r.duplicate_edge_count,
                            |r| &mut r.duplicate_samples,
                            &citing,
                            &cited,
                        );
                        continue;
                    }
                }
            }
            kept_edges.push((src, dst));
        }

        Ok(Self::assemble(kept_nodes, index, kept_edges, report))
    }

    /// Builds a graph from pre-validated indexed edges. Callers must uphold
    /// the graph invariants (no self-loops, no duplicates, year ordering);
    /// violations are debug-panics only.
    pub(crate) fn from_trusted_edges(
        nodes: Vec<WorkNode>,
        edges: Vec<(NodeId, NodeId)>,
    ) -> Self {
        debug_assert!(edges.iter().all(|&(s, d)| s != d));
        debug_assert_eq!(
            edges.iter().collect::<HashSet<_>>().len(),
            edges.len(),
            "duplicate edges in trusted input"
        );
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), NodeId(i as u32)))
            .collect();
        Self::assemble(nodes, index, edges, ValidationReport::default())
    }

    fn assemble(
        nodes: Vec<WorkNode>,
        index: HashMap<String, NodeId>,
        edges: Vec<(NodeId, NodeId)>,
        report: ValidationReport,
    ) -> Self {
        let n = nodes.len();
        let mut ref_offsets = vec![0usize; n + 1];
        let mut citer_offsets = vec![0usize; n + 1];
        for &(src, dst) in &edges {
            ref_offsets[src.index() + 1] += 1;
            citer_offsets[dst.index() + 1] += 1;
        }
        for i in 0..n {
            ref_offsets[i + 1] += ref_offsets[i];
            citer_offsets[i + 1] += citer_offsets[i];
        }
        let mut ref_targets = vec![NodeId(0); edges.len()];
        let mut citer_targets = vec![NodeId(0); edges.len()];
        let mut ref_cursor = ref_offsets.clone();
        let mut citer_cursor = citer_offsets.clone();
        for &(src, dst) in &edges {
            ref_targets[ref_cursor[src.index()]] = dst;
            ref_cursor[src.index()] += 1;
            citer_targets[citer_cursor[dst.index()]] = src;
            citer_cursor[dst.index()] += 1;
        }
        for i in 0..n {
            ref_targets[ref_offsets[i]..ref_offsets[i + 1]].sort_unstable();
            citer_targets[citer_offsets[i]..citer_offsets[i + 1]].sort_unstable();
        }

        let mut years: BTreeMap<i32, Vec<NodeId>> = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            years.entry(node.year).or_default().push(NodeId(i as u32));
        }

        CitationGraph {
            nodes,
            index,
            ref_offsets,
            ref_targets,
            citer_offsets,
            citer_targets,
            years,
            report,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.ref_targets.len()
    }

    pub fn node(&self, id: NodeId) -> &WorkNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[WorkNode] {
        &self.nodes
    }

    pub fn year_of(&self, id: NodeId) -> i32 {
        self.nodes[id.index()].year
    }

    pub fn resolve(&self, id: &str) -> Option<NodeId> {
        self.index.get(id).copied()
    }

    pub fn resolve_or_err(&self, id: &str) -> Result<NodeId, GraphError> {
        self.resolve(id).ok_or_else(|| GraphError::UnknownId {
            id: id.to_string(),
        })
    }

    /// Works cited by `id` (the backward citations), sorted by index.
    pub fn references(&self, id: NodeId) -> &[NodeId] {
        &self.ref_targets[self.ref_offsets[id.index()]..self.ref_offsets[id.index() + 1]]
    }

    /// Works citing `id`, sorted by index.
    pub fn citers(&self, id: NodeId) -> &[NodeId] {
        &self.citer_targets[self.citer_offsets[id.index()]..self.citer_offsets[id.index() + 1]]
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.references(id).len()
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.citers(id).len()
    }

    pub fn cites(&self, citing: NodeId, cited: NodeId) -> bool {
        self.references(citing).binary_search(&cited).is_ok()
    }

    /// The reference and citer id sets of a focal work.
    pub fn neighborhood(&self, focal: &str) -> Result<(Vec<&str>, Vec<&str>), GraphError> {
        let id = self.resolve_or_err(focal)?;
        let refs = self
            .references(id)
            .iter()
            .map(|&n| self.nodes[n.index()].id.as_str())
            .collect();
        let citers = self
            .citers(id)
            .iter()
            .map(|&n| self.nodes[n.index()].id.as_str())
            .collect();
        Ok((refs, citers))
    }

    /// Validation report captured while this graph was built: counts of
    /// input records that violated an invariant (all were dropped per
    /// policy, so the graph itself is always clean).
    pub fn validate(&self) -> ValidationReport {
        self.report.clone()
    }

    pub fn works_in_year(&self, year: i32) -> &[NodeId] {
        self.years.get(&year).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn year_counts(&self) -> impl Iterator<Item = (i32, usize)> + '_ {
        self.years.iter().map(|(&y, v)| (y, v.len()))
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        let min = self.years.keys().next()?;
        let max = self.years.keys().next_back()?;
        Some((*min, *max))
    }

    /// All edges as (citing, cited) pairs, ordered by citing index then
    /// cited index.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.nodes.len()).flat_map(move |i| {
            self.references(NodeId(i as u32))
                .iter()
                .map(move |&dst| (NodeId(i as u32), dst))
        })
    }

    pub fn write_nodes<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), GraphError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        let io_err = |e: csv::Error| GraphError::Io {
            path: "<nodes output>".to_string(),
            source: std::io::Error::other(e),
        };
        w.write_record([
            "id",
            "year",
            "field",
            "subfield",
            "doctype",
            "language",
            "author_count",
            "unlinked_ref_count",
        ])
        .map_err(io_err)?;
        for node in &self.nodes {
            w.write_record([
                node.id.as_str(),
                &node.year.to_string(),
                node.field.as_deref().unwrap_or(""),
                node.subfield.as_deref().unwrap_or(""),
                node.doctype.as_deref().unwrap_or(""),
                node.language.as_deref().unwrap_or(""),
                &node
                    .author_count
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
                &node.unlinked_ref_count.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|e| GraphError::Io {
            path: "<nodes output>".to_string(),
            source: e,
        })
    }

    pub fn write_edges<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), GraphError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        let io_err = |e: csv::Error| GraphError::Io {
            path: "<edges output>".to_string(),
            source: std::io::Error::other(e),
        };
        w.write_record(["citing_id", "cited_id"]).map_err(io_err)?;
        for (src, dst) in self.edges() {
            w.write_record([
                self.nodes[src.index()].id.as_str(),
                self.nodes[dst.index()].id.as_str(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|e| GraphError::Io {
            path: "<edges output>".to_string(),
            source: e,
        })
    }

    pub fn write_files(
        &self,
        nodes_path: impl AsRef<Path>,
        edges_path: impl AsRef<Path>,
        delimiter: u8,
    ) -> Result<(), GraphError> {
        let nodes_path = nodes_path.as_ref();
        let file = File::create(nodes_path).map_err(|source| GraphError::Io {
            path: nodes_path.display().to_string(),
            source,
        })?;
        self.write_nodes(BufWriter::new(file), delimiter)?;
        let edges_path = edges_path.as_ref();
        let file = File::create(edges_path).map_err(|source| GraphError::Io {
            path: edges_path.display().to_string(),
            source,
        })?;
        self.write_edges(BufWriter::new(file), delimiter)
    }
}

fn parse_nodes<R: Read>(
    reader: R,
    label: &str,
    delimiter: u8,
) -> Result<Vec<WorkNode>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(label, 1, "<header>", e))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| GraphError::MissingColumn {
        column: "id".to_string(),
        path: label.to_string(),
    })?;
    let year_col = col("year").ok_or_else(|| GraphError::MissingColumn {
        column: "year".to_string(),
        path: label.to_string(),
    })?;
    let field_col = col("field");
    let subfield_col = col("subfield");
    let doctype_col = col("doctype");
    let language_col = col("language");
    let author_col = col("author_count");
    let unlinked_col = col("unlinked_ref_count");

    let mut nodes = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| malformed(label, line, "<row>", e))?;
        let get = |idx: Option<usize>| -> Option<&str> {
            idx.and_then(|j| record.get(j)).filter(|s| !s.is_empty())
        };
        let id = get(Some(id_col))
            .ok_or_else(|| malformed(label, line, "id", "empty id"))?
            .to_string();
        let year: i32 = get(Some(year_col))
            .ok_or_else(|| malformed(label, line, "year", "empty year"))?
            .parse()
            .map_err(|e| malformed(label, line, "year", e))?;
        let author_count = match get(author_col) {
            Some(s) => Some(
                s.parse::<u32>()
                    .map_err(|e| malformed(label, line, "author_count", e))?,
            ),
            None => None,
        };
        let unlinked_ref_count = match get(unlinked_col) {
            Some(s) => s
                .parse::<u32>()
                .map_err(|e| malformed(label, line, "unlinked_ref_count", e))?,
            None => 0,
        };
        nodes.push(WorkNode {
            id,
            year,
            field: get(field_col).map(str::to_string),
            subfield: get(subfield_col).map(str::to_string),
            doctype: get(doctype_col).map(str::to_string),
            language: get(language_col).map(str::to_string),
            author_count,
            unlinked_ref_count,
        });
    }
    Ok(nodes)
}

fn parse_edges<R: Read>(
    reader: R,
    label: &str,
    delimiter: u8,
) -> Result<Vec<(String, String)>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(label, 1, "<header>", e))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GraphError::MissingColumn {
                column: name.to_string(),
                path: label.to_string(),
            })
    };
    let citing_col = col("citing_id")?;
    let cited_col = col("cited_id")?;
    let mut edges = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| malformed(label, line, "<row>", e))?;
        let citing = record
            .get(citing_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed(label, line, "citing_id", "empty id"))?;
        let cited = record
            .get(cited_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed(label, line, "cited_id", "empty id"))?;
        edges.push((citing.to_string(), cited.to_string()));
    }
    Ok(edges)
}

fn malformed(label: &str, line: u64, column: &str, message: impl ToString) -> GraphError {
    GraphError::MalformedRow {
        path: label.to_string(),
        line,
        column: column.to_string(),
        message: message.to_string(),
    }
}
