//! Corpus quality audits: label crosswalks, document/field/language filters,
//! prevalence shares, and cross-corpus backward-citation coverage tables.
//!
//! Crosswalks ship as editable two-column CSV files under
//! `data/crosswalks/`; the embedded defaults mirror those files.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CitationGraph;
use crate::metrics::MetricsTable;

const FIELDS_SCISCINET_TO_WOS: &str =
    include_str!("../data/crosswalks/fields_sciscinet_to_wos.csv");
const DOCTYPES_WOS_META: &str = include_str!("../data/crosswalks/doctypes_wos_meta.csv");
const DOCTYPES_DIMENSIONS_META: &str =
    include_str!("../data/crosswalks/doctypes_dimensions_meta.csv");

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("crosswalk csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("crosswalk row {0} needs raw_label and meta_category")]
    BadCrosswalkRow(u64),
    #[error("crosswalk maps {label:?} more than once")]
    DuplicateLabel { label: String },
    #[error("crosswalk has an empty meta category for {label:?}")]
    EmptyCategory { label: String },
    #[error("label {label:?} is not mapped by the crosswalk")]
    UnmappedLabel { label: String },
    #[error("column {0:?} has no values in this table")]
    MissingColumn(String),
    #[error("include set for {0:?} is empty")]
    EmptyIncludeSet(String),
    #[error("match key {key:?} is duplicated in table {table:?}")]
    DuplicateKey { key: String, table: String },
}

/// What to do with labels the crosswalk does not map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    /// Map to the "All others" bucket and count.
    KeepAsOther,
    /// Remove the row and count.
    Drop,
    /// Fail on the first unmapped label.
    Error,
}

pub const OTHER_CATEGORY: &str = "All others";

/// Many-to-one mapping from raw labels to meta categories. Labels that are
/// already meta categories pass through unchanged, which makes application
/// idempotent.
#[derive(Debug, Clone)]
pub struct Crosswalk {
    map: HashMap<String, String>,
    categories: HashSet<String>,
    pub unmapped_policy: UnmappedPolicy,
}

impl Crosswalk {
    pub fn from_pairs<I, S1, S2>(pairs: I, policy: UnmappedPolicy) -> Result<Self, AuditError>
    where
        I: IntoIterator<Item = (S1, S2)>,
        S1: Into<String>,
        S2: Into<String>,
    {
        let mut map = HashMap::new();
        let mut categories = HashSet::new();
        for (raw, meta) in pairs {
            let raw: String = raw.into();
            let meta: String = meta.into();
            if meta.is_empty() {
                return Err(AuditError::EmptyCategory { label: raw });
            }
            if map.insert(raw.clone(), meta.clone()).is_some() {
                return Err(AuditError::DuplicateLabel { label: raw });
            }
            categories.insert(meta);
        }
        Ok(Crosswalk {
            map,
            categories,
            unmapped_policy: policy,
        })
    }

    /// Reads a two-column delimited file with a `raw_label,meta_category`
    /// header.
    pub fn from_csv<R: Read>(reader: R, policy: UnmappedPolicy) -> Result<Self, AuditError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let mut pairs = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let raw = row
                .get(0)
                .filter(|s| !s.is_empty())
                .ok_or(AuditError::BadCrosswalkRow(i as u64 + 2))?;
            let meta = row
                .get(1)
                .filter(|s| !s.is_empty())
                .ok_or(AuditError::BadCrosswalkRow(i as u64 + 2))?;
            pairs.push((raw.to_string(), meta.to_string()));
        }
        Self::from_pairs(pairs, policy)
    }

    /// SciSciNet field labels to the five WoS research areas.
    pub fn sciscinet_fields() -> Self {
        Self::from_csv(FIELDS_SCISCINET_TO_WOS.as_bytes(), UnmappedPolicy::KeepAsOther)
            .expect("embedded crosswalk is well-formed")
    }

    /// WoS document types to meta categories.
    pub fn wos_doctypes() -> Self {
        Self::from_csv(DOCTYPES_WOS_META.as_bytes(), UnmappedPolicy::KeepAsOther)
            .expect("embedded crosswalk is well-formed")
    }

    /// Dimensions document types to meta categories.
    pub fn dimensions_doctypes() -> Self {
        Self::from_csv(DOCTYPES_DIMENSIONS_META.as_bytes(), UnmappedPolicy::KeepAsOther)
            .expect("embedded crosswalk is well-formed")
    }

    pub fn lookup(&self, raw: &str) -> Option<&str> {
        if let Some(meta) = self.map.get(raw) {
            return Some(meta);
        }
        // already-mapped categories pass through
        self.categories.get(raw).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One row of the audit view: metrics joined with corpus metadata plus the
/// crosswalked meta columns once populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub id: String,
    pub year: i32,
    pub field: Option<String>,
    pub subfield: Option<String>,
    pub doctype: Option<String>,
    pub language: Option<String>,
    pub author_count: Option<u32>,
    pub unlinked_ref_count: u32,
    pub meta_field: Option<String>,
    pub meta_doctype: Option<String>,
    pub zero_bcite: bool,
    pub cd: Option<f64>,
    pub cd_equals_one: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditTable {
    pub rows: Vec<AuditRow>,
}

impl AuditTable {
    /// Joins a metrics table with node metadata on id.
    pub fn from_metrics(metrics: &MetricsTable, graph: &CitationGraph) -> Self {
        let rows = metrics
            .records
            .iter()
            .filter_map(|record| {
                let node = graph.node(graph.resolve(&record.id)?);
                Some(AuditRow {
                    id: record.id.clone(),
                    year: record.year,
                    field: node.field.clone(),
                    subfield: node.subfield.clone(),
                    doctype: node.doctype.clone(),
                    language: node.language.clone(),
                    author_count: node.author_count,
                    unlinked_ref_count: node.unlinked_ref_count,
                    meta_field: None,
                    meta_doctype: None,
                    zero_bcite: record.zero_bcite,
                    cd: record.cd,
                    cd_equals_one: record.cd_equals_one,
                })
            })
            .collect();
        AuditTable { rows }
    }
}

/// Which raw column a crosswalk application reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrosswalkColumn {
    Field,
    Doctype,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrosswalkReport {
    pub mapped: u64,
    pub unmapped: u64,
    pub dropped: u64,
    /// Rows whose raw label was absent; they keep an absent meta label.
    pub missing: u64,
    pub unmapped_labels: BTreeMap<String, u64>,
}

/// Maps a raw label column onto its meta-category column. Unmapped labels
/// follow the crosswalk's policy; rows with an absent raw label keep an
/// absent meta label so "unknown" stays distinguishable.
pub fn apply_crosswalk(
    table: &mut AuditTable,
    crosswalk: &Crosswalk,
    column: CrosswalkColumn,
) -> Result<CrosswalkReport, AuditError> {
    let mut report = CrosswalkReport::default();
    let mut drop_rows: Vec<usize> = Vec::new();
    for (idx, row) in table.rows.iter_mut().enumerate() {
        let raw = match column {
            CrosswalkColumn::Field => row.field.as_deref(),
            CrosswalkColumn::Doctype => row.doctype.as_deref(),
        };
        let meta = match raw {
            None => {
                report.missing += 1;
                None
            }
            Some(label) => match crosswalk.lookup(label) {
                Some(meta) => {
                    report.mapped += 1;
                    Some(meta.to_string())
                }
                None => {
                    report.unmapped += 1;
                    *report
                        .unmapped_labels
                        .entry(label.to_string())
                        .or_insert(0) += 1;
                    match crosswalk.unmapped_policy {
                        UnmappedPolicy::Error => {
                            return Err(AuditError::UnmappedLabel {
                                label: label.to_string(),
                            })
                        }
                        UnmappedPolicy::Drop => {
                            drop_rows.push(idx);
                            None
                        }
                        UnmappedPolicy::KeepAsOther => Some(OTHER_CATEGORY.to_string()),
                    }
                }
            },
        };
        match column {
            CrosswalkColumn::Field => row.meta_field = meta,
            CrosswalkColumn::Doctype => row.meta_doctype = meta,
        }
    }
    if !drop_rows.is_empty() {
        report.dropped = drop_rows.len() as u64;
        let dropped: HashSet<usize> = drop_rows.into_iter().collect();
        let mut idx = 0;
        table.rows.retain(|_| {
            let keep = !dropped.contains(&idx);
            idx += 1;
            keep
        });
    }
    Ok(report)
}

/// Conjunctive corpus filter. Criteria are applied in a documented order
/// (year range, doctype, field, language, 0-bcite, CD=1) and each dropped
/// row is attributed to the first criterion it fails.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub year_range: Option<(i32, i32)>,
    /// Meta doctype categories to keep (requires an applied doctype
    /// crosswalk).
    pub include_doctypes: Option<BTreeSet<String>>,
    /// Meta field categories to keep (requires an applied field crosswalk).
    pub include_fields: Option<BTreeSet<String>>,
    pub exclude_languages: BTreeSet<String>,
    pub exclude_zero_bcite: bool,
    pub exclude_cd_equal_one: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input_rows: u64,
    pub kept_rows: u64,
    pub excluded_year_range: u64,
    pub excluded_doctype: u64,
    pub excluded_field: u64,
    pub excluded_language: u64,
    pub excluded_zero_bcite: u64,
    pub excluded_cd_equal_one: u64,
}

impl ExclusionReport {
    pub fn excluded_total(&self) -> u64 {
        self.excluded_year_range
            + self.excluded_doctype
            + self.excluded_field
            + self.excluded_language
            + self.excluded_zero_bcite
            + self.excluded_cd_equal_one
    }
}

pub fn filter_corpus(
    table: &AuditTable,
    criteria: &FilterCriteria,
) -> Result<(AuditTable, ExclusionReport), AuditError> {
    if let Some(set) = &criteria.include_doctypes {
        if set.is_empty() {
            return Err(AuditError::EmptyIncludeSet("include_doctypes".to_string()));
        }
        if !table.rows.is_empty() && table.rows.iter().all(|r| r.meta_doctype.is_none()) {
            return Err(AuditError::MissingColumn("meta_doctype".to_string()));
        }
    }
    if let Some(set) = &criteria.include_fields {
        if set.is_empty() {
            return Err(AuditError::EmptyIncludeSet("include_fields".to_string()));
        }
        if !table.rows.is_empty() && table.rows.iter().all(|r| r.meta_field.is_none()) {
            return Err(AuditError::MissingColumn("meta_field".to_string()));
        }
    }
    if !criteria.exclude_languages.is_empty()
        && !table.rows.is_empty()
        && table.rows.iter().all(|r| r.language.is_none())
    {
        return Err(AuditError::MissingColumn("language".to_string()));
    }

    let mut report = ExclusionReport {
        input_rows: table.rows.len() as u64,
        ..ExclusionReport::default()
    };
    let mut kept = Vec::new();
    for row in &table.rows {
        if let Some((lo, hi)) = criteria.year_range {
            if row.year < lo || row.year > hi {
                report.excluded_year_range += 1;
                continue;
            }
        }
        if let Some(set) = &criteria.include_doctypes {
            // absent meta labels are unknown, not members of any category
            if !row
                .meta_doctype
                .as_ref()
                .map(|m| set.contains(m))
                .unwrap_or(false)
            {
                report.excluded_doctype += 1;
                continue;
            }
        }
        if let Some(set) = &criteria.include_fields {
            if !row
                .meta_field
                .as_ref()
                .map(|m| set.contains(m))
                .unwrap_or(false)
            {
                report.excluded_field += 1;
                continue;
            }
        }
        if let Some(language) = &row.language {
            if criteria.exclude_languages.contains(language) {
                report.excluded_language += 1;
                continue;
            }
        }
        if criteria.exclude_zero_bcite && row.zero_bcite {
            report.excluded_zero_bcite += 1;
            continue;
        }
        if criteria.exclude_cd_equal_one && row.cd_equals_one {
            report.excluded_cd_equal_one += 1;
            continue;
        }
        kept.push(row.clone());
    }
    report.kept_rows = kept.len() as u64;
    debug_assert_eq!(
        report.kept_rows + report.excluded_total(),
        report.input_rows
    );
    Ok((AuditTable { rows: kept }, report))
}

/// Columns usable as group-by keys or match keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditColumn {
    Id,
    Field,
    MetaField,
    Subfield,
    Doctype,
    MetaDoctype,
    Language,
    Year,
}

impl AuditColumn {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuditColumn::Id => "id",
            AuditColumn::Field => "field",
            AuditColumn::MetaField => "meta_field",
            AuditColumn::Subfield => "subfield",
            AuditColumn::Doctype => "doctype",
            AuditColumn::MetaDoctype => "meta_doctype",
            AuditColumn::Language => "language",
            AuditColumn::Year => "year",
        }
    }

    pub fn parse(s: &str) -> Option<AuditColumn> {
        [
            AuditColumn::Id,
            AuditColumn::Field,
            AuditColumn::MetaField,
            AuditColumn::Subfield,
            AuditColumn::Doctype,
            AuditColumn::MetaDoctype,
            AuditColumn::Language,
            AuditColumn::Year,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    fn value(&self, row: &AuditRow) -> Option<String> {
        match self {
            AuditColumn::Id => Some(row.id.clone()),
            AuditColumn::Field => row.field.clone(),
            AuditColumn::MetaField => row.meta_field.clone(),
            AuditColumn::Subfield => row.subfield.clone(),
            AuditColumn::Doctype => row.doctype.clone(),
            AuditColumn::MetaDoctype => row.meta_doctype.clone(),
            AuditColumn::Language => row.language.clone(),
            AuditColumn::Year => Some(row.year.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharePredicate {
    ZeroBcite,
    CdEqualsOne,
}

impl SharePredicate {
    pub fn as_str(&self) -> &'static str {
        match self {
            SharePredicate::ZeroBcite => "zero_bcite",
            SharePredicate::CdEqualsOne => "cd_equals_one",
        }
    }

    pub fn parse(s: &str) -> Option<SharePredicate> {
        match s {
            "zero_bcite" => Some(SharePredicate::ZeroBcite),
            "cd_equals_one" => Some(SharePredicate::CdEqualsOne),
            _ => None,
        }
    }

    fn holds(&self, row: &AuditRow) -> bool {
        match self {
            SharePredicate::ZeroBcite => row.zero_bcite,
            SharePredicate::CdEqualsOne => row.cd_equals_one,
        }
    }
}

/// One group of a prevalence share: key values (absent metadata prints as
/// an empty value, kept distinct from any real category), group size, and
/// the predicate share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShareRow {
    pub key: Vec<Option<String>>,
    pub count: u64,
    pub true_count: u64,
    pub share: f64,
}

/// Per-group predicate shares, ordered by key. Groups with zero rows never
/// materialize.
pub fn group_share(
    table: &AuditTable,
    keys: &[AuditColumn],
    predicate: SharePredicate,
) -> Vec<GroupShareRow> {
    let mut groups: BTreeMap<Vec<Option<String>>, (u64, u64)> = BTreeMap::new();
    for row in &table.rows {
        let key: Vec<Option<String>> = keys.iter().map(|k| k.value(row)).collect();
        let entry = groups.entry(key).or_insert((0, 0));
        entry.0 += 1;
        if predicate.holds(row) {
            entry.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(key, (count, true_count))| GroupShareRow {
            key,
            count,
            true_count,
            share: true_count as f64 / count as f64,
        })
        .collect()
}

/// Options for the coverage contingency join. A side counts backward
/// citations as recorded when `bcite_count > 0`, or additionally when
/// `unlinked_ref_count > 0` if the side's flag is set (the default), since
/// unlinked references still witness recorded metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageOptions {
    pub unlinked_counts_a: bool,
    pub unlinked_counts_b: bool,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions {
            unlinked_counts_a: true,
            unlinked_counts_b: true,
        }
    }
}

/// 2x2 coverage table: rows are table A's recorded/not-recorded, columns
/// table B's, over the inner join on the match key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub row_label: String,
    pub col_label: String,
    pub yes_yes: u64,
    pub yes_no: u64,
    pub no_yes: u64,
    pub no_no: u64,
}

impl ContingencyTable2x2 {
    pub fn total(&self) -> u64 {
        self.yes_yes + self.yes_no + self.no_yes + self.no_no
    }

    /// Cell percentages of the joined total in (yes_yes, yes_no, no_yes,
    /// no_no) order; zeros when the join is empty.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total();
        if total == 0 {
            return [0.0; 4];
        }
        let pct = |c: u64| 100.0 * c as f64 / total as f64;
        [
            pct(self.yes_yes),
            pct(self.yes_no),
            pct(self.no_yes),
            pct(self.no_no),
        ]
    }

    pub fn transpose(&self) -> ContingencyTable2x2 {
        ContingencyTable2x2 {
            row_label: self.col_label.clone(),
            col_label: self.row_label.clone(),
            yes_yes: self.yes_yes,
            yes_no: self.no_yes,
            no_yes: self.yes_no,
            no_no: self.no_no,
        }
    }
}

/// Inner-joins two audit tables on `match_key` and cross-tabulates whether
/// each side records backward citations. The match key must be unique
/// within each table.
pub fn coverage_contingency(
    table_a: &AuditTable,
    table_b: &AuditTable,
    match_key: AuditColumn,
    options: &CoverageOptions,
    row_label: &str,
    col_label: &str,
) -> Result<ContingencyTable2x2, AuditError> {
    let keyed = |table: &AuditTable,
                 unlinked_counts: bool,
                 name: &str|
     -> Result<HashMap<String, bool>, AuditError> {
        let mut map = HashMap::with_capacity(table.rows.len());
        for row in &table.rows {
            let Some(key) = match_key.value(row) else {
                continue;
            };
            let recorded =
                !row.zero_bcite || (unlinked_counts && row.unlinked_ref_count > 0);
            if map.insert(key.clone(), recorded).is_some() {
                return Err(AuditError::DuplicateKey {
                    key,
                    table: name.to_string(),
                });
            }
        }
        Ok(map)
    };
    let a = keyed(table_a, options.unlinked_counts_a, row_label)?;
    let b = keyed(table_b, options.unlinked_counts_b, col_label)?;
    let mut cells = [0u64; 4];
    for (key, &a_recorded) in &a {
        let Some(&b_recorded) = b.get(key) else {
            continue;
        };
        let idx = match (a_recorded, b_recorded) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        cells[idx] += 1;
    }
    Ok(ContingencyTable2x2 {
        row_label: row_label.to_string(),
        col_label: col_label.to_string(),
        yes_yes: cells[0],
        yes_no: cells[1],
        no_yes: cells[2],
        no_no: cells[3],
    })
}

/// Writes group shares as delimited text: one key column per group key.
pub fn write_group_shares<W: Write>(
    rows: &[GroupShareRow],
    keys: &[AuditColumn],
    writer: W,
    delimiter: u8,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let mut header: Vec<String> = keys.iter().map(|k| k.as_str().to_string()).collect();
    header.extend(["count".to_string(), "true_count".to_string(), "share".to_string()]);
    w.write_record(&header)?;
    for row in rows {
        let mut record: Vec<String> = row
            .key
            .iter()
            .map(|k| k.clone().unwrap_or_default())
            .collect();
        record.push(row.count.to_string());
        record.push(row.true_count.to_string());
        record.push(row.share.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, year: i32) -> AuditRow {
        AuditRow {
            id: id.to_string(),
            year,
            field: None,
            subfield: None,
            doctype: None,
            language: None,
            author_count: None,
            unlinked_ref_count: 0,
            meta_field: None,
            meta_doctype: None,
            zero_bcite: false,
            cd: Some(0.5),
            cd_equals_one: false,
        }
    }

    #[test]
    fn table_s9_and_s10_example_mappings() {
        let fields = Crosswalk::sciscinet_fields();
        assert_eq!(fields.lookup("history"), Some("Humanities"));
        assert_eq!(fields.lookup("computer science"), Some("Technology"));
        let dims = Crosswalk::dimensions_doctypes();
        assert_eq!(dims.lookup("RESEARCH_ARTICLE"), Some("Research articles"));
        let wos = Crosswalk::wos_doctypes();
        assert_eq!(wos.lookup("Article"), Some("Research articles"));
        assert_eq!(wos.lookup("Fiction, Creative Prose"), Some(OTHER_CATEGORY));
    }

    #[test]
    fn unknown_label_keep_as_other() {
        let mut table = AuditTable {
            rows: vec![{
                let mut r = row("a", 2000);
                r.field = Some("astrology".to_string());
                r
            }],
        };
        let report =
            apply_crosswalk(&mut table, &Crosswalk::sciscinet_fields(), CrosswalkColumn::Field)
                .unwrap();
        assert_eq!(report.unmapped, 1);
        assert_eq!(report.unmapped_labels["astrology"], 1);
        assert_eq!(table.rows[0].meta_field.as_deref(), Some(OTHER_CATEGORY));
    }

    #[test]
    fn crosswalk_is_idempotent_on_meta_categories() {
        let mut table = AuditTable {
            rows: vec![{
                let mut r = row("a", 2000);
                r.field = Some("history".to_string());
                r
            }],
        };
        let cw = Crosswalk::sciscinet_fields();
        apply_crosswalk(&mut table, &cw, CrosswalkColumn::Field).unwrap();
        let first = table.rows[0].meta_field.clone();
        // feed the mapped value back through as a raw label
        table.rows[0].field = first.clone();
        apply_crosswalk(&mut table, &cw, CrosswalkColumn::Field).unwrap();
        assert_eq!(table.rows[0].meta_field, first);
    }

    #[test]
    fn unmapped_error_policy() {
        let mut cw = Crosswalk::sciscinet_fields();
        cw.unmapped_policy = UnmappedPolicy::Error;
        let mut table = AuditTable {
            rows: vec![{
                let mut r = row("a", 2000);
                r.field = Some("astrology".to_string());
                r
            }],
        };
        assert!(matches!(
            apply_crosswalk(&mut table, &cw, CrosswalkColumn::Field),
            Err(AuditError::UnmappedLabel { .. })
        ));
    }

    #[test]
    fn missing_labels_stay_missing() {
        let mut table = AuditTable {
            rows: vec![row("a", 2000)],
        };
        let report =
            apply_crosswalk(&mut table, &Crosswalk::sciscinet_fields(), CrosswalkColumn::Field)
                .unwrap();
        assert_eq!(report.missing, 1);
        assert_eq!(table.rows[0].meta_field, None);
    }

    #[test]
    fn zero_bcite_filter_keeps_seven_of_ten() {
        let mut rows: Vec<AuditRow> = (0..10).map(|i| row(&format!("r{i}"), 2000)).collect();
        for r in rows.iter_mut().take(3) {
            r.zero_bcite = true;
        }
        let table = AuditTable { rows };
        let criteria = FilterCriteria {
            exclude_zero_bcite: true,
            ..FilterCriteria::default()
        };
        let (kept, report) = filter_corpus(&table, &criteria).unwrap();
        assert_eq!(kept.rows.len(), 7);
        assert_eq!(report.excluded_zero_bcite, 3);
        assert_eq!(report.kept_rows + report.excluded_total(), report.input_rows);
    }

    #[test]
    fn doctype_include_drops_editorials() {
        let mut rows = vec![row("a", 2000), row("b", 2000)];
        rows[0].meta_doctype = Some("Research articles".to_string());
        rows[1].meta_doctype = Some("Editorial and commentary".to_string());
        let table = AuditTable { rows };
        let criteria = FilterCriteria {
            include_doctypes: Some(BTreeSet::from(["Research articles".to_string()])),
            ..FilterCriteria::default()
        };
        let (kept, report) = filter_corpus(&table, &criteria).unwrap();
        assert_eq!(kept.rows.len(), 1);
        assert_eq!(kept.rows[0].id, "a");
        assert_eq!(report.excluded_doctype, 1);
    }

    #[test]
    fn include_filter_without_meta_column_errors() {
        let table = AuditTable {
            rows: vec![row("a", 2000)],
        };
        let criteria = FilterCriteria {
            include_doctypes: Some(BTreeSet::from(["Research articles".to_string()])),
            ..FilterCriteria::default()
        };
        assert!(matches!(
            filter_corpus(&table, &criteria),
            Err(AuditError::MissingColumn(_))
        ));
    }

    #[test]
    fn single_group_share() {
        let mut rows: Vec<AuditRow> = (0..8).map(|i| row(&format!("r{i}"), 2000)).collect();
        rows[0].zero_bcite = true;
        rows[5].zero_bcite = true;
        let table = AuditTable { rows };
        let shares = group_share(&table, &[AuditColumn::Year], SharePredicate::ZeroBcite);
        assert_eq!(shares.len(), 1);
        assert_eq!(shares[0].count, 8);
        assert_eq!(shares[0].share, 0.25);
    }

    #[test]
    fn all_true_group_share_is_one() {
        let mut rows: Vec<AuditRow> = (0..4).map(|i| row(&format!("r{i}"), 2000)).collect();
        for r in &mut rows {
            r.zero_bcite = true;
        }
        let table = AuditTable { rows };
        let shares = group_share(&table, &[AuditColumn::Year], SharePredicate::ZeroBcite);
        assert_eq!(shares[0].share, 1.0);
    }

    #[test]
    fn pooled_share_equals_weighted_group_shares() {
        let mut rows = Vec::new();
        for i in 0..30 {
            let mut r = row(&format!("r{i}"), 2000 + (i % 3));
            r.field = Some(if i % 2 == 0 { "a" } else { "b" }.to_string());
            r.zero_bcite = i % 5 == 0;
            rows.push(r);
        }
        let table = AuditTable { rows };
        let grouped = group_share(
            &table,
            &[AuditColumn::Field, AuditColumn::Year],
            SharePredicate::ZeroBcite,
        );
        let total: u64 = grouped.iter().map(|g| g.count).sum();
        let true_total: u64 = grouped.iter().map(|g| g.true_count).sum();
        let pooled = group_share(&table, &[], SharePredicate::ZeroBcite);
        assert_eq!(pooled[0].count, total);
        assert_eq!(pooled[0].true_count, true_total);
    }

    #[test]
    fn contingency_disjoint_and_identical() {
        let make = |prefix: &str, zero: &[bool]| AuditTable {
            rows: zero
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    let mut r = row(&format!("{prefix}{i}"), 2000);
                    r.zero_bcite = z;
                    r
                })
                .collect(),
        };
        let a = make("a", &[true, false]);
        let b = make("b", &[true, false]);
        let empty = coverage_contingency(
            &a,
            &b,
            AuditColumn::Id,
            &CoverageOptions::default(),
            "A",
            "B",
        )
        .unwrap();
        assert_eq!(empty.total(), 0);

        let same = make("x", &[true, false, false]);
        let table = coverage_contingency(
            &same,
            &same.clone(),
            AuditColumn::Id,
            &CoverageOptions::default(),
            "A",
            "B",
        )
        .unwrap();
        assert_eq!(table.yes_no, 0);
        assert_eq!(table.no_yes, 0);
        assert_eq!(table.total(), 3);
    }

    #[test]
    fn contingency_transposes_on_swap() {
        let make = |zeros: &[bool], unlinked: &[u32]| AuditTable {
            rows: zeros
                .iter()
                .zip(unlinked)
                .enumerate()
                .map(|(i, (&z, &u))| {
                    let mut r = row(&format!("k{i}"), 2000);
                    r.zero_bcite = z;
                    r.unlinked_ref_count = u;
                    r
                })
                .collect(),
        };
        let a = make(&[true, false, true, false], &[0, 0, 1, 0]);
        let b = make(&[false, false, true, true], &[0, 0, 0, 0]);
        let options = CoverageOptions::default();
        let ab =
            coverage_contingency(&a, &b, AuditColumn::Id, &options, "A", "B").unwrap();
        let ba =
            coverage_contingency(&b, &a, AuditColumn::Id, &options, "B", "A").unwrap();
        assert_eq!(ab.transpose(), ba);
        let pct = ab.percentages();
        assert!((pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unlinked_refs_flip_recorded_when_enabled() {
        let mut r0 = row("k0", 2000);
        r0.zero_bcite = true;
        r0.unlinked_ref_count = 3;
        let a = AuditTable {
            rows: vec![r0.clone()],
        };
        let b = AuditTable { rows: vec![r0] };
        let on = coverage_contingency(
            &a,
            &b,
            AuditColumn::Id,
            &CoverageOptions::default(),
            "A",
            "B",
        )
        .unwrap();
        assert_eq!(on.yes_yes, 1);
        let off = coverage_contingency(
            &a,
            &b,
            AuditColumn::Id,
            &CoverageOptions {
                unlinked_counts_a: false,
                unlinked_counts_b: false,
            },
            "A",
            "B",
        )
        .unwrap();
        assert_eq!(off.no_no, 1);
    }

    #[test]
    fn duplicate_match_keys_rejected() {
        let table = AuditTable {
            rows: vec![
                {
                    let mut r = row("a", 2000);
                    r.field = Some("x".to_string());
                    r
                },
                {
                    let mut r = row("b", 2000);
                    r.field = Some("x".to_string());
                    r
                },
            ],
        };
        assert!(matches!(
            coverage_contingency(
                &table,
                &table.clone(),
                AuditColumn::Field,
                &CoverageOptions::default(),
                "A",
                "B",
            ),
            Err(AuditError::DuplicateKey { .. })
        ));
    }
}
