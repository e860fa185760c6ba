//! OLS with year dummies, corpus controls, fixed effects, robust and
//! clustered standard errors, predicted-value curves, and percentile
//! trend-slope fits.
//!
//! Inference is large-sample throughout: p-values are two-sided normal and
//! confidence intervals use the 1.96 multiplier. Undefined values are
//! handled by listwise deletion with a reported drop count; collinear
//! columns are dropped deterministically, later-assembled column first.

mod design;
mod ols;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_design, Absorbed, ColKind, Design};
pub use ols::{ols_fit, predict_years, Coefficient, PredictionCurve, PredictionPoint, RegressionFit};

use crate::metrics::MetricName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Classical,
    RobustHc0,
    RobustHc1,
    Clustered,
}

impl SeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeKind::Classical => "classical",
            SeKind::RobustHc0 => "robust_hc0",
            SeKind::RobustHc1 => "robust_hc1",
            SeKind::Clustered => "clustered",
        }
    }

    pub fn parse(s: &str) -> Option<SeKind> {
        match s {
            "classical" => Some(SeKind::Classical),
            "robust_hc0" => Some(SeKind::RobustHc0),
            "robust_hc1" => Some(SeKind::RobustHc1),
            "clustered" => Some(SeKind::Clustered),
            _ => None,
        }
    }
}

/// Paper-level and field-by-year controls available to a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    ZeroBciteDummy,
    NCited,
    NNewWorksFieldYear,
    MeanCitedFieldYear,
    MeanAuthorsFieldYear,
    UnlinkedRefs,
    CdRandom,
}

impl Control {
    pub const ALL: [Control; 7] = [
        Control::ZeroBciteDummy,
        Control::NCited,
        Control::NNewWorksFieldYear,
        Control::MeanCitedFieldYear,
        Control::MeanAuthorsFieldYear,
        Control::UnlinkedRefs,
        Control::CdRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Control::ZeroBciteDummy => "zero_bcite_dummy",
            Control::NCited => "n_cited",
            Control::NNewWorksFieldYear => "n_new_works_field_year",
            Control::MeanCitedFieldYear => "mean_cited_field_year",
            Control::MeanAuthorsFieldYear => "mean_authors_field_year",
            Control::UnlinkedRefs => "unlinked_refs",
            Control::CdRandom => "cd_random",
        }
    }

    pub fn parse(s: &str) -> Option<Control> {
        Control::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Metadata column carrying fixed-effect groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeColumn {
    Subfield,
    Field,
}

impl FeColumn {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeColumn::Subfield => "subfield",
            FeColumn::Field => "field",
        }
    }

    pub fn parse(s: &str) -> Option<FeColumn> {
        match s {
            "subfield" => Some(FeColumn::Subfield),
            "field" => Some(FeColumn::Field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKey {
    Id,
    Field,
    Subfield,
    Year,
}

impl ClusterKey {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusterKey::Id => "id",
            ClusterKey::Field => "field",
            ClusterKey::Subfield => "subfield",
            ClusterKey::Year => "year",
        }
    }

    pub fn parse(s: &str) -> Option<ClusterKey> {
        match s {
            "id" => Some(ClusterKey::Id),
            "field" => Some(ClusterKey::Field),
            "subfield" => Some(ClusterKey::Subfield),
            "year" => Some(ClusterKey::Year),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSpec {
    pub response: MetricName,
    /// Reference category for the year indicators.
    pub base_year: i32,
    pub controls: Vec<Control>,
    pub fixed_effects: Option<FeColumn>,
    pub cluster_key: Option<ClusterKey>,
    pub se_kind: SeKind,
    /// Fixed effects switch from dummy expansion to within-demeaning when
    /// the group count exceeds this threshold.
    pub fe_dummy_threshold: usize,
}

impl DesignSpec {
    pub fn new(response: MetricName, base_year: i32) -> Self {
        DesignSpec {
            response,
            base_year,
            controls: Vec::new(),
            fixed_effects: None,
            cluster_key: None,
            se_kind: SeKind::RobustHc1,
            fe_dummy_threshold: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        match (self.se_kind, self.cluster_key.is_some()) {
            (SeKind::Clustered, false) => Err(StatsError::ClusterKeyRequired),
            (SeKind::Clustered, true) => Ok(()),
            (_, true) => Err(StatsError::ClusterKeyUnused),
            (_, false) => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("metadata column {0:?} is absent from the corpus")]
    MissingColumn(String),
    #[error("cd_random control requested but no ensemble values were provided")]
    MissingCdRandom,
    #[error("base year {0} not present in the data after row deletion")]
    BaseYearMissing(i32),
    #[error("design has no usable rows")]
    EmptyDesign,
    #[error("too few rows: n = {n} <= model parameters k = {k}")]
    NotEnoughRows { n: usize, k: usize },
    #[error("all design columns were dropped as collinear")]
    AllColumnsDropped,
    #[error("clustered standard errors require a cluster key")]
    ClusterKeyRequired,
    #[error("clustered standard errors need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("cluster key provided but se_kind is not clustered")]
    ClusterKeyUnused,
    #[error("trend fit needs at least 3 distinct years, got {0}")]
    DegenerateYears(usize),
    #[error("year variance is zero")]
    DegenerateYearVariance,
    #[error("year {0} not present in the fitted design")]
    YearNotInFit(i32),
}

/// Simple OLS of a per-work value (typically a pooled percentile) on
/// calendar year. The year coefficient is the change per year.
pub fn trend_slope(series: &[(i32, f64)], se_kind: SeKind) -> Result<RegressionFit, StatsError> {
    let distinct: std::collections::BTreeSet<i32> = series.iter().map(|&(y, _)| y).collect();
    if distinct.len() < 3 {
        return Err(StatsError::DegenerateYears(distinct.len()));
    }
    let n = series.len();
    let mut x = ndarray::Array2::<f64>::zeros((n, 2));
    let mut y = ndarray::Array1::<f64>::zeros(n);
    for (row, &(year, value)) in series.iter().enumerate() {
        x[[row, 0]] = 1.0;
        x[[row, 1]] = year as f64;
        y[row] = value;
    }
    let design = Design::from_matrix(
        x,
        y,
        vec!["intercept".to_string(), "year".to_string()],
        vec![ColKind::Intercept, ColKind::Raw],
    );
    let fit = ols_fit(&design, se_kind)?;
    if !fit.coefficients.iter().any(|c| c.name == "year") {
        return Err(StatsError::DegenerateYearVariance);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_linear_series_is_exact() {
        let series: Vec<(i32, f64)> = (1945..=2010)
            .map(|y| (y, 430.33 - 0.19 * y as f64))
            .collect();
        let fit = trend_slope(&series, SeKind::Classical).unwrap();
        let slope = fit.coefficient("year").unwrap();
        assert!((slope.estimate - (-0.19)).abs() < 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-10);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let series: Vec<(i32, f64)> = (2000..2020).map(|y| (y, 42.0)).collect();
        let fit = trend_slope(&series, SeKind::Classical).unwrap();
        let slope = fit.coefficient("year").unwrap();
        assert!(slope.estimate.abs() < 1e-10);
    }

    #[test]
    fn too_few_years_rejected() {
        let series = vec![(2000, 1.0), (2001, 2.0), (2000, 1.5)];
        assert!(matches!(
            trend_slope(&series, SeKind::Classical),
            Err(StatsError::DegenerateYears(2))
        ));
    }

    #[test]
    fn spec_validation_pairs_cluster_key_with_se_kind() {
        let mut spec = DesignSpec::new(MetricName::Cd, 2000);
        assert!(spec.validate().is_ok());
        spec.se_kind = SeKind::Clustered;
        assert!(matches!(
            spec.validate(),
            Err(StatsError::ClusterKeyRequired)
        ));
        spec.cluster_key = Some(ClusterKey::Id);
        assert!(spec.validate().is_ok());
        spec.se_kind = SeKind::RobustHc1;
        assert!(matches!(spec.validate(), Err(StatsError::ClusterKeyUnused)));
    }
}
