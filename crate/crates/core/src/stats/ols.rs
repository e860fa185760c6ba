//! Least-squares fitting and prediction.
//!
//! The solver is a column-ordered modified Gram-Schmidt QR with
//! reorthogonalization. Columns whose residual norm falls below tolerance
//! are dropped in assembly order (later column first), which keeps the
//! intercept and earlier year dummies when a later column is collinear.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{ColKind, Design, SeKind, StatsError};

const COLLINEARITY_TOL: f64 = 1e-10;
const CI_MULTIPLIER: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub coefficients: Vec<Coefficient>,
    /// Covariance of the kept coefficients under `se_kind`, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub se_kind: SeKind,
    pub n: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    pub dropped_rows: usize,
    pub dropped_columns: Vec<String>,
    pub n_clusters: Option<usize>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

struct Qr {
    kept: Vec<usize>,
    dropped: Vec<usize>,
    /// Orthonormal columns, one per kept column.
    q: Vec<Array1<f64>>,
    /// Upper-triangular R over kept columns: r[i][j] for i <= j.
    r: Vec<Vec<f64>>,
}

fn mgs_qr(x: &Array2<f64>, tol: f64) -> Qr {
    let k = x.ncols();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut q: Vec<Array1<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    for j in 0..k {
        let original = x.column(j).to_owned();
        let original_norm = original.dot(&original).sqrt();
        let mut v = original;
        let mut coeffs = vec![0.0; q.len()];
        // two projection passes keep Q orthonormal to working precision
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = qi.dot(&v);
                coeffs[i] += c;
                v.scaled_add(-c, qi);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm <= tol * original_norm.max(1.0) {
            dropped.push(j);
            continue;
        }
        coeffs.push(norm);
        r.push(coeffs);
        q.push(v / norm);
        kept.push(j);
    }
    Qr { kept, dropped, q, r }
}

impl Qr {
    /// Solves R beta = Q^T y by back substitution.
    fn solve(&self, y: &Array1<f64>) -> Vec<f64> {
        let k = self.q.len();
        let qty: Vec<f64> = self.q.iter().map(|qi| qi.dot(y)).collect();
        let mut beta = vec![0.0; k];
        for i in (0..k).rev() {
            let mut value = qty[i];
            for j in (i + 1)..k {
                value -= self.r[j][i] * beta[j];
            }
            beta[i] = value / self.r[i][i];
        }
        beta
    }

    /// (X^T X)^(-1) = R^(-1) R^(-T) over kept columns.
    fn xtx_inverse(&self) -> Array2<f64> {
        let k = self.q.len();
        // invert upper-triangular R column by column
        let mut rinv = Array2::<f64>::zeros((k, k));
        for col in 0..k {
            let mut e = vec![0.0; k];
            e[col] = 1.0;
            for i in (0..=col).rev() {
                let mut value = e[i];
                for j in (i + 1)..=col {
                    value -= self.r[j][i] * rinv[[j, col]];
                }
                rinv[[i, col]] = value / self.r[i][i];
            }
        }
        let mut out = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                let mut sum = 0.0;
                for l in j.max(i)..k {
                    sum += rinv[[i, l]] * rinv[[j, l]];
                }
                out[[i, j]] = sum;
            }
        }
        out
    }
}

fn symmetrize(m: &mut Array2<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = (m[[i, j]] + m[[j, i]]) / 2.0;
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

/// Fits the design by QR least squares and computes the requested
/// covariance. The absorbed group count (within-FE path) enters the model
/// degrees of freedom so both fixed-effect paths scale identically.
pub fn ols_fit(design: &Design, se_kind: SeKind) -> Result<RegressionFit, StatsError> {
    let n = design.x.nrows();
    if n == 0 {
        return Err(StatsError::EmptyDesign);
    }
    let qr = mgs_qr(&design.x, COLLINEARITY_TOL);
    if qr.kept.is_empty() {
        return Err(StatsError::AllColumnsDropped);
    }
    let absorbed = design.absorbed.as_ref().map(|a| a.groups).unwrap_or(0);
    let k_model = qr.kept.len() + absorbed;
    if n <= k_model {
        return Err(StatsError::NotEnoughRows { n, k: k_model });
    }

    let beta = qr.solve(&design.y);
    let kept_x = design.x.select(ndarray::Axis(1), &qr.kept);
    let fitted = kept_x.dot(&Array1::from(beta.clone()));
    let residuals = &design.y - &fitted;
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n - k_model;

    let xtx_inv = qr.xtx_inverse();
    let k = qr.kept.len();
    let mut covariance = match se_kind {
        SeKind::Classical => {
            let sigma2 = ssr / df_resid as f64;
            &xtx_inv * sigma2
        }
        SeKind::RobustHc0 | SeKind::RobustHc1 => {
            let mut meat = Array2::<f64>::zeros((k, k));
            for row in 0..n {
                let e2 = residuals[row] * residuals[row];
                for a in 0..k {
                    let xa = kept_x[[row, a]];
                    for b in 0..k {
                        meat[[a, b]] += e2 * xa * kept_x[[row, b]];
                    }
                }
            }
            let sandwich = xtx_inv.dot(&meat).dot(&xtx_inv);
            if se_kind == SeKind::RobustHc1 {
                &sandwich * (n as f64 / df_resid as f64)
            } else {
                sandwich
            }
        }
        SeKind::Clustered => {
            let cluster_ids = design
                .cluster_ids
                .as_ref()
                .ok_or(StatsError::ClusterKeyRequired)?;
            let g = design.n_clusters.unwrap_or(0);
            if g < 2 {
                return Err(StatsError::TooFewClusters(g));
            }
            let mut sums = vec![vec![0.0f64; k]; g];
            for row in 0..n {
                let grp = cluster_ids[row];
                for a in 0..k {
                    sums[grp][a] += residuals[row] * kept_x[[row, a]];
                }
            }
            let mut meat = Array2::<f64>::zeros((k, k));
            for s in &sums {
                for a in 0..k {
                    for b in 0..k {
                        meat[[a, b]] += s[a] * s[b];
                    }
                }
            }
            let correction = (g as f64 / (g as f64 - 1.0))
                * ((n as f64 - 1.0) / df_resid as f64);
            let sandwich = xtx_inv.dot(&meat).dot(&xtx_inv);
            &sandwich * correction
        }
    };
    symmetrize(&mut covariance);

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let coefficients: Vec<Coefficient> = qr
        .kept
        .iter()
        .enumerate()
        .map(|(i, &col)| {
            let estimate = beta[i];
            let se = covariance[[i, i]].max(0.0).sqrt();
            let t = if se > 0.0 { estimate / se } else { f64::INFINITY };
            let p = if se > 0.0 {
                2.0 * (1.0 - normal.cdf(t.abs()))
            } else {
                0.0
            };
            Coefficient {
                name: design.names[col].clone(),
                estimate,
                se,
                t,
                p,
                ci_low: estimate - CI_MULTIPLIER * se,
                ci_high: estimate + CI_MULTIPLIER * se,
            }
        })
        .collect();

    // R^2 against the original (pre-demeaning) response
    let y_mean = design.y_original.mean().unwrap_or(0.0);
    let sst: f64 = design
        .y_original
        .iter()
        .map(|v| (v - y_mean) * (v - y_mean))
        .sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    Ok(RegressionFit {
        coefficients,
        covariance: (0..k)
            .map(|i| (0..k).map(|j| covariance[[i, j]]).collect())
            .collect(),
        se_kind,
        n,
        df_resid,
        r_squared,
        dropped_rows: design.dropped_rows,
        dropped_columns: qr.dropped.iter().map(|&j| design.names[j].clone()).collect(),
        n_clusters: design.n_clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub year: i32,
    pub predicted: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-year predicted response with delta-method confidence bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCurve {
    pub points: Vec<PredictionPoint>,
    /// Documents the covariate profile the curve was evaluated at.
    pub profile: String,
}

/// Predicted response per year level, holding controls at their sample
/// means and fixed-effect dummies at their group shares. On the within-FE
/// path the absorbed constant is the grand mean, treated as fixed.
pub fn predict_years(fit: &RegressionFit, design: &Design) -> Result<PredictionCurve, StatsError> {
    if design.year_levels.is_empty() {
        return Err(StatsError::YearNotInFit(0));
    }
    let kept: Vec<usize> = fit
        .coefficients
        .iter()
        .map(|c| {
            design
                .names
                .iter()
                .position(|n| n == &c.name)
                .expect("fit columns come from this design")
        })
        .collect();
    let k = kept.len();
    let normal_profile = |target_year: i32| -> Vec<f64> {
        kept.iter()
            .map(|&col| match &design.col_kinds[col] {
                ColKind::Intercept => 1.0,
                ColKind::YearDummy(year) => {
                    if *year == target_year {
                        1.0
                    } else {
                        0.0
                    }
                }
                ColKind::Control(_) | ColKind::FeDummy(_) | ColKind::Raw => {
                    design.profile_means[col]
                }
            })
            .collect()
    };

    let mut points = Vec::with_capacity(design.year_levels.len());
    for &year in &design.year_levels {
        let raw = normal_profile(year);
        let (point, var) = match &design.absorbed {
            None => {
                let point: f64 = raw
                    .iter()
                    .zip(&fit.coefficients)
                    .map(|(p, c)| p * c.estimate)
                    .sum();
                let var = quadratic_form(&raw, &fit.covariance, k);
                (point, var)
            }
            Some(absorbed) => {
                let delta: Vec<f64> = kept
                    .iter()
                    .zip(&raw)
                    .map(|(&col, p)| p - absorbed.x_grand_means[col])
                    .collect();
                let shift: f64 = delta
                    .iter()
                    .zip(&fit.coefficients)
                    .map(|(d, c)| d * c.estimate)
                    .sum();
                let var = quadratic_form(&delta, &fit.covariance, k);
                (absorbed.y_grand_mean + shift, var)
            }
        };
        let half_width = CI_MULTIPLIER * var.max(0.0).sqrt();
        points.push(PredictionPoint {
            year,
            predicted: point,
            ci_low: point - half_width,
            ci_high: point + half_width,
        });
    }
    let profile = match &design.absorbed {
        None => "controls at sample means; fixed-effect dummies at group shares".to_string(),
        Some(a) => format!(
            "controls at sample means; {} absorbed groups at grand mean (treated as fixed)",
            a.groups
        ),
    };
    Ok(PredictionCurve { points, profile })
}

fn quadratic_form(v: &[f64], cov: &[Vec<f64>], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            total += v[i] * cov[i][j] * v[j];
        }
    }
    total
}
