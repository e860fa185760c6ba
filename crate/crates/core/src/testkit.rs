//! Test-support oracles and fixture builders.
//!
//! Everything here is written directly from the set definitions and plain
//! matrix arithmetic, deliberately avoiding the production code paths
//! (adjacency caches, shared-count kernels, QR solvers) so the test suites
//! can compare two independent routes. Not intended for production use.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::metrics::{CdComponents, MetricConfig};

/// A corpus as raw id-level rows, the shape the oracles consume.
#[derive(Debug, Clone, Default)]
pub struct RawCorpus {
    /// (id, year)
    pub nodes: Vec<(String, i32)>,
    /// (citing_id, cited_id)
    pub edges: Vec<(String, String)>,
}

impl RawCorpus {
    pub fn year_of(&self, id: &str) -> i32 {
        self.nodes
            .iter()
            .find(|(n, _)| n == id)
            .map(|(_, y)| *y)
            .expect("unknown id in raw corpus")
    }
}

/// Degree recount straight off the raw edge rows: id -> (in, out).
pub fn recount_degrees(corpus: &RawCorpus) -> HashMap<String, (usize, usize)> {
    let mut degrees: HashMap<String, (usize, usize)> = corpus
        .nodes
        .iter()
        .map(|(id, _)| (id.clone(), (0, 0)))
        .collect();
    for (citing, cited) in &corpus.edges {
        degrees.get_mut(cited).expect("cited id").0 += 1;
        degrees.get_mut(citing).expect("citing id").1 += 1;
    }
    degrees
}

/// Brute-force CD components from the set definitions.
///
/// B_f = works f cites; C_f = works citing f; C_B = works citing any member
/// of B_f. Inside the forward window, J = citers sharing >= l references,
/// I = remaining citers, K = window works in C_B that do not cite f. The
/// focal work itself never counts.
pub fn oracle_cd_components(
    corpus: &RawCorpus,
    focal: &str,
    config: &MetricConfig,
) -> CdComponents {
    let focal_year = corpus.year_of(focal);
    let lo = if config.include_same_year {
        focal_year
    } else {
        focal_year + 1
    };
    let hi = focal_year + config.window_years as i32;
    let in_window = |id: &str| {
        let y = corpus.year_of(id);
        y >= lo && y <= hi
    };

    let b_f: HashSet<&str> = corpus
        .edges
        .iter()
        .filter(|(citing, _)| citing == focal)
        .map(|(_, cited)| cited.as_str())
        .collect();
    let c_f: HashSet<&str> = corpus
        .edges
        .iter()
        .filter(|(_, cited)| cited == focal)
        .map(|(citing, _)| citing.as_str())
        .collect();

    let refs_of = |id: &str| -> HashSet<&str> {
        corpus
            .edges
            .iter()
            .filter(|(citing, _)| citing == id)
            .map(|(_, cited)| cited.as_str())
            .collect()
    };

    let mut n_i = 0u32;
    let mut n_j = 0u32;
    for &c in &c_f {
        if c == focal || !in_window(c) {
            continue;
        }
        let shared = refs_of(c).intersection(&b_f).count() as u32;
        if shared >= config.coupling_threshold {
            n_j += 1;
        } else {
            n_i += 1;
        }
    }

    let mut c_b: HashSet<&str> = HashSet::new();
    for (citing, cited) in &corpus.edges {
        if b_f.contains(cited.as_str()) {
            c_b.insert(citing.as_str());
        }
    }
    let n_k = c_b
        .iter()
        .filter(|&&w| w != focal && in_window(w) && !c_f.contains(w))
        .count() as u32;

    CdComponents {
        n_i,
        n_j,
        n_k,
        bcite_count: b_f.len() as u32,
    }
}

/// A random citation corpus: up to `max_nodes` works over `year_span` years,
/// each pair (later, earlier-or-same-year) wired with probability `density`.
/// Same-year edges follow the default load policy (allowed, no loops).
pub fn random_corpus<R: Rng>(
    rng: &mut R,
    max_nodes: usize,
    year_span: i32,
    density: f64,
) -> RawCorpus {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let nodes: Vec<(String, i32)> = (0..n)
        .map(|i| (format!("n{i}"), 2000 + rng.gen_range(0..year_span)))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (citing_year, cited_year) = (nodes[i].1, nodes[j].1);
            if citing_year < cited_year {
                continue;
            }
            if rng.gen_bool(density) {
                edges.push((nodes[i].0.clone(), nodes[j].0.clone()));
            }
        }
    }
    RawCorpus { nodes, edges }
}

/// OLS fitted by explicit normal equations with a Gauss-Jordan inverse,
/// plus the covariance formulas written out as raw sums. An independent
/// route against the production QR path.
pub struct OracleOls {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub xtx_inv: Vec<Vec<f64>>,
}

pub fn oracle_ols(x: &[Vec<f64>], y: &[f64]) -> OracleOls {
    let n = x.len();
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for row in 0..n {
        for a in 0..k {
            xty[a] += x[row][a] * y[row];
            for b in 0..k {
                xtx[a][b] += x[row][a] * x[row][b];
            }
        }
    }
    let xtx_inv = gauss_jordan_inverse(&xtx).expect("oracle design must be full rank");
    let beta: Vec<f64> = (0..k)
        .map(|a| (0..k).map(|b| xtx_inv[a][b] * xty[b]).sum())
        .collect();
    let residuals: Vec<f64> = (0..n)
        .map(|row| y[row] - (0..k).map(|a| x[row][a] * beta[a]).sum::<f64>())
        .collect();
    OracleOls {
        beta,
        residuals,
        xtx_inv,
    }
}

impl OracleOls {
    pub fn classical_cov(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = x.len();
        let k = x[0].len();
        let ssr: f64 = self.residuals.iter().map(|e| e * e).sum();
        let sigma2 = ssr / (n - k) as f64;
        scale(&self.xtx_inv, sigma2)
    }

    pub fn hc_cov(&self, x: &[Vec<f64>], hc1: bool) -> Vec<Vec<f64>> {
        let n = x.len();
        let k = x[0].len();
        let mut meat = vec![vec![0.0; k]; k];
        for row in 0..n {
            let e2 = self.residuals[row] * self.residuals[row];
            for a in 0..k {
                for b in 0..k {
                    meat[a][b] += e2 * x[row][a] * x[row][b];
                }
            }
        }
        let sandwich = mat_mul(&mat_mul(&self.xtx_inv, &meat), &self.xtx_inv);
        if hc1 {
            scale(&sandwich, n as f64 / (n - k) as f64)
        } else {
            sandwich
        }
    }

    pub fn clustered_cov(&self, x: &[Vec<f64>], clusters: &[usize]) -> Vec<Vec<f64>> {
        let n = x.len();
        let k = x[0].len();
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (row, &g) in clusters.iter().enumerate() {
            groups.entry(g).or_default().push(row);
        }
        let g_count = groups.len();
        let mut meat = vec![vec![0.0; k]; k];
        for rows in groups.values() {
            let mut s = vec![0.0; k];
            for &row in rows {
                for a in 0..k {
                    s[a] += self.residuals[row] * x[row][a];
                }
            }
            for a in 0..k {
                for b in 0..k {
                    meat[a][b] += s[a] * s[b];
                }
            }
        }
        let sandwich = mat_mul(&mat_mul(&self.xtx_inv, &meat), &self.xtx_inv);
        let correction = (g_count as f64 / (g_count as f64 - 1.0))
            * ((n as f64 - 1.0) / (n - k) as f64);
        scale(&sandwich, correction)
    }
}

pub fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut ext = row.clone();
            ext.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            ext
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let div = a[col][col];
        for v in a[col].iter_mut() {
            *v /= div;
        }
        for row in 0..k {
            if row != col {
                let factor = a[row][col];
                for j in 0..2 * k {
                    a[row][j] -= factor * a[col][j];
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[k..].to_vec()).collect())
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..inner {
            for j in 0..m {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

fn scale(a: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| row.iter().map(|v| v * s).collect())
        .collect()
}
