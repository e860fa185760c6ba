//! Seeded synthetic citation corpora.
//!
//! Works arrive year by year; each draws a reference count from a
//! gamma-Poisson mixture (variance = mean * dispersion) and picks targets
//! among prior-year works by a mix of uniform choice, degree-proportional
//! attachment, and triadic closure. A closure step copies a reference of an
//! already-cited work, which plants J-type coupling on that work; raising
//! the closure rate over the years plants a declining disruptiveness trend
//! in younger cohorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CitationGraph, NodeId, WorkNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub start_year: i32,
    pub years: u32,
    pub works_first_year: u32,
    /// Yearly growth of the cohort size.
    pub growth_rate: f64,
    pub ref_mean: f64,
    /// Variance of the reference count is `ref_mean * ref_dispersion`;
    /// 1.0 gives a Poisson count.
    pub ref_dispersion: f64,
    /// Probability a citation slot runs a triadic-closure step in year 0.
    pub closure_rate: f64,
    /// Additive change of the closure rate per year.
    pub closure_trend_per_year: f64,
    /// Probability an attachment slot picks targets by in-degree rather
    /// than uniformly.
    pub pa_strength: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            start_year: 2000,
            years: 10,
            works_first_year: 100,
            growth_rate: 0.0,
            ref_mean: 4.0,
            ref_dispersion: 2.0,
            closure_rate: 0.0,
            closure_trend_per_year: 0.0,
            pa_strength: 0.3,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
}

impl SyntheticSpec {
    pub fn closure_rate_for(&self, year_index: u32) -> f64 {
        self.closure_rate + self.closure_trend_per_year * year_index as f64
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.years == 0 {
            return Err(SynthError::Infeasible("years must be >= 1".to_string()));
        }
        if self.works_first_year == 0 {
            return Err(SynthError::Infeasible(
                "works_first_year must be >= 1".to_string(),
            ));
        }
        if self.ref_mean < 0.0 {
            return Err(SynthError::Infeasible("ref_mean must be >= 0".to_string()));
        }
        if self.ref_dispersion < 1.0 {
            return Err(SynthError::Infeasible(
                "ref_dispersion must be >= 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.pa_strength) {
            return Err(SynthError::Infeasible(
                "pa_strength must lie in [0, 1]".to_string(),
            ));
        }
        for k in 0..self.years {
            let rho = self.closure_rate_for(k);
            if !(0.0..=1.0).contains(&rho) {
                return Err(SynthError::Infeasible(format!(
                    "closure rate leaves [0, 1] in year {} (rho = {rho})",
                    self.start_year + k as i32
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub works: u64,
    pub edges: u64,
    /// Citation slots lost to truncation (not enough distinct prior works)
    /// or exhausted retry budgets.
    pub truncated_refs: u64,
    pub closure_rate_by_year: Vec<(i32, f64)>,
}

const FIELDS: [(&str, &str); 9] = [
    ("biology", "Life sciences"),
    ("medicine", "Life sciences"),
    ("chemistry", "Physical sciences"),
    ("physics", "Physical sciences"),
    ("economics", "Social sciences"),
    ("psychology", "Social sciences"),
    ("computer science", "Technology"),
    ("engineering", "Technology"),
    ("history", "Humanities"),
];

const DOCTYPES: [(&str, f64); 5] = [
    ("Article", 0.80),
    ("Review", 0.05),
    ("Editorial Material", 0.07),
    ("Letter", 0.05),
    ("News Item", 0.03),
];

const LANGUAGES: [(&str, f64); 3] = [("en", 0.90), ("de", 0.05), ("fr", 0.05)];

fn weighted_pick<'a, R: Rng>(rng: &mut R, table: &[(&'a str, f64)]) -> &'a str {
    let roll: f64 = rng.gen();
    let mut acc = 0.0;
    for (value, weight) in table {
        acc += weight;
        if roll < acc {
            return value;
        }
    }
    table.last().expect("non-empty table").0
}

fn sample_ref_count<R: Rng>(rng: &mut R, mean: f64, dispersion: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let lambda = if dispersion <= 1.0 {
        mean
    } else {
        let shape = mean / (dispersion - 1.0);
        let scale = dispersion - 1.0;
        Gamma::new(shape, scale).expect("valid gamma").sample(rng)
    };
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive lambda").sample(rng) as u64
}

/// Generates a corpus deterministically from (spec, seed).
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<(CitationGraph, SynthReport), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut nodes: Vec<WorkNode> = Vec::new();
    let mut refs_by_work: Vec<Vec<u32>> = Vec::new();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    // every accepted citation appends its target: uniform picks from this
    // pool are degree-proportional
    let mut degree_pool: Vec<u32> = Vec::new();
    let mut report = SynthReport::default();

    let mut prior_count = 0usize;
    for k in 0..spec.years {
        let year = spec.start_year + k as i32;
        let rho = spec.closure_rate_for(k);
        report.closure_rate_by_year.push((year, rho));
        let cohort =
            ((spec.works_first_year as f64) * (1.0 + spec.growth_rate).powi(k as i32)).round()
                as usize;
        let cohort = cohort.max(1);
        for i in 0..cohort {
            let idx = nodes.len() as u32;
            let field_pick = FIELDS[rng.gen_range(0..FIELDS.len())].0;
            let team = 1 + Poisson::new(2.0 + 0.05 * k as f64)
                .expect("positive lambda")
                .sample(&mut rng) as u32;
            let unlinked = Poisson::new(0.5).expect("positive lambda").sample(&mut rng) as u32;
            let node = WorkNode {
                id: format!("w{year}_{i:06}"),
                year,
                field: Some(field_pick.to_string()),
                subfield: Some(format!("{field_pick}:{}", idx % 3)),
                doctype: Some(weighted_pick(&mut rng, &DOCTYPES).to_string()),
                language: Some(weighted_pick(&mut rng, &LANGUAGES).to_string()),
                author_count: Some(team),
                unlinked_ref_count: unlinked,
            };
            nodes.push(node);

            let desired = sample_ref_count(&mut rng, spec.ref_mean, spec.ref_dispersion);
            let feasible = desired.min(prior_count as u64);
            report.truncated_refs += desired - feasible;
            let mut chosen: Vec<u32> = Vec::with_capacity(feasible as usize);
            let mut attempts = 0u64;
            let attempt_budget = feasible * 20;
            while (chosen.len() as u64) < feasible && attempts < attempt_budget {
                attempts += 1;
                let target: u32 = if rng.gen::<f64>() < rho && !chosen.is_empty() {
                    // triadic closure: copy a reference of an already-cited
                    // work when it has one
                    let among = chosen[rng.gen_range(0..chosen.len())];
                    let parent_refs = &refs_by_work[among as usize];
                    if parent_refs.is_empty() {
                        prior_pick(&mut rng, spec, &degree_pool, prior_count)
                    } else {
                        parent_refs[rng.gen_range(0..parent_refs.len())]
                    }
                } else {
                    prior_pick(&mut rng, spec, &degree_pool, prior_count)
                };
                if !chosen.contains(&target) {
                    chosen.push(target);
                }
            }
            report.truncated_refs += feasible - chosen.len() as u64;
            chosen.sort_unstable();
            for &target in &chosen {
                edges.push((NodeId(idx), NodeId(target)));
                degree_pool.push(target);
            }
            refs_by_work.push(chosen);
        }
        prior_count = nodes.len();
    }

    report.works = nodes.len() as u64;
    report.edges = edges.len() as u64;
    Ok((CitationGraph::from_trusted_edges(nodes, edges), report))
}

fn prior_pick<R: Rng>(
    rng: &mut R,
    spec: &SyntheticSpec,
    degree_pool: &[u32],
    prior_count: usize,
) -> u32 {
    if !degree_pool.is_empty() && rng.gen::<f64>() < spec.pa_strength {
        degree_pool[rng.gen_range(0..degree_pool.len())]
    } else {
        rng.gen_range(0..prior_count) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{compute_all, MetricConfig};

    #[test]
    fn zero_reference_spec_gives_isolated_nodes() {
        let spec = SyntheticSpec {
            years: 1,
            works_first_year: 5,
            ref_mean: 0.0,
            ..SyntheticSpec::default()
        };
        let (graph, report) = generate(&spec, 42).unwrap();
        assert_eq!(graph.num_nodes(), 5);
        assert_eq!(graph.num_edges(), 0);
        assert_eq!(report.works, 5);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            years: 5,
            works_first_year: 40,
            closure_rate: 0.2,
            ..SyntheticSpec::default()
        };
        let (g1, r1) = generate(&spec, 7).unwrap();
        let (g2, r2) = generate(&spec, 7).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(
            g1.edges().collect::<Vec<_>>(),
            g2.edges().collect::<Vec<_>>()
        );
        let (g3, _) = generate(&spec, 8).unwrap();
        assert_ne!(
            g1.edges().collect::<Vec<_>>(),
            g3.edges().collect::<Vec<_>>()
        );
    }

    #[test]
    fn first_year_truncates_everything() {
        let spec = SyntheticSpec {
            years: 1,
            works_first_year: 10,
            ref_mean: 3.0,
            ..SyntheticSpec::default()
        };
        let (graph, report) = generate(&spec, 1).unwrap();
        assert_eq!(graph.num_edges(), 0);
        assert!(report.truncated_refs > 0);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let bad_rho = SyntheticSpec {
            closure_rate: 0.9,
            closure_trend_per_year: 0.1,
            years: 5,
            ..SyntheticSpec::default()
        };
        assert!(bad_rho.validate().is_err());
        let bad_dispersion = SyntheticSpec {
            ref_dispersion: 0.5,
            ..SyntheticSpec::default()
        };
        assert!(bad_dispersion.validate().is_err());
    }

    #[test]
    fn closure_raises_j_coupling() {
        let base = SyntheticSpec {
            years: 8,
            works_first_year: 120,
            ref_mean: 5.0,
            pa_strength: 0.2,
            ..SyntheticSpec::default()
        };
        let coupled = SyntheticSpec {
            closure_rate: 0.5,
            ..base.clone()
        };
        let (g0, _) = generate(&base, 3).unwrap();
        let (g1, _) = generate(&coupled, 3).unwrap();
        let mean_nj = |g: &CitationGraph| {
            let table = compute_all(g, &MetricConfig::default());
            let total: u64 = table
                .records
                .iter()
                .map(|r| r.components.n_j as u64)
                .sum();
            total as f64 / table.records.len() as f64
        };
        assert!(
            mean_nj(&g1) > 2.0 * mean_nj(&g0).max(0.01),
            "closure should multiply J-type coupling: base {} coupled {}",
            mean_nj(&g0),
            mean_nj(&g1)
        );
    }

    #[test]
    fn edges_always_point_backward_in_time() {
        let spec = SyntheticSpec {
            years: 6,
            works_first_year: 50,
            closure_rate: 0.3,
            ..SyntheticSpec::default()
        };
        let (graph, _) = generate(&spec, 11).unwrap();
        for (src, dst) in graph.edges() {
            assert!(graph.year_of(src) > graph.year_of(dst));
        }
    }
}
