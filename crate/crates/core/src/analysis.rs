//! Tables computed from saved runs: test accuracy, prediction stability
//! across seeds, prediction similarity across algorithms, and per-layer
//! weight similarity.
//!
//! Predictions are compared as concatenated one-hot vectors, so the cosine
//! of two prediction lists is exactly the fraction of positions where they
//! agree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::experiment::{RunArtifact, Variant};
use crate::tensor::Vector;
use crate::{Error, Result};

/// `u.v / (|u| |v|)`, computed as `u.v / sqrt(|u|^2 |v|^2)` so that one-hot
/// vectors give exact agreement fractions.
pub fn cosine(u: &Vector, v: &Vector) -> Result<f64> {
    cosine_slices(u.as_slice(), v.as_slice())
}

pub fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            left: (u.len(), 1),
            right: (v.len(), 1),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::InvalidArgument("cosine of a zero vector".into()));
    }
    Ok((dot / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// Concatenated one-hot encoding of `predictions`, length `N * n_classes`.
pub fn prediction_vector(predictions: &[usize], n_classes: usize) -> Result<Vector> {
    let mut data = vec![0.0; predictions.len() * n_classes];
    for (i, &p) in predictions.iter().enumerate() {
        if p >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "prediction {p} at position {i} is not below {n_classes} classes"
            )));
        }
        data[i * n_classes + p] = 1.0;
    }
    Ok(Vector::new(data))
}

/// Class count covering every prediction and label of both runs.
fn class_count(a: &RunArtifact, b: &RunArtifact) -> usize {
    let out = |x: &RunArtifact| x.final_state.spec.output_dim();
    out(a).max(out(b))
}

fn prediction_cosine(a: &RunArtifact, b: &RunArtifact) -> Result<f64> {
    if a.test_predictions.len() != b.test_predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} seed {} has {} test predictions, {} seed {} has {}",
            a.variant,
            a.seed,
            a.test_predictions.len(),
            b.variant,
            b.seed,
            b.test_predictions.len()
        )));
    }
    let n = class_count(a, b);
    cosine(
        &prediction_vector(&a.test_predictions, n)?,
        &prediction_vector(&b.test_predictions, n)?,
    )
}

/// One value per (dataset, algorithm): the mean of `samples`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub dataset: String,
    pub algorithm: Variant,
    pub seeds: Vec<u64>,
    /// Per-seed accuracies, or per-pair cosines for stability.
    pub samples: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub metric: String,
    pub entries: Vec<AccuracyEntry>,
}

impl AccuracyReport {
    pub fn get(&self, dataset: &str, algorithm: Variant) -> Option<&AccuracyEntry> {
        self.entries
            .iter()
            .find(|e| e.dataset == dataset && e.algorithm == algorithm)
    }

    /// One row per dataset, one column per algorithm; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let algorithms: BTreeSet<Variant> = self.entries.iter().map(|e| e.algorithm).collect();
        let datasets: BTreeSet<&str> = self.entries.iter().map(|e| e.dataset.as_str()).collect();
        let mut out = String::from("dataset");
        for a in &algorithms {
            out.push(',');
            out.push_str(&a.label());
        }
        out.push('\n');
        for d in datasets {
            out.push_str(d);
            for &a in &algorithms {
                out.push(',');
                if let Some(e) = self.get(d, a) {
                    out.push_str(&format!("{:.6}", e.mean));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn group(artifacts: &[RunArtifact]) -> BTreeMap<(&str, Variant), Vec<&RunArtifact>> {
    let mut groups: BTreeMap<(&str, Variant), Vec<&RunArtifact>> = BTreeMap::new();
    for a in artifacts {
        groups.entry((a.dataset.as_str(), a.variant)).or_default().push(a);
    }
    for runs in groups.values_mut() {
        runs.sort_by_key(|a| a.seed);
    }
    groups
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean test accuracy per (dataset, algorithm) over seeds.
pub fn accuracy_table(artifacts: &[RunArtifact]) -> AccuracyReport {
    let entries = group(artifacts)
        .into_iter()
        .map(|((dataset, algorithm), runs)| {
            let samples: Vec<f64> = runs.iter().map(|a| a.test_accuracy).collect();
            AccuracyEntry {
                dataset: dataset.to_string(),
                algorithm,
                seeds: runs.iter().map(|a| a.seed).collect(),
                mean: mean(&samples),
                samples,
            }
        })
        .collect();
    AccuracyReport {
        metric: "test accuracy, mean over seeds".into(),
        entries,
    }
}

/// Per (dataset, algorithm), the mean prediction cosine over all unordered
/// pairs of runs. Every group needs at least two runs.
pub fn stability_table(artifacts: &[RunArtifact]) -> Result<AccuracyReport> {
    let mut entries = Vec::new();
    for ((dataset, algorithm), runs) in group(artifacts) {
        if runs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "stability of {algorithm} on {dataset} needs at least 2 runs, found {}",
                runs.len()
            )));
        }
        let mut samples = Vec::with_capacity(runs.len() * (runs.len() - 1) / 2);
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                samples.push(prediction_cosine(runs[i], runs[j])?);
            }
        }
        entries.push(AccuracyEntry {
            dataset: dataset.to_string(),
            algorithm,
            seeds: runs.iter().map(|a| a.seed).collect(),
            mean: mean(&samples),
            samples,
        });
    }
    Ok(AccuracyReport {
        metric: "prediction cosine, mean over unordered seed pairs".into(),
        entries,
    })
}

/// Square algorithm-by-algorithm table with an absent diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub dataset: String,
    pub layer: Option<usize>,
    pub aggregation: String,
    pub row_keys: Vec<String>,
    pub col_keys: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl SimilarityReport {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.row_keys.iter().position(|k| k == row)?;
        let c = self.col_keys.iter().position(|k| k == col)?;
        self.values[r][c]
    }

    /// Off-diagonal entries.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().filter_map(|v| *v)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.values.len();
        self.row_keys == self.col_keys
            && self.values.iter().all(|r| r.len() == n)
            && (0..n).all(|i| {
                self.values[i][i].is_none()
                    && (0..n).all(|j| match (self.values[i][j], self.values[j][i]) {
                        (Some(a), Some(b)) => (a - b).abs() <= tol,
                        (None, None) => i == j,
                        _ => false,
                    })
            })
    }

    /// Header row of column keys; `-` marks the diagonal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm");
        for k in &self.col_keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for (key, row) in self.row_keys.iter().zip(&self.values) {
            out.push_str(key);
            for v in row {
                out.push(',');
                match v {
                    Some(v) => out.push_str(&format!("{v:.6}")),
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// How runs of two algorithms are paired in [`cross_algorithm_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every run of one algorithm against every run of the other.
    #[default]
    AllPairs,
    /// Only runs sharing a seed.
    SeedMatched,
}

/// Runs of `dataset` grouped by algorithm, each group keyed by seed.
/// Requires at least two algorithms and identical seed sets.
fn seed_grid<'a>(
    artifacts: &'a [RunArtifact],
    dataset: &str,
) -> Result<BTreeMap<Variant, BTreeMap<u64, &'a RunArtifact>>> {
    let mut grid: BTreeMap<Variant, BTreeMap<u64, &RunArtifact>> = BTreeMap::new();
    for a in artifacts.iter().filter(|a| a.dataset == dataset) {
        if grid.entry(a.variant).or_default().insert(a.seed, a).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate run for {} seed {} on {dataset}",
                a.variant, a.seed
            )));
        }
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "comparing algorithms on {dataset} needs at least 2 algorithms, found {}",
            grid.len()
        )));
    }
    let all_seeds: BTreeSet<u64> = grid.values().flat_map(|m| m.keys().copied()).collect();
    let missing: Vec<String> = grid
        .iter()
        .flat_map(|(v, runs)| {
            all_seeds
                .iter()
                .filter(|s| !runs.contains_key(s))
                .map(move |s| format!("{v} seed {s}"))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "algorithms on {dataset} have different seed sets; missing: {}",
            missing.join(", ")
        )));
    }
    Ok(grid)
}

fn symmetric_report(
    dataset: &str,
    layer: Option<usize>,
    aggregation: String,
    keys: &[Variant],
    mut cell: impl FnMut(Variant, Variant) -> Result<f64>,
) -> Result<SimilarityReport> {
    let n = keys.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = cell(keys[i], keys[j])?;
            values[i][j] = Some(v);
            values[j][i] = Some(v);
        }
    }
    let labels: Vec<String> = keys.iter().map(|v| v.label()).collect();
    Ok(SimilarityReport {
        dataset: dataset.to_string(),
        layer,
        aggregation,
        row_keys: labels.clone(),
        col_keys: labels,
        values,
    })
}

/// Mean prediction cosine between the runs of each pair of algorithms.
pub fn cross_algorithm_table(artifacts: &[RunArtifact], dataset: &str, pairing: Pairing) -> Result<SimilarityReport> {
    let grid = seed_grid(artifacts, dataset)?;
    let keys: Vec<Variant> = grid.keys().copied().collect();
    let aggregation = match pairing {
        Pairing::AllPairs => "prediction cosine, mean over all cross-algorithm run pairs",
        Pairing::SeedMatched => "prediction cosine, mean over seed-matched run pairs",
    };
    symmetric_report(dataset, None, aggregation.into(), &keys, |a, b| {
        let mut samples = Vec::new();
        for (sa, ra) in &grid[&a] {
            for (sb, rb) in &grid[&b] {
                if pairing == Pairing::AllPairs || sa == sb {
                    samples.push(prediction_cosine(ra, rb)?);
                }
            }
        }
        Ok(mean(&samples))
    })
}

/// Cosine between the flattened weight matrices (biases excluded) of layer
/// `layer` (0-based) for each pair of algorithms, averaged over seeds.
pub fn layer_similarity_table(artifacts: &[RunArtifact], dataset: &str, layer: usize) -> Result<SimilarityReport> {
    let grid = seed_grid(artifacts, dataset)?;
    let spec = &grid.values().next().and_then(|m| m.values().next()).expect("non-empty grid").final_state.spec;
    for run in grid.values().flat_map(|m| m.values()) {
        if &run.final_state.spec != spec {
            return Err(Error::InvalidArgument(format!(
                "{} seed {} on {dataset} has a different architecture",
                run.variant, run.seed
            )));
        }
    }
    if layer >= spec.len() {
        return Err(Error::InvalidArgument(format!(
            "layer index {layer} out of range for a {}-layer network",
            spec.len()
        )));
    }
    let keys: Vec<Variant> = grid.keys().copied().collect();
    let aggregation = format!("weight cosine of layer {layer}, mean over seeds");
    symmetric_report(dataset, Some(layer), aggregation, &keys, |a, b| {
        let samples = grid[&a]
            .iter()
            .map(|(seed, ra)| {
                let rb = grid[&b][seed];
                cosine_slices(
                    ra.final_state.weights[layer].as_slice(),
                    rb.final_state.weights[layer].as_slice(),
                )
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean(&samples))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_single;
    use crate::network::NetworkSpec;
    use crate::datasets::{synthetic_pair, SyntheticSpec};
    use crate::trainers::{Algorithm, TrainConfig};
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = Vector::new(vec![0.3, -1.2, 4.0]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        let e1 = Vector::new(vec![1.0, 0.0]);
        let e2 = Vector::new(vec![0.0, 1.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let c = cosine(&Vector::new(vec![1.0, 1.0]), &e1).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine(&Vector::zeros(2), &e1).is_err());
        assert!(cosine(&Vector::zeros(3), &e1).is_err());
    }

    #[test]
    fn prediction_vector_examples() {
        assert_eq!(prediction_vector(&[0, 1], 2).unwrap().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(prediction_vector(&[2], 2).is_err());
        let p: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let mut q = p.clone();
        for x in q.iter_mut().take(13) {
            *x = (*x + 1) % 10;
        }
        let c = cosine(&prediction_vector(&p, 10).unwrap(), &prediction_vector(&q, 10).unwrap()).unwrap();
        assert_eq!(c, 0.87);
    }

    proptest! {
        #[test]
        fn one_hot_cosine_is_agreement(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (p, q): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let agree = p.iter().zip(&q).filter(|(a, b)| a == b).count() as f64 / p.len() as f64;
            let c = cosine(&prediction_vector(&p, 5).unwrap(), &prediction_vector(&q, 5).unwrap()).unwrap();
            prop_assert_eq!(c, agree);
        }
    }

    fn runs() -> Vec<RunArtifact> {
        let data = synthetic_pair(
            &SyntheticSpec {
                n_samples: 40,
                input_dim: 4,
                n_classes: 3,
                seed: 5,
                mean_scale: 2.0,
            },
            20,
        )
        .unwrap();
        let spec = NetworkSpec::mlp(4, &[5, 4], 3).unwrap();
        let mut out = Vec::new();
        for seed in 1..=3 {
            for alg in [Algorithm::Bp, Algorithm::Dfa, Algorithm::Usfa] {
                let config = TrainConfig {
                    algorithm: alg,
                    seed,
                    epochs: 2,
                    learning_rate: 0.05,
                    batch_size: 4,
                    ..TrainConfig::default()
                };
                out.push(run_single(&data, &spec, &config).unwrap());
            }
        }
        out
    }

    #[test]
    fn accuracy_mean_matches_samples() {
        let mut runs = runs();
        runs[0].test_predictions = runs[0].test_labels.clone();
        runs[0].test_accuracy = 1.0;
        let report = accuracy_table(&runs);
        assert_eq!(report.entries.len(), 3);
        let bp = report.get("synthetic", Variant::plain(Algorithm::Bp)).unwrap();
        assert_eq!(bp.samples[0], 1.0);
        assert_eq!(bp.seeds, vec![1, 2, 3]);
        assert_eq!(bp.mean, bp.samples.iter().sum::<f64>() / 3.0);
        assert!(report.to_csv().starts_with("dataset,BP,DFA,USFA\nsynthetic,"));
    }

    #[test]
    fn stability_of_identical_runs_is_one() {
        let base = runs().swap_remove(0);
        let copies: Vec<RunArtifact> = (1..=4)
            .map(|s| RunArtifact {
                seed: s,
                ..base.clone()
            })
            .collect();
        let report = stability_table(&copies).unwrap();
        assert_eq!(report.entries[0].mean, 1.0);
        assert_eq!(report.entries[0].samples.len(), 6);
        assert!(stability_table(&copies[..1]).is_err());
    }

    #[test]
    fn disjoint_predictions_have_zero_similarity() {
        let mut runs = runs();
        for r in runs.iter_mut() {
            let class = if r.algorithm() == Algorithm::Bp { 0 } else { 1 };
            r.test_predictions.iter_mut().for_each(|p| *p = class);
        }
        let report = cross_algorithm_table(&runs, "synthetic", Pairing::AllPairs).unwrap();
        assert_eq!(report.get("BP", "DFA"), Some(0.0));
        assert_eq!(report.get("DFA", "USFA"), Some(1.0));
        assert_eq!(report.get("BP", "BP"), None);
    }

    #[test]
    fn reports_are_symmetric_and_bounded() {
        let runs = runs();
        for pairing in [Pairing::AllPairs, Pairing::SeedMatched] {
            let r = cross_algorithm_table(&runs, "synthetic", pairing).unwrap();
            assert!(r.is_symmetric(1e-12));
            assert!(r.off_diagonal().all(|v| (0.0..=1.0).contains(&v)));
        }
        for layer in 0..3 {
            let r = layer_similarity_table(&runs, "synthetic", layer).unwrap();
            assert!(r.is_symmetric(1e-12));
            assert!(r.off_diagonal().all(|v| (-1.0..=1.0).contains(&v)));
            assert_eq!(r.layer, Some(layer));
        }
        assert!(layer_similarity_table(&runs, "synthetic", 3).is_err());
        let csv = layer_similarity_table(&runs, "synthetic", 0).unwrap().to_csv();
        assert!(csv.starts_with("algorithm,BP,DFA,USFA\nBP,-,"));
    }

    #[test]
    fn identical_models_have_unit_layer_similarity() {
        let runs = runs();
        let mut twin: Vec<RunArtifact> = runs
            .iter()
            .filter(|r| r.algorithm() == Algorithm::Bp)
            .cloned()
            .collect();
        twin.extend(twin.clone().into_iter().map(|mut r| {
            r.variant = Variant::plain(Algorithm::Fa);
            r
        }));
        let r = layer_similarity_table(&twin, "synthetic", 1).unwrap();
        assert!((r.get("BP", "FA").unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_seed_sets_and_single_algorithm_rejected() {
        let mut runs = runs();
        runs.remove(4);
        let err = cross_algorithm_table(&runs, "synthetic", Pairing::AllPairs).unwrap_err();
        assert!(err.to_string().contains("dfa seed 2"), "{err}");
        let bp: Vec<RunArtifact> = runs.into_iter().filter(|r| r.algorithm() == Algorithm::Bp).collect();
        assert!(cross_algorithm_table(&bp, "synthetic", Pairing::AllPairs).is_err());
    }
}
