//! Extreme value theory primitives.
//!
//! A regularly varying random vector X satisfies t·P{t⁻¹X ∈ A} → μ(A) for a
//! homogeneous limit measure μ, under which the pseudo-angle Θ(x) = x/‖x‖ and
//! the radius ‖x‖ become asymptotically independent above high thresholds.
//! This module provides the pieces that exploit that structure: the angular
//! projection (infinity norm throughout), the coordinatewise rank transform
//! to standard Pareto margins, threshold selection at the ⌊κn⌋-th largest
//! norm, and an empirical-risk-minimizing classifier that only sees angles
//! and is therefore scale-invariant by construction.

use crate::error::{Error, Result};
use crate::nn::{self, Mlp, Mode, OptimConfig};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Infinity norm, max |x_i|.
pub fn infinity_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Pseudo-angle Θ(x) = x / ‖x‖_∞. The result has infinity norm exactly 1;
/// scaling x by any λ > 0 leaves it unchanged.
pub fn angular_projection(x: &[f64]) -> Result<Vec<f64>> {
    let norm = infinity_norm(x);
    if norm == 0.0 {
        return Err(Error::degenerate("cannot project the zero vector"));
    }
    Ok(x.iter().map(|&v| v / norm).collect())
}

/// Points with class labels in {-1, +1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<i8>,
}

impl LabeledDataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::dim("points and labels must have equal length"));
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::invalid("points must have at least one coordinate"));
            }
            for (i, p) in points.iter().enumerate() {
                if p.len() != d {
                    return Err(Error::dim(format!("row {i} has {} coordinates, expected {d}", p.len())));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("row {i} contains a non-finite value")));
                }
            }
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::invalid("labels must be -1 or +1"));
        }
        Ok(LabeledDataset { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Splits off the first `n` rows as one dataset, the rest as another.
    pub fn split_at(&self, n: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        if n > self.len() {
            return Err(Error::invalid(format!("cannot split {} rows at {n}", self.len())));
        }
        Ok((
            LabeledDataset {
                points: self.points[..n].to_vec(),
                labels: self.labels[..n].to_vec(),
            },
            LabeledDataset {
                points: self.points[n..].to_vec(),
                labels: self.labels[n..].to_vec(),
            },
        ))
    }
}

/// Maps class labels {-1,+1} to {0,1} targets for cross-entropy training.
pub fn label_to_target(y: i8) -> f64 {
    (f64::from(y) + 1.0) / 2.0
}

/// Hard-threshold a classifier probability back to a {-1,+1} label.
pub fn probability_to_label(p: f64) -> i8 {
    if p > 0.5 {
        1
    } else {
        -1
    }
}

/// Coordinatewise empirical-CDF standardization to the unit Pareto scale:
/// T_j(x) = 1/(1 - F̂_j(x)) with F̂_j(x) = #{X_ij ≤ x}/(n+1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankTransformer {
    sorted_columns: Vec<Vec<f64>>,
}

impl RankTransformer {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::invalid("cannot fit on an empty sample"))?;
        let d = first.len();
        let mut sorted_columns = vec![Vec::with_capacity(points.len()); d];
        for p in points {
            if p.len() != d {
                return Err(Error::dim("inconsistent dimensions in rank transform fit"));
            }
            for (j, &v) in p.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid("non-finite value in rank transform fit"));
                }
                sorted_columns[j].push(v);
            }
        }
        for col in &mut sorted_columns {
            col.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        }
        Ok(RankTransformer { sorted_columns })
    }

    pub fn dim(&self) -> usize {
        self.sorted_columns.len()
    }

    pub fn n(&self) -> usize {
        self.sorted_columns.first().map_or(0, |c| c.len())
    }

    /// Transforms one point. Outputs lie in [1, n+1].
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has {} coordinates, transformer has {}",
                x.len(),
                self.dim()
            )));
        }
        let n = self.n() as f64;
        Ok(x.iter()
            .zip(self.sorted_columns.iter())
            .map(|(&v, col)| {
                let count = col.partition_point(|&c| c <= v) as f64;
                1.0 / (1.0 - count / (n + 1.0))
            })
            .collect())
    }

    pub fn apply(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        points.iter().map(|p| self.apply_point(p)).collect()
    }
}

/// A tail threshold: t is the k-th largest norm in the fitting sample,
/// k = ⌊κn⌋, so that {‖x‖ ≥ t} captures roughly the κ-fraction of the data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailThreshold {
    pub t: f64,
    pub k: usize,
    pub kappa: f64,
}

pub fn tail_threshold(norms: &[f64], kappa: f64) -> Result<TailThreshold> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid(format!("kappa must lie in (0,1), got {kappa}")));
    }
    let n = norms.len();
    let k = (kappa * n as f64).floor() as usize;
    if k == 0 {
        return Err(Error::invalid(format!("floor(kappa*n) = 0 for n={n}, kappa={kappa}")));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(TailThreshold { t: sorted[k - 1], k, kappa })
}

/// Indices of points whose norm reaches the threshold, in input order.
pub fn select_extremes(norms: &[f64], threshold: &TailThreshold) -> Vec<usize> {
    nested_tail_subset(norms, threshold.t, 1.0)
}

/// Indices with ‖x‖ ≥ λt, the nested subsets T^λ of the tail region.
pub fn nested_tail_subset(norms: &[f64], t: f64, lambda: f64) -> Vec<usize> {
    let cut = lambda * t;
    norms
        .iter()
        .enumerate()
        .filter_map(|(i, &nv)| (nv >= cut).then_some(i))
        .collect()
}

/// Mean 0/1 loss of a labeling function over a point set.
pub fn empirical_tail_risk<F>(predict: F, points: &[Vec<f64>], labels: &[i8]) -> Result<f64>
where
    F: Fn(&[f64]) -> i8,
{
    if points.is_empty() {
        return Err(Error::invalid("empirical risk over an empty set"));
    }
    if points.len() != labels.len() {
        return Err(Error::dim("points and labels must have equal length"));
    }
    let wrong = points
        .iter()
        .zip(labels.iter())
        .filter(|(x, &y)| predict(x) != y)
        .count();
    Ok(wrong as f64 / points.len() as f64)
}

/// A classifier that sees only the pseudo-angle of its input, making
/// g(λx) = g(x) hold exactly for every λ > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailErmClassifier {
    net: Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailErmConfig {
    pub hidden: Vec<usize>,
    pub optim: OptimConfig,
}

impl Default for TailErmConfig {
    fn default() -> Self {
        TailErmConfig {
            hidden: vec![8],
            optim: OptimConfig { lr: 0.05, weight_decay: 1e-5, batch: 32, epochs: 200 },
        }
    }
}

impl TailErmClassifier {
    pub fn predict(&self, x: &[f64]) -> i8 {
        let theta = angular_projection(x).expect("cannot classify the zero vector");
        probability_to_label(self.net.forward(&theta)[0])
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }
}

/// Trains an angle-only tail classifier by minimizing the cross-entropy
/// surrogate of the empirical tail risk on extreme samples. Inputs may be raw
/// extreme points or precomputed angles; they are projected either way
/// (projection is idempotent). Single-class inputs are accepted but noted on
/// stderr, since the fit is then degenerate.
pub fn fit_tail_erm(
    points: &[Vec<f64>],
    labels: &[i8],
    cfg: &TailErmConfig,
    seed: u64,
) -> Result<TailErmClassifier> {
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::dim("fit_tail_erm needs matching nonempty points and labels"));
    }
    let angles: Vec<Vec<f64>> = points
        .iter()
        .map(|p| angular_projection(p))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = labels.iter().map(|&y| label_to_target(y)).collect();
    if labels.iter().all(|&y| y == labels[0]) {
        eprintln!("fit_tail_erm: all {} samples share one class; fit is degenerate", labels.len());
    }
    let d = angles[0].len();
    let mut sizes = vec![d];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(1);
    let master = RngStream::new(seed);
    let mut net = Mlp::init(&sizes, Mode::Classifier, 0.0, &mut master.substream(nn::streams::INIT_HEAD))?;
    let batch = cfg.optim.batch.min(points.len());
    let optim = OptimConfig { batch, ..cfg.optim };
    nn::train_classifier(&mut net, &angles, &targets, &optim, seed)?;
    Ok(TailErmClassifier { net })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn projection_uses_infinity_norm() {
        let theta = angular_projection(&[3.0, -4.0]).unwrap();
        assert_eq!(theta, vec![0.75, -1.0]);
        assert_eq!(infinity_norm(&theta), 1.0);
    }

    #[test]
    fn projection_rejects_zero() {
        assert!(angular_projection(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn projection_is_scale_invariant_and_idempotent() {
        let x = [1.5, -0.2, 0.9];
        let theta = angular_projection(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.25).collect();
        let theta_scaled = angular_projection(&scaled).unwrap();
        for (a, b) in theta.iter().zip(theta_scaled.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
        assert_eq!(angular_projection(&theta).unwrap(), theta);
    }

    #[test]
    fn rank_transform_matches_hand_computed_values() {
        let fit_data = vec![vec![1.0], vec![2.0], vec![3.0]];
        let tr = RankTransformer::fit(&fit_data).unwrap();
        assert_relative_eq!(tr.apply_point(&[2.0]).unwrap()[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(tr.apply_point(&[3.0]).unwrap()[0], 4.0, max_relative = 1e-12);
        assert_relative_eq!(tr.apply_point(&[0.5]).unwrap()[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_transform_output_range() {
        let mut rng = RngStream::new(3);
        let data: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let tr = RankTransformer::fit(&data).unwrap();
        let out = tr.apply(&data).unwrap();
        let n = data.len() as f64;
        for row in &out {
            for &v in row {
                assert!((1.0..=n + 1.0).contains(&v), "value {v} outside [1, n+1]");
            }
        }
    }

    #[test]
    fn rank_transform_is_monotone() {
        let data: Vec<Vec<f64>> = (0..100).map(|i| vec![f64::from(i)]).collect();
        let tr = RankTransformer::fit(&data).unwrap();
        let lo = tr.apply_point(&[10.0]).unwrap()[0];
        let hi = tr.apply_point(&[20.0]).unwrap()[0];
        assert!(lo < hi);
    }

    #[test]
    fn threshold_picks_kth_largest() {
        let norms = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1];
        let th = tail_threshold(&norms, 0.25).unwrap();
        assert_eq!(th.k, 2);
        assert_eq!(th.t, 4.0);
        assert_eq!(select_extremes(&norms, &th), vec![0, 1]);
    }

    #[test]
    fn threshold_rejects_degenerate_kappa() {
        assert!(tail_threshold(&[1.0, 2.0], 0.0).is_err());
        assert!(tail_threshold(&[1.0, 2.0], 1.0).is_err());
        assert!(tail_threshold(&[1.0, 2.0], 0.3).is_err()); // floor(0.6) = 0
    }

    #[test]
    fn nested_subsets_shrink() {
        let norms = [10.0, 5.0, 4.0];
        assert_eq!(nested_tail_subset(&norms, 4.0, 1.0), vec![0, 1, 2]);
        assert_eq!(nested_tail_subset(&norms, 4.0, 2.0), vec![0]);
        assert!(nested_tail_subset(&norms, 4.0, 3.0).is_empty());
    }

    #[test]
    fn tail_risk_counts_mismatches() {
        let points = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let labels = vec![1, 1, -1, -1];
        let risk = empirical_tail_risk(|x| if x[0] < 3.5 { 1 } else { -1 }, &points, &labels).unwrap();
        assert_eq!(risk, 0.25);
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![0]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0], vec![2.0, 3.0]], vec![1, -1]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0]], vec![1, -1]).is_err());
        assert!(LabeledDataset::new(vec![vec![f64::NAN]], vec![1]).is_err());
        let ds = LabeledDataset::new(vec![vec![1.0], vec![2.0]], vec![1, -1]).unwrap();
        let (a, b) = ds.split_at(1).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn erm_classifier_is_exactly_scale_invariant() {
        // Angularly separable toy data: class by which coordinate dominates.
        let mut rng = RngStream::new(5);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let big = 1.0 + rng.uniform();
            let small = rng.uniform() * 0.5;
            if i % 2 == 0 {
                points.push(vec![big, small]);
                labels.push(1);
            } else {
                points.push(vec![small, big]);
                labels.push(-1);
            }
        }
        let clf = fit_tail_erm(&points, &labels, &TailErmConfig::default(), 7).unwrap();
        for (p, _) in points.iter().zip(labels.iter()).take(20) {
            let base = clf.predict(p);
            for lambda in [1.0, 2.0, 5.0, 20.0, 1000.0] {
                let scaled: Vec<f64> = p.iter().map(|v| v * lambda).collect();
                assert_eq!(clf.predict(&scaled), base);
            }
        }
        let risk = empirical_tail_risk(|x| clf.predict(x), &points, &labels).unwrap();
        assert!(risk <= 0.05, "angularly separable data should be learnable, risk={risk}");
    }
}
