//! Statistical audits for trained representations.
//!
//! The checks here answer three recurring questions. Does a code distribution
//! actually have the angular/radial independence of a regularly varying
//! vector (correlation permutation tests on the extreme region)? Does a
//! classifier behave scale-invariantly along rays (barcodes, nested tail-loss
//! curves)? And how do generated corpora compare to references (distinct
//! n-grams, F1, Kolmogorov-Smirnov)? Results are collected in a
//! [`DiagnosticReport`] that serializes to JSON and exports its series as
//! CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{angular_projection, infinity_norm, nested_tail_subset};
use crate::rng::RngStream;

pub const DEFAULT_PERMUTATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrMethod {
    Pearson,
    Spearman,
}

/// Sample Pearson correlation coefficient.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("correlation inputs must have equal length"));
    }
    if a.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 observations"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::degenerate("zero variance in a correlation input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Midranks (ties get the average of their positions), 1-based.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Two-sided permutation p-value for the null of no correlation: the second
/// input is shuffled `permutations` times and p = (1 + #{|r'| ≥ |r|}) /
/// (permutations + 1). Spearman runs the same procedure on midranks.
pub fn corr_pvalue(
    a: &[f64],
    b: &[f64],
    method: CorrMethod,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if permutations == 0 {
        return Err(Error::invalid("permutation count must be positive"));
    }
    let (xa, xb) = match method {
        CorrMethod::Pearson => (a.to_vec(), b.to_vec()),
        CorrMethod::Spearman => (ranks(a), ranks(b)),
    };
    let observed = pearson_corr(&xa, &xb)?.abs();
    let mut rng = RngStream::new(seed);
    let mut shuffled = xb;
    let mut exceed = 0usize;
    for _ in 0..permutations {
        rng.shuffle(&mut shuffled);
        if pearson_corr(&xa, &shuffled)?.abs() >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (permutations + 1) as f64)
}

/// Angle/radius independence test on the extreme region of a point cloud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RvReport {
    /// Permutation p-value per coordinate of the angular component; None
    /// marks a degenerate coordinate (zero variance among the extremes).
    pub pvalues: Vec<Option<f64>>,
    /// 10-bin histogram of the defined p-values over [0,1].
    pub histogram: [usize; 10],
    /// Number of extreme points used.
    pub k: usize,
    pub kappa: f64,
    pub method: CorrMethod,
}

impl RvReport {
    pub fn median_pvalue(&self) -> Option<f64> {
        let ps: Vec<f64> = self.pvalues.iter().flatten().copied().collect();
        median(&ps)
    }
}

/// Sample median; the average of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    Some(if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 })
}

/// Tests each angular coordinate Θ_j of the ⌊κn⌋ largest-norm points for
/// correlation with the norm. Under regular variation the angle of far-out
/// points carries no information about how far out they are, so the
/// p-values should look uniform; radius-dependent angles push them to zero.
pub fn rv_report(
    points: &[Vec<f64>],
    kappa: f64,
    method: CorrMethod,
    permutations: usize,
    seed: u64,
) -> Result<RvReport> {
    if points.is_empty() {
        return Err(Error::invalid("empty point set"));
    }
    let n = points.len();
    let k = (kappa * n as f64).floor() as usize;
    if k < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 extreme points, got floor({kappa}*{n}) = {k}"
        )));
    }
    let norms: Vec<f64> = points.iter().map(|p| infinity_norm(p)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    let top = &order[..k];
    let dim = points[0].len();
    let mut thetas = Vec::with_capacity(k);
    let mut radii = Vec::with_capacity(k);
    for &i in top {
        thetas.push(angular_projection(&points[i])?);
        radii.push(norms[i]);
    }
    let master = RngStream::new(seed);
    let mut pvalues = Vec::with_capacity(dim);
    for j in 0..dim {
        let column: Vec<f64> = thetas.iter().map(|t| t[j]).collect();
        let sub = master.substream(j as u64);
        match corr_pvalue(&column, &radii, method, permutations, sub.seed()) {
            Ok(p) => pvalues.push(Some(p)),
            Err(Error::Degenerate(_)) => pvalues.push(None),
            Err(e) => return Err(e),
        }
    }
    let mut histogram = [0usize; 10];
    for p in pvalues.iter().flatten() {
        let bin = ((p * 10.0).floor() as usize).min(9);
        histogram[bin] += 1;
    }
    Ok(RvReport { pvalues, histogram, k, kappa, method })
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF, with
/// the asymptotic p-value from the Kolmogorov series at √n·D.
pub fn ks_statistic<F>(sample: &[f64], cdf: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if sample.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// Survival function of the Kolmogorov distribution,
/// 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² t²), truncated at 100 terms and clamped to
/// [0,1]. Below t ≈ 0.2 the truncated alternating series is unreliable, but
/// there the true value is 1 to far beyond double precision.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100u32 {
        let term = (-2.0 * (j as f64).powi(2) * t * t).exp();
        sum += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Labels assigned along the ray {λz : λ in the grid}. A constant result
/// means the classifier is scale-invariant at this point over the grid.
pub fn scale_barcode<F>(classify: F, z: &[f64], lambdas: &[f64]) -> Result<Vec<i8>>
where
    F: Fn(&[f64]) -> i8,
{
    check_lambda_grid(lambdas)?;
    Ok(lambdas
        .iter()
        .map(|&l| classify(&z.iter().map(|&v| l * v).collect::<Vec<f64>>()))
        .collect())
}

/// Fraction of barcodes that never change label.
pub fn constant_fraction(barcodes: &[Vec<i8>]) -> f64 {
    if barcodes.is_empty() {
        return 0.0;
    }
    let constant = barcodes.iter().filter(|b| b.windows(2).all(|w| w[0] == w[1])).count();
    constant as f64 / barcodes.len() as f64
}

pub(crate) fn check_lambda_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda grid must be nonempty"));
    }
    if lambdas.iter().any(|&l| !(l >= 1.0) || !l.is_finite()) {
        return Err(Error::invalid("lambda values must be finite and at least 1"));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("lambda grid must be ascending"));
    }
    Ok(())
}

/// Misclassification rate on the nested tail subsets {‖x‖ ≥ λt}. The curve
/// stops early if some subset is empty; at λ=1 it coincides with the plain
/// empirical tail risk.
pub fn tail_loss_curve<F>(
    predict: F,
    points: &[Vec<f64>],
    labels: &[i8],
    t: f64,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64]) -> i8,
{
    check_lambda_grid(lambdas)?;
    if points.len() != labels.len() {
        return Err(Error::dim("points and labels must have equal length"));
    }
    let norms: Vec<f64> = points.iter().map(|p| infinity_norm(p)).collect();
    let mut curve = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let idx = nested_tail_subset(&norms, t, l);
        if idx.is_empty() {
            eprintln!("tail_loss_curve: no samples at lambda {l}, truncating");
            break;
        }
        let wrong = idx.iter().filter(|&&i| predict(&points[i]) != labels[i]).count();
        curve.push((l, wrong as f64 / idx.len() as f64));
    }
    Ok(curve)
}

/// Number of distinct n-grams divided by the total token count of the
/// corpus.
pub fn distinct_n(sequences: &[Vec<usize>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be positive"));
    }
    let total: usize = sequences.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::invalid("empty corpus"));
    }
    let mut grams = BTreeSet::new();
    for seq in sequences {
        for w in seq.windows(n) {
            grams.insert(w.to_vec());
        }
    }
    Ok(grams.len() as f64 / total as f64)
}

/// Harmonic mean of precision and recall for the given positive class.
/// Returns 1 when the class is absent and never predicted, 0 when positives
/// exist but none are retrieved (or all retrievals are wrong).
pub fn f1_score(predictions: &[i8], labels: &[i8], positive: i8) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("predictions and labels must have equal length"));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty label set"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &y) in predictions.iter().zip(labels.iter()) {
        match (p == positive, y == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(if fp == 0 && fn_ == 0 { 1.0 } else { 0.0 });
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

/// Pairwise Pearson coefficients and permutation p-values for a set of named
/// columns. Entries involving a zero-variance column are None rather than an
/// error, so one flat column does not sink the whole matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub coefficients: Vec<Vec<Option<f64>>>,
    pub pvalues: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(
    variables: &[(String, Vec<f64>)],
    permutations: usize,
    seed: u64,
) -> Result<CorrelationMatrix> {
    if variables.is_empty() {
        return Err(Error::invalid("no variables given"));
    }
    let n = variables[0].1.len();
    if n < 3 || variables.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::invalid("all variables must share a length of at least 3"));
    }
    let d = variables.len();
    let mut coefficients = vec![vec![None; d]; d];
    let mut pvalues = vec![vec![None; d]; d];
    let master = RngStream::new(seed);
    for i in 0..d {
        coefficients[i][i] = Some(1.0);
        for j in (i + 1)..d {
            let sub = master.substream((i * d + j) as u64);
            match pearson_corr(&variables[i].1, &variables[j].1) {
                Ok(r) => {
                    let p = corr_pvalue(
                        &variables[i].1,
                        &variables[j].1,
                        CorrMethod::Pearson,
                        permutations,
                        sub.seed(),
                    )?;
                    coefficients[i][j] = Some(r);
                    coefficients[j][i] = Some(r);
                    pvalues[i][j] = Some(p);
                    pvalues[j][i] = Some(p);
                }
                Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(CorrelationMatrix {
        names: variables.iter().map(|(name, _)| name.clone()).collect(),
        coefficients,
        pvalues,
    })
}

/// Container for experiment outputs: named scalars, (x,y) series, p-value
/// arrays, and free-form metadata. All numeric content is required to be
/// finite so the JSON form round-trips losslessly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub meta: BTreeMap<String, String>,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub pvalues: BTreeMap<String, Vec<f64>>,
}

impl DiagnosticReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn set_scalar(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("scalar {key} is not finite")));
        }
        self.scalars.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set_series(&mut self, key: &str, series: Vec<(f64, f64)>) -> Result<()> {
        if series.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid(format!("series {key} contains non-finite values")));
        }
        self.series.insert(key.to_string(), series);
        Ok(())
    }

    pub fn set_pvalues(&mut self, key: &str, values: Vec<f64>) -> Result<()> {
        if values.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
            return Err(Error::invalid(format!("p-values for {key} must lie in [0,1]")));
        }
        self.pvalues.insert(key.to_string(), values);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: DiagnosticReport = serde_json::from_str(text)?;
        report.check()?;
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Writes each series as `<name>.csv` ("lambda,value" rows) under `dir`.
    pub fn export_series_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, series) in &self.series {
            let mut text = String::from("x,y\n");
            for (x, y) in series {
                text.push_str(&format!("{x},{y}\n"));
            }
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }

    fn check(&self) -> Result<()> {
        for (k, v) in &self.scalars {
            if !v.is_finite() {
                return Err(Error::invalid(format!("scalar {k} is not finite")));
            }
        }
        for (k, s) in &self.series {
            if s.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::invalid(format!("series {k} contains non-finite values")));
            }
        }
        for (k, ps) in &self.pvalues {
            if ps.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
                return Err(Error::invalid(format!("p-values for {k} must lie in [0,1]")));
            }
        }
        Ok(())
    }
}
