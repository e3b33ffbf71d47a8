//! Dataset generation and file ingestion: the two-component Gaussian mixture,
//! a correlated-embedding generator used as a negative control, synthetic
//! latent-to-sequence corpora, and a strict CSV format for labeled embeddings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{SequenceDataset, STOP};
use crate::error::{Error, Result};
use crate::evt::{infinity_norm, LabeledDataset};
use crate::rng::RngStream;

/// One Gaussian component of a two-class mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub mean: [f64; 2],
    /// Row-major 2x2 covariance; must be symmetric positive definite.
    pub cov: [[f64; 2]; 2],
    pub weight: f64,
    pub label: i8,
}

impl MixtureSpec {
    /// Lower-triangular Cholesky factor of the covariance.
    fn cholesky(&self) -> Result<[f64; 3]> {
        let [[a, b], [c, d]] = self.cov;
        if b != c {
            return Err(Error::invalid("covariance must be symmetric"));
        }
        if !(a > 0.0 && a * d - b * b > 0.0) {
            return Err(Error::invalid("covariance must be positive definite"));
        }
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        Ok([l11, l21, l22])
    }

    fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight <= 1.0) {
            return Err(Error::invalid("component weight must lie in [0, 1]"));
        }
        if self.label != 1 && self.label != -1 {
            return Err(Error::invalid("component label must be -1 or +1"));
        }
        if self.mean.iter().any(|v| !v.is_finite())
            || self.cov.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("mixture parameters must be finite"));
        }
        self.cholesky()?;
        Ok(())
    }

    /// The default two-class toy mixture: components overlapping in the bulk
    /// whose tails separate angularly. The second class dominates the first
    /// coordinate's upper tail through its mean; the first class dominates
    /// the second coordinate's upper tail through its larger variance, and
    /// its share of that tail grows with depth.
    pub fn default_pair() -> [MixtureSpec; 2] {
        [
            MixtureSpec {
                mean: [1.0, 1.0],
                cov: [[1.0, 0.0], [0.0, 0.36]],
                weight: 0.5,
                label: -1,
            },
            MixtureSpec {
                mean: [2.5, 1.0],
                cov: [[1.0, 0.0], [0.0, 0.1764]],
                weight: 0.5,
                label: 1,
            },
        ]
    }
}

/// Draws n labeled points from a two-component Gaussian mixture. The label of
/// each point records the component that generated it.
pub fn gen_gaussian_mixture(spec: &[MixtureSpec; 2], n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty dataset"));
    }
    for c in spec {
        c.validate()?;
    }
    if (spec[0].weight + spec[1].weight - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("component weights must sum to 1"));
    }
    if spec[0].label == spec[1].label {
        return Err(Error::invalid("components must carry distinct labels"));
    }
    let chol = [spec[0].cholesky()?, spec[1].cholesky()?];
    let mut rng = RngStream::new(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let which = usize::from(rng.uniform() >= spec[0].weight);
        let c = &spec[which];
        let [l11, l21, l22] = chol[which];
        let g0 = rng.normal();
        let g1 = rng.normal();
        points.push(vec![c.mean[0] + l11 * g0, c.mean[1] + l21 * g0 + l22 * g1]);
        labels.push(c.label);
    }
    LabeledDataset::new(points, labels)
}

/// The angle threshold splitting [`gen_dependent_embedding`]'s direction
/// distribution in half: sin(0.4·E) for E exponential has median 0.273125.
const DEPENDENT_ANGLE_SPLIT: f64 = std::f64::consts::FRAC_PI_4 * (1.0 + 0.273125);

/// Synthetic embeddings whose angular direction rotates with log-radius, so
/// the radius and the pseudo-angle of the tail are dependent by construction.
/// Radii are unit Pareto; the direction angle follows a slow sine of the
/// log-radius, and points in the upper angular half are labeled +1.
pub fn gen_dependent_embedding(n: usize, d: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty dataset"));
    }
    if d < 2 {
        return Err(Error::dim("need at least two coordinates"));
    }
    let mut rng = RngStream::new(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let r = 1.0 / rng.open_uniform();
        let theta = std::f64::consts::FRAC_PI_4 * (1.0 + (0.4 * r.ln()).sin());
        let span = std::f64::consts::FRAC_PI_2 / (d - 1) as f64;
        let x: Vec<f64> = (0..d).map(|j| r * (theta - j as f64 * span).cos()).collect();
        points.push(x);
        labels.push(if theta >= DEPENDENT_ANGLE_SPLIT { 1 } else { -1 });
    }
    LabeledDataset::new(points, labels)
}

/// Token sequences derived deterministically from each latent code: a token
/// for the dominant coordinate's signed axis, a token for the log-norm
/// bucket, a tail marker in odd buckets, then stop. Every (code, previous
/// token) context determines the next token uniquely, so an order-one
/// autoregressive decoder can fit the corpus exactly. The seed shuffles
/// which token ids stand for which sector, bucket, and marker.
pub fn gen_latent_sequences(
    latents: &[Vec<f64>],
    vocab: usize,
    t_max: usize,
    seed: u64,
) -> Result<SequenceDataset> {
    gen_latent_sequences_for(latents.to_vec(), latents, vocab, t_max, seed)
}

/// As [`gen_latent_sequences`], with the sequences paired to `inputs` instead
/// of the latents themselves (for corpora indexed by pre-encoder embeddings).
pub fn gen_latent_sequences_for(
    inputs: Vec<Vec<f64>>,
    latents: &[Vec<f64>],
    vocab: usize,
    t_max: usize,
    seed: u64,
) -> Result<SequenceDataset> {
    if latents.is_empty() {
        return Err(Error::invalid("no latent codes to describe"));
    }
    if inputs.len() != latents.len() {
        return Err(Error::dim("inputs and latents must have equal length"));
    }
    let d = latents[0].len();
    if d == 0 {
        return Err(Error::dim("latent codes must have at least one coordinate"));
    }
    if vocab < 4 {
        return Err(Error::invalid("vocabulary needs room for start, stop, and content tokens"));
    }
    let sectors = 2 * d;
    let buckets = 4usize;
    if vocab < 2 + sectors + buckets + 1 {
        return Err(Error::invalid(format!(
            "vocabulary of {vocab} cannot encode {sectors} sectors, {buckets} buckets, and a tail marker"
        )));
    }
    if t_max < 4 {
        return Err(Error::invalid("t_max must be at least 4"));
    }
    let mut table: Vec<usize> = (2..vocab).collect();
    RngStream::new(seed).shuffle(&mut table);
    let mut sequences = Vec::with_capacity(latents.len());
    for z in latents {
        if z.len() != d {
            return Err(Error::dim("latent codes must share one dimension"));
        }
        let mut dominant = 0;
        for (j, &v) in z.iter().enumerate() {
            if v.abs() > z[dominant].abs() {
                dominant = j;
            }
        }
        let sector = 2 * dominant + usize::from(z[dominant] < 0.0);
        let norm = infinity_norm(z);
        let bucket = (norm.max(1e-12).ln() / std::f64::consts::LN_2 + 2.0)
            .floor()
            .clamp(0.0, (buckets - 1) as f64) as usize;
        let sector_tok = table[sector];
        let bucket_tok = table[sectors + bucket];
        let mut seq = vec![sector_tok, bucket_tok];
        if bucket % 2 == 1 {
            seq.push(table[sectors + buckets]);
        }
        seq.push(STOP);
        sequences.push(seq);
    }
    SequenceDataset::new(inputs, sequences, vocab, t_max)
}

/// Writes a labeled dataset as CSV: a `d=<int>` header line, then one
/// `label,v1,...,vd` row per point. Floats are printed in the shortest form
/// that parses back to the identical bits.
pub fn save_embeddings(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "d={}", data.dim());
    for (x, &y) in data.points().iter().zip(data.labels()) {
        let _ = write!(out, "{}", if y > 0 { "+1" } else { "-1" });
        for v in x {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Reads the CSV format written by [`save_embeddings`]. Lines starting with
/// `#` and blank lines are skipped; every failure names the offending line.
pub fn load_embeddings(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut d: Option<usize> = None;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(dim) = d else {
            let header = line
                .strip_prefix("d=")
                .ok_or_else(|| parse_err(line_no, "expected header `d=<int>`"))?;
            let dim: usize = header
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad dimension `{header}`")))?;
            if dim == 0 {
                return Err(parse_err(line_no, "dimension must be positive"));
            }
            d = Some(dim);
            continue;
        };
        let mut fields = line.split(',');
        let label = match fields.next().map(str::trim) {
            Some("+1") | Some("1") => 1i8,
            Some("-1") => -1i8,
            Some(other) => return Err(parse_err(line_no, format!("label `{other}` is not -1 or +1"))),
            None => return Err(parse_err(line_no, "empty row")),
        };
        let mut x = Vec::with_capacity(dim);
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad value `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value `{field}`")));
            }
            x.push(v);
        }
        if x.len() != dim {
            return Err(parse_err(line_no, format!("{} values, expected {dim}", x.len())));
        }
        points.push(x);
        labels.push(label);
    }
    if d.is_none() {
        return Err(parse_err(text.lines().count().max(1), "missing `d=<int>` header"));
    }
    LabeledDataset::new(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{mean_extreme_nll, train_decoder, uniform_nll};
    use crate::diagnostics::{rv_report, CorrMethod};
    use crate::nn::{Mlp, Mode, OptimConfig};

    #[test]
    fn mixture_generates_requested_count_and_balanced_components() {
        let data = gen_gaussian_mixture(&MixtureSpec::default_pair(), 3000, 7).unwrap();
        assert_eq!(data.len(), 3000);
        assert_eq!(data.dim(), 2);
        let (train, test) = data.split_at(2250).unwrap();
        assert_eq!(train.len(), 2250);
        assert_eq!(test.len(), 750);
        let pos = data.labels().iter().filter(|&&y| y == 1).count() as f64;
        let sigma = (3000.0f64 * 0.25).sqrt();
        assert!((pos - 1500.0).abs() <= 3.0 * sigma, "positive count {pos}");
    }

    #[test]
    fn mixture_of_one_point_works() {
        let data = gen_gaussian_mixture(&MixtureSpec::default_pair(), 1, 3).unwrap();
        assert_eq!(data.len(), 1);
    }

    #[test]
    fn mixture_is_deterministic_in_seed() {
        let a = gen_gaussian_mixture(&MixtureSpec::default_pair(), 50, 11).unwrap();
        let b = gen_gaussian_mixture(&MixtureSpec::default_pair(), 50, 11).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.labels(), b.labels());
        let c = gen_gaussian_mixture(&MixtureSpec::default_pair(), 50, 12).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn mixture_rejects_bad_specs() {
        let mut pair = MixtureSpec::default_pair();
        pair[0].cov = [[1.0, 2.0], [2.0, 1.0]];
        assert!(gen_gaussian_mixture(&pair, 10, 1).is_err());
        pair = MixtureSpec::default_pair();
        pair[0].cov[0][1] = 0.5;
        assert!(gen_gaussian_mixture(&pair, 10, 1).is_err());
        pair = MixtureSpec::default_pair();
        pair[0].weight = 0.7;
        assert!(gen_gaussian_mixture(&pair, 10, 1).is_err());
        pair = MixtureSpec::default_pair();
        pair[1].label = -1;
        assert!(gen_gaussian_mixture(&pair, 10, 1).is_err());
        assert!(gen_gaussian_mixture(&MixtureSpec::default_pair(), 0, 1).is_err());
    }

    #[test]
    fn mixture_component_means_are_recovered() {
        let data = gen_gaussian_mixture(&MixtureSpec::default_pair(), 20000, 19).unwrap();
        let mut sums = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for (x, &y) in data.points().iter().zip(data.labels()) {
            let c = usize::from(y == 1);
            sums[c][0] += x[0];
            sums[c][1] += x[1];
            counts[c] += 1;
        }
        let m0 = [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64];
        let m1 = [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64];
        assert!((m0[0] - 1.0).abs() < 0.05 && (m0[1] - 1.0).abs() < 0.05, "{m0:?}");
        assert!((m1[0] - 2.5).abs() < 0.05 && (m1[1] - 1.0).abs() < 0.05, "{m1:?}");
        let mut sq = [0.0f64; 2];
        for (x, &y) in data.points().iter().zip(data.labels()) {
            let c = usize::from(y == 1);
            let d = x[1] - if c == 0 { m0[1] } else { m1[1] };
            sq[c] += d * d;
        }
        let v0 = sq[0] / counts[0] as f64;
        let v1 = sq[1] / counts[1] as f64;
        assert!((v0 - 0.36).abs() < 0.02, "second-coordinate variance of class -1: {v0}");
        assert!((v1 - 0.1764).abs() < 0.01, "second-coordinate variance of class +1: {v1}");
    }

    #[test]
    fn dependent_embedding_rejects_angle_radius_independence() {
        let data = gen_dependent_embedding(10_000, 2, 5).unwrap();
        let report = rv_report(data.points(), 0.25, CorrMethod::Pearson, 200, 42).unwrap();
        let p = report.median_pvalue().unwrap();
        assert!(p <= 0.01, "median p-value {p}");
    }

    #[test]
    fn dependent_embedding_shape_and_balance() {
        let data = gen_dependent_embedding(100, 2, 9).unwrap();
        assert_eq!(data.len(), 100);
        assert_eq!(data.dim(), 2);
        let pos = data.labels().iter().filter(|&&y| y == 1).count();
        assert!((35..=65).contains(&pos), "positive labels {pos}");
        let again = gen_dependent_embedding(100, 2, 9).unwrap();
        assert_eq!(data.points(), again.points());
        let wide = gen_dependent_embedding(50, 5, 9).unwrap();
        assert_eq!(wide.dim(), 5);
        assert!(gen_dependent_embedding(10, 1, 1).is_err());
    }

    #[test]
    fn latent_sequences_are_deterministic_and_bounded() {
        let latents = vec![vec![3.0, -0.5], vec![-0.2, 8.0], vec![0.1, 0.05]];
        let a = gen_latent_sequences(&latents, 20, 12, 33).unwrap();
        let b = gen_latent_sequences(&latents, 20, 12, 33).unwrap();
        assert_eq!(a.sequences(), b.sequences());
        assert_eq!(a.len(), 3);
        for s in a.sequences() {
            assert!(s.len() <= 12);
            assert_eq!(*s.last().unwrap(), STOP);
        }
        let other = gen_latent_sequences(&latents, 20, 12, 34).unwrap();
        assert_ne!(a.sequences(), other.sequences());
        assert!(gen_latent_sequences(&latents, 3, 12, 1).is_err());
        assert!(gen_latent_sequences(&latents, 20, 2, 1).is_err());
    }

    #[test]
    fn identical_latents_get_identical_sequences() {
        let latents = vec![vec![2.0, 1.0], vec![2.0, 1.0], vec![-4.0, 1.0]];
        let data = gen_latent_sequences(&latents, 16, 8, 3).unwrap();
        assert_eq!(data.sequences()[0], data.sequences()[1]);
        assert_ne!(data.sequences()[0], data.sequences()[2]);
    }

    #[test]
    fn decoder_learns_generated_corpus() {
        let mut rng = RngStream::new(40);
        let latents: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.normal() * 2.0, rng.normal() * 2.0])
            .collect();
        let data = gen_latent_sequences(&latents, 12, 6, 8).unwrap();
        let mut enc = Mlp::init(&[2, 2], Mode::Regressor, 0.0, &mut rng).unwrap();
        enc.set_params_flat(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let optim = OptimConfig { lr: 0.05, weight_decay: 0.0, batch: 50, epochs: 200 };
        let dec = train_decoder(&enc, &data, 0.25, &optim, 17).unwrap();
        let loss = mean_extreme_nll(&dec, &enc, &data, 0.25).unwrap();
        let baseline = uniform_nll(12, 4);
        assert!(loss < 0.1 * baseline, "nll {loss} vs uniform {baseline}");
    }

    #[test]
    fn embeddings_round_trip_bit_exactly() {
        let points = vec![
            vec![std::f64::consts::PI, 1.0 / 3.0],
            vec![1e300, -2.2250738585072014e-308],
            vec![-0.0, 123456.789012345678],
        ];
        let data = LabeledDataset::new(points.clone(), vec![1, -1, 1]).unwrap();
        let dir = std::env::temp_dir().join("tailforge_data_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        save_embeddings(&data, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.labels(), data.labels());
        for (a, b) in back.points().iter().zip(&points) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn loader_reports_offending_lines() {
        let dir = std::env::temp_dir().join("tailforge_data_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let check = |name: &str, content: &str, needle: &str| {
            let path = dir.join(name);
            std::fs::write(&path, content).unwrap();
            let err = load_embeddings(&path).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        };
        check("arity.csv", "d=2\n+1,1.0,2.0\n-1,3.0\n", "line 3");
        check("label.csv", "d=2\n0,1.0,2.0\n", "not -1 or +1");
        check("value.csv", "d=2\n+1,1.0,oops\n", "bad value");
        check("nonfinite.csv", "d=2\n+1,1.0,nan\n", "non-finite");
        check("header.csv", "+1,1.0,2.0\n", "header");
        check("empty.csv", "# only a comment\n", "missing");
    }

    #[test]
    fn loader_skips_comments_and_blank_lines() {
        let dir = std::env::temp_dir().join("tailforge_data_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("comments.csv");
        std::fs::write(&path, "# corpus\nd=2\n\n+1,0.5,1.5\n# trailing note\n-1,2.5,3.5\n").unwrap();
        let data = load_embeddings(&path).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.labels(), &[1, -1]);
        assert_eq!(data.points()[1], vec![2.5, 3.5]);
    }
}
