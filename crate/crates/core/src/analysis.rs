//! Language vectors, linear probes, rank correlation and TSV export for
//! external projection tools.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vectors::SentenceVectors;

/// Per-dimension population variance of the unit-normalized vectors of one
/// language.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageVector {
    pub lang: String,
    pub variance: Vec<f64>,
    pub count: usize,
}

pub fn language_vector(lang: impl Into<String>, vectors: &SentenceVectors) -> Result<LanguageVector> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "a language vector needs at least 2 sentences, got {n}"
        )));
    }
    let d = vectors.dim();
    let mut sum = vec![0f64; d];
    let mut sq = vec![0f64; d];
    for (id, row) in vectors.rows() {
        let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm(id));
        }
        for (j, &x) in row.iter().enumerate() {
            let u = f64::from(x) / norm;
            sum[j] += u;
            sq[j] += u * u;
        }
    }
    let nf = n as f64;
    let variance = sum
        .iter()
        .zip(&sq)
        .map(|(&s, &q)| (q / nf - (s / nf).powi(2)).max(0.0))
        .collect();
    Ok(LanguageVector {
        lang: lang.into(),
        variance,
        count: n,
    })
}

/// Row indices split per class: `max(1, round(fraction * n_c))` examples of
/// each class go to training, the rest are held out. Deterministic in `seed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction {fraction} not in (0, 1]")));
    }
    let classes = class_count(labels)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut rows) in by_class.into_iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        rows.shuffle(&mut rng);
        let take = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len());
        split.train.extend_from_slice(&rows[..take]);
        split.test.extend_from_slice(&rows[take..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn class_count(labels: &[usize]) -> Result<usize> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::Config(format!(
            "a probe needs at least 2 classes, got {classes}"
        )));
    }
    Ok(classes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSettings {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 0.5,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub classes: usize,
    pub dim: usize,
    /// `classes x dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-dimension mean and scale of the training rows.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ProbeModel {
    fn standardized(&self, row: &[f32]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (&m, &s))| (f64::from(x) - m) / s)
            .collect()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                self.bias[c]
                    + self.weights[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Highest-scoring class; ties go to the lower class.
    pub fn predict(&self, row: &[f32]) -> usize {
        let z = self.logits(&self.standardized(row));
        let mut best = 0;
        for c in 1..z.len() {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Fits a probe on the rows `rows` of `vectors` with full-batch gradient
/// descent.
pub fn probe_fit(
    vectors: &SentenceVectors,
    labels: &[usize],
    rows: &[usize],
    settings: &ProbeSettings,
) -> Result<ProbeModel> {
    if labels.len() != vectors.len() {
        return Err(Error::shape(
            "probe",
            format!("{} labels for {} vectors", labels.len(), vectors.len()),
        ));
    }
    let classes = class_count(labels)?;
    if rows.is_empty() {
        return Err(Error::Config("probe has no training rows".into()));
    }
    let d = vectors.dim();
    let n = rows.len() as f64;
    let mut mean = vec![0f64; d];
    for &r in rows {
        for (m, &x) in mean.iter_mut().zip(vectors.row(r)) {
            *m += f64::from(x) / n;
        }
    }
    let mut scale = vec![0f64; d];
    for &r in rows {
        for ((s, &x), &m) in scale.iter_mut().zip(vectors.row(r)).zip(&mean) {
            *s += (f64::from(x) - m).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
    }
    let mut model = ProbeModel {
        classes,
        dim: d,
        weights: vec![0.0; classes * d],
        bias: vec![0.0; classes],
        mean,
        scale,
    };
    let xs: Vec<Vec<f64>> = rows.iter().map(|&r| model.standardized(vectors.row(r))).collect();
    let ys: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    let mut gw = vec![0f64; classes * d];
    let mut gb = vec![0f64; classes];
    for _ in 0..settings.iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gb.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in xs.iter().zip(&ys) {
            let mut p = model.logits(x);
            softmax_in_place(&mut p);
            p[y] -= 1.0;
            for (c, &err) in p.iter().enumerate() {
                gb[c] += err / n;
                for (g, &v) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *g += err * v / n;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= settings.step * (g + settings.l2 * *w);
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= settings.step * g;
        }
    }
    Ok(model)
}

/// A fitted probe and the split it was trained on.
#[derive(Clone, Debug)]
pub struct ProbeFit {
    pub model: ProbeModel,
    pub split: Split,
}

/// Stratified split by `seed`, then [`probe_fit`] on the training part.
pub fn probe_train(vectors: &SentenceVectors, labels: &[usize], train_fraction: f64, seed: u64) -> Result<ProbeFit> {
    let split = stratified_split(labels, train_fraction, seed)?;
    let model = probe_fit(vectors, labels, &split.train, &ProbeSettings::default())?;
    Ok(ProbeFit { model, split })
}

/// Accuracy of `model` on the rows `rows` (all rows when `None`).
pub fn probe_eval(
    model: &ProbeModel,
    vectors: &SentenceVectors,
    labels: &[usize],
    rows: Option<&[usize]>,
) -> Result<f64> {
    if labels.len() != vectors.len() || vectors.dim() != model.dim {
        return Err(Error::shape(
            "probe eval",
            format!(
                "{} labels, {} vectors of dim {} for a dim-{} probe",
                labels.len(),
                vectors.len(),
                vectors.dim(),
                model.dim
            ),
        ));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= model.classes) {
        return Err(Error::Label {
            label,
            classes: model.classes,
        });
    }
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..labels.len()).collect();
            &all
        }
    };
    if rows.is_empty() {
        return Err(Error::Config("no rows to evaluate".into()));
    }
    let correct = rows
        .iter()
        .filter(|&&r| model.predict(vectors.row(r)) == labels[r])
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

/// 1-based ranks with ties given the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of the average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape(
            "spearman",
            format!(
                "need two equal-length inputs of at least 2, got {} and {}",
                a.len(),
                b.len()
            ),
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// TSV with a `label, d0 .. d{D-1}` header and one row per vector.
pub fn projection_tsv<'a>(dim: usize, rows: impl IntoIterator<Item = (&'a str, &'a [f32])>) -> Result<String> {
    let mut out = String::from("label");
    for d in 0..dim {
        write!(out, "\td{d}").expect("writing to a String cannot fail");
    }
    out.push('\n');
    for (label, row) in rows {
        if row.len() != dim {
            return Err(Error::shape(
                "projection export",
                format!("row {label:?} has {} dims", row.len()),
            ));
        }
        if label.contains(['\t', '\n', '\r']) {
            return Err(Error::Config(format!("label {label:?} contains a tab or newline")));
        }
        out.push_str(label);
        for v in row {
            write!(out, "\t{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_projection_input<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    rows: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, projection_tsv(dim, rows)?).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses [`projection_tsv`] output back into labels and rows.
pub fn parse_projection(text: &str, origin: &Path) -> Result<Vec<(String, Vec<f32>)>> {
    let err = |line: usize, detail: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let width = header.split('\t').count();
    if width < 2 || !header.starts_with("label\t") {
        return Err(err(1, "header must be label followed by dimension names".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != width {
                return Err(err(i + 2, format!("expected {width} columns, found {}", fields.len())));
            }
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f32>()
                        .map_err(|_| err(i + 2, format!("invalid number {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((fields[0].to_string(), values))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::mem_origin;

    fn vecs(rows: &[&[f32]]) -> SentenceVectors {
        SentenceVectors::from_rows(
            rows[0].len(),
            rows.iter().enumerate().map(|(i, r)| (i as u64, r.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn language_vector_cases() {
        let lv = language_vector("xx", &vecs(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(lv.variance, vec![0.25, 0.25]);
        let same = language_vector("xx", &vecs(&[&[3.0, 4.0], &[3.0, 4.0], &[6.0, 8.0]])).unwrap();
        assert!(same.variance.iter().all(|&v| v.abs() < 1e-15));
        assert!(language_vector("xx", &vecs(&[&[1.0, 0.0]])).is_err());
        assert!(matches!(
            language_vector("xx", &vecs(&[&[1.0, 0.0], &[0.0, 0.0]])),
            Err(Error::ZeroNorm(1))
        ));
    }

    #[test]
    fn separable_probe_is_perfect() {
        let rows: Vec<Vec<f32>> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s * (1.0 + i as f32 * 0.01), (i as f32 * 0.37).sin()]
            })
            .collect();
        let v = SentenceVectors::from_rows(2, rows.into_iter().enumerate().map(|(i, r)| (i as u64, r))).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let fit = probe_train(&v, &labels, 1.0, 0).unwrap();
        assert!(fit.split.test.is_empty());
        assert_eq!(probe_eval(&fit.model, &v, &labels, None).unwrap(), 1.0);
    }

    #[test]
    fn split_sizes_and_empty_class() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1];
        let s = stratified_split(&labels, 0.25, 3).unwrap();
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 0).count(), 1);
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 1).count(), 3);
        assert_eq!(s.train.len() + s.test.len(), labels.len());
        assert!(matches!(
            stratified_split(&[0, 2, 2], 0.5, 0),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn eval_rejects_unknown_label() {
        let v = vecs(&[&[1.0], &[-1.0]]);
        let fit = probe_train(&v, &[0, 1], 1.0, 0).unwrap();
        assert!(matches!(
            probe_eval(&fit.model, &v, &[0, 2], None),
            Err(Error::Label { label: 2, .. })
        ));
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn projection_round_trip() {
        let a = [1.5f32, -2.0, 0.25];
        let b = [0.0f32, 3.0, 1e-7];
        let text = projection_tsv(3, [("en", &a[..]), ("de", &b[..])]).unwrap();
        assert_eq!(text.lines().next().unwrap().split('\t').count(), 4);
        assert_eq!(text.lines().count(), 3);
        let back = parse_projection(&text, &mem_origin()).unwrap();
        assert_eq!(
            back,
            vec![("en".to_string(), a.to_vec()), ("de".to_string(), b.to_vec())]
        );
    }
}
