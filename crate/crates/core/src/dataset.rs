//! Synthetic multimodal data, positive/negative pair sampling and CSV I/O.
//!
//! All randomness comes from [`Prng`] (ChaCha20 seeded through
//! `SeedableRng::seed_from_u64`), whose output stream is stable across
//! platforms. Gaussian draws use `rand_distr::StandardNormal`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// The documented generator behind every seeded operation.
pub type Prng = rand_chacha::ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Parameters of the class-center-plus-noise generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub n_prime: usize,
    pub num_classes: usize,
    pub points_per_class_x: usize,
    pub points_per_class_y: usize,
    pub noise_std_range: (f64, f64),
    pub center_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 128,
            n_prime: 64,
            num_classes: 25,
            points_per_class_x: 200,
            points_per_class_y: 200,
            noise_std_range: (3.0, 6.0),
            center_std: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n", self.n),
            ("n_prime", self.n_prime),
            ("num_classes", self.num_classes),
            ("points_per_class_x", self.points_per_class_x),
            ("points_per_class_y", self.points_per_class_y),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        let (lo, hi) = self.noise_std_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise std range must satisfy 0 < low <= high, got ({lo}, {hi})"
            )));
        }
        if !(self.center_std > 0.0 && self.center_std.is_finite()) {
            return Err(Error::InvalidConfig("center_std must be positive".into()));
        }
        Ok(())
    }
}

/// Points of one modality stored row-major with one label per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("point dimension must be at least 1".into()));
        }
        if data.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels need {} values of dimension {dim}, got {}",
                labels.len(),
                dim * labels.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point set"));
        }
        Ok(Self { dim, data, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn subset(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.point(i));
            labels.push(self.labels[i]);
        }
        PointSet {
            dim: self.dim,
            data,
            labels,
        }
    }
}

/// Labeled points from two modalities plus the diagonal noise covariances
/// that define the intra-modal Mahalanobis metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalDataset {
    pub x: PointSet,
    pub y: PointSet,
    pub diag_cov_x: Vec<f64>,
    pub diag_cov_y: Vec<f64>,
    pub num_classes: usize,
    /// Generator seed, when the data is synthetic.
    pub seed: Option<u64>,
}

impl MultimodalDataset {
    pub fn new(
        x: PointSet,
        y: PointSet,
        diag_cov_x: Vec<f64>,
        diag_cov_y: Vec<f64>,
        num_classes: usize,
    ) -> Result<Self> {
        if diag_cov_x.len() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                found: diag_cov_x.len(),
            });
        }
        if diag_cov_y.len() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.dim(),
                found: diag_cov_y.len(),
            });
        }
        if diag_cov_x
            .iter()
            .chain(&diag_cov_y)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidConfig("covariance entries must be positive".into()));
        }
        if let Some(bad) = x.labels.iter().chain(&y.labels).find(|&&l| l >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            x,
            y,
            diag_cov_x,
            diag_cov_y,
            num_classes,
            seed: None,
        })
    }

    /// Builds a dataset whose diagonal covariances are the pooled
    /// within-class variances of each modality (floored at `1e-12`).
    pub fn with_estimated_covariance(x: PointSet, y: PointSet) -> Result<Self> {
        let num_classes = x
            .labels
            .iter()
            .chain(&y.labels)
            .max()
            .map_or(0, |m| m + 1);
        let diag_cov_x = pooled_within_class_variance(&x, num_classes);
        let diag_cov_y = pooled_within_class_variance(&y, num_classes);
        Self::new(x, y, diag_cov_x, diag_cov_y, num_classes)
    }

    pub fn n(&self) -> usize {
        self.x.dim()
    }

    pub fn n_prime(&self) -> usize {
        self.y.dim()
    }

    /// Splits every class into its first `train_per_class_*` points (train)
    /// and the remainder (test), per modality.
    pub fn split_per_class(
        &self,
        train_per_class_x: usize,
        train_per_class_y: usize,
    ) -> Result<(MultimodalDataset, MultimodalDataset)> {
        let (train_x, test_x) = split_indices(&self.x, self.num_classes, train_per_class_x);
        let (train_y, test_y) = split_indices(&self.y, self.num_classes, train_per_class_y);
        if train_x.is_empty() || test_x.is_empty() || train_y.is_empty() || test_y.is_empty() {
            return Err(Error::InvalidConfig(
                "split leaves an empty train or test modality".into(),
            ));
        }
        let make = |xi: &[usize], yi: &[usize]| MultimodalDataset {
            x: self.x.subset(xi),
            y: self.y.subset(yi),
            diag_cov_x: self.diag_cov_x.clone(),
            diag_cov_y: self.diag_cov_y.clone(),
            num_classes: self.num_classes,
            seed: self.seed,
        };
        Ok((make(&train_x, &train_y), make(&test_x, &test_y)))
    }
}

fn split_indices(set: &PointSet, num_classes: usize, train_per_class: usize) -> (Vec<usize>, Vec<usize>) {
    let mut seen = vec![0usize; num_classes];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &l) in set.labels.iter().enumerate() {
        if seen[l] < train_per_class {
            train.push(i);
        } else {
            test.push(i);
        }
        seen[l] += 1;
    }
    (train, test)
}

fn pooled_within_class_variance(set: &PointSet, num_classes: usize) -> Vec<f64> {
    let dim = set.dim();
    let mut sums = vec![0.0; num_classes * dim];
    let mut counts = vec![0usize; num_classes];
    for (p, &l) in set.points().zip(&set.labels) {
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut sq = vec![0.0; dim];
    for (p, &l) in set.points().zip(&set.labels) {
        let mean = &sums[l * dim..(l + 1) * dim];
        let c = counts[l] as f64;
        for ((acc, v), s) in sq.iter_mut().zip(p).zip(mean) {
            let d = v - s / c;
            *acc += d * d;
        }
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    let dof = set.len().saturating_sub(occupied).max(1) as f64;
    sq.into_iter().map(|v| (v / dof).max(1e-12)).collect()
}

/// Generates `K` Gaussian class centers per modality and adds per-dimension
/// Gaussian noise whose standard deviations are drawn uniformly from
/// `noise_std_range` (one vector per modality, shared by all classes).
///
/// Draw order is fixed: X noise stds, X centers, Y noise stds, Y centers,
/// X points (class-major), Y points (class-major).
pub fn generate_synthetic(config: &SynthConfig) -> Result<MultimodalDataset> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let k = config.num_classes;
    let (lo, hi) = config.noise_std_range;

    let mut modality_params = |dim: usize| {
        let stds: Vec<f64> = (0..dim)
            .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        let centers: Vec<f64> = (0..k * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.center_std * z
            })
            .collect();
        (stds, centers)
    };
    let (stds_x, centers_x) = modality_params(config.n);
    let (stds_y, centers_y) = modality_params(config.n_prime);

    let mut points = |dim: usize, ppc: usize, stds: &[f64], centers: &[f64]| {
        let mut data = Vec::with_capacity(k * ppc * dim);
        let mut labels = Vec::with_capacity(k * ppc);
        for c in 0..k {
            let center = &centers[c * dim..(c + 1) * dim];
            for _ in 0..ppc {
                for (mu, sd) in center.iter().zip(stds) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(mu + sd * z);
                }
                labels.push(c);
            }
        }
        PointSet { dim, data, labels }
    };
    let x = points(config.n, config.points_per_class_x, &stds_x, &centers_x);
    let y = points(config.n_prime, config.points_per_class_y, &stds_y, &centers_y);

    let mut dataset = MultimodalDataset::new(
        x,
        y,
        stds_x.iter().map(|s| s * s).collect(),
        stds_y.iter().map(|s| s * s).collect(),
        k,
    )?;
    dataset.seed = Some(config.seed);
    Ok(dataset)
}

/// Index pairs `(x index, y index)` of positives and negatives.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairSample {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl PairSample {
    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    /// Checks that positives share labels and negatives do not.
    pub fn validate(&self, dataset: &MultimodalDataset) -> Result<()> {
        let check = |pairs: &[(usize, usize)], same: bool| -> Result<()> {
            for &(i, j) in pairs {
                if i >= dataset.x.len() || j >= dataset.y.len() {
                    return Err(Error::ShapeMismatch(format!("pair ({i}, {j}) out of range")));
                }
                if (dataset.x.label(i) == dataset.y.label(j)) != same {
                    return Err(Error::InvalidConfig(format!(
                        "pair ({i}, {j}) has inconsistent labels"
                    )));
                }
            }
            Ok(())
        };
        check(&self.positives, true)?;
        check(&self.negatives, false)
    }

    pub fn positive_vectors<'a>(
        &'a self,
        dataset: &'a MultimodalDataset,
    ) -> impl Iterator<Item = (&'a [f64], &'a [f64])> + 'a {
        self.positives
            .iter()
            .map(|&(i, j)| (dataset.x.point(i), dataset.y.point(j)))
    }

    pub fn negative_vectors<'a>(
        &'a self,
        dataset: &'a MultimodalDataset,
    ) -> impl Iterator<Item = (&'a [f64], &'a [f64])> + 'a {
        self.negatives
            .iter()
            .map(|&(i, j)| (dataset.x.point(i), dataset.y.point(j)))
    }
}

/// Samples positives and negatives uniformly with replacement over all
/// valid cross-modal index pairs.
///
/// Positives pick a class with probability proportional to `|X_c| |Y_c|`
/// and then one point of that class in each modality. Negatives draw a
/// uniform `(x, y)` and reject same-label pairs.
pub fn sample_pairs(
    dataset: &MultimodalDataset,
    num_pos: usize,
    num_neg: usize,
    seed: u64,
) -> Result<PairSample> {
    let mut rng = seeded_rng(seed);
    let k = dataset.num_classes;
    let mut by_class_x = vec![Vec::new(); k];
    let mut by_class_y = vec![Vec::new(); k];
    for (i, &l) in dataset.x.labels().iter().enumerate() {
        by_class_x[l].push(i);
    }
    for (j, &l) in dataset.y.labels().iter().enumerate() {
        by_class_y[l].push(j);
    }

    let mut positives = Vec::with_capacity(num_pos);
    if num_pos > 0 {
        let weights: Vec<f64> = (0..k)
            .map(|c| (by_class_x[c].len() * by_class_y[c].len()) as f64)
            .collect();
        let classes = WeightedIndex::new(&weights).map_err(|_| Error::NoPositivePairs)?;
        for _ in 0..num_pos {
            let c = classes.sample(&mut rng);
            let i = by_class_x[c][rng.random_range(0..by_class_x[c].len())];
            let j = by_class_y[c][rng.random_range(0..by_class_y[c].len())];
            positives.push((i, j));
        }
    }

    let mut negatives = Vec::with_capacity(num_neg);
    if num_neg > 0 {
        let same_class_pairs: usize = (0..k)
            .map(|c| by_class_x[c].len() * by_class_y[c].len())
            .sum();
        if same_class_pairs == dataset.x.len() * dataset.y.len() {
            return Err(Error::NoNegativePairs);
        }
        while negatives.len() < num_neg {
            let i = rng.random_range(0..dataset.x.len());
            let j = rng.random_range(0..dataset.y.len());
            if dataset.x.label(i) != dataset.y.label(j) {
                negatives.push((i, j));
            }
        }
    }

    Ok(PairSample {
        positives,
        negatives,
    })
}

/// File locations of a dataset on disk.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub x: PathBuf,
    pub y: PathBuf,
    pub labels_x: PathBuf,
    pub labels_y: PathBuf,
    pub manifest: Option<PathBuf>,
}

impl DatasetPaths {
    /// Standard layout inside a directory written by [`save_csv`].
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            x: dir.join("x.csv"),
            y: dir.join("y.csv"),
            labels_x: dir.join("labels_x.csv"),
            labels_y: dir.join("labels_y.csv"),
            manifest: Some(dir.join("manifest.txt")),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: exact round trip for every finite f64
    format!("{v:.16e}")
}

/// Writes `x.csv`, `y.csv`, `labels_x.csv`, `labels_y.csv` and
/// `manifest.txt` into `dir`, creating it if needed.
pub fn save_csv(dataset: &MultimodalDataset, dir: &Path) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    write_points(&paths.x, &dataset.x)?;
    write_points(&paths.y, &dataset.y)?;
    write_labels(&paths.labels_x, dataset.x.labels())?;
    write_labels(&paths.labels_y, dataset.y.labels())?;

    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
    let mut manifest = format!(
        "n={}\nn_prime={}\nk={}\n",
        dataset.n(),
        dataset.n_prime(),
        dataset.num_classes
    );
    if let Some(seed) = dataset.seed {
        manifest.push_str(&format!("seed={seed}\n"));
    }
    manifest.push_str(&format!("diag_cov_x={}\n", join(&dataset.diag_cov_x)));
    manifest.push_str(&format!("diag_cov_y={}\n", join(&dataset.diag_cov_y)));
    let manifest_path = paths.manifest.clone().expect("in_dir sets a manifest");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(paths)
}

fn write_points(path: &Path, set: &PointSet) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in set.points() {
        let line = p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for l in labels {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 0, format!("{other:?}")),
        })
}

/// Reads a numeric CSV where every row must have the same arity.
/// Returns `(dim, row-major values)`.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv_reader(path)?;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *dim.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::parse(
                path,
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(path, line, format!("column {}: not a number: {cell:?}", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("column {}: non-finite value", col + 1)));
            }
            data.push(v);
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 0, "no rows"))?;
    Ok((dim, data))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let mut reader = csv_reader(path)?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 1 {
            return Err(Error::parse(
                path,
                line,
                format!("expected a single label, found {} fields", record.len()),
            ));
        }
        let cell = &record[0];
        let l: usize = cell
            .parse()
            .map_err(|_| Error::parse(path, line, format!("not a class label: {cell:?}")))?;
        labels.push(l);
    }
    Ok(labels)
}

struct Manifest {
    k: Option<usize>,
    seed: Option<u64>,
    diag_cov_x: Option<Vec<f64>>,
    diag_cov_y: Option<Vec<f64>>,
    n: Option<usize>,
    n_prime: Option<usize>,
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m = Manifest {
        k: None,
        seed: None,
        diag_cov_x: None,
        diag_cov_y: None,
        n: None,
        n_prime: None,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line_no, "expected key=value"))?;
        let bad = |what: &str| Error::parse(path, line_no, format!("invalid {what}: {value:?}"));
        let floats = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad(key)))
                .collect()
        };
        match key.trim() {
            "n" => m.n = Some(value.parse().map_err(|_| bad("n"))?),
            "n_prime" => m.n_prime = Some(value.parse().map_err(|_| bad("n_prime"))?),
            "k" => m.k = Some(value.parse().map_err(|_| bad("k"))?),
            "seed" => m.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            "diag_cov_x" => m.diag_cov_x = Some(floats()?),
            "diag_cov_y" => m.diag_cov_y = Some(floats()?),
            _ => {}
        }
    }
    Ok(m)
}

/// Loads a dataset. Without a manifest the class count is inferred from the
/// labels and the covariances are estimated from the data.
pub fn load_csv(paths: &DatasetPaths) -> Result<MultimodalDataset> {
    let load_modality = |points: &Path, labels: &Path| -> Result<PointSet> {
        let (dim, data) = read_matrix_csv(points)?;
        let labels_v = read_labels_csv(labels)?;
        let rows = data.len() / dim;
        if rows != labels_v.len() {
            return Err(Error::parse(
                labels,
                labels_v.len().min(rows) as u64 + 1,
                format!("{rows} points but {} labels", labels_v.len()),
            ));
        }
        PointSet::new(dim, data, labels_v)
    };
    let x = load_modality(&paths.x, &paths.labels_x)?;
    let y = load_modality(&paths.y, &paths.labels_y)?;

    let Some(manifest_path) = paths.manifest.as_ref().filter(|p| p.exists()) else {
        return MultimodalDataset::with_estimated_covariance(x, y);
    };
    let manifest = read_manifest(manifest_path)?;
    if let Some(n) = manifest.n.filter(|&n| n != x.dim()) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.dim(),
        });
    }
    if let Some(n) = manifest.n_prime.filter(|&n| n != y.dim()) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.dim(),
        });
    }
    let estimated = MultimodalDataset::with_estimated_covariance(x.clone(), y.clone())?;
    let k = manifest.k.unwrap_or(estimated.num_classes);
    let mut dataset = MultimodalDataset::new(
        x,
        y,
        manifest.diag_cov_x.unwrap_or(estimated.diag_cov_x),
        manifest.diag_cov_y.unwrap_or(estimated.diag_cov_y),
        k,
    )?;
    dataset.seed = manifest.seed;
    Ok(dataset)
}
