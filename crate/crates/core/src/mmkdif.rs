//! Multimodal kernel diff-hash.
//!
//! Projections are kernel expansions over basis points,
//! `p(x) = αᵀ (k_X(x_1, x), ..., k_X(x_l, x))`, and the coefficient vectors
//! come from the SVD of the `l x l'` matrix
//!
//! ```text
//! K = (1/|N|) Kᴺ_X (Kᴺ_Y)ᵀ − (γ/|P|) Kᴾ_X (Kᴾ_Y)ᵀ
//! ```
//!
//! The hash length is bounded by the basis sizes instead of the data
//! dimensions. Thresholds reuse the linear trainer's search.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdif::{projections_from_difference, thresholds_for, HashParams, ProjectionMode};
use crate::dataset::{seeded_rng, MultimodalDataset, PairSample, PointSet};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    GaussianMahalanobis,
}

/// `k(u, v) = exp(-(u - v)ᵀ diag(cov)⁻¹ (u - v) / bandwidth)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub diag_cov: Vec<f64>,
    #[serde(default = "unit_bandwidth")]
    pub bandwidth: f64,
}

fn unit_bandwidth() -> f64 {
    1.0
}

impl KernelSpec {
    /// Unit bandwidth: the exponent is the plain squared Mahalanobis
    /// distance.
    pub fn gaussian(diag_cov: Vec<f64>) -> Result<Self> {
        Self::gaussian_with_bandwidth(diag_cov, 1.0)
    }

    pub fn gaussian_with_bandwidth(diag_cov: Vec<f64>, bandwidth: f64) -> Result<Self> {
        let spec = Self {
            kind: KernelKind::GaussianMahalanobis,
            diag_cov,
            bandwidth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.diag_cov.is_empty() || self.diag_cov.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "kernel covariance entries must be positive".into(),
            ));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kernel bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.diag_cov.len()
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        for w in [u.len(), v.len()] {
            if w != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: w,
                });
            }
        }
        Ok(self.eval_unchecked(&self.inverse_cov(), u, v))
    }

    fn eval_unchecked(&self, inv_cov: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for ((a, b), w) in u.iter().zip(v).zip(inv_cov) {
            let d = a - b;
            d2 += d * d * w;
        }
        (-d2).exp()
    }

    /// Per-dimension weights of the exponent, bandwidth folded in.
    fn inverse_cov(&self) -> Vec<f64> {
        self.diag_cov.iter().map(|v| 1.0 / (v * self.bandwidth)).collect()
    }

    /// Kernel values of `point` against every basis point (rows of `bases`).
    pub fn kernel_vector(&self, bases: &Matrix, point: &[f64]) -> Result<Vec<f64>> {
        if bases.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: bases.cols(),
            });
        }
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        let inv = self.inverse_cov();
        Ok(bases.row_iter().map(|b| self.eval_unchecked(&inv, b, point)).collect())
    }
}

/// Gaussian kernel with squared Mahalanobis distance under a diagonal
/// covariance.
pub fn gaussian_kernel(u: &[f64], v: &[f64], diag_cov: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if diag_cov.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: diag_cov.len(),
        });
    }
    let mut d2 = 0.0;
    for ((a, b), c) in u.iter().zip(v).zip(diag_cov) {
        if !(*c > 0.0) {
            return Err(Error::InvalidConfig("kernel covariance entries must be positive".into()));
        }
        let d = a - b;
        d2 += d * d / c;
    }
    Ok((-d2).exp())
}

/// Basis points of both modalities, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBases {
    pub x: Matrix,
    pub y: Matrix,
    pub indices_x: Vec<usize>,
    pub indices_y: Vec<usize>,
}

fn rows_of(set: &PointSet, indices: &[usize]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(indices.len() * set.dim());
    for &i in indices {
        data.extend_from_slice(set.point(i));
    }
    Matrix::new(indices.len(), set.dim(), data)
}

/// Uniform sample without replacement of `l` points of X and `l_prime`
/// points of Y.
pub fn select_bases(dataset: &MultimodalDataset, l: usize, l_prime: usize, seed: u64) -> Result<KernelBases> {
    for (requested, available) in [(l, dataset.x.len()), (l_prime, dataset.y.len())] {
        if requested > available {
            return Err(Error::BasisTooLarge { requested, available });
        }
        if requested == 0 {
            return Err(Error::InvalidConfig("basis size must be at least 1".into()));
        }
    }
    let mut rng = seeded_rng(seed);
    let indices_x = sample(&mut rng, dataset.x.len(), l).into_vec();
    let indices_y = sample(&mut rng, dataset.y.len(), l_prime).into_vec();
    Ok(KernelBases {
        x: rows_of(&dataset.x, &indices_x)?,
        y: rows_of(&dataset.y, &indices_y)?,
        indices_x,
        indices_y,
    })
}

/// `|bases| x |points|` matrix of kernel values.
pub fn kernel_matrix<'a, I>(bases: &Matrix, points: I, spec: &KernelSpec) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let columns: Vec<Vec<f64>> = points
        .into_iter()
        .map(|p| spec.kernel_vector(bases, p))
        .collect::<Result<_>>()?;
    let (rows, cols) = (bases.rows(), columns.len());
    let mut data = vec![0.0; rows * cols];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * cols + j] = *v;
        }
    }
    Matrix::new(rows, cols, data)
}

/// `(1/|N|) Kᴺ_X (Kᴺ_Y)ᵀ − (γ/|P|) Kᴾ_X (Kᴾ_Y)ᵀ` from explicit kernel
/// matrices (one column per pair).
pub fn kernel_difference(
    kp_x: &Matrix,
    kp_y: &Matrix,
    kn_x: &Matrix,
    kn_y: &Matrix,
    gamma: f64,
) -> Result<Matrix> {
    if kp_x.cols() != kp_y.cols() || kn_x.cols() != kn_y.cols() {
        return Err(Error::ShapeMismatch(
            "kernel matrices of one pair set must have equal column counts".into(),
        ));
    }
    if kp_x.rows() != kn_x.rows() || kp_y.rows() != kn_y.rows() {
        return Err(Error::ShapeMismatch(
            "kernel matrices of one modality must have equal row counts".into(),
        ));
    }
    if kp_x.cols() == 0 || kn_x.cols() == 0 {
        return Err(Error::EmptyPairSet);
    }
    let pos = kp_x.to_nalgebra() * kp_y.to_nalgebra().transpose();
    let neg = kn_x.to_nalgebra() * kn_y.to_nalgebra().transpose();
    let k = neg / kn_x.cols() as f64 - pos * (gamma / kp_x.cols() as f64);
    Ok(Matrix::from_nalgebra(&k))
}

/// Kernel vectors of every point of a modality, stored as the columns of an
/// `l x |points|` column-major matrix.
fn kernel_cache(bases: &Matrix, set: &PointSet, spec: &KernelSpec) -> DMatrix<f64> {
    let inv = spec.inverse_cov();
    let l = bases.rows();
    let mut data = vec![0.0; l * set.len()];
    data.par_chunks_mut(l.max(1))
        .zip(set.as_slice().par_chunks(set.dim()))
        .for_each(|(out, point)| {
            for (o, b) in out.iter_mut().zip(bases.row_iter()) {
                *o = spec.eval_unchecked(&inv, b, point);
            }
        });
    DMatrix::from_vec(l, set.len(), data)
}

/// `Σ_pairs kx(x) ky(y)ᵀ`, accumulated over column blocks of `block_width`
/// pairs in block order.
fn accumulate_pairs(
    cache_x: &DMatrix<f64>,
    cache_y: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    block_width: usize,
) -> DMatrix<f64> {
    let (l, l_prime) = (cache_x.nrows(), cache_y.nrows());
    let mut acc = DMatrix::<f64>::zeros(l, l_prime);
    for block in pairs.chunks(block_width.max(1)) {
        let bx = DMatrix::from_fn(l, block.len(), |i, k| cache_x[(i, block[k].0)]);
        let by_t = DMatrix::from_fn(block.len(), l_prime, |k, j| cache_y[(j, block[k].1)]);
        acc.gemm(1.0, &bx, &by_t, 1.0);
    }
    acc
}

/// Optional knobs of the kernel trainer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelTrainOptions {
    /// Pairs per accumulation block.
    pub block_width: usize,
    pub bandwidth: Bandwidth,
}

impl Default for KernelTrainOptions {
    fn default() -> Self {
        Self {
            block_width: 10_000,
            bandwidth: Bandwidth::default(),
        }
    }
}

/// Divisor of the squared Mahalanobis distance in the kernel exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median squared distance between distinct basis points, per modality.
    #[default]
    Median,
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Self::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Self::Fixed(v)),
            _ => Err(Error::InvalidConfig(format!(
                "bandwidth must be \"median\" or a positive number, got {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed(v) => write!(f, "{v}"),
            Self::Median => f.write_str("median"),
        }
    }
}

/// Median squared Mahalanobis distance over all distinct pairs of rows.
/// Falls back to 1 when fewer than two rows exist or all rows coincide.
pub fn median_squared_distance(bases: &Matrix, diag_cov: &[f64]) -> f64 {
    let rows: Vec<&[f64]> = bases.row_iter().collect();
    let mut d2: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..rows.len()).map(move |j| {
                rows[i]
                    .iter()
                    .zip(rows[j])
                    .zip(diag_cov)
                    .map(|((a, b), c)| (a - b) * (a - b) / c)
                    .sum::<f64>()
            })
        })
        .collect();
    if d2.is_empty() {
        return 1.0;
    }
    let mid = d2.len() / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

/// `ξ(x) = sign(A kx(x) + a)`, `η(y) = sign(B ky(y) + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHashModel {
    pub bases_x: Matrix,
    pub bases_y: Matrix,
    pub coef_x: Matrix,
    pub coef_y: Matrix,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: f64,
    pub mode: ProjectionMode,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
}

impl KernelHashModel {
    pub fn m(&self) -> usize {
        self.coef_x.rows()
    }

    pub fn n(&self) -> usize {
        self.bases_x.cols()
    }

    pub fn n_prime(&self) -> usize {
        self.bases_y.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.coef_x.rows();
        if self.coef_y.rows() != m || self.a.len() != m || self.b.len() != m {
            return Err(Error::ShapeMismatch("inconsistent hash length".into()));
        }
        if self.coef_x.cols() != self.bases_x.rows() || self.coef_y.cols() != self.bases_y.rows() {
            return Err(Error::ShapeMismatch("coefficient and basis sizes differ".into()));
        }
        self.kernel_x.validate()?;
        self.kernel_y.validate()?;
        if self.kernel_x.dim() != self.n() || self.kernel_y.dim() != self.n_prime() {
            return Err(Error::ShapeMismatch("kernel and basis dimensions differ".into()));
        }
        let bound = self.bases_x.rows().min(self.bases_y.rows());
        if m > bound {
            return Err(Error::BasisCap { m, bound });
        }
        Ok(())
    }

    pub fn truncated(&self, m: usize) -> KernelHashModel {
        KernelHashModel {
            coef_x: self.coef_x.top_rows(m),
            coef_y: self.coef_y.top_rows(m),
            a: self.a[..m.min(self.a.len())].to_vec(),
            b: self.b[..m.min(self.b.len())].to_vec(),
            ..self.clone()
        }
    }
}

/// Trains a kernel cross-modal hash with Gaussian kernels built from the
/// dataset's diagonal covariances.
pub fn train_mmkdif(
    dataset: &MultimodalDataset,
    pairs: &PairSample,
    bases: &KernelBases,
    params: &HashParams,
) -> Result<KernelHashModel> {
    train_mmkdif_with(dataset, pairs, bases, params, KernelTrainOptions::default())
}

pub fn train_mmkdif_with(
    dataset: &MultimodalDataset,
    pairs: &PairSample,
    bases: &KernelBases,
    params: &HashParams,
    options: KernelTrainOptions,
) -> Result<KernelHashModel> {
    params.validate()?;
    let (l, l_prime) = (bases.x.rows(), bases.y.rows());
    let bound = l.min(l_prime);
    if params.m > bound {
        return Err(Error::BasisCap { m: params.m, bound });
    }
    if bases.x.cols() != dataset.n() || bases.y.cols() != dataset.n_prime() {
        return Err(Error::ShapeMismatch("basis dimensions differ from the dataset".into()));
    }
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    pairs.validate(dataset)?;

    let bandwidth = |basis: &Matrix, cov: &[f64]| match options.bandwidth {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Median => median_squared_distance(basis, cov),
    };
    let kernel_x = KernelSpec::gaussian_with_bandwidth(
        dataset.diag_cov_x.clone(),
        bandwidth(&bases.x, &dataset.diag_cov_x),
    )?;
    let kernel_y = KernelSpec::gaussian_with_bandwidth(
        dataset.diag_cov_y.clone(),
        bandwidth(&bases.y, &dataset.diag_cov_y),
    )?;
    let cache_x = kernel_cache(&bases.x, &dataset.x, &kernel_x);
    let cache_y = kernel_cache(&bases.y, &dataset.y, &kernel_y);

    let neg = accumulate_pairs(&cache_x, &cache_y, &pairs.negatives, options.block_width);
    let pos = accumulate_pairs(&cache_x, &cache_y, &pairs.positives, options.block_width);
    let k = neg / pairs.negatives.len() as f64 - pos * (params.gamma / pairs.positives.len() as f64);
    let k = Matrix::new(l, l_prime, k.transpose().as_slice().to_vec())?;

    let (coef_x, coef_y) = projections_from_difference(&k, params.m, params.mode)?;

    // row by row, so that dimension i never depends on how many others exist
    let proj = |coef: &Matrix, cache: &DMatrix<f64>| -> Vec<Vec<f64>> {
        coef.row_iter()
            .map(|r| cache.column_iter().map(|c| dot(r, c.as_slice())).collect())
            .collect()
    };
    let proj_x = proj(&coef_x, &cache_x);
    let proj_y = proj(&coef_y, &cache_y);
    let (a, b) = thresholds_for(&proj_x, &proj_y, pairs, params)?;

    Ok(KernelHashModel {
        bases_x: bases.x.clone(),
        bases_y: bases.y.clone(),
        coef_x,
        coef_y,
        a,
        b,
        gamma: params.gamma,
        mode: params.mode,
        kernel_x,
        kernel_y,
    })
}

/// Relaxed kernel loss `(1/|N|) αᵀKᴺ_X(Kᴺ_Y)ᵀβ − (γ/|P|) αᵀKᴾ_X(Kᴾ_Y)ᵀβ`
/// evaluated as a sum over pairs of `p(x) q(y)`.
pub fn kernel_surrogate_loss(
    alpha: &[f64],
    beta: &[f64],
    kp_x: &Matrix,
    kp_y: &Matrix,
    kn_x: &Matrix,
    kn_y: &Matrix,
    gamma: f64,
) -> Result<f64> {
    let mean_product = |kx: &Matrix, ky: &Matrix| -> Result<f64> {
        let px = kx.transpose().mul_vec(alpha)?;
        let qy = ky.transpose().mul_vec(beta)?;
        if px.is_empty() {
            return Err(Error::EmptyPairSet);
        }
        Ok(dot(&px, &qy) / px.len() as f64)
    };
    Ok(mean_product(kn_x, kn_y)? - gamma * mean_product(kp_x, kp_y)?)
}
