//! Cross-modality diff-hash: linear projections from the SVD of the
//! covariance difference `Σᴺ − γ Σᴾ`, followed by an independent threshold
//! search in every hash dimension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{MultimodalDataset, PairSample};
use crate::error::{Error, Result};
use crate::numerics::{cross_covariance, dot, svd, Matrix};
use crate::threshold::{select_thresholds, ProjectionSamples, RateEstimator, ThresholdGrid};

/// Which singular vectors become projections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// `p_i = u_{n-i+1}`, `q_i = v_{n'-i+1}`: the smallest singular pairs.
    PaperLiteral,
    /// `p_i = u_i`, `q_i = -v_i`: the largest singular pairs with the right
    /// vector negated, which attains the minimum `-(s_1 + ... + s_m)` of
    /// `tr(P Σ Qᵀ)` over row-orthonormal `P`, `Q`.
    #[default]
    MinTrace,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(Self::PaperLiteral),
            "min-trace" => Ok(Self::MinTrace),
            other => Err(Error::InvalidConfig(format!("unknown projection mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PaperLiteral => "paper-literal",
            Self::MinTrace => "min-trace",
        })
    }
}

/// Training parameters shared by both trainers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashParams {
    pub m: usize,
    pub gamma: f64,
    pub grid: ThresholdGrid,
    pub mode: ProjectionMode,
    #[serde(default)]
    pub rates: RateEstimator,
    #[serde(default)]
    pub weighting: GammaWeighting,
}

/// How `gamma` weighs false negatives against false positives in the
/// threshold search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaWeighting {
    /// Minimize `gamma * FN + FP` over rates.
    PerRate,
    /// Weigh every positive pair by `gamma` and every negative pair by one,
    /// i.e. minimize `gamma |P| FN + |N| FP`.
    #[default]
    PerPair,
}

impl GammaWeighting {
    /// Multiplier of FN when the objective is expressed over rates.
    pub fn rate_gamma(self, gamma: f64, num_pos: usize, num_neg: usize) -> f64 {
        match self {
            Self::PerRate => gamma,
            Self::PerPair => gamma * num_pos as f64 / num_neg as f64,
        }
    }
}

impl std::str::FromStr for GammaWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-rate" => Ok(Self::PerRate),
            "per-pair" => Ok(Self::PerPair),
            other => Err(Error::InvalidConfig(format!("unknown gamma weighting {other:?}"))),
        }
    }
}

impl std::fmt::Display for GammaWeighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PerRate => "per-rate",
            Self::PerPair => "per-pair",
        })
    }
}

impl HashParams {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            gamma: 10.0,
            grid: ThresholdGrid::default(),
            mode: ProjectionMode::default(),
            rates: RateEstimator::default(),
            weighting: GammaWeighting::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("hash length m must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        self.grid.validate()
    }
}

/// `ξ(x) = sign(P x + a)`, `η(y) = sign(Q y + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearHashModel {
    pub p: Matrix,
    pub q: Matrix,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: f64,
    pub mode: ProjectionMode,
}

impl LinearHashModel {
    pub fn m(&self) -> usize {
        self.p.rows()
    }

    pub fn n(&self) -> usize {
        self.p.cols()
    }

    pub fn n_prime(&self) -> usize {
        self.q.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.p.rows();
        if self.q.rows() != m || self.a.len() != m || self.b.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent hash length: P has {m} rows, Q {}, a {}, b {}",
                self.q.rows(),
                self.a.len(),
                self.b.len()
            )));
        }
        let bound = self.n().min(self.n_prime());
        if m > bound {
            return Err(Error::DimensionalityCap { m, bound });
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("thresholds"));
        }
        Ok(())
    }

    /// Keeps the first `m` hash dimensions.
    pub fn truncated(&self, m: usize) -> LinearHashModel {
        LinearHashModel {
            p: self.p.top_rows(m),
            q: self.q.top_rows(m),
            a: self.a[..m.min(self.a.len())].to_vec(),
            b: self.b[..m.min(self.b.len())].to_vec(),
            gamma: self.gamma,
            mode: self.mode,
        }
    }
}

/// `Σᴺ − γ Σᴾ` with both terms plain averages of `x yᵀ`.
pub fn covariance_difference<'a, P, N>(positives: P, negatives: N, gamma: f64) -> Result<Matrix>
where
    P: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    N: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    let sigma_p = cross_covariance(positives)?;
    let sigma_n = cross_covariance(negatives)?;
    sigma_n.sub(&sigma_p.scaled(gamma))
}

/// Projection rows taken from the SVD of a `rows x cols` difference matrix.
/// Returns `(left, right)` with `m` orthonormal rows each.
pub fn projections_from_difference(sigma_d: &Matrix, m: usize, mode: ProjectionMode) -> Result<(Matrix, Matrix)> {
    let (n, n_prime) = sigma_d.shape();
    let decomposition = svd(sigma_d)?;
    let mut left = Vec::with_capacity(m * n);
    let mut right = Vec::with_capacity(m * n_prime);
    for i in 0..m {
        match mode {
            ProjectionMode::PaperLiteral => {
                left.extend(decomposition.left(n - 1 - i));
                right.extend(decomposition.right(n_prime - 1 - i));
            }
            ProjectionMode::MinTrace => {
                left.extend(decomposition.left(i));
                right.extend(decomposition.right(i).into_iter().map(|v| -v));
            }
        }
    }
    Ok((Matrix::new(m, n, left)?, Matrix::new(m, n_prime, right)?))
}

/// `(P, Q)` for a hash of length `m <= min(n, n')`.
pub fn train_projections(sigma_d: &Matrix, m: usize, mode: ProjectionMode) -> Result<(Matrix, Matrix)> {
    let bound = sigma_d.rows().min(sigma_d.cols());
    if m > bound {
        return Err(Error::DimensionalityCap { m, bound });
    }
    projections_from_difference(sigma_d, m, mode)
}

/// Projects every row of `points` (row-major, `dim` columns) with every row
/// of `proj`. Output is `proj.rows() x count`, one row per hash dimension.
pub(crate) fn project_all(proj: &Matrix, points: &[f64], dim: usize) -> Vec<Vec<f64>> {
    proj.row_iter()
        .map(|r| points.chunks_exact(dim).map(|p| dot(r, p)).collect())
        .collect()
}

/// Gathers per-pair projection samples of dimension `i` from per-point
/// projections.
pub(crate) fn gather_samples(
    px: &[f64],
    qy: &[f64],
    pairs: &PairSample,
) -> ProjectionSamples {
    ProjectionSamples {
        x_pos: pairs.positives.iter().map(|&(i, _)| px[i]).collect(),
        y_pos: pairs.positives.iter().map(|&(_, j)| qy[j]).collect(),
        x_neg: pairs.negatives.iter().map(|&(i, _)| px[i]).collect(),
        y_neg: pairs.negatives.iter().map(|&(_, j)| qy[j]).collect(),
    }
}

/// Threshold search for every dimension; dimensions are independent and
/// searched in parallel with the output order preserved.
pub(crate) fn thresholds_for(
    proj_x: &[Vec<f64>],
    proj_y: &[Vec<f64>],
    pairs: &PairSample,
    params: &HashParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gamma = params
        .weighting
        .rate_gamma(params.gamma, pairs.positives.len(), pairs.negatives.len());
    let choices: Vec<_> = proj_x
        .par_iter()
        .zip(proj_y.par_iter())
        .map(|(px, qy)| select_thresholds(&gather_samples(px, qy, pairs), gamma, &params.grid, params.rates))
        .collect::<Result<_>>()?;
    Ok(choices.iter().map(|c| (c.a, c.b)).unzip())
}

/// Trains a linear cross-modal hash on the given positive and negative pairs.
pub fn train_cmdif(
    dataset: &MultimodalDataset,
    pairs: &PairSample,
    params: &HashParams,
) -> Result<LinearHashModel> {
    params.validate()?;
    let bound = dataset.n().min(dataset.n_prime());
    if params.m > bound {
        return Err(Error::DimensionalityCap { m: params.m, bound });
    }
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    pairs.validate(dataset)?;

    let sigma_d = covariance_difference(
        pairs.positive_vectors(dataset),
        pairs.negative_vectors(dataset),
        params.gamma,
    )?;
    let (p, q) = train_projections(&sigma_d, params.m, params.mode)?;

    let proj_x = project_all(&p, dataset.x.as_slice(), dataset.n());
    let proj_y = project_all(&q, dataset.y.as_slice(), dataset.n_prime());
    let (a, b) = thresholds_for(&proj_x, &proj_y, pairs, params)?;

    Ok(LinearHashModel {
        p,
        q,
        a,
        b,
        gamma: params.gamma,
        mode: params.mode,
    })
}

/// `E{(Px)ᵀ(Qy) | N} − γ E{(Px)ᵀ(Qy) | P}` over explicit pairs, the relaxed
/// loss whose minimization yields the projections.
pub fn linear_surrogate_loss(
    p: &Matrix,
    q: &Matrix,
    dataset: &MultimodalDataset,
    pairs: &PairSample,
    gamma: f64,
) -> Result<f64> {
    let mean_corr = |list: &[(usize, usize)]| -> Result<f64> {
        if list.is_empty() {
            return Err(Error::EmptyPairSet);
        }
        let mut total = 0.0;
        for &(i, j) in list {
            let px = p.mul_vec(dataset.x.point(i))?;
            let qy = q.mul_vec(dataset.y.point(j))?;
            total += dot(&px, &qy);
        }
        Ok(total / list.len() as f64)
    };
    Ok(mean_corr(&pairs.negatives)? - gamma * mean_corr(&pairs.positives)?)
}
