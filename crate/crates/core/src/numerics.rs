//! Dense linear algebra and empirical statistics shared by both trainers.
//!
//! Everything here is a pure function of its inputs. Summation orders are
//! fixed so that training is bit-reproducible on a given platform.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::new(r.rows, r.cols, r.data)
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_vec_unchecked(self.cols, self.rows, out)
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let product = self.to_nalgebra() * rhs.to_nalgebra();
        Ok(Self::from_nalgebra(&product))
    }

    /// `self * v` for a vector of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Self::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch(format!(
                "cannot subtract {}x{} from {}x{}",
                rhs.rows, rhs.cols, self.rows, self.cols
            )));
        }
        Ok(Self::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Keeps the first `n` rows.
    pub fn top_rows(&self, n: usize) -> Matrix {
        let n = n.min(self.rows);
        Self::from_vec_unchecked(n, self.cols, self.data[..n * self.cols].to_vec())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self::from_vec_unchecked(rows, cols, data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Options for [`cross_covariance_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct CovarianceOptions {
    /// Subtract the sample means before averaging outer products.
    pub center: bool,
}

/// Plain average of outer products, `(1/|S|) Σ x yᵀ`, with no centering.
pub fn cross_covariance<'a, I>(pairs: I) -> Result<Matrix>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    cross_covariance_with(pairs, CovarianceOptions::default())
}

pub fn cross_covariance_with<'a, I>(pairs: I, options: CovarianceOptions) -> Result<Matrix>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut pairs = pairs.into_iter();
    let (x0, y0) = pairs.next().ok_or(Error::EmptyPairSet)?;
    let (n, n_prime) = (x0.len(), y0.len());
    let mut acc = vec![0.0; n * n_prime];
    let mut sum_x = vec![0.0; n];
    let mut sum_y = vec![0.0; n_prime];
    let mut count = 0usize;

    for (x, y) in std::iter::once((x0, y0)).chain(pairs) {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if y.len() != n_prime {
            return Err(Error::DimensionMismatch {
                expected: n_prime,
                found: y.len(),
            });
        }
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut acc[i * n_prime..(i + 1) * n_prime];
            for (r, &yj) in row.iter_mut().zip(y) {
                *r += xi * yj;
            }
        }
        if options.center {
            sum_x.iter_mut().zip(x).for_each(|(s, v)| *s += v);
            sum_y.iter_mut().zip(y).for_each(|(s, v)| *s += v);
        }
        count += 1;
    }

    let inv = 1.0 / count as f64;
    for (i, row) in acc.chunks_mut(n_prime.max(1)).enumerate().take(n) {
        for (j, r) in row.iter_mut().enumerate() {
            *r *= inv;
            if options.center {
                *r -= sum_x[i] * inv * sum_y[j] * inv;
            }
        }
    }
    Matrix::new(n, n_prime, acc)
}

/// Full singular value decomposition `M = U diag(S) Vᵀ`.
///
/// `u` is `rows x rows`, `v` is `cols x cols`, and `singular_values` holds
/// the `min(rows, cols)` values in descending order. Singular vectors are
/// stored as columns.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// Column `i` of `U`.
    pub fn left(&self, i: usize) -> Vec<f64> {
        self.u.column(i)
    }

    /// Column `i` of `V`.
    pub fn right(&self, i: usize) -> Vec<f64> {
        self.v.column(i)
    }

    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let (n, n_prime) = (self.u.rows(), self.v.rows());
        let mut out = vec![0.0; n * n_prime];
        for (k, &s) in self.singular_values.iter().enumerate() {
            for i in 0..n {
                let us = self.u.get(i, k) * s;
                for j in 0..n_prime {
                    out[i * n_prime + j] += us * self.v.get(j, k);
                }
            }
        }
        Matrix::from_vec_unchecked(n, n_prime, out)
    }
}

/// Full SVD with descending singular values and a deterministic sign
/// convention: each pair `(u_i, v_i)` is flipped so that the largest-magnitude
/// entry of `u_i` is positive (ties go to the lowest index). Columns that
/// complete `U` or `V` beyond the rank-`min(rows, cols)` block follow the same
/// rule on their own.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::ShapeMismatch("svd of an empty matrix".into()));
    }
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let (n, n_prime) = m.shape();
    let k = n.min(n_prime);

    let decomposition = nalgebra::linalg::SVD::try_new(m.to_nalgebra(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NonFinite("svd did not converge"))?;
    let u_thin = decomposition.u.expect("u requested");
    let v_t = decomposition.v_t.expect("v requested");
    let values = decomposition.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n_prime);
    let mut singular_values = Vec::with_capacity(k);
    for &idx in &order {
        let mut u: Vec<f64> = u_thin.column(idx).iter().copied().collect();
        let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        if leading_entry_negative(&u) {
            u.iter_mut().for_each(|e| *e = -*e);
            v.iter_mut().for_each(|e| *e = -*e);
        }
        singular_values.push(values[idx].max(0.0));
        u_cols.push(u);
        v_cols.push(v);
    }
    complete_basis(&mut u_cols, n);
    complete_basis(&mut v_cols, n_prime);

    Ok(SvdResult {
        u: columns_to_matrix(&u_cols, n),
        singular_values,
        v: columns_to_matrix(&v_cols, n_prime),
    })
}

fn leading_entry_negative(v: &[f64]) -> bool {
    let mut best = 0usize;
    for (i, e) in v.iter().enumerate() {
        if e.abs() > v[best].abs() {
            best = i;
        }
    }
    v.get(best).is_some_and(|e| *e < 0.0)
}

/// Extends an orthonormal set of columns to a basis of `R^dim` by greedy
/// Gram-Schmidt over the standard basis (largest residual first).
fn complete_basis(cols: &mut Vec<Vec<f64>>, dim: usize) {
    while cols.len() < dim {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for j in 0..dim {
            let mut candidate = vec![0.0; dim];
            candidate[j] = 1.0;
            // two passes of classical Gram-Schmidt keep orthogonality at machine precision
            for _ in 0..2 {
                for c in cols.iter() {
                    let proj = dot(c, &candidate);
                    candidate.iter_mut().zip(c).for_each(|(e, ci)| *e -= proj * ci);
                }
            }
            let norm = dot(&candidate, &candidate).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, candidate));
            }
        }
        let (norm, mut v) = best.expect("dim > cols.len() >= 0");
        v.iter_mut().for_each(|e| *e /= norm);
        if leading_entry_negative(&v) {
            v.iter_mut().for_each(|e| *e = -*e);
        }
        cols.push(v);
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], dim: usize) -> Matrix {
    let mut data = vec![0.0; dim * cols.len()];
    for (j, c) in cols.iter().enumerate() {
        for (i, &e) in c.iter().enumerate() {
            data[i * cols.len() + j] = e;
        }
    }
    Matrix::from_vec_unchecked(dim, cols.len(), data)
}

/// Right-continuous empirical distribution function `F(t) = #{s <= t} / N`.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cdf samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `F(t) = Pr(s <= t)`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= t) as f64 / self.sorted.len() as f64
    }

    /// Left limit `Pr(s < t)`.
    pub fn eval_strict(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&s| s < t) as f64 / self.sorted.len() as f64
    }

    /// Nearest-rank quantile: the sample at index `round(p (N - 1))`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let idx = (p * (self.sorted.len() - 1) as f64).round() as usize;
        self.sorted[idx]
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples)
}

/// Result of [`grid_minimize_2d`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridMinimum {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub a_index: usize,
    pub b_index: usize,
}

/// Exhaustive minimization over `a_grid x b_grid`. Ties keep the earliest
/// point in `a`-major order. NaN objective values never win.
pub fn grid_minimize_2d<F>(mut objective: F, a_grid: &[f64], b_grid: &[f64]) -> Result<GridMinimum>
where
    F: FnMut(usize, usize) -> f64,
{
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::InvalidConfig("empty search grid".into()));
    }
    let mut best: Option<GridMinimum> = None;
    for (ai, &a) in a_grid.iter().enumerate() {
        for (bi, &b) in b_grid.iter().enumerate() {
            let value = objective(ai, bi);
            let better = match &best {
                None => !value.is_nan(),
                Some(cur) => value < cur.value,
            };
            if better {
                best = Some(GridMinimum {
                    a,
                    b,
                    value,
                    a_index: ai,
                    b_index: bi,
                });
            }
        }
    }
    best.ok_or(Error::NonFinite("grid objective"))
}

/// Convenience wrapper taking the objective as a function of grid values.
pub fn grid_minimize_2d_values<F>(mut objective: F, a_grid: &[f64], b_grid: &[f64]) -> Result<GridMinimum>
where
    F: FnMut(f64, f64) -> f64,
{
    grid_minimize_2d(|i, j| objective(a_grid[i], b_grid[j]), a_grid, b_grid)
}
