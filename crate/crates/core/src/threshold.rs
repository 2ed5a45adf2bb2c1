//! Per-dimension threshold search shared by the linear and kernel trainers.
//!
//! For one hash dimension with projections `p(x)` and `q(y)`, the bit of a
//! point is `-1` exactly when `p(x) + a < 0`, i.e. `p(x) < -a`. The false
//! negative and false positive rates of a pair of thresholds are estimated
//! from the marginal distributions of the projections on the positive and
//! negative sets:
//!
//! ```text
//! FN(a, b) = Fxp(-a) (1 - Fyp(-b)) + Fyp(-b) (1 - Fxp(-a))
//! FP(a, b) = Fxn(-a) Fyn(-b) + (1 - Fxn(-a)) (1 - Fyn(-b))
//! ```
//!
//! where `F(t)` is the fraction of samples strictly below `t`, matching the
//! `sign(0) = +1` encoding rule.
//!
//! The product form treats `p(x)` and `q(y)` as independent within each pair
//! set. When the positive and negative marginals coincide it gives
//! `FN + FP = 1` at every threshold, so any `gamma > 1` drives the search to
//! a constant bit. [`RateEstimator::Joint`] instead counts, over the aligned
//! pairs, how often the two bits disagree (positives) or agree (negatives).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{grid_minimize_2d, EmpiricalCdf};

/// Candidate thresholds are the negated nearest-rank quantiles of the pooled
/// (positive and negative) projection samples at `k / (levels - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub levels: usize,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self { levels: 64 }
    }
}

impl ThresholdGrid {
    pub fn new(levels: usize) -> Result<Self> {
        let grid = Self { levels };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidConfig(format!(
                "threshold grid needs at least 2 levels, got {}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Strictly increasing threshold candidates for one modality. Collapses
    /// to a single candidate when all samples coincide.
    pub fn candidates(&self, positives: &[f64], negatives: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let pooled: Vec<f64> = positives.iter().chain(negatives).copied().collect();
        let cdf = EmpiricalCdf::new(&pooled)?;
        let last = (self.levels - 1) as f64;
        let mut out: Vec<f64> = (0..self.levels)
            .map(|k| -cdf.quantile(k as f64 / last))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }
}

/// How FN and FP are estimated from the projection samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateEstimator {
    /// Exact pair counts of bit disagreement (P) and agreement (N).
    #[default]
    Joint,
    /// Products of the four marginal distributions.
    Marginal,
}

impl std::str::FromStr for RateEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "marginal" => Ok(Self::Marginal),
            other => Err(Error::InvalidConfig(format!("unknown rate estimator {other:?}"))),
        }
    }
}

impl std::fmt::Display for RateEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Joint => "joint",
            Self::Marginal => "marginal",
        })
    }
}

/// Projections of one hash dimension over the positive and negative pairs.
/// `x_pos[k]` and `y_pos[k]` belong to the same pair (likewise for
/// negatives).
#[derive(Clone, Debug, Default)]
pub struct ProjectionSamples {
    pub x_pos: Vec<f64>,
    pub y_pos: Vec<f64>,
    pub x_neg: Vec<f64>,
    pub y_neg: Vec<f64>,
}

/// The four marginal distributions entering the rate estimates.
#[derive(Clone, Debug)]
pub struct RateCdfs {
    pub x_pos: EmpiricalCdf,
    pub y_pos: EmpiricalCdf,
    pub x_neg: EmpiricalCdf,
    pub y_neg: EmpiricalCdf,
}

impl RateCdfs {
    pub fn new(samples: &ProjectionSamples) -> Result<Self> {
        Ok(Self {
            x_pos: EmpiricalCdf::new(&samples.x_pos)?,
            y_pos: EmpiricalCdf::new(&samples.y_pos)?,
            x_neg: EmpiricalCdf::new(&samples.x_neg)?,
            y_neg: EmpiricalCdf::new(&samples.y_neg)?,
        })
    }
}

fn rates_from_marginals(fxp: f64, fyp: f64, fxn: f64, fyn: f64) -> (f64, f64) {
    let fn_rate = fxp * (1.0 - fyp) + fyp * (1.0 - fxp);
    let fp_rate = fxn * fyn + (1.0 - fxn) * (1.0 - fyn);
    (fn_rate, fp_rate)
}

/// `(FN, FP)` at thresholds `(a, b)`.
pub fn false_rates(cdfs: &RateCdfs, a: f64, b: f64) -> (f64, f64) {
    rates_from_marginals(
        cdfs.x_pos.eval_strict(-a),
        cdfs.y_pos.eval_strict(-b),
        cdfs.x_neg.eval_strict(-a),
        cdfs.y_neg.eval_strict(-b),
    )
}

/// Outcome of the exhaustive threshold search for one dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub a: f64,
    pub b: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
    pub objective: f64,
}

/// Minimizes `gamma * FN + FP` over the candidate grid.
pub fn select_thresholds(
    samples: &ProjectionSamples,
    gamma: f64,
    grid: &ThresholdGrid,
    estimator: RateEstimator,
) -> Result<ThresholdChoice> {
    let a_grid = grid.candidates(&samples.x_pos, &samples.x_neg)?;
    let b_grid = grid.candidates(&samples.y_pos, &samples.y_neg)?;
    select_thresholds_on(samples, gamma, &a_grid, &b_grid, estimator)
}

/// Same as [`select_thresholds`] with explicit, ascending candidate lists.
pub fn select_thresholds_on(
    samples: &ProjectionSamples,
    gamma: f64,
    a_grid: &[f64],
    b_grid: &[f64],
    estimator: RateEstimator,
) -> Result<ThresholdChoice> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
    }
    if samples.x_pos.len() != samples.y_pos.len() || samples.x_neg.len() != samples.y_neg.len() {
        return Err(Error::ShapeMismatch("projection samples are not pair-aligned".into()));
    }
    match estimator {
        RateEstimator::Marginal => select_marginal(samples, gamma, a_grid, b_grid),
        RateEstimator::Joint => select_joint(samples, gamma, a_grid, b_grid),
    }
}

fn select_marginal(
    samples: &ProjectionSamples,
    gamma: f64,
    a_grid: &[f64],
    b_grid: &[f64],
) -> Result<ThresholdChoice> {
    let cdfs = RateCdfs::new(samples)?;
    let fx: Vec<(f64, f64)> = a_grid
        .iter()
        .map(|&a| (cdfs.x_pos.eval_strict(-a), cdfs.x_neg.eval_strict(-a)))
        .collect();
    let fy: Vec<(f64, f64)> = b_grid
        .iter()
        .map(|&b| (cdfs.y_pos.eval_strict(-b), cdfs.y_neg.eval_strict(-b)))
        .collect();
    let best = grid_minimize_2d(
        |i, j| {
            let (fn_rate, fp_rate) = rates_from_marginals(fx[i].0, fy[j].0, fx[i].1, fy[j].1);
            gamma * fn_rate + fp_rate
        },
        a_grid,
        b_grid,
    )?;
    let (fn_rate, fp_rate) =
        rates_from_marginals(fx[best.a_index].0, fy[best.b_index].0, fx[best.a_index].1, fy[best.b_index].1);
    Ok(ThresholdChoice {
        a: best.a,
        b: best.b,
        fn_rate,
        fp_rate,
        objective: best.value,
    })
}

/// Pair counts over an `a_grid x b_grid` lattice. `both[k][j]` counts pairs
/// with `x + a_k < 0` and `y + b_j < 0`; `below_x[k]` and `below_y[j]` are
/// the one-sided counts.
struct LatticeCounts {
    total: usize,
    below_x: Vec<usize>,
    below_y: Vec<usize>,
    both: Vec<usize>,
    width: usize,
}

impl LatticeCounts {
    fn new(xs: &[f64], ys: &[f64], a_grid: &[f64], b_grid: &[f64]) -> Self {
        let (la, lb) = (a_grid.len(), b_grid.len());
        // hist[i][j]: pairs whose x is below exactly the first i candidates of a
        let mut hist = vec![0usize; (la + 1) * (lb + 1)];
        for (&x, &y) in xs.iter().zip(ys) {
            let i = a_grid.partition_point(|&a| x + a < 0.0);
            let j = b_grid.partition_point(|&b| y + b < 0.0);
            hist[i * (lb + 1) + j] += 1;
        }
        // suffix sums: both[k][j] = Σ_{i > k, j' > j} hist[i][j']
        let mut suffix = vec![0usize; (la + 2) * (lb + 2)];
        let w = lb + 2;
        for i in (0..=la).rev() {
            for j in (0..=lb).rev() {
                suffix[i * w + j] = hist[i * (lb + 1) + j] + suffix[(i + 1) * w + j] + suffix[i * w + j + 1]
                    - suffix[(i + 1) * w + j + 1];
            }
        }
        let mut both = vec![0usize; la * lb];
        for k in 0..la {
            for j in 0..lb {
                both[k * lb + j] = suffix[(k + 1) * w + j + 1];
            }
        }
        let below_x = (0..la).map(|k| suffix[(k + 1) * w]).collect();
        let below_y = (0..lb).map(|j| suffix[j + 1]).collect();
        Self {
            total: xs.len(),
            below_x,
            below_y,
            both,
            width: lb,
        }
    }

    /// Pairs whose two bits differ.
    fn disagreements(&self, k: usize, j: usize) -> usize {
        self.below_x[k] + self.below_y[j] - 2 * self.both[k * self.width + j]
    }
}

fn select_joint(
    samples: &ProjectionSamples,
    gamma: f64,
    a_grid: &[f64],
    b_grid: &[f64],
) -> Result<ThresholdChoice> {
    if samples.x_pos.is_empty() || samples.x_neg.is_empty() {
        return Err(Error::EmptySamples);
    }
    let pos = LatticeCounts::new(&samples.x_pos, &samples.y_pos, a_grid, b_grid);
    let neg = LatticeCounts::new(&samples.x_neg, &samples.y_neg, a_grid, b_grid);
    let rates = |k: usize, j: usize| {
        let fn_rate = pos.disagreements(k, j) as f64 / pos.total as f64;
        let fp_rate = (neg.total - neg.disagreements(k, j)) as f64 / neg.total as f64;
        (fn_rate, fp_rate)
    };
    let best = grid_minimize_2d(
        |k, j| {
            let (fn_rate, fp_rate) = rates(k, j);
            gamma * fn_rate + fp_rate
        },
        a_grid,
        b_grid,
    )?;
    let (fn_rate, fp_rate) = rates(best.a_index, best.b_index);
    Ok(ThresholdChoice {
        a: best.a,
        b: best.b,
        fn_rate,
        fp_rate,
        objective: best.value,
    })
}

/// Exact `(FN, FP)` of one hash dimension at `(a, b)` by direct pair counts.
pub fn joint_false_rates(samples: &ProjectionSamples, a: f64, b: f64) -> (f64, f64) {
    let count = |xs: &[f64], ys: &[f64], same: bool| {
        xs.iter()
            .zip(ys)
            .filter(|(x, y)| ((*x + a < 0.0) == (*y + b < 0.0)) == same)
            .count() as f64
    };
    let fn_rate = count(&samples.x_pos, &samples.y_pos, false) / samples.x_pos.len() as f64;
    let fp_rate = count(&samples.x_neg, &samples.y_neg, true) / samples.x_neg.len() as f64;
    (fn_rate, fp_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(xp: &[f64], yp: &[f64], xn: &[f64], yn: &[f64]) -> ProjectionSamples {
        ProjectionSamples {
            x_pos: xp.to_vec(),
            y_pos: yp.to_vec(),
            x_neg: xn.to_vec(),
            y_neg: yn.to_vec(),
        }
    }

    #[test]
    fn zero_fn_when_positives_clear_thresholds() {
        let s = samples(&[1.0, 2.0], &[3.0, 4.0], &[-1.0, 1.0], &[-2.0, 2.0]);
        let cdfs = RateCdfs::new(&s).unwrap();
        let (fn_rate, _) = false_rates(&cdfs, 0.0, 0.0);
        assert_eq!(fn_rate, 0.0);
    }

    #[test]
    fn half_marginals_give_half_fp() {
        let s = samples(&[0.0], &[0.0], &[-1.0, 1.0], &[-1.0, 1.0]);
        let cdfs = RateCdfs::new(&s).unwrap();
        let (_, fp) = false_rates(&cdfs, 0.0, 0.0);
        assert_eq!(fp, 0.5);
    }

    #[test]
    fn rates_are_probabilities() {
        let s = samples(&[0.3, -1.0, 2.0], &[0.1, 0.4], &[-3.0, 5.0], &[1.0]);
        let cdfs = RateCdfs::new(&s).unwrap();
        for a in [-10.0, -1.0, 0.0, 0.5, 10.0] {
            for b in [-10.0, -0.2, 0.0, 3.0] {
                let (f1, f2) = false_rates(&cdfs, a, b);
                assert!((0.0..=1.0).contains(&f1));
                assert!((0.0..=1.0).contains(&f2));
            }
        }
    }

    #[test]
    fn candidates_are_strictly_increasing() {
        let grid = ThresholdGrid::new(8).unwrap();
        let c = grid.candidates(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0]).unwrap();
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.first(), Some(&-6.0));
        assert_eq!(c.last(), Some(&-1.0));
    }

    #[test]
    fn degenerate_grid_collapses() {
        let s = samples(&[2.0, 2.0], &[1.0, 1.0], &[2.0], &[1.0]);
        let grid = ThresholdGrid::default();
        assert_eq!(grid.candidates(&s.x_pos, &s.x_neg).unwrap(), vec![-2.0]);
        let t = select_thresholds(&s, 10.0, &grid, RateEstimator::Marginal).unwrap();
        assert_eq!((t.a, t.b), (-2.0, -1.0));
    }

    #[test]
    fn grid_needs_two_levels() {
        assert!(ThresholdGrid::new(1).is_err());
    }

    #[test]
    fn separable_case_reaches_zero_fn() {
        let s = samples(
            &[1.0, 2.0, 3.0],
            &[0.5, 1.5, 2.5],
            &[-2.0, 1.0, -1.0, 2.0],
            &[1.0, -1.0, -2.0, 0.5],
        );
        let t = select_thresholds(&s, 10.0, &ThresholdGrid::new(16).unwrap(), RateEstimator::Marginal).unwrap();
        assert_eq!(t.fn_rate, 0.0);
    }

    #[test]
    fn huge_gamma_prefers_fn_then_fp() {
        let s = samples(
            &[0.2, -0.4, 1.3, 0.9, -1.1],
            &[0.5, -0.2, 0.8, 1.6, -0.7],
            &[-0.3, 0.7, -1.5, 1.1, 0.1, -0.8],
            &[0.9, -0.6, 0.4, -1.2, 1.4, 0.0],
        );
        let grid = ThresholdGrid::new(8).unwrap();
        let t = select_thresholds(&s, 1e6, &grid, RateEstimator::Marginal).unwrap();
        let a_grid = grid.candidates(&s.x_pos, &s.x_neg).unwrap();
        let b_grid = grid.candidates(&s.y_pos, &s.y_neg).unwrap();
        let cdfs = RateCdfs::new(&s).unwrap();
        let min_fn = a_grid
            .iter()
            .flat_map(|&a| b_grid.iter().map(move |&b| (a, b)))
            .map(|(a, b)| false_rates(&cdfs, a, b).0)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(t.fn_rate, min_fn);
        for &a in &a_grid {
            for &b in &b_grid {
                let (f1, f2) = false_rates(&cdfs, a, b);
                if f1 == min_fn {
                    assert!(t.fp_rate <= f2);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_gamma() {
        let s = samples(&[1.0], &[1.0], &[1.0], &[1.0]);
        for est in [RateEstimator::Joint, RateEstimator::Marginal] {
            assert!(select_thresholds(&s, 0.0, &ThresholdGrid::default(), est).is_err());
            let empty = samples(&[], &[], &[1.0], &[1.0]);
            assert!(select_thresholds(&empty, 1.0, &ThresholdGrid::default(), est).is_err());
        }
        let ragged = samples(&[1.0], &[], &[1.0], &[1.0]);
        assert!(select_thresholds(&ragged, 1.0, &ThresholdGrid::default(), RateEstimator::Joint).is_err());
    }

    #[test]
    fn joint_counts_match_direct_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let np = rng.random_range(1..12);
            let nn = rng.random_range(1..12);
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-3..=3) as f64 * 0.5).collect() };
            let s = ProjectionSamples {
                x_pos: draw(np),
                y_pos: draw(np),
                x_neg: draw(nn),
                y_neg: draw(nn),
            };
            let grid = ThresholdGrid::new(rng.random_range(2..10)).unwrap();
            let gamma = rng.random_range(0.1..20.0);
            let t = select_thresholds(&s, gamma, &grid, RateEstimator::Joint).unwrap();
            let a_grid = grid.candidates(&s.x_pos, &s.x_neg).unwrap();
            let b_grid = grid.candidates(&s.y_pos, &s.y_neg).unwrap();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for &a in &a_grid {
                for &b in &b_grid {
                    let (f1, f2) = joint_false_rates(&s, a, b);
                    let v = gamma * f1 + f2;
                    if v < best.0 {
                        best = (v, a, b);
                    }
                }
            }
            assert_eq!((t.objective, t.a, t.b), best);
            assert_eq!((t.fn_rate, t.fp_rate), joint_false_rates(&s, t.a, t.b));
        }
    }

    #[test]
    fn marginal_estimate_is_blind_to_correlation() {
        // perfectly correlated positives, identical marginals on both sets
        let v = [-2.0, -1.0, 1.0, 2.0];
        let s = samples(&v, &v, &v, &[2.0, 1.0, -1.0, -2.0]);
        let cdfs = RateCdfs::new(&s).unwrap();
        let (f1, f2) = false_rates(&cdfs, 0.0, 0.0);
        assert_eq!(f1 + f2, 1.0);
        assert_eq!(joint_false_rates(&s, 0.0, 0.0), (0.0, 0.0));
    }
}
