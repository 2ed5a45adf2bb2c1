//! ROC curves, equal error rate and mean average precision.
//!
//! A pair is declared "same" when its distance is at most the threshold `t`,
//! so `FPR(t)` is the fraction of negatives with distance `<= t` and `FNR(t)`
//! the fraction of positives with distance `> t`.

use std::io::Write;

use rayon::prelude::*;

use crate::codec::{BinaryCode, HashModel, Modality};
use crate::dataset::{MultimodalDataset, PointSet};
use crate::error::{Error, Result};
use crate::index::CodeIndex;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Points ordered by increasing threshold: FPR nondecreasing, FNR
/// nonincreasing. The first point lies below every distance (FPR 0, FNR 1)
/// and the last at the largest distance (FPR 1, FNR 0).
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_from_distances(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptySamples);
    }
    if pos.iter().chain(neg).any(|d| d.is_nan()) {
        return Err(Error::NonFinite("distances"));
    }
    let mut pos = pos.to_vec();
    let mut neg = neg.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 1);
    points.push(RocPoint {
        threshold: thresholds[0] - 1.0,
        fpr: 0.0,
        fnr: 1.0,
    });
    let (mut ip, mut ineg) = (0usize, 0usize);
    for t in thresholds {
        while ip < pos.len() && pos[ip] <= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] <= t {
            ineg += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: ineg as f64 / nn,
            fnr: (pos.len() - ip) as f64 / np,
        });
    }
    Ok(RocCurve { points })
}

/// ROC from histograms of integer distances (`hist[d]` = number of pairs at
/// distance `d`). Produces the same curve as [`roc_from_distances`] on the
/// expanded lists.
pub fn roc_from_histograms(pos_hist: &[u64], neg_hist: &[u64]) -> Result<RocCurve> {
    let np: u64 = pos_hist.iter().sum();
    let nn: u64 = neg_hist.iter().sum();
    if np == 0 || nn == 0 {
        return Err(Error::EmptySamples);
    }
    let len = pos_hist.len().max(neg_hist.len());
    let at = |h: &[u64], d: usize| h.get(d).copied().unwrap_or(0);
    let occupied: Vec<usize> = (0..len)
        .filter(|&d| at(pos_hist, d) + at(neg_hist, d) > 0)
        .collect();
    let mut points = vec![RocPoint {
        threshold: occupied[0] as f64 - 1.0,
        fpr: 0.0,
        fnr: 1.0,
    }];
    let (mut cp, mut cn) = (0u64, 0u64);
    for d in 0..len {
        cp += at(pos_hist, d);
        cn += at(neg_hist, d);
        if at(pos_hist, d) + at(neg_hist, d) > 0 {
            points.push(RocPoint {
                threshold: d as f64,
                fpr: cn as f64 / nn as f64,
                fnr: (np - cp) as f64 / np as f64,
            });
        }
    }
    Ok(RocCurve { points })
}

/// Error rate where FPR equals FNR, linearly interpolated between the two
/// curve points that bracket the crossing.
pub fn eer(roc: &RocCurve) -> f64 {
    let pts = &roc.points;
    let gap = |p: &RocPoint| p.fpr - p.fnr;
    let Some(k) = pts.iter().position(|p| gap(p) >= 0.0) else {
        // unreachable for curves built here, which end at FPR 1, FNR 0
        return pts.last().map_or(0.5, |p| 0.5 * (p.fpr + p.fnr));
    };
    let hi = &pts[k];
    if gap(hi) == 0.0 || k == 0 {
        return 0.5 * (hi.fpr + hi.fnr);
    }
    let lo = &pts[k - 1];
    let lambda = -gap(lo) / (gap(hi) - gap(lo));
    lo.fpr + lambda * (hi.fpr - lo.fpr)
}

/// Mean over relevant ranks `r` of `(#relevant in top r) / r`.
pub fn average_precision<I: IntoIterator<Item = bool>>(relevance: I) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, relevant) in relevance.into_iter().enumerate() {
        if relevant {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::NoRelevantItems);
    }
    Ok(total / hits as f64)
}

pub fn mean_average_precision<R: AsRef<[bool]>>(rankings: &[R]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sum = 0.0;
    for r in rankings {
        sum += average_precision(r.as_ref().iter().copied())?;
    }
    Ok(sum / rankings.len() as f64)
}

/// Metrics of one retrieval experiment plus an echo of its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub eer: f64,
    pub roc: RocCurve,
    pub config: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(map: f64, roc: RocCurve) -> Self {
        Self {
            map,
            eer: eer(&roc),
            roc,
            config: Vec::new(),
        }
    }

    pub fn with_config<K: Into<String>, V: ToString>(mut self, key: K, value: V) -> Self {
        self.config.push((key.into(), value.to_string()));
        self
    }

    /// Header plus one row: config columns, then `map,eer`.
    pub fn write_metrics_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut header: Vec<&str> = self.config.iter().map(|(k, _)| k.as_str()).collect();
        header.extend(["map", "eer"]);
        writeln!(out, "{}", header.join(","))?;
        let mut row: Vec<String> = self.config.iter().map(|(_, v)| v.clone()).collect();
        row.push(format_metric(self.map));
        row.push(format_metric(self.eer));
        writeln!(out, "{}", row.join(","))
    }

    pub fn write_roc_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_roc_csv(out, &self.roc)
    }
}

pub fn format_metric(v: f64) -> String {
    format!("{v:.17}")
}

pub fn write_roc_csv<W: Write>(out: &mut W, roc: &RocCurve) -> std::io::Result<()> {
    writeln!(out, "threshold,fpr,fnr")?;
    for p in &roc.points {
        writeln!(out, "{},{},{}", p.threshold, format_metric(p.fpr), format_metric(p.fnr))?;
    }
    Ok(())
}

/// Query modality and database modality of a cross-modal retrieval run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    pub fn query(self) -> Modality {
        match self {
            Self::XToY => Modality::X,
            Self::YToX => Modality::Y,
        }
    }

    pub fn database(self) -> Modality {
        match self {
            Self::XToY => Modality::Y,
            Self::YToX => Modality::X,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x2y" => Ok(Self::XToY),
            "y2x" => Ok(Self::YToX),
            other => Err(Error::InvalidConfig(format!(
                "unknown direction {other:?} (expected x2y or y2x)"
            ))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::XToY => "x2y",
            Self::YToX => "y2x",
        })
    }
}

fn modality_set(data: &MultimodalDataset, modality: Modality) -> &PointSet {
    match modality {
        Modality::X => &data.x,
        Modality::Y => &data.y,
    }
}

/// mAP and ROC of Hamming retrieval, relevance being label equality. Every
/// query is ranked against the whole database; the ROC covers all
/// query/database pairs.
pub fn evaluate_codes(
    queries: &[BinaryCode],
    query_labels: &[usize],
    database: CodeIndex,
) -> Result<EvalReport> {
    if queries.len() != query_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} queries but {} labels",
            queries.len(),
            query_labels.len()
        )));
    }
    let db_labels = database
        .labels()
        .ok_or_else(|| Error::InvalidConfig("database index has no labels".into()))?
        .to_vec();
    let bins = database.code_len() + 1;
    let per_query: Vec<(f64, Vec<u64>, Vec<u64>)> = queries
        .par_iter()
        .zip(query_labels)
        .map(|(q, &ql)| {
            let ranking = database.rank_all(q)?;
            let mut pos = vec![0u64; bins];
            let mut neg = vec![0u64; bins];
            let relevance: Vec<bool> = ranking
                .iter()
                .map(|n| {
                    let same = db_labels[n.position] == ql;
                    let hist = if same { &mut pos } else { &mut neg };
                    hist[n.distance as usize] += 1;
                    same
                })
                .collect();
            Ok((average_precision(relevance)?, pos, neg))
        })
        .collect::<Result<_>>()?;
    summarize(per_query, bins)
}

fn summarize(per_query: Vec<(f64, Vec<u64>, Vec<u64>)>, bins: usize) -> Result<EvalReport> {
    if per_query.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut pos = vec![0u64; bins];
    let mut neg = vec![0u64; bins];
    let mut ap_sum = 0.0;
    for (ap, p, n) in &per_query {
        ap_sum += ap;
        for (acc, v) in pos.iter_mut().zip(p) {
            *acc += v;
        }
        for (acc, v) in neg.iter_mut().zip(n) {
            *acc += v;
        }
    }
    let roc = roc_from_histograms(&pos, &neg)?;
    Ok(EvalReport::new(ap_sum / per_query.len() as f64, roc))
}

/// Encodes both modalities of `data` with `model`, indexes the database
/// modality and queries it with every point of the other one.
pub fn evaluate_cross_modal(model: &HashModel, data: &MultimodalDataset, direction: Direction) -> Result<EvalReport> {
    let query_set = modality_set(data, direction.query());
    let db_set = modality_set(data, direction.database());
    let queries = model.encode_all(query_set.points(), direction.query())?;
    let db_codes = model.encode_all(db_set.points(), direction.database())?;
    let index = CodeIndex::from_codes(db_codes, Some(db_set.labels().to_vec()))?;
    Ok(evaluate_codes(&queries, query_set.labels(), index)?
        .with_config("method", model.method_name())
        .with_config("m", model.m())
        .with_config("direction", direction))
}

/// Unimodal baseline: every point of one modality queries all the other
/// points of the same modality, ranked by Euclidean distance (ties by
/// position).
pub fn evaluate_euclidean(data: &MultimodalDataset, modality: Modality) -> Result<EvalReport> {
    let set = modality_set(data, modality);
    let n = set.len();
    if n < 2 {
        return Err(Error::EmptySamples);
    }
    let per_query: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = set.point(i);
            let mut ranked: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = q.iter().zip(set.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2.sqrt(), j)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            let relevance: Vec<bool> = ranked
                .iter()
                .map(|&(d, j)| {
                    let same = set.label(j) == set.label(i);
                    if same { pos.push(d) } else { neg.push(d) }
                    same
                })
                .collect();
            Ok((average_precision(relevance)?, pos, neg))
        })
        .collect::<Result<_>>()?;
    let map = per_query.iter().map(|q| q.0).sum::<f64>() / n as f64;
    let pos: Vec<f64> = per_query.iter().flat_map(|q| q.1.iter().copied()).collect();
    let neg: Vec<f64> = per_query.iter().flat_map(|q| q.2.iter().copied()).collect();
    let roc = roc_from_distances(&pos, &neg)?;
    Ok(EvalReport::new(map, roc)
        .with_config("method", "euclidean")
        .with_config("modality", format!("{modality:?}").to_lowercase()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let roc = roc_from_distances(&[0.0], &[8.0]).unwrap();
        assert!(roc.points.iter().any(|p| p.fpr == 0.0 && p.fnr == 0.0));
        assert_eq!(eer(&roc), 0.0);
    }

    #[test]
    fn identical_distributions() {
        for d in [vec![1.0, 2.0], vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 5.0, 7.0, 7.0]] {
            let roc = roc_from_distances(&d, &d).unwrap();
            let f = crate::numerics::empirical_cdf(&d).unwrap();
            for p in &roc.points[1..] {
                assert!((p.fpr + (1.0 - p.fnr) - 2.0 * f.eval(p.threshold)).abs() < 1e-15);
            }
            assert!((eer(&roc) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn interleaved_lists() {
        let roc = roc_from_distances(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!(eer(&roc), 0.5);
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(roc_from_distances(&[], &[1.0]).is_err());
        assert!(roc_from_distances(&[1.0], &[]).is_err());
        assert!(roc_from_histograms(&[0, 0], &[1]).is_err());
    }

    #[test]
    fn histogram_route_matches_list_route() {
        let pos = [0.0, 1.0, 1.0, 3.0, 6.0];
        let neg = [2.0, 3.0, 3.0, 5.0, 6.0, 6.0];
        let mut ph = vec![0u64; 7];
        let mut nh = vec![0u64; 7];
        pos.iter().for_each(|&d| ph[d as usize] += 1);
        neg.iter().for_each(|&d| nh[d as usize] += 1);
        let a = roc_from_distances(&pos, &neg).unwrap();
        let b = roc_from_histograms(&ph, &nh).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ap_hand_cases() {
        assert!((average_precision([true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision([true, true, false, false]).unwrap(), 1.0);
        assert!(matches!(average_precision([false, false]), Err(Error::NoRelevantItems)));
        let m = mean_average_precision(&[vec![true, false, true], vec![true]]).unwrap();
        assert!((m - (5.0 / 6.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn reversed_ranking_scores_lower() {
        let perfect = [true, true, false, false, false];
        let reversed: Vec<bool> = perfect.iter().rev().copied().collect();
        assert!(average_precision(reversed).unwrap() < average_precision(perfect).unwrap());
    }

    #[test]
    fn metrics_csv_layout() {
        let roc = roc_from_distances(&[0.0], &[1.0]).unwrap();
        let report = EvalReport::new(1.0, roc).with_config("method", "cmdif").with_config("m", 4);
        let mut buf = Vec::new();
        report.write_metrics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("method,m,map,eer"));
        assert!(text.lines().nth(1).unwrap().starts_with("cmdif,4,1.0"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn lists() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (
                prop::collection::vec(0u32..20, 1..30),
                prop::collection::vec(0u32..20, 1..30),
            )
                .prop_map(|(p, n)| {
                    (
                        p.into_iter().map(f64::from).collect(),
                        n.into_iter().map(f64::from).collect(),
                    )
                })
        }

        proptest! {
            #[test]
            fn roc_is_monotone_and_bounded((pos, neg) in lists()) {
                let roc = roc_from_distances(&pos, &neg).unwrap();
                for w in roc.points.windows(2) {
                    prop_assert!(w[0].threshold < w[1].threshold);
                    prop_assert!(w[0].fpr <= w[1].fpr);
                    prop_assert!(w[0].fnr >= w[1].fnr);
                }
                let e = eer(&roc);
                prop_assert!((0.0..=1.0).contains(&e));
            }

            #[test]
            fn eer_is_a_rank_statistic((pos, neg) in lists()) {
                let e = eer(&roc_from_distances(&pos, &neg).unwrap());
                let f = |d: &f64| (0.3 * d).exp() - 7.0;
                let pos2: Vec<f64> = pos.iter().map(f).collect();
                let neg2: Vec<f64> = neg.iter().map(f).collect();
                let e2 = eer(&roc_from_distances(&pos2, &neg2).unwrap());
                prop_assert!((e - e2).abs() < 1e-12);
            }

            #[test]
            fn swapping_lists_reflects_the_curve((pos, neg) in lists()) {
                let a = roc_from_distances(&pos, &neg).unwrap();
                let b = roc_from_distances(&neg, &pos).unwrap();
                prop_assert_eq!(a.points.len(), b.points.len());
                for (p, q) in a.points.iter().zip(&b.points) {
                    prop_assert!((q.fpr - (1.0 - p.fnr)).abs() < 1e-15);
                    prop_assert!((q.fnr - (1.0 - p.fpr)).abs() < 1e-15);
                }
                // the crossing sits at the same place; the error rate there reflects
                let (ea, eb) = (eer(&a), eer(&b));
                prop_assert!((ea + eb - 1.0).abs() < 1e-12);
            }
        }
    }
}
