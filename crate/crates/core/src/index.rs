//! Exact Hamming retrieval by linear scan.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;

use crate::codec::{hamming_unchecked, BinaryCode};
use crate::error::{Error, Result};

/// Immutable database of equal-length codes.
#[derive(Clone, Debug)]
pub struct CodeIndex {
    codes: Vec<BinaryCode>,
    ids: Vec<u64>,
    labels: Option<Vec<usize>>,
    code_len: usize,
}

/// One retrieved database entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: u32,
    /// Position of the entry in the index.
    pub position: usize,
}

impl CodeIndex {
    pub fn build(codes: Vec<BinaryCode>, ids: Vec<u64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if codes.len() != ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} codes but {} ids",
                codes.len(),
                ids.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != codes.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} codes but {} labels",
                    codes.len(),
                    l.len()
                )));
            }
        }
        let code_len = codes.first().map_or(0, BinaryCode::len);
        if let Some(c) = codes.iter().find(|c| c.len() != code_len) {
            return Err(Error::CodeLengthMismatch(code_len, c.len()));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::DuplicateId(*dup));
        }
        Ok(Self {
            codes,
            ids,
            labels,
            code_len,
        })
    }

    /// Ids are the positions `0..codes.len()`.
    pub fn from_codes(codes: Vec<BinaryCode>, labels: Option<Vec<usize>>) -> Result<Self> {
        let ids = (0..codes.len() as u64).collect();
        Self::build(codes, ids, labels)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn codes(&self) -> &[BinaryCode] {
        &self.codes
    }

    /// The `k` nearest codes, ordered by distance and then ascending id.
    pub fn knn(&self, query: &BinaryCode, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let mut all = self.scan(query)?;
        let k = k.min(all.len());
        if k < all.len() {
            all.select_nth_unstable_by_key(k - 1, |n| (n.distance, n.id));
            all.truncate(k);
        }
        all.sort_unstable_by_key(|n| (n.distance, n.id));
        Ok(all)
    }

    /// Every database entry in ranked order.
    pub fn rank_all(&self, query: &BinaryCode) -> Result<Vec<Neighbor>> {
        let mut all = self.scan(query)?;
        all.sort_unstable_by_key(|n| (n.distance, n.id));
        Ok(all)
    }

    /// Full rankings for many queries, computed in parallel; output order
    /// follows the query order.
    pub fn rank_batch(&self, queries: &[BinaryCode]) -> Result<Vec<Vec<Neighbor>>> {
        queries.par_iter().map(|q| self.rank_all(q)).collect()
    }

    fn scan(&self, query: &BinaryCode) -> Result<Vec<Neighbor>> {
        if self.codes.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.len() != self.code_len {
            return Err(Error::CodeLengthMismatch(self.code_len, query.len()));
        }
        Ok(self
            .codes
            .iter()
            .zip(&self.ids)
            .enumerate()
            .map(|(position, (c, &id))| Neighbor {
                id,
                distance: hamming_unchecked(query, c),
                position,
            })
            .collect())
    }
}

/// Writes `query_id,rank,db_id,distance` rows (rank starts at 1).
pub fn write_rankings_csv<W: Write>(
    out: &mut W,
    query_ids: &[u64],
    rankings: &[Vec<Neighbor>],
) -> std::io::Result<()> {
    writeln!(out, "query_id,rank,db_id,distance")?;
    for (qid, ranking) in query_ids.iter().zip(rankings) {
        for (rank, n) in ranking.iter().enumerate() {
            writeln!(out, "{qid},{},{},{}", rank + 1, n.id, n.distance)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::hamming;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn code(signs: &[i8]) -> BinaryCode {
        BinaryCode::from_signs(signs)
    }

    #[test]
    fn two_code_index() {
        let idx = CodeIndex::build(vec![code(&[1, 1]), code(&[-1, -1])], vec![0, 1], None).unwrap();
        assert_eq!(idx.len(), 2);
        let r = idx.knn(&code(&[1, 1]), 2).unwrap();
        let got: Vec<_> = r.iter().map(|n| (n.id, n.distance)).collect();
        assert_eq!(got, vec![(0, 0), (1, 2)]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            CodeIndex::build(vec![code(&[1]), code(&[1])], vec![3, 3], None),
            Err(Error::DuplicateId(3))
        ));
        assert!(CodeIndex::build(vec![code(&[1])], vec![], None).is_err());
        assert!(CodeIndex::build(vec![code(&[1]), code(&[1, 1])], vec![0, 1], None).is_err());
        assert!(CodeIndex::build(vec![code(&[1])], vec![0], Some(vec![])).is_err());
        let empty = CodeIndex::build(vec![], vec![], None).unwrap();
        assert!(matches!(empty.knn(&code(&[1]), 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn ties_sorted_by_id() {
        let codes = vec![code(&[1, -1]); 5];
        let idx = CodeIndex::build(codes, vec![9, 2, 7, 0, 4], None).unwrap();
        let ids: Vec<u64> = idx.rank_all(&code(&[1, 1])).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 2, 4, 7, 9]);
    }

    #[test]
    fn matches_full_sort_oracle_at_full_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let random_code = |rng: &mut ChaCha8Rng| BinaryCode::from_bits((0..25).map(|_| rng.random_bool(0.5)));
        let codes: Vec<BinaryCode> = (0..5000).map(|_| random_code(&mut rng)).collect();
        let idx = CodeIndex::from_codes(codes.clone(), None).unwrap();
        for _ in 0..5 {
            let q = random_code(&mut rng);
            let mut oracle: Vec<(u32, u64)> = codes
                .iter()
                .enumerate()
                .map(|(i, c)| (hamming(&q, c).unwrap(), i as u64))
                .collect();
            oracle.sort();
            let full = idx.rank_all(&q).unwrap();
            let got: Vec<(u32, u64)> = full.iter().map(|n| (n.distance, n.id)).collect();
            assert_eq!(got, oracle);
            for k in [1, 10, 999, 5000, 6000] {
                let top = idx.knn(&q, k).unwrap();
                assert_eq!(&top[..], &full[..k.min(5000)]);
            }
        }
    }

    #[test]
    fn rankings_csv() {
        let idx = CodeIndex::from_codes(vec![code(&[1]), code(&[-1])], None).unwrap();
        let r = idx.rank_batch(&[code(&[-1])]).unwrap();
        let mut buf = Vec::new();
        write_rankings_csv(&mut buf, &[7], &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "query_id,rank,db_id,distance\n7,1,1,0\n7,2,0,1\n");
    }
}
