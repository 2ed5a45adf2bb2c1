//! Binary codes in `{±1}ᵐ` and the encoders that produce them.
//!
//! A code packs `+1` as a set bit and `-1` as a clear bit, little-endian
//! within each `u64` word: element `i` lives in bit `i % 64` of word
//! `i / 64`. Pad bits past `m` are always zero. `sign(0)` is `+1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cmdif::LinearHashModel;
use crate::error::{Error, Result};
use crate::mmkdif::KernelHashModel;
use crate::numerics::dot;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    len: usize,
    words: Vec<u64>,
}

impl BinaryCode {
    pub fn from_signs(signs: &[i8]) -> Self {
        Self::from_bits(signs.iter().map(|&s| s >= 0))
    }

    /// `true` encodes `+1`.
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { len, words }
    }

    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::ShapeMismatch(format!(
                "{len} bits need {} words, got {}",
                len.div_ceil(64),
                words.len()
            )));
        }
        if len % 64 != 0 && words.last().is_some_and(|w| w >> (len % 64) != 0) {
            return Err(Error::InvalidConfig("nonzero pad bits".into()));
        }
        Ok(Self { len, words })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Element `i` as `±1`.
    pub fn sign(&self, i: usize) -> i8 {
        if self.bit(i) {
            1
        } else {
            -1
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.sign(i)).collect()
    }

    /// Packed bytes (little-endian) as lowercase hex, `ceil(m / 8)` bytes.
    pub fn to_hex(&self) -> String {
        let bytes = self.len.div_ceil(8);
        let mut out = String::with_capacity(bytes * 2);
        for k in 0..bytes {
            let byte = (self.words[k / 8] >> (8 * (k % 8))) & 0xff;
            write!(out, "{byte:02x}").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let bytes = len.div_ceil(8);
        if hex.len() != bytes * 2 || !hex.is_ascii() {
            return Err(Error::InvalidConfig(format!(
                "a {len}-bit code needs {} hex characters, got {:?}",
                bytes * 2,
                hex
            )));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for k in 0..bytes {
            let byte = u64::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                .map_err(|_| Error::InvalidConfig(format!("invalid hex code {hex:?}")))?;
            words[k / 8] |= byte << (8 * (k % 8));
        }
        Self::from_words(len, words)
    }
}

/// `popcount(c1 xor c2)`, equal to `m/2 - (1/2) Σ c1_i c2_i`.
pub fn hamming(c1: &BinaryCode, c2: &BinaryCode) -> Result<u32> {
    if c1.len != c2.len {
        return Err(Error::CodeLengthMismatch(c1.len, c2.len));
    }
    Ok(hamming_unchecked(c1, c2))
}

pub(crate) fn hamming_unchecked(c1: &BinaryCode, c2: &BinaryCode) -> u32 {
    c1.words
        .iter()
        .zip(&c2.words)
        .map(|(a, b)| (a ^ b).count_ones())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    X,
    Y,
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Self::X),
            "y" | "Y" => Ok(Self::Y),
            other => Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
        }
    }
}

fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// `sign(P x + a)` or `sign(Q y + b)`.
pub fn encode_linear(model: &LinearHashModel, v: &[f64], modality: Modality) -> Result<BinaryCode> {
    let (proj, offsets) = match modality {
        Modality::X => (&model.p, &model.a),
        Modality::Y => (&model.q, &model.b),
    };
    check_dim(proj.cols(), v)?;
    Ok(BinaryCode::from_bits(
        proj.row_iter().zip(offsets).map(|(r, t)| dot(r, v) + t >= 0.0),
    ))
}

/// `sign(A kx(x) + a)` or `sign(B ky(y) + b)`.
pub fn encode_kernel(model: &KernelHashModel, v: &[f64], modality: Modality) -> Result<BinaryCode> {
    let (bases, kernel, coef, offsets) = match modality {
        Modality::X => (&model.bases_x, &model.kernel_x, &model.coef_x, &model.a),
        Modality::Y => (&model.bases_y, &model.kernel_y, &model.coef_y, &model.b),
    };
    check_dim(bases.cols(), v)?;
    let kv = kernel.kernel_vector(bases, v)?;
    Ok(BinaryCode::from_bits(
        coef.row_iter().zip(offsets).map(|(r, t)| dot(r, &kv) + t >= 0.0),
    ))
}

/// Either trained model behind one encoding interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum HashModel {
    Cmdif(LinearHashModel),
    Mmkdif(KernelHashModel),
}

impl HashModel {
    pub fn m(&self) -> usize {
        match self {
            Self::Cmdif(m) => m.m(),
            Self::Mmkdif(m) => m.m(),
        }
    }

    pub fn dim(&self, modality: Modality) -> usize {
        match (self, modality) {
            (Self::Cmdif(m), Modality::X) => m.n(),
            (Self::Cmdif(m), Modality::Y) => m.n_prime(),
            (Self::Mmkdif(m), Modality::X) => m.n(),
            (Self::Mmkdif(m), Modality::Y) => m.n_prime(),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Self::Cmdif(_) => "cmdif",
            Self::Mmkdif(_) => "mmkdif",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Cmdif(m) => m.validate(),
            Self::Mmkdif(m) => m.validate(),
        }
    }

    pub fn encode(&self, v: &[f64], modality: Modality) -> Result<BinaryCode> {
        match self {
            Self::Cmdif(m) => encode_linear(m, v, modality),
            Self::Mmkdif(m) => encode_kernel(m, v, modality),
        }
    }

    /// Encodes every point of a row-major block in parallel, keeping order.
    pub fn encode_all<'a, I>(&self, points: I, modality: Modality) -> Result<Vec<BinaryCode>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        use rayon::prelude::*;
        let points: Vec<&[f64]> = points.into_iter().collect();
        points.par_iter().map(|p| self.encode(p, modality)).collect()
    }
}

impl From<LinearHashModel> for HashModel {
    fn from(m: LinearHashModel) -> Self {
        Self::Cmdif(m)
    }
}

impl From<KernelHashModel> for HashModel {
    fn from(m: KernelHashModel) -> Self {
        Self::Mmkdif(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdif::ProjectionMode;
    use crate::mmkdif::KernelSpec;
    use crate::numerics::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear(p: Matrix, a: Vec<f64>) -> LinearHashModel {
        LinearHashModel {
            q: p.clone(),
            b: a.clone(),
            p,
            a,
            gamma: 10.0,
            mode: ProjectionMode::MinTrace,
        }
    }

    #[test]
    fn direct_sign() {
        let model = linear(Matrix::identity(2), vec![0.0, 0.0]);
        let c = encode_linear(&model, &[0.5, -2.0], Modality::X).unwrap();
        assert_eq!(c.signs(), vec![1, -1]);
    }

    #[test]
    fn zero_maps_to_plus_one() {
        let model = linear(Matrix::identity(2), vec![-1.0, 0.0]);
        let c = encode_linear(&model, &[1.0, 0.0], Modality::Y).unwrap();
        assert_eq!(c.signs(), vec![1, 1]);
        assert!(encode_linear(&model, &[1.0], Modality::X).is_err());
    }

    #[test]
    fn packed_matches_naive_sign_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (m, n) = (70, 9);
        let p = Matrix::new(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let model = linear(p.clone(), a.clone());
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let code = encode_linear(&model, &x, Modality::X).unwrap();
            for i in 0..m {
                let mut s = a[i];
                for j in 0..n {
                    s += p.get(i, j) * x[j];
                }
                let expected = if s >= 0.0 { 1 } else { -1 };
                assert_eq!(code.sign(i), expected);
            }
            assert_eq!(code.words()[1] >> (m - 64), 0);
        }
    }

    fn kernel_model(bases: Matrix, coef: Matrix, a: Vec<f64>) -> KernelHashModel {
        let spec = KernelSpec::gaussian(vec![1.0; bases.cols()]).unwrap();
        KernelHashModel {
            bases_y: bases.clone(),
            coef_y: coef.clone(),
            b: a.clone(),
            bases_x: bases,
            coef_x: coef,
            a,
            gamma: 10.0,
            mode: ProjectionMode::MinTrace,
            kernel_x: spec.clone(),
            kernel_y: spec,
        }
    }

    #[test]
    fn kernel_single_basis() {
        let bases = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let model = kernel_model(bases, Matrix::new(1, 1, vec![1.0]).unwrap(), vec![-0.5]);
        let c = encode_kernel(&model, &[1.0, 2.0], Modality::X).unwrap();
        assert_eq!(c.signs(), vec![1]);
    }

    #[test]
    fn kernel_offsets_below_reach_give_all_minus() {
        let bases = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let coef = Matrix::new(2, 3, vec![0.5, 0.25, 0.25, 0.0, 1.0, 0.0]).unwrap();
        let model = kernel_model(bases, coef, vec![-2.0, -2.0]);
        for x in [-1.0, 0.0, 1.5, 9.0] {
            let c = encode_kernel(&model, &[x], Modality::Y).unwrap();
            assert_eq!(c.signs(), vec![-1, -1]);
        }
    }

    #[test]
    fn kernel_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (l, n, m) = (6, 3, 5);
        let bases = Matrix::new(l, n, (0..l * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let coef = Matrix::new(m, l, (0..m * l).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(-0.3..0.3)).collect();
        let model = kernel_model(bases.clone(), coef.clone(), a.clone());
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let code = encode_kernel(&model, &x, Modality::X).unwrap();
            for i in 0..m {
                let mut s = a[i];
                for t in 0..l {
                    let mut d2 = 0.0;
                    for j in 0..n {
                        d2 += (bases.get(t, j) - x[j]).powi(2);
                    }
                    s += coef.get(i, t) * (-d2).exp();
                }
                assert_eq!(code.bit(i), s >= 0.0);
            }
        }
    }

    #[test]
    fn hamming_hand_cases() {
        let a = BinaryCode::from_signs(&[1, 1, -1, 1]);
        let b = BinaryCode::from_signs(&[1, -1, -1, -1]);
        assert_eq!(hamming(&a, &b).unwrap(), 2);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        let c = BinaryCode::from_signs(&[1, -1, 1, 1, -1, -1, 1, -1]);
        let neg: Vec<i8> = c.signs().iter().map(|s| -s).collect();
        assert_eq!(hamming(&c, &BinaryCode::from_signs(&neg)).unwrap(), 8);
        assert!(matches!(hamming(&a, &c), Err(Error::CodeLengthMismatch(4, 8))));
    }

    #[test]
    fn hex_layout() {
        let c = BinaryCode::from_signs(&[1, -1, -1, -1, -1, -1, -1, -1, 1]);
        assert_eq!(c.to_hex(), "0101");
        assert_eq!(BinaryCode::from_hex(9, "0101").unwrap(), c);
        assert!(BinaryCode::from_hex(9, "0103").is_err());
        assert!(BinaryCode::from_hex(9, "01").is_err());
        assert!(BinaryCode::from_words(3, vec![0b1000]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn code(len: usize) -> impl Strategy<Value = BinaryCode> {
            prop::collection::vec(any::<bool>(), len).prop_map(BinaryCode::from_bits)
        }

        proptest! {
            #[test]
            fn metric_axioms((a, b, c) in (1usize..200).prop_flat_map(|m| (code(m), code(m), code(m)))) {
                let ab = hamming(&a, &b).unwrap();
                prop_assert_eq!(ab, hamming(&b, &a).unwrap());
                prop_assert_eq!(hamming(&a, &a).unwrap(), 0);
                prop_assert_eq!(ab == 0, a == b);
                prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
            }

            #[test]
            fn hex_round_trip(a in (1usize..200).prop_flat_map(code)) {
                prop_assert_eq!(BinaryCode::from_hex(a.len(), &a.to_hex()).unwrap(), a);
            }
        }
    }
}
