//! Cross-modal similarity-preserving hashing.
//!
//! Two trainers map points of two modalities `X ⊂ ℝⁿ` and `Y ⊂ ℝⁿ′` into a
//! common Hamming space `{±1}ᵐ` so that positive (same-class) pairs collide
//! and negative pairs do not:
//!
//! * [`cmdif`] learns linear projections from the SVD of the difference of
//!   negative and positive cross-covariances;
//! * [`mmkdif`] does the same in the coefficient space of Gaussian kernel
//!   expansions over basis points, which lifts the `m <= min(n, n')` cap.
//!
//! [`codec`], [`index`] and [`eval`] turn trained models into packed codes,
//! exact Hamming retrieval and ROC / EER / mAP numbers.

pub mod cmdif;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod index;
pub mod mmkdif;
pub mod numerics;
pub mod threshold;

pub use cmdif::{train_cmdif, GammaWeighting, HashParams, LinearHashModel, ProjectionMode};
pub use codec::{BinaryCode, HashModel, Modality};
pub use dataset::{generate_synthetic, sample_pairs, MultimodalDataset, PairSample, SynthConfig};
pub use error::{Error, Result};
pub use index::CodeIndex;
pub use mmkdif::{train_mmkdif, KernelHashModel, KernelSpec};
pub use threshold::{RateEstimator, ThresholdGrid};
