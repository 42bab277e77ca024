//! Relation classification model: pluggable contextual encoder, marker
//! representation extraction, softmax relation head, training with both
//! classification strategies and CSD regimes, and five-fold
//! cross-validation over the hyperparameter grid.

mod encoder;
mod head;
mod optimizer;
mod persist;
mod train;

pub use encoder::{Encoder, ReferenceEncoder, ReferenceEncoderConfig};
pub use head::{softmax_rows, RelationHead};
pub use optimizer::Adam;
pub use persist::{load_bundle, save_bundle};
pub use train::{
    binary_label_view, cross_validate, loss_and_gradients, train, CvCell, CvOutcome, GroupReport,
    SearchGrid, TrainOutput, TrainReport,
};

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, Array3, ArrayView2};
use thiserror::Error;

use crate::candidates::NEGATIVE_LABEL;
use crate::encoding::{EncodingError, MarkerPositions, MIN_MAX_LEN};

/// Class label for the positive side of the binary strategy.
pub const POSITIVE_LABEL: &str = "POSITIVE";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid encoder shape: {0}")]
    InvalidShape(String),
    #[error("recorded position {position} is outside encoder output of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("representation dimension mismatch: head expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("schema {schema:?} is ambiguous; the binary strategy needs a category priority list")]
    AmbiguousSchemaForBinary { schema: String },
    #[error("insufficient data: need at least {needed} positive examples, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: corrupt bundle data: {reason}")]
    CorruptBundle { path: String, reason: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Candidates(#[from] crate::candidates::CandidateError),
}

/// How candidate pairs are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Two stages: positive/negative classification, then rule-based
    /// category inference from the pair's semantic types.
    Binary,
    /// One class per relation category plus a non-relation class.
    MultiClass,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Some(Strategy::Binary),
            "multi-class" | "multiclass" | "multi_class" => Some(Strategy::MultiClass),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Binary => "binary",
            Strategy::MultiClass => "multi-class",
        })
    }
}

/// How cross-sentence distances are handled at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// One model for all candidate pairs regardless of CSD.
    Unified,
    /// One model per CSD stratum, routed at inference.
    DistanceSpecific,
}

impl Regime {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unified" => Some(Regime::Unified),
            "distance-specific" | "distance_specific" => Some(Regime::DistanceSpecific),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Unified => "UNIFIED",
            Regime::DistanceSpecific => "DISTANCE-SPECIFIC",
        })
    }
}

/// Which contextual vectors feed the relation head.
///
/// Output dimension is `H`, `3H`, `5H`, `2H` for the four schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprScheme {
    /// Classification token only.
    ClsOnly,
    /// Classification token plus the two start markers.
    ClsStarts,
    /// Classification token plus all four entity markers.
    ClsAllMarkers,
    /// The two start markers only.
    StartsOnly,
}

impl ReprScheme {
    pub const ALL: [ReprScheme; 4] = [
        ReprScheme::ClsOnly,
        ReprScheme::ClsStarts,
        ReprScheme::ClsAllMarkers,
        ReprScheme::StartsOnly,
    ];

    /// Scheme number used in configuration files (1-4).
    pub fn number(self) -> usize {
        match self {
            ReprScheme::ClsOnly => 1,
            ReprScheme::ClsStarts => 2,
            ReprScheme::ClsAllMarkers => 3,
            ReprScheme::StartsOnly => 4,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" => Some(ReprScheme::ClsOnly),
            "2" => Some(ReprScheme::ClsStarts),
            "3" => Some(ReprScheme::ClsAllMarkers),
            "4" => Some(ReprScheme::StartsOnly),
            _ => None,
        }
    }

    /// Sequence positions concatenated, in fixed order.
    pub fn positions(self, p: &MarkerPositions) -> Vec<usize> {
        match self {
            ReprScheme::ClsOnly => vec![p.cls],
            ReprScheme::ClsStarts => vec![p.cls, p.s1, p.s2],
            ReprScheme::ClsAllMarkers => vec![p.cls, p.s1, p.e1, p.s2, p.e2],
            ReprScheme::StartsOnly => vec![p.s1, p.s2],
        }
    }

    pub fn dim(self, hidden: usize) -> usize {
        match self {
            ReprScheme::ClsOnly => hidden,
            ReprScheme::ClsStarts => 3 * hidden,
            ReprScheme::ClsAllMarkers => 5 * hidden,
            ReprScheme::StartsOnly => 2 * hidden,
        }
    }
}

impl fmt::Display for ReprScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Training hyperparameters and pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub scheme: ReprScheme,
    pub regime: Regime,
    pub learning_rate: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub folds: usize,
    pub max_csd: usize,
    pub max_len: usize,
    /// Inverse-frequency class weighting of the loss (off by default).
    pub class_weighting: bool,
    /// Train strata that contain no positive example instead of skipping.
    pub train_empty_strata: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Binary,
            scheme: ReprScheme::ClsAllMarkers,
            regime: Regime::Unified,
            learning_rate: 1e-5,
            seed: 13,
            epochs: 4,
            batch_size: 8,
            folds: 5,
            max_csd: crate::candidates::DEFAULT_MAX_CSD,
            max_len: crate::encoding::DEFAULT_MAX_LEN,
            class_weighting: false,
            train_empty_strata: false,
        }
    }
}

impl TrainConfig {
    /// Reject values outside the standard experiment grid: epochs 3-6,
    /// batch size in {4, 8, 16}, 5 folds. Pass `allow_nonstandard` to only
    /// sanity-check.
    pub fn validate(&self, allow_nonstandard: bool) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.learning_rate <= 0.0 {
            return err(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be at least 1".into());
        }
        if self.max_len < MIN_MAX_LEN {
            return err(format!("max_len {} is below the minimum {}", self.max_len, MIN_MAX_LEN));
        }
        if allow_nonstandard {
            return Ok(());
        }
        if !(3..=6).contains(&self.epochs) {
            return err(format!("epochs {} outside the standard range 3-6", self.epochs));
        }
        if ![4, 8, 16].contains(&self.batch_size) {
            return err(format!("batch_size {} not one of 4, 8, 16", self.batch_size));
        }
        if self.folds != 5 {
            return err(format!("folds {} differs from the standard 5", self.folds));
        }
        Ok(())
    }

    /// Class list for the configured strategy. The binary head is
    /// `[NEGATIVE, POSITIVE]`; multi-class is the schema categories
    /// followed by `NEGATIVE`.
    pub fn classes(&self, schema: &crate::schema::RelationSchema) -> Vec<String> {
        match self.strategy {
            Strategy::Binary => vec![NEGATIVE_LABEL.to_string(), POSITIVE_LABEL.to_string()],
            Strategy::MultiClass => {
                let mut classes: Vec<String> = schema.categories().to_vec();
                classes.push(NEGATIVE_LABEL.to_string());
                classes
            }
        }
    }
}

/// Identifier of one trained model inside a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    /// The single group of the UNIFIED regime.
    All,
    /// One CSD stratum of the DISTANCE-SPECIFIC regime.
    Csd(usize),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("ALL"),
            GroupKey::Csd(k) => write!(f, "csd{k}"),
        }
    }
}

impl GroupKey {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "ALL" {
            return Some(GroupKey::All);
        }
        s.strip_prefix("csd").and_then(|k| k.parse().ok().map(GroupKey::Csd))
    }
}

/// One trained (encoder, head) pair with its provenance.
#[derive(Debug, Clone)]
pub struct TrainedModel<E> {
    pub encoder: E,
    pub head: RelationHead,
    pub config: TrainConfig,
    pub tokenizer_fingerprint: String,
}

/// Trained models keyed by routing group. The UNIFIED regime holds the
/// single [`GroupKey::All`] entry.
#[derive(Debug, Clone)]
pub struct ModelBundle<E> {
    pub regime: Regime,
    pub groups: BTreeMap<GroupKey, TrainedModel<E>>,
}

impl<E> ModelBundle<E> {
    /// Shared training configuration (identical across groups).
    pub fn config(&self) -> Option<&TrainConfig> {
        self.groups.values().next().map(|m| &m.config)
    }
}

/// Concatenate the scheme's contextual vectors from one instance's encoder
/// output (`[len, hidden]` view).
pub fn extract_representation(
    encoder_output: ArrayView2<f64>,
    positions: &MarkerPositions,
    scheme: ReprScheme,
) -> Result<Array1<f64>, ModelError> {
    let len = encoder_output.nrows();
    let hidden = encoder_output.ncols();
    let wanted = scheme.positions(positions);
    let mut out = Array1::zeros(wanted.len() * hidden);
    for (slot, &position) in wanted.iter().enumerate() {
        if position >= len {
            return Err(ModelError::PositionOutOfRange { position, len });
        }
        out.slice_mut(ndarray::s![slot * hidden..(slot + 1) * hidden])
            .assign(&encoder_output.row(position));
    }
    Ok(out)
}

/// Stack per-instance representations into a `[batch, dim]` matrix.
pub fn extract_batch(
    encoder_output: &Array3<f64>,
    positions: &[MarkerPositions],
    scheme: ReprScheme,
) -> Result<Array2<f64>, ModelError> {
    let (batch, _, hidden) = encoder_output.dim();
    debug_assert_eq!(batch, positions.len());
    let mut out = Array2::zeros((batch, scheme.dim(hidden)));
    for (b, p) in positions.iter().enumerate() {
        let rep = extract_representation(encoder_output.index_axis(ndarray::Axis(0), b), p, scheme)?;
        out.row_mut(b).assign(&rep);
    }
    Ok(out)
}

/// Class probabilities for a batch: encode, extract the scheme
/// representation, and apply the head.
pub fn forward<E: Encoder>(
    batch: &crate::encoding::EncodedBatch,
    encoder: &E,
    head: &RelationHead,
) -> Result<Array2<f64>, ModelError> {
    let expected = head.scheme().dim(encoder.hidden_size());
    if head.input_dim() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            found: head.input_dim(),
        });
    }
    let output = encoder.encode(batch)?;
    let reps = extract_batch(&output, &batch.positions, head.scheme())?;
    Ok(head.forward(&reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::MarkerPositions;
    use ndarray::Array2;

    #[test]
    fn cls_only_extraction_is_bitwise_identity() {
        let output = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64) * 10.0 + j as f64 + 0.125);
        let positions = MarkerPositions { cls: 3, s1: 0, e1: 1, s2: 2, e2: 4 };
        let rep = extract_representation(output.view(), &positions, ReprScheme::ClsOnly).unwrap();
        for j in 0..4 {
            assert_eq!(rep[j].to_bits(), output[[3, j]].to_bits());
        }
    }

    #[test]
    fn out_of_range_position_is_an_error() {
        let output = Array2::zeros((4, 8));
        let positions = MarkerPositions { cls: 0, s1: 1, e1: 2, s2: 3, e2: 9 };
        assert!(matches!(
            extract_representation(output.view(), &positions, ReprScheme::ClsAllMarkers),
            Err(ModelError::PositionOutOfRange { position: 9, len: 4 })
        ));
    }

    #[test]
    fn standard_grid_spans_twelve_configurations() {
        let grid = SearchGrid::standard();
        assert_eq!(grid.epochs, vec![3, 4, 5, 6]);
        assert_eq!(grid.batch_sizes, vec![4, 8, 16]);
        assert_eq!(grid.epochs.len() * grid.batch_sizes.len(), 12);
    }
}
