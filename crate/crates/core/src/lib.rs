//! Audio-visual person-of-interest (POI) verification engine.
//!
//! Segments of a video are mapped to a pair of embedded vectors (audio and
//! video) by small per-modality encoders trained with a multi-way
//! contrastive objective on real identities only. At test time each segment
//! is compared with the closest segment of a pristine reference set of the
//! claimed identity; the resulting similarity indices are normalized with
//! statistics estimated on the reference itself, fused, averaged over the
//! video and thresholded under a standard-Gaussian model.
//!
//! Module map:
//!
//! * [`embedding`]: segments, embeddings and similarity measures.
//! * [`contrastive`]: positive sets, contrastive loss and its gradient.
//! * [`encoder`]: feed-forward encoders, AdamW, batch sampling and training.
//! * [`scoring`]: reference sets, POI indices, fusion and video verdicts.
//! * [`gaussian`]: standard normal CDF and quantile.
//! * [`metrics`]: AUC, Pd at fixed false-alarm rate, accuracy, 1-NN identification.
//! * [`synth`]: seeded synthetic identity worlds and manipulation groups.
//! * [`harness`]: file formats, run configuration, commands and experiment drivers.

pub mod contrastive;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod metrics;
pub mod scoring;
pub mod synth;

pub use contrastive::{contrastive_loss, loss_gradient, total_loss, LossGradients, LossReport, PositiveSets};
pub use embedding::{
    joint_similarity, similarity, similarity_matrix, squared_distance, EmbeddingPair, Flags, Group, Modality,
    SegmentRecord, SimilarityMatrix, Temperature,
};
pub use encoder::{
    adamw_step, backward, encode, sample_batch, train, Dataset, EncoderArch, EncoderParams, Mlp, OptimState,
    TrainConfig, TrainOutcome,
};
pub use error::{Error, Result};
pub use gaussian::{quantile_threshold, standard_normal_cdf};
pub use metrics::{accuracy, auc, calibration_check, knn_person_id, pd_at_fa, Label, MetricsReport, ScoreSample};
pub use scoring::{
    build_reference, fuse, normalize_index, poi_index, score_video, Decision, DecisionPolicy, PoiIndices, ReferenceSet,
    Statistic, VideoVerdict,
};
pub use synth::{generate_benchmark, generate_world, World, WorldConfig};
