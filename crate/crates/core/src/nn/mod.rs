//! Small reverse-mode autodiff and the generation networks.

mod checkpoint;
mod model;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use model::{
    loss_total, ArchConfig, Batch, LatentSample, LossTerms, LossWeights, Networks, Pass,
};
pub use tape::{charbonnier, kl_per_row, NodeId, ParamId, ParamStore, Tape, LEAKY_SLOPE};
pub use tensor::{matmul, Mat, Real};
pub use train::{
    body_feature_l1, gaussian, make_batch, mean_predictor_l1, reconstruct_body_features, train,
    write_metrics_csv, Adam, EpochMetrics, TrainConfig, TrainOutcome,
};
