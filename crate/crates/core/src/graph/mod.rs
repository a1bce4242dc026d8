//! Graph-based concept representation learning.
//!
//! The pieces, bottom to top: [`adj`] holds the normalized adjacency
//! operator, [`encoder`] the two-layer convolutional encoder, [`loss`] the
//! contrastive and distillation objectives with analytic gradients, [`view`]
//! the stochastic corruption that makes the two contrastive views, [`sample`]
//! seed-anchored subgraph growth, and [`train`] the alternating loop plus
//! exact chunked inference.

pub mod adj;
pub mod encoder;
pub mod loss;
pub mod sample;
pub mod train;
pub mod view;

pub use adj::NormAdj;
pub use encoder::{GcnEncoder, ParamGrads};
pub use loss::{contrastive_loss, contrastive_loss_grad, kd_loss, kd_loss_grad, ntxent_pair_loss};
pub use sample::{full_closure, sample_subgraph, Subgraph};
pub use train::{
    infer_full_coverage, read_checkpoint, train_representations, write_checkpoint, history_to_tsv,
    IterationRecord, Phase, TrainConfig, TrainOutcome,
};
pub use view::{generate_view, GraphView};
