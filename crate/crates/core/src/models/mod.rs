//! GCN, GraphSAGE-mean and Graph-MLP backbones with softmax, weighted
//! sigmoid and prototype heads, plus the full-batch training loop.

mod config;
mod forward;
mod losses;
mod train;

pub use config::{
    BackboneConfig, BackboneKind, ContrastiveConfig, HeadConfig, HeadKind, TrainConfig,
};
pub use forward::{
    gcn_forward, graphmlp_forward, isomax_logits, sage_forward, structure_operator, ModelOutput, ModelState,
};
pub use losses::{
    bce_class_weights, loss_bce_weighted, loss_isomax, loss_ncontrast, loss_softmax_ce,
    ncontrast_on_tape, softmax_ce_on_tape, weighted_bce_on_tape, ClassWeights,
};
pub use train::{train, train_binary, TrainOutcome};

pub(crate) use forward::Mode;
