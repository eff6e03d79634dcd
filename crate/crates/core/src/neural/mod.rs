//! InceptionTime-style 1-D CNN with hand-written backpropagation.

mod layers;
mod net;
mod train;

pub use layers::{apply_mask, Shape, BN_EPS};
pub use net::{cross_entropy, Cache, InceptionNet, Mode, NetConfig, SeqBatch, BN_MOMENTUM};
pub use train::{
    fit_ensemble, predict_proba, seq_len_p95, train, EnsembleConfig, InceptionEnsemble, SeqSet,
    Standardizer, TrainConfig,
};

#[cfg(test)]
mod tests;
