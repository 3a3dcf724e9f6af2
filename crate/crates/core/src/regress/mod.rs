//! Feed-forward regression for virtual sensing.
//!
//! A small dense-network stack written against `ndarray`: forward pass,
//! reverse-mode gradients, squared-error loss, Adam, and a training loop with
//! early stopping. [`VirtualSensorModel`] wraps a trained network together
//! with the input/output normalization it was fitted with.

mod adam;
mod loss;
mod mlp;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{mse_loss, Reduction};
pub use mlp::{
    build_cmi_model, build_imvs_model, cmi_layer_sizes, imvs_layer_sizes, Gradients, MlpModel, CMI_HIDDEN,
    IMVS_HIDDEN,
};
pub use train::{
    train, Checkpoint, EpochRecord, Standardizer, TrainConfig, TrainReport, VirtualSensorModel, CHECKPOINT_VERSION,
};
