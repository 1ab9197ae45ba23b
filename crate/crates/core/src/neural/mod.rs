//! Small tanh MLP classifiers with exact gradients, the losses used by every
//! aggregation strategy, momentum SGD and parameter averaging.

mod checkpoint;
mod loss;
mod mlp;
mod optim;

pub(crate) use checkpoint::Reader;
pub use checkpoint::{checkpoint_size, decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{backward, cross_entropy, kd_loss, kl_div, loss_value, prox_term, KlDirection, LossSpec, PROB_FLOOR};
pub use mlp::{accuracy, average_params, features, forward, Forward, Layer, MlpArch, MlpParams};
pub use optim::{cosine_lr, fit_classifier, sgd_step, Optimizer};
