//! Dense networks with explicit forward and backward passes.
//!
//! Parameters are `f64` during training and rounded to `f32`-representable
//! values when training ends, so a saved bundle reproduces the trained network
//! exactly.

mod gradcheck;
mod models;
mod net;
mod train;

pub use gradcheck::{
    gradient_check, gradient_check_plan, gradient_check_train, CheckPass, CheckPlan, GradientCheck, FD_STEP, GRAD_FLOOR,
};
pub use models::{
    build_autoencoder, build_classifier, encode, hourglass_widths, predict_nn, train_autoencoder, train_classifier,
    ClassifierFit, LatentCodec, CLASSIFIER_HIDDEN,
};
pub use net::{Activation, BatchNorm, DenseNet, Layer, Loss, BN_EPS, BN_MOMENTUM};
pub use train::{Adam, Hyperparams};
