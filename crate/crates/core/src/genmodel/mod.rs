//! Learned conditional residual model: MLP building blocks, Gaussian-kernel
//! MMD, the penalized Wasserstein autoencoder and its evaluation.

mod fit;
mod kernel;
mod mlp;
mod optim;
mod wae;

pub use fit::{
    evaluate_fit, sample_conditional_residuals, FitOptions, FitReport, GroundTruthResidual, ResidualModel,
    SliceSummary, ZeroResidual,
};
pub use kernel::{
    empirical_quantile, gaussian_kernel, mmd2_unbiased, mmd2_unbiased_grad, permutation_null_quantile, GaussianKernel,
};
pub use mlp::{Activation, Mlp, Trace};
pub use optim::Adam;
pub use wae::{
    split_dataset, wae_batch_loss, wae_batch_loss_with, wae_train, BatchLoss, BatchNoise, TrainConfig, TrainOutcome,
    WaeModel, COND_DIM, LATENT_DIM, LOGVAR_RANGE, RESIDUAL_DIM,
};
