//! Model building blocks: mixture densities, the predictor (plain MLP or MDN),
//! the CVAE and CGAN imputers with their hybrid losses, and the random forest
//! baseline.

pub mod cgan;
pub mod cvae;
pub mod fdcheck;
pub mod forest;
pub mod mixture;
pub mod predictor;

pub use cgan::{disc_loss, gen_loss, hybrid_cgan_loss, CganImputer, CganTerms, HybridCganTerms, D_CLAMP};
pub use cvae::{hybrid_cvae_loss, CvaeImputer, CvaeTerms, GaussianNet, HybridCvaeTerms, MaskedBatch, LOGVAR_CLAMP};
pub use fdcheck::{check_gradients, gradient_suite, GradientCheck};
pub use forest::{forest_fit, ForestConfig, ForestModel, RegressionTree, TreeNode};
pub use mixture::{
    gaussian_log_density, kl_diag_gaussian, log_weight, mdn_log_density, reparameterize, MixtureDensity,
};
pub use predictor::{mdn_nll, MdnHead, MdnOutput, Predictor, PredictorNet, MDN_LOGVAR_CLAMP};

#[cfg(test)]
mod gradcheck;
