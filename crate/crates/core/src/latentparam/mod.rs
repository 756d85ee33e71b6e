//! Low-dimensional latent parameterizations of normalized data vectors.
//!
//! Two implementations share the [`Parameterizer`] contract: a whitened PCA
//! and a dense variational autoencoder. Both map normalized `d_full` vectors
//! to latent vectors that are approximately standard normal over the prior.

mod pca;
mod vae;

pub use pca::{fit_pca, PcaModel};
pub use vae::{
    kl_divergence, Dense, FrontEnd, LossParts, OmegaStage, TrainConfig, TrainReport, VaeGradients, VaeModel,
    VaeNet,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::rng::{stream_rng, streams};

pub trait Parameterizer: Send + Sync {
    fn latent_dim(&self) -> usize;

    fn data_dim(&self) -> usize;

    /// Deterministic (mode) encoding of a normalized data vector.
    fn encode(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Normalized data vector for a latent vector; total on all of `R^N_l`.
    fn decode(&self, xi: &[f64]) -> Result<Vec<f64>>;

    /// Entries `idx` of `decode(xi)`; implementations may avoid the full decode.
    fn decode_at(&self, xi: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        let d = self.decode(xi)?;
        Ok(idx.iter().map(|&i| d[i]).collect())
    }
}

/// Decodes `n` latent vectors drawn from `N(0, I)`.
pub fn sample_generate(model: &dyn Parameterizer, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(seed, streams::GENERATE);
    (0..n)
        .map(|_| {
            let xi: Vec<f64> = (0..model.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
            model.decode(&xi)
        })
        .collect()
}
