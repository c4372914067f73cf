//! Synthetic condition embeddings and the condition autoencoder that maps
//! them into the action space.

mod autoencoder;
mod set;

pub use autoencoder::{
    train_autoencoder, AutoencoderConfig, ConditionAutoencoder, VaeHead, AE_BATCH, COSINE_EPS,
};
pub use set::ConditionSet;
pub(crate) use set::{dot, norm};
