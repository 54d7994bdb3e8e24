//! Learnable networks: GRU stack, temporal generator, motion discriminator
//! and the sequential-VAE motion prior.

mod discriminator;
mod features;
mod generator;
mod layers;
mod mposer;

pub use discriminator::{static_pool, weighted_sum, with_velocity, Discriminator, DiscriminatorConfig, DiscriminatorOutput, Pooling};
pub use features::FeatureProvider;
pub use generator::{decode, mean_params, Generator, GeneratorConfig, GeneratorOutput};
pub use layers::{from_steps, to_steps, Gru, GruCell, Linear};
pub use mposer::{kl_divergence, MPoser, MPoserConfig, Posterior, LATENT_DIM};
