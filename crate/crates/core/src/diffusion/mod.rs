//! Forward noising, the conditional noise predictor, the denoised-latent
//! reconstruction, the diffusion loss and ancestral sampling.
//!
//! The encoder is the identity on pixels scaled to `[-1, 1]`: a latent is the
//! flattened 28×28 image itself.

mod denoiser;
mod process;
mod sampler;
mod schedule;

pub use denoiser::{time_embedding, DenoiserArch, DenoiserNet, SIGMA_DATA};
pub use process::{
    add_noise, add_noise_rows, mix, reconstruct_z0, reconstruct_z0_on, sdm_loss, sdm_loss_on,
};
pub use sampler::ancestral_sample;
pub use schedule::{build_schedule, NoiseSchedule, ScheduleConfig};
