//! The target/non-target indicator, its loss, the combined objective and the
//! joint training loop.

mod indicator;
mod loss;
mod train;

pub use indicator::{Indicator, IndicatorArch};
pub use loss::{ddm_loss, ddm_loss_on, entropy, indicator_loss, indicator_loss_on, PROB_FLOOR};
pub use train::{
    ddm_objective, draw_noise, initial_denoiser, train, train_step, Batch, DdmConfig, Learner,
    NoiseDraw, Objective, StepRecord, TrainHistory, TrainedModel, Trainer,
};
