//! Losses, the level-of-detail schedule, the optimizer, and the training
//! step.

pub mod losses;
pub mod optim;
pub mod schedule;
pub mod step;

pub use losses::{loss_curvature, loss_eikonal, loss_rgb, total_loss, LossParts, LossWeights};
pub use optim::{AdamConfig, AdamState, StepOutcome};
pub use schedule::{schedule_state_at, schedule_step, ScheduleConfig, ScheduleState};
pub use step::{
    forward_backward, prepare_rays, PreparedRay, StepSettings, StepStats, StepWorkspace,
    TrainView, GRAD_CHUNKS,
};
