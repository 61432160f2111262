//! Metrics, equivariance measurements, sweeps, optimization and checkpoints.

mod adam;
mod checkpoint;
mod equiv;
mod gradsuite;
mod metrics;
mod sweep;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{blob_path, load_checkpoint, save_checkpoint, CKPT_VERSION};
pub use equiv::{entry, equivariance_error, EquivEntry};
pub use gradsuite::{gradient_suite, GradCase, GRAD_MODULES, GRAD_SEEDS, GRAD_TOL};
pub use metrics::{format_psnr, mean_std, median, nmae, nmse, psnr};
pub use sweep::{
    csv_string, sweep, sweep_with, write_csv, Case, ModelSource, SweepGrid, SweepRow, CSV_HEADER,
};
pub use train::{
    batch_loss, loss_log_csv, smoothed, train, train_step, train_to_dir, TrainConfig, TrainOutcome,
    TrainState,
};
