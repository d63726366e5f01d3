//! Small dilated convolutional classifier trained from scratch.

mod network;
mod train;

pub use network::{
    batch_gradient, batch_loss, cross_entropy, forward, forward_input, gradient_check, init_model, preprocess,
    sample_gradient, GradientCheck, ModelConfig, ModelParams, ParamLayout, Span,
};
pub use train::{train, FoldReport, TrainConfig, TrainOutcome, TrainReport, TrainSample};

use crate::error::Result;
use crate::image::ImageBuffer;
use crate::par::Exec;
use crate::scaling::LogitMatrix;

/// Logits for each `(id, label, image)` in order.
pub fn predict_logits(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[(String, usize, ImageBuffer)],
    exec: Exec,
) -> Result<LogitMatrix> {
    let rows = exec.try_map(samples, |(_, _, img)| forward(params, cfg, img))?;
    LogitMatrix::new(
        cfg.num_classes,
        rows.concat(),
        samples.iter().map(|s| s.1).collect(),
        samples.iter().map(|s| s.0.clone()).collect(),
    )
}
