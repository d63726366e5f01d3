//! texcal: confidence calibration for synthetic texture classification.
//!
//! The crate covers the whole experiment:
//!
//! 1. **synth** – procedural pit-pattern textures and the dataset split topology.
//! 2. **augment** – blur, noise and geometric augmentation, per training variant.
//! 3. **classifier** – a small dilated CNN with hand-written backprop.
//! 4. **scaling** – temperature scaling fitted on holdout logits.
//! 5. **metrics** – reliability bins and ECE / MCE / ACE.
//! 6. **io** – PGM, CSV, checkpoint, JSON and config file formats.

pub mod augment;
pub mod classifier;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod par;
pub mod scaling;
pub mod synth;

pub use error::{Error, ErrorFamily, Result};
pub use image::ImageBuffer;
pub use par::Exec;
