//! Spike-camera toolkit.
//!
//! A spike camera emits a binary stream `S ∈ {0,1}^{K×H×W}`: each pixel integrates
//! incoming light and fires whenever the integral crosses a threshold. This crate
//! covers the whole model-based side of working with such streams:
//!
//! * [`stream`] / [`codec`]: the bit-packed stream type and the `.spk` container.
//! * [`sim`]: an integrate-and-fire simulator with low-light scaling and dark noise.
//! * [`recon`]: TFP / TFI reconstruction, inter-spike-interval maps and voxelization.
//! * [`niqe`]: a no-reference NIQE quality score built on MSCN and AGGD statistics.
//! * [`pipeline`]: NIQE-driven HQ selection and dataset export for downstream training.

pub mod codec;
pub mod error;
pub mod imageio;
pub mod niqe;
pub mod pipeline;
pub mod recon;
pub mod scene;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};
pub use stream::{IntensityImage, SpikeStream};
