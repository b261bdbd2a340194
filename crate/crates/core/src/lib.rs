//! Speaker-verification evaluation engine.
//!
//! The crate covers the whole evaluation path of a deep-ResNet speaker
//! verification system:
//!
//! - [`audio`]: waveform buffers, short-utterance concatenation, additive
//!   noise / reverberation / speed perturbation, 80-dim fbank with CMN.
//! - [`net`]: r-vector ResNet34 and bottleneck ResNet152/221/293 forward
//!   passes with statistics pooling and a 256-dim embedding layer.
//! - [`train`]: additive angular margin softmax with analytic gradients,
//!   exponential learning-rate decay and two-stage classifier-head training.
//! - [`scoring`]: cosine scoring, adaptive score normalization, enrollment
//!   combination strategies and score fusion.
//! - [`metrics`]: DET sweep, EER, minDCF, operating points and top-k mAP.
//! - [`io`] and [`pipeline`]: file formats and end-to-end verification and
//!   retrieval runs.
//! - [`synth`] and [`benchmark`]: synthetic voices and embeddings, and a
//!   seeded verification benchmark built on them.

pub mod audio;
pub mod benchmark;
pub mod checkpoint;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
