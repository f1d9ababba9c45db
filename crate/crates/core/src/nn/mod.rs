//! Reverse-mode autodiff, the LSTM network and the Adam optimizer.

mod adam;
mod gradcheck;
mod matrix;
mod network;
mod params;
mod tape;

pub use adam::{clip_global_norm, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{finite_difference_check, GradCheck};
pub use matrix::Matrix;
pub use network::{dueling_combine, HeadOut, HeadSpec, NetSpec, Network, SeqBatch, LEAKY_SLOPE, LOG_STD_INIT};
pub use params::{NamedArray, ParamId, ParamStore};
pub use tape::{Tape, Var};
