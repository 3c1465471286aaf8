//! Minimal numeric layer library: dense, GRU / bidirectional GRU,
//! concatenation-based attention, squared-error loss, Adam, and a
//! finite-difference gradient checker. Everything is f64 and runs on CPU.

pub mod adam;
pub mod attention;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod tensor;

mod gru;

pub use adam::Adam;
pub use attention::{softmax, AttnCache, AttnOutput, Attention};
pub use dense::{squared_error, Dense, EmbedLayer};
pub use gradcheck::{check_gradients, sample_coordinates, GradCheckReport};
pub use gru::{gru_backward, gru_forward, BiGru, BiGruCache, GruCache, GruCell};
pub use init::xavier_uniform;
pub use tensor::{GradSet, ParamId, ParamSet, Tensor};
