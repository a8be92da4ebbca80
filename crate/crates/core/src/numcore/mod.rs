//! Dense f64 tensors, a reverse-mode tape over the layer set used by the
//! taggers, LSTM/MLP building blocks and Adam.

mod adam;
mod lstm;
mod mlp;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, sigmoid, BiLstm, LstmCellCache, LstmCellGrads, LstmParams,
    LstmStack, LstmWeights, StackState,
};
pub use mlp::Mlp;
pub use rng::{Rng, RngState};
pub use tape::{dropout, log_softmax, softmax, softmax_xent, OpKind, Tape, Var};
pub use tensor::{Init, Param, ParamId, ParamStore, Tensor};
