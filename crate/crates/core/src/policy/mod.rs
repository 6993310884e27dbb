//! Attention policy network, decoding and critic head.

mod model;
mod params;
mod tape;
mod tensor;

pub use model::{
    critic_on, critic_value, decode_on, decode_step, encode, encode_on, greedy_action, rollout, sample_action, score, step_logits,
    DecodeMode, DecodeState, Encoded, StepRecord, Trajectory,
};
pub use params::{Hyper, ParamSet, PolicyParams, DEPOT_FEATURES, NODE_FEATURES};
pub use tape::{RowDistribution, Tape, Var};
pub(crate) use tape::log_softmax;
pub use tensor::Matrix;
