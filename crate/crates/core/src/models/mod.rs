//! Encoder/decoder networks, task losses and their hand-written gradients.

mod arch;
mod loss;
mod network;

pub use arch::{
    decoder_segment, init_params, param_report, taskcond_segment, ArchKind, ParamReport, ENCODER,
    ENCODER_HIDDEN, ENCODER_OUT, MD_DECODER_HIDDEN, SHARED_DECODER, TC_EMBED, TC_HIDDEN, TC_OUT,
};
pub use loss::{task_loss, EDGE_NEG_WEIGHT, EDGE_POS_WEIGHT};
pub use network::{
    forward_backward, forward_backward_md, forward_backward_tc, predict, LossOutput, TaskWeights,
};
