//! Numerical substrate shared by every other module: segmented parameter
//! vectors, AdamW, the warmup + cosine learning-rate schedule, seeded RNG
//! streams and the `.fmtlckpt` checkpoint format.

mod adamw;
mod checkpoint;
mod params;
mod rng;
mod schedule;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use params::{weighted_sum, Layout, Segment, SegmentedParams};
pub use rng::{stream_id_for, RngStream};
pub use schedule::cosine_warmup_lr;
