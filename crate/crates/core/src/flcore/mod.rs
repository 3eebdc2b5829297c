//! Federated orchestration from client scheduling through aggregation.

pub mod aggregate;
pub mod channel;
pub mod checkpoint;
pub mod client;
pub mod config;
pub mod engine;
pub mod local;
pub mod params;

pub use aggregate::{aggregate_stage1, aggregate_stage2, ClientUpdate};
pub use channel::ChannelAudit;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use client::{build_clients, sample_round_clients, ClientSpec, Phase, RoundSample};
pub use config::{RunConfig, Stage2Divisor, Stage2Init, Strategy, Weighting};
pub use engine::{
    audio_class_report, evaluate_audio, evaluate_multimodal, run_modality_mirror, run_stage1, run_stage2,
    stage2_init, Federation, MirrorOutput, Stage1Output, Stage2Output,
};
pub use local::{distill_local, local_train_audio, local_train_multimodal, RoundCtx};
pub use params::{block_len, init_block, init_params, Block, ParamSet};
