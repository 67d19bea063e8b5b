//! Predictors: FM, the interaction-aware family (IFM and its two single-aspect
//! ablations), norm-based interaction sampling, INN and DeepIFM.
//!
//! Every forward function is pure: models are plain parameter bundles and may
//! be shared across threads.

pub mod forward;
pub mod io;
mod params;
pub mod sampling;

pub use forward::{
    attention_scores, bilinear_similarity, deep_ifm_predict, enumerate_interactions, field_importance, fm_predict,
    forward, gim_embedding_sets, ifm_predict, inn_forward, pairwise_vectors, FieldTable, Forward, InteractionPair,
};
pub use io::{load_model, save_model, Container};
pub use params::{
    field_pair_count, field_pair_index, AttentionNet, DenseLayer, FieldAspect, FmParams, IamParams, IfmModel,
    MlpParams, Mode, ModelConfig, ModelSummary, PairPolicy,
};
pub use sampling::{sample_interactions, SampleScheme};
