//! The forecasting network: text and series encoders, fusion, decoder,
//! post-regressor, and the loss functions.

pub mod config;
pub mod loss;
pub mod network;
pub mod tokenizer;

pub use config::{Ablation, Distance, ModelConfig, FULL_MODEL_LABEL, PRESETS};
pub use loss::{
    distance, distance_graph, time_loss, time_loss_graph, total_loss, total_loss_graph, triplet_loss, triplet_loss_graph,
};
pub use network::{
    decode, decode_graph, encode_series, encode_series_graph, encode_text, encode_text_graph, forward,
    forward_graph, forward_sample, fuse, fuse_graph, init_params, regress, regress_graph, series_base,
    series_base_graph, series_tokens_graph, text_prefix, ForecastOutput, ForwardVars, Mode, SeriesInput,
    TextInput, TextPrefix,
};
pub use tokenizer::tokenize;
