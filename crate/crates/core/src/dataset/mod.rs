//! Supervised datasets built from node-wise proxy records.

mod encode;
mod io;
mod record;
mod synth;

pub use encode::{common_proxy_order, encode_features, encode_minmax, pad_and_concat};
pub use io::{
    load_manifest, load_stats, save_manifest, save_stats, split, stats_from_str, stats_to_string,
};
pub use record::{DatasetManifest, FeatureMatrix, Split, SplitKind, ZcDataset, ZcRecord};
pub use synth::{
    random_dag, synth_generate, synth_generate_with, HiddenFn, HiddenTruth, SynthBench,
    SynthBenchConfig, TruthRow,
};
