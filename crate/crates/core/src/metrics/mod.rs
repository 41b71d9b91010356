//! Fidelity of synthetic series: binned feature distributions compared by
//! KL divergence, nearest-neighbour Adversarial Accuracy, and the per-epoch
//! group report used to pick a checkpoint.

mod aa;
mod histogram;
mod report;
mod svg;

pub use aa::{adversarial_accuracy, AaResult};
pub use histogram::{
    bin_features, bin_pair, kl_divergence, shared_range, BinRange, FeatureDistribution, DEFAULT_BINS,
    KL_PSEUDO_COUNT,
};
pub use report::{
    epoch_report, group_spans, write_report, AaRecord, AaRepresentation, BoxStats, CheckpointSource, EmitOptions,
    EpochGroupReport, Gap, GroupSpan, KlRecord, ReportOptions,
};
pub use svg::box_plot_svg;
