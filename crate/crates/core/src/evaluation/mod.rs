//! Attack accuracy, transferability matrices, pair classification and
//! cross-approach comparison.

mod matrix;
mod metrics;
mod pairs;

pub use matrix::{build_matrix, test_sets_by_attack, TransferabilityMatrix};
pub use metrics::{attack_accuracy, confusion, precision_recall, ConfusionCounts, PrecisionRecall};
pub use pairs::{
    bin_counts, classify_pairs, compare_approaches, occurrence_counts, overlap, Bin, BinCounts, Occurrence,
    OverlapReport, PairApproaches, TransferabilityPair, THRESHOLD,
};
