//! Median-of-means estimation and the procedures built on top of it.
//!
//! The basic object is the robust empirical process: split the sample into
//! `V` regular blocks, average within each block, and take the median of the
//! block means. Everything else in the crate is a consumer of that process:
//!
//! - [`blocks`] — regular partitions, the median convention, the robust mean,
//!   block-count selection rules, and the absolute constants of the
//!   concentration bounds.
//! - [`dictionary`] — basis-function families (histogram cells, trigonometric
//!   systems, custom functions), Gram/coherence statistics, and the hypothesis
//!   checks used by the Lasso and selection bounds.
//! - [`lasso`] — robust L1-penalized least-squares density estimation with
//!   data-driven weights and a cyclic coordinate-descent solver.
//! - [`selection`] — selection among arbitrary collections of density
//!   estimators, with classical (plain empirical) and robust (per-label
//!   median-of-means) criteria and their penalties.
//! - [`mselect`] — robust M-estimator selection: per-block fits, pairwise
//!   median-of-remaining-blocks loss comparisons, and the argmin-max selector,
//!   with contrasts for L2 density, Kullback histogram density, and L2
//!   regression.
//! - [`mixing`] — the interleaved 2V-block layout for dependent data and the
//!   selector built from odd blocks only.
//! - [`harness`] — data generators, the Monte Carlo coverage-experiment
//!   runner, and reproducible experiment reports.
//!
//! All block indices are 0-based throughout the crate and its JSON output.

pub mod blocks;
pub mod constants;
pub mod dictionary;
pub mod harness;
pub mod lasso;
pub mod mixing;
pub mod mselect;
pub mod selection;

pub use blocks::{
    choose_block_count, median, robust_mean, variance_upper_bound, BlockCountMode, BlockPartition,
    RobustMeanResult,
};
pub use constants::Constants;
pub use dictionary::Dictionary;
