//! Exclusive-row δ-biclustering.
//!
//! The pipeline harvests overlapping low-residue biclusters with a FLOC-style
//! greedy search, then picks a row-disjoint subset of maximal total volume by
//! solving a combinatorial-auction winner determination problem exactly.
//! A volume gap statistic against a matched-variance uniform reference picks
//! the MSR threshold.

pub mod cli;
pub mod error;
pub mod floc;
pub mod gap;
pub mod io;
pub mod matrix;
pub mod msr;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod wdp;

pub use error::{Error, Result};
pub use floc::{harvest_candidates, run_floc, FlocConfig, GainRule};
pub use gap::{gap_scan, select_threshold, GapScanResult, ReferenceModel};
pub use matrix::ExpressionMatrix;
pub use msr::Bicluster;
pub use pipeline::{run_exclusive_biclustering, PipelineConfig, PipelineResult};
pub use synth::{evaluate, generate_synthetic, EmbedSpec, EvalReport, GroundTruth};
pub use wdp::{solve_wdp, Allocation, Auction, Bid};
