//! Vehicle-to-RSU assignment, CPU allocation and the alternating
//! beamforming/extraction-ratio optimization.

pub mod ao;
pub mod assign;
pub mod cpu;

pub use ao::{alternating_optimize, AoOutcome, AoParams, AoTrace};
pub use assign::{greedy_assign, hybrid_heuristic, AnnealParams, Assignment, HhOutcome, SaStep};
pub use cpu::{allocate_cpu, DtTask};
