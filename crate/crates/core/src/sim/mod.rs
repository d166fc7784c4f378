//! Synthetic worlds: gold labels, crowd workers and correlated machine classifiers.

mod crowd;
mod machines;
mod normal;
pub mod seeds;
mod world;

pub use crowd::{sample_crowd_vote, sample_workers, CrowdSpec, SimCrowd, SimWorker};
pub use machines::{
    copula_outputs, generate_machine_outputs, machine_id, sample_machine_accuracies,
    SimMachineSpec, SimMachines,
};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use world::{generate_items, generate_world, world_checksum, FilterSpec, WorldConfig};
