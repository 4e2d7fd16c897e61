//! Round-accurate synchronous message-passing simulator and the distributed
//! building blocks of the shell decomposition.

pub mod driver;
pub mod ffe;
pub mod msf;
pub mod network;
pub mod parts;
pub mod prf;
pub mod rps;
pub mod sssp;
pub mod tree;

pub use driver::{run_distributed_cfp, DistConfig, DistError, DistRun};
pub use ffe::{ffe_distributed, ffe_setup, FfeOptions, FfeOutcome, Knowledge};
pub use msf::{msf_partwise, MsfOutcome};
pub use network::{Framing, SimConfig, SimError, SimNetwork, Tag};
pub use parts::{build_part_forest, partwise_aggregate, ComponentView, Ctx, PartForest};
pub use tree::{build_bfs_tree, BfsTree};
