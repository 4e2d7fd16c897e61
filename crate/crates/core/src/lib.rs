//! Shell-decomposition primal-dual approximation for constrained forest
//! problems, plus the exact brute-force oracle used to certify it.

pub mod engine;
pub mod graph;
pub mod gw;
pub mod oracle;
pub mod rational;
pub mod spec;

pub use engine::{run_shell_decomposition, EngineConfig, EngineError, EngineState, PhaseTrace, RunReport, ShellRun};
pub use graph::{
    connected_components, minimum_spanning_forest, scale_zero_weights, sssp_forest, sssp_forest_glued, Edge, EdgeId,
    GraphError, Label, NodeId, Partition, SsspForest, SsspMode, WeightedGraph,
};
pub use rational::Rational;
pub use spec::{ActivityMap, ProblemSpec, SpecError, Variant};
