//! Failover traffic engineering with learning automata.
//!
//! The pipeline loads a topology, explores primary and backup paths per
//! demand, compiles them into two-stage match-action rules with a status
//! register per switch, and replays failures in a fluid simulator against a
//! reactive shortest-path baseline.

pub mod baseline;
pub mod constraints;
pub mod dataplane;
pub mod dla;
pub mod error;
pub mod experiment;
pub mod rulegen;
pub mod topology;

pub use baseline::{reroute_after_failure, shortest_path, BaselineConfig, FailedLinks, Metric};
pub use constraints::{
    check_delay, check_flow_conservation, check_link_capacity, check_link_once, validate_plans,
    Placement, ViolationReport,
};
pub use dataplane::{
    forward, max_min_fair, run_flow_sim, Decision, FailureEvent, Mode, SimConfig, SimMetrics,
    Simulation,
};
pub use dla::{
    choose_backup, evaluate_path, explore_path, init_dla, reward_path, select_paths, solve_demand,
    update_bandwidth, CostCoefficients, DemandOutcome, DlaGraph, FlowDemand, LearningAutomaton,
    LearningParams, PathCandidate, PathPlan, PlanExport, Solution, SolverConfig, TrafficClass,
};
pub use error::{Error, Result};
pub use rulegen::{
    apply_failure_to_rules, assign_flow_set_ids, compile_rules, generate_rules, memory_cost,
    FailureScenario, FlowSetId, MemoryReport, SwitchRuleSet,
};
pub use topology::{
    build_simple_topology, load_graphml, CapacityPolicy, LinkAttributes, LinkSpec, NetworkGraph,
    NodeId, NodeIx, NodeKind,
};
