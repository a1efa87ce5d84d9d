pub mod fault;
pub mod payload;
pub mod planner;
pub mod query;
pub mod runtime;
pub mod sim;
pub mod workloads;
