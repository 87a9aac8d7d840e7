pub mod error;
pub mod geometry;
pub mod global_planner;
pub mod sim;
pub mod local_planner;
pub mod controller;
pub mod tuner;
pub mod harness;
pub mod cli;
