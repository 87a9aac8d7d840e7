pub mod collision;
pub mod dynamics;
pub mod grid;
pub mod lidar;
pub mod worldfile;
pub mod worldgen;

pub use collision::{check_collision, obstacle_distance, DistanceField, Footprint};
pub use dynamics::{step_dynamics, Limits, RobotState, VelocityCommand};
pub use grid::{OccupancyGrid, World};
pub use lidar::{raycast_scan, LaserScan, SensorConfig};
pub use worldgen::{generate_world, WorldGenConfig};
