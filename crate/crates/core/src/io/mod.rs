//! Scene files, CSV/matrix tables and the command implementations.

pub mod commands;
pub mod scene;
pub mod table;

pub use commands::{
    cmd_impact_map, cmd_simulate, cmd_validate, validate_scene, Check, CommandError,
    SimulateOverrides, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK,
};
pub use scene::{parse_scene, Scene, SceneConfig, SceneError, Tolerances};
pub use table::{read_matrix, write_events, write_matrix, write_trajectory, TableError};
