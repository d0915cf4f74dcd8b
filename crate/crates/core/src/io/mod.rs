//! Dataset ingestion and result artifacts.

mod scene_json;
mod svg;
mod tables;
mod trajectories;

pub use scene_json::{read_scene, read_scene_dir, scene_from_json, scene_to_json, write_scene, write_scene_dir};
pub use svg::{ellipse_axes, plot_scene, AgentPrediction};
pub use tables::{emit_tables, competition_ranks, write_table_csv, TableRow};
pub use trajectories::{load_trajectories, parse_trajectories, DEFAULT_ETH_DT};
