//! Bundled fixtures: the karate-club edge list and the experiment specs
//! reproduced by the acceptance suite.

use crate::graph::{load_edge_list, Graph};

pub const KARATE_EDGES: &str = include_str!("../assets/karate.edges");

pub const PPM_ER_SWEEP: &str = include_str!("../assets/ppm_er_sweep.json");
pub const PLANTED_CLIQUE_SWEEP: &str = include_str!("../assets/planted_clique_sweep.json");
pub const DCPPM_CONFIGURATION_SWEEP: &str = include_str!("../assets/dcppm_configuration_sweep.json");
pub const RDPG_RANK_SWEEP: &str = include_str!("../assets/rdpg_rank_sweep.json");
pub const SPATIAL_GRAVITY_SWEEP: &str = include_str!("../assets/spatial_gravity_sweep.json");

/// Zachary's karate club: 34 nodes, 78 edges.
pub fn karate_club() -> Graph {
    load_edge_list(std::io::Cursor::new(KARATE_EDGES))
        .expect("bundled karate edge list parses")
        .graph
}
