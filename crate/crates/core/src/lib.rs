//! Macroscopic trajectory planning for very large robot swarms.
//!
//! The swarm density is modelled as a Gaussian mixture and planned as a
//! sequence of mixtures in Wasserstein space. Collocation components are
//! placed in obstacle-free space by a Gaussian centroidal Voronoi
//! tessellation, connected into a graph, and searched for shortest
//! component trajectories whose weights are then fixed by a transportation
//! linear program. A microscopic simulator moves sampled robots along the
//! plan with exact Gaussian transport maps and reports distance and energy.
//!
//! Units: lengths in km, time in hours, densities in km⁻².

pub mod error;
pub mod gaussian_ot;
pub mod gcvt;
pub mod linalg;
pub mod planner;
pub mod sim;
pub mod workspace;

pub use error::{Error, Result};
pub use gaussian_ot::{Gaussian2, Gmm};
pub use gcvt::{build_gcvt, GcvtParams, GcvtVariant, Tessellation};
pub use linalg::{Mat2, Vec2};
pub use planner::{plan, PlanMethod, PlanParams, PlanResult};
pub use sim::{compute_metrics, simulate, RunMetrics};
pub use workspace::{Polygon, RegionMask, Workspace};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
