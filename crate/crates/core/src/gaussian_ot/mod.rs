//! Wasserstein-2 geometry on planar Gaussians and Gaussian mixtures.

mod gaussian;
mod gmm;
pub mod transport;

pub use gaussian::{interpolate, transport_map, w2, w2_sq, Gaussian2, GaussianRecord};
pub use gmm::{
    gmm_geodesic, gmm_pdf, w2_cost_matrix, wg_cost_with, wg_distance, Gmm, GmmRecord,
    TransportPlan, GEODESIC_DROP, WEIGHT_SUM_TOL,
};
pub use transport::{solve_transport, Coupling, TransportSolution};
