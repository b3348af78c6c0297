//! Coarse shape from the silhouette: contour normals, height and mesh.

mod height;
mod mesh;
mod normals;

pub use height::{reconstruct_height, DEFAULT_EPSILON};
pub use mesh::{ease, export_mesh, Focal, Mesh};
pub use normals::{
    boundary_normals, contour_normals, interpolate_normals, normal_energy, normals_from_height,
    BoundaryConstraints, InterpolationParams, InterpolationReport, BOUNDARY_SIGMA,
};
