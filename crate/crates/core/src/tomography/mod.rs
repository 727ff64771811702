//! Ballistic transform, adjoints and normal operators, the principal symbol,
//! injectivity and smoothing diagnostics, and wavefront imaging.

mod matrix;
mod normal;
mod ray_transform;
mod smoothing;
mod svd;
mod symbol;
mod wavefront;

pub use matrix::{OperatorMatrix, FLAG_PARTIAL, FLAG_SCATTERING};
pub use normal::{
    normal_operator_full, normal_operator_kernel, point_source_pairing, NormalPath, NormalSplit,
    WavefrontImage,
};
pub use ray_transform::{adjoint_ray_transform, ray_transform, AttenuationTable};
pub use smoothing::{boundary_shell_fraction, smoothing_diagnostic};
pub use svd::{
    invisible_support, restricted_sigma_min, svd_injectivity, visible_support, InjectivityReport,
    RATIO_FLOOR,
};
pub use symbol::{principal_symbol, symbol_field, SymbolField};
pub use wavefront::{
    edge_response, wavefront_image, EdgeMetric, EdgePoint, EdgeResponse, WavefrontReport,
};
