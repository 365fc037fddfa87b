//! Graph convolutions over hierarchy level meshes: spiral (ordered gather)
//! and spectral (Chebyshev polynomial) variants, plus the precomputed
//! supports they run on.

mod spectral;
mod spiral;

pub use spectral::{
    build_spectral, build_spectral_from_edges, spectral_conv, spectral_conv_backward,
    SpectralOperator,
};
pub use spiral::{
    build_spirals, default_spiral_length, spiral_conv, spiral_conv_backward, SpiralSupport,
    SPIRAL_PAD,
};
