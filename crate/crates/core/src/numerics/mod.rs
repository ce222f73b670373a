//! Dense-matrix kernels and differentiable layers with analytic gradients.

mod gradcheck;
mod layers;
mod matrix;

pub use gradcheck::{
    check_model_gradients, finite_difference_check, max_relative_error, numeric_gradient,
};
pub use layers::{
    glorot_uniform, normalize_rows_backward, normalize_rows_cached, sigmoid, silu, silu_backward,
    Layer, LayerNorm, LayerNormCache, Linear, LinearCache, Mlp, MlpCache, ParamModel, Parameter,
    ResidualBlock, RngSeed, RowNormCache, LAYER_NORM_EPS, ROW_NORM_EPS,
};
pub use matrix::{dot, l2_norm, Matrix};
