//! Generalized chi-square distribution: cdf, pdf, quantiles and samples.

pub mod approx;
pub mod error;
pub mod eval;
pub mod fourier;
pub mod harness;
pub mod inverse;
pub mod params;
pub mod quadrature;
pub mod ray;
pub mod sample;
pub mod series;
pub mod special;

pub use error::{Gx2Error, Result};
pub use eval::{gx2cdf, gx2pdf, EvalSettings, Evaluation, RaySettings};
pub use inverse::{auto_method, gx2inv, Method, MethodChoice, Prob, Region, RoutingConfig};
pub use params::{
    charfun, gx2_to_quad, moments, quad_to_gx2, Gx2Params, Moments, NormalSpec, QuadForm, Side,
    Target,
};
pub use sample::{sample, SamplePath};
