//! Shared inputs for the method benchmarks.

use gx2::{EvalSettings, Gx2Params, RaySettings};

/// An elliptical case every method accepts.
pub fn elliptical() -> Gx2Params {
    Gx2Params::new(
        vec![3.0, 1.0, 2.0],
        vec![4, 2, 3],
        vec![7.0, 0.0, 2.0],
        0.0,
        0.0,
    )
    .unwrap()
}

/// Mixed signs with a normal term; four dimensions, so ray quadrature applies.
pub fn mixed() -> Gx2Params {
    Gx2Params::new(
        vec![1.0, -0.5, 0.3],
        vec![1, 1, 1],
        vec![1.0, 0.5, 0.0],
        0.4,
        -0.2,
    )
    .unwrap()
}

/// Mixed signs in three dimensions.
pub fn mixed_3d() -> Gx2Params {
    Gx2Params::new(vec![1.0, -0.5, 0.3], vec![1, 1, 1], vec![1.0, 0.5, 0.0], 0.0, -0.2).unwrap()
}

/// Settings with a Monte Carlo ray budget small enough to time.
pub fn settings(n_rays: usize) -> EvalSettings {
    EvalSettings {
        ray: RaySettings {
            n_rays,
            quadrature_max_dim: 0,
            ..RaySettings::default()
        },
        ..EvalSettings::default()
    }
}
