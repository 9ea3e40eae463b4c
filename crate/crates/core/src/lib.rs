//! Chance-constrained DC optimal power flow with a dead-zone primary
//! frequency response.
//!
//! The crate covers the whole pipeline: grid data and DC sensitivities
//! ([`grid`], [`ptdf`]), the frequency-response policy ([`policy`]), Gaussian
//! wind propagation ([`uncertainty`]), chance-constraint evaluation
//! ([`cceval`]), the three dispatch formulations ([`solver`]) and
//! out-of-sample validation ([`montecarlo`]).

pub mod cceval;
pub mod error;
pub mod grid;
pub mod montecarlo;
pub mod normal;
pub mod policy;
pub mod ptdf;
pub mod quadrature;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::GridCase;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/grid.md")]
    struct Grid;
    #[doc = include_str!("../../../book/src/frequency-response.md")]
    struct FrequencyResponse;
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    struct Uncertainty;
    #[doc = include_str!("../../../book/src/weighted-constraints.md")]
    struct WeightedConstraints;
    #[doc = include_str!("../../../book/src/dispatch.md")]
    struct Dispatch;
    #[doc = include_str!("../../../book/src/validation.md")]
    struct Validation;
}
