//! Stochastic coordinate proximal gradient methods for composite problems
//! `min F(x) = f(x) + ψ(x)`, with random subspace sketches, a closed-form
//! solver for the cubic-regularized quadratic and tools for evaluating the
//! method's probabilistic convergence certificates.
//!
//! ```
//! use scpg::cubic::starting_point;
//! use scpg::experiment::{generate_instance, InstanceSpec};
//! use scpg::sketch::SketchKind;
//! use scpg::solver::{run, ExitStatus, SolverConfig, StepRule};
//!
//! let inst = generate_instance(&InstanceSpec::convex(200, 200, 1.0, 7)).unwrap();
//! let x0 = starting_point(&inst).unwrap();
//! let config = SolverConfig::new(SketchKind::CoordinateBlock, 15, StepRule::PracticalCurvature);
//! let trace = run(&inst, &x0, &config).unwrap();
//! assert_eq!(trace.exit, ExitStatus::Converged);
//! ```

pub mod analysis;
pub mod cubic;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod sketch;
pub mod solver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};

/// Generator for stream `stream` of `seed`. Distinct streams are independent,
/// so per-run randomness does not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Compiles the guide's code blocks as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/sketches.md")]
    mod sketches {}
    #[doc = include_str!("../../../book/src/cubic.md")]
    mod cubic {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
