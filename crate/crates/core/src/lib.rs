//! Numerical laboratory for the catastrophe geometry of piecewise-linear
//! networks.
//!
//! The crate is organized around one object of study: the set of inputs at
//! which a small perturbation crosses an activation boundary (or, more
//! generally, produces a large output jump). It provides
//!
//! - [`net`]: feedforward networks with piecewise-linear and smooth
//!   activations, forward/Jacobian/parameter-gradient evaluation, seeded
//!   random construction, and a plain-text wire format (`NETV1`);
//! - [`region`]: exact first-layer boundary geometry — hyperplanes,
//!   point-to-boundary distances, exact region counts for depth-1 nets in
//!   one and two dimensions, grid kink densities, and closed-form
//!   strip/disk areas;
//! - [`density`]: seeded Monte Carlo estimators of kink density, output
//!   instability, and safe measure, with Wilson confidence intervals and a
//!   width-sweep harness for genericity experiments;
//! - [`bounds`]: closed-form lower bounds on catastrophe density and upper
//!   bounds on safe measure, with overflow-safe log-domain reporting;
//! - [`fisher`]: empirical Fisher information matrices, a Jacobi
//!   eigensolver, and damped conjugate-gradient natural-gradient
//!   diagnostics;
//! - [`learn`]: toy datasets, minibatch SGD, FGSM/PGD attacks, and a
//!   plug-in mutual-information estimator.
//!
//! All numeric kernels are generic over the scalar type through
//! [`Real`]; `f64` is the default everywhere and the type the estimators
//! are validated with. Every randomized routine takes an explicit seed and
//! produces bit-identical results for a fixed seed, independent of worker
//! thread count.

pub mod bounds;
pub mod density;
pub mod fisher;
pub mod learn;
pub mod net;
pub mod region;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use scalar::Real;

/// Default scalar for the whole laboratory.
pub type Scalar = f64;

pub type Network = net::Network<Scalar>;
pub type Domain = net::Domain<Scalar>;
pub type Hyperplane = region::Hyperplane<Scalar>;
pub type DensityEstimate = density::DensityEstimate<Scalar>;
pub type BoundReport = bounds::BoundReport<Scalar>;
pub type BoundConstants = bounds::BoundConstants<Scalar>;
pub type FisherSpectrum = fisher::FisherSpectrum<Scalar>;
pub type Dataset = learn::Dataset<Scalar>;
