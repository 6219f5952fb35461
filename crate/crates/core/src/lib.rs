//! Finite unitary reflection groups on `C^n`, the polynomial invariants of
//! their mirror arrangements, and averaged Bergman kernels of the unit ball.
//!
//! The crate is split along the pipeline that connects those objects:
//!
//! * [`group`] builds the groups `G(m,l,n)` (and closures of arbitrary
//!   unitary generators), finds mirror hyperplanes, orbit decompositions,
//!   normal reflection subgroups and the reduction tree.
//! * [`poly`] carries sparse polynomials, orbit maps, symbolic Jacobians and
//!   the hyperplane-product form of the group Jacobian.
//! * [`kernel`] evaluates the ball Bergman kernel, its group averages,
//!   weighted variants and the hyperplane-quotient form, plus the explicit
//!   two-element-group bounds.
//! * [`quad`] is seeded Monte Carlo on the ball: samplers, weighted
//!   measures, and the integral identity checks.
//! * [`estimate`] samples covering regions and fits the constants appearing
//!   in the kernel comparison estimates; it also hosts the norm sweep.
//!
//! Everything is deterministic given a seed: random streams are pure
//! functions of `(seed, counter)` and float transcendentals go through
//! `libm`, so reports reproduce bit for bit across hosts.
//!
//! The crate is `no_std` (with `alloc`); the companion CLI crate carries all
//! IO.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod estimate;
pub mod group;
pub mod kernel;
pub mod linalg;
pub mod poly;
pub mod quad;
pub mod rng;
pub mod tol;

pub use num_complex::Complex64;
