//! Numeric thresholds used across the crate.
//!
//! All comparisons they feed are scale-free: group matrices are unitary,
//! roots are unit vectors, and kernel identities are checked relative to the
//! magnitudes involved. That is what makes fixed absolute thresholds safe.

/// Frobenius distance below which two group-element matrices are the same
/// element. Entries are products of roots of unity; closure arithmetic
/// keeps the error around 1e-13, far from this line.
pub const ELEMENT_MATCH: f64 = 1e-9;

/// A matrix U passes the unitarity gate when ||U U* - I||_F is below this.
pub const UNITARITY: f64 = 1e-9;

/// Reflection detection clusters eigenvalues of a finite-order unitary
/// matrix against 1. For element orders up to 24 every eigenvalue != 1 has
/// |lambda - 1| > 0.26, so this threshold cannot misfile one.
pub const EIGENVALUE_ONE: f64 = 1e-7;

/// Smallest coordinate modulus accepted as the phase anchor when rotating a
/// root so its first significant coordinate is real positive.
pub const PHASE_ANCHOR: f64 = 1e-8;

/// Canonicalized unit roots closer than this (Euclidean) name the same
/// mirror hyperplane.
pub const ROOT_MATCH: f64 = 1e-8;

/// A canonical root must have unit norm within this.
pub const ROOT_UNIT: f64 = 1e-12;

/// Default cap on group size during closure; exceeding it is an error, not
/// a truncation.
pub const CLOSURE_CAP: usize = 10_000;

/// Relative tolerance for evaluation-based polynomial identities
/// (invariance, the skew transformation law, Jacobian proportionality).
pub const INVARIANCE_REL: f64 = 1e-10;

/// Relative tolerance for agreement between independently computed values
/// of the same finite kernel average (different summation orders).
pub const KERNEL_AGREE_REL: f64 = 1e-12;

/// Random points backing a pointwise identity check stay at least this far
/// from every mirror hyperplane (inner-product distance).
pub const HYPERPLANE_AVOID: f64 = 1e-3;

/// Sampled pairs closer than this to an excluded hyperplane or to the
/// kernel singular set are discarded and counted, never evaluated.
pub const PAIR_DISCARD: f64 = 1e-6;

/// The unweighted ball kernel refuses |1 - <z,w>| below this.
pub const KERNEL_SINGULAR: f64 = 1e-14;

/// Weighted kernels refuse a hyperplane factor with modulus below this when
/// its exponent is negative, rather than overflowing to inf.
pub const WEIGHT_UNDERFLOW: f64 = 1e-300;

/// Relative Cauchy tolerance for the boundary-value probe of the
/// hyperplane-quotient kernel along a shrinking sequence.
pub const DIVISION_CAUCHY_REL: f64 = 1e-6;

/// A series partial sum stops when the next term falls below this times the
/// running total.
pub const SERIES_TAIL: f64 = 1e-14;
