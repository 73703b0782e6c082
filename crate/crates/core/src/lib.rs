//! Pseudo-spectral solver and estimate toolkit for the self-dual
//! Chern–Simons gauged O(3) sigma model on the two-torus.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dynamics;
pub mod estimates;
pub mod fields;
pub mod initdata;
pub mod nullforms;
pub mod par;
pub mod spectral;
