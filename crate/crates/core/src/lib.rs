//! Adversarial order placement against order-book valuation models.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attacks;
pub mod autodiff;
pub mod book;
pub mod data;
pub mod metrics;
pub mod models;
pub mod profile;
pub mod propagation;
