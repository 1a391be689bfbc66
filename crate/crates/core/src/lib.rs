//! Conditional survival probabilities, credit spreads and zero-recovery bond
//! prices when a firm's default barrier is random, unobservable and switches
//! level at known dates.
//!
//! Firm value follows a geometric Brownian motion. Investors either watch the
//! firm continuously ([`survival::CInvestorView`]) or only at discrete dates
//! ([`survival::DInvestorView`]); both see the default when it happens.

pub mod error;
pub mod gbm;
pub mod minlaw;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod scenario;
pub mod special;
pub mod survival;
pub mod thresholds;

pub use error::{Error, Result};
