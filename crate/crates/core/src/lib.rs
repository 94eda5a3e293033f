//! Conditionally parametric causal models.
//!
//! An effect is modelled as following a known exponential-family law whose
//! parameters vary smoothly with its causes. Under the true causal order the
//! probability-integral-transform residuals of the effect are uniform and
//! independent of the causes; in the wrong order they usually are not. The
//! crate provides the pieces needed to exploit this:
//!
//! - [`expfam`]: densities, CDFs, quantiles and sufficient statistics;
//! - [`smooth_mle`]: penalised spline likelihood fits of θ(x);
//! - [`indep`]: permutation tests of independence and homogeneity;
//! - [`graphs`] and [`discovery`]: pairwise and score-based graph search;
//! - [`invariance`]: subset scans across environments;
//! - [`simulate`] and [`experiments`]: data generators and simulation studies.
//!
//! Data-parallel work goes through [`exec`], which uses rayon when the
//! `parallel` feature is on and can be forced sequential at run time.

pub mod discovery;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod expfam;
pub mod graphs;
pub mod indep;
pub mod invariance;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod smooth_mle;
pub mod special;
pub mod spline;

pub use error::{Error, Result};
pub use expfam::{Family, ParamVector};
