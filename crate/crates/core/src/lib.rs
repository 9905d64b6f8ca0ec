//! Measures how sensitive the effect of each image augmentation is to the
//! training hyper-parameters.
//!
//! Pipeline: [`design`] enumerates (classifier, hyper-params, augmentation
//! vector) runs, [`runner`] trains and evaluates them into a resumable
//! store, [`surrogate`] fits one linear model per series, and [`metrics`]
//! turns the normalized coefficients into sensitivity, consistency,
//! influence and reliability.

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod design;
pub mod metrics;
pub mod model;
pub mod runner;
pub mod surrogate;
