//! Release-interval deconfounding for video recommendation.
//!
//! A matching backbone and a recency perceptron are trained jointly on
//! logged impressions; at inference the interval's influence is removed
//! either by reading the perceptron at the observed interval or by
//! marginalizing it over the training interval distribution.

pub mod backbones;
pub mod dataio;
pub mod evaluation;
pub mod inference;
pub mod numerics;
pub mod perceptron;
pub mod trainer;
pub mod cli;
pub mod config;
pub mod synthetic;
