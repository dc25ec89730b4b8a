//! Neuroevolutionary multi-objective search over convolutional-recurrent
//! trajectory predictors.
//!
//! The crate is organised bottom-up:
//!
//! * [`simdata`] synthesises highway episodes, renders ego-centric occupancy
//!   grids and assembles sliding-window datasets.
//! * [`nncore`] is a small reverse-mode kernel set (dense, convolution,
//!   LSTM, dropout, losses, optimizers).
//! * [`genome`] encodes the 13-locus hyperparameter genome and its variation
//!   operators.
//! * [`model`] builds and trains one CNN→LSTM predictor from a decoded genome.
//! * [`objectives`] implements the five trajectory objectives and the
//!   experiment objective sets.
//! * [`emo`] is NSGA-II over genomes.
//! * [`analysis`] holds post-run reporting: spread classification, metric
//!   aggregation and Spearman rank correlation.

pub mod analysis;
pub mod emo;
pub mod fsutil;
pub mod genome;
pub mod model;
pub mod nncore;
pub mod objectives;
pub mod rng;
pub mod simdata;
