//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

pub mod fragments;
pub mod models;
pub mod optim;
pub mod zdt;
