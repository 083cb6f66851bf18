//! Self-improvement for diffusion policies on small 2D multimodal tasks.
//!
//! The pipeline trains a conditional diffusion policy on scripted
//! demonstrations, lets it practise with latent-space ("modal") exploration,
//! keeps the successful trials from scenarios it finds hard, optionally
//! re-weights segments by learned value increments, and retrains.

pub mod cli;
pub mod envs;
pub mod error;
pub mod explore;
pub mod jsonio;
pub mod numerics;
pub mod orchestrate;
pub mod policy;
pub mod select;

pub use error::{Error, Result};
