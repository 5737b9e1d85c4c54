//! Multitask and transfer-learning autotuning.
//!
//! Black-box objectives `y(t, x)` over a task space and a parameter space are
//! tuned jointly for many tasks with a linear coregionalization model (LCM)
//! of Gaussian processes; new tasks are handled by predicting their optimum
//! from earlier ones or by grafting them onto a fitted model.
//!
//! The numerical core ([`gp`], [`lcm`], [`linalg`]) is generic over `f32` and
//! `f64`; the tuners work in `f64`. The aliases below name the usual choices.

pub mod error;
pub mod gp;
pub mod harness;
pub mod lcm;
pub mod linalg;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod spaces;
pub mod tuner;

pub use error::{Error, Result};

pub type KernelParams = gp::KernelParams<f64>;
pub type GpModel = gp::GpModel<f64>;
pub type GpModel32 = gp::GpModel<f32>;
pub type LcmHyper = lcm::LcmHyper<f64>;
pub type LcmModel = lcm::LcmModel<f64>;
pub type LcmModel32 = lcm::LcmModel<f32>;
pub type Matrix = linalg::Matrix<f64>;
pub type Cholesky = linalg::Cholesky<f64>;
