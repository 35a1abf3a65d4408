//! Bipedal locomotion under dynamic loads, at desk scale.
//!
//! * [`sim`]: planar five-link biped with penalty contacts and a 2 kHz PD loop
//! * [`loads`]: tray-box, cart, carry-pole and water-jug load dynamics
//! * [`gait`] and [`reward`]: periodic swing/stance clock, gait schedule, reward and termination
//! * [`policy`]: recurrent Gaussian actor-critic with exact backpropagation through time
//! * [`trainer`]: PPO with dynamics randomization, even multi-load splitting and bootstrapping
//! * [`eval`]: pass rate, speed error, push-force search, max speed and phase portraits
//!
//! The numerical kernels are generic over [`Real`]; the aliases below fix the
//! double-precision types the training and evaluation pipeline uses.

pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod gait;
pub mod loads;
pub mod policy;
pub mod reward;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
pub use loads::LoadKind;
pub use scalar::Real;

pub type SimState = sim::SimState<f64>;
pub type Biped = sim::Biped<f64>;
pub type ModelParams = sim::ModelParams<f64>;
pub type PDGains = sim::PDGains<f64>;
pub type DynRandRanges = sim::DynRandRanges<f64>;
pub type LoadSpec = loads::LoadSpec<f64>;
pub type LoadState = loads::LoadState<f64>;
pub type LoadParams = loads::LoadParams<f64>;
pub type GaitParams = gait::GaitParams<f64>;
pub type ClockState = gait::ClockState<f64>;
pub type RewardBreakdown = reward::RewardBreakdown<f64>;
pub type Policy = policy::RecurrentActorCritic<f64>;
pub type PolicyF32 = policy::RecurrentActorCritic<f32>;
pub type HiddenState = policy::HiddenState<f64>;
