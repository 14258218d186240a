//! Search-based behavioral cloning.
//!
//! Expert demonstrations are encoded into a latent frame table. At run time
//! the [`Controller`] retrieves the nearest stored situation under L1
//! distance, replays its actions, and searches again when the live embedding
//! diverges from the followed reference or a follow budget runs out. The
//! crate also ships a gridworld task with a scripted expert and the episodic
//! evaluation harness used to measure the controller.
//!
//! Embedding storage is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the `f32` instantiation used by the on-disk format.

pub mod controller;
pub mod demo;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gridnav;
pub mod index;
pub mod rng;
pub mod scalar;

pub use controller::{
    Controller, ControllerConfig, ControllerState, Phase, SearchEvent, StepOutput, Trigger,
};
pub use demo::{
    ActionRecord, ActionSchema, ControlKind, ControlSpec, ControlValue, DemoSet, Embedding, Frame,
    Rule, SituationRef, Trajectory, Violation,
};
pub use encoder::{Encoder, EncoderConfig, EncoderKind, Observation};
pub use error::{Result, SbcError};
pub use gridnav::{generate_demos, hold_phase_labels, Expert, GridAction, GridConfig, GridState};
pub use index::{calibrate_threshold, l1_distance, LatentIndex, SearchResult};
pub use scalar::Scalar;

pub type Embedding32 = Embedding<f32>;
pub type Frame32 = Frame<f32>;
pub type Trajectory32 = Trajectory<f32>;
pub type DemoSet32 = DemoSet<f32>;
pub type LatentIndex32 = LatentIndex<f32>;
pub type Controller32<'a> = Controller<'a, f32>;

pub type DemoSet64 = DemoSet<f64>;
pub type LatentIndex64 = LatentIndex<f64>;
pub type Controller64<'a> = Controller<'a, f64>;
