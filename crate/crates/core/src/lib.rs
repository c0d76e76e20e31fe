//! Simulation and control library for a quadruped whose legs double as
//! quadrotor arms: design tradeoff math, leg kinematics, trot gait generation,
//! floating-base dynamics, locomotion and hover control, and the
//! legged/aerial morphing sequence.

pub mod control;
pub mod design;
pub mod gait;
pub mod kinematics;
pub mod morph;
pub mod sim;

/// Standard gravity, m/s^2.
pub const GRAVITY: f64 = 9.81;
