//! Built-in systems.

pub mod im;
pub mod pendulum;

pub use im::{im_fixed_frame, ImParams, ImSystem};
pub use pendulum::{pendulum_almost_global, pendulum_local, PendulumParams, PendulumSystem, PendulumVariant};
