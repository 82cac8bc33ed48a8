//! Robot-aware Soma cube assembly: a masked MDP over the 3×3×3 grid, an exact
//! solver, a hand-rolled DQN with curriculum training, and a ZYZ singularity
//! guard for the placement arm.

pub mod cli;
pub mod curriculum;
pub mod dqn;
pub mod env;
pub mod geometry;
pub mod rng;
pub mod solver;
pub mod zyz;
