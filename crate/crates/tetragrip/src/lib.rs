//! Deterministic simulator and control stack for a four-actuator suction
//! gripper picking boxes out of a shelf bin.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`] — vectors, poses, triangle meshes, and a BVH raycaster.
//! * [`scene`] — bin contents, scenario generation, serialization.
//! * [`physics`] — quasi-static pushing, support, and attachment rules.
//! * [`sensors`] — multizone time-of-flight simulation and vacuum sampling.
//! * [`gripper`] — actuator kinematics, PD servoing, seal and vacuum models.
//! * [`seal_classifier`] — a small MLP that predicts seal success.
//! * [`policies`] — rule-based grasping strategies and role assignment.
//! * [`rl`] — a recurrent PPO stack trained against the simulator.
//! * [`harness`] — multi-rate episode execution, sweeps, and the CLI.
//!
//! Everything is seedable and single-threaded by construction: two runs with
//! the same configuration and seed produce byte-identical outputs.

pub mod geometry;
pub mod params;
pub mod scene;
pub mod physics;
pub mod sensors;
pub mod gripper;
pub mod seal_classifier;
pub mod policies;
pub mod rl;
pub mod harness;
