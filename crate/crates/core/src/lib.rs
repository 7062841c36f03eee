//! Rigid point-cloud registration posed as a Markov decision process.
//!
//! The state is the rigid transform accumulated so far, the action set is a
//! fixed list of 24 axis-aligned rotation and translation increments, and a
//! greedy agent repeatedly applies the action with the highest predicted
//! reward. Rewards come either from an exact oracle (the reduction of the
//! SE(3) distance to the ground truth) or from a learned network that only
//! sees the two observed clouds.
//!
//! Module map:
//!
//! * [`geom3`] rotations, rigid transforms and the transform-space distance.
//! * [`rotsample`] Haar-uniform and naive Euler transform samplers.
//! * [`cloud`] point clouds, perturbation pipelines, file I/O, synthetic shapes.
//! * [`actions`] the action set, decoupled application and reward oracles.
//! * [`agent`] policies and the staged registration loop.
//! * [`rewardnet`] the learned reward function, its gradients and training.
//! * [`icp`] nearest-neighbour search, Kabsch and point-to-point ICP.
//! * [`metrics`] rotation/translation errors, clean L2 and modified Chamfer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actions;
pub mod agent;
pub mod cloud;
pub mod error;
pub mod geom3;
pub mod icp;
pub mod metrics;
pub mod rewardnet;
pub mod rng;
pub mod rotsample;

pub use error::{Error, Result};
pub use geom3::{AxisAngle, RigidTransform, RotationMatrix, Vector3};
