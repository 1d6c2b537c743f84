//! World-model object-goal navigation.
//!
//! An agent in a 2.5D indoor [`simulator`] searches for an object category.
//! Each step it scores a six-view panorama with a vision-language model,
//! folds the scores into a [`curiosity_map`], plans a subtask, and picks one
//! of several proposed polar moves ([`policy`]). The [`harness`] runs suites
//! of episodes and reports success rate and SPL.

pub mod config;
pub mod curiosity_map;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod policy;
pub mod simulator;
pub mod vlm;
