//! Coupled potential, flow and heat finite-element solver for radiofrequency
//! ablation in a perfused channel.

pub mod config;
pub mod coupler;
pub mod fem;
pub mod flow;
pub mod heat;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod output;
pub mod potential;
pub mod verify;
