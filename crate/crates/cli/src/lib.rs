//! Command line front end and HTTP service for relightable object models.

pub mod cli;
pub mod render;
pub mod service;
