//! Parametric timed reachability games under forced-transition semantics:
//! symbolic solving, winning-strategy extraction, controller synthesis and
//! verification of the controller composed with the game.

pub mod compose;
pub mod controller;
pub mod model;
pub mod semantics;
pub mod sim;
pub mod solver;
pub mod strategy;
pub mod zone;
