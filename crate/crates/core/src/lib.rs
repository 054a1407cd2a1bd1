//! Graphical Glauber dynamics, information percolation, space-time coarse graining,
//! polymer expansions and the random-cluster representation with a field, for the
//! nearest-neighbour Ising model on tori and boxes.

pub mod error;
pub mod glauber;
pub mod graph;
pub mod lattice;
pub mod sets;
pub mod stats;
pub mod union_find;
pub mod infoperc;
pub mod oracle;
pub mod animals;
pub mod polymer;
pub mod coarsegrain;
pub mod fkfield;
pub mod experiment;

pub use error::{Error, Result};
pub use glauber::{ModelParams, SpinConfig, UpdateRealization};
pub use graph::SpinGraph;
pub use lattice::{BoundaryCondition, BoxGeom, CoarseLattice, SpaceTimeGraph, TorusGeom};
pub use sets::SiteSet;
