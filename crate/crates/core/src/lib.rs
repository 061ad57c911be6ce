//! Passenger load factor forecasting from dual booking sequences.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`]: reservation/airport/holiday tables, leg aggregation and a
//!   seeded synthetic corpus generator.
//! - [`features`]: the 39 engineered candidate features per booking snapshot.
//! - [`featsel`]: the seven-stage feature selection pipeline.
//! - [`sequences`]: horizontal/vertical sample construction, chronological
//!   split and standardisation.
//! - [`neural`]: a small from-scratch differentiable layer set and the ten
//!   model variants built from it.
//! - [`training`]: MSE training with Adam/RMSprop, early stopping and
//!   learning-rate reduction on plateau.
//! - [`evaluation`]: metrics, horizon/category reports, baselines and
//!   leaderboards.

pub mod evaluation;
pub mod featsel;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod neural;
pub mod sequences;
pub mod training;
