//! Healthy Diet Basket adequacy from FAO Food Balance Sheets.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! * [`ingest`] parses FAOSTAT bulk exports (old FBSH and new FBS layouts),
//!   keeps the food-supply energy element and splices the two methodologies.
//! * [`mapping`] classifies FAO items into the six basket groups, sugars, or
//!   excluded items, and sums commodity kcal per group.
//! * [`index`] holds the basket targets and computes adequacy ratios and the
//!   Healthy Diet Basket Index (HDBI).
//! * [`aggregation`] builds population-weighted regional and world supplies
//!   and decade summaries.
//! * [`projections`] applies scenario multipliers to the 2010 base and
//!   produces 2010-2050 trajectories.
//! * [`pipeline`] wires everything to a configuration file and writes the
//!   output tables.

pub mod aggregation;
pub mod country;
pub mod format;
pub mod index;
pub mod ingest;
pub mod mapping;
pub mod pipeline;
pub mod projections;

pub use country::CountryId;
pub use index::{hdbi, FoodGroupSupply, GroupKcal, GroupRatios, HdbTargets, HdbiScore};
pub use mapping::{CommodityMap, FoodGroup};
