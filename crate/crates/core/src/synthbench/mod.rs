//! Synthetic benchmark: a latent world, teachers that each see part of it,
//! downstream tasks over the latents and experiment runners.

mod experiment;
mod fixture;
mod teachers;
mod world;

pub use experiment::{
    empirical_disagreement, run_comparison, run_fixture, CellOutcome, ComparisonReport, DisagreementReport,
    ExperimentCell,
};
pub use fixture::{preset, standard_cells, FixtureSpec, PRESETS};
pub use teachers::{generate_teachers, TeacherSpec, ViewKind};
pub use world::{generate_world, RandomView, SynthTaskKind, SynthWorld, TaskLabels, WorldSpec};
