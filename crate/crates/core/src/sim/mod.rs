//! Desk-scale deformable-sheet environment for shape-servo episodes.

mod scenario;
mod sheet;
mod trial;

pub use scenario::{
    generate_dataset, make_goal, sample_training_action, sample_training_geometry, Goal, GraspAction, Scenario,
    ScenarioKind,
};
pub use sheet::{
    apply_action, sense_point_cloud, sense_with_seeds, DeformableSheet, SensorConfig, SheetGeometry,
    MAX_STEP_TRANSLATION,
};
pub use trial::{
    run_bimanual_trial, run_trial, SimConfig, StepRecord, Termination, TrialRecord, TRIAL_SCHEMA_VERSION,
};
