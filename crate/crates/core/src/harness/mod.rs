//! Scenario files, figure presets, parameter sweeps and the validation suite.

pub mod config;
pub mod presets;
pub mod sweep;
pub mod validate;

pub use config::{load_config, parse_config};
pub use presets::{figure_preset, FIGURE_NAMES};
pub use sweep::{
    db_to_linear, dbm_to_watts, design_params, disagreement_flag, linear_to_db, point_seed,
    pool_seed, run_point, run_sweep, run_sweeps, run_sweeps_with_threads, McPhases, Modes,
    SweepCache, SweepResult, SweepRow, SweepSpec, SweptVariable, SCHEMA_VERSION,
};
pub use validate::{
    check_clean_scaling, check_gamma_identities, check_hyp2f1_identities, check_hyp2f1_paths,
    check_moment_oracle, check_sampler_covariance, check_sop_engines, check_von_mises, validate,
    validate_with, CheckResult, Hyp2f1Fn, ValidateOptions, ValidationReport,
};
