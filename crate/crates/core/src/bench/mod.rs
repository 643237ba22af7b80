//! The experimental harness: k-fold cross-validation, the exhaustive sweep
//! over common augmentation combinations, specific-augmentation follow-ups
//! and the regression of fold scores on the transforms used.

pub mod cv;
pub mod kfold;
pub mod ledger;
pub mod regress;
pub mod sweep;

pub use cv::{
    run_cv, run_fold, run_jobs, shuffled_order, CvConfig, CvSpec, Dataset, EpochRecord,
    FoldOutcome, FoldReport, FoldResult, Selection,
};
pub use kfold::{kfold_split, FoldPlan};
pub use ledger::RunLedger;
pub use regress::{ols, ols_regress, t_two_sided_p, Coefficient, OlsFit, RegressionReport};
pub use sweep::{
    combination_spec, run_specific_eda, specific_spec, sweep_common_eda, Specific, SweepRecord,
    SweepResult, COMBINATIONS,
};
