//! Flare / no-flare classification with an RBF-kernel SVM, skill scores and
//! the baseline-versus-augmented experiment.

pub mod experiment;
pub mod scores;
pub mod svm;

pub use experiment::{
    featurize, run_experiment, Arm, ArmSummary, ExperimentReport, ExperimentResult, FeatureMode,
};
pub use scores::ConfusionMatrix;
pub use svm::{kkt_max_violation, rbf, svm_predict, svm_train, SvmConfig, SvmModel};
