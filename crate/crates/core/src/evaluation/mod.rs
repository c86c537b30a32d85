//! Analogy solving, relation classification, static-vector and PMI
//! baselines, and nearest-neighbor queries.

mod analogy;
mod classifier;
mod compose;
mod f1;
mod neighbors;
mod pmi;
mod report;

pub use analogy::{argmax_first, cosine, evaluate_analogy, solve_analogy, AnalogyResult};
pub use classifier::{
    classifier_grid, fit_mlp, train_relation_classifier, ClassifierSpec, LabeledVectors, Mlp, MlpConfig,
    TrainedClassifier, HIDDEN_SIZES, LEARNING_RATES,
};
pub use compose::{compose_all, compose_static, Component, ComposeMethod, StaticVectors};
pub use f1::{f1_scores, f1_scores_for, ClassF1, F1Report};
pub use neighbors::{nearest_neighbors, nearest_neighbors_of, Neighbor, Neighbors};
pub use pmi::{pmi_solve, CorpusCounts, DEFAULT_WINDOW};
pub use report::{EvalReport, EvalResult, REPORT_FORMAT, REPORT_VERSION};
