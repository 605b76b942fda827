//! Shipped bilevel problem instances.

pub mod auc;
pub mod dataset;
pub mod hyperrep;
pub mod quadratic;

pub use auc::{make_auc_bilevel, AUCBilevel, AUCBilevelSpec};
pub use dataset::{
    auc_metric, generate_imbalanced_dataset, generate_imbalanced_dataset_with, AUCDataset,
};
pub use hyperrep::{make_hyperrep_bilevel, HyperRepBilevel, HyperRepSpec, Representation, TaskLoss};
pub use quadratic::{
    make_quadratic_bilevel, quadratic_exact_hypergradient, QuadraticBilevel, QuadraticBilevelSpec,
    QuadraticParams,
};
