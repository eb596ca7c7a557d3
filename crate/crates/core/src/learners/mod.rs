//! Supervised learners shared by the discriminator and the utility evaluation.

mod gbdt;
mod linear;

pub use gbdt::{BoostedTrees, Loss, RegressionTree, TreeNode, TreeParams};
pub use linear::{LogisticParams, LogisticRegression, RidgeRegression};
