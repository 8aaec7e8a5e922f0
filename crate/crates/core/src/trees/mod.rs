//! CART trees and the tree ensembles built on them.

mod cart;
mod ensemble;
mod sexpr;

pub use cart::{fit_cart, Cart, CartControls, CartNode, Task};
pub use ensemble::{
    fit_adaboost, fit_bagging, fit_gradboost, fit_random_forest, AdaBoostConfig, BagConfig, EnsembleKind, EnsembleModel, ForestConfig,
    GradBoostConfig,
};
