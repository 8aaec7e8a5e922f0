//! Nearest-neighbour and support-vector learners.

mod knn;
mod smo;
mod svm;

pub use knn::{fit_knn, knn_classify, KnnModel};
pub use svm::{fit_svc, fit_svm_classifier, fit_svr, svm_predict, Kernel, SvmConfig, SvmModel, SvmTask};
