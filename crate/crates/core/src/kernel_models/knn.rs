use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Design, ScaleParams};

/// K-nearest-neighbour classifier over min-max scaled predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub scaled_train: Design,
    pub scale_params: ScaleParams,
    pub labels: Vec<u8>,
}

/// Stores the training rows scaled to [0, 1] on their own range.
pub fn fit_knn(design: &Design, labels: &[u8], k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::BadParams("k must be >= 1".into()));
    }
    if design.n_rows() == 0 {
        return Err(Error::EmptyTrain);
    }
    if labels.len() != design.n_rows() {
        return Err(Error::LengthMismatch { left: design.n_rows(), right: labels.len() });
    }
    let scale_params = ScaleParams::fit(design)?;
    Ok(KnnModel {
        k,
        scaled_train: scale_params.apply(design),
        scale_params,
        labels: labels.to_vec(),
    })
}

impl KnnModel {
    /// Indices of the k nearest training rows to an already-scaled query,
    /// nearest first; equal distances keep the lower row index first.
    fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .scaled_train
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Share of class-1 labels among the neighbours of each query row.
    /// Queries are given on the raw scale and scaled with the training
    /// parameters here.
    pub fn predict_scores(&self, query: &Design) -> Result<Vec<f64>> {
        let sub = query.select_names(&self.scaled_train.names)?;
        let scaled = self.scale_params.apply(&sub);
        Ok(scaled
            .rows
            .iter()
            .map(|q| {
                let nn = self.neighbours(q);
                nn.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nn.len() as f64
            })
            .collect())
    }

    /// Majority label; an even split goes to class 0.
    pub fn classify(&self, query: &Design) -> Result<Vec<u8>> {
        Ok(self.predict_scores(query)?.into_iter().map(|s| u8::from(s > 0.5)).collect())
    }
}

pub fn knn_classify(model: &KnnModel, query: &Design) -> Result<Vec<u8>> {
    model.classify(query)
}
