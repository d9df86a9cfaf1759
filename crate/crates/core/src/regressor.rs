//! Correlation regression from coarse-detection features to zoom-in gain.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::Correspondence;
use crate::nn::{Gradients, Layer, Network, Tensor};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig { hidden: 64, epochs: 60, learning_rate: 0.05, batch_size: 32, seed: 11 }
    }
}

/// Dense `F → H → relu → 1` regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRegressor {
    net: Network,
    feature_dim: usize,
    /// Training-set MSE after each epoch.
    pub mse_curve: Vec<f64>,
}

impl GainRegressor {
    pub fn new(feature_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let layers = vec![
            Layer::Dense { inputs: feature_dim, outputs: hidden },
            Layer::Relu,
            Layer::Dense { inputs: hidden, outputs: 1 },
        ];
        let net = Network::new(&[feature_dim], layers, &mut seed::stage_rng(seed, "regressor-init"))?;
        Ok(GainRegressor { net, feature_dim, mse_curve: Vec::new() })
    }

    /// Wraps a loaded network; it must map `[F]` to a single output.
    pub fn from_network(net: Network) -> Result<Self> {
        if net.input_shape().len() != 1 || net.output_shape().iter().product::<usize>() != 1 {
            return Err(Error::Config(format!(
                "gain regressor must map [F] to one value, got {:?} -> {:?}",
                net.input_shape(),
                net.output_shape()
            )));
        }
        let feature_dim = net.input_shape()[0];
        Ok(GainRegressor { net, feature_dim, mse_curve: Vec::new() })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.mse_curve.last().copied()
    }

    pub fn predict_gain(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.feature_dim {
            return Err(Error::Dimension { expected: self.feature_dim, got: feature.len() });
        }
        Ok(self.net.predict(&Tensor::from_vec(feature.to_vec()))?.data()[0])
    }

    pub fn mse(&self, data: &[(Vec<f64>, f64)]) -> Result<f64> {
        let mut total = 0.0;
        for (f, t) in data {
            total += (self.predict_gain(f)? - t).powi(2);
        }
        Ok(total / data.len().max(1) as f64)
    }
}

/// Fits the regressor to `(feature, target)` pairs by minibatch SGD on squared error.
pub fn train_on_pairs(pairs: &[(Vec<f64>, f64)], config: &RegressorConfig) -> Result<GainRegressor> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::EmptyData);
    };
    let dim = first.len();
    if let Some((f, _)) = pairs.iter().find(|(f, _)| f.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: f.len() });
    }
    if config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::Config("regressor batch_size and hidden must be positive".into()));
    }
    let mut reg = GainRegressor::new(dim, config.hidden, config.seed)?;
    let mut rng = seed::stage_rng(config.seed, "regressor-shuffle");
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut acc = Gradients::zeros_like(&reg.net);
            for &i in batch {
                let (f, target) = &pairs[i];
                let (y, trace) = reg.net.forward(&Tensor::from_vec(f.clone()))?;
                let residual = y.data()[0] - target;
                acc.accumulate(&reg.net.backward(&trace, &Tensor::from_vec(vec![residual]))?);
            }
            acc.scale(1.0 / batch.len() as f64);
            reg.net.sgd_step(&acc.params, config.learning_rate)?;
        }
        let mse = reg.mse(pairs)?;
        if !mse.is_finite() {
            return Err(Error::Divergence(format!("regressor loss became {mse} at epoch {epoch}")));
        }
        reg.mse_curve.push(mse);
    }
    Ok(reg)
}

/// Trains on coarse features against their gain targets.
pub fn train_regressor(data: &[Correspondence], config: &RegressorConfig) -> Result<GainRegressor> {
    let pairs: Vec<(Vec<f64>, f64)> = data.iter().map(|c| (c.coarse.feature.clone(), c.gain_target)).collect();
    train_on_pairs(&pairs, config)
}
