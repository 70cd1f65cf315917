//! Seeded toy regression `y = sin(x)` on `[−π, π]` and its SGD training loop.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use dbprop::{loss_and_v, Checkpoint, GradientSet, LossKind, Network, OpCounter, Tensor};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
}

impl Sample {
    pub fn input(&self) -> Tensor {
        Tensor::vector(vec![self.x])
    }

    pub fn label(&self) -> Tensor {
        Tensor::vector(vec![self.y])
    }
}

pub fn dataset(cfg: &ExperimentConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = Uniform::new_inclusive(-PI, PI).expect("finite range");
    (0..cfg.n)
        .map(|_| {
            let x = dist.sample(&mut rng);
            Sample { x, y: cfg.target.eval(x) }
        })
        .collect()
}

/// Index of the sample whose input is closest to `point` (first on ties).
pub fn nearest_sample(data: &[Sample], point: f64) -> usize {
    let mut best = 0;
    for (i, s) in data.iter().enumerate() {
        if (s.x - point).abs() < (data[best].x - point).abs() {
            best = i;
        }
    }
    best
}

pub fn predict(net: &Network, x: f64) -> Result<f64> {
    Ok(net.forward(&Tensor::vector(vec![x]), &OpCounter::new())?.output().data()[0])
}

/// Mean of `(x_L − y)²` over the dataset.
pub fn mse(net: &Network, data: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let d = predict(net, s.x)? - s.y;
        total += d * d;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch SGD with momentum on the squared loss.
///
/// Per step: `g = (1/|B|) Σ ∇ℓ`, `u ← μu + g`, `Θ ← Θ − αu`. Batches come
/// from a seeded reshuffle each epoch. The training MSE is checked every
/// 50 epochs to stop a diverged run.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let data = dataset(cfg);
    let mut net = Network::from_config(&cfg.network)?;
    let mut velocity = GradientSet::zeros(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let counter = OpCounter::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let mut g = GradientSet::zeros(&net);
            let w = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let trace = net.forward(&data[i].input(), &counter)?;
                let (_, v) = loss_and_v(LossKind::Squared, trace.output(), &data[i].label())?;
                let (gi, _) = net.standard_backprop(&trace, &v, &counter)?;
                g.axpy(w, &gi);
            }
            let mut next = velocity.scale(cfg.momentum);
            next.axpy(1.0, &g);
            velocity = next;
            net.axpy_params(-cfg.learning_rate, &velocity);
        }
        if (epoch + 1) % 50 == 0 {
            let m = mse(&net, &data)?;
            if !m.is_finite() {
                bail!("training diverged at epoch {} (seed {}); try another seed", epoch + 1, cfg.seed);
            }
        }
    }
    let train_mse = mse(&net, &data)?;
    Ok(TrainedModel {
        experiment: cfg.clone(),
        checkpoint: Checkpoint::new(cfg.network.clone(), &net),
        train_mse,
        epochs_run: cfg.epochs,
    })
}

/// Like [`train`], but an MSE above the target is an error.
pub fn train_to_target(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let model = train(cfg)?;
    if !(model.train_mse <= cfg.mse_target) {
        bail!(
            "training MSE {:.6} after {} epochs exceeds the target {} (seed {}); \
             retry with another --seed or more epochs",
            model.train_mse,
            model.epochs_run,
            cfg.mse_target,
            cfg.seed
        );
    }
    Ok(model)
}
