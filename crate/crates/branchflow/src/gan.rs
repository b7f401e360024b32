//! Adversarial training of the residual solver: equation residuals are
//! labeled "fake", zero-centered Gaussian noise "real", and a small
//! discriminator learns to separate them while the solution network learns
//! to make residuals indistinguishable from noise.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::GradientTape;
use crate::error::{Error, Result};
use crate::model::MultiHeadNetwork;
use crate::potential::RandomPotential;
use crate::train::{
    adam_step, eval_grid, pinn_loss, potential_derivs, AdamState, TrainFailure, TrainResult,
    TrainingConfig, TrainingReport, EVAL_GRID,
};

fn default_noise_std() -> f64 {
    1e-2
}
fn default_disc_layers() -> Vec<usize> {
    vec![32, 32, 32]
}
fn default_disc_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeqganConfig {
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_disc_layers")]
    pub discriminator_layers: Vec<usize>,
    #[serde(default = "default_disc_lr")]
    pub generator_lr: f64,
    #[serde(default = "default_disc_lr")]
    pub discriminator_lr: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DeqganConfig {
    fn default() -> Self {
        DeqganConfig {
            noise_std: default_noise_std(),
            discriminator_layers: default_disc_layers(),
            generator_lr: default_disc_lr(),
            discriminator_lr: default_disc_lr(),
            seed: 0,
        }
    }
}

impl DeqganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std <= 0.0 {
            return Err(Error::Config("noise_std must be positive".into()));
        }
        Ok(())
    }
}

const LEAKY_SLOPE: f64 = 0.2;

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_d(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Dense classifier over single 4-component residual samples, leaky-rectified
/// hidden layers and a single logit output.
pub struct Discriminator {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array2<f64>>,
    opt_m: Vec<(Array2<f64>, Array2<f64>)>,
    opt_v: Vec<(Array2<f64>, Array2<f64>)>,
    step: u64,
}

struct DiscForward {
    /// pre-activations per layer, plus the layer inputs
    pre: Vec<Array2<f64>>,
    inputs: Vec<Array2<f64>>,
    /// final logits, one per sample
    logits: Array1<f64>,
}

impl Discriminator {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![4];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (rows, cols) = (pair[0], pair[1]);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            weights.push(Array2::from_shape_fn((rows, cols), |_| {
                rand::Rng::random_range(&mut rng, -limit..limit)
            }));
            biases.push(Array2::zeros((1, cols)));
        }
        let opt_m = weights
            .iter()
            .zip(&biases)
            .map(|(w, b)| (Array2::zeros(w.dim()), Array2::zeros(b.dim())))
            .collect();
        let opt_v = weights
            .iter()
            .zip(&biases)
            .map(|(w, b)| (Array2::zeros(w.dim()), Array2::zeros(b.dim())))
            .collect();
        Discriminator {
            weights,
            biases,
            opt_m,
            opt_v,
            step: 0,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> DiscForward {
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::new();
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            for mut row in z.rows_mut() {
                row += &b.row(0);
            }
            pre.push(z.clone());
            if l < last {
                h = z.mapv(leaky);
                inputs.push(h.clone());
            } else {
                h = z;
            }
        }
        let logits = Array1::from_iter(h.column(0).iter().copied());
        DiscForward { pre, inputs, logits }
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array1<f64> {
        self.forward(x).logits
    }

    /// Fraction of samples classified correctly at probability threshold 0.5
    /// (logit 0), with `real` labeled 1 and `fake` labeled 0.
    pub fn accuracy(&self, real: &Array2<f64>, fake: &Array2<f64>) -> f64 {
        let lr = self.logits(real);
        let lf = self.logits(fake);
        let correct = lr.iter().filter(|&&l| l > 0.0).count()
            + lf.iter().filter(|&&l| l <= 0.0).count();
        correct as f64 / (lr.len() + lf.len()) as f64
    }

    /// Backpropagate a per-sample gradient on the logits; returns the
    /// gradient with respect to the inputs and accumulates parameter grads.
    fn backward(
        &self,
        fwd: &DiscForward,
        dlogit: &Array1<f64>,
        param_grads: &mut Vec<(Array2<f64>, Array2<f64>)>,
    ) -> Array2<f64> {
        let n = dlogit.len();
        let mut delta = Array2::from_shape_fn((n, 1), |(i, _)| dlogit[i]);
        for l in (0..self.weights.len()).rev() {
            if l < self.weights.len() - 1 {
                // through the leaky rectifier of layer l
                let d = fwd.pre[l].mapv(leaky_d);
                delta = &delta * &d;
            }
            let gw = fwd.inputs[l].t().dot(&delta);
            let gb = delta
                .sum_axis(ndarray::Axis(0))
                .insert_axis(ndarray::Axis(0));
            param_grads[l].0 += &gw;
            param_grads[l].1 += &gb;
            delta = delta.dot(&self.weights[l].t());
        }
        delta
    }

    fn adam_update(
        &mut self,
        grads: &[(Array2<f64>, Array2<f64>)],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) {
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        fn update(
            p: &mut Array2<f64>,
            m: &mut Array2<f64>,
            v: &mut Array2<f64>,
            g: &Array2<f64>,
            lr: f64,
            beta1: f64,
            beta2: f64,
            eps: f64,
            bc1: f64,
            bc2: f64,
        ) {
            for ((p, (m, v)), g) in p.iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(g.iter())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
        for l in 0..self.weights.len() {
            update(
                &mut self.weights[l],
                &mut self.opt_m[l].0,
                &mut self.opt_v[l].0,
                &grads[l].0,
                lr,
                beta1,
                beta2,
                eps,
                bc1,
                bc2,
            );
            update(
                &mut self.biases[l],
                &mut self.opt_m[l].1,
                &mut self.opt_v[l].1,
                &grads[l].1,
                lr,
                beta1,
                beta2,
                eps,
                bc1,
                bc2,
            );
        }
    }

    fn zero_grads(&self) -> Vec<(Array2<f64>, Array2<f64>)> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| (Array2::zeros(w.dim()), Array2::zeros(b.dim())))
            .collect()
    }

    /// One discriminator step on the standard cross-entropy losses:
    /// softplus(-logit) for real samples, softplus(logit) for fakes.
    pub fn train_step(&mut self, real: &Array2<f64>, fake: &Array2<f64>, lr: f64) {
        let mut grads = self.zero_grads();
        let fr = self.forward(real);
        let n_real = fr.logits.len() as f64;
        // d softplus(-l)/dl = -sigmoid(-l)
        let d_real = fr.logits.mapv(|l| -sigmoid(-l) / n_real);
        self.backward(&fr, &d_real, &mut grads);
        let ff = self.forward(fake);
        let n_fake = ff.logits.len() as f64;
        let d_fake = ff.logits.mapv(|l| sigmoid(l) / n_fake);
        self.backward(&ff, &d_fake, &mut grads);
        self.adam_update(&grads, lr, 0.9, 0.999, 1e-8);
    }

    /// Gradient of the non-saturating generator loss mean(softplus(-logit))
    /// with respect to the fake inputs.
    pub fn generator_input_grad(&self, fake: &Array2<f64>) -> Array2<f64> {
        let fwd = self.forward(fake);
        let n = fwd.logits.len() as f64;
        let dlogit = fwd.logits.mapv(|l| -sigmoid(-l) / n);
        let mut sink = self.zero_grads();
        self.backward(&fwd, &dlogit, &mut sink)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Adversarial training loop. The reported loss curve records the mean
/// squared equation residual on the fixed evaluation grid, not the GAN
/// losses, so curves are directly comparable with the feed-forward trainer.
pub fn deqgan_train(
    net: &mut MultiHeadNetwork,
    potential: &RandomPotential,
    dcfg: &DeqganConfig,
    cfg: &TrainingConfig,
) -> TrainResult {
    let heads: Vec<usize> = (0..net.num_heads()).collect();
    deqgan_train_heads(net, &heads, potential, dcfg, cfg)
}

/// Adversarial training restricted to a head subset, e.g. a single transfer
/// head on a frozen base.
pub fn deqgan_train_heads(
    net: &mut MultiHeadNetwork,
    heads: &[usize],
    potential: &RandomPotential,
    dcfg: &DeqganConfig,
    cfg: &TrainingConfig,
) -> TrainResult {
    let fail = |epoch, curve: Vec<f64>, started: Instant| TrainFailure {
        epoch,
        partial: report_from(curve, started),
    };
    if cfg.validate().and(dcfg.validate()).is_err() || heads.is_empty() {
        return Err(fail(0, Vec::new(), Instant::now()));
    }
    let started = Instant::now();
    let heads: Vec<usize> = heads.to_vec();
    let mut disc = Discriminator::new(&dcfg.discriminator_layers, dcfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed.wrapping_add(1));
    let mut sample_rng = match cfg.sampling {
        crate::train::Sampling::UniformResample { seed } => ChaCha8Rng::seed_from_u64(seed),
        crate::train::Sampling::FixedGrid => ChaCha8Rng::seed_from_u64(0),
    };
    let mut opt = AdamState::new();
    let grid = eval_grid(cfg.t_end, EVAL_GRID);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut noise_std = dcfg.noise_std;
    for epoch in 0..cfg.epochs {
        if epoch > 0 && epoch % 2000 == 0 {
            noise_std *= 0.5;
        }
        let times = match cfg.sampling {
            crate::train::Sampling::FixedGrid => eval_grid(cfg.t_end, cfg.collocation),
            crate::train::Sampling::UniformResample { .. } => Array1::from_shape_fn(
                cfg.collocation,
                |_| rand::Rng::random_range(&mut sample_rng, 0.0..cfg.t_end),
            ),
        };

        // record residuals for every head on one tape
        let mut tape = GradientTape::new();
        let base = match net.tape_base(&mut tape, &times) {
            Ok(id) => id,
            Err(_) => return Err(fail(epoch, curve, started)),
        };
        let mut residual_nodes = Vec::with_capacity(heads.len());
        for &head in &heads {
            let raw = net.tape_head(&mut tape, base, head).expect("head exists");
            let rep = net
                .tape_reparam(&mut tape, raw, head, &times)
                .expect("reparam");
            let (grad_v, hess_v) = potential_derivs(potential, &tape.batch(rep).values);
            let res = tape.residual(rep, &grad_v, &hess_v).expect("residual");
            residual_nodes.push(res);
        }
        let n_total = heads.len() * times.len();
        let mut fake = Array2::zeros((n_total, 4));
        for (h, &node) in residual_nodes.iter().enumerate() {
            let batch = tape.batch(node);
            for i in 0..times.len() {
                for j in 0..4 {
                    fake[(h * times.len() + i, j)] = batch.values[(i, j)];
                }
            }
        }
        if fake.iter().any(|v| !v.is_finite()) {
            return Err(fail(epoch, curve, started));
        }

        // discriminator step: residuals are fake, zero-centered noise is real
        let normal = Normal::new(0.0, noise_std).expect("positive std");
        let real = Array2::from_shape_fn((n_total, 4), |_| normal.sample(&mut rng));
        disc.train_step(&real, &fake, dcfg.discriminator_lr);

        // generator step: push residuals toward what the discriminator
        // accepts as noise
        let input_grad = disc.generator_input_grad(&fake);
        let mut seeds = Vec::with_capacity(residual_nodes.len());
        for (h, &node) in residual_nodes.iter().enumerate() {
            let mut seed = Array2::zeros((times.len(), 4));
            for i in 0..times.len() {
                for j in 0..4 {
                    seed[(i, j)] = input_grad[(h * times.len() + i, j)];
                }
            }
            seeds.push((node, seed));
        }
        let grads = match tape.backward_seeded(&net.params, &seeds) {
            Ok(g) => g,
            Err(_) => return Err(fail(epoch, curve, started)),
        };
        if adam_step(&mut net.params, &grads, &mut opt, dcfg.generator_lr, cfg.adam).is_err() {
            return Err(fail(epoch, curve, started));
        }

        let eval_loss = pinn_loss(net, &heads, potential, &grid).unwrap_or(f64::INFINITY);
        if !eval_loss.is_finite() {
            return Err(fail(epoch, curve, started));
        }
        curve.push(eval_loss);
        if let Some(tau) = cfg.loss_threshold {
            if eval_loss <= tau {
                break;
            }
        }
    }
    Ok(report_from(curve, started))
}

fn report_from(curve: Vec<f64>, started: Instant) -> TrainingReport {
    let wall = started.elapsed().as_secs_f64();
    let stopped = curve.len();
    TrainingReport {
        epochs_per_second: if wall > 0.0 { stopped as f64 / wall } else { 0.0 },
        final_loss: curve.last().copied().unwrap_or(f64::INFINITY),
        loss_curve: curve,
        wall_clock_seconds: wall,
        stopped_epoch: stopped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn discriminator_separates_far_apart_inputs() {
        // residuals pinned at 10 vs noise of std 1e-3: accuracy > 0.99
        // within 200 discriminator-only steps
        let mut disc = Discriminator::new(&[32, 32, 32], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1e-3).unwrap();
        let fake = Array2::from_elem((64, 4), 10.0);
        for _ in 0..200 {
            let real = Array2::from_shape_fn((64, 4), |_| normal.sample(&mut rng));
            disc.train_step(&real, &fake, 1e-2);
        }
        let real = Array2::from_shape_fn((256, 4), |_| normal.sample(&mut rng));
        let fake = Array2::from_elem((256, 4), 10.0);
        assert!(disc.accuracy(&real, &fake) > 0.99);
    }

    #[test]
    fn discriminator_stays_confused_on_matching_distributions() {
        // zero residuals vs noise whose std matches the residual scale:
        // nothing to separate, accuracy stays near chance
        let mut disc = Discriminator::new(&[32, 32, 32], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = Normal::new(0.0, 1e-12).unwrap();
        let fake = Array2::zeros((64, 4));
        let mut accs = Vec::new();
        for _ in 0..200 {
            let real = Array2::from_shape_fn((64, 4), |_| normal.sample(&mut rng));
            disc.train_step(&real, &fake, 1e-3);
            accs.push(disc.accuracy(&real, &fake));
        }
        let mean_acc = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean_acc - 0.5).abs() <= 0.1, "mean accuracy {mean_acc}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let disc = Discriminator::new(&[8, 8], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let analytic = disc.generator_input_grad(&x);
        let loss = |x: &Array2<f64>| {
            let l = disc.logits(x);
            l.iter().map(|&l| (1.0 + (-l).exp()).ln()).sum::<f64>() / l.len() as f64
        };
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, j)] += h;
                xm[(i, j)] -= h;
                let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
                assert!(
                    (analytic[(i, j)] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                    "({i},{j}): {} vs {}",
                    analytic[(i, j)],
                    fd
                );
            }
        }
    }
}
