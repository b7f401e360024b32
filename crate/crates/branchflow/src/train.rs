//! Residual loss over Hamilton's equations, the Adam optimizer, multi-head
//! base training, and frozen-base transfer fine-tuning.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientMap, GradientTape, ParameterStore};
use crate::dynamics::InitialCondition;
use crate::error::{Error, Result};
use crate::model::{HeadInit, MultiHeadNetwork};
use crate::potential::RandomPotential;

/// Fixed grid size used for reported losses, so curves are comparable across
/// sampling policies.
pub const EVAL_GRID: usize = 200;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampling {
    FixedGrid,
    UniformResample { seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::UniformResample { seed: 0 }
    }
}

fn default_epochs() -> usize {
    10_000
}
fn default_collocation() -> usize {
    100
}
fn default_t_end() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    1e-3
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_collocation")]
    pub collocation: usize,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamParams,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub loss_threshold: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: default_epochs(),
            collocation: default_collocation(),
            t_end: default_t_end(),
            learning_rate: default_lr(),
            adam: AdamParams::default(),
            sampling: Sampling::default(),
            loss_threshold: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.collocation < 1 {
            return Err(Error::Config("collocation count must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.t_end <= 0.0 {
            return Err(Error::Config("t_end must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingReport {
    pub loss_curve: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub epochs_per_second: f64,
    pub final_loss: f64,
    pub stopped_epoch: usize,
}

impl TrainingReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The four Hamilton residuals at one collocation time for one head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

impl ResidualSample {
    pub fn to_array(self) -> [f64; 4] {
        [self.r1, self.r2, self.r3, self.r4]
    }
}

/// Training failure carrying the partial report accumulated up to the
/// failing epoch.
#[derive(Debug)]
pub struct TrainFailure {
    pub epoch: usize,
    pub partial: TrainingReport,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training diverged at epoch {}", self.epoch)
    }
}

impl std::error::Error for TrainFailure {}

pub type TrainResult = std::result::Result<TrainingReport, TrainFailure>;

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Default)]
pub struct AdamState {
    moments: HashMap<String, (Array2<f64>, Array2<f64>)>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update over every non-frozen tensor that has a
/// gradient. Frozen tensors are skipped entirely.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &GradientMap,
    state: &mut AdamState,
    lr: f64,
    hp: AdamParams,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for tensor in params.iter_mut() {
        if tensor.frozen {
            continue;
        }
        let Some(g) = grads.get(&tensor.name) else {
            continue;
        };
        if g.dim() != tensor.data.dim() {
            return Err(Error::ShapeMismatch(format!(
                "adam: grad {:?} vs param {:?} for {:?}",
                g.dim(),
                tensor.data.dim(),
                tensor.name
            )));
        }
        let (m, v) = state
            .moments
            .entry(tensor.name.clone())
            .or_insert_with(|| (Array2::zeros(g.dim()), Array2::zeros(g.dim())));
        azip_update(m, v, g, hp);
        for ((p, m), v) in tensor.data.iter_mut().zip(m.iter()).zip(v.iter()) {
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

fn azip_update(m: &mut Array2<f64>, v: &mut Array2<f64>, g: &Array2<f64>, hp: AdamParams) {
    for ((m, v), g) in m.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
    }
}

// ---------------------------------------------------------------------------
// Residuals and loss

/// Potential gradient and Hessian at the (x, y) columns of a state batch.
pub fn potential_derivs(
    potential: &RandomPotential,
    state_values: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let n = state_values.nrows();
    let mut grad = Array2::zeros((n, 2));
    let mut hess = Array2::zeros((n, 3));
    for i in 0..n {
        let pos = [state_values[(i, 0)], state_values[(i, 1)]];
        let g = potential.grad(pos);
        let h = potential.hessian(pos);
        grad[(i, 0)] = g[0];
        grad[(i, 1)] = g[1];
        hess[(i, 0)] = h[0];
        hess[(i, 1)] = h[1];
        hess[(i, 2)] = h[2];
    }
    (grad, hess)
}

fn residual_values(
    values: &Array2<f64>,
    tangents: &Array2<f64>,
    potential: &RandomPotential,
) -> Array2<f64> {
    let n = values.nrows();
    let mut r = Array2::zeros((n, 4));
    for i in 0..n {
        let g = potential.grad([values[(i, 0)], values[(i, 1)]]);
        r[(i, 0)] = tangents[(i, 0)] - values[(i, 2)];
        r[(i, 1)] = tangents[(i, 1)] - values[(i, 3)];
        r[(i, 2)] = tangents[(i, 2)] + g[0];
        r[(i, 3)] = tangents[(i, 3)] + g[1];
    }
    r
}

/// The four residuals of Hamilton's equations for one head at each time.
pub fn residual_batch(
    net: &MultiHeadNetwork,
    head: usize,
    potential: &RandomPotential,
    times: &Array1<f64>,
) -> Result<Vec<ResidualSample>> {
    let base = net.eval_base(times);
    let (values, tangents) = net.eval_head_reparam(&base, head, times);
    let r = residual_values(&values, &tangents, potential);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { epoch: 0 });
    }
    Ok((0..r.nrows())
        .map(|i| ResidualSample {
            r1: r[(i, 0)],
            r2: r[(i, 1)],
            r3: r[(i, 2)],
            r4: r[(i, 3)],
        })
        .collect())
}

/// Mean over heads, times, and the four components of squared residuals.
pub fn pinn_loss(
    net: &MultiHeadNetwork,
    head_set: &[usize],
    potential: &RandomPotential,
    times: &Array1<f64>,
) -> Result<f64> {
    if head_set.is_empty() {
        return Err(Error::Config("pinn_loss: empty head set".into()));
    }
    let base = net.eval_base(times);
    let mut total = 0.0;
    for &head in head_set {
        let (values, tangents) = net.eval_head_reparam(&base, head, times);
        let r = residual_values(&values, &tangents, potential);
        total += r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    }
    Ok(total / head_set.len() as f64)
}

pub fn eval_grid(t_end: f64, points: usize) -> Array1<f64> {
    Array1::from_shape_fn(points, |i| t_end * i as f64 / (points - 1) as f64)
}

// ---------------------------------------------------------------------------
// Training loops

fn sample_times(cfg: &TrainingConfig, rng: &mut ChaCha8Rng) -> Array1<f64> {
    match cfg.sampling {
        Sampling::FixedGrid => eval_grid(cfg.t_end, cfg.collocation),
        Sampling::UniformResample { .. } => {
            Array1::from_shape_fn(cfg.collocation, |_| rng.random_range(0.0..cfg.t_end))
        }
    }
}

fn sampling_rng(cfg: &TrainingConfig) -> ChaCha8Rng {
    let seed = match cfg.sampling {
        Sampling::FixedGrid => 0,
        Sampling::UniformResample { seed } => seed,
    };
    ChaCha8Rng::seed_from_u64(seed)
}

/// One optimization step of the residual loss for the given heads: record the
/// forward pass, backpropagate, apply Adam. Returns the training loss value.
pub fn ffnn_step(
    net: &mut MultiHeadNetwork,
    heads: &[usize],
    potential: &RandomPotential,
    times: &Array1<f64>,
    opt: &mut AdamState,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let mut tape = GradientTape::new();
    let base = net.tape_base(&mut tape, times)?;
    let mut losses = Vec::with_capacity(heads.len());
    for &head in heads {
        let raw = net.tape_head(&mut tape, base, head)?;
        let rep = net.tape_reparam(&mut tape, raw, head, times)?;
        let (grad_v, hess_v) = potential_derivs(potential, &tape.batch(rep).values);
        let res = tape.residual(rep, &grad_v, &hess_v)?;
        losses.push(tape.mean_square(res)?);
    }
    let loss = tape.mean_scalars(&losses)?;
    let value = tape.scalar_value(loss);
    if !value.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let grads = tape.backward(&net.params, loss)?;
    adam_step(&mut net.params, &grads, opt, cfg.learning_rate, cfg.adam)?;
    Ok(value)
}

fn run_training(
    net: &mut MultiHeadNetwork,
    heads: &[usize],
    potential: &RandomPotential,
    cfg: &TrainingConfig,
) -> TrainResult {
    cfg.validate().map_err(|e| TrainFailure {
        epoch: 0,
        partial: empty_report(&e),
    })?;
    let started = Instant::now();
    let mut rng = sampling_rng(cfg);
    let mut opt = AdamState::new();
    let grid = eval_grid(cfg.t_end, EVAL_GRID);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let times = sample_times(cfg, &mut rng);
        match ffnn_step(net, heads, potential, &times, &mut opt, cfg) {
            Ok(_) => {}
            Err(_) => {
                return Err(TrainFailure {
                    epoch,
                    partial: finish_report(curve, started, f64::INFINITY),
                });
            }
        }
        let eval_loss = pinn_loss(net, heads, potential, &grid).unwrap_or(f64::INFINITY);
        if !eval_loss.is_finite() {
            return Err(TrainFailure {
                epoch,
                partial: finish_report(curve, started, f64::INFINITY),
            });
        }
        curve.push(eval_loss);
        if let Some(tau) = cfg.loss_threshold {
            if eval_loss <= tau {
                break;
            }
        }
    }
    let final_loss = curve
        .last()
        .copied()
        .unwrap_or_else(|| pinn_loss(net, heads, potential, &grid).unwrap_or(f64::INFINITY));
    Ok(finish_report(curve, started, final_loss))
}

fn empty_report(err: &Error) -> TrainingReport {
    let _ = err;
    TrainingReport {
        loss_curve: Vec::new(),
        wall_clock_seconds: 0.0,
        epochs_per_second: 0.0,
        final_loss: f64::INFINITY,
        stopped_epoch: 0,
    }
}

fn finish_report(curve: Vec<f64>, started: Instant, final_loss: f64) -> TrainingReport {
    let wall = started.elapsed().as_secs_f64();
    let stopped = curve.len();
    TrainingReport {
        epochs_per_second: if wall > 0.0 { stopped as f64 / wall } else { 0.0 },
        loss_curve: curve,
        wall_clock_seconds: wall,
        final_loss,
        stopped_epoch: stopped,
    }
}

/// Run the feed-forward training loop over an explicit head subset; used by
/// benchmarking, where the head selection is part of the scenario.
pub fn run_training_for(
    net: &mut MultiHeadNetwork,
    heads: &[usize],
    potential: &RandomPotential,
    cfg: &TrainingConfig,
) -> TrainResult {
    run_training(net, heads, potential, cfg)
}

/// Train base and heads jointly on all bound initial conditions.
pub fn train_base(
    net: &mut MultiHeadNetwork,
    potential: &RandomPotential,
    cfg: &TrainingConfig,
) -> TrainResult {
    let heads: Vec<usize> = (0..net.num_heads()).collect();
    run_training(net, &heads, potential, cfg)
}

/// Outcome of fine-tuning one transfer head.
#[derive(Debug)]
pub struct TransferOutcome {
    pub head: usize,
    pub ic: InitialCondition,
    pub report: TrainingReport,
    pub diverged_at: Option<usize>,
}

/// Attach and fine-tune one head per new initial condition on a frozen base.
/// Per-head divergence is recorded and the remaining heads proceed. The base
/// tensors are verified bit-identical before and after.
pub fn transfer_train(
    net: &mut MultiHeadNetwork,
    new_ics: &[InitialCondition],
    potential: &RandomPotential,
    cfg: &TrainingConfig,
    init: HeadInit,
) -> Result<Vec<TransferOutcome>> {
    if !net.frozen_base() {
        return Err(Error::Config(
            "transfer_train requires a frozen base network".into(),
        ));
    }
    let checksum = net.base_checksum();
    let mut outcomes = Vec::with_capacity(new_ics.len());
    for (i, &ic) in new_ics.iter().enumerate() {
        let head = net.attach_head(ic, init)?;
        // independent per-head sampling stream
        let mut head_cfg = *cfg;
        if let Sampling::UniformResample { seed } = cfg.sampling {
            head_cfg.sampling = Sampling::UniformResample {
                seed: seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            };
        }
        match run_training(net, &[head], potential, &head_cfg) {
            Ok(report) => outcomes.push(TransferOutcome {
                head,
                ic,
                report,
                diverged_at: None,
            }),
            Err(failure) => outcomes.push(TransferOutcome {
                head,
                ic,
                report: failure.partial,
                diverged_at: Some(failure.epoch),
            }),
        }
    }
    if net.base_checksum() != checksum {
        return Err(Error::Config(
            "frozen base tensors changed during transfer".into(),
        ));
    }
    Ok(outcomes)
}
