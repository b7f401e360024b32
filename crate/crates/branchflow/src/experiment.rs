//! Experiment orchestration: the JSON config behind the CLI, artifact
//! layout, oracle comparison, and the implementations of every subcommand.
//!
//! Commands communicate failure class through [`CmdError`]: usage/input
//! problems map to exit code 2, numerical divergence to exit code 3.

use crate::dynamics::{
    hamiltonian_energy, rk4_integrate, InitialCondition, PhaseState, Trajectory,
};
use crate::error::Error;
use crate::gan::{deqgan_train, DeqganConfig};
use crate::model::{Checkpoint, HeadInit, ModelConfig, MultiHeadNetwork};
use crate::plot::{plot_loss, plot_trajectories};
use crate::potential::{RandomPotential, Rect};
use crate::train::{
    eval_grid, pinn_loss, train_base, transfer_train, TrainingConfig, TrainingReport,
    EVAL_GRID,
};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Command failure with its CLI exit code.
#[derive(Debug)]
pub enum CmdError {
    /// Invalid configuration or missing/mismatched inputs → exit 2.
    Usage(String),
    /// Training or integration diverged → exit 3.
    Divergence(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Divergence(m) => m,
        }
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::IntegrationDiverged { .. } => {
                CmdError::Divergence(e.to_string())
            }
            other => CmdError::Usage(other.to_string()),
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

pub type CmdResult<T> = std::result::Result<T, CmdError>;

/// Where the potential comes from: an existing file or fresh sampling.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum PotentialSource {
    File { path: PathBuf },
    Sample {
        #[serde(default = "default_potential_seed")]
        seed: u64,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "Rect::unit")]
        rect: Rect,
    },
}

fn default_potential_seed() -> u64 {
    2954
}
fn default_k() -> usize {
    10
}
fn default_amplitude() -> f64 {
    0.1
}
fn default_sigma() -> f64 {
    0.1
}

impl Default for PotentialSource {
    fn default() -> Self {
        PotentialSource::Sample {
            seed: default_potential_seed(),
            k: default_k(),
            amplitude: default_amplitude(),
            sigma: default_sigma(),
            rect: Rect::UNIT,
        }
    }
}

/// Transfer initial conditions: an explicit list or an even spacing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum TransferIcs {
    List(Vec<f64>),
    Even { count: usize, min: f64, max: f64 },
}

impl Default for TransferIcs {
    fn default() -> Self {
        TransferIcs::Even {
            count: 100,
            min: 0.0,
            max: 1.0,
        }
    }
}

impl TransferIcs {
    pub fn resolve(&self) -> Vec<InitialCondition> {
        match self {
            TransferIcs::List(v) => v.iter().map(|&y0| InitialCondition::new(y0)).collect(),
            TransferIcs::Even { count, min, max } => {
                let n = *count;
                (0..n)
                    .map(|i| {
                        let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                        InitialCondition::new(min + f * (max - min))
                    })
                    .collect()
            }
        }
    }
}

fn default_base_ics() -> Vec<f64> {
    (0..11).map(|i| i as f64 * 0.1).collect()
}
fn default_dt() -> f64 {
    1e-3
}
fn default_resample_seed() -> u64 {
    1
}

/// Full experiment description, mirrored one-to-one by the JSON config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub potential: PotentialSource,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub deqgan: DeqganConfig,
    #[serde(default = "default_base_ics")]
    pub base_ics: Vec<f64>,
    pub transfer_ics: TransferIcs,
    /// Oracle integration step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Seed for resampling means in potential-transfer mode.
    #[serde(default = "default_resample_seed")]
    pub resample_seed: u64,
    /// Train adversarially instead of with the plain residual loss.
    pub gan: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            potential: PotentialSource::default(),
            // The reference run uses the sin time-basis with a boosted first
            // layer; plain fan-in tanh converges far slower on this problem.
            model: ModelConfig {
                activation: crate::autodiff::Activation::Sin,
                first_layer_scale: 40.0,
                ..ModelConfig::default()
            },
            training: TrainingConfig::default(),
            deqgan: DeqganConfig::default(),
            base_ics: default_base_ics(),
            transfer_ics: TransferIcs::default(),
            dt: default_dt(),
            resample_seed: default_resample_seed(),
            gan: false,
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| CmdError::Usage(format!("invalid config {}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CmdResult<()> {
        if self.base_ics.is_empty() {
            return Err(CmdError::Usage("base_ics must be non-empty".into()));
        }
        if self.transfer_ics.resolve().is_empty() {
            return Err(CmdError::Usage("transfer_ics must be non-empty".into()));
        }
        if !(self.dt > 0.0) {
            return Err(CmdError::Usage("dt must be positive".into()));
        }
        self.training.validate()?;
        self.deqgan.validate()?;
        Ok(())
    }

    pub fn base_ic_list(&self) -> Vec<InitialCondition> {
        self.base_ics.iter().map(|&y0| InitialCondition::new(y0)).collect()
    }

    /// Load or sample the training potential without writing anything.
    pub fn resolve_potential(&self) -> CmdResult<RandomPotential> {
        match &self.potential {
            PotentialSource::File { path } => Ok(RandomPotential::load(path).map_err(|e| {
                CmdError::Usage(format!("cannot load potential {}: {e}", path.display()))
            })?),
            PotentialSource::Sample {
                seed,
                k,
                amplitude,
                sigma,
                rect,
            } => Ok(RandomPotential::sample(*seed, *k, *amplitude, *sigma, *rect)?),
        }
    }
}

fn ensure_out(out: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CmdError::Usage(format!("cannot create {}: {e}", out.display())))
}

fn diverged(context: &str, epoch: usize) -> CmdError {
    CmdError::Divergence(format!("{context} diverged at epoch {epoch}"))
}

/// Evaluate one head of the network on `times` and package it as a
/// trajectory (the network output needs no integration).
pub fn network_trajectory(
    net: &MultiHeadNetwork,
    head: usize,
    times: &Array1<f64>,
) -> CmdResult<Trajectory> {
    let base = net.eval_base(times);
    let (values, _) = net.eval_head_reparam(&base, head, times);
    let states = (0..times.len())
        .map(|i| {
            PhaseState::new(
                values[[i, 0]],
                values[[i, 1]],
                values[[i, 2]],
                values[[i, 3]],
            )
        })
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// RK4 reference states linearly interpolated onto arbitrary query times.
pub fn oracle_states(
    potential: &RandomPotential,
    ic: InitialCondition,
    times: &Array1<f64>,
    dt: f64,
) -> CmdResult<Vec<PhaseState>> {
    let t_end = times.iter().fold(0.0f64, |a, &b| a.max(b)).max(dt);
    let traj = rk4_integrate(ic, potential, t_end, dt)?;
    let interp = |t: f64| -> PhaseState {
        let last = traj.times.len() - 1;
        let idx = traj.times.partition_point(|&u| u < t).min(last);
        if idx == 0 {
            return traj.states[0];
        }
        let (t0, t1) = (traj.times[idx - 1], traj.times[idx]);
        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        let (a, b) = (traj.states[idx - 1], traj.states[idx]);
        PhaseState::new(
            a.x + f * (b.x - a.x),
            a.y + f * (b.y - a.y),
            a.px + f * (b.px - a.px),
            a.py + f * (b.py - a.py),
        )
    };
    Ok(times.iter().map(|&t| interp(t)).collect())
}

/// Max absolute error per phase-space coordinate of `head` against a fresh
/// oracle run on the given grid.
pub fn head_max_errors(
    net: &MultiHeadNetwork,
    head: usize,
    potential: &RandomPotential,
    times: &Array1<f64>,
    dt: f64,
) -> CmdResult<[f64; 4]> {
    let pred = network_trajectory(net, head, times)?;
    let truth = oracle_states(potential, net.head_ic(head), times, dt)?;
    let mut errs = [0.0f64; 4];
    for (p, o) in pred.states.iter().zip(truth.iter()) {
        let (pa, oa) = (p.to_array(), o.to_array());
        for c in 0..4 {
            errs[c] = errs[c].max((pa[c] - oa[c]).abs());
        }
    }
    Ok(errs)
}

/// Per-head evaluation record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeadEval {
    pub y0: f64,
    /// Max |error| in x, y, px, py over the evaluation grid.
    pub max_errors: [f64; 4],
    pub final_residual: f64,
    /// Max |H(t) − H(0)| of the network trajectory.
    pub energy_drift: f64,
}

/// Full evaluation artifact written by `eval`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub heads: Vec<HeadEval>,
    pub grid_points: usize,
    pub t_end: f64,
    /// True when the requested grid extends beyond the training horizon.
    pub extrapolated: bool,
    pub potential_hash: String,
}

impl EvalSummary {
    pub fn save(&self, path: &Path) -> CmdResult<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(Error::from)?,
        )
        .map_err(|e| CmdError::Usage(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text).map_err(Error::from)?)
    }
}

/// Train the multi-head base network and persist checkpoint, potential and
/// report under `out`.
pub fn cmd_train_base(spec: &ExperimentSpec, out: &Path) -> CmdResult<()> {
    spec.validate()?;
    ensure_out(out)?;
    let potential = spec.resolve_potential()?;
    potential.save(&out.join("potential.json"))?;
    let ics = spec.base_ic_list();
    let mut net = MultiHeadNetwork::init(spec.model, &ics)?;
    let result = if spec.gan {
        deqgan_train(&mut net, &potential, &spec.deqgan, &spec.training)
    } else {
        train_base(&mut net, &potential, &spec.training)
    };
    let report = match result {
        Ok(report) => report,
        Err(failure) => {
            failure.partial.save(&out.join("report_base.json"))?;
            return Err(diverged("base training", failure.epoch));
        }
    };
    report.save(&out.join("report_base.json"))?;
    Checkpoint::save(
        &net,
        spec.training.t_end,
        &potential.content_hash(),
        &out.join("checkpoint.json"),
    )?;
    let grid = eval_grid(spec.training.t_end, EVAL_GRID);
    for head in 0..net.num_heads() {
        let traj = network_trajectory(&net, head, &grid)?;
        traj.save_csv(&out.join(format!("trajectory_base_{head:03}.csv")))?;
    }
    Ok(())
}

/// Train one fresh single-head network per transfer IC from scratch; the
/// baseline the transfer experiments are compared against.
pub fn cmd_classical(spec: &ExperimentSpec, out: &Path) -> CmdResult<()> {
    spec.validate()?;
    ensure_out(out)?;
    let potential = spec.resolve_potential()?;
    potential.save(&out.join("potential.json"))?;
    let grid = eval_grid(spec.training.t_end, EVAL_GRID);
    for (i, ic) in spec.transfer_ics.resolve().iter().enumerate() {
        let mut net = MultiHeadNetwork::init(spec.model, &[*ic])?;
        let result = if spec.gan {
            deqgan_train(&mut net, &potential, &spec.deqgan, &spec.training)
        } else {
            train_base(&mut net, &potential, &spec.training)
        };
        let report = match result {
            Ok(report) => report,
            Err(failure) => {
                failure
                    .partial
                    .save(&out.join(format!("report_classical_{i:03}.json")))?;
                return Err(diverged("classical training", failure.epoch));
            }
        };
        report.save(&out.join(format!("report_classical_{i:03}.json")))?;
        network_trajectory(&net, 0, &grid)?
            .save_csv(&out.join(format!("trajectory_classical_{i:03}.csv")))?;
    }
    Ok(())
}

/// Shared transfer driver: loads the checkpoint, freezes the base, fine-tunes
/// one new head per transfer IC, and persists per-IC reports + trajectories.
/// `new_potential` switches between IC transfer (None) and potential transfer.
fn run_transfer(
    spec: &ExperimentSpec,
    out: &Path,
    checkpoint: &Path,
    new_potential: Option<RandomPotential>,
) -> CmdResult<()> {
    spec.validate()?;
    ensure_out(out)?;
    if !checkpoint.exists() {
        return Err(CmdError::Usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let loaded = Checkpoint::load(checkpoint)?;
    let mut net = loaded.net;
    net.freeze_base();
    let potential = match new_potential {
        Some(p) => {
            p.save(&out.join("potential.json"))?;
            p
        }
        None => {
            let p = spec.resolve_potential()?;
            if p.content_hash() != loaded.potential_hash {
                return Err(CmdError::Usage(
                    "potential does not match the checkpoint's training potential".into(),
                ));
            }
            p
        }
    };
    let before = net.base_checksum();
    let first_new = net.num_heads();
    let ics = spec.transfer_ics.resolve();
    let outcomes = if spec.gan {
        let mut outcomes = Vec::with_capacity(ics.len());
        for &ic in &ics {
            let head = net.attach_head(ic, HeadInit::CopyNearest)?;
            let (report, diverged_at) = match crate::gan::deqgan_train_heads(
                &mut net,
                &[head],
                &potential,
                &spec.deqgan,
                &spec.training,
            ) {
                Ok(report) => (report, None),
                Err(failure) => (failure.partial, Some(failure.epoch)),
            };
            outcomes.push(crate::train::TransferOutcome {
                head,
                ic,
                report,
                diverged_at,
            });
        }
        outcomes
    } else {
        transfer_train(&mut net, &ics, &potential, &spec.training, HeadInit::CopyNearest)?
    };
    debug_assert_eq!(net.base_checksum(), before);
    let grid = eval_grid(spec.training.t_end, EVAL_GRID);
    let mut first_divergence = None;
    for (i, outcome) in outcomes.iter().enumerate() {
        outcome
            .report
            .save(&out.join(format!("report_transfer_{i:03}.json")))?;
        network_trajectory(&net, first_new + i, &grid)?
            .save_csv(&out.join(format!("trajectory_transfer_{i:03}.csv")))?;
        if let (None, Some(epoch)) = (first_divergence, outcome.diverged_at) {
            first_divergence = Some((i, epoch));
        }
    }
    Checkpoint::save(
        &net,
        spec.training.t_end,
        &potential.content_hash(),
        &out.join("checkpoint_transfer.json"),
    )?;
    if let Some((head, epoch)) = first_divergence {
        return Err(diverged(&format!("transfer head {head}"), epoch));
    }
    Ok(())
}

/// Fine-tune new heads for fresh ICs on the checkpoint's own potential.
pub fn cmd_transfer_ic(spec: &ExperimentSpec, out: &Path, checkpoint: &Path) -> CmdResult<()> {
    run_transfer(spec, out, checkpoint, None)
}

/// Fine-tune new heads on a freshly resampled potential: same σ, A, K and
/// rectangle, new means drawn under `resample_seed`.
pub fn cmd_transfer_potential(
    spec: &ExperimentSpec,
    out: &Path,
    checkpoint: &Path,
) -> CmdResult<()> {
    let old = spec.resolve_potential()?;
    let resampled = RandomPotential::sample(
        spec.resample_seed,
        old.k,
        old.amplitude,
        old.sigma,
        old.sampling_rect,
    )?;
    run_transfer(spec, out, checkpoint, Some(resampled))
}

/// RK4 reference trajectories for all base and transfer ICs.
pub fn cmd_oracle(spec: &ExperimentSpec, out: &Path) -> CmdResult<()> {
    spec.validate()?;
    ensure_out(out)?;
    let potential = spec.resolve_potential()?;
    potential.save(&out.join("potential.json"))?;
    for (label, ics) in [
        ("base", spec.base_ic_list()),
        ("transfer", spec.transfer_ics.resolve()),
    ] {
        for (i, &ic) in ics.iter().enumerate() {
            let traj = rk4_integrate(ic, &potential, spec.training.t_end, spec.dt)?;
            traj.save_csv(&out.join(format!("oracle_{label}_{i:03}.csv")))?;
        }
    }
    Ok(())
}

/// Compare every checkpoint head against fresh oracle runs on a 200-point
/// grid and write the summary JSON.
pub fn cmd_eval(spec: &ExperimentSpec, out: &Path, checkpoint: &Path) -> CmdResult<EvalSummary> {
    spec.validate()?;
    ensure_out(out)?;
    let loaded = Checkpoint::load(checkpoint)?;
    let potential = spec.resolve_potential()?;
    if potential.content_hash() != loaded.potential_hash {
        return Err(CmdError::Usage(
            "potential hash mismatch: checkpoint was trained against a different potential".into(),
        ));
    }
    let net = loaded.net;
    let t_end = spec.training.t_end;
    let extrapolated = t_end > loaded.t_end + 1e-12;
    let grid = eval_grid(t_end, EVAL_GRID);
    let mut heads = Vec::with_capacity(net.num_heads());
    for head in 0..net.num_heads() {
        let max_errors = head_max_errors(&net, head, &potential, &grid, spec.dt)?;
        let final_residual = pinn_loss(&net, &[head], &potential, &grid)?;
        let traj = network_trajectory(&net, head, &grid)?;
        let h0 = hamiltonian_energy(traj.states[0], &potential);
        let energy_drift = traj
            .states
            .iter()
            .map(|&s| (hamiltonian_energy(s, &potential) - h0).abs())
            .fold(0.0f64, f64::max);
        heads.push(HeadEval {
            y0: net.head_ic(head).y0,
            max_errors,
            final_residual,
            energy_drift,
        });
    }
    let summary = EvalSummary {
        heads,
        grid_points: EVAL_GRID,
        t_end,
        extrapolated,
        potential_hash: loaded.potential_hash,
    };
    summary.save(&out.join("eval.json"))?;
    Ok(summary)
}

/// Render the trajectory and loss figures from artifacts under `out`.
pub fn cmd_plot(spec: &ExperimentSpec, out: &Path) -> CmdResult<()> {
    spec.validate()?;
    let potential_path = out.join("potential.json");
    if !potential_path.exists() {
        return Err(CmdError::Usage(format!(
            "missing {}; run an experiment first",
            potential_path.display()
        )));
    }
    let potential = RandomPotential::load(&potential_path)?;
    let load_set = |prefix: &str| -> CmdResult<Vec<Trajectory>> {
        let mut set = Vec::new();
        for i in 0.. {
            let path = out.join(format!("{prefix}_{i:03}.csv"));
            if !path.exists() {
                break;
            }
            set.push(Trajectory::load_csv(&path)?);
        }
        Ok(set)
    };
    let mut base = load_set("trajectory_base")?;
    if base.is_empty() {
        base = load_set("oracle_base")?;
    }
    let transfer = load_set("trajectory_transfer")?;
    if base.is_empty() && transfer.is_empty() {
        return Err(CmdError::Usage("no trajectory CSVs found to plot".into()));
    }
    plot_trajectories(&out.join("trajectories.svg"), &potential, &base, &transfer, None)?;

    let mut series = Vec::new();
    for (label, file) in [
        ("classical", "report_classical_000.json"),
        ("base", "report_base.json"),
        ("transfer", "report_transfer_000.json"),
    ] {
        let path = out.join(file);
        if path.exists() {
            series.push((label.to_string(), TrainingReport::load(&path)?.loss_curve));
        }
    }
    if !series.is_empty() {
        plot_loss(&out.join("loss.svg"), &series)?;
    }
    Ok(())
}

/// One measured cell of the benchmark table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchCell {
    pub scenario: String,
    pub architecture: String,
    pub epochs: usize,
    pub seconds: f64,
    pub epochs_per_second: f64,
}

/// The persisted benchmark artifact, mirroring the reference table's shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
}

impl BenchTable {
    pub fn rate(&self, scenario: &str, architecture: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.architecture == architecture)
            .map(|c| c.epochs_per_second)
    }
}

fn bench_cell(
    spec: &ExperimentSpec,
    potential: &RandomPotential,
    scenario: &str,
    architecture: &str,
    min_epochs: usize,
    min_seconds: f64,
) -> CmdResult<BenchCell> {
    let build = |spec: &ExperimentSpec| -> CmdResult<MultiHeadNetwork> {
        match scenario {
            "classical" => Ok(MultiHeadNetwork::init(
                spec.model,
                &[InitialCondition::new(0.5)],
            )?),
            "base" => Ok(MultiHeadNetwork::init(spec.model, &spec.base_ic_list())?),
            "transfer" => {
                let mut net = MultiHeadNetwork::init(spec.model, &spec.base_ic_list())?;
                net.freeze_base();
                net.attach_head(InitialCondition::new(0.55), HeadInit::CopyNearest)?;
                Ok(net)
            }
            other => Err(CmdError::Usage(format!("unknown bench scenario {other}"))),
        }
    };
    // Probe a few epochs to size the run, then measure one uninterrupted run
    // long enough to satisfy both budget floors.
    let mut cfg = spec.training;
    cfg.loss_threshold = None;
    let run = |epochs: usize| -> CmdResult<TrainingReport> {
        let mut cfg = cfg;
        cfg.epochs = epochs;
        let mut net = build(spec)?;
        let heads: Vec<usize> = if scenario == "transfer" {
            vec![net.num_heads() - 1]
        } else {
            (0..net.num_heads()).collect()
        };
        let result = if architecture == "deqgan" {
            crate::gan::deqgan_train_heads(&mut net, &heads, potential, &spec.deqgan, &cfg)
        } else {
            crate::train::run_training_for(&mut net, &heads, potential, &cfg)
        };
        result.map_err(|f| diverged(&format!("bench {scenario}/{architecture}"), f.epoch))
    };
    let probe = run(10)?;
    let rate = probe.epochs_per_second.max(1e-3);
    let target = ((min_seconds * rate).ceil() as usize).max(min_epochs);
    let report = run(target)?;
    Ok(BenchCell {
        scenario: scenario.to_string(),
        architecture: architecture.to_string(),
        epochs: report.stopped_epoch,
        seconds: report.wall_clock_seconds,
        epochs_per_second: report.epochs_per_second,
    })
}

/// Measure epochs/sec for (classical, base, transfer) × (ffnn, deqgan) and
/// write the table. Budgets are per cell; the CLI default is ≥30 s or ≥200
/// epochs, whichever is longer.
pub fn cmd_bench(
    spec: &ExperimentSpec,
    out: &Path,
    min_epochs: usize,
    min_seconds: f64,
) -> CmdResult<BenchTable> {
    spec.validate()?;
    ensure_out(out)?;
    let potential = spec.resolve_potential()?;
    let mut cells = Vec::new();
    for architecture in ["ffnn", "deqgan"] {
        for scenario in ["classical", "base", "transfer"] {
            cells.push(bench_cell(
                spec,
                &potential,
                scenario,
                architecture,
                min_epochs,
                min_seconds,
            )?);
        }
    }
    let table = BenchTable { cells };
    std::fs::write(
        out.join("bench.json"),
        serde_json::to_string_pretty(&table).map_err(Error::from)?,
    )
    .map_err(|e| CmdError::Usage(format!("cannot write bench table: {e}")))?;
    Ok(table)
}
