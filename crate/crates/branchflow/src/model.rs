//! Shared-base multi-head network with the initial-value reparametrization.
//!
//! One MLP maps the scalar time to a hidden representation; each linear head
//! reads that representation and produces the four phase-space channels for
//! its bound initial condition.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, DualBatch, GradientTape, NodeId, ParameterStore};
use crate::dynamics::InitialCondition;
use crate::error::{Error, Result};

fn default_hidden_layers() -> usize {
    5
}
fn default_hidden_width() -> usize {
    40
}
fn default_first_layer_scale() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Multiplier on the input-layer weight initialization. The network's
    /// only input is the scalar time, so plain fan-in scaling yields a
    /// low-frequency time basis; boosting the first layer (e.g. ×40 with the
    /// sin activation) widens the representable frequency band, in the
    /// spirit of SIREN-style first-layer scaling.
    #[serde(default = "default_first_layer_scale")]
    pub first_layer_scale: f64,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_layers: 5,
            hidden_width: 40,
            activation: Activation::Tanh,
            first_layer_scale: 1.0,
            init_seed: 0,
        }
    }
}

/// How a newly attached head is initialized.
#[derive(Clone, Copy, Debug)]
pub enum HeadInit {
    Random(u64),
    /// Copy the weights of the existing head whose y0 is closest;
    /// ties break toward the lower y0.
    CopyNearest,
}

#[derive(Clone, Debug)]
pub struct MultiHeadNetwork {
    pub params: ParameterStore,
    pub config: ModelConfig,
    heads: Vec<InitialCondition>,
    frozen_base: bool,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Array2<f64> {
    let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl MultiHeadNetwork {
    /// Deterministic fan-in-scaled initialization from the config seed; one
    /// head per initial condition.
    pub fn init(config: ModelConfig, ics: &[InitialCondition]) -> Result<Self> {
        if ics.is_empty() {
            return Err(Error::Config("init_model: empty initial condition list".into()));
        }
        if config.hidden_layers < 1 || config.hidden_width < 1 {
            return Err(Error::Config(format!(
                "init_model: need hidden_layers >= 1 and hidden_width >= 1, got {} and {}",
                config.hidden_layers, config.hidden_width
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParameterStore::new();
        let w = config.hidden_width;
        if !(config.first_layer_scale > 0.0) {
            return Err(Error::Config(
                "init_model: first_layer_scale must be positive".into(),
            ));
        }
        for layer in 0..config.hidden_layers {
            let fan_in = if layer == 0 { 1 } else { w };
            let gain = if layer == 0 { config.first_layer_scale } else { 1.0 };
            params.insert(&format!("base.{layer}.w"), xavier(&mut rng, fan_in, w, gain))?;
            params.insert(&format!("base.{layer}.b"), Array2::zeros((1, w)))?;
        }
        let mut net = MultiHeadNetwork {
            params,
            config,
            heads: Vec::new(),
            frozen_base: false,
        };
        for &ic in ics {
            net.push_head(ic, &mut rng)?;
        }
        Ok(net)
    }

    fn push_head(&mut self, ic: InitialCondition, rng: &mut ChaCha8Rng) -> Result<usize> {
        let idx = self.heads.len();
        let w = self.config.hidden_width;
        // small init so the reparametrized output starts near z(0)
        self.params
            .insert(&format!("head.{idx}.w"), xavier(rng, w, 4, 0.1))?;
        self.params.insert(&format!("head.{idx}.b"), Array2::zeros((1, 4)))?;
        self.heads.push(ic);
        Ok(idx)
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head_ic(&self, head: usize) -> InitialCondition {
        self.heads[head]
    }

    pub fn heads(&self) -> &[InitialCondition] {
        &self.heads
    }

    pub fn frozen_base(&self) -> bool {
        self.frozen_base
    }

    pub fn base_tensor_names(&self) -> Vec<String> {
        (0..self.config.hidden_layers)
            .flat_map(|l| [format!("base.{l}.w"), format!("base.{l}.b")])
            .collect()
    }

    pub fn head_tensor_names(&self, head: usize) -> [String; 2] {
        [format!("head.{head}.w"), format!("head.{head}.b")]
    }

    /// Mark all base tensors frozen. Idempotent; heads are unaffected.
    pub fn freeze_base(&mut self) {
        for name in self.base_tensor_names() {
            self.params.freeze(&name).expect("base tensor exists");
        }
        self.frozen_base = true;
    }

    /// Append a new head bound to `ic`.
    pub fn attach_head(&mut self, ic: InitialCondition, init: HeadInit) -> Result<usize> {
        match init {
            HeadInit::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.push_head(ic, &mut rng)
            }
            HeadInit::CopyNearest => {
                let source = self
                    .heads
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da = (a.y0 - ic.y0).abs();
                        let db = (b.y0 - ic.y0).abs();
                        da.partial_cmp(&db)
                            .unwrap()
                            .then(a.y0.partial_cmp(&b.y0).unwrap())
                    })
                    .map(|(i, _)| i)
                    .ok_or_else(|| Error::Config("copy_nearest with no existing heads".into()))?;
                let w = self.params.get(&format!("head.{source}.w")).unwrap().data.clone();
                let b = self.params.get(&format!("head.{source}.b")).unwrap().data.clone();
                let idx = self.heads.len();
                self.params.insert(&format!("head.{idx}.w"), w)?;
                self.params.insert(&format!("head.{idx}.b"), b)?;
                self.heads.push(ic);
                Ok(idx)
            }
        }
    }

    /// Record the base forward pass on a tape; returns the last hidden
    /// activation node (the shared representation read by all heads).
    pub fn tape_base(&self, tape: &mut GradientTape, times: &Array1<f64>) -> Result<NodeId> {
        let mut node = tape.time_input(times);
        for layer in 0..self.config.hidden_layers {
            node = tape.affine(
                &self.params,
                node,
                &format!("base.{layer}.w"),
                &format!("base.{layer}.b"),
            )?;
            node = tape.activation(node, self.config.activation)?;
        }
        Ok(node)
    }

    /// Apply one head to a recorded base node.
    pub fn tape_head(&self, tape: &mut GradientTape, base: NodeId, head: usize) -> Result<NodeId> {
        if head >= self.heads.len() {
            return Err(Error::Config(format!(
                "head index {head} out of range ({} heads)",
                self.heads.len()
            )));
        }
        tape.affine(
            &self.params,
            base,
            &format!("head.{head}.w"),
            &format!("head.{head}.b"),
        )
    }

    /// Record the reparametrization u~ = z(0) + (1 - e^{-t}) u for a head.
    pub fn tape_reparam(
        &self,
        tape: &mut GradientTape,
        raw: NodeId,
        head: usize,
        times: &Array1<f64>,
    ) -> Result<NodeId> {
        let z0 = self.heads[head].state().to_array();
        tape.reparam(raw, &Array1::from_vec(z0.to_vec()), times)
    }

    /// Raw head outputs u with d/dt tangents, via a throwaway tape.
    pub fn raw_forward(&self, head: usize, times: &Array1<f64>) -> Result<DualBatch> {
        let mut tape = GradientTape::new();
        let base = self.tape_base(&mut tape, times)?;
        let out = self.tape_head(&mut tape, base, head)?;
        Ok(tape.batch(out).clone())
    }

    /// Reparametrized outputs (u~, du~/dt).
    pub fn reparametrized_forward(
        &self,
        head: usize,
        times: &Array1<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = GradientTape::new();
        let base = self.tape_base(&mut tape, times)?;
        let out = self.tape_head(&mut tape, base, head)?;
        let rep = self.tape_reparam(&mut tape, out, head, times)?;
        let batch = tape.batch(rep);
        Ok((batch.values.clone(), batch.tangents.clone()))
    }

    /// Tape-free base evaluation for loss reporting and evaluation sweeps.
    pub fn eval_base(&self, times: &Array1<f64>) -> DualBatch {
        let mut batch = DualBatch::time_input(times);
        for layer in 0..self.config.hidden_layers {
            let w = &self.params.get(&format!("base.{layer}.w")).unwrap().data;
            let b = &self.params.get(&format!("base.{layer}.b")).unwrap().data;
            let mut pre = batch.values.dot(w);
            let pre_t = batch.tangents.dot(w);
            for mut row in pre.rows_mut() {
                row += &b.row(0);
            }
            let values = pre.mapv(|x| self.config.activation.apply(x));
            let mut tangents = pre.mapv(|x| self.config.activation.d1(x));
            tangents *= &pre_t;
            batch = DualBatch { values, tangents };
        }
        batch
    }

    /// Tape-free reparametrized head evaluation on a precomputed base batch.
    pub fn eval_head_reparam(
        &self,
        base: &DualBatch,
        head: usize,
        times: &Array1<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let w = &self.params.get(&format!("head.{head}.w")).unwrap().data;
        let b = &self.params.get(&format!("head.{head}.b")).unwrap().data;
        let mut u = base.values.dot(w);
        let du = base.tangents.dot(w);
        for mut row in u.rows_mut() {
            row += &b.row(0);
        }
        let z0 = self.heads[head].state().to_array();
        let n = times.len();
        let mut values = Array2::zeros((n, 4));
        let mut tangents = Array2::zeros((n, 4));
        for i in 0..n {
            let decay = (-times[i]).exp();
            let scale = 1.0 - decay;
            for j in 0..4 {
                values[(i, j)] = z0[j] + scale * u[(i, j)];
                tangents[(i, j)] = decay * u[(i, j)] + scale * du[(i, j)];
            }
        }
        (values, tangents)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    /// Checksum over base tensor bytes, for frozen-base integrity checks.
    pub fn base_checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for name in self.base_tensor_names() {
            let t = self.params.get(&name).unwrap();
            for v in t.data.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Serialize, Deserialize)]
struct HeadRecord {
    y0: f64,
    tensors: [String; 2],
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: ModelConfig,
    heads: Vec<HeadRecord>,
    frozen_base: bool,
    t_end: f64,
    potential_hash: String,
    tensors: serde_json::Value,
}

/// Persisted model checkpoint: parameters plus head bindings and the hash of
/// the potential the model was trained against.
pub struct Checkpoint {
    pub net: MultiHeadNetwork,
    pub t_end: f64,
    pub potential_hash: String,
}

impl Checkpoint {
    pub fn save(
        net: &MultiHeadNetwork,
        t_end: f64,
        potential_hash: &str,
        path: &std::path::Path,
    ) -> Result<()> {
        let file = CheckpointFile {
            config: net.config,
            heads: net
                .heads
                .iter()
                .enumerate()
                .map(|(i, ic)| HeadRecord {
                    y0: ic.y0,
                    tensors: net.head_tensor_names(i),
                })
                .collect(),
            frozen_base: net.frozen_base,
            t_end,
            potential_hash: potential_hash.to_string(),
            tensors: net.params.to_json(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        let params = ParameterStore::from_json(file.tensors)?;
        let net = MultiHeadNetwork {
            params,
            config: file.config,
            heads: file.heads.iter().map(|h| InitialCondition::new(h.y0)).collect(),
            frozen_base: file.frozen_base,
        };
        Ok(Checkpoint {
            net,
            t_end: file.t_end,
            potential_hash: file.potential_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn ics_11() -> Vec<InitialCondition> {
        (0..11).map(|i| InitialCondition::new(i as f64 * 0.1)).collect()
    }

    fn default_net() -> MultiHeadNetwork {
        MultiHeadNetwork::init(ModelConfig::default(), &ics_11()).unwrap()
    }

    #[test]
    fn eleven_heads_bound_to_their_ics() {
        let net = default_net();
        assert_eq!(net.num_heads(), 11);
        for (i, ic) in net.heads().iter().enumerate() {
            assert_relative_eq!(ic.y0, i as f64 * 0.1, epsilon = 1e-15);
            let s = ic.state();
            assert_eq!((s.x, s.px, s.py), (0.0, 1.0, 0.0));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = default_net();
        let b = default_net();
        for (ta, tb) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(ta.data, tb.data);
        }
    }

    #[test]
    fn parameter_count_matches_layer_shapes() {
        let net = default_net();
        // (1*40+40) + 4*(40*40+40) + 11*(40*4+4)
        assert_eq!(net.parameter_count(), 6640 + 164 * 11);
    }

    #[test]
    fn empty_ics_rejected() {
        assert!(MultiHeadNetwork::init(ModelConfig::default(), &[]).is_err());
    }

    #[test]
    fn zero_head_outputs_zero() {
        let mut net = default_net();
        for name in net.head_tensor_names(0) {
            net.params.get_mut(&name).unwrap().data.fill(0.0);
        }
        let times = array![0.0, 0.3, 0.9];
        let out = net.raw_forward(0, &times).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        assert!(out.tangents.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_index_out_of_range() {
        let net = default_net();
        assert!(net.raw_forward(11, &array![0.1]).is_err());
    }

    #[test]
    fn reparam_hits_initial_condition_at_t_zero() {
        let net = default_net();
        for head in 0..net.num_heads() {
            let (values, _) = net.reparametrized_forward(head, &array![0.0]).unwrap();
            let z0 = net.head_ic(head).state().to_array();
            for j in 0..4 {
                assert!((values[(0, j)] - z0[j]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn reparam_with_zero_net_is_constant() {
        let mut net = default_net();
        for name in net.head_tensor_names(3) {
            net.params.get_mut(&name).unwrap().data.fill(0.0);
        }
        let times = array![0.0, 0.5, 1.0];
        let (values, tangents) = net.reparametrized_forward(3, &times).unwrap();
        let z0 = net.head_ic(3).state().to_array();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(values[(i, j)], z0[j]);
                assert_eq!(tangents[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn reparam_closed_form_at_ln2() {
        // u == 1 in one channel with zero tangent, z-component 0.5, t = ln 2:
        // u~ = 0.5 + 0.5 * 1 = 1.0, du~/dt = 0.5
        let mut net = MultiHeadNetwork::init(
            ModelConfig {
                hidden_layers: 1,
                hidden_width: 1,
                ..ModelConfig::default()
            },
            &[InitialCondition::new(0.5)],
        )
        .unwrap();
        net.params.get_mut("base.0.w").unwrap().data.fill(0.0);
        net.params.get_mut("base.0.b").unwrap().data.fill(0.0);
        net.params.get_mut("head.0.w").unwrap().data.fill(0.0);
        net.params.get_mut("head.0.b").unwrap().data =
            array![[0.0, 1.0, 0.0, 0.0]]; // y-channel constant 1
        let t = std::f64::consts::LN_2;
        let (values, tangents) = net.reparametrized_forward(0, &array![t]).unwrap();
        assert_relative_eq!(values[(0, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(tangents[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn freeze_is_idempotent_and_marks_base_only() {
        let mut net = default_net();
        net.freeze_base();
        net.freeze_base();
        assert!(net.frozen_base());
        for name in net.base_tensor_names() {
            assert!(net.params.get(&name).unwrap().frozen);
        }
        assert!(!net.params.get("head.0.w").unwrap().frozen);
    }

    #[test]
    fn attach_copy_nearest_ties_break_low() {
        let mut net = default_net();
        let idx = net
            .attach_head(InitialCondition::new(0.55), HeadInit::CopyNearest)
            .unwrap();
        assert_eq!(idx, 11);
        assert_eq!(net.num_heads(), 12);
        let copied = &net.params.get("head.11.w").unwrap().data;
        // 0.55 sits between the trained heads at 0.5 and 0.6
        let lower = &net.params.get("head.5.w").unwrap().data;
        let upper = &net.params.get("head.6.w").unwrap().data;
        assert!(copied == lower || copied == upper);
    }

    #[test]
    fn attach_copy_nearest_exact_tie_prefers_lower() {
        let mut net = MultiHeadNetwork::init(
            ModelConfig::default(),
            &[InitialCondition::new(0.25), InitialCondition::new(0.75)],
        )
        .unwrap();
        net.attach_head(InitialCondition::new(0.5), HeadInit::CopyNearest).unwrap();
        assert_eq!(
            net.params.get("head.2.w").unwrap().data,
            net.params.get("head.0.w").unwrap().data
        );
    }

    #[test]
    fn attach_random_is_deterministic() {
        let mut a = default_net();
        let mut b = default_net();
        a.attach_head(InitialCondition::new(0.42), HeadInit::Random(9)).unwrap();
        b.attach_head(InitialCondition::new(0.42), HeadInit::Random(9)).unwrap();
        assert_eq!(
            a.params.get("head.11.w").unwrap().data,
            b.params.get("head.11.w").unwrap().data
        );
    }

    #[test]
    fn attach_leaves_existing_heads_unchanged() {
        let mut net = default_net();
        let before = net.params.get("head.4.w").unwrap().data.clone();
        net.attach_head(InitialCondition::new(0.9), HeadInit::Random(1)).unwrap();
        assert_eq!(net.params.get("head.4.w").unwrap().data, before);
    }

    #[test]
    fn batched_equals_pointwise() {
        let net = default_net();
        let times = array![0.0, 0.25, 0.5, 0.75, 1.0];
        let (batched, batched_t) = net.reparametrized_forward(2, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let (v, dv) = net.reparametrized_forward(2, &array![t]).unwrap();
            for j in 0..4 {
                assert!((batched[(i, j)] - v[(0, j)]).abs() <= 1e-12);
                assert!((batched_t[(i, j)] - dv[(0, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn eval_path_matches_tape_path() {
        let net = default_net();
        let times = array![0.1, 0.6, 0.95];
        let (tv, tt) = net.reparametrized_forward(7, &times).unwrap();
        let base = net.eval_base(&times);
        let (ev, et) = net.eval_head_reparam(&base, 7, &times);
        for i in 0..3 {
            for j in 0..4 {
                assert!((tv[(i, j)] - ev[(i, j)]).abs() <= 1e-14);
                assert!((tt[(i, j)] - et[(i, j)]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        let mut net = default_net();
        net.freeze_base();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::save(&net, 1.0, "abc123", &path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.potential_hash, "abc123");
        assert_eq!(loaded.t_end, 1.0);
        assert!(loaded.net.frozen_base());
        assert_eq!(loaded.net.num_heads(), 11);
        for (a, b) in net.params.iter().zip(loaded.net.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.frozen, b.frozen);
            assert_eq!(a.data, b.data);
        }
        // save again: identical tensor payload
        let path2 = dir.path().join("ckpt2.json");
        Checkpoint::save(&loaded.net, 1.0, "abc123", &path2).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(&path2).unwrap()
        );
    }
}
