//! The three network roles: a shared ReLU feature extractor ending at the
//! target layer, per-task linear heads, and the generator that maps
//! Gaussian noise into the target space.
//!
//! Every layer of the feature net and the generator applies ReLU,
//! including the last, so both live in the nonnegative orthant of the
//! target space. Heads are plain linear maps to logits.

use rand::Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::cw::SampleBatch;
use crate::error::{CwError, Result};
use crate::rng::derive_rng;
use crate::tape::{Tape, VarId};
use crate::tensor::{self, Tensor};

/// One dense layer, weight stored input×output so rows of x map forward.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Linear {
        let bound = (6.0 / fan_in as f64).sqrt();
        let values: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Linear {
            w: Tensor::new(vec![fan_in, fan_out], values).expect("sized above"),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn w_b(&self) -> [&Tensor; 2] {
        [&self.w, &self.b]
    }

    pub fn w_b_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.w, &mut self.b]
    }

    fn forward_plain(&self, x: &Tensor) -> Result<Tensor> {
        tensor::add_bias(&tensor::matmul(x, &self.w)?, &self.b)
    }

    fn forward_tape(&self, tape: &mut Tape, x: VarId, params: &mut Vec<VarId>) -> Result<VarId> {
        let w = tape.param(&self.w);
        let b = tape.param(&self.b);
        params.push(w);
        params.push(b);
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }
}

/// Stack of dense layers with ReLU after every layer when `relu_all`,
/// otherwise after every layer but the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_all: bool,
}

impl Mlp {
    pub fn new(widths: &[usize], relu_all: bool, rng: &mut impl Rng) -> Result<Mlp> {
        if widths.len() < 2 {
            return Err(CwError::Config(format!(
                "need at least two widths, got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| Linear::he_uniform(w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers, relu_all })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(Linear::out_dim));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    pub fn forward_plain(&self, x: &Tensor) -> Result<Tensor> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward_plain(&h)?;
            if i < last || self.relu_all {
                h = tensor::relu(&h);
            }
        }
        Ok(h)
    }

    /// Forward on the tape; returns the output and the parameter ids in
    /// `params()` order for gradient readout.
    pub fn forward_tape(&self, tape: &mut Tape, x: VarId) -> Result<(VarId, Vec<VarId>)> {
        let last = self.layers.len() - 1;
        let mut ids = Vec::with_capacity(2 * self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward_tape(tape, h, &mut ids)?;
            if i < last || self.relu_all {
                h = tape.relu(h);
            }
        }
        Ok((h, ids))
    }
}

/// Shared feature extractor f_θ ending at the target layer.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    mlp: Mlp,
}

impl FeatureNet {
    pub fn new(widths: &[usize], seed: u64) -> Result<FeatureNet> {
        let mlp = Mlp::new(widths, true, &mut derive_rng(seed, "init-feature"))?;
        if mlp.out_dim() < crate::cw::MIN_RECOMMENDED_DIM {
            return Err(CwError::Config(format!(
                "target dim {} below minimum {}",
                mlp.out_dim(),
                crate::cw::MIN_RECOMMENDED_DIM
            )));
        }
        Ok(FeatureNet { mlp })
    }

    pub fn target_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }

    pub fn set_params(&mut self, params: &[Tensor]) {
        for (dst, src) in self.mlp.params_mut().into_iter().zip(params) {
            *dst = src.clone();
        }
    }

    /// Target-layer sample for a batch, off the tape.
    pub fn forward(&self, x: &Tensor) -> Result<SampleBatch> {
        SampleBatch::new(self.mlp.forward_plain(x)?)
    }

    pub fn forward_tape(&self, tape: &mut Tape, x: VarId) -> Result<(VarId, Vec<VarId>)> {
        self.mlp.forward_tape(tape, x)
    }
}

/// Generator G_γ mapping latent Gaussian noise into the target space.
/// ReLU on the output layer keeps its range inside the feature net's.
#[derive(Debug, Clone)]
pub struct Generator {
    mlp: Mlp,
}

impl Generator {
    pub fn new(widths: &[usize], seed: u64) -> Result<Generator> {
        Ok(Generator {
            mlp: Mlp::new(widths, true, &mut derive_rng(seed, "init-generator"))?,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.mlp.widths()
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }

    pub fn set_params(&mut self, params: &[Tensor]) {
        for (dst, src) in self.mlp.params_mut().into_iter().zip(params) {
            *dst = src.clone();
        }
    }

    pub fn forward(&self, z: &Tensor) -> Result<SampleBatch> {
        SampleBatch::new(self.mlp.forward_plain(z)?)
    }

    pub fn forward_tape(&self, tape: &mut Tape, z: VarId) -> Result<(VarId, Vec<VarId>)> {
        self.mlp.forward_tape(tape, z)
    }
}

/// n×noise_dim batch of i.i.d. standard normal draws from a caller-owned
/// stream.
pub fn sample_noise(n: usize, noise_dim: usize, rng: &mut impl Rng) -> Tensor {
    let values: Vec<f64> = (0..n * noise_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(vec![n, noise_dim], values).expect("sized above")
}

/// Per-task heads under one of the three policies. Heads are created
/// lazily when a task first needs them; the growing head appends freshly
/// initialized units for each new task.
#[derive(Debug, Clone)]
pub struct HeadSet {
    policy: crate::scenarios::HeadPolicy,
    input_dim: usize,
    units_per_task: usize,
    seed: u64,
    heads: Vec<Linear>,
}

impl HeadSet {
    pub fn new(
        policy: crate::scenarios::HeadPolicy,
        input_dim: usize,
        units_per_task: usize,
        seed: u64,
    ) -> HeadSet {
        HeadSet {
            policy,
            input_dim,
            units_per_task,
            seed,
            heads: Vec::new(),
        }
    }

    pub fn policy(&self) -> crate::scenarios::HeadPolicy {
        self.policy
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(Linear::param_count).sum()
    }

    /// Make sure the head serving `task` exists (and, for the growing
    /// policy, covers its units). Earlier tasks must have been prepared
    /// first so unit order matches task order.
    pub fn ensure_task(&mut self, task: usize) -> Result<()> {
        use crate::scenarios::HeadPolicy::*;
        match self.policy {
            MultiHead => {
                if task > self.heads.len() {
                    return Err(CwError::Sequencing(format!(
                        "head for task {} requested before task {}",
                        task + 1,
                        self.heads.len() + 1
                    )));
                }
                if task == self.heads.len() {
                    let mut rng = derive_rng(self.seed, &format!("init-head-{task}"));
                    self.heads.push(Linear::he_uniform(
                        self.input_dim,
                        self.units_per_task,
                        &mut rng,
                    ));
                }
            }
            SingleFixed => {
                if self.heads.is_empty() {
                    let mut rng = derive_rng(self.seed, "init-head-0");
                    self.heads.push(Linear::he_uniform(
                        self.input_dim,
                        self.units_per_task,
                        &mut rng,
                    ));
                }
            }
            SingleGrowing => {
                if self.heads.is_empty() {
                    let mut rng = derive_rng(self.seed, "init-head-0");
                    self.heads.push(Linear::he_uniform(
                        self.input_dim,
                        self.units_per_task,
                        &mut rng,
                    ));
                }
                let need = (task + 1) * self.units_per_task;
                while self.heads[0].out_dim() < need {
                    let grown_to = self.heads[0].out_dim() / self.units_per_task;
                    let mut rng = derive_rng(self.seed, &format!("grow-head-{grown_to}"));
                    self.grow(self.units_per_task, &mut rng);
                }
            }
        }
        Ok(())
    }

    /// Append `extra` freshly initialized output units to the single head.
    fn grow(&mut self, extra: usize, rng: &mut impl Rng) {
        let old = &self.heads[0];
        let (d, m) = (old.in_dim(), old.out_dim());
        let fresh = Linear::he_uniform(d, extra, rng);
        let mut w = Tensor::zeros(&[d, m + extra]);
        for r in 0..d {
            let dst = &mut w.values_mut()[r * (m + extra)..(r + 1) * (m + extra)];
            dst[..m].copy_from_slice(old.w.row(r));
            dst[m..].copy_from_slice(fresh.w.row(r));
        }
        let mut b = Tensor::zeros(&[m + extra]);
        b.values_mut()[..m].copy_from_slice(old.b.values());
        b.values_mut()[m..].copy_from_slice(fresh.b.values());
        self.heads[0] = Linear { w, b };
    }

    pub fn head(&self, index: usize) -> Result<&Linear> {
        self.heads.get(index).ok_or_else(|| {
            CwError::Sequencing(format!(
                "head {index} not created ({} exist)",
                self.heads.len()
            ))
        })
    }

    pub fn head_mut(&mut self, index: usize) -> Result<&mut Linear> {
        let n = self.heads.len();
        self.heads
            .get_mut(index)
            .ok_or_else(|| CwError::Sequencing(format!("head {index} not created ({n} exist)")))
    }

    /// Logits for a target-layer sample under a head directive.
    pub fn forward(&self, head_index: usize, s: &SampleBatch) -> Result<Tensor> {
        let head = self.head(head_index)?;
        if s.dim() != head.in_dim() {
            return Err(CwError::Shape {
                op: "head_forward",
                lhs: s.points().shape().to_vec(),
                rhs: head.w.shape().to_vec(),
            });
        }
        head.forward_plain(s.points())
    }

    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        head_index: usize,
        s: VarId,
    ) -> Result<(VarId, Vec<VarId>)> {
        let head = self.head(head_index)?;
        let mut ids = Vec::with_capacity(2);
        let out = head.forward_tape(tape, s, &mut ids)?;
        Ok((out, ids))
    }
}

// ── checkpoint files ────────────────────────────────────────────────
//
// Text header of `tensor <name> <dim> <dim> ...` lines terminated by a
// lone `end`, then the tensors' values as little-endian f64 in header
// order.

const CHECKPOINT_MAGIC: &str = "cwtalar-checkpoint v1";

pub fn write_checkpoint(path: &Path, named: &[(String, &Tensor)]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let mut header = String::new();
    header.push_str(CHECKPOINT_MAGIC);
    header.push('\n');
    for (name, t) in named {
        header.push_str("tensor ");
        header.push_str(name);
        for d in t.shape() {
            header.push(' ');
            header.push_str(&d.to_string());
        }
        header.push('\n');
    }
    header.push_str("end\n");
    f.write_all(header.as_bytes())?;
    for (_, t) in named {
        for v in t.values() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let f = fs::File::open(path)?;
    let mut reader = BufReader::new(f);
    let bad = |detail: String| CwError::Format {
        path: path.display().to_string(),
        detail,
    };

    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad checkpoint magic '{}'", line.trim_end())));
    }
    let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("missing 'end' line".into()));
        }
        let line = line.trim_end();
        if line == "end" {
            break;
        }
        let mut parts = line.split(' ');
        if parts.next() != Some("tensor") {
            return Err(bad(format!("unexpected header line '{line}'")));
        }
        let name = parts
            .next()
            .ok_or_else(|| bad("tensor line missing name".into()))?
            .to_string();
        let shape: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| bad(format!("bad dim '{p}'"))))
            .collect::<Result<_>>()?;
        entries.push((name, shape));
    }

    let mut out = Vec::with_capacity(entries.len());
    for (name, shape) in entries {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| bad(format!("truncated data for tensor '{name}'")))?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        out.push((name, Tensor::new(shape, values)?));
    }
    Ok(out)
}
