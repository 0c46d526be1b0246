//! Task-sequence training: solve the first task plainly, then alternate
//! generator fitting on the finished task's frozen features with solving
//! the next task under the Cramer-Wold penalty.
//!
//! Per mini-batch of size b on task j >= 2 the objective is
//!
//!   cross_entropy + λ · d²_cw(G(Z_b), f_θ(X_b)) + β · mean ‖f_θ(X_b)‖₂
//!
//! with Z_b fresh noise, G the generator frozen after task j−1, and the
//! bandwidth recomputed from the joined (generated, current) batch.
//! Gradients reach θ and the active head only; generator outputs enter as
//! constants. The naive and L2 baselines run through the same loop with
//! their terms switched off so the λ = β = 0 reduction is bit-exact.

use rand::seq::SliceRandom;

use crate::cw::{cw_distance_sq, cw_distance_sq_tape, silverman_bandwidth, SampleBatch};
use crate::data::LabeledDataset;
use crate::error::{CwError, Result};
use crate::harness::{evaluate, MetricsRow, MetricsTable};
use crate::models::{sample_noise, FeatureNet, Generator, HeadSet};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::derive_rng;
use crate::scenarios::{resolve_head, TaskStream};
use crate::tape::Tape;
use crate::tensor::{hash_tensors, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CwTalar,
    NaiveAdam,
    NaiveSgd,
    NaiveAdagrad,
    L2Baseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::CwTalar => "cwtalar",
            Method::NaiveAdam => "naive_adam",
            Method::NaiveSgd => "naive_sgd",
            Method::NaiveAdagrad => "naive_adagrad",
            Method::L2Baseline => "l2_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "cwtalar" => Ok(Method::CwTalar),
            "naive_adam" => Ok(Method::NaiveAdam),
            "naive_sgd" => Ok(Method::NaiveSgd),
            "naive_adagrad" => Ok(Method::NaiveAdagrad),
            "l2_baseline" => Ok(Method::L2Baseline),
            other => Err(CwError::Config(format!("unknown method '{other}'"))),
        }
    }

    fn optimizer_kind(&self) -> OptimizerKind {
        match self {
            Method::NaiveSgd => OptimizerKind::Sgd,
            Method::NaiveAdagrad => OptimizerKind::Adagrad,
            _ => OptimizerKind::Adam,
        }
    }
}

/// Penalty weights and generator-training knobs.
#[derive(Debug, Clone)]
pub struct RegularizationConfig {
    /// Weight of the Cramer-Wold term; 0 reduces to naive fine-tuning
    /// plus the β penalty.
    pub lambda: f64,
    /// Weight of the target-layer L2-norm penalty.
    pub beta: f64,
    pub generator_epochs: usize,
    /// Fraction of each generator-training target batch drawn from the
    /// frozen previous generator instead of current-task features.
    pub generator_replay_fraction: f64,
    /// Reinitialize the generator at each retraining instead of warm
    /// starting from the previous fit.
    pub generator_cold_start: bool,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            lambda: 0.0,
            beta: 1e-3,
            generator_epochs: 10,
            generator_replay_fraction: 0.0,
            generator_cold_start: false,
        }
    }
}

/// Everything run_sequence needs beyond the stream itself.
#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub method: Method,
    pub reg: RegularizationConfig,
    /// L2-baseline pull toward the previous task's shared parameters.
    pub lambda_w: f64,
    pub epochs_per_task: usize,
    pub batch_size: usize,
    pub lr_first: f64,
    pub lr_later: f64,
    pub generator_lr: f64,
    pub sgd_lr: f64,
    pub adagrad_lr: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            method: Method::CwTalar,
            reg: RegularizationConfig::default(),
            lambda_w: 3.0,
            epochs_per_task: 4,
            batch_size: 128,
            lr_first: 1e-4,
            lr_later: 1e-5,
            generator_lr: 1e-4,
            sgd_lr: 0.05,
            adagrad_lr: 0.01,
        }
    }
}

impl TrainerConfig {
    fn task_lr(&self, task: usize) -> f64 {
        match self.method.optimizer_kind() {
            OptimizerKind::Adam => {
                if task == 0 {
                    self.lr_first
                } else {
                    self.lr_later
                }
            }
            OptimizerKind::Sgd => self.sgd_lr,
            OptimizerKind::Adagrad => self.adagrad_lr,
        }
    }
}

/// Frozen snapshots left behind by one solved task.
#[derive(Debug, Clone)]
pub struct TaskSolution {
    pub task: usize,
    pub theta: Vec<Tensor>,
    pub head: Vec<Tensor>,
    pub generator: Option<Vec<Tensor>>,
    /// Per-batch training losses in execution order.
    pub loss_trace: Vec<f64>,
    pub epoch_mean_loss: Vec<f64>,
    /// Hash over theta and head at freeze time.
    pub snapshot_hash: u64,
}

impl TaskSolution {
    pub fn rehash(&self) -> u64 {
        let mut refs: Vec<&Tensor> = self.theta.iter().collect();
        refs.extend(self.head.iter());
        hash_tensors(&refs)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorReport {
    pub loss_trace: Vec<f64>,
}

#[derive(Debug)]
pub struct SequenceOutcome {
    pub solutions: Vec<TaskSolution>,
    pub metrics: MetricsTable,
}

/// Drives one seeded run of one method over one stream.
pub struct Trainer<'a> {
    pub cfg: &'a TrainerConfig,
    pub seed: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a TrainerConfig, seed: u64) -> Trainer<'a> {
        Trainer { cfg, seed }
    }

    /// Minimize the task objective for the configured epochs.
    ///
    /// `frozen_gen` supplies the Cramer-Wold anchor (subsequent tasks under
    /// cwtalar with λ > 0); `prev_theta` the L2-baseline pull target.
    fn solve_task(
        &self,
        net: &mut FeatureNet,
        heads: &mut HeadSet,
        stream: &TaskStream,
        task: usize,
        frozen_gen: Option<&Generator>,
        prev_theta: Option<&[Tensor]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let cfg = self.cfg;
        let data = &stream.tasks[task].train;
        let directive = resolve_head(stream, task, task + 1)?;
        heads.ensure_task(task)?;

        let use_cw = matches!(cfg.method, Method::CwTalar) && task > 0 && cfg.reg.lambda != 0.0;
        let use_beta = matches!(cfg.method, Method::CwTalar) && cfg.reg.beta != 0.0;
        let use_l2 = matches!(cfg.method, Method::L2Baseline) && task > 0 && cfg.lambda_w != 0.0;
        if use_cw && frozen_gen.is_none() {
            return Err(CwError::Sequencing(format!(
                "task {} needs a frozen generator and none was trained",
                task + 1
            )));
        }
        if use_l2 && prev_theta.is_none() {
            return Err(CwError::Sequencing(format!(
                "task {} needs previous shared parameters for the L2 pull",
                task + 1
            )));
        }

        let mut opt = {
            let mut params: Vec<&Tensor> = net.params();
            params.extend(heads.head(directive.head_index)?.w_b());
            Optimizer::for_params(cfg.method.optimizer_kind(), cfg.task_lr(task), &params)
        };

        let mut shuffle_rng = derive_rng(self.seed, &format!("shuffle-t{task}"));
        let mut noise_rng = derive_rng(self.seed, &format!("solve-noise-t{task}"));
        let prev_consts: Vec<Tensor> = prev_theta.map(|p| p.to_vec()).unwrap_or_default();

        let mut trace = Vec::new();
        let mut epoch_means = Vec::new();
        for _epoch in 0..cfg.epochs_per_task {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut shuffle_rng);
            let mut epoch_sum = 0.0;
            let mut epoch_batches = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let images = data.images.gather_rows(chunk);
                let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();

                let mut tape = Tape::new();
                let x = tape.constant(images);
                let (s, theta_ids) = net.forward_tape(&mut tape, x)?;
                let (logits, head_ids) = heads.forward_tape(&mut tape, directive.head_index, s)?;
                let ce = tape.softmax_cross_entropy(logits, &labels, directive.active_units)?;
                let mut loss = ce;

                if use_beta {
                    let norms = tape.row_l2_norm(s)?;
                    let pen = tape.mean(norms);
                    let scaled = tape.scale(pen, cfg.reg.beta);
                    loss = tape.add(loss, scaled)?;
                }
                if use_cw {
                    let gen = frozen_gen.expect("checked above");
                    let z = sample_noise(chunk.len(), gen.noise_dim(), &mut noise_rng);
                    let generated = gen.forward(&z)?;
                    let current = SampleBatch::new(tape.value(s).clone())?;
                    let bw = silverman_bandwidth(&generated, &current)?;
                    let g_id = tape.constant(generated.points().clone());
                    let d2 = cw_distance_sq_tape(&mut tape, g_id, s, bw)?;
                    let scaled = tape.scale(d2, cfg.reg.lambda);
                    loss = tape.add(loss, scaled)?;
                }
                if use_l2 {
                    for (pid, prev) in theta_ids.iter().zip(&prev_consts) {
                        let anchor = tape.constant(prev.clone());
                        let diff = tape.sub(*pid, anchor)?;
                        let sq = tape.square(diff);
                        let ssq = tape.sum(sq);
                        let scaled = tape.scale(ssq, cfg.lambda_w);
                        loss = tape.add(loss, scaled)?;
                    }
                }

                let loss_value = tape.value(loss).item();
                if !loss_value.is_finite() {
                    return Err(CwError::NonFinite(format!(
                        "loss {loss_value} on task {} batch {}",
                        task + 1,
                        trace.len()
                    )));
                }
                tape.backward(loss)?;

                let mut grads = Vec::with_capacity(theta_ids.len() + head_ids.len());
                for id in theta_ids.iter().chain(head_ids.iter()) {
                    grads.push(tape.grad_or_zeros(*id));
                }
                let mut params: Vec<&mut Tensor> = net.params_mut();
                params.extend(heads.head_mut(directive.head_index)?.w_b_mut());
                opt.step(&mut params, &grads)?;

                trace.push(loss_value);
                epoch_sum += loss_value;
                epoch_batches += 1;
            }
            epoch_means.push(epoch_sum / epoch_batches.max(1) as f64);
        }
        Ok((trace, epoch_means))
    }

    /// First task: plain objective (no generator exists yet).
    pub fn solve_first_task(
        &self,
        net: &mut FeatureNet,
        heads: &mut HeadSet,
        stream: &TaskStream,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.solve_task(net, heads, stream, 0, None, None)
    }

    /// Subsequent task under the configured method.
    pub fn solve_subsequent_task(
        &self,
        net: &mut FeatureNet,
        heads: &mut HeadSet,
        stream: &TaskStream,
        task: usize,
        frozen_gen: Option<&Generator>,
        prev_theta: Option<&[Tensor]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if task == 0 {
            return Err(CwError::Sequencing("task index must be >= 1".into()));
        }
        self.solve_task(net, heads, stream, task, frozen_gen, prev_theta)
    }

    /// Fit the generator to the frozen net's target-layer distribution on
    /// `data`, minimizing the squared Cramer-Wold distance per mini-batch
    /// with a per-batch Silverman bandwidth.
    pub fn train_generator(
        &self,
        gen: &mut Generator,
        frozen_net: &FeatureNet,
        data: &LabeledDataset,
        task: usize,
        prev_gen: Option<&Generator>,
    ) -> Result<GeneratorReport> {
        if self.cfg.reg.generator_replay_fraction > 0.0 && prev_gen.is_none() {
            return Err(CwError::Config(
                "generator replay requested with no previous generator".into(),
            ));
        }
        self.train_generator_impl(
            gen,
            frozen_net,
            data,
            task,
            prev_gen,
            self.cfg.reg.generator_replay_fraction,
        )
    }

    fn train_generator_impl(
        &self,
        gen: &mut Generator,
        frozen_net: &FeatureNet,
        data: &LabeledDataset,
        task: usize,
        prev_gen: Option<&Generator>,
        replay_fraction: f64,
    ) -> Result<GeneratorReport> {
        let cfg = self.cfg;
        if gen.out_dim() != frozen_net.target_dim() {
            return Err(CwError::Shape {
                op: "train_generator",
                lhs: vec![gen.out_dim()],
                rhs: vec![frozen_net.target_dim()],
            });
        }
        if cfg.reg.generator_cold_start {
            *gen = Generator::new(&gen.widths(), self.seed ^ ((task as u64) << 32))?;
        }

        let mut opt = Optimizer::for_params(OptimizerKind::Adam, cfg.generator_lr, &gen.params());
        let mut shuffle_rng = derive_rng(self.seed, &format!("gen-shuffle-t{task}"));
        let mut noise_rng = derive_rng(self.seed, &format!("gen-noise-t{task}"));
        let mut replay_rng = derive_rng(self.seed, &format!("gen-replay-noise-t{task}"));

        let mut trace = Vec::new();
        for _epoch in 0..cfg.reg.generator_epochs {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut shuffle_rng);
            for chunk in idx.chunks(cfg.batch_size) {
                let b = chunk.len();
                let replay = ((replay_fraction * b as f64).round() as usize).min(b);

                let images = data.images.gather_rows(&chunk[..b - replay]);
                let mut target = frozen_net.forward(&images)?.points().clone();
                if replay > 0 {
                    let prev = prev_gen.expect("checked above");
                    let z = sample_noise(replay, prev.noise_dim(), &mut replay_rng);
                    let extra = prev.forward(&z)?;
                    let mut values = target.values().to_vec();
                    values.extend_from_slice(extra.points().values());
                    target = Tensor::new(vec![b, target.cols()], values)?;
                }

                let z = sample_noise(b, gen.noise_dim(), &mut noise_rng);
                let mut tape = Tape::new();
                let zi = tape.constant(z);
                let (out, gamma_ids) = gen.forward_tape(&mut tape, zi)?;
                let bw = silverman_bandwidth(
                    &SampleBatch::new(target.clone())?,
                    &SampleBatch::new(tape.value(out).clone())?,
                )?;
                let t_id = tape.constant(target);
                let d2 = cw_distance_sq_tape(&mut tape, t_id, out, bw)?;
                let loss_value = tape.value(d2).item();
                if !loss_value.is_finite() {
                    return Err(CwError::NonFinite(format!(
                        "generator loss {loss_value} on task {}",
                        task + 1
                    )));
                }
                tape.backward(d2)?;
                let grads: Vec<Tensor> =
                    gamma_ids.iter().map(|id| tape.grad_or_zeros(*id)).collect();
                opt.step(&mut gen.params_mut(), &grads)?;
                trace.push(loss_value);
            }
        }
        Ok(GeneratorReport { loss_trace: trace })
    }

    /// Full alternation over a stream: solve task 1, then for each later
    /// task retrain the generator on the finished task and solve under the
    /// penalty. Evaluates all completed tasks after every task.
    pub fn run_sequence(
        &self,
        stream: &TaskStream,
        feature_widths: &[usize],
        generator_widths: &[usize],
    ) -> Result<SequenceOutcome> {
        if stream.is_empty() {
            return Err(CwError::Config("empty task stream".into()));
        }
        let cfg = self.cfg;
        let wants_generator = matches!(cfg.method, Method::CwTalar) && cfg.reg.lambda != 0.0;

        let mut net = FeatureNet::new(feature_widths, self.seed)?;
        let mut heads = HeadSet::new(
            stream.head_policy(),
            net.target_dim(),
            stream.units_per_task,
            self.seed,
        );
        let mut gen = if wants_generator {
            Some(Generator::new(generator_widths, self.seed)?)
        } else {
            None
        };
        if let Some(g) = &gen {
            if g.out_dim() != net.target_dim() {
                return Err(CwError::Config(format!(
                    "generator output {} does not match target dim {}",
                    g.out_dim(),
                    net.target_dim()
                )));
            }
        }

        let mut solutions: Vec<TaskSolution> = Vec::with_capacity(stream.len());
        let mut rows: Vec<MetricsRow> = Vec::new();
        let mut prev_gen_snapshot: Option<Generator> = None;

        for task in 0..stream.len() {
            let (trace, epoch_means) = if task == 0 {
                self.solve_first_task(&mut net, &mut heads, stream)
            } else {
                let prev_theta = solutions[task - 1].theta.clone();
                self.solve_subsequent_task(
                    &mut net,
                    &mut heads,
                    stream,
                    task,
                    prev_gen_snapshot.as_ref(),
                    Some(&prev_theta),
                )
            }
            .map_err(|e| e.with_task(task))?;

            let directive = resolve_head(stream, task, task + 1)?;
            let theta: Vec<Tensor> = net.params().into_iter().cloned().collect();
            let head: Vec<Tensor> = heads
                .head(directive.head_index)?
                .w_b()
                .into_iter()
                .cloned()
                .collect();
            let mut solution = TaskSolution {
                task,
                theta,
                head,
                generator: None,
                loss_trace: trace,
                epoch_mean_loss: epoch_means,
                snapshot_hash: 0,
            };
            solution.snapshot_hash = solution.rehash();

            // retrain the generator on this task's frozen features before
            // the next task; the final task needs none
            if wants_generator && task + 1 < stream.len() {
                let g = gen.as_mut().expect("generator exists when wanted");
                // replay only has a source once a previous generator exists
                let replay = if prev_gen_snapshot.is_some() {
                    cfg.reg.generator_replay_fraction
                } else {
                    0.0
                };
                self.train_generator_impl(
                    g,
                    &net,
                    &stream.tasks[task].train,
                    task,
                    prev_gen_snapshot.as_ref(),
                    replay,
                )
                .map_err(|e| e.with_task(task))?;
                solution.generator = Some(g.params().into_iter().cloned().collect());
                prev_gen_snapshot = Some(g.clone());
            }
            solutions.push(solution);

            for (i, acc) in evaluate(&net, &heads, stream, task)?
                .into_iter()
                .enumerate()
            {
                rows.push(MetricsRow {
                    seed: self.seed,
                    method: cfg.method.name().to_string(),
                    scenario: stream.scenario,
                    checkpoint: task + 1,
                    task: i + 1,
                    accuracy: acc,
                });
            }
        }

        Ok(SequenceOutcome {
            solutions,
            metrics: MetricsTable::from_rows(rows),
        })
    }
}

/// Squared Cramer-Wold distance between two nets' target-layer outputs on
/// the first `cap` samples of `data`; the drift probe behind the
/// regularization gates.
pub fn target_layer_drift(
    net_a: &FeatureNet,
    net_b: &FeatureNet,
    data: &LabeledDataset,
    cap: usize,
) -> Result<f64> {
    let n = data.len().min(cap);
    let idx: Vec<usize> = (0..n).collect();
    let images = data.images.gather_rows(&idx);
    let a = net_a.forward(&images)?;
    let b = net_b.forward(&images)?;
    let bw = silverman_bandwidth(&a, &b)?;
    cw_distance_sq(&a, &b, bw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blob_split;
    use crate::scenarios::{build_split_tasks, consecutive_pairs, Scenario};

    fn blob_stream(scenario: Scenario) -> TaskStream {
        let (train, test) = synthetic_blob_split(4, 32, 48, 16, 0.25, 21).unwrap();
        build_split_tasks(&train, &test, &consecutive_pairs(4), scenario).unwrap()
    }

    fn tiny_cfg(method: Method, lambda: f64, beta: f64) -> TrainerConfig {
        TrainerConfig {
            method,
            reg: RegularizationConfig {
                lambda,
                beta,
                generator_epochs: 2,
                ..Default::default()
            },
            epochs_per_task: 2,
            batch_size: 32,
            lr_first: 1e-3,
            lr_later: 1e-3,
            generator_lr: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn separable_blobs_learned_quickly() {
        let (train, test) = synthetic_blob_split(2, 64, 128, 32, 0.15, 22).unwrap();
        let stream = build_split_tasks(&train, &test, &[(0, 1)], Scenario::Idl).unwrap();
        let cfg = TrainerConfig {
            method: Method::NaiveAdam,
            epochs_per_task: 4,
            batch_size: 32,
            lr_first: 1e-3,
            ..Default::default()
        };
        let trainer = Trainer::new(&cfg, 1);
        let out = trainer
            .run_sequence(&stream, &[64, 48, 32], &[8, 16, 32])
            .unwrap();
        let acc = out.metrics.accuracy(1, 1, 1).unwrap();
        assert!(acc > 0.99, "train-able blobs reached only {acc}");
    }

    #[test]
    fn loss_trace_finite_and_epoch_means_nonincreasing() {
        let stream = blob_stream(Scenario::Idl);
        let cfg = tiny_cfg(Method::NaiveAdam, 0.0, 0.0);
        let trainer = Trainer::new(&cfg, 2);
        let out = trainer
            .run_sequence(&stream, &[32, 32, 24], &[8, 16, 24])
            .unwrap();
        let sol = &out.solutions[0];
        assert!(sol.loss_trace.iter().all(|v| v.is_finite()));
        for w in sol.epoch_mean_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "epoch means rose: {w:?}");
        }
    }

    #[test]
    fn lambda_zero_matches_naive_bitwise() {
        let stream = blob_stream(Scenario::Idl);
        let cw_cfg = tiny_cfg(Method::CwTalar, 0.0, 0.0);
        let naive_cfg = tiny_cfg(Method::NaiveAdam, 0.0, 0.0);
        let a = Trainer::new(&cw_cfg, 3)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        let b = Trainer::new(&naive_cfg, 3)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        for (sa, sb) in a.solutions.iter().zip(&b.solutions) {
            assert_eq!(sa.snapshot_hash, sb.snapshot_hash, "task {}", sa.task);
        }
    }

    #[test]
    fn l2_zero_matches_naive_bitwise() {
        let stream = blob_stream(Scenario::Idl);
        let mut l2_cfg = tiny_cfg(Method::L2Baseline, 0.0, 0.0);
        l2_cfg.lambda_w = 0.0;
        let naive_cfg = tiny_cfg(Method::NaiveAdam, 0.0, 0.0);
        let a = Trainer::new(&l2_cfg, 4)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        let b = Trainer::new(&naive_cfg, 4)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        for (sa, sb) in a.solutions.iter().zip(&b.solutions) {
            assert_eq!(sa.snapshot_hash, sb.snapshot_hash);
        }
    }

    #[test]
    fn huge_l2_pull_freezes_shared_parameters() {
        let stream = blob_stream(Scenario::Idl);
        let mut cfg = tiny_cfg(Method::L2Baseline, 0.0, 0.0);
        cfg.lambda_w = 1e6;
        cfg.lr_later = 1e-5;
        let out = Trainer::new(&cfg, 5)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        let t1 = &out.solutions[0].theta;
        let t2 = &out.solutions[1].theta;
        let max_move = t1
            .iter()
            .zip(t2)
            .flat_map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0f64, f64::max);
        assert!(max_move < 1e-3, "theta moved {max_move}");
    }

    #[test]
    fn generator_never_touched_by_task_solving() {
        let stream = blob_stream(Scenario::Idl);
        let cfg = tiny_cfg(Method::CwTalar, 50.0, 1e-3);
        let trainer = Trainer::new(&cfg, 6);

        let mut net = FeatureNet::new(&[32, 28, 20], 6).unwrap();
        let mut heads = HeadSet::new(stream.head_policy(), 20, 2, 6);
        trainer
            .solve_first_task(&mut net, &mut heads, &stream)
            .unwrap();

        let mut gen = Generator::new(&[8, 12, 20], 6).unwrap();
        trainer
            .train_generator(&mut gen, &net, &stream.tasks[0].train, 0, None)
            .unwrap();
        let frozen_hash = hash_tensors(&gen.params());

        trainer
            .solve_subsequent_task(&mut net, &mut heads, &stream, 1, Some(&gen), None)
            .unwrap();
        assert_eq!(hash_tensors(&gen.params()), frozen_hash);
    }

    #[test]
    fn missing_generator_is_sequencing_error() {
        let stream = blob_stream(Scenario::Idl);
        let cfg = tiny_cfg(Method::CwTalar, 10.0, 0.0);
        let trainer = Trainer::new(&cfg, 7);
        let mut net = FeatureNet::new(&[32, 28, 20], 7).unwrap();
        let mut heads = HeadSet::new(stream.head_policy(), 20, 2, 7);
        trainer
            .solve_first_task(&mut net, &mut heads, &stream)
            .unwrap();
        let err = trainer
            .solve_subsequent_task(&mut net, &mut heads, &stream, 1, None, None)
            .unwrap_err();
        assert!(matches!(err, CwError::Sequencing(_)), "{err}");
    }

    #[test]
    fn replay_without_prev_generator_rejected() {
        let stream = blob_stream(Scenario::Idl);
        let mut cfg = tiny_cfg(Method::CwTalar, 10.0, 0.0);
        cfg.reg.generator_replay_fraction = 0.25;
        let trainer = Trainer::new(&cfg, 8);
        let net = FeatureNet::new(&[32, 28, 20], 8).unwrap();
        let mut gen = Generator::new(&[8, 12, 20], 8).unwrap();
        let err = trainer
            .train_generator(&mut gen, &net, &stream.tasks[0].train, 0, None)
            .unwrap_err();
        assert!(matches!(err, CwError::Config(_)), "{err}");
    }

    #[test]
    fn frozen_snapshots_stay_frozen() {
        let stream = blob_stream(Scenario::Itl);
        let cfg = tiny_cfg(Method::CwTalar, 10.0, 1e-3);
        let out = Trainer::new(&cfg, 9)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        for sol in &out.solutions {
            assert_eq!(sol.snapshot_hash, sol.rehash(), "task {}", sol.task);
        }
    }

    #[test]
    fn generator_retrained_n_minus_1_times() {
        let stream = blob_stream(Scenario::Idl);
        let cfg = tiny_cfg(Method::CwTalar, 10.0, 0.0);
        let out = Trainer::new(&cfg, 10)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        let trained: usize = out
            .solutions
            .iter()
            .filter(|s| s.generator.is_some())
            .count();
        assert_eq!(trained, stream.len() - 1);
        assert!(out.solutions.last().unwrap().generator.is_none());
    }

    #[test]
    fn single_task_stream_trains_no_generator() {
        let (train, test) = synthetic_blob_split(2, 32, 32, 8, 0.2, 23).unwrap();
        let stream = build_split_tasks(&train, &test, &[(0, 1)], Scenario::Idl).unwrap();
        let cfg = tiny_cfg(Method::CwTalar, 10.0, 1e-3);
        let out = Trainer::new(&cfg, 11)
            .run_sequence(&stream, &[32, 28, 20], &[8, 12, 20])
            .unwrap();
        assert_eq!(out.solutions.len(), 1);
        assert!(out.solutions[0].generator.is_none());
        assert_eq!(out.metrics.rows.len(), 1);
    }
}
