//! The acceptance checks behind `cwtalar selftest` and the acceptance
//! test target: a fast property suite (kernel correctness, exactness
//! anchors, gradient integrity, generator sanity, reductions,
//! determinism) and the slower desk-scale experiment gates.

use std::fmt::Write as _;

use crate::cw::{
    cw_distance_mc_oracle, cw_distance_sq, cw_distance_sq_tape, silverman_bandwidth, SampleBatch,
};
use crate::data::{synthetic_blob_split, synthetic_blobs};
use crate::error::Result;
use crate::gradcheck::finite_diff_check;
use crate::harness::{
    default_lambda, feature_widths, generator_widths, run_experiment, trainer_config, MetricsTable,
    Profile, RunConfig, StreamKind,
};
use crate::models::{sample_noise, FeatureNet, Generator, HeadSet};
use crate::rng::derive_rng;
use crate::scenarios::{build_split_tasks, Scenario};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::trainer::{target_layer_drift, Method, Trainer};

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} [{}] {} — {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn outcome(
    id: usize,
    name: &'static str,
    run: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionResult {
    match run() {
        Ok((passed, detail)) => CriterionResult {
            id,
            name,
            passed,
            detail,
        },
        Err(e) => CriterionResult {
            id,
            name,
            passed: false,
            detail: format!("errored: {e}"),
        },
    }
}

fn gaussian_batch(n: usize, d: usize, seed: u64) -> SampleBatch {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = derive_rng(seed, "selftest-gaussian");
    let values: Vec<f64> = (0..n * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    SampleBatch::new(Tensor::new(vec![n, d], values).expect("sized")).expect("finite")
}

/// 1: closed form vs Monte-Carlo projection oracle, < 5% relative
/// disagreement over D x n x 5 seeds at 10,000 projections.
pub fn criterion_1_kernel_vs_oracle() -> CriterionResult {
    outcome(1, "cw kernel vs MC oracle", || {
        let mut worst: f64 = 0.0;
        let mut worst_at = String::new();
        for &d in &[20usize, 32, 64] {
            for &n in &[32usize, 128] {
                for seed in 0..5u64 {
                    let x = gaussian_batch(n, d, 1000 + seed * 2);
                    let y = gaussian_batch(n, d, 1001 + seed * 2);
                    let bw = silverman_bandwidth(&x, &y)?;
                    let closed = cw_distance_sq(&x, &y, bw)?;
                    let oracle = cw_distance_mc_oracle(&x, &y, bw, 10_000, 500 + seed)?;
                    let rel = (closed - oracle).abs() / oracle.abs().max(1e-12);
                    if rel > worst {
                        worst = rel;
                        worst_at = format!("D={d} n={n} seed={seed}");
                    }
                }
            }
        }
        Ok((
            worst < 0.05,
            format!("worst relative disagreement {worst:.4} at {worst_at} (limit 0.05)"),
        ))
    })
}

/// 2: d²(X, X) exactly zero and the single-pair hand value to 1e-6.
pub fn criterion_2_exactness_anchors() -> CriterionResult {
    outcome(2, "exactness anchors", || {
        let x = gaussian_batch(32, 20, 77);
        let self_dist = cw_distance_sq(&x, &x, crate::cw::Bandwidth::new(1.0)?)?;

        let mut far = vec![0.0; 20];
        far[0] = 37.0f64.sqrt();
        let a = SampleBatch::new(Tensor::new(vec![1, 20], far)?)?;
        let b = SampleBatch::new(Tensor::zeros(&[1, 20]))?;
        let pair = cw_distance_sq(&a, &b, crate::cw::Bandwidth::new(1.0)?)?;
        let expect = (2.0 - 2.0 / 2.0f64.sqrt()) / (2.0 * std::f64::consts::PI.sqrt());
        let err = (pair - expect).abs();
        Ok((
            self_dist == 0.0 && err < 1e-6,
            format!("d²(X,X) = {self_dist}; single-pair error {err:.2e} (limit 1e-6)"),
        ))
    })
}

/// 3: finite differences vs analytic gradients for the distance, the
/// masked cross-entropy, and the full composed training objective.
pub fn criterion_3_gradient_integrity() -> CriterionResult {
    outcome(3, "gradient integrity", || {
        let mut worst: f64 = 0.0;

        // cw_distance_sq w.r.t. both batches
        {
            let x0 = gaussian_batch(8, 20, 90);
            let y0 = gaussian_batch(6, 20, 91);
            let bw = silverman_bandwidth(&x0, &y0)?;
            let mut params = vec![x0.points().clone(), y0.points().clone()];
            let rep = finite_diff_check(
                |ps| {
                    let mut t = Tape::new();
                    let x = t.param(&ps[0]);
                    let y = t.param(&ps[1]);
                    let d = cw_distance_sq_tape(&mut t, x, y, bw)?;
                    t.backward(d)?;
                    Ok((
                        t.value(d).item(),
                        vec![t.grad_or_zeros(x), t.grad_or_zeros(y)],
                    ))
                },
                |ps| {
                    cw_distance_sq(
                        &SampleBatch::new(ps[0].clone())?,
                        &SampleBatch::new(ps[1].clone())?,
                        bw,
                    )
                },
                &mut params,
                1e-5,
            )?;
            worst = worst.max(rep.max_rel_err);
        }

        // softmax cross-entropy on random 4x3 logits with masking
        {
            use rand::Rng;
            let mut rng = derive_rng(92, "selftest-logits");
            let vals: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut params = vec![Tensor::new(vec![4, 3], vals)?];
            let labels = [0usize, 1, 0, 1];
            let rep = finite_diff_check(
                |ps| {
                    let mut t = Tape::new();
                    let l = t.param(&ps[0]);
                    let loss = t.softmax_cross_entropy(l, &labels, 2)?;
                    t.backward(loss)?;
                    Ok((t.value(loss).item(), vec![t.grad_or_zeros(l)]))
                },
                |ps| {
                    let mut t = Tape::new();
                    let l = t.constant(ps[0].clone());
                    let loss = t.softmax_cross_entropy(l, &labels, 2)?;
                    Ok(t.value(loss).item())
                },
                &mut params,
                1e-5,
            )?;
            worst = worst.max(rep.max_rel_err);
        }

        // composed objective: CE + λ·cw(G(Z), f(X)) + β·mean row norm,
        // with the bandwidth frozen as during a training step
        {
            let net = FeatureNet::new(&[12, 24, 20], 93)?;
            let gen = Generator::new(&[8, 12, 20], 94)?;
            let data = synthetic_blobs(2, 12, 8, 0.3, 95)?;
            let z = sample_noise(8, 8, &mut derive_rng(96, "selftest-z"));
            let generated = gen.forward(&z)?;
            let labels = data.labels.clone();
            let images = data.images.clone();
            let (lambda, beta) = (5.0, 1e-2);

            let mut heads = HeadSet::new(crate::scenarios::HeadPolicy::SingleFixed, 20, 2, 97);
            heads.ensure_task(0)?;
            let head = heads.head(0)?.clone();

            let bw = silverman_bandwidth(&generated, &net.forward(&images)?)?;
            let mut params: Vec<Tensor> = net.params().into_iter().cloned().collect();
            params.push(head.w.clone());
            params.push(head.b.clone());

            let eval = |ps: &[Tensor], want_grads: bool| -> Result<(f64, Vec<Tensor>)> {
                let mut net = net.clone();
                net.set_params(&ps[..ps.len() - 2]);
                let mut head = head.clone();
                head.w = ps[ps.len() - 2].clone();
                head.b = ps[ps.len() - 1].clone();

                let mut t = Tape::new();
                let x = t.constant(images.clone());
                let (s, theta_ids) = net.forward_tape(&mut t, x)?;
                let mut ids = theta_ids;
                let w = t.param(&head.w);
                let b = t.param(&head.b);
                ids.push(w);
                ids.push(b);
                let wx = t.matmul(s, w)?;
                let logits = t.add_bias(wx, b)?;
                let ce = t.softmax_cross_entropy(logits, &labels, 2)?;
                let g_id = t.constant(generated.points().clone());
                let d2 = cw_distance_sq_tape(&mut t, g_id, s, bw)?;
                let d2s = t.scale(d2, lambda);
                let norms = t.row_l2_norm(s)?;
                let pen = t.mean(norms);
                let pens = t.scale(pen, beta);
                let partial = t.add(ce, d2s)?;
                let loss = t.add(partial, pens)?;
                let value = t.value(loss).item();
                if !want_grads {
                    return Ok((value, Vec::new()));
                }
                t.backward(loss)?;
                Ok((value, ids.iter().map(|id| t.grad_or_zeros(*id)).collect()))
            };
            let rep = finite_diff_check(
                |ps| eval(ps, true),
                |ps| eval(ps, false).map(|(v, _)| v),
                &mut params,
                1e-5,
            )?;
            worst = worst.max(rep.max_rel_err);
        }

        Ok((
            worst < 1e-4,
            format!("worst relative gradient error {worst:.2e} (limit 1e-4)"),
        ))
    })
}

/// 4: ten generator epochs shrink the distance to a fixed 256-point
/// cloud in D=64 by at least 10x.
pub fn criterion_4_generator_sanity() -> CriterionResult {
    outcome(4, "generator optimization sanity", || {
        let data = synthetic_blobs(8, 32, 32, 0.3, 40)?;
        let net = FeatureNet::new(&[32, 64, 64], 41)?;
        let cloud = net.forward(&data.images)?;
        let mut gen = Generator::new(&[8, 16, 32, 64], 42)?;

        let dist = |g: &Generator| -> Result<f64> {
            let z = sample_noise(256, 8, &mut derive_rng(1, "gen-sanity-z"));
            let out = g.forward(&z)?;
            let bw = silverman_bandwidth(&cloud, &out)?;
            cw_distance_sq(&cloud, &out, bw)
        };
        let initial = dist(&gen)?;
        let cfg = crate::trainer::TrainerConfig {
            method: Method::CwTalar,
            reg: crate::trainer::RegularizationConfig {
                lambda: 1.0,
                generator_epochs: 10,
                ..Default::default()
            },
            batch_size: 16,
            generator_lr: 1e-2,
            ..Default::default()
        };
        Trainer::new(&cfg, 43).train_generator(&mut gen, &net, &data, 0, None)?;
        let final_dist = dist(&gen)?;
        Ok((
            final_dist * 10.0 <= initial,
            format!(
                "distance {initial:.4} -> {final_dist:.4}, reduction {:.1}x (need >= 10x)",
                initial / final_dist
            ),
        ))
    })
}

/// 5: λ = β = 0 runs bit-identical to naive Adam; λ_w = 0 L2 baseline
/// bit-identical to naive.
pub fn criterion_5_reductions() -> CriterionResult {
    outcome(5, "baseline reductions", || {
        let (train, test) = synthetic_blob_split(4, 24, 100, 20, 0.3, 50)?;
        let stream = build_split_tasks(
            &train,
            &test,
            &crate::scenarios::consecutive_pairs(4),
            Scenario::Idl,
        )?;
        let fw = vec![24, 32, 20];
        let gw = vec![8, 12, 20];

        let mut base = RunConfig::default();
        base.scenario = Scenario::Idl;
        base.epochs = Some(2);
        base.batch_size = 32;
        base.lr_first = 1e-3;
        base.lr_later = Some(1e-3);

        let run = |method: Method, lambda: f64, beta: f64, lambda_w: f64| -> Result<Vec<u64>> {
            let mut cfg = base.clone();
            cfg.method = method;
            cfg.lambda = Some(lambda);
            cfg.beta = beta;
            cfg.lambda_w = lambda_w;
            let tcfg = trainer_config(&cfg);
            let out = Trainer::new(&tcfg, 5).run_sequence(&stream, &fw, &gw)?;
            Ok(out.solutions.iter().map(|s| s.snapshot_hash).collect())
        };

        let naive = run(Method::NaiveAdam, 0.0, 0.0, 0.0)?;
        let cw0 = run(Method::CwTalar, 0.0, 0.0, 0.0)?;
        let l2_0 = run(Method::L2Baseline, 0.0, 0.0, 0.0)?;
        let cw_matches = naive == cw0;
        let l2_matches = naive == l2_0;
        Ok((
            cw_matches && l2_matches,
            format!("λ=β=0 trajectory identical: {cw_matches}; λ_w=0 identical: {l2_matches}"),
        ))
    })
}

/// 6: identical config and seed produce identical CSV bytes.
pub fn criterion_6_determinism() -> CriterionResult {
    outcome(6, "determinism of experiment output", || {
        let tmp = std::env::temp_dir().join(format!("cwtalar-selftest-{}", std::process::id()));
        let mut cfg = RunConfig::default();
        cfg.scenario = Scenario::Idl;
        cfg.seeds = vec![1];
        cfg.classes = 4;
        cfg.blob_dim = Some(24);
        cfg.blob_spread = Some(0.3);
        cfg.train_per_class = Some(48);
        cfg.test_per_class = Some(16);
        cfg.epochs = Some(1);
        cfg.generator_epochs = 2;
        cfg.method = Method::CwTalar;
        cfg.lambda = Some(10.0);

        cfg.out_dir = tmp.join("a");
        let a = run_experiment(&cfg)?;
        cfg.out_dir = tmp.join("b");
        let b = run_experiment(&cfg)?;
        let csv_a = std::fs::read(tmp.join("a/metrics.csv"))?;
        let csv_b = std::fs::read(tmp.join("b/metrics.csv"))?;
        let _ = std::fs::remove_dir_all(&tmp);
        let same = csv_a == csv_b && a.rows.len() == b.rows.len();
        Ok((
            same,
            format!("{} rows, byte-identical: {same}", a.rows.len()),
        ))
    })
}

fn desk_config(scenario: Scenario, stream: StreamKind, method: Method) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario = scenario;
    cfg.stream = stream;
    cfg.method = method;
    cfg.seeds = vec![1, 2, 3];
    cfg
}

fn end_avg(table: &MetricsTable) -> f64 {
    table
        .end_average_stats()
        .map(|(m, _)| m)
        .unwrap_or(f64::NAN)
}

fn gate_dir(tag: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("cwtalar-gate-{tag}-{}", std::process::id()))
}

/// 7: on the domain-incremental split stream the regularizer beats naive
/// Adam by at least 10 end-average points.
pub fn criterion_7_idl_ordering() -> CriterionResult {
    outcome(7, "IDL ordering", || {
        let dir = gate_dir("idl");
        let mut naive = desk_config(Scenario::Idl, StreamKind::Split, Method::NaiveAdam);
        naive.out_dir = dir.join("naive");
        let n = end_avg(&run_experiment(&naive)?);
        let mut cw = desk_config(Scenario::Idl, StreamKind::Split, Method::CwTalar);
        cw.out_dir = dir.join("cw");
        let c = end_avg(&run_experiment(&cw)?);
        let _ = std::fs::remove_dir_all(&dir);
        Ok((
            c - n >= 0.10,
            format!(
                "naive {:.1}% vs regularized {:.1}%: margin {:+.1} points (need >= +10)",
                n * 100.0,
                c * 100.0,
                (c - n) * 100.0
            ),
        ))
    })
}

/// 8: naive Adam collapses to the last pair on the class-incremental
/// stream (17–23%); the regularizer reaches at least 30%.
pub fn criterion_8_icl_collapse_and_rescue() -> CriterionResult {
    outcome(8, "ICL collapse and rescue", || {
        let dir = gate_dir("icl");
        let mut naive = desk_config(Scenario::Icl, StreamKind::Split, Method::NaiveAdam);
        naive.out_dir = dir.join("naive");
        let n = end_avg(&run_experiment(&naive)?);
        let mut cw = desk_config(Scenario::Icl, StreamKind::Split, Method::CwTalar);
        cw.out_dir = dir.join("cw");
        let c = end_avg(&run_experiment(&cw)?);
        let _ = std::fs::remove_dir_all(&dir);
        let collapse = (0.17..=0.23).contains(&n);
        let rescue = c >= 0.30;
        Ok((
            collapse && rescue,
            format!(
                "naive {:.1}% (need 17–23), regularized {:.1}% (need >= 30)",
                n * 100.0,
                c * 100.0
            ),
        ))
    })
}

/// 9: task-incremental competence: at least 90% end-average and no
/// intransigence relative to naive Adam (within 3 points below).
pub fn criterion_9_itl_competence() -> CriterionResult {
    outcome(9, "ITL competence", || {
        let dir = gate_dir("itl");
        let mut naive = desk_config(Scenario::Itl, StreamKind::Split, Method::NaiveAdam);
        naive.out_dir = dir.join("naive");
        let n = end_avg(&run_experiment(&naive)?);
        let mut cw = desk_config(Scenario::Itl, StreamKind::Split, Method::CwTalar);
        cw.out_dir = dir.join("cw");
        let c = end_avg(&run_experiment(&cw)?);
        let _ = std::fs::remove_dir_all(&dir);
        Ok((
            c >= 0.90 && c >= n - 0.03,
            format!(
                "regularized {:.1}% (need >= 90), naive {:.1}% (allowed gap 3 points)",
                c * 100.0,
                n * 100.0
            ),
        ))
    })
}

/// 10: permuted-stream IDL over 3 tasks: the regularizer matches or beats
/// naive SGD and retains task 1 within 15 points of its post-task value.
pub fn criterion_10_permuted_idl() -> CriterionResult {
    outcome(10, "permuted IDL retention", || {
        let dir = gate_dir("perm");
        let mut sgd = desk_config(Scenario::Idl, StreamKind::Permuted, Method::NaiveSgd);
        sgd.permuted_tasks = 3;
        sgd.out_dir = dir.join("sgd");
        let s = end_avg(&run_experiment(&sgd)?);
        let mut cw = desk_config(Scenario::Idl, StreamKind::Permuted, Method::CwTalar);
        cw.permuted_tasks = 3;
        cw.out_dir = dir.join("cw");
        let table = run_experiment(&cw)?;
        let c = end_avg(&table);
        let post1 = table.post_task_accuracy_mean(1).unwrap_or(f64::NAN);
        let final1 = table.final_task_accuracy_mean(1).unwrap_or(f64::NAN);
        let drop = post1 - final1;
        let _ = std::fs::remove_dir_all(&dir);
        Ok((
            c >= s && drop <= 0.15,
            format!(
                "sgd {:.1}% vs regularized {:.1}%; task-1 drop {:.1} points (need <= 15)",
                s * 100.0,
                c * 100.0,
                drop * 100.0
            ),
        ))
    })
}

/// 11: with the tuned λ the task-1 target-layer distribution drifts at
/// least 5x less over task-2 training than without regularization,
/// measured on a high-interference two-task stream with the same seed.
pub fn criterion_11_drift_suppression() -> CriterionResult {
    outcome(11, "target-layer drift suppression", || {
        let seed = 1u64;
        let lambda_star = default_lambda(Scenario::Idl, StreamKind::Split);
        let free = drift_after_second_task(0.0, seed)?;
        let held = drift_after_second_task(lambda_star, seed)?;
        Ok((
            held * 5.0 <= free,
            format!(
                "drift {free:.4} free vs {held:.4} at λ={lambda_star}: {:.1}x suppression (need >= 5x)",
                free / held
            ),
        ))
    })
}

/// Drift of task-1 target-layer outputs over task-2 training on a
/// two-task split stream with heavy class overlap.
pub fn drift_after_second_task(lambda: f64, seed: u64) -> Result<f64> {
    let (train, test) = synthetic_blob_split(4, 16, 1000, 200, 0.6, 7)?;
    let stream = build_split_tasks(&train, &test, &[(0, 1), (2, 3)], Scenario::Idl)?;
    let mut cfg = RunConfig::default();
    cfg.scenario = Scenario::Idl;
    cfg.method = Method::CwTalar;
    cfg.lambda = Some(lambda);
    let tcfg = trainer_config(&cfg);
    let fw = feature_widths(Profile::Desk, 16);
    let gw = generator_widths(Profile::Desk);
    let out = Trainer::new(&tcfg, seed).run_sequence(&stream, &fw, &gw)?;

    let mut before = FeatureNet::new(&fw, seed)?;
    before.set_params(&out.solutions[0].theta);
    let mut after = FeatureNet::new(&fw, seed)?;
    after.set_params(&out.solutions[1].theta);
    target_layer_drift(&before, &after, &stream.tasks[0].train, 512)
}

/// Criteria 1–6; runs in well under two minutes.
pub fn property_suite() -> Vec<CriterionResult> {
    vec![
        criterion_1_kernel_vs_oracle(),
        criterion_2_exactness_anchors(),
        criterion_3_gradient_integrity(),
        criterion_4_generator_sanity(),
        criterion_5_reductions(),
        criterion_6_determinism(),
    ]
}

/// Criteria 7–11, the desk-scale experiment gates.
pub fn experiment_gates() -> Vec<CriterionResult> {
    vec![
        criterion_7_idl_ordering(),
        criterion_8_icl_collapse_and_rescue(),
        criterion_9_itl_competence(),
        criterion_10_permuted_idl(),
        criterion_11_drift_suppression(),
    ]
}

/// Render results and an overall verdict; true when everything passed.
pub fn report(results: &[CriterionResult]) -> (String, bool) {
    let mut out = String::new();
    let mut all = true;
    for r in results {
        let _ = writeln!(out, "{}", r.line());
        all &= r.passed;
    }
    let _ = writeln!(
        out,
        "{}",
        if all {
            "all criteria passed"
        } else {
            "FAILURES present"
        }
    );
    (out, all)
}

#[cfg(test)]
mod tests {
    use super::*;

    // the cheap anchors run here; the full suite lives in the acceptance
    // test target
    #[test]
    fn exactness_anchor_criterion() {
        let r = criterion_2_exactness_anchors();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn report_formats_failures() {
        let results = vec![CriterionResult {
            id: 1,
            name: "x",
            passed: false,
            detail: "d".into(),
        }];
        let (text, ok) = report(&results);
        assert!(!ok);
        assert!(text.contains("FAIL"));
    }
}
