//! Central-difference gradient checking.
//!
//! The checker is the independent oracle for every backward rule in the
//! crate: it perturbs each parameter entry in turn and compares the
//! analytic gradient against (f(p+h) - f(p-h)) / 2h.

use crate::error::Result;
use crate::tensor::Tensor;

/// Worst disagreement found by `finite_diff_check`.
#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn` must be deterministic in its parameters. It is called once in
/// gradient mode and then 2·N times value-only, N the total entry count.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as the scale.
pub fn finite_diff_check<F, G>(
    grad_fn: F,
    value_fn: G,
    params: &mut [Tensor],
    step: f64,
) -> Result<FiniteDiffReport>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
    G: Fn(&[Tensor]) -> Result<f64>,
{
    let (_, grads) = grad_fn(params)?;
    assert_eq!(grads.len(), params.len(), "gradient count mismatch");

    let mut report = FiniteDiffReport {
        max_rel_err: 0.0,
        worst_param: 0,
        worst_entry: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for p in 0..params.len() {
        for e in 0..params[p].len() {
            let orig = params[p].values()[e];
            params[p].values_mut()[e] = orig + step;
            let up = value_fn(params)?;
            params[p].values_mut()[e] = orig - step;
            let down = value_fn(params)?;
            params[p].values_mut()[e] = orig;

            let numeric = (up - down) / (2.0 * step);
            let analytic = grads[p].values()[e];
            let scale = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / scale;
            if rel > report.max_rel_err {
                report = FiniteDiffReport {
                    max_rel_err: rel,
                    worst_param: p,
                    worst_entry: e,
                    analytic,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn quadratic_loss_gradient_is_param() {
        // loss = 0.5 * ||p||^2, gradient p, agreement to 1e-8
        let mut params = vec![Tensor::new(vec![3], vec![0.5, -1.5, 2.0]).unwrap()];
        let grad_fn = |ps: &[Tensor]| {
            let mut t = Tape::new();
            let p = t.param(&ps[0]);
            let sq = t.square(p);
            let s = t.sum(sq);
            let loss = t.scale(s, 0.5);
            t.backward(loss)?;
            Ok((t.value(loss).item(), vec![t.grad_or_zeros(p)]))
        };
        let value_fn = |ps: &[Tensor]| Ok(0.5 * ps[0].values().iter().map(|v| v * v).sum::<f64>());
        let rep = finite_diff_check(grad_fn, value_fn, &mut params, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-8, "{rep:?}");
    }

    #[test]
    fn mlp_with_cross_entropy_gradient_matches() {
        use crate::models::FeatureNet;
        use crate::rng::derive_rng;
        use rand::Rng;

        let net = FeatureNet::new(&[6, 10, 20], 30).unwrap();
        let mut rng = derive_rng(31, "fd-batch");
        let x = Tensor::new(
            vec![4, 6],
            (0..24).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let labels = [0usize, 1, 1, 0];
        let head = Tensor::new(
            vec![20, 2],
            (0..40).map(|_| rng.random_range(-0.5..0.5)).collect(),
        )
        .unwrap();

        let mut params: Vec<Tensor> = net.params().into_iter().cloned().collect();
        params.push(head.clone());
        let eval = |ps: &[Tensor], grads: bool| -> crate::error::Result<(f64, Vec<Tensor>)> {
            let mut net = net.clone();
            net.set_params(&ps[..ps.len() - 1]);
            let mut t = Tape::new();
            let xi = t.constant(x.clone());
            let (s, theta) = net.forward_tape(&mut t, xi)?;
            let w = t.param(&ps[ps.len() - 1]);
            let logits = t.matmul(s, w)?;
            let loss = t.softmax_cross_entropy(logits, &labels, 2)?;
            let v = t.value(loss).item();
            if !grads {
                return Ok((v, Vec::new()));
            }
            t.backward(loss)?;
            let mut g: Vec<Tensor> = theta.iter().map(|id| t.grad_or_zeros(*id)).collect();
            g.push(t.grad_or_zeros(w));
            Ok((v, g))
        };
        let rep = finite_diff_check(
            |ps| eval(ps, true),
            |ps| eval(ps, false).map(|(v, _)| v),
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }

    #[test]
    fn matmul_sum_gradient_matches() {
        let mut params = vec![Tensor::from_rows(&[&[0.3, -0.7, 1.1], &[0.9, 0.2, -0.4]])];
        let b = Tensor::from_rows(&[&[1.0, 2.0], &[-0.5, 0.25], &[0.75, -1.5]]);
        let grad_fn = |ps: &[Tensor]| {
            let mut t = Tape::new();
            let a = t.param(&ps[0]);
            let bc = t.constant(b.clone());
            let y = t.matmul(a, bc)?;
            let loss = t.sum(y);
            t.backward(loss)?;
            Ok((t.value(loss).item(), vec![t.grad_or_zeros(a)]))
        };
        let value_fn = |ps: &[Tensor]| Ok(crate::tensor::matmul(&ps[0], &b)?.values().iter().sum());
        let rep = finite_diff_check(grad_fn, value_fn, &mut params, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }
}
