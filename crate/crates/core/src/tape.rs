//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! A `Tape` is rebuilt for every forward pass (define-by-run). Operations
//! record their inputs, outputs and a backward rule; `backward` replays the
//! record in reverse, accumulating gradients additively across fan-out.
//! Gradients are only materialized for nodes reachable from a parameter,
//! so frozen inputs (generator samples, previous-task snapshots) cost
//! nothing in the backward sweep.

use crate::error::{CwError, Result};
use crate::tensor::{self, Tensor};

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

struct Node {
    value: Tensor,
    requires_grad: bool,
}

enum Op {
    Matmul {
        a: VarId,
        b: VarId,
        out: VarId,
    },
    Add {
        a: VarId,
        b: VarId,
        out: VarId,
    },
    Sub {
        a: VarId,
        b: VarId,
        out: VarId,
    },
    AddBias {
        x: VarId,
        bias: VarId,
        out: VarId,
    },
    Scale {
        x: VarId,
        c: f64,
        out: VarId,
    },
    AddScalar {
        x: VarId,
        out: VarId,
    },
    Relu {
        x: VarId,
        out: VarId,
    },
    Square {
        x: VarId,
        out: VarId,
    },
    Rsqrt {
        x: VarId,
        out: VarId,
    },
    Sum {
        x: VarId,
        out: VarId,
    },
    Mean {
        x: VarId,
        out: VarId,
    },
    RowL2Norm {
        x: VarId,
        out: VarId,
    },
    PairwiseDistSq {
        a: VarId,
        b: VarId,
        out: VarId,
    },
    SoftmaxCrossEntropy {
        logits: VarId,
        labels: Vec<usize>,
        active_units: usize,
        probs: Tensor,
        out: VarId,
    },
}

/// Ordered record of executed operations plus the tensors they touch.
pub struct Tape {
    nodes: Vec<Node>,
    ops: Vec<Op>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Register a tensor that does not need a gradient (data batches,
    /// frozen generator output, frozen parameter snapshots).
    pub fn constant(&mut self, value: Tensor) -> VarId {
        self.push(value, false)
    }

    /// Register a trainable parameter. The tape works on its own snapshot;
    /// the caller applies the gradient to the owned tensor afterwards.
    pub fn param(&mut self, value: &Tensor) -> VarId {
        self.push(value.clone(), true)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node {
            value,
            requires_grad,
        });
        self.grads.push(None);
        id
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target with respect to `id`, if any
    /// flowed there.
    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a parameter, zeros if the loss did not touch it.
    pub fn grad_or_zeros(&self, id: VarId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[id.0].value.shape()),
        }
    }

    fn out_of(&mut self, value: Tensor, inputs: &[VarId]) -> VarId {
        let rg = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push(value, rg)
    }

    // ── recorded operations ─────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        let out = self.out_of(value, &[a, b]);
        self.ops.push(Op::Matmul { a, b, out });
        Ok(out)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(CwError::Shape {
                op: "add",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut value = self.value(a).clone();
        for (v, w) in value.values_mut().iter_mut().zip(self.value(b).values()) {
            *v += w;
        }
        let out = self.out_of(value, &[a, b]);
        self.ops.push(Op::Add { a, b, out });
        Ok(out)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(CwError::Shape {
                op: "sub",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut value = self.value(a).clone();
        for (v, w) in value.values_mut().iter_mut().zip(self.value(b).values()) {
            *v -= w;
        }
        let out = self.out_of(value, &[a, b]);
        self.ops.push(Op::Sub { a, b, out });
        Ok(out)
    }

    pub fn add_bias(&mut self, x: VarId, bias: VarId) -> Result<VarId> {
        let value = tensor::add_bias(self.value(x), self.value(bias))?;
        let out = self.out_of(value, &[x, bias]);
        self.ops.push(Op::AddBias { x, bias, out });
        Ok(out)
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v *= c;
        }
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Scale { x, c, out });
        out
    }

    pub fn add_scalar(&mut self, x: VarId, c: f64) -> VarId {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v += c;
        }
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::AddScalar { x, out });
        out
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let value = tensor::relu(self.value(x));
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Relu { x, out });
        out
    }

    pub fn square(&mut self, x: VarId) -> VarId {
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v *= *v;
        }
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Square { x, out });
        out
    }

    /// Elementwise x^(-1/2). Domain error on any nonpositive entry.
    pub fn rsqrt(&mut self, x: VarId) -> Result<VarId> {
        if let Some(bad) = self.value(x).values().iter().find(|v| **v <= 0.0) {
            return Err(CwError::Domain {
                op: "rsqrt",
                detail: format!("nonpositive input {bad}"),
            });
        }
        let mut value = self.value(x).clone();
        for v in value.values_mut() {
            *v = 1.0 / v.sqrt();
        }
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Rsqrt { x, out });
        Ok(out)
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        let value = Tensor::scalar(self.value(x).values().iter().sum());
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Sum { x, out });
        out
    }

    pub fn mean(&mut self, x: VarId) -> VarId {
        let n = self.value(x).len() as f64;
        let value = Tensor::scalar(self.value(x).values().iter().sum::<f64>() / n);
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::Mean { x, out });
        out
    }

    /// Euclidean norm of every row of a 2-D tensor; output length n.
    pub fn row_l2_norm(&mut self, x: VarId) -> Result<VarId> {
        let xv = self.value(x);
        if !xv.is_matrix() {
            return Err(CwError::Shape {
                op: "row_l2_norm",
                lhs: xv.shape().to_vec(),
                rhs: Vec::new(),
            });
        }
        let n = xv.rows();
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            values.push(xv.row(i).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let value = Tensor::new(vec![n], values)?;
        let out = self.out_of(value, &[x]);
        self.ops.push(Op::RowL2Norm { x, out });
        Ok(out)
    }

    /// n×m matrix of squared distances between rows of `a` and rows of `b`.
    pub fn pairwise_dist_sq(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = tensor::pairwise_dist_sq(self.value(a), self.value(b))?;
        let out = self.out_of(value, &[a, b]);
        self.ops.push(Op::PairwiseDistSq { a, b, out });
        Ok(out)
    }

    /// Mean over rows of -log softmax(logits[row, 0..active_units])[label].
    /// Columns at or beyond `active_units` take no part in the softmax.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: VarId,
        labels: &[usize],
        active_units: usize,
    ) -> Result<VarId> {
        let lv = self.value(logits);
        if !lv.is_matrix() || lv.rows() != labels.len() || active_units > lv.cols() {
            return Err(CwError::Shape {
                op: "softmax_cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len(), active_units],
            });
        }
        if active_units == 0 {
            return Err(CwError::Domain {
                op: "softmax_cross_entropy",
                detail: "active_units must be positive".into(),
            });
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= active_units {
                return Err(CwError::Label {
                    row,
                    label,
                    active_units,
                });
            }
        }
        let n = lv.rows();
        let mut probs = Tensor::zeros(&[n, active_units]);
        let mut total = 0.0;
        for i in 0..n {
            let row = &lv.row(i)[..active_units];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &v in row {
                z += (v - max).exp();
            }
            let log_z = z.ln() + max;
            total += log_z - row[labels[i]];
            let pr = &mut probs.values_mut()[i * active_units..(i + 1) * active_units];
            for (k, &v) in row.iter().enumerate() {
                pr[k] = (v - max).exp() / z;
            }
        }
        let value = Tensor::scalar(total / n as f64);
        let out = self.out_of(value, &[logits]);
        self.ops.push(Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
            active_units,
            probs,
            out,
        });
        Ok(out)
    }

    // ── backward ────────────────────────────────────────────────────

    fn accumulate(&mut self, id: VarId, update: impl FnOnce(&Tensor, &mut Tensor)) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let mut g = match self.grads[id.0].take() {
            Some(g) => g,
            None => Tensor::zeros(self.nodes[id.0].value.shape()),
        };
        // split borrow: value is read-only while the gradient is updated
        let value = &self.nodes[id.0].value;
        update(value, &mut g);
        self.grads[id.0] = Some(g);
    }

    /// Single reverse sweep from a scalar loss. Populates a gradient for
    /// every requires_grad tensor reachable from it.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(CwError::Shape {
                op: "backward",
                lhs: self.nodes[loss.0].value.shape().to_vec(),
                rhs: Vec::new(),
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);

        for idx in (0..self.ops.len()).rev() {
            self.backward_op(idx);
        }
        Ok(())
    }

    fn backward_op(&mut self, idx: usize) {
        macro_rules! out_grad {
            ($out:expr) => {
                match &self.grads[$out.0] {
                    Some(g) => g.clone(),
                    None => return,
                }
            };
        }
        // ops are moved out and back to appease the borrow checker cheaply
        match &self.ops[idx] {
            &Op::Matmul { a, b, out } => {
                if !self.nodes[out.0].requires_grad {
                    return;
                }
                let g = out_grad!(out);
                let (m, k) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                let n = self.nodes[b.0].value.cols();
                if self.nodes[a.0].requires_grad {
                    let bvals = self.nodes[b.0].value.values().to_vec();
                    self.accumulate(a, |_, ga| {
                        // da = g · bᵀ
                        tensor::gemm_acc(
                            m,
                            n,
                            k,
                            1.0,
                            g.values(),
                            n as isize,
                            1,
                            &bvals,
                            1,
                            n as isize,
                            1.0,
                            ga.values_mut(),
                        );
                    });
                }
                if self.nodes[b.0].requires_grad {
                    let avals = self.nodes[a.0].value.values().to_vec();
                    self.accumulate(b, |_, gb| {
                        // db = aᵀ · g
                        tensor::gemm_acc(
                            k,
                            m,
                            n,
                            1.0,
                            &avals,
                            1,
                            k as isize,
                            g.values(),
                            n as isize,
                            1,
                            1.0,
                            gb.values_mut(),
                        );
                    });
                }
            }
            &Op::Add { a, b, out } => {
                let g = out_grad!(out);
                self.accumulate(a, |_, ga| {
                    for (gi, go) in ga.values_mut().iter_mut().zip(g.values()) {
                        *gi += go;
                    }
                });
                self.accumulate(b, |_, gb| {
                    for (gi, go) in gb.values_mut().iter_mut().zip(g.values()) {
                        *gi += go;
                    }
                });
            }
            &Op::Sub { a, b, out } => {
                let g = out_grad!(out);
                self.accumulate(a, |_, ga| {
                    for (gi, go) in ga.values_mut().iter_mut().zip(g.values()) {
                        *gi += go;
                    }
                });
                self.accumulate(b, |_, gb| {
                    for (gi, go) in gb.values_mut().iter_mut().zip(g.values()) {
                        *gi -= go;
                    }
                });
            }
            &Op::AddBias { x, bias, out } => {
                let g = out_grad!(out);
                let m = self.nodes[x.0].value.cols();
                self.accumulate(x, |_, gx| {
                    for (gi, go) in gx.values_mut().iter_mut().zip(g.values()) {
                        *gi += go;
                    }
                });
                self.accumulate(bias, |_, gb| {
                    for (i, go) in g.values().iter().enumerate() {
                        gb.values_mut()[i % m] += go;
                    }
                });
            }
            &Op::Scale { x, c, out } => {
                let g = out_grad!(out);
                self.accumulate(x, |_, gx| {
                    for (gi, go) in gx.values_mut().iter_mut().zip(g.values()) {
                        *gi += c * go;
                    }
                });
            }
            &Op::AddScalar { x, out } => {
                let g = out_grad!(out);
                self.accumulate(x, |_, gx| {
                    for (gi, go) in gx.values_mut().iter_mut().zip(g.values()) {
                        *gi += go;
                    }
                });
            }
            &Op::Relu { x, out } => {
                let g = out_grad!(out);
                self.accumulate(x, |xv, gx| {
                    for ((gi, go), &v) in
                        gx.values_mut().iter_mut().zip(g.values()).zip(xv.values())
                    {
                        if v > 0.0 {
                            *gi += go;
                        }
                    }
                });
            }
            &Op::Square { x, out } => {
                let g = out_grad!(out);
                self.accumulate(x, |xv, gx| {
                    for ((gi, go), &v) in
                        gx.values_mut().iter_mut().zip(g.values()).zip(xv.values())
                    {
                        *gi += 2.0 * v * go;
                    }
                });
            }
            &Op::Rsqrt { x, out } => {
                let g = out_grad!(out);
                self.accumulate(x, |xv, gx| {
                    for ((gi, go), &v) in
                        gx.values_mut().iter_mut().zip(g.values()).zip(xv.values())
                    {
                        *gi += -0.5 * v.powf(-1.5) * go;
                    }
                });
            }
            &Op::Sum { x, out } => {
                let g = out_grad!(out).item();
                self.accumulate(x, |_, gx| {
                    for gi in gx.values_mut() {
                        *gi += g;
                    }
                });
            }
            &Op::Mean { x, out } => {
                let g = out_grad!(out).item();
                let n = self.nodes[x.0].value.len() as f64;
                self.accumulate(x, |_, gx| {
                    for gi in gx.values_mut() {
                        *gi += g / n;
                    }
                });
            }
            &Op::RowL2Norm { x, out } => {
                let g = out_grad!(out);
                let norms = self.nodes[out.0].value.clone();
                self.accumulate(x, |xv, gx| {
                    let c = xv.cols();
                    for i in 0..xv.rows() {
                        let norm = norms.values()[i];
                        if norm <= 0.0 {
                            continue;
                        }
                        let go = g.values()[i];
                        let row = xv.row(i);
                        let grow = &mut gx.values_mut()[i * c..(i + 1) * c];
                        for k in 0..c {
                            grow[k] += go * row[k] / norm;
                        }
                    }
                });
            }
            &Op::PairwiseDistSq { a, b, out } => {
                let g = out_grad!(out);
                let (n, m) = (self.nodes[a.0].value.rows(), self.nodes[b.0].value.rows());
                let d = self.nodes[a.0].value.cols();
                let avals = self.nodes[a.0].value.values().to_vec();
                let bvals = self.nodes[b.0].value.values().to_vec();
                if self.nodes[a.0].requires_grad {
                    // da_i += 2·rowsum_i(g)·a_i − 2·Σ_j g_ij b_j
                    self.accumulate(a, |_, ga| {
                        let gav = ga.values_mut();
                        for i in 0..n {
                            let rs: f64 = g.values()[i * m..(i + 1) * m].iter().sum();
                            for k in 0..d {
                                gav[i * d + k] += 2.0 * rs * avals[i * d + k];
                            }
                        }
                        tensor::gemm_acc(
                            n,
                            m,
                            d,
                            -2.0,
                            g.values(),
                            m as isize,
                            1,
                            &bvals,
                            d as isize,
                            1,
                            1.0,
                            gav,
                        );
                    });
                }
                if self.nodes[b.0].requires_grad {
                    // db_j += 2·colsum_j(g)·b_j − 2·Σ_i g_ij a_i
                    self.accumulate(b, |_, gb| {
                        let gbv = gb.values_mut();
                        for j in 0..m {
                            let mut cs = 0.0;
                            for i in 0..n {
                                cs += g.values()[i * m + j];
                            }
                            for k in 0..d {
                                gbv[j * d + k] += 2.0 * cs * bvals[j * d + k];
                            }
                        }
                        tensor::gemm_acc(
                            m,
                            n,
                            d,
                            -2.0,
                            g.values(),
                            1,
                            m as isize,
                            &avals,
                            d as isize,
                            1,
                            1.0,
                            gbv,
                        );
                    });
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                active_units,
                probs,
                out,
            } => {
                let (logits, active_units, out) = (*logits, *active_units, *out);
                let labels = labels.clone();
                let probs = probs.clone();
                let g = out_grad!(out).item();
                let n = labels.len();
                self.accumulate(logits, |xv, gx| {
                    let cols = xv.cols();
                    let rows = gx.values_mut().chunks_mut(cols);
                    let prows = probs.values().chunks(active_units);
                    for ((grow, prow), &label) in rows.zip(prows).zip(&labels) {
                        for k in 0..active_units {
                            let ind = if k == label { 1.0 } else { 0.0 };
                            grow[k] += (prow[k] - ind) * g / n as f64;
                        }
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_of(t: &mut Tape, id: VarId) -> Vec<f64> {
        t.grad(id).unwrap().values().to_vec()
    }

    #[test]
    fn relu_forward_and_grad() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = t.relu(x);
        assert_eq!(t.value(y).values(), &[0.0, 0.0, 2.0]);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(grad_of(&mut t, x), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_idempotent() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![4], vec![-2.0, -0.5, 0.5, 3.0]).unwrap());
        let y = t.relu(x);
        let z = t.relu(y);
        assert_eq!(t.value(y).values(), t.value(z).values());
    }

    #[test]
    fn relu_grad_signs() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::new(vec![2], vec![3.0, -3.0]).unwrap());
        let y = t.relu(x);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(grad_of(&mut t, x), vec![1.0, 0.0]);
    }

    #[test]
    fn rsqrt_hand_value_and_domain() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::new(vec![1], vec![4.0]).unwrap());
        let y = t.rsqrt(x).unwrap();
        assert_eq!(t.value(y).values(), &[0.5]);

        let bad = t.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
        assert!(t.rsqrt(bad).is_err());
    }

    #[test]
    fn row_l2_norm_three_four_five() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::from_rows(&[&[3.0, 4.0]]));
        let y = t.row_l2_norm(x).unwrap();
        assert_eq!(t.value(y).values(), &[5.0]);
    }

    #[test]
    fn mean_grad_is_one_over_n() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let m = t.mean(x);
        t.backward(m).unwrap();
        assert_eq!(grad_of(&mut t, x), vec![0.25; 4]);
    }

    #[test]
    fn matmul_grad_accumulates_fanout() {
        // y = sum(a·b) with a also feeding a second branch
        let mut t = Tape::new();
        let a = t.param(&Tensor::from_rows(&[&[1.0, 2.0]]));
        let b = t.constant(Tensor::from_rows(&[&[3.0], &[4.0]]));
        let y1 = t.matmul(a, b).unwrap();
        let s1 = t.sum(y1);
        let s2 = t.sum(a);
        let total = t.add(s1, s2).unwrap();
        t.backward(total).unwrap();
        // d/da sum(a·b) = bᵀ broadcast; plus 1 from sum(a)
        assert_eq!(grad_of(&mut t, a), vec![4.0, 5.0]);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let mut t = Tape::new();
        let logits = t.param(&Tensor::from_rows(&[&[0.0, 0.0]]));
        let loss = t.softmax_cross_entropy(logits, &[0], 2).unwrap();
        assert!((t.value(loss).item() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_stable_for_huge_logit() {
        let mut t = Tape::new();
        let logits = t.param(&Tensor::from_rows(&[&[1000.0, 0.0]]));
        let loss = t.softmax_cross_entropy(logits, &[0], 2).unwrap();
        let v = t.value(loss).item();
        assert!(v.is_finite() && (0.0..1e-12).contains(&v), "loss {v}");
    }

    #[test]
    fn softmax_ce_label_out_of_range() {
        let mut t = Tape::new();
        let logits = t.param(&Tensor::from_rows(&[&[0.0, 0.0, 0.0]]));
        let err = t.softmax_cross_entropy(logits, &[2], 2).unwrap_err();
        assert!(matches!(
            err,
            CwError::Label {
                row: 0,
                label: 2,
                ..
            }
        ));
    }

    #[test]
    fn softmax_ce_masks_inactive_columns() {
        // inactive column has an enormous logit; masking must ignore it
        let mut t = Tape::new();
        let logits = t.param(&Tensor::from_rows(&[&[0.0, 0.0, 1e9]]));
        let loss = t.softmax_cross_entropy(logits, &[0], 2).unwrap();
        assert!((t.value(loss).item() - (2.0f64).ln()).abs() < 1e-12);
        t.backward(loss).unwrap();
        let g = t.grad(logits).unwrap().values().to_vec();
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn no_grad_for_constants() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[&[1.0, 2.0]]));
        let y = t.square(x);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::from_rows(&[&[1.0, 2.0]]));
        let y = t.square(x);
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn pairwise_dist_same_var_grad_finite() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::from_rows(&[&[0.0, 0.0], &[1.0, 1.0]]));
        let d = t.pairwise_dist_sq(x, x).unwrap();
        let s = t.sum(d);
        t.backward(s).unwrap();
        // sum of all pairwise squared distances: d/dx_0 = 2*2*(x0-x1) = [-4,-4]
        assert_eq!(grad_of(&mut t, x), vec![-4.0, -4.0, 4.0, 4.0]);
    }
}
