// Attention policy over variable-size task and robot sets.
//
// Tasks and robots are embedded by separate two-layer tanh encoders. Each
// set is pooled into one global vector by softmax attention against a
// learned query. Every task is then scored from
// [own embedding | global task | global robot | selected robot]
// by a one-hidden-layer head, so permuting tasks permutes logits and
// permuting non-selected robots changes nothing. A linear value head reads
// the (gradient-detached) global vectors.

use super::features::{Features, ROBOT_FEATURES, TASK_FEATURES};
use rand::Rng;

const TW1: usize = 0;
const TB1: usize = 1;
const TW2: usize = 2;
const TB2: usize = 3;
const RW1: usize = 4;
const RB1: usize = 5;
const RW2: usize = 6;
const RB2: usize = 7;
const QT: usize = 8;
const QR: usize = 9;
const HW1: usize = 10;
const HB1: usize = 11;
const HW2: usize = 12;
const VW: usize = 13;
const VB: usize = 14;
const N_TENSORS: usize = 15;

/// Names and shapes of the parameter tensors, in storage order. Matrices
/// are row-major `[out, in]`.
pub fn tensor_specs(embed: usize) -> Vec<(&'static str, Vec<usize>)> {
    let e = embed;
    vec![
        ("task_encoder.w1", vec![e, TASK_FEATURES]),
        ("task_encoder.b1", vec![e]),
        ("task_encoder.w2", vec![e, e]),
        ("task_encoder.b2", vec![e]),
        ("robot_encoder.w1", vec![e, ROBOT_FEATURES]),
        ("robot_encoder.b1", vec![e]),
        ("robot_encoder.w2", vec![e, e]),
        ("robot_encoder.b2", vec![e]),
        ("attention.task_query", vec![e]),
        ("attention.robot_query", vec![e]),
        ("head.w1", vec![e, 4 * e]),
        ("head.b1", vec![e]),
        ("head.w2", vec![e]),
        ("value.w", vec![3 * e]),
        ("value.b", vec![1]),
    ]
}

fn offsets(embed: usize) -> [usize; N_TENSORS + 1] {
    let mut out = [0; N_TENSORS + 1];
    for (i, (_, shape)) in tensor_specs(embed).iter().enumerate() {
        out[i + 1] = out[i] + shape.iter().product::<usize>();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    embed: usize,
    offsets: [usize; N_TENSORS + 1],
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    task_s1: Vec<f64>,
    task_h: Vec<f64>,
    robot_s1: Vec<f64>,
    robot_h: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    g_task: Vec<f64>,
    g_robot: Vec<f64>,
    hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl Policy {
    /// Fresh parameters: uniform Glorot-style weights, zero biases.
    pub fn new<R: Rng + ?Sized>(embed: usize, rng: &mut R) -> Policy {
        assert!(embed >= 1);
        let offsets = offsets(embed);
        let mut params = vec![0.0; offsets[N_TENSORS]];
        for (i, (name, shape)) in tensor_specs(embed).iter().enumerate() {
            let slot = &mut params[offsets[i]..offsets[i + 1]];
            let bound = match (shape.len(), *name) {
                (2, _) => (6.0 / (shape[0] + shape[1]) as f64).sqrt(),
                (_, "attention.task_query" | "attention.robot_query" | "head.w2") => 1.0 / (embed as f64).sqrt(),
                _ => 0.0,
            };
            if bound > 0.0 {
                for p in slot.iter_mut() {
                    *p = rng.random_range(-bound..bound);
                }
            }
        }
        Policy { embed, offsets, params }
    }

    pub fn from_params(embed: usize, params: Vec<f64>) -> Option<Policy> {
        let offsets = offsets(embed);
        (params.len() == offsets[N_TENSORS]).then_some(Policy { embed, offsets, params })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter tensor `index` in [`tensor_specs`] order.
    pub fn tensor(&self, index: usize) -> &[f64] {
        &self.params[self.offsets[index]..self.offsets[index + 1]]
    }

    fn t(&self, index: usize) -> &[f64] {
        self.tensor(index)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn logits(&self, f: &Features) -> Vec<f64> {
        self.forward(f).logits
    }

    pub fn forward(&self, f: &Features) -> Trace {
        let e = self.embed;
        let n = f.tasks.len();
        let m = f.robots.len();
        assert!(n > 0 && f.selected < m, "malformed features");
        let mut task_s1 = vec![0.0; n * e];
        let mut task_h = vec![0.0; n * e];
        for (i, x) in f.tasks.iter().enumerate() {
            encode(
                x,
                [self.t(TW1), self.t(TB1), self.t(TW2), self.t(TB2)],
                &mut task_s1[i * e..(i + 1) * e],
                &mut task_h[i * e..(i + 1) * e],
            );
        }
        let mut robot_s1 = vec![0.0; m * e];
        let mut robot_h = vec![0.0; m * e];
        for (j, x) in f.robots.iter().enumerate() {
            encode(
                x,
                [self.t(RW1), self.t(RB1), self.t(RW2), self.t(RB2)],
                &mut robot_s1[j * e..(j + 1) * e],
                &mut robot_h[j * e..(j + 1) * e],
            );
        }
        let (alpha, g_task) = attend(&task_h, self.t(QT), e);
        let (beta, g_robot) = attend(&robot_h, self.t(QR), e);
        let sel = &robot_h[f.selected * e..(f.selected + 1) * e];

        let hw1 = self.t(HW1);
        let hb1 = self.t(HB1);
        let hw2 = self.t(HW2);
        let shared: Vec<f64> = (0..e)
            .map(|k| {
                let row = &hw1[k * 4 * e..(k + 1) * 4 * e];
                hb1[k] + dot(&row[e..2 * e], &g_task) + dot(&row[2 * e..3 * e], &g_robot) + dot(&row[3 * e..], sel)
            })
            .collect();
        let mut hidden = vec![0.0; n * e];
        let mut logits = vec![0.0; n];
        for i in 0..n {
            let h_i = &task_h[i * e..(i + 1) * e];
            let hid = &mut hidden[i * e..(i + 1) * e];
            for k in 0..e {
                hid[k] = (shared[k] + dot(&hw1[k * 4 * e..k * 4 * e + e], h_i)).tanh();
            }
            logits[i] = dot(hw2, hid);
        }

        let vw = self.t(VW);
        let value = self.t(VB)[0] + dot(&vw[..e], &g_task) + dot(&vw[e..2 * e], &g_robot) + dot(&vw[2 * e..], sel);

        Trace { task_s1, task_h, robot_s1, robot_h, alpha, beta, g_task, g_robot, hidden, logits, value }
    }

    /// Accumulates into `grad` the gradient of a loss whose partial
    /// derivatives with respect to the logits and the value are `dlogits`
    /// and `dvalue`. The value head does not backpropagate into the encoders.
    pub fn backward(&self, f: &Features, tr: &Trace, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let e = self.embed;
        let n = f.tasks.len();
        let m = f.robots.len();
        let o = &self.offsets;
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(dlogits.len(), n);
        let sel = f.selected;

        // Value head.
        if dvalue != 0.0 {
            let g = &mut grad[o[VW]..o[VW + 1]];
            for k in 0..e {
                g[k] += dvalue * tr.g_task[k];
                g[e + k] += dvalue * tr.g_robot[k];
                g[2 * e + k] += dvalue * tr.robot_h[sel * e + k];
            }
            grad[o[VB]] += dvalue;
        }

        // Scoring head.
        let hw1 = self.t(HW1);
        let hw2 = self.t(HW2);
        let mut d_task_h = vec![0.0; n * e];
        let mut d_shared = vec![0.0; e];
        let mut d_pre = vec![0.0; e];
        for i in 0..n {
            let hid = &tr.hidden[i * e..(i + 1) * e];
            let h_i = &tr.task_h[i * e..(i + 1) * e];
            for k in 0..e {
                grad[o[HW2] + k] += dlogits[i] * hid[k];
                d_pre[k] = dlogits[i] * hw2[k] * (1.0 - hid[k] * hid[k]);
                d_shared[k] += d_pre[k];
            }
            for k in 0..e {
                if d_pre[k] == 0.0 {
                    continue;
                }
                let row = k * 4 * e;
                for c in 0..e {
                    grad[o[HW1] + row + c] += d_pre[k] * h_i[c];
                    d_task_h[i * e + c] += d_pre[k] * hw1[row + c];
                }
            }
        }
        let mut d_g_task = vec![0.0; e];
        let mut d_g_robot = vec![0.0; e];
        let mut d_robot_h = vec![0.0; m * e];
        let sel_h = &tr.robot_h[sel * e..(sel + 1) * e];
        for k in 0..e {
            grad[o[HB1] + k] += d_shared[k];
            let row = k * 4 * e;
            for c in 0..e {
                grad[o[HW1] + row + e + c] += d_shared[k] * tr.g_task[c];
                grad[o[HW1] + row + 2 * e + c] += d_shared[k] * tr.g_robot[c];
                grad[o[HW1] + row + 3 * e + c] += d_shared[k] * sel_h[c];
                d_g_task[c] += d_shared[k] * hw1[row + e + c];
                d_g_robot[c] += d_shared[k] * hw1[row + 2 * e + c];
                d_robot_h[sel * e + c] += d_shared[k] * hw1[row + 3 * e + c];
            }
        }

        // Attention pooling.
        attend_backward(&tr.task_h, &tr.alpha, self.t(QT), &d_g_task, e, &mut d_task_h, &mut grad[o[QT]..o[QT + 1]]);
        attend_backward(&tr.robot_h, &tr.beta, self.t(QR), &d_g_robot, e, &mut d_robot_h, &mut grad[o[QR]..o[QR + 1]]);

        // Encoders.
        for (i, x) in f.tasks.iter().enumerate() {
            encode_backward(
                x,
                &tr.task_s1[i * e..(i + 1) * e],
                &tr.task_h[i * e..(i + 1) * e],
                &d_task_h[i * e..(i + 1) * e],
                self.t(TW2),
                [TW1, TB1, TW2, TB2].map(|t| o[t]),
                grad,
            );
        }
        for (j, x) in f.robots.iter().enumerate() {
            encode_backward(
                x,
                &tr.robot_s1[j * e..(j + 1) * e],
                &tr.robot_h[j * e..(j + 1) * e],
                &d_robot_h[j * e..(j + 1) * e],
                self.t(RW2),
                [RW1, RB1, RW2, RB2].map(|t| o[t]),
                grad,
            );
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `h = tanh(W2 tanh(W1 x + b1) + b2)`.
fn encode(x: &[f64], [w1, b1, w2, b2]: [&[f64]; 4], s1: &mut [f64], h: &mut [f64]) {
    let e = s1.len();
    let d = x.len();
    for k in 0..e {
        s1[k] = (b1[k] + dot(&w1[k * d..(k + 1) * d], x)).tanh();
    }
    for k in 0..e {
        h[k] = (b2[k] + dot(&w2[k * e..(k + 1) * e], s1)).tanh();
    }
}

fn encode_backward(
    x: &[f64],
    s1: &[f64],
    h: &[f64],
    dh: &[f64],
    w2: &[f64],
    [ow1, ob1, ow2, ob2]: [usize; 4],
    grad: &mut [f64],
) {
    let e = s1.len();
    let d = x.len();
    let mut ds1 = vec![0.0; e];
    for k in 0..e {
        let da2 = dh[k] * (1.0 - h[k] * h[k]);
        if da2 == 0.0 {
            continue;
        }
        grad[ob2 + k] += da2;
        for c in 0..e {
            grad[ow2 + k * e + c] += da2 * s1[c];
            ds1[c] += da2 * w2[k * e + c];
        }
    }
    for k in 0..e {
        let da1 = ds1[k] * (1.0 - s1[k] * s1[k]);
        grad[ob1 + k] += da1;
        for c in 0..d {
            grad[ow1 + k * d + c] += da1 * x[c];
        }
    }
}

/// Softmax attention weights of rows of `h` against `q`, and the pooled vector.
fn attend(h: &[f64], q: &[f64], e: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (e as f64).sqrt();
    let scores: Vec<f64> = h.chunks_exact(e).map(|row| dot(row, q) * scale).collect();
    let weights = softmax(&scores);
    let mut pooled = vec![0.0; e];
    for (w, row) in weights.iter().zip(h.chunks_exact(e)) {
        for k in 0..e {
            pooled[k] += w * row[k];
        }
    }
    (weights, pooled)
}

fn attend_backward(h: &[f64], weights: &[f64], q: &[f64], d_pooled: &[f64], e: usize, dh: &mut [f64], dq: &mut [f64]) {
    let scale = 1.0 / (e as f64).sqrt();
    let d_w: Vec<f64> = h.chunks_exact(e).map(|row| dot(row, d_pooled)).collect();
    let mean: f64 = weights.iter().zip(&d_w).map(|(w, d)| w * d).sum();
    for (i, row) in h.chunks_exact(e).enumerate() {
        let d_score = weights[i] * (d_w[i] - mean) * scale;
        for k in 0..e {
            dh[i * e + k] += weights[i] * d_pooled[k] + d_score * q[k];
            dq[k] += d_score * row[k];
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|x| x / sum).collect()
}

/// `log softmax(logits)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}
