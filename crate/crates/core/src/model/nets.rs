//! Built-in classifiers. Weight matrices are stored input-major
//! (`w[i * out + j]`) so both passes run as contiguous row updates and zero
//! pixels can be skipped.

use rand::{Rng, RngCore};

use super::{log_sum_exp, Classifier};
use crate::dataset::{NUM_CLASSES, PIXELS};

fn uniform_init(buf: &mut [f64], fan_in: usize, rng: &mut dyn RngCore) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for w in buf {
        *w = rng.random_range(-bound..bound);
    }
}

/// `out += a * row`
#[inline]
fn axpy(a: f64, row: &[f64], out: &mut [f64]) {
    for (o, r) in out.iter_mut().zip(row) {
        *o += a * r;
    }
}

/// Writes `softmax(logits) - onehot(label)` into `logits` and returns the
/// sample's cross-entropy.
#[inline]
fn softmax_delta(logits: &mut [f64], label: u8) -> f64 {
    let lse = log_sum_exp(logits);
    let loss = lse - logits[label as usize];
    for z in logits.iter_mut() {
        *z = (*z - lse).exp();
    }
    logits[label as usize] -= 1.0;
    loss
}

#[derive(Debug, Clone)]
pub struct LinearSoftmax {
    params: Vec<f64>,
}

impl LinearSoftmax {
    const W: usize = PIXELS * NUM_CLASSES;

    pub fn init(rng: &mut dyn RngCore) -> Self {
        let mut params = vec![0.0; Self::W + NUM_CLASSES];
        uniform_init(&mut params, PIXELS, rng);
        Self { params }
    }

    pub fn from_params(params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::W + NUM_CLASSES).then_some(Self { params })
    }
}

impl Classifier for LinearSoftmax {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![PIXELS, NUM_CLASSES], vec![NUM_CLASSES]]
    }

    fn forward(&self, x: &[f64], logits: &mut [f64]) {
        let (w, b) = self.params.split_at(Self::W);
        logits.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w[i * NUM_CLASSES..(i + 1) * NUM_CLASSES], logits);
            }
        }
    }

    fn loss_grad(&self, xs: &[&[f64]], labels: &[u8], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let (gw, gb) = grad.split_at_mut(Self::W);
        let mut logits = [0.0; NUM_CLASSES];
        let mut loss = 0.0;
        for (x, &label) in xs.iter().zip(labels) {
            self.forward(x, &mut logits);
            loss += softmax_delta(&mut logits, label);
            for (g, d) in gb.iter_mut().zip(&logits) {
                *g += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, &logits, &mut gw[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]);
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        loss * scale
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    hidden: usize,
    params: Vec<f64>,
}

impl Mlp {
    pub fn init(hidden: usize, rng: &mut dyn RngCore) -> Self {
        let mut m = Self {
            hidden,
            params: vec![0.0; Self::len_for(hidden)],
        };
        let (w1, b1, w2, b2) = m.split_mut();
        uniform_init(w1, PIXELS, rng);
        uniform_init(b1, PIXELS, rng);
        uniform_init(w2, hidden, rng);
        uniform_init(b2, hidden, rng);
        m
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::len_for(hidden)).then_some(Self { hidden, params })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn len_for(hidden: usize) -> usize {
        PIXELS * hidden + hidden + hidden * NUM_CLASSES + NUM_CLASSES
    }

    fn offsets(&self) -> [usize; 3] {
        let h = self.hidden;
        let a = PIXELS * h;
        let b = a + h;
        let c = b + h * NUM_CLASSES;
        [a, b, c]
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [a, b, c] = self.offsets();
        let (w1, rest) = self.params.split_at(a);
        let (b1, rest) = rest.split_at(b - a);
        let (w2, b2) = rest.split_at(c - b);
        (w1, b1, w2, b2)
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let [a, b, c] = self.offsets();
        let (w1, rest) = self.params.split_at_mut(a);
        let (b1, rest) = rest.split_at_mut(b - a);
        let (w2, b2) = rest.split_at_mut(c - b);
        (w1, b1, w2, b2)
    }

    /// Hidden activations (post-ReLU) and logits.
    fn forward_full(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let h = self.hidden;
        let (w1, b1, w2, b2) = self.split();
        hidden.copy_from_slice(b1);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w1[i * h..(i + 1) * h], hidden);
            }
        }
        for a in hidden.iter_mut() {
            *a = a.max(0.0);
        }
        logits.copy_from_slice(b2);
        for (j, &aj) in hidden.iter().enumerate() {
            if aj != 0.0 {
                axpy(aj, &w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES], logits);
            }
        }
    }
}

impl Classifier for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            vec![PIXELS, self.hidden],
            vec![self.hidden],
            vec![self.hidden, NUM_CLASSES],
            vec![NUM_CLASSES],
        ]
    }

    fn forward(&self, x: &[f64], logits: &mut [f64]) {
        let mut hidden = vec![0.0; self.hidden];
        self.forward_full(x, &mut hidden, logits);
    }

    fn loss_grad(&self, xs: &[&[f64]], labels: &[u8], grad: &mut [f64]) -> f64 {
        let h = self.hidden;
        let [a, b, c] = self.offsets();
        grad.fill(0.0);
        let (gw1, rest) = grad.split_at_mut(a);
        let (gb1, rest) = rest.split_at_mut(b - a);
        let (gw2, gb2) = rest.split_at_mut(c - b);
        let (_, _, w2, _) = self.split();

        let mut hidden = vec![0.0; h];
        let mut dhidden = vec![0.0; h];
        let mut logits = [0.0; NUM_CLASSES];
        let mut loss = 0.0;
        for (x, &label) in xs.iter().zip(labels) {
            self.forward_full(x, &mut hidden, &mut logits);
            loss += softmax_delta(&mut logits, label);
            for (g, d) in gb2.iter_mut().zip(&logits) {
                *g += d;
            }
            for j in 0..h {
                let aj = hidden[j];
                let row = &w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                dhidden[j] = if aj > 0.0 {
                    row.iter().zip(&logits).map(|(w, d)| w * d).sum()
                } else {
                    0.0
                };
                if aj != 0.0 {
                    axpy(aj, &logits, &mut gw2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES]);
                }
            }
            for (g, d) in gb1.iter_mut().zip(&dhidden) {
                *g += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, &dhidden, &mut gw1[i * h..(i + 1) * h]);
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        loss * scale
    }
}
