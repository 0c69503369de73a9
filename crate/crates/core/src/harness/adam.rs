use alloc::{vec, vec::Vec};

use crate::numcore::Matrix;
use crate::pcnn::{ModelGrads, ModelParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn like(m: &Matrix) -> Self {
        Self::new(m.as_slice().len())
    }
}

/// Adam over every parameter block. Word-embedding rows are updated lazily:
/// only rows that received a gradient in the current step move.
#[derive(Debug, Clone)]
pub struct Adam {
    t: u64,
    conv_filters: Moments,
    conv_bias: Moments,
    fc_w: Moments,
    fc_b: Moments,
    words: Moments,
    pos: Moments,
    dep: Moments,
    dist: Moments,
}

struct StepSize {
    lr: f64,
    c1: f64,
    c2: f64,
}

fn update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], s: &StepSize) {
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / s.c1;
        let v_hat = *v / s.c2;
        *p -= s.lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
    }
}

fn update_block(params: &mut [f64], grads: &[f64], mom: &mut Moments, s: &StepSize) {
    update(params, grads, &mut mom.m, &mut mom.v, s);
}

impl Adam {
    pub fn new(model: &ModelParams) -> Self {
        Self {
            t: 0,
            conv_filters: Moments::like(&model.net.conv_filters),
            conv_bias: Moments::new(model.net.conv_bias.len()),
            fc_w: Moments::like(&model.net.fc_w),
            fc_b: Moments::new(model.net.fc_b.len()),
            words: Moments::like(&model.tables.words),
            pos: Moments::like(&model.tables.pos),
            dep: Moments::like(&model.tables.dep),
            dist: Moments::like(&model.tables.dist),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, model: &mut ModelParams, grads: &ModelGrads, lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let s = StepSize { lr, c1: 1.0 - libm::pow(BETA1, t as f64), c2: 1.0 - libm::pow(BETA2, t as f64) };
        let net = &mut model.net;
        update_block(net.conv_filters.as_mut_slice(), grads.net.conv_filters.as_slice(), &mut self.conv_filters, &s);
        update_block(&mut net.conv_bias, &grads.net.conv_bias, &mut self.conv_bias, &s);
        update_block(net.fc_w.as_mut_slice(), grads.net.fc_w.as_slice(), &mut self.fc_w, &s);
        update_block(&mut net.fc_b, &grads.net.fc_b, &mut self.fc_b, &s);

        let tables = &mut model.tables;
        update_block(tables.pos.as_mut_slice(), grads.tables.pos.as_slice(), &mut self.pos, &s);
        update_block(tables.dep.as_mut_slice(), grads.tables.dep.as_slice(), &mut self.dep, &s);
        update_block(tables.dist.as_mut_slice(), grads.tables.dist.as_slice(), &mut self.dist, &s);
        let dim = tables.words.cols();
        for (&row, g) in &grads.tables.words {
            let span = row * dim..(row + 1) * dim;
            update(
                tables.words.row_mut(row),
                g,
                &mut self.words.m[span.clone()],
                &mut self.words.v[span],
                &s,
            );
        }
    }
}
