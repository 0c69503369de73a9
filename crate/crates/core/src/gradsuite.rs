//! Finite-difference verification of every analytic gradient in the model,
//! run on small random configurations.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifier::{cross_entropy_loss, cross_entropy_step, Classifier};
use crate::corpus::{EmbeddingTable, Instance, Label, Span, Token};
use crate::encoder::{EncodedInstance, FeatureLayout, FeatureTables, PerturbScope};
use crate::numcore::{
    affine_backward, affine_forward, conv1d_backward, conv1d_forward, grad_check, kl_divergence, segment_max_pool,
    segment_max_pool_backward, segment_ranges, softmax, softmax_cross_entropy, tanh_backward, tanh_forward, Matrix,
    RandomSource,
};
use crate::pcnn::{ModelParams, Pcnn, PcnnDims};
use crate::vat::{vat_loss_against, vat_perturbation, VatConfig};

/// Sizes of the reduced model configuration.
pub const SUITE_LEN: usize = 10;
pub const SUITE_DIM: usize = 12;
pub const SUITE_FILTERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub cases: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { cases: 20, seed: 0, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.max_rel_error))
    }
}

fn rand_matrix(rng: &mut RandomSource, rows: usize, cols: usize) -> Matrix {
    Matrix::filled_with(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
}

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

fn weighted(out: &[f64], w: &[f64]) -> f64 {
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Smallest gap between the winner and runner-up of any pooling segment.
fn min_pool_gap(featmap: &Matrix, boundaries: (usize, usize), valid_len: usize) -> f64 {
    let mut gap = f64::INFINITY;
    for range in segment_ranges(boundaries.0, boundaries.1, valid_len) {
        for f in 0..featmap.cols() {
            let mut vals: Vec<f64> = range.clone().map(|r| featmap[(r, f)]).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals.len() > 1 {
                gap = gap.min(vals[0] - vals[1]);
            }
        }
    }
    gap
}

/// A random reduced instance and network with no near-ties in pooling.
pub fn reduced_case(seed: u64) -> (Pcnn, EncodedInstance) {
    let dims = PcnnDims { input_dim: SUITE_DIM, filters: SUITE_FILTERS, window: 3 };
    let layout = FeatureLayout::with_widths([4, 2, 2, 1, 1, 2]);
    for attempt in 0.. {
        let mut rng = RandomSource::with_stream(seed, attempt);
        let valid_len = 5 + rng.below(SUITE_LEN - 4);
        let x = Matrix::filled_with(SUITE_LEN, SUITE_DIM, |r, _| if r < valid_len { rng.uniform(-1.0, 1.0) } else { 0.0 });
        let s1 = rng.below(valid_len - 2);
        let s2 = s1 + 1 + rng.below(valid_len - s1 - 2);
        let label = rng.below(2);
        let inst = EncodedInstance::from_matrix(x, valid_len, (s1, s2), layout, PerturbScope::All, Some(label))
            .expect("reduced instance is well formed");
        let mut net = Pcnn::init(dims, rng.next_u64());
        net.conv_bias.iter_mut().for_each(|b| *b = rng.uniform(-0.1, 0.1));
        net.fc_b.iter_mut().for_each(|b| *b = rng.uniform(-0.1, 0.1));
        let (_, cache) = net.forward(&inst).expect("reduced forward");
        if min_pool_gap(&cache.featmap, inst.boundaries, valid_len) > 1e-3 {
            return (net, inst);
        }
    }
    unreachable!()
}

struct Tracker {
    name: &'static str,
    cases: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, worst: 0.0 }
    }

    fn record(&mut self, err: f64) {
        self.worst = self.worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }

    fn finish(self, tolerance: f64) -> CheckResult {
        CheckResult { name: String::from(self.name), cases: self.cases, max_rel_error: self.worst, passed: self.worst < tolerance }
    }
}

fn check_layers(cfg: &SuiteConfig, out: &mut Vec<CheckResult>) {
    let mut affine = Tracker::new("affine");
    let mut conv = Tracker::new("conv1d");
    let mut pool = Tracker::new("segment_max_pool");
    let mut tanh = Tracker::new("tanh");
    let mut ce = Tracker::new("softmax_cross_entropy");
    let mut kl = Tracker::new("kl_divergence");
    for case in 0..cfg.cases as u64 {
        let mut rng = RandomSource::with_stream(cfg.seed, 1000 + case);

        let (m, n) = (1 + rng.below(4), 1 + rng.below(5));
        let w = rand_matrix(&mut rng, m, n);
        let x = rand_matrix(&mut rng, 1, n);
        let b: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let up: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (dx, dw, _) = affine_backward(x.as_slice(), &w, &up).expect("affine backward");
        let f = |x: &Matrix, w: &Matrix| weighted(&affine_forward(x.as_slice(), w, &b).expect("affine"), &up);
        affine.record(grad_check(|p| f(p, &w), &x, &row(&dx)));
        affine.record(grad_check(|p| f(&x, p), &w, &dw));
        affine.cases += 1;

        let (l, d, fc) = (3 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4));
        let input = rand_matrix(&mut rng, l, d);
        let filters = rand_matrix(&mut rng, fc, 3 * d);
        let bias: Vec<f64> = (0..fc).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let up = rand_matrix(&mut rng, l, fc);
        let g = conv1d_backward(&input, &filters, &up).expect("conv backward");
        let f = |i: &Matrix, k: &Matrix, b: &[f64]| weighted(conv1d_forward(i, k, b).expect("conv").as_slice(), up.as_slice());
        conv.record(grad_check(|p| f(p, &filters, &bias), &input, &g.d_input));
        conv.record(grad_check(|p| f(&input, p, &bias), &filters, &g.d_filters));
        conv.record(grad_check(|p| f(&input, &filters, p.as_slice()), &row(&bias), &row(&g.d_bias)));
        conv.cases += 1;

        let l = 2 + rng.below(7);
        let featmap = rand_matrix(&mut rng, l, fc);
        let s1 = rng.below(l);
        let s2 = s1 + rng.below(l - s1);
        if min_pool_gap(&featmap, (s1, s2), l) > 1e-4 {
            let up: Vec<f64> = (0..3 * fc).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let p = segment_max_pool(&featmap, (s1, s2), l).expect("pool");
            let d = segment_max_pool_backward(&p.argmax, &up, l, fc);
            let f = |m: &Matrix| weighted(&segment_max_pool(m, (s1, s2), l).expect("pool").pooled, &up);
            pool.record(grad_check(f, &featmap, &d));
            pool.cases += 1;
        }

        let v = rand_matrix(&mut rng, 1, 6);
        let up: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let d = tanh_backward(&tanh_forward(v.as_slice()), &up);
        tanh.record(grad_check(|m| weighted(&tanh_forward(m.as_slice()), &up), &v, &row(&d)));
        tanh.cases += 1;

        let c = 2 + rng.below(3);
        let logits = rand_matrix(&mut rng, 1, c);
        let label = rng.below(c);
        let d = softmax_cross_entropy(logits.as_slice(), label).expect("ce").d_logits;
        ce.record(grad_check(|m| softmax_cross_entropy(m.as_slice(), label).expect("ce").loss, &logits, &row(&d)));
        ce.cases += 1;

        let p = softmax(rand_matrix(&mut rng, 1, c).as_slice());
        let q = rand_matrix(&mut rng, 1, c);
        let (_, d) = kl_divergence(&p, q.as_slice()).expect("kl");
        kl.record(grad_check(|m| kl_divergence(&p, m.as_slice()).expect("kl").0, &q, &row(&d)));
        kl.cases += 1;
    }
    out.extend([affine, conv, pool, tanh, ce, kl].map(|t| t.finish(cfg.tolerance)));
}

fn check_model(cfg: &SuiteConfig, out: &mut Vec<CheckResult>) {
    let mut params = Tracker::new("pcnn_parameters");
    let mut input = Tracker::new("pcnn_input");
    let mut vat = Tracker::new("vat_parameters_frozen_r");
    for case in 0..cfg.cases as u64 {
        let (net, inst) = reduced_case(cfg.seed.wrapping_add(case));
        let label = inst.label.expect("labeled");
        let mut g = net.zero_grads();
        let (_, d_x) = cross_entropy_step(&net, &inst, &inst.x, label, 1.0, Some(&mut g)).expect("backward");
        let loss_with = |n: &Pcnn| cross_entropy_loss(n, &inst, &inst.x, label).expect("forward");
        let mut probe = net.clone();
        params.record(grad_check(
            |m| {
                probe.conv_filters = m.clone();
                loss_with(&probe)
            },
            &net.conv_filters,
            &g.conv_filters,
        ));
        let mut probe = net.clone();
        params.record(grad_check(
            |m| {
                probe.conv_bias = m.as_slice().to_vec();
                loss_with(&probe)
            },
            &row(&net.conv_bias),
            &row(&g.conv_bias),
        ));
        let mut probe = net.clone();
        params.record(grad_check(
            |m| {
                probe.fc_w = m.clone();
                loss_with(&probe)
            },
            &net.fc_w,
            &g.fc_w,
        ));
        let mut probe = net.clone();
        params.record(grad_check(
            |m| {
                probe.fc_b = m.as_slice().to_vec();
                loss_with(&probe)
            },
            &row(&net.fc_b),
            &row(&g.fc_b),
        ));
        params.cases += 1;

        input.record(grad_check(|m| cross_entropy_loss(&net, &inst, m, label).expect("forward"), &inst.x, &d_x));
        input.cases += 1;

        let Some(r) = (0..20).find_map(|k| {
            let r = vat_perturbation(&net, &inst, &VatConfig::default(), &mut RandomSource::with_stream(case, k)).expect("vat");
            let (_, cache) = net.forward_matrix(&r.apply(&inst.x), inst.boundaries, inst.valid_len).expect("forward");
            (min_pool_gap(&cache.featmap, inst.boundaries, inst.valid_len) > 1e-3).then_some(r)
        }) else {
            continue;
        };
        let p = softmax(&Classifier::forward(&net, &inst, &inst.x).expect("forward").0);
        let mut g = net.zero_grads();
        vat_loss_against(&net, &inst, &p, &r, 1.0, Some(&mut g)).expect("vat loss");
        let mut probe = net.clone();
        vat.record(grad_check(
            |m| {
                probe.fc_w = m.clone();
                vat_loss_against(&probe, &inst, &p, &r, 1.0, None).expect("vat loss")
            },
            &net.fc_w,
            &g.fc_w,
        ));
        let mut probe = net.clone();
        vat.record(grad_check(
            |m| {
                probe.conv_filters = m.clone();
                vat_loss_against(&probe, &inst, &p, &r, 1.0, None).expect("vat loss")
            },
            &net.conv_filters,
            &g.conv_filters,
        ));
        vat.cases += 1;
    }
    out.extend([params, input, vat].map(|t| t.finish(cfg.tolerance)));
}

/// A tiny full model (3-dimensional word vectors) with one instance.
pub fn tiny_model(seed: u64) -> (ModelParams, Instance) {
    let mut rng = RandomSource::with_stream(seed, 7);
    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
    let tags = ["NN", "VB", "DT"];
    let tokens: Vec<Token> = (0..7)
        .map(|_| Token::new(words[rng.below(words.len())], tags[rng.below(3)], tags[rng.below(3)]))
        .collect();
    let inst = Instance::new(tokens, Span::new(1, 1), Span::new(4, 5), alloc::vec![Span::new(6, 6)], Some(Label::Positive))
        .expect("tiny instance");
    let m = Matrix::filled_with(words.len(), 3, |_, _| rng.uniform(-1.0, 1.0));
    let emb = EmbeddingTable::new(words.iter().map(|w| String::from(*w)).collect(), m).expect("tiny embeddings");
    let tables = FeatureTables::build(core::iter::once(&inst), &emb, 9, &mut rng);
    let dims = PcnnDims { input_dim: tables.layout.width(), filters: 4, window: 3 };
    (ModelParams { net: Pcnn::init(dims, seed), tables }, inst)
}

fn check_tables(cfg: &SuiteConfig, out: &mut Vec<CheckResult>) {
    let mut t = Tracker::new("lookup_tables");
    for case in 0..cfg.cases.min(5) as u64 {
        let (model, inst) = tiny_model(cfg.seed.wrapping_add(case));
        let enc = model.tables.encode(&inst, PerturbScope::All).expect("encode");
        let mut g = model.zero_grads();
        cross_entropy_step(&model, &enc, &enc.x, 1, 1.0, Some(&mut g)).expect("backward");
        let loss = |m: &ModelParams| {
            let e = m.tables.encode(&inst, PerturbScope::All).expect("encode");
            cross_entropy_loss(m, &e, &e.x, 1).expect("forward")
        };
        let mut dense_words = Matrix::zeros(model.tables.words.rows(), model.tables.words.cols());
        for (&r, v) in &g.tables.words {
            dense_words.row_mut(r).copy_from_slice(v);
        }
        let mut probe = model.clone();
        t.record(grad_check(
            |m| {
                probe.tables.words = m.clone();
                loss(&probe)
            },
            &model.tables.words,
            &dense_words,
        ));
        let mut probe = model.clone();
        t.record(grad_check(
            |m| {
                probe.tables.pos = m.clone();
                loss(&probe)
            },
            &model.tables.pos,
            &g.tables.pos,
        ));
        let mut probe = model.clone();
        t.record(grad_check(
            |m| {
                probe.tables.dep = m.clone();
                loss(&probe)
            },
            &model.tables.dep,
            &g.tables.dep,
        ));
        let mut probe = model.clone();
        t.record(grad_check(
            |m| {
                probe.tables.dist = m.clone();
                loss(&probe)
            },
            &model.tables.dist,
            &g.tables.dist,
        ));
        t.cases += 1;
    }
    out.push(t.finish(cfg.tolerance));
}

/// Runs every gradient check.
pub fn run_gradient_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut checks = Vec::new();
    check_layers(cfg, &mut checks);
    check_model(cfg, &mut checks);
    check_tables(cfg, &mut checks);
    SuiteReport { tolerance: cfg.tolerance, checks }
}
