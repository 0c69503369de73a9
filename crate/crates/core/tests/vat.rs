use advreg_core::adversarial::Perturbation;
use advreg_core::classifier::cross_entropy_step;
use advreg_core::encoder::BlockKind;
use advreg_core::gradsuite::reduced_case;
use advreg_core::harness::{unlabeled_pool, Mode, TrainConfig};
use advreg_core::numcore::{Matrix, RandomSource};
use advreg_core::synth::{generate, SyntheticConfig};
use advreg_core::toy::{dominant_eigenvector_2x2, kl_hessian_fd, SoftmaxLinear};
use advreg_core::vat::{block_norm, combined_vat_objective, vat_loss_with, vat_perturbation, VatConfig};
use proptest::prelude::*;

fn toy_cosine(classes: usize, seed: u64, power_iters: usize) -> f64 {
    let mut rng = RandomSource::new(seed);
    let model = SoftmaxLinear::random(classes, 2, 2.0, &mut rng);
    let x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
    let inst = SoftmaxLinear::instance(&x);
    let cfg = VatConfig { eps_embedding: 1.0, power_iters, ..VatConfig::default() };
    let r = vat_perturbation(&model, &inst, &cfg, &mut RandomSource::with_stream(seed, 1)).unwrap();
    let v = dominant_eigenvector_2x2(&kl_hessian_fd(&model, &x, 1e-4));
    let d = r.r.row(0);
    (d[0] * v[0] + d[1] * v[1]).abs() / libm::hypot(d[0], d[1])
}

#[test]
fn power_iteration_aligns_with_hessian_eigenvector() {
    for seed in 0..60 {
        let c1 = toy_cosine(2, seed, 1);
        let c8 = toy_cosine(2, seed, 8);
        assert!(c1 > 0.95, "seed {seed}: I_p=1 cos {c1}");
        assert!(c8 > 0.99, "seed {seed}: I_p=8 cos {c8}");
    }
}

#[test]
fn more_power_iterations_never_reduce_alignment() {
    let mut sums = [0.0; 4];
    for seed in 0..60 {
        let cs: Vec<f64> = [1, 2, 4, 8].iter().map(|&k| toy_cosine(3, seed, k)).collect();
        for w in cs.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "seed {seed}: {cs:?}");
        }
        for (s, c) in sums.iter_mut().zip(&cs) {
            *s += c;
        }
    }
    assert!(sums[3] / 60.0 > 0.99, "{sums:?}");
}

#[test]
fn blockwise_norms() {
    let cfg = VatConfig::default();
    for seed in 0..50 {
        let (net, inst) = reduced_case(seed);
        let r = vat_perturbation(&net, &inst, &cfg, &mut RandomSource::new(seed)).unwrap();
        for (kind, _) in inst.layout.blocks() {
            let target = if kind == BlockKind::Embedding { 2.0 } else { 0.01 };
            assert!((block_norm(&r.r, &inst, kind) - target).abs() < 1e-9, "seed {seed} {kind:?}");
        }
        for row in inst.valid_len..r.r.rows() {
            assert!(r.r.row(row).iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn zero_perturbation_has_zero_loss_and_gradient() {
    let (net, inst) = reduced_case(3);
    let mut g = net.zero_grads();
    let l = vat_loss_with(&net, &inst, &Perturbation::zeros_like(&inst.x), 1.0, Some(&mut g)).unwrap();
    assert!(l.abs() < 1e-12, "{l}");
    assert!(g.sum_squares() < 1e-24);
}

#[test]
fn zero_lambda_is_the_supervised_step() {
    let labeled: Vec<_> = (0..4).map(|s| reduced_case(s).1).collect();
    let unlabeled: Vec<_> = (10..14).map(|s| reduced_case(s).1).collect();
    let net = reduced_case(0).0;
    let cfg = VatConfig { lambda: 0.0, ..VatConfig::default() };
    let mut g = net.zero_grads();
    let l = combined_vat_objective(&net, &labeled, &unlabeled, &cfg, &mut RandomSource::new(0), &mut g).unwrap();
    let mut g_ref = net.zero_grads();
    let mut l_ref = 0.0;
    for inst in &labeled {
        l_ref += cross_entropy_step(&net, inst, &inst.x, inst.label.unwrap(), 0.25, Some(&mut g_ref)).unwrap().0;
    }
    assert_eq!(l, l_ref * 0.25);
    assert_eq!(g, g_ref);
}

#[test]
fn star_pool_is_the_labeled_multiset() {
    let corpus = generate(&SyntheticConfig { instances: 40, ..SyntheticConfig::default() });
    let cfg = TrainConfig { mode: Mode::VatStar, ..TrainConfig::default() };
    let pool = unlabeled_pool(&corpus.instances, &[], &cfg);
    let key = |v: &[advreg_core::corpus::Instance]| {
        let mut k: Vec<String> = v.iter().map(|i| format!("{:?}", i.unlabeled())).collect();
        k.sort();
        k
    };
    assert!(pool.iter().all(|i| i.label.is_none()));
    assert_eq!(key(&pool), key(&corpus.instances));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn smoothness_loss_is_non_negative(seed in 0u64..5000, scale in 0.0f64..5.0) {
        let (net, inst) = reduced_case(seed);
        let mut rng = RandomSource::new(seed);
        let mut r = Matrix::filled_with(inst.x.rows(), inst.x.cols(), |_, _| rng.normal());
        r.hadamard_assign(&inst.mask_for(advreg_core::encoder::PerturbScope::All));
        r.scale(scale);
        let l = vat_loss_with(&net, &inst, &Perturbation { r }, 1.0, None).unwrap();
        prop_assert!(l >= 0.0);
    }
}
