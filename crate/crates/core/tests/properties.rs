use nolab_core::grid::num_complex::Complex64;
use nolab_core::grid::{make_grid, Field, GrfSampler, GridSpec};
use nolab_core::operator::{
    apply_kernel, build_operator, lipschitz_cert, Activation, DenseKernel, KernelKind, KernelSpec, OperatorChain,
    OperatorConfig, SpectralKernel,
};
use nolab_core::rng::rng_from_seed;
use nolab_core::training::{eval_risk, gen_dataset, TargetOperator};
use nolab_core::verification::{run_gradient_flow, Potential};
use proptest::prelude::*;
use rand::Rng;

fn random_spectral(dim: usize, k_max: usize, channels: usize, seed: u64) -> SpectralKernel {
    let mut rng = rng_from_seed(seed);
    SpectralKernel::from_fn(dim, k_max, channels, |_, _, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
    .unwrap()
}

fn grf(grid: &GridSpec, channels: usize, seed: u64) -> Field {
    GrfSampler::new(1.5, 1.0, seed).unwrap().sample(grid, channels)
}

fn config(grid: GridSpec, width: usize, layers: usize, activation: Activation) -> OperatorConfig {
    OperatorConfig {
        grid,
        in_channels: 1,
        out_channels: 1,
        width,
        layers,
        kernel: KernelKind::Spectral { k_max: 3 },
        activation,
        init_scale: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, dim in 1usize..=2) {
        let grid = make_grid(dim, 16, 1.0).unwrap();
        let spectral = random_spectral(dim, 4, 2, seed);
        let dense = DenseKernel::from_spectral(&spectral, grid).unwrap();
        let u = grf(&grid, 2, seed ^ 1);
        let v = grf(&grid, 2, seed ^ 2);
        let combo = u.lin_comb(a, &v, b).unwrap();
        for kernel in [KernelSpec::Spectral(spectral), KernelSpec::Dense(dense)] {
            let lhs = apply_kernel(&kernel, &combo).unwrap();
            let rhs = apply_kernel(&kernel, &u).unwrap().lin_comb(a, &apply_kernel(&kernel, &v).unwrap(), b).unwrap();
            let scale = 1.0 + rhs.max_abs();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10 * scale);
        }
    }

    #[test]
    fn dense_matches_spectral(seed in any::<u64>(), dim in 1usize..=2, k_max in 0usize..=5) {
        let grid = make_grid(dim, 16, 2.0).unwrap();
        let spectral = random_spectral(dim, k_max, 2, seed);
        let dense = DenseKernel::from_spectral(&spectral, grid).unwrap();
        let u = grf(&grid, 2, seed.wrapping_add(7));
        let ks = apply_kernel(&KernelSpec::Spectral(spectral), &u).unwrap();
        let kd = apply_kernel(&KernelSpec::Dense(dense), &u).unwrap();
        prop_assert!(ks.max_abs_diff(&kd).unwrap() <= 1e-8);
    }

    #[test]
    fn chain_certificate_is_product(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let grid = make_grid(1, 16, 1.0).unwrap();
        let ops: Vec<_> = [s1, s2, s3]
            .iter()
            .map(|&s| build_operator(&config(grid, 3, 2, Activation::Tanh), s).unwrap())
            .collect();
        let product: f64 = ops.iter().map(|op| lipschitz_cert(op).product).product();
        let chain = OperatorChain::new(ops).unwrap();
        prop_assert!((chain.lipschitz() - product).abs() <= 1e-12 * product.max(1.0));
    }

    #[test]
    fn stability_certificate_holds(seed in any::<u64>(), amp in 0.1f64..10.0) {
        let grid = make_grid(1, 16, 1.0).unwrap();
        let op = build_operator(&config(grid, 3, 2, Activation::Tanh), seed).unwrap();
        let cert = lipschitz_cert(&op);
        let u = GrfSampler::new(1.0, amp, seed ^ 0xabc).unwrap().sample(&grid, 1);
        let v = GrfSampler::new(1.0, amp, seed ^ 0xdef).unwrap().sample(&grid, 1);
        let gu = op.forward(&u).unwrap();
        let gv = op.forward(&v).unwrap();
        prop_assert!(gu.l2_norm() <= cert.product * u.l2_norm() + cert.c0 + 1e-9);
        prop_assert!(gu.sub(&gv).unwrap().l2_norm() <= cert.product * u.sub(&v).unwrap().l2_norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn quadratic_flow_descends(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let grid = make_grid(1, 16, 1.0).unwrap();
        let potential = Potential::Quadratic { forcing: grf(&grid, 1, seed) };
        let eta = frac * 2.0 / potential.max_multiplier();
        let u0 = grf(&grid, 1, seed ^ 0x55);
        let run = run_gradient_flow(&potential, &u0, eta, 200).unwrap();
        prop_assert!(!run.blew_up);
        for w in run.energies.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn grf_and_dataset_are_reproducible(seed in any::<u64>()) {
        let grid = make_grid(1, 32, 1.0).unwrap();
        let sampler = GrfSampler::new(2.0, 1.0, seed).unwrap();
        prop_assert_eq!(sampler.sample(&grid, 2), sampler.sample(&grid, 2));
        let target = TargetOperator::smoothed_tanh();
        let a = gen_dataset(&target, &sampler, &grid, 8).unwrap();
        let b = gen_dataset(&target, &sampler, &grid, 8).unwrap();
        let op = build_operator(&config(grid, 2, 1, Activation::Tanh), seed).unwrap();
        let ra = eval_risk(&op, &a, f64::INFINITY).unwrap();
        let rb = eval_risk(&op, &b, f64::INFINITY).unwrap();
        prop_assert_eq!(ra.to_bits(), rb.to_bits());
    }
}

#[test]
fn activations_are_one_lipschitz() {
    let mut rng = rng_from_seed(99);
    for act in [Activation::Relu, Activation::Tanh, Activation::Identity] {
        for _ in 0..100_000 {
            let x: f64 = rng.random_range(-20.0..20.0);
            let y: f64 = rng.random_range(-20.0..20.0);
            let lhs = (act.apply(x) - act.apply(y)).abs();
            assert!(lhs <= act.lipschitz() * (x - y).abs() * (1.0 + 1e-15) + 1e-300, "{} at ({x}, {y})", act.name());
        }
    }
}
