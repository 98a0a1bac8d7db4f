use dmace::metrics::*;
use dmace::mnt::*;
use dmace::optimizer::*;
use dmace::scenario::*;
use dmace::tensor::*;
use dmace::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_tensor(seed: u64, dims: (usize, usize, usize), scale: f64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slices: Vec<CMat> = (0..dims.2).map(|_| gaussian_matrix(&mut rng, dims.0, dims.1) * C64::new(scale, 0.0)).collect();
    Tensor3::from_slices(&slices).unwrap()
}

fn add_offset(t: &Tensor3, offset: &CMat) -> Tensor3 {
    let slices: Vec<CMat> = t.slices().map(|s| s + offset).collect();
    Tensor3::from_slices(&slices).unwrap()
}

fn sum(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let slices: Vec<CMat> = a.slices().zip(b.slices()).map(|(x, y)| x + y).collect();
    Tensor3::from_slices(&slices).unwrap()
}

#[test]
fn nmse_of_perfect_and_zero_predictions() {
    let h = random_tensor(1, (3, 2, 20), 1.0);
    assert_eq!(nmse(&h, &h).unwrap(), 0.0);
    assert_eq!(nmse(&h, &Tensor3::zeros(h.dims())).unwrap(), 1.0);
    let z = Tensor3::zeros(h.dims());
    assert!(matches!(nmse(&z, &h), Err(Error::Degenerate(_))));
}

#[test]
fn nmse_of_scaled_residual() {
    let h = random_tensor(2, (3, 2, 20), 1.0);
    let e = random_tensor(3, (3, 2, 20), 1.0);
    let eps = 1e-3;
    let pred = sum(&h, &random_tensor(3, (3, 2, 20), eps));
    let expected = eps * eps * e.frobenius_sq() / h.frobenius_sq();
    assert!((nmse(&h, &pred).unwrap() - expected).abs() <= 1e-12 * expected);
}

#[test]
fn exact_prediction_with_offset_flags_all_entries() {
    let h = random_tensor(4, (2, 2, 10), 1.0);
    let off = CMat::from_element(2, 2, C64::new(0.3, -0.1));
    let (z, _, inf) = zeta(&h, &add_offset(&h, &off)).unwrap();
    assert_eq!(inf, 4);
    assert!(z.is_infinite());
}

#[test]
fn zeta_tracks_snr_for_white_noise() {
    let q = 10_000;
    let signal = random_tensor(5, (1, 1, q), 1.0);
    for snr in [0.0, 10.0, 20.0, 40.0] {
        let sigma = 10f64.powf(-snr / 20.0);
        let meas = sum(&signal, &random_tensor(6, (1, 1, q), sigma));
        let r = evaluate(&meas, &signal).unwrap();
        // The measured spread includes the noise, so zeta = sqrt(1 + sigma^2) / sigma.
        let exact = 10.0 * (1.0 + 10f64.powf(snr / 10.0)).log10();
        assert!((r.zeta_db - exact).abs() < 0.5, "snr {snr}: zeta {}", r.zeta_db);
        if snr >= 10.0 {
            assert!((r.zeta_db - snr).abs() < 0.5, "snr {snr}: zeta {}", r.zeta_db);
        }
        let nmse_exact = -10.0 * (1.0 + 10f64.powf(snr / 10.0)).log10();
        assert!((r.nmse_db - nmse_exact).abs() < 0.5, "snr {snr}: nmse {}", r.nmse_db);
    }
}

#[test]
fn alignment_resolves_pure_ambiguity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = gaussian_matrix(&mut rng, 3, 5);
    let b = gaussian_matrix(&mut rng, 5, 2);
    let g = C64::new(0.0, 2.0);
    let al = align_scalar(&(&a * g), &(&b / g), &a, &b).unwrap();
    assert!((al.gamma - ONE / g).norm() < 1e-14);
    assert!(al.a_residual <= 1e-14 && al.b_residual <= 1e-14);
    let same = align_scalar(&a, &b, &a, &b).unwrap();
    assert!((same.gamma - ONE).norm() < 1e-14);
    assert!(matches!(align_scalar(&CMat::zeros(3, 5), &b, &a, &b), Err(Error::Degenerate(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn zeta_ignores_constant_offsets(seed in any::<u64>(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let h = random_tensor(seed, (3, 2, 30), 1.0);
        let pred = sum(&h, &random_tensor(seed ^ 1, (3, 2, 30), 0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let off = gaussian_matrix(&mut rng, 3, 2) * C64::new(re, im);
        let z0 = evaluate(&h, &pred).unwrap().zeta_db;
        let z1 = evaluate(&h, &add_offset(&pred, &off)).unwrap().zeta_db;
        prop_assert!((z0 - z1).abs() <= 1e-12, "{z0} vs {z1}");
    }
}

#[test]
fn gain_without_elements_is_the_direct_link() {
    let mut p = generate_params(&ScenarioSpec::new(2, 6, 2)).unwrap();
    p.a.fill(ZERO);
    let h = p.h0[(1, 0)].norm_sqr();
    for v in sample_configs(6, 10, 1, false) {
        assert_eq!(channel_gain(&p, &v, 1, 0).unwrap(), h);
    }
    assert!(channel_gain(&p, &DmaConfiguration::zeros(6), 2, 0).is_err());
}

#[test]
fn gain_matches_forward_model_and_ignores_scaling() {
    let p = generate_params(&ScenarioSpec::new(2, 8, 3).with_seed(4)).unwrap();
    let mut q = p.clone();
    let g = C64::new(-1.5, 0.7);
    q.a *= g;
    q.b /= g;
    for v in sample_configs(8, 20, 2, false) {
        let gain = channel_gain(&p, &v, 2, 1).unwrap();
        assert_eq!(gain, end_to_end(&p, &v).unwrap()[(2, 1)].norm_sqr());
        assert!((channel_gain(&q, &v, 2, 1).unwrap() - gain).abs() <= 1e-12 * gain);
    }
}

fn dma_fitness(seed: u64) -> impl Fn(&DmaConfiguration) -> dmace::Result<f64> + Sync {
    let p = generate_params(&ScenarioSpec::new(2, 10, 2).with_seed(seed)).unwrap();
    move |v: &DmaConfiguration| channel_gain(&p, v, 0, 0)
}

#[test]
fn ga_trace_is_monotone_and_beats_baseline() {
    for seed in 0..5 {
        let cfg = GaConfig {
            seed,
            population: 40,
            ..Default::default()
        };
        let r = genetic_optimize(dma_fitness(seed), 10, &cfg).unwrap();
        assert!(r.gain_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.best_gain >= r.random_baseline.max);
        assert_eq!(r.best_gain, *r.gain_trace.last().unwrap());
        assert!((r.enhancement - r.best_gain / r.random_baseline.mean).abs() < 1e-12 * r.enhancement);
    }
}

#[test]
fn ga_is_deterministic() {
    let cfg = GaConfig {
        seed: 9,
        population: 30,
        ..Default::default()
    };
    let a = genetic_optimize(dma_fitness(1), 10, &cfg).unwrap();
    let b = genetic_optimize(dma_fitness(1), 10, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ga_matches_exhaustive_optimum_on_small_problems() {
    let mut hits = 0;
    for seed in 0..10 {
        let f = dma_fitness(100 + seed);
        let (_, opt) = exhaustive_search(&f, 10).unwrap();
        let r = genetic_optimize(&f, 10, &GaConfig { seed, ..Default::default() }).unwrap();
        assert!(r.best_gain <= opt * (1.0 + 1e-12));
        if r.best_gain >= 0.95 * opt {
            hits += 1;
        }
    }
    assert!(hits >= 10, "{hits}/10");
}

#[test]
fn ga_rejects_invalid_settings() {
    let f = dma_fitness(0);
    assert!(genetic_optimize(&f, 0, &GaConfig::default()).is_err());
    let cfg = GaConfig {
        elitism: 0,
        ..Default::default()
    };
    assert!(genetic_optimize(&f, 10, &cfg).is_err());
}
