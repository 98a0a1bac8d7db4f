use dmace::mnt::*;
use dmace::scenario::*;
use dmace::tensor::*;
use dmace::Error;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn bits(s: &str) -> DmaConfiguration {
    DmaConfiguration::from_bitstring(s).unwrap()
}

/// `(I - Phi Gamma)^-1 Phi` summed as a Neumann series.
fn neumann_omega(r: &[C64], gamma: &CMat) -> CMat {
    let n = r.len();
    let phi = CMat::from_diagonal(&CVec::from_column_slice(r));
    let step = &phi * gamma;
    let mut term = phi.clone();
    let mut sum = CMat::zeros(n, n);
    for _ in 0..200 {
        sum += &term;
        term = &step * term;
    }
    sum
}

#[test]
fn encode_substitutes_load_states() {
    let r = encode(&bits("101"), c(0.2, 0.1), c(-0.8, 0.0));
    assert_eq!(r.0.as_slice(), &[c(-0.8, 0.0), c(0.2, 0.1), c(-0.8, 0.0)]);
    let beta = c(0.3, -0.4);
    let ones = encode(&DmaConfiguration::ones(4), ZERO, beta);
    assert!(ones.0.iter().all(|&x| x == beta));
    assert!(encode(&DmaConfiguration::zeros(4), ZERO, ONE).0.iter().all(|&x| x == ZERO));
}

#[test]
fn omega_of_zero_load_is_zero() {
    let gamma = CMat::from_element(3, 3, c(0.1, 0.2));
    let om = omega(&LoadVector(CVec::zeros(3)), &gamma).unwrap();
    assert_eq!(om, CMat::zeros(3, 3));
}

#[test]
fn omega_matches_hand_inverse() {
    let gamma = CMat::from_row_slice(2, 2, &[ZERO, c(0.5, 0.0), c(0.5, 0.0), ZERO]);
    let om = omega(&LoadVector(CVec::from_element(2, ONE)), &gamma).unwrap();
    let expected = CMat::from_row_slice(2, 2, &[ONE, c(0.5, 0.0), c(0.5, 0.0), ONE]) / c(0.75, 0.0);
    assert!(relative_diff(&om, &expected) < 1e-15);
}

#[test]
fn end_to_end_matches_neumann_series() {
    let spec = ScenarioSpec::new(3, 10, 4).with_coupling(0.5).with_seed(11);
    let p = generate_params(&spec).unwrap();
    for v in sample_configs(10, 20, 3, false) {
        let r = encode(&v, p.alpha, p.beta);
        let oracle = &p.h0 + &p.a * neumann_omega(r.0.as_slice(), &p.gamma) * &p.b;
        assert!(relative_diff(&end_to_end(&p, &v).unwrap(), &oracle) < 1e-12);
    }
}

#[test]
fn reference_configuration_gives_direct_channel() {
    let p = generate_params(&ScenarioSpec::new(2, 6, 3)).unwrap();
    let v = DmaConfiguration::zeros(6);
    assert_eq!(end_to_end(&p, &v).unwrap(), p.h0);
    assert_eq!(end_to_end_no_mc(&p, &v), p.h0);
}

#[test]
fn without_coupling_the_models_coincide() {
    let p = generate_params(&ScenarioSpec::new(2, 6, 3).with_coupling(0.0)).unwrap();
    for v in sample_configs(6, 10, 1, false) {
        assert!(relative_diff(&end_to_end(&p, &v).unwrap(), &end_to_end_no_mc(&p, &v)) < 1e-15);
    }
}

#[test]
fn coupling_residual_has_closed_form() {
    let p = generate_params(&ScenarioSpec::new(2, 8, 3).with_seed(5)).unwrap();
    let n = p.n_m();
    for v in sample_configs(n, 10, 2, false) {
        let r = encode(&v, p.alpha, p.beta);
        let phi = CMat::from_diagonal(&r.0);
        let core = (CMat::identity(n, n) - &phi * &p.gamma).try_inverse().unwrap() - CMat::identity(n, n);
        let expected = &p.a * core * &phi * &p.b;
        let got = end_to_end(&p, &v).unwrap() - end_to_end_no_mc(&p, &v);
        assert!(relative_diff(&got, &expected) < 1e-12);
    }
}

#[test]
fn omega_stack_holds_each_configuration() {
    let p = generate_params(&ScenarioSpec::new(2, 5, 2).with_seed(9)).unwrap();
    let configs = sample_configs(5, 6, 4, false);
    let stacks = build_omega_stack(&p.coupling(), &configs, StackVariant::Augmented { n_f: 2 }).unwrap();
    let aug = stacks.augmented().unwrap();
    for (k, v) in configs.iter().enumerate() {
        let om = p.coupling().omega(v).unwrap();
        assert_eq!(stacks.plain.frontal_slice(k), om);
        assert_eq!(aug.frontal_slice(k), augment(&om, 2));
    }
}

#[test]
fn single_uncoupled_configuration_gives_diag_r() {
    let model = CouplingModel {
        gamma: CMat::zeros(3, 3),
        alpha: c(0.1, 0.0),
        beta: c(0.0, 1.0),
    };
    let v = bits("011");
    let stacks = build_omega_stack(&model, std::slice::from_ref(&v), StackVariant::Plain).unwrap();
    let r = encode(&v, model.alpha, model.beta);
    assert_eq!(stacks.plain.frontal_slice(0), CMat::from_diagonal(&r.0));
    assert!(stacks.augmented().is_err());
}

#[test]
fn open_port_reduction_scalar_case() {
    // ports: feed 0 (active), feed 1 (open), element 2, user 3
    let vals = [
        [0.1, 0.2, 0.3, 0.05],
        [0.2, 0.4, 0.25, 0.1],
        [0.3, 0.25, 0.15, 0.2],
        [0.05, 0.1, 0.2, 0.0],
    ];
    let s = CMat::from_fn(4, 4, |i, j| c(vals[i][j], 0.01 * (i + j) as f64));
    let sm = ScatteringMatrix::new(s.clone(), vec![0, 1], vec![2], vec![3]).unwrap();
    let got = reduce_open_ports(&sm, &[0], &[1]).unwrap();
    let expected = s[(2, 2)] + s[(2, 1)] * s[(1, 2)] / (ONE - s[(1, 1)]);
    assert!((got[(0, 0)] - expected).norm() < 1e-15);
    assert_eq!(reduce_open_ports(&sm, &[0, 1], &[]).unwrap()[(0, 0)], s[(2, 2)]);
    assert!(reduce_open_ports(&sm, &[0], &[]).is_err());
}

#[test]
fn open_ports_without_element_coupling_leave_s_mm() {
    let mut s = CMat::from_fn(4, 4, |i, j| c(0.1 * (i + 1) as f64, 0.05 * j as f64));
    s[(2, 1)] = ZERO;
    s[(1, 2)] = ZERO;
    let sm = ScatteringMatrix::new(s.clone(), vec![0, 1], vec![2], vec![3]).unwrap();
    assert_eq!(reduce_open_ports(&sm, &[0], &[1]).unwrap()[(0, 0)], s[(2, 2)]);
}

#[test]
fn generated_coupling_has_requested_norm_and_symmetry() {
    for seed in 0..5 {
        let p = generate_params(&ScenarioSpec::new(2, 12, 3).with_seed(seed)).unwrap();
        assert!((spectral_norm(&p.gamma) - 0.8).abs() < 1e-12);
        assert!(is_symmetric(&p.gamma, 0.0));
    }
}

#[test]
fn configuration_bits_are_fair() {
    let configs = sample_configs(16, 10_000, 42, false);
    let ones: usize = configs.iter().map(|v| v.bits().iter().filter(|&&b| b).count()).sum();
    let mean = ones as f64 / (16.0 * 10_000.0);
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
}

#[test]
fn sampled_configurations_are_distinct_and_repeatable() {
    let a = sample_configs(4, 16, 7, true);
    assert_eq!(a, sample_configs(4, 16, 7, true));
    assert_eq!(a[0], DmaConfiguration::zeros(4));
    let set: std::collections::HashSet<_> = a.iter().collect();
    assert_eq!(set.len(), 16);
}

#[test]
fn noise_is_calibrated_to_requested_snr() {
    let p = generate_params(&ScenarioSpec::new(4, 8, 4).with_seed(3)).unwrap();
    let configs = sample_configs(8, 700, 1, false);
    let clean = measure(&p, &configs, None, 0).unwrap();
    for snr in [0.0, 20.0] {
        let noisy = measure(&p, &configs, Some(snr), 9).unwrap();
        let emp = empirical_snr_db(&clean.h_meas, &noisy.h_meas);
        assert!((emp - snr).abs() < 0.5, "requested {snr} got {emp}");
    }
}

#[test]
fn measurement_is_deterministic() {
    let p = generate_params(&ScenarioSpec::new(2, 6, 3)).unwrap();
    let configs = sample_configs(6, 30, 1, false);
    assert_eq!(
        measure(&p, &configs, Some(10.0), 4).unwrap(),
        measure(&p, &configs, Some(10.0), 4).unwrap()
    );
}

#[test]
fn generated_parameters_are_admissible_for_many_configurations() {
    let spec = ScenarioSpec::new(2, 16, 2).with_seed(21);
    let p = generate_params(&spec).unwrap();
    for v in sample_configs(16, 1000, 8, false) {
        end_to_end(&p, &v).unwrap();
    }
}

#[test]
fn dataset_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.json");
    let ds = generate_dataset(&ScenarioSpec::new(2, 6, 3).with_snr_db(Some(30.0)), 10, 5, true).unwrap();
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn dataset_without_ground_truth_still_provides_known_h0() {
    let ds = generate_dataset(&ScenarioSpec::new(2, 6, 3), 10, 5, false).unwrap();
    let back = dataset_from_json(&dataset_to_json(&ds)).unwrap();
    assert!(back.ground_truth.is_none());
    let truth = generate_params(&ScenarioSpec::new(2, 6, 3)).unwrap();
    assert_eq!(back.known_h0().unwrap(), truth.h0);
}

#[test]
fn truncated_file_is_a_parse_error() {
    let ds = generate_dataset(&ScenarioSpec::new(2, 4, 2), 4, 2, true).unwrap();
    let text = dataset_to_json(&ds);
    let cut = &text[..text.len() / 2];
    match dataset_from_json(cut) {
        Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn restricting_feeds_keeps_the_forward_model() {
    let ds = generate_dataset(&ScenarioSpec::new(3, 6, 2), 8, 4, true).unwrap();
    let sub = ds.restrict_feeds(&[0, 2]).unwrap();
    let p = sub.ground_truth.as_ref().unwrap();
    assert_eq!(p.n_f(), 2);
    let test = sub.test(None).unwrap();
    for (k, v) in test.configs.iter().enumerate() {
        assert!(relative_diff(&test.h_meas.frontal_slice(k), &end_to_end(p, v).unwrap()) < 1e-14);
    }
}
