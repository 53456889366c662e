use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gat::init_params;
use crate::training::{generate_dataset, KSampling};

fn small_cfg(m: usize, n: usize, k: usize, t_p: usize) -> RadioConfig {
    let mut sys = SystemConfig::scenario(1).unwrap();
    sys.aps = m;
    sys.antennas = n;
    sys.k_max = k;
    sys.k_min = k;
    sys.pilot_len = t_p;
    sys.radio().unwrap()
}

fn spread(cfg: &RadioConfig, snr: f64, pilots: &[usize], seed: u64) -> ScenarioSample {
    let s = spread_instance(cfg, snr, seed).unwrap();
    assert_eq!(s.pilot_index, pilots);
    s
}

#[test]
fn cdf_of_three_values() {
    let c = empirical_cdf(&[3.0, 1.0, 2.0]).unwrap();
    assert_eq!(c.values, vec![1.0, 2.0, 3.0]);
    assert_eq!(c.ordinates, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
}

#[test]
fn cdf_rejects_empty_and_nan() {
    assert!(matches!(empirical_cdf(&[]), Err(Error::Input(_))));
    assert!(matches!(empirical_cdf(&[1.0, f64::NAN]), Err(Error::Numeric(_))));
}

#[test]
fn cdf_all_equal_is_one_step() {
    let c = empirical_cdf(&[2.5; 4]).unwrap();
    assert!(c.values.iter().all(|&v| v == 2.5));
    assert_eq!(*c.ordinates.last().unwrap(), 1.0);
    assert_eq!(c.quantile(0.05), 2.5);
    assert_eq!(c.quantile(0.95), 2.5);
}

#[test]
fn cdf_shifts_under_new_extremes() {
    let base = [0.4, 0.1, 0.9, 0.3];
    let c = empirical_cdf(&base).unwrap();
    let lo = empirical_cdf(&[&base[..], &[-1.0]].concat()).unwrap();
    let hi = empirical_cdf(&[&base[..], &[5.0]].concat()).unwrap();
    // a new minimum raises the CDF at every old value, a new maximum lowers it
    for (i, &v) in c.values.iter().enumerate() {
        let at = |d: &Cdf| d.ordinates[d.values.iter().rposition(|&x| x <= v).unwrap()];
        assert!(at(&lo) >= c.ordinates[i]);
        assert!(at(&hi) <= c.ordinates[i]);
    }
}

#[test]
fn quantiles_match_sorted_sample() {
    let v: Vec<f64> = (1..=20).map(f64::from).collect();
    let c = empirical_cdf(&v).unwrap();
    assert_eq!(c.quantile(0.05), 1.0);
    assert_eq!(c.quantile(0.5), 10.0);
    assert_eq!(c.quantile(0.95), 19.0);
    assert_eq!(c.quantile(1.0), 20.0);
}

fn small_testset() -> (RadioConfig, Vec<ScenarioSample>) {
    let mut sys = SystemConfig::scenario(1).unwrap();
    sys.aps = 6;
    sys.k_max = 5;
    sys.k_min = 3;
    sys.pilot_len = 3;
    let cfg = sys.radio().unwrap();
    let data = generate_dataset(&cfg, 6, 21, KSampling::from_config(&cfg)).unwrap();
    (cfg, data)
}

#[test]
fn duplicate_method_gives_identical_report() {
    let (cfg, data) = small_testset();
    let p = init_params(3, cfg.m);
    let methods = [Method::gat(&p), Method::gat(&p).named("gat_again")];
    let r = evaluate_methods(&data, &cfg, &methods, 1.0, 4).unwrap();
    assert_eq!(r.methods[0].se, r.methods[1].se);
    assert_eq!(r.methods[0].cdf().unwrap(), r.methods[1].cdf().unwrap());
}

#[test]
fn apg_dominates_zero_power() {
    let (cfg, data) = small_testset();
    let r = evaluate_methods(&data, &cfg, &[Method::apg(ApgOptions::default()), Method::zero()], 0.0, 0).unwrap();
    let apg = r.method("apg").unwrap().cdf().unwrap();
    let zero = r.method("zero").unwrap();
    assert!(zero.se.iter().flatten().all(|&v| v == 0.0));
    assert!(apg.values.iter().all(|&v| v > 0.0));
    assert!(r.method("apg").unwrap().mean_min_se() > 0.0);
}

#[test]
fn report_counts_active_ues_and_respects_prelog() {
    let (cfg, data) = small_testset();
    let r = evaluate_methods(&data, &cfg, &[Method::apg(ApgOptions::default())], 0.0, 0).unwrap();
    let m = &r.methods[0];
    for (row, s) in m.se.iter().zip(&data) {
        assert_eq!(row.len(), s.k_act);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
    // SINR under unit total power is bounded, and so is the SE
    let cap = cfg.prelog() * (1.0 + cfg.zeta_d * 1e-6f64.max(1.0)).log2();
    assert!(m.se.iter().flatten().all(|&v| v < cap));
    let cdf = m.cdf().unwrap();
    assert!(cdf.ordinates.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*cdf.ordinates.last().unwrap(), 1.0);
}

#[test]
fn ablation_matches_aware_on_orthogonal_pilots() {
    let (cfg, data) = small_testset();
    let orth: Vec<ScenarioSample> = data
        .iter()
        .map(|s| {
            let phi = Array2::from_shape_fn(s.phi.dim(), |(i, j)| (i == j && i < s.k_act) as u8 as f64);
            ScenarioSample::from_parts(s.b.clone(), phi, s.k_act).unwrap()
        })
        .collect();
    let p = init_params(5, cfg.m);
    let r = evaluate_methods(&orth, &cfg, &[Method::gat(&p), Method::gat_ablation(&p)], 0.0, 0).unwrap();
    assert_eq!(r.methods[0].se, r.methods[1].se);
}

#[test]
fn perturbation_changes_inputs_not_truth() {
    let (cfg, data) = small_testset();
    let clean = evaluate_methods(&data, &cfg, &[Method::apg(ApgOptions::default())], 0.0, 9).unwrap();
    let noisy = evaluate_methods(&data, &cfg, &[Method::apg(ApgOptions::default())], 2.0, 9).unwrap();
    assert_ne!(clean.methods[0].se, noisy.methods[0].se);
    let again = evaluate_methods(&data, &cfg, &[Method::apg(ApgOptions::default())], 2.0, 9).unwrap();
    assert_eq!(noisy, again);
}

#[test]
fn mismatched_params_rejected() {
    let (cfg, data) = small_testset();
    let p = init_params(0, cfg.m + 1);
    let e = evaluate_methods(&data, &cfg, &[Method::gat(&p)], 0.0, 0).unwrap_err();
    assert!(matches!(e, Error::Shape { .. }));
}

#[test]
fn csv_outputs_have_expected_rows() {
    let (cfg, data) = small_testset();
    let r = evaluate_methods(&data, &cfg, &[Method::zero(), Method::apg(ApgOptions::default())], 0.0, 0).unwrap();
    let mut buf = Vec::new();
    r.write_se_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let ues: usize = data.iter().map(|s| s.k_act).sum();
    assert_eq!(text.lines().count(), 1 + 2 * ues);
    assert!(text.starts_with("method,sample,ue,se\n"));
    let mut buf = Vec::new();
    r.write_summary_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    let dir = tempfile::tempdir().unwrap();
    let files = r.save(dir.path(), "x").unwrap();
    assert!(files.iter().all(|f| f.exists()));
    // write-once
    assert!(matches!(r.save(dir.path(), "x"), Err(Error::Io { .. })));
}

#[test]
fn stem_embeds_scenario_and_hash() {
    let sys = SystemConfig::scenario(2).unwrap();
    let stem = artifact_stem(&sys);
    assert!(stem.starts_with("s2_"));
    assert!(sys.hash_hex().starts_with(&stem[3..]));
    let mut custom = sys.clone();
    custom.scenario = None;
    assert!(artifact_stem(&custom).starts_with("custom_"));
}

#[test]
fn bench_reports_positive_stable_times() {
    let (cfg, data) = small_testset();
    let p = init_params(0, cfg.m);
    let methods = [Method::gat(&p), Method::gat(&p).named("gat_again")];
    let r = runtime_bench(&methods, &data, &cfg, 3).unwrap();
    for row in &r.rows {
        assert_eq!(row.per_sample_s.len(), 3);
        assert!(row.per_sample_s.iter().all(|&t| t > 0.0));
    }
    let ratio = r.rows[0].median_s() / r.rows[1].median_s();
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    assert!(runtime_bench(&methods, &data, &cfg, 2).is_err());
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

#[test]
fn noiseless_single_ue_estimate_is_a_fixed_scaling() {
    let cfg = small_cfg(3, 2, 1, 1);
    let s = spread(&cfg, 5.0, &[0], 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let first = simulate_trial(&s, &cfg, false, &mut rng);
    let base: Vec<_> = first.g.iter().zip(&first.g_hat).map(|(g, h)| h / g).collect();
    for r in &base {
        assert!(r.im.abs() < 1e-12 * r.re && r.re > 0.0);
    }
    for _ in 0..50 {
        let d = simulate_trial(&s, &cfg, false, &mut rng);
        for ((g, h), r0) in d.g.iter().zip(&d.g_hat).zip(&base) {
            assert!((h / g - r0).norm() <= 1e-12 * r0.norm());
        }
    }
}

#[test]
fn monte_carlo_matches_closed_forms() {
    let cfg = small_cfg(4, 2, 6, 4);
    let s = spread(&cfg, 10.0, &[0, 1, 2, 3, 0, 1], 3);
    let r = monte_carlo_channel_stats(&s, &cfg, 20_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(r.mean_square.len(), 24);
    // 6 self pairs plus two contaminated pairs in both orders, per AP
    assert_eq!(r.cross.len(), 4 * 10);
    for c in r.mean_square.iter().chain(&r.cross) {
        let z = (c.empirical - c.theory).abs() / c.std_err;
        assert!(z < 5.0, "{c:?}");
    }
    assert!(r.max_mean_square_dev() < 0.05);
    assert!(r.max_normalized_mean < 0.05);
}

#[test]
fn monte_carlo_error_shrinks_with_trials() {
    let cfg = small_cfg(2, 2, 3, 2);
    let s = spread(&cfg, 10.0, &[0, 1, 0], 8);
    let avg_dev = |trials: usize| -> f64 {
        (0..4)
            .map(|rep| {
                let r = monte_carlo_channel_stats(&s, &cfg, trials, &mut ChaCha8Rng::seed_from_u64(rep)).unwrap();
                r.mean_square.iter().map(StatCheck::rel_dev).sum::<f64>() / r.mean_square.len() as f64
            })
            .sum::<f64>()
    };
    let coarse = avg_dev(500);
    let fine = avg_dev(5_000);
    assert!(fine / coarse < 0.6, "{coarse} -> {fine}");
}

#[test]
fn monte_carlo_rejects_bad_inputs() {
    let cfg = small_cfg(2, 1, 2, 2);
    let s = spread(&cfg, 1.0, &[0, 1], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(monte_carlo_channel_stats(&s, &cfg, 0, &mut rng), Err(Error::Config(_))));
    let one_pilot = small_cfg(2, 1, 2, 1);
    assert!(monte_carlo_channel_stats(&s, &one_pilot, 10, &mut rng).is_err());
}

#[test]
fn spread_instance_is_contaminated_and_valid() {
    let cfg = small_cfg(4, 2, 6, 4);
    let s = spread_instance(&cfg, 10.0, 0).unwrap();
    s.validate().unwrap();
    assert_eq!(s.phi[[0, 4]], 1.0);
    assert_eq!(s.phi[[0, 1]], 0.0);
    let lo = s.b.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.b.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo <= 10.0);
}

#[test]
fn property_suite_passes_on_random_params() {
    let mut sys = SystemConfig::scenario(1).unwrap();
    sys.aps = 5;
    sys.k_max = 6;
    sys.k_min = 3;
    sys.pilot_len = 3;
    let cfg = sys.radio().unwrap();
    let checks = property_suite(&cfg, 6, 1).unwrap();
    assert_eq!(checks.len(), 9);
    for c in &checks {
        assert!(c.passed, "{c:?}");
    }
}
