use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smoothhaz::simulate::{
    sample_event_time, simulate_dataset, HazardSpec, ObservationScheme, SimConfig,
};

fn hm3_cdf(u: f64, s: f64) -> f64 {
    let (a, b) = HazardSpec::hm3_params(u);
    1.0 - (-(a / b) * ((b * s).exp() - 1.0)).exp()
}

#[test]
fn hm3_event_times_follow_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for u in [0.0, 7.5, 19.0] {
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| sample_event_time(&HazardSpec::Hm3, u, 1.0, &mut rng).unwrap())
            .collect();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let f = hm3_cdf(u, s);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // 0.1% critical value of the one-sample statistic is about 1.95/sqrt(n).
        assert!(ks < 1.95 / n.sqrt(), "u = {u}: D = {ks}");
    }
}

#[test]
fn datasets_are_reproducible_and_replicates_differ() {
    let config = SimConfig {
        n: 200,
        covariates: true,
        ..SimConfig::default()
    };
    for scheme in [
        ObservationScheme::a(),
        ObservationScheme::b(),
        ObservationScheme::c(),
    ] {
        let first = simulate_dataset(&config, &HazardSpec::Hm2, &scheme, 3).unwrap();
        let again = simulate_dataset(&config, &HazardSpec::Hm2, &scheme, 3).unwrap();
        let other = simulate_dataset(&config, &HazardSpec::Hm2, &scheme, 4).unwrap();
        assert_eq!(first.records, again.records);
        assert_ne!(first.records, other.records);
        assert_eq!(first.covariate_names, vec!["x1", "x2"]);
    }
}
