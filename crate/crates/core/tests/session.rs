use plcqkd::linksim::LinkConfig;
use plcqkd::qkd::{expected_sift_ratio, run_session_batched, sift};

#[test]
fn sift_ratio_matches_prediction_on_the_default_link() {
    let config = LinkConfig::default();
    let n = 1_000_000u64;
    let key = sift(&run_session_batched(&config, n, 21).unwrap());
    let p = expected_sift_ratio(&config).unwrap();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((key.sift_ratio - p).abs() < 3.0 * sigma, "{} vs {p} +- {sigma}", key.sift_ratio);
}

#[test]
fn dark_counts_alone_give_random_bits() {
    let mut config = LinkConfig::default();
    config.source.mu = 0.0;
    config.detectors.0.dark_prob_per_gate = 1e-3;
    config.detectors.1.dark_prob_per_gate = 1e-3;
    let key = sift(&run_session_batched(&config, 400_000, 5).unwrap());
    for (q, kept) in [(key.qber_time, key.kept_time), (key.qber_phase, key.kept_phase)] {
        let q = q.expect("dark counts are kept");
        let sigma = (0.25 / kept as f64).sqrt();
        assert!((q - 0.5).abs() < 4.0 * sigma, "{q} over {kept} bits");
    }
}
