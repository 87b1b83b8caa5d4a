use mrc_align::pipeline::{build, BuildOptions};
use mrc_align::{ChannelSet, Rational};

#[test]
fn same_seed_same_construction() {
    let opts = BuildOptions::new(3, 8, 4, 11);
    let a = serde_json::to_string(&build(&opts).unwrap()).unwrap();
    let b = serde_json::to_string(&build(&opts).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&build(&BuildOptions::new(3, 8, 4, 12)).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn channels_round_trip() {
    let built = build(&BuildOptions::new(2, 5, 3, 4)).unwrap();
    let text = serde_json::to_string(&built.channels).unwrap();
    let back: ChannelSet = serde_json::from_str(&text).unwrap();
    assert_eq!(back, built.channels);
}

#[test]
fn extended_constructions_count_per_use() {
    // Both need a two-use extension.
    for (m, n, k) in [(1, 4, 3), (2, 5, 3)] {
        let built = build(&BuildOptions::new(m, n, k, 0)).unwrap();
        assert_eq!(built.plan.extension, 2);
        assert!(built.report.pass);
        let streams = built.report.decodable as i64;
        assert_eq!(Rational::new(streams, 2), built.report.counted_d_sum);
        assert_eq!(built.report.counted_d_sum, built.plan.predicted.d_sum);
    }
}

#[test]
fn every_stream_is_reported() {
    let built = build(&BuildOptions::new(7, 12, 4, 2)).unwrap();
    let listed: usize = built.units.iter().map(|u| u.streams.len()).sum();
    assert_eq!(listed, built.report.streams.len());
    assert_eq!(listed, built.plan.total_streams());
    assert!(built.report.streams.iter().all(|s| s.desired > 1e-6 && s.partner > 1e-6));
}
