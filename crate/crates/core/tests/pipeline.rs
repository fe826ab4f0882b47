use glad_core::active::{run_session, validate_trace, OracleAnalyst, Session, SessionConfig};
use glad_core::bench::{run_benchmark, BenchConfig, Method};
use glad_core::data::{read_csv, standardize, write_csv, CsvOptions, Dataset, Label};
use glad_core::snapshot::SessionSnapshot;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Two nominal clusters in 6 dimensions; anomalies deviate along a single
/// coordinate, so only some projections see them.
fn clustered(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (n, a, d) = (600, 30, 6);
    let mut x = Array2::zeros((n + a, d));
    let mut labels = Vec::with_capacity(n + a);
    for i in 0..n + a {
        let centre = if i % 2 == 0 { 0.0 } else { 6.0 };
        for j in 0..d {
            x[[i, j]] = centre + noise.sample(&mut rng);
        }
        if i >= n {
            let j = i % d;
            x[[i, j]] += if i % 3 == 0 { 5.0 } else { -5.0 };
        }
        labels.push(if i >= n { Label::Anomaly } else { Label::Nominal });
    }
    let names = (0..d).map(|j| format!("f{j}")).collect();
    Dataset::new("clustered", names, x, labels).unwrap()
}

#[test]
fn glad_beats_random_on_local_anomalies() {
    let ds = clustered(1);
    let cfg = BenchConfig {
        methods: vec![Method::Glad, Method::Random],
        budget: 25,
        seeds: (0..3).collect(),
        ..BenchConfig::default()
    };
    let report = run_benchmark(&ds, &cfg).unwrap();
    assert_eq!(report.failures().count(), 0);
    assert!(report.invariant_violations().is_empty());
    let glad = report.curve(Method::Glad).unwrap().final_mean();
    let random = report.curve(Method::Random).unwrap().final_mean();
    assert!(glad >= 2.0 * random.max(1.0), "glad {glad} random {random}");
}

#[test]
fn csv_round_trip_feeds_a_session() {
    let ds = clustered(2);
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), "clustered", &CsvOptions::default()).unwrap();
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.feature_names, ds.feature_names);
    assert_eq!(back.features, ds.features);

    let (z, stats) = standardize(&back);
    let cfg = SessionConfig {
        ensemble_size: 6,
        budget: 8,
        ..SessionConfig::default()
    };
    let mut session = Session::new(z.features.clone(), cfg).unwrap();
    run_session(&mut session, &mut OracleAnalyst::new(&back.labels)).unwrap();
    validate_trace(session.trace()).unwrap();
    assert_eq!(session.trace().len(), 8);
    assert!(session.is_exhausted());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let snap = SessionSnapshot::new("s1", "clustered", back.feature_names.clone(), Some(stats), session);
    snap.save(&path).unwrap();
    let loaded = SessionSnapshot::load(&path).unwrap();
    assert_eq!(loaded.session.scores().unwrap(), snap.session.scores().unwrap());
    assert_eq!(loaded.session.trace(), snap.session.trace());
}
