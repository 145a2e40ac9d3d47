mod common;

use icarh::data::{read_dataset, write_dataset};
use icarh::{standardize, CsvSchema};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (n, t, m, k) in [(2, 2, 1, 0), (5, 3, 4, 2), (24, 9, 56, 6)] {
        let d = common::random_dataset(&mut rng, n, t, m, k);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d).unwrap();
        let back = read_dataset(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.x.dim(), (n, t, m));
        assert_eq!(back.n_covariates(), k);
    }
}

#[test]
fn standardize_moments_and_idempotence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = common::random_dataset(&mut rng, 6, 4, 5, 3);
    let (z, report) = standardize(&d).unwrap();
    for j in 0..5 {
        let lane: Vec<f64> = z.x.iter().skip(j).step_by(5).copied().collect();
        let mean = lane.iter().sum::<f64>() / lane.len() as f64;
        let var = lane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lane.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let s = &report.metabolites[j];
        assert!((s.restore(z.x[[0, 0, j]]) - d.x[[0, 0, j]]).abs() < 1e-10);
    }
    let (zz, _) = standardize(&z).unwrap();
    for (a, b) in
        z.x.iter()
            .chain(z.y.iter())
            .zip(zz.x.iter().chain(zz.y.iter()))
    {
        assert!((a - b).abs() < 1e-12);
    }
}
