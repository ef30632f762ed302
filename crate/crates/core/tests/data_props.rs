use std::collections::HashSet;
use std::io::BufRead;

use dpsgmcmc::data::{
    draw_minibatch, load_adult, synthetic_gaussian, synthetic_logistic, Dataset, SamplingMode,
};
use dpsgmcmc::rng::{Purpose, StreamKey};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn poisson_batch_size_matches_binomial() {
    let (n, q, draws) = (10_000usize, 0.01, 10_000u64);
    let key = StreamKey::new(99, 0);
    let mut out = Vec::new();
    let mut total = 0usize;
    for t in 0..draws {
        draw_minibatch(n, SamplingMode::Poisson { q }, &mut key.stream(t, Purpose::Batch), &mut out);
        total += out.len();
    }
    let mean = total as f64 / draws as f64;
    // sd of the mean of Binomial(n, q) over `draws` draws
    let sd = (n as f64 * q * (1.0 - q) / draws as f64).sqrt();
    assert!((mean - 100.0).abs() < 3.0 * sd, "mean {mean}, sd {sd}");
}

#[test]
fn poisson_inclusions_are_pairwise_independent() {
    let (n, q, trials) = (40usize, 0.3, 4000u64);
    let key = StreamKey::new(5, 1);
    let pairs = [(0usize, 1usize), (3, 4), (10, 30), (38, 39), (0, 39)];
    let mut tables = vec![[[0f64; 2]; 2]; pairs.len()];
    let mut out = Vec::new();
    for t in 0..trials {
        draw_minibatch(n, SamplingMode::Poisson { q }, &mut key.stream(t, Purpose::Batch), &mut out);
        let set: HashSet<usize> = out.iter().copied().collect();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            tables[k][usize::from(set.contains(&i))][usize::from(set.contains(&j))] += 1.0;
        }
    }
    let chi = ChiSquared::new(1.0).unwrap();
    for (k, tab) in tables.iter().enumerate() {
        let total: f64 = tab.iter().flatten().sum();
        let mut stat = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let expected = (tab[a][0] + tab[a][1]) * (tab[0][b] + tab[1][b]) / total;
                stat += (tab[a][b] - expected).powi(2) / expected;
            }
        }
        let p = 1.0 - chi.cdf(stat);
        assert!(p > 0.001, "pair {:?}: chi2 {stat}, p {p}", pairs[k]);
    }
}

#[test]
fn synthetic_label_mean_matches_marginal() {
    // theta* has unit norm, so theta*.x ~ Normal(0, 1) and E[sigmoid] = 1/2.
    let n = 200_000;
    let ds = synthetic_logistic(n, 6, 17);
    let mean = ds.labels().iter().sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{mean}");
}

#[test]
fn canonical_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = synthetic_logistic(200, 4, 3);
    ds.save_csv(&path).unwrap();
    let back = Dataset::load_csv(&path).unwrap();
    assert_eq!(back.features(), ds.features());
    assert_eq!(back.labels(), ds.labels());
    let g = synthetic_gaussian(10, 0.5, 2.0, 1);
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap().labels(), g.labels());
}

#[test]
fn adult_ingestion_is_deterministic_and_drops_missing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adult.data");
    let text = "\
25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, United-States, <=50K
38, Private, 89814, HS-grad, 9, Married-civ-spouse, Farming-fishing, Husband, White, Male, 0, 0, 50, United-States, <=50K
18, ?, 103497, Some-college, 10, Never-married, ?, Own-child, White, Female, 0, 0, 30, ?, <=50K
44, Private, 160323, Some-college, 10, Married-civ-spouse, Machine-op-inspct, Husband, Black, Male, 7688, 0, 40, United-States, >50K

";
    std::fs::write(&path, text).unwrap();
    let a = load_adult(&path).unwrap();
    let b = load_adult(&path).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    for j in 0..a.width() {
        assert!(a.features().iter().skip(j).step_by(a.width()).all(|v| v.is_finite()));
    }
    // continuous columns standardized with population statistics
    let ages: Vec<f64> = (0..3).map(|i| a.row(i)[0]).collect();
    let mean = ages.iter().sum::<f64>() / 3.0;
    let var = ages.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    let csv = dir.path().join("canon.csv");
    a.save_csv(&csv).unwrap();
    let c = Dataset::load_csv(&csv).unwrap();
    assert_eq!((c.features(), c.labels()), (a.features(), a.labels()));
}

/// Runs against the published file when `DPSGMCMC_ADULT_DATA` points at it.
#[test]
fn published_adult_row_count() {
    let Ok(path) = std::env::var("DPSGMCMC_ADULT_DATA") else {
        eprintln!("DPSGMCMC_ADULT_DATA not set; skipping");
        return;
    };
    let file = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
    let expected = file
        .lines()
        .map(|l| l.unwrap())
        .filter(|l| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            cells.len() == 15 && !cells.contains(&"?")
        })
        .count();
    assert_eq!(load_adult(&path).unwrap().len(), expected);
}

proptest! {
    #[test]
    fn minibatches_are_sorted_unique_in_range(n in 1usize..500, q in 0.0f64..1.0, seed in any::<u64>()) {
        let mut out = Vec::new();
        let mut rng = StreamKey::new(seed, 0).stream(0, Purpose::Batch);
        draw_minibatch(n, SamplingMode::Poisson { q }, &mut rng, &mut out);
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.iter().all(|&i| i < n));
        let tau = n / 2;
        draw_minibatch(n, SamplingMode::FixedSize { tau }, &mut rng, &mut out);
        prop_assert_eq!(out.len(), tau);
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ingestion_is_deterministic(n in 0usize..50, d in 0usize..5, seed in any::<u64>()) {
        prop_assert_eq!(synthetic_logistic(n, d, seed), synthetic_logistic(n, d, seed));
    }
}
