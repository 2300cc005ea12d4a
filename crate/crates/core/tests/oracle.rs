use crowd_mle::extensions::{two_class_opt, variable_opt};
use crowd_mle::filtering::{cut_point_mapping, filter_opt, filter_params};
use crowd_mle::oracle::{
    brute_force_filter, brute_force_rating, brute_force_two_class, OracleOptions, Restriction,
};
use crowd_mle::rating::rating_opt;
use crowd_mle::synth::{generate, SynthConfig};
use crowd_mle::{
    bucketize, log_likelihood_given_matrix, Dataset, Item, RawResponse, ResponseCounts, WorkerClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_filtering(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=12);
    let m = rng.random_range(1..=3);
    let s = rng.random_range(0.2..0.8);
    generate(&SynthConfig::filtering(n, m, s, seed))
        .unwrap()
        .dataset
}

/// Best likelihood over all cut-points, reasonable or not.
fn best_cut(ds: &Dataset) -> f64 {
    let buckets = bucketize(ds).unwrap();
    let m = ds.fixed_total().unwrap().unwrap();
    (0..=m + 1)
        .map(|c| {
            let f = cut_point_mapping(c, m).unwrap();
            let p = filter_params(&buckets, &f).unwrap().matrix();
            log_likelihood_given_matrix(ds, &f, &p).unwrap().value()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn cut_points_contain_the_unrestricted_optimum() {
    for seed in 0..100u64 {
        let ds = random_filtering(seed);
        let all = brute_force_filter(&ds, Restriction::All).unwrap();
        assert!(
            (all.best_loglik.value() - best_cut(&ds)).abs() <= 1e-9,
            "seed {seed}"
        );
    }
}

#[test]
fn filter_opt_between_strict_and_weak_reasonable_optima() {
    for seed in 0..100u64 {
        let ds = random_filtering(seed);
        let opt = filter_opt(&ds).unwrap().loglik.value();
        let weak = brute_force_filter(&ds, Restriction::Reasonable).unwrap();
        assert_eq!(weak.search_space_size, 1 << ds.len());
        assert!(opt <= weak.best_loglik.value() + 1e-9, "seed {seed}");
        if let Ok(strict) = brute_force_filter(&ds, Restriction::StrictlyReasonable) {
            assert!(strict.best_loglik.value() <= opt + 1e-9, "seed {seed}");
        }
    }
}

/// A labeling that splits bucket (2,1) reaches e0 = 0.5 exactly and beats
/// every reasonable cut-point; with e0 < 0.5 required it is excluded.
#[test]
fn split_bucket_on_the_boundary_beats_cut_points() {
    let ds = Dataset::binary(&[
        (1, 2),
        (3, 0),
        (1, 2),
        (2, 1),
        (2, 1),
        (3, 0),
        (3, 0),
        (2, 1),
    ]);
    let opt = filter_opt(&ds).unwrap();
    let weak = brute_force_filter(&ds, Restriction::Reasonable).unwrap();
    assert_eq!(weak.best_mapping.0, vec![1, 2, 1, 1, 1, 2, 2, 2]);
    let expected = 12.0 * 0.5f64.ln() + 11.0 * (11.0f64 / 12.0).ln() + (1.0f64 / 12.0).ln();
    assert!((weak.best_loglik.value() - expected).abs() < 1e-12);
    assert!(weak.best_loglik.value() > opt.loglik.value() + 0.1);
    let strict = brute_force_filter(&ds, Restriction::StrictlyReasonable).unwrap();
    assert!(strict.best_loglik.value() <= opt.loglik.value() + 1e-9);
}

fn random_variable(rng: &mut ChaCha8Rng, n: usize, m_max: u32) -> Dataset {
    let pairs: Vec<(u32, u32)> = (0..n)
        .map(|_| {
            let total = rng.random_range(0..=m_max);
            let ones = rng.random_range(0..=total);
            (ones, total - ones)
        })
        .collect();
    Dataset::binary(&pairs)
}

#[test]
fn variable_opt_is_best_reasonable_labeling() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..=10);
        let m_max = rng.random_range(1..=3);
        let ds = random_variable(&mut rng, n, m_max);
        let opt = variable_opt(&ds).unwrap();
        let oracle = brute_force_filter(&ds, Restriction::Reasonable).unwrap();
        assert!(
            (opt.loglik.value() - oracle.best_loglik.value()).abs() <= 1e-9,
            "seed {seed}: opt {} oracle {}",
            opt.loglik,
            oracle.best_loglik
        );
    }
}

fn random_two_class(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let mut rows = Vec::new();
    for k in 0..n {
        for (worker, class) in [("e", WorkerClass::Expert), ("r", WorkerClass::Regular)] {
            rows.push(RawResponse {
                item: format!("I{k}"),
                worker: worker.into(),
                rating: rng.random_range(1..=2),
                class: Some(class),
            });
        }
    }
    Dataset::from_raw(2, rows).unwrap()
}

#[test]
fn two_class_opt_against_oracle() {
    let options = OracleOptions::default();
    for expert_prior in [false, true] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let n = rng.random_range(1..=8);
            let ds = random_two_class(&mut rng, n);
            let Ok(opt) = two_class_opt(&ds, expert_prior) else {
                continue;
            };
            let opt = opt.loglik.value();
            let weak = brute_force_two_class(&ds, Restriction::Reasonable, &options).unwrap();
            assert!(opt <= weak.best_loglik.value() + 1e-9, "seed {seed}");
            // The expertise rule is an assumption the data need not satisfy.
            if !expert_prior {
                if let Ok(strict) =
                    brute_force_two_class(&ds, Restriction::StrictlyReasonable, &options)
                {
                    assert!(strict.best_loglik.value() <= opt + 1e-9, "seed {seed}");
                }
            }
        }
    }
}

#[test]
fn rating_bucketized_space() {
    let keys = crowd_mle::poset::compositions(3, 2);
    let items: Vec<Item> = keys
        .iter()
        .enumerate()
        .map(|(k, c)| Item::new(format!("I{k}"), c.clone()))
        .collect();
    let ds = Dataset::new(3, items).unwrap();
    let report = brute_force_rating(&ds, Restriction::Bucketized).unwrap();
    assert_eq!(report.search_space_size, 3u128.pow(6));
}

/// Diagonal dominance is only a proxy for reasonableness beyond two
/// ratings, so gaps are printed rather than asserted.
#[test]
fn rating_opt_against_diagonally_dominant_labelings() {
    let mut gaps = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = rng.random_range(1..=6);
        let cfg = SynthConfig::rating(n, 3, 2, vec![1.0 / 3.0; 3], seed);
        let ds = generate(&cfg).unwrap().dataset;
        let opt = rating_opt(&ds).unwrap();
        let oracle = brute_force_rating(&ds, Restriction::DiagonallyDominant).unwrap();
        assert!(opt.loglik.value() <= oracle.best_loglik.value() + 1e-9);
        if oracle.best_loglik.value() > opt.loglik.value() + 1e-9 {
            gaps += 1;
            let counts: Vec<ResponseCounts> =
                ds.items().iter().map(|i| i.responses.clone()).collect();
            println!(
                "seed {seed}: oracle {} above rating_opt {} on {:?}",
                oracle.best_loglik, opt.loglik, counts
            );
        }
    }
    println!("{gaps} of 100 instances where an unconstrained diagonally dominant labeling wins");
}
