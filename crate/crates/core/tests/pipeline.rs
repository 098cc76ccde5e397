use exbic::floc::{harvest_candidates, FlocConfig};
use exbic::msr::{msr, Bicluster};
use exbic::pipeline::{
    auction_shortlist, build_auction, cumulative_scan, run_exclusive_biclustering, select_exclusive,
    PipelineConfig,
};
use exbic::synth::{evaluate, generate_synthetic, BlockSpec, EmbedSpec};
use exbic::wdp::solve_wdp;
use exbic::ExpressionMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planted_12x12(seed: u64) -> (ExpressionMatrix, exbic::synth::GroundTruth) {
    let block = BlockSpec { n_rows: 12, n_cols: 12, noise_sigma: 0.0 };
    let mut spec = EmbedSpec::new(40, 20, vec![block], seed);
    spec.background = (-3.0, 3.0);
    generate_synthetic(&spec).unwrap()
}

fn config(delta: f64) -> PipelineConfig {
    let mut floc = FlocConfig::new(delta);
    floc.restarts = 5;
    PipelineConfig::new(floc)
}

fn assert_row_exclusive(chosen: &[Bicluster]) {
    for (x, b) in chosen.iter().enumerate() {
        for c in &chosen[x + 1..] {
            assert!(!b.rows_intersect(c), "{b:?} and {c:?} share rows");
        }
    }
}

#[test]
fn recovers_a_planted_block() {
    for seed in 0..3 {
        let (a, truth) = planted_12x12(seed);
        let res = run_exclusive_biclustering(&a, &config(0.05)).unwrap();
        assert_row_exclusive(&res.chosen);
        let report = evaluate(&res.chosen, &truth);
        assert_eq!(report.n_recovered(), 1, "seed {seed}: {report:?}");
        assert!(report.pct_correct_rows >= 90.0);
        for b in &res.chosen {
            assert!(msr(&a, &b.rows, &b.cols).unwrap() < 0.05);
            assert!(b.rows.len() > 4 && b.cols.len() > 4);
        }
    }
}

#[test]
fn result_reports_uncovered_rows_and_volume() {
    let (a, _) = planted_12x12(9);
    let res = run_exclusive_biclustering(&a, &config(0.05)).unwrap();
    let covered: usize = res.chosen.iter().map(|b| b.rows.len()).sum();
    assert_eq!(covered + res.unclustered_rows.len(), a.n_rows());
    assert_eq!(res.total_volume, res.chosen.iter().map(|b| b.volume).sum::<usize>());
    assert!(res.candidate_pool_size >= res.chosen.len());
}

#[test]
fn worker_count_does_not_change_the_result() {
    let (a, _) = planted_12x12(4);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_exclusive_biclustering(&a, &config(0.05)).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn cumulative_volume_never_drops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let values = (0..30 * 12).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = ExpressionMatrix::new(30, 12, values).unwrap();
        let grid: Vec<f64> = (1..=5).map(|k| 0.01 * k as f64).collect();
        let mut cfg = config(grid[0]);
        cfg.floc.restarts = 2;
        cfg.floc.delta_fractions = vec![1.0];
        let scan = cumulative_scan(&a, &grid, &cfg).unwrap();
        let volumes: Vec<usize> = scan.iter().map(|r| r.total_volume).collect();
        assert!(volumes.windows(2).all(|w| w[0] <= w[1]), "{volumes:?}");
        scan.iter().for_each(|r| assert_row_exclusive(&r.chosen));
    }
}

#[test]
fn selection_matches_direct_auction_on_harvested_pool() {
    let (a, _) = planted_12x12(2);
    let cfg = config(0.1);
    let pool = harvest_candidates(&a, &cfg.floc).unwrap();
    let res = select_exclusive(&a, &pool, &cfg).unwrap();
    let direct = solve_wdp(&build_auction(&pool, a.n_rows())).unwrap();
    assert_eq!(res.total_volume as f64, direct.revenue);
}

#[test]
fn rejects_bad_configuration() {
    let (a, _) = planted_12x12(0);
    let mut cfg = config(0.05);
    cfg.candidate_cap = 0;
    assert!(run_exclusive_biclustering(&a, &cfg).is_err());
    assert!(cumulative_scan(&a, &[0.2, 0.1], &config(0.1)).is_err());
    let tiny = ExpressionMatrix::new(3, 3, vec![0.0; 9]).unwrap();
    assert!(run_exclusive_biclustering(&tiny, &config(0.05)).is_err());
}

fn arb_pool() -> impl Strategy<Value = Vec<Bicluster>> {
    let candidate = (proptest::sample::subsequence((0..12usize).collect::<Vec<_>>(), 1..=5), 1usize..6);
    proptest::collection::vec(candidate, 1..=14).prop_map(|raw| {
        raw.into_iter()
            .map(|(rows, n_cols)| Bicluster {
                volume: rows.len() * n_cols,
                rows,
                cols: (0..n_cols).collect(),
                msr: 0.0,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shortlist_keeps_the_optimal_volume(pool in arb_pool(), cap in 1usize..8) {
        let kept = auction_shortlist(&pool, 12, cap);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(kept.len() >= cap.min(pool.len()));
        let sub: Vec<Bicluster> = kept.iter().map(|&k| pool[k].clone()).collect();
        let full = solve_wdp(&build_auction(&pool, 12)).unwrap().revenue;
        prop_assert_eq!(solve_wdp(&build_auction(&sub, 12)).unwrap().revenue, full);
    }

    #[test]
    fn winners_share_no_rows(pool in arb_pool()) {
        let winners = solve_wdp(&build_auction(&pool, 12)).unwrap().winners;
        let chosen: Vec<Bicluster> = winners.iter().map(|&w| pool[w].clone()).collect();
        assert_row_exclusive(&chosen);
    }
}
