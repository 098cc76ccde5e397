use exbic::gap::expected_msr_iid;
use exbic::msr::{msr, Bicluster};
use exbic::synth::{evaluate, generate_synthetic, match_biclusters, BlockSpec, EmbedSpec};
use proptest::prelude::*;

#[test]
fn noisy_block_msr_tracks_noise_variance() {
    let (a, truth) = generate_synthetic(&EmbedSpec::five_noisy_blocks(1)).unwrap();
    assert_eq!((a.n_rows(), a.n_cols()), (300, 300));
    for b in &truth.blocks {
        let h = msr(&a, &b.rows, &b.cols).unwrap();
        let expected = expected_msr_iid(b.noise_sigma.powi(2), 40, 20).unwrap();
        assert!((h / expected - 1.0).abs() < 0.15, "sigma {}: {h} vs {expected}", b.noise_sigma);
    }
}

#[test]
fn spec_text_round_trip() {
    let text = "rows = 50\ncols = 30  # comment\nseed = 12\nbackground = -1 1\n\
                block = 6 5 0.1\nblock = 4 4 0\ncolumns_contiguous = yes\n";
    let spec = EmbedSpec::parse(text).unwrap();
    assert_eq!((spec.matrix_rows, spec.matrix_cols, spec.seed), (50, 30, 12));
    assert_eq!(spec.background, (-1.0, 1.0));
    assert_eq!(spec.blocks[0], BlockSpec { n_rows: 6, n_cols: 5, noise_sigma: 0.1 });
    assert!(spec.columns_contiguous);
    assert!(EmbedSpec::parse("rows = 5\ncols = 5\nblock = 6 2 0\n").is_err());
    assert!(EmbedSpec::parse("rows = five\n").is_err());
    assert!(EmbedSpec::parse("shape = 3\n").is_err());
}

#[test]
fn empty_discovery_scores_zero() {
    let (_, truth) = generate_synthetic(&EmbedSpec::ten_perfect_blocks(0)).unwrap();
    let report = evaluate(&[], &truth);
    assert_eq!(report.n_recovered(), 0);
    assert_eq!(report.pct_correct_rows, 0.0);
    assert!(match_biclusters(&[], &truth).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn planted_truth_scores_perfectly(seed in any::<u64>(), n_blocks in 1usize..6) {
        let block = BlockSpec { n_rows: 5, n_cols: 4, noise_sigma: 0.0 };
        let (a, truth) = generate_synthetic(&EmbedSpec::new(40, 12, vec![block; n_blocks], seed)).unwrap();
        let found: Vec<Bicluster> = truth
            .blocks
            .iter()
            .rev()
            .map(|b| Bicluster::new(&a, b.rows.clone(), b.cols.clone()).unwrap())
            .collect();
        let report = evaluate(&found, &truth);
        prop_assert_eq!(report.n_recovered(), n_blocks);
        prop_assert_eq!(report.pct_correct_rows, 100.0);
        prop_assert_eq!(report.pct_correct_cols, 100.0);
        prop_assert_eq!(report.merged_discoveries, 0);
        for b in &found {
            prop_assert!(b.msr < 1e-12);
        }
    }

    #[test]
    fn percentages_stay_in_range(seed in any::<u64>(), cut in 1usize..5) {
        let block = BlockSpec { n_rows: 6, n_cols: 4, noise_sigma: 0.0 };
        let (a, truth) = generate_synthetic(&EmbedSpec::new(30, 10, vec![block; 3], seed)).unwrap();
        // halves of blocks glued across block boundaries
        let rows: Vec<usize> = truth.blocks.iter().flat_map(|b| b.rows[..cut].to_vec()).collect();
        let found = vec![Bicluster::new(&a, rows, (0..4).collect()).unwrap()];
        let report = evaluate(&found, &truth);
        for p in [report.pct_clustered_rows, report.pct_correct_rows, report.pct_correct_cols] {
            prop_assert!((0.0..=100.0).contains(&p));
        }
        prop_assert!(report.pct_correct_rows <= report.pct_clustered_rows);
        prop_assert!(report.n_recovered() <= 1);
    }
}
