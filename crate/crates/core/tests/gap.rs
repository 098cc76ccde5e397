use exbic::gap::{
    expected_msr_iid, gap_scan, linear_grid, sample_reference, select_threshold, ReferenceModel,
};
use exbic::msr::msr;
use exbic::rng;
use exbic::synth::{generate_synthetic, BlockSpec, EmbedSpec};
use exbic::{FlocConfig, PipelineConfig};
use proptest::prelude::*;

#[test]
fn expected_msr_of_iid_blocks_matches_simulation() {
    // 2000 uniform 5x4 blocks on [0, 1): variance 1/12
    let mut sampler = rng::stream(1, &[]);
    let model = ReferenceModel { means: vec![0.5; 4], variances: vec![1.0 / 12.0; 4], n_rows: 5, n_cols: 4 };
    let (rows, cols): (Vec<usize>, Vec<usize>) = ((0..5).collect(), (0..4).collect());
    let draws: Vec<f64> = (0..2000)
        .map(|_| msr(&sample_reference(&model, &mut sampler).unwrap(), &rows, &cols).unwrap())
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 1999.0).sqrt();
    let expected = expected_msr_iid(1.0 / 12.0, 5, 4).unwrap();
    assert!((mean - expected).abs() < 4.0 * sd / (2000f64).sqrt(), "{mean} vs {expected}");
    assert_eq!(expected_msr_iid(2.0, 1, 7).unwrap(), 0.0);
    assert!(expected_msr_iid(-1.0, 2, 2).is_err());
}

#[test]
fn reference_samples_match_column_moments() {
    let model = ReferenceModel {
        means: vec![-2.0, 0.0, 10.0],
        variances: vec![1.0, 0.0, 4.0],
        n_rows: 20_000,
        n_cols: 3,
    };
    let m = sample_reference(&model, &mut rng::stream(5, &[])).unwrap();
    for j in 0..3 {
        let col: Vec<f64> = m.column(j).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        assert!((mean - model.means[j]).abs() < 0.05, "column {j} mean {mean}");
        assert!((var - model.variances[j]).abs() < 0.05 * (1.0 + model.variances[j]), "column {j} var {var}");
        let half = (3.0 * model.variances[j]).sqrt();
        assert!(col.iter().all(|v| (v - model.means[j]).abs() <= half + 1e-12));
    }
    let bad = ReferenceModel { variances: vec![1.0], ..model };
    assert!(sample_reference(&bad, &mut rng::stream(5, &[])).is_err());
}

#[test]
fn grid_is_evenly_spaced_up_to_the_maximum() {
    assert_eq!(linear_grid(2.0, 4).unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
    assert!(linear_grid(1.0, 0).is_err());
    assert!(linear_grid(0.0, 3).is_err());
}

#[test]
fn scan_is_reproducible_and_consistent() {
    let block = BlockSpec { n_rows: 8, n_cols: 8, noise_sigma: 0.0 };
    let (a, _) = generate_synthetic(&EmbedSpec::new(30, 16, vec![block; 2], 3)).unwrap();
    let mut floc = FlocConfig::new(0.01);
    floc.restarts = 2;
    floc.delta_fractions = vec![1.0];
    let cfg = PipelineConfig::new(floc);
    let grid = linear_grid(0.02, 4).unwrap();
    let scan = gap_scan(&a, &grid, 2, &cfg, 7).unwrap();
    assert_eq!(scan.grid, grid);
    for k in 0..grid.len() {
        assert!((scan.gap[k] - (scan.v_data[k] - scan.v_ref_mean[k])).abs() < 1e-9);
        assert!(scan.v_ref_std[k] >= 0.0);
    }
    assert!(scan.v_data.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(select_threshold(&scan).unwrap(), grid[scan.selected_index]);
    assert_eq!(scan, gap_scan(&a, &grid, 2, &cfg, 7).unwrap());
    assert!(gap_scan(&a, &grid, 0, &cfg, 7).is_err());
}

proptest! {
    #[test]
    fn expected_msr_scales_with_variance(var in 0.0f64..10.0, r in 1usize..40, c in 1usize..40) {
        let e = expected_msr_iid(var, r, c).unwrap();
        prop_assert!(e >= 0.0 && e <= var);
        prop_assert!((expected_msr_iid(2.0 * var, r, c).unwrap() - 2.0 * e).abs() < 1e-12 * (1.0 + e));
        prop_assert!((e - expected_msr_iid(var, c, r).unwrap()).abs() <= 1e-12 * (1.0 + e));
    }
}
