use exbic::msr::{is_delta_bicluster, msr, residue};
use exbic::ExpressionMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook double loop: every mean recomputed from scratch per cell.
fn naive_msr(a: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in rows {
        for &j in cols {
            let mut a_i = 0.0;
            for &c in cols {
                a_i += a[i][c];
            }
            a_i /= cols.len() as f64;
            let mut a_j = 0.0;
            for &r in rows {
                a_j += a[r][j];
            }
            a_j /= rows.len() as f64;
            let mut a_all = 0.0;
            for &r in rows {
                for &c in cols {
                    a_all += a[r][c];
                }
            }
            a_all /= (rows.len() * cols.len()) as f64;
            let res = a[i][j] - a_i - a_j + a_all;
            total += res * res;
        }
    }
    total / (rows.len() * cols.len()) as f64
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    let mut s = rand::seq::index::sample(rng, n, k).into_vec();
    s.sort_unstable();
    s
}

#[test]
fn msr_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=25), rng.random_range(1..=25));
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..m).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        let (ri, cj) = (random_subset(&mut rng, n), random_subset(&mut rng, m));
        let got = msr(&a, &ri, &cj).unwrap();
        assert!((got - naive_msr(&rows, &ri, &cj)).abs() < 1e-10);
    }
}

#[test]
fn additive_blocks_have_zero_msr() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (n, m) = (rng.random_range(3..=30), rng.random_range(3..=30));
        let mu: f64 = rng.random_range(-5.0..5.0);
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let beta: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rows: Vec<Vec<f64>> =
            alpha.iter().map(|ai| beta.iter().map(|bj| mu + ai + bj).collect()).collect();
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        let all_r: Vec<usize> = (0..n).collect();
        let all_c: Vec<usize> = (0..m).collect();
        assert!(msr(&a, &all_r, &all_c).unwrap() < 1e-12);
    }
}

#[test]
fn coherent_example_is_exactly_zero() {
    let a = ExpressionMatrix::from_rows(&[
        vec![1.0, 3.0, 5.0, 7.0, 9.0],
        vec![1.5, 3.5, 5.5, 7.5, 9.5],
        vec![3.5, 5.5, 7.5, 9.5, 11.5],
        vec![4.5, 6.5, 8.5, 10.5, 12.5],
        vec![2.0, 4.0, 6.0, 8.0, 10.0],
    ])
    .unwrap();
    let all: Vec<usize> = (0..5).collect();
    assert_eq!(msr(&a, &all, &all).unwrap(), 0.0);
}

#[test]
fn strict_thresholds() {
    let a = ExpressionMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0]]).unwrap();
    let h = msr(&a, &[0, 1, 2], &[0, 1]).unwrap();
    assert!(!is_delta_bicluster(&a, &[0, 1, 2], &[0, 1], h, 1, 1).unwrap());
    assert!(is_delta_bicluster(&a, &[0, 1, 2], &[0, 1], h * 1.01, 1, 1).unwrap());
    assert!(!is_delta_bicluster(&a, &[0, 1, 2], &[0, 1], 1.0, 3, 1).unwrap());
    assert!(!is_delta_bicluster(&a, &[0, 1, 2], &[0, 1], 1.0, 1, 2).unwrap());
}

fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    (2usize..10, 2usize..10).prop_flat_map(|(n, m)| {
        (
            proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, m), n),
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n),
            proptest::sample::subsequence((0..m).collect::<Vec<_>>(), 1..=m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residues_sum_to_zero((rows, ri, cj) in arb_instance()) {
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        for &i in &ri {
            let s: f64 = cj.iter().map(|&j| residue(&a, &ri, &cj, i, j).unwrap()).sum();
            prop_assert!(s.abs() < 1e-9);
        }
        for &j in &cj {
            let s: f64 = ri.iter().map(|&i| residue(&a, &ri, &cj, i, j).unwrap()).sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn msr_is_mean_of_squared_residues((rows, ri, cj) in arb_instance()) {
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        let mut ss = 0.0;
        for &i in &ri {
            for &j in &cj {
                ss += residue(&a, &ri, &cj, i, j).unwrap().powi(2);
            }
        }
        let h = msr(&a, &ri, &cj).unwrap();
        prop_assert!((h - ss / (ri.len() * cj.len()) as f64).abs() <= 1e-9 * (1.0 + h));
        prop_assert!(h >= 0.0);
    }

    #[test]
    fn invariant_to_row_and_column_offsets(
        (rows, ri, cj) in arb_instance(),
        shift in -50.0f64..50.0,
        row_off in proptest::collection::vec(-50.0f64..50.0, 10),
    ) {
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|v| v + shift + row_off[i]).collect())
            .collect();
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        let b = ExpressionMatrix::from_rows(&shifted).unwrap();
        let (ha, hb) = (msr(&a, &ri, &cj).unwrap(), msr(&b, &ri, &cj).unwrap());
        prop_assert!((ha - hb).abs() <= 1e-8 * (1.0 + ha));
    }

    #[test]
    fn index_order_is_irrelevant((rows, ri, cj) in arb_instance()) {
        let a = ExpressionMatrix::from_rows(&rows).unwrap();
        let (mut rr, mut cr) = (ri.clone(), cj.clone());
        rr.reverse();
        cr.reverse();
        let (h1, h2) = (msr(&a, &ri, &cj).unwrap(), msr(&a, &rr, &cr).unwrap());
        prop_assert!((h1 - h2).abs() <= 1e-12 * (1.0 + h1));
    }
}
