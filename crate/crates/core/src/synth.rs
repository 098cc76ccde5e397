//! Planted-bicluster benchmarks and recovery metrics.

use std::path::Path;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::msr::Bicluster;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedSpec {
    pub matrix_rows: usize,
    pub matrix_cols: usize,
    pub blocks: Vec<BlockSpec>,
    /// Background entries are uniform on this range.
    pub background: (f64, f64),
    pub mu_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    /// Give every block a run of consecutive columns instead of a random set.
    pub columns_contiguous: bool,
    pub seed: u64,
}

impl EmbedSpec {
    pub fn new(matrix_rows: usize, matrix_cols: usize, blocks: Vec<BlockSpec>, seed: u64) -> Self {
        Self {
            matrix_rows,
            matrix_cols,
            blocks,
            background: (0.0, 1.0),
            mu_range: (0.0, 1.0),
            alpha_range: (-0.5, 0.5),
            beta_range: (-0.5, 0.5),
            columns_contiguous: false,
            seed,
        }
    }

    /// Ten zero-noise 10x10 blocks on exclusive rows of a 100x50 matrix.
    pub fn ten_perfect_blocks(seed: u64) -> Self {
        let block = BlockSpec { n_rows: 10, n_cols: 10, noise_sigma: 0.0 };
        Self::new(100, 50, vec![block; 10], seed)
    }

    /// Five 40x20 blocks with increasing noise on exclusive rows of a
    /// 300x300 matrix.
    pub fn five_noisy_blocks(seed: u64) -> Self {
        let blocks = FIVE_BLOCK_SIGMAS
            .iter()
            .map(|&noise_sigma| BlockSpec { n_rows: 40, n_cols: 20, noise_sigma })
            .collect();
        Self::new(300, 300, blocks, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrix_rows == 0 || self.matrix_cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        let planted: usize = self.blocks.iter().map(|b| b.n_rows).sum();
        if planted > self.matrix_rows {
            return Err(Error::invalid(format!(
                "blocks need {planted} exclusive rows, matrix has {}",
                self.matrix_rows
            )));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.n_rows == 0 || b.n_cols == 0 || b.n_cols > self.matrix_cols {
                return Err(Error::invalid(format!("block {k} does not fit the matrix")));
            }
            if !(b.noise_sigma >= 0.0) || !b.noise_sigma.is_finite() {
                return Err(Error::invalid(format!("block {k} has invalid noise")));
            }
        }
        for (name, (lo, hi)) in [
            ("background", self.background),
            ("mu", self.mu_range),
            ("alpha", self.alpha_range),
            ("beta", self.beta_range),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }

    /// Parses the `key = value` text format. `block = rows cols sigma` may
    /// repeat; ranges are two numbers; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::new(0, 0, Vec::new(), 0);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: lineno + 1, column: 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let nums = |n: usize| -> Result<Vec<f64>> {
                let v: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("invalid number {t:?}"))))
                    .collect::<Result<_>>()?;
                if v.len() != n {
                    return Err(err(format!("`{}` takes {n} values", key.trim())));
                }
                Ok(v)
            };
            let count = |x: f64| -> Result<usize> {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(err(format!("expected a non-negative integer, got {x}")))
                }
            };
            match key.trim() {
                "rows" => spec.matrix_rows = count(nums(1)?[0])?,
                "cols" => spec.matrix_cols = count(nums(1)?[0])?,
                "seed" => {
                    spec.seed = value
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("invalid seed {:?}", value.trim())))?
                }
                "background" => spec.background = pair(nums(2)?),
                "mu_range" => spec.mu_range = pair(nums(2)?),
                "alpha_range" => spec.alpha_range = pair(nums(2)?),
                "beta_range" => spec.beta_range = pair(nums(2)?),
                "columns_contiguous" => {
                    spec.columns_contiguous = match value.trim() {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        other => return Err(err(format!("invalid boolean {other:?}"))),
                    }
                }
                "block" => {
                    let v = nums(3)?;
                    spec.blocks.push(BlockSpec {
                        n_rows: count(v[0])?,
                        n_cols: count(v[1])?,
                        noise_sigma: v[2],
                    });
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Noise levels of the five-block benchmark, least noisy first.
pub const FIVE_BLOCK_SIGMAS: [f64; 5] = [0.02, 0.028, 0.04, 0.056, 0.08];

fn pair(v: Vec<f64>) -> (f64, f64) {
    (v[0], v[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub blocks: Vec<PlantedBlock>,
}

impl GroundTruth {
    pub fn total_volume(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len() * b.cols.len()).sum()
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Uniform background with additive blocks `mu + alpha_i + beta_j + noise`
/// on disjoint random row sets. Column sets are drawn independently per
/// block and may overlap.
pub fn generate_synthetic(spec: &EmbedSpec) -> Result<(ExpressionMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[]);
    let (n, m) = (spec.matrix_rows, spec.matrix_cols);
    let mut values: Vec<f64> = (0..n * m).map(|_| uniform(&mut rng, spec.background)).collect();

    let mut row_pool: Vec<usize> = (0..n).collect();
    row_pool.shuffle(&mut rng);
    let mut next_row = 0;
    let mut blocks = Vec::with_capacity(spec.blocks.len());
    for b in &spec.blocks {
        let mut rows = row_pool[next_row..next_row + b.n_rows].to_vec();
        next_row += b.n_rows;
        rows.sort_unstable();
        let mut cols: Vec<usize> = if spec.columns_contiguous {
            let start = rng.random_range(0..=m - b.n_cols);
            (start..start + b.n_cols).collect()
        } else {
            let mut all: Vec<usize> = (0..m).collect();
            all.shuffle(&mut rng);
            all.truncate(b.n_cols);
            all
        };
        cols.sort_unstable();

        let mu = uniform(&mut rng, spec.mu_range);
        let alpha: Vec<f64> = rows.iter().map(|_| uniform(&mut rng, spec.alpha_range)).collect();
        let beta: Vec<f64> = cols.iter().map(|_| uniform(&mut rng, spec.beta_range)).collect();
        let noise = Normal::new(0.0, b.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for (&i, ai) in rows.iter().zip(&alpha) {
            for (&j, bj) in cols.iter().zip(&beta) {
                let eps = if b.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                values[i * m + j] = mu + ai + bj + eps;
            }
        }
        blocks.push(PlantedBlock { rows, cols, noise_sigma: b.noise_sigma });
    }
    Ok((ExpressionMatrix::new(n, m, values)?, GroundTruth { blocks }))
}

fn overlap(x: &[usize], y: &[usize]) -> usize {
    let (mut a, mut b, mut n) = (0, 0, 0);
    while a < x.len() && b < y.len() {
        match x[a].cmp(&y[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                a += 1;
                b += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub discovered: usize,
    pub planted: usize,
    pub row_overlap: usize,
}

/// One-to-one matching of discovered to planted biclusters maximizing the
/// total row overlap (column overlap breaks ties). Pairs without shared
/// rows are left unmatched. Sorted by planted index.
pub fn match_biclusters(discovered: &[Bicluster], truth: &GroundTruth) -> Vec<Match> {
    let (nd, nt) = (discovered.len(), truth.blocks.len());
    if nd == 0 || nt == 0 {
        return Vec::new();
    }
    let col_scale = 1 + truth.blocks.iter().map(|t| t.cols.len()).max().unwrap_or(0) as i64;
    let weight = |d: usize, t: usize| {
        let (b, p) = (&discovered[d], &truth.blocks[t]);
        overlap(&b.rows, &p.rows) as i64 * col_scale + overlap(&b.cols, &p.cols) as i64
    };
    // the solver wants no more rows than columns
    let pairs: Vec<(usize, usize)> = if nt <= nd {
        let w = Matrix::from_rows((0..nt).map(|t| (0..nd).map(move |d| (t, d))))
            .expect("rectangular")
            .map(|(t, d)| weight(d, t));
        let (_, assign) = kuhn_munkres(&w);
        assign.into_iter().enumerate().map(|(t, d)| (d, t)).collect()
    } else {
        let w = Matrix::from_rows((0..nd).map(|d| (0..nt).map(move |t| (d, t))))
            .expect("rectangular")
            .map(|(d, t)| weight(d, t));
        let (_, assign) = kuhn_munkres(&w);
        assign.into_iter().enumerate().collect()
    };
    let mut matches: Vec<Match> = pairs
        .into_iter()
        .map(|(d, t)| Match {
            discovered: d,
            planted: t,
            row_overlap: overlap(&discovered[d].rows, &truth.blocks[t].rows),
        })
        .filter(|m| m.row_overlap > 0)
        .collect();
    matches.sort_by_key(|m| m.planted);
    matches
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_discovered: usize,
    /// Planted rows that fall in any discovered bicluster.
    pub pct_clustered_rows: f64,
    /// Planted rows inside the discovered bicluster matched to their block.
    pub pct_correct_rows: f64,
    pub pct_correct_cols: f64,
    pub per_block_correct_rows: Vec<usize>,
    /// Matched with a majority of the block's rows, and those rows are a
    /// majority of the discovered bicluster.
    pub per_block_recovered: Vec<bool>,
    /// Discovered biclusters holding a majority of two or more blocks.
    pub merged_discoveries: usize,
}

impl EvalReport {
    pub fn n_recovered(&self) -> usize {
        self.per_block_recovered.iter().filter(|&&r| r).count()
    }
}

pub fn evaluate(discovered: &[Bicluster], truth: &GroundTruth) -> EvalReport {
    let planted_rows: usize = truth.blocks.iter().map(|b| b.rows.len()).sum();
    let planted_cols: usize = truth.blocks.iter().map(|b| b.cols.len()).sum();
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };

    let mut owner = std::collections::HashSet::new();
    truth.blocks.iter().flat_map(|b| &b.rows).for_each(|&r| {
        owner.insert(r);
    });
    let clustered: std::collections::HashSet<usize> =
        discovered.iter().flat_map(|b| b.rows.iter().copied()).filter(|r| owner.contains(r)).collect();

    let matches = match_biclusters(discovered, truth);
    let mut per_block_correct_rows = vec![0; truth.blocks.len()];
    let mut per_block_recovered = vec![false; truth.blocks.len()];
    let mut correct_cols = 0;
    for m in &matches {
        let (d, t) = (&discovered[m.discovered], &truth.blocks[m.planted]);
        per_block_correct_rows[m.planted] = m.row_overlap;
        correct_cols += overlap(&d.cols, &t.cols);
        per_block_recovered[m.planted] =
            2 * m.row_overlap > t.rows.len() && 2 * m.row_overlap > d.rows.len();
    }
    let merged_discoveries = discovered
        .iter()
        .filter(|d| {
            truth
                .blocks
                .iter()
                .filter(|t| 2 * overlap(&d.rows, &t.rows) > t.rows.len())
                .count()
                >= 2
        })
        .count();
    EvalReport {
        n_discovered: discovered.len(),
        pct_clustered_rows: pct(clustered.len(), planted_rows),
        pct_correct_rows: pct(per_block_correct_rows.iter().sum(), planted_rows),
        pct_correct_cols: pct(correct_cols, planted_cols),
        per_block_correct_rows,
        per_block_recovered,
        merged_discoveries,
    }
}
