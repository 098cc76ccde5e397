//! The complete two-stage method: harvest overlapping δ-biclusters, then
//! auction the rows among them and keep the revenue-maximal winners.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floc::{dedup_biclusters, harvest_candidates, FlocConfig};
use crate::matrix::ExpressionMatrix;
use crate::msr::Bicluster;
use crate::wdp::{solve_wdp, Auction, Bid};

pub const DEFAULT_CANDIDATE_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub floc: FlocConfig,
    /// Log the rows left out of every chosen bicluster.
    #[serde(default)]
    pub report_unclustered: bool,
    /// Pool size above which dominated candidates outside the largest
    /// volumes leave the auction.
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CANDIDATE_CAP
}

impl PipelineConfig {
    pub fn new(floc: FlocConfig) -> Self {
        Self { floc, report_unclustered: false, candidate_cap: DEFAULT_CANDIDATE_CAP }
    }

    pub fn validate(&self) -> Result<()> {
        self.floc.validate()?;
        if self.candidate_cap == 0 {
            return Err(Error::invalid("candidate_cap must be at least 1"));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        let mut cfg = self.clone();
        cfg.floc.delta = delta;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    /// Row-disjoint winners, in canonical `(rows, cols)` order.
    pub chosen: Vec<Bicluster>,
    pub total_volume: usize,
    pub unclustered_rows: Vec<usize>,
    pub candidate_pool_size: usize,
}

/// One bid per candidate: the candidate's rows at the price of its volume.
/// Bid ids are candidate positions.
pub fn build_auction(candidates: &[Bicluster], n_rows: usize) -> Auction {
    let bids = candidates
        .iter()
        .enumerate()
        .map(|(id, c)| Bid { id, bundle: c.rows.clone(), price: c.volume as f64 })
        .collect();
    Auction { n_goods: n_rows, bids }
}

/// Row sets as bitsets, for subset tests.
fn row_mask(rows: &[usize], words: usize) -> Vec<u64> {
    let mut m = vec![0u64; words];
    rows.iter().for_each(|&r| m[r / 64] |= 1 << (r % 64));
    m
}

/// Indices of the candidates that enter the auction.
///
/// A candidate is dominated when another one uses a subset of its rows for
/// at least its volume (ties keep the smaller row set, then the earlier
/// candidate); dropping it never lowers the optimal revenue. Up to `cap`
/// pools are kept whole. Beyond that, the `cap` largest volumes are kept
/// together with every undominated candidate, so the optimum over the pool
/// is unchanged and larger pools never lose revenue.
pub fn auction_shortlist(candidates: &[Bicluster], n_rows: usize, cap: usize) -> Vec<usize> {
    if candidates.len() <= cap {
        return (0..candidates.len()).collect();
    }
    let words = n_rows.div_ceil(64);
    let masks: Vec<Vec<u64>> = candidates.iter().map(|c| row_mask(&c.rows, words)).collect();
    let subset = |a: &[u64], b: &[u64]| a.iter().zip(b).all(|(x, y)| x & !y == 0);
    let dominates = |d: usize, c: usize| {
        let (cd, cc) = (&candidates[d], &candidates[c]);
        if cd.volume < cc.volume || !subset(&masks[d], &masks[c]) {
            return false;
        }
        cd.volume > cc.volume || cd.rows.len() < cc.rows.len() || d < c
    };
    let mut keep = vec![false; candidates.len()];
    let mut by_volume: Vec<usize> = (0..candidates.len()).collect();
    by_volume.sort_by(|&x, &y| candidates[y].volume.cmp(&candidates[x].volume).then(x.cmp(&y)));
    by_volume.iter().take(cap).for_each(|&c| keep[c] = true);
    for c in 0..candidates.len() {
        if !keep[c] && !(0..candidates.len()).any(|d| d != c && dominates(d, c)) {
            keep[c] = true;
        }
    }
    let kept: Vec<usize> = (0..candidates.len()).filter(|&c| keep[c]).collect();
    if kept.len() > cap {
        warn!("{} undominated auction candidates exceed the cap of {cap}", kept.len());
    }
    kept
}

/// Stage 2 on an already harvested pool.
pub fn select_exclusive(
    a: &ExpressionMatrix,
    pool: &[Bicluster],
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    let shortlist = auction_shortlist(pool, a.n_rows(), cfg.candidate_cap);
    let bidders: Vec<Bicluster> = shortlist.iter().map(|&k| pool[k].clone()).collect();
    let allocation = solve_wdp(&build_auction(&bidders, a.n_rows()))?;
    let chosen: Vec<Bicluster> = allocation.winners.iter().map(|&id| bidders[id].clone()).collect();
    let total_volume = chosen.iter().map(|b| b.volume).sum();
    let mut covered = vec![false; a.n_rows()];
    chosen.iter().flat_map(|b| &b.rows).for_each(|&r| covered[r] = true);
    let unclustered_rows: Vec<usize> = (0..a.n_rows()).filter(|&r| !covered[r]).collect();
    if cfg.report_unclustered {
        info!("{} unclustered rows: {:?}", unclustered_rows.len(), unclustered_rows);
    }
    Ok(PipelineResult { chosen, total_volume, unclustered_rows, candidate_pool_size: pool.len() })
}

/// Harvests candidates at `cfg.floc.delta` and selects the row-exclusive
/// winners of maximal total volume.
pub fn run_exclusive_biclustering(
    a: &ExpressionMatrix,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let pool = harvest_candidates(a, &cfg.floc)?;
    select_exclusive(a, &pool, cfg)
}

/// Runs the pipeline over an ascending threshold grid, carrying every
/// candidate found at smaller thresholds forward. Total volume is therefore
/// non-decreasing along the grid.
pub fn cumulative_scan(
    a: &ExpressionMatrix,
    grid: &[f64],
    cfg: &PipelineConfig,
) -> Result<Vec<PipelineResult>> {
    check_grid(grid)?;
    cfg.validate()?;
    let mut pool: Vec<Bicluster> = Vec::new();
    let mut out = Vec::with_capacity(grid.len());
    for &delta in grid {
        let step = cfg.with_delta(delta);
        let mut fresh = harvest_candidates(a, &step.floc)?;
        fresh.append(&mut pool);
        pool = dedup_biclusters(fresh);
        out.push(select_exclusive(a, &pool, &step)?);
    }
    Ok(out)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    if grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::invalid("thresholds must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("threshold grid must be strictly ascending"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wdp::brute_force_wdp;

    fn bc(rows: &[usize], cols: usize, volume_hint: usize) -> Bicluster {
        let b = Bicluster {
            rows: rows.to_vec(),
            cols: (0..cols).collect(),
            msr: 0.0,
            volume: rows.len() * cols,
        };
        assert_eq!(b.volume, volume_hint);
        b
    }

    #[test]
    fn auction_construction() {
        let empty = build_auction(&[], 5);
        assert!(empty.bids.is_empty());
        assert_eq!(empty.n_goods, 5);

        let block = bc(&(0..10).collect::<Vec<_>>(), 10, 100);
        let one = build_auction(std::slice::from_ref(&block), 20);
        assert_eq!(one.bids.len(), 1);
        assert_eq!(one.bids[0].bundle.len(), 10);
        assert_eq!(one.bids[0].price, 100.0);

        let a = bc(&[1, 2, 3], 2, 6);
        let b = bc(&[3, 4], 2, 4);
        let two = build_auction(&[a, b], 5);
        assert!(two.bids[0].bundle.contains(&3) && two.bids[1].bundle.contains(&3));
    }

    #[test]
    fn overlapping_candidates_resolved_by_volume() {
        // volumes 100 and 60 overlap; 50 conflicts only with the first
        let big = bc(&(0..10).collect::<Vec<_>>(), 10, 100);
        let mid = bc(&(8..14).collect::<Vec<_>>(), 10, 60);
        let small = bc(&[0, 1, 2, 3, 4], 10, 50);
        let pool = vec![big.clone(), mid.clone(), small];
        let auction = build_auction(&pool, 20);
        let oracle = brute_force_wdp(&auction).unwrap();
        assert_eq!(oracle.revenue, 110.0);
        assert_eq!(oracle.winners, vec![1, 2]);
        assert_eq!(solve_wdp(&auction).unwrap(), oracle);
    }

    #[test]
    fn shortlist_keeps_undominated_beyond_cap() {
        let a = bc(&[0, 1, 2], 4, 12);
        let b = bc(&[0, 1, 2], 3, 9); // same rows, less volume
        let c = bc(&[0, 1], 6, 12); // fewer rows, same volume: dominates a
        let d = bc(&[3, 4], 2, 4);
        let pool = vec![a, b, c, d];
        assert_eq!(auction_shortlist(&pool, 5, 10), vec![0, 1, 2, 3]);
        // a is the largest; b is dominated by both a and c
        assert_eq!(auction_shortlist(&pool, 5, 1), vec![0, 2, 3]);
    }

    #[test]
    fn grid_checks() {
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[0.1, 0.1]).is_err());
        assert!(check_grid(&[0.0, 0.1]).is_err());
        assert!(check_grid(&[0.1, 0.2]).is_ok());
    }
}
