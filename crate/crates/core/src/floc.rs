//! Stage 1: FLOC-style harvesting of overlapping δ-biclusters.
//!
//! Each run seeds `k` random biclusters and then sweeps over every row and
//! column in a freshly shuffled order. For each element the best add/remove
//! action across all `k` biclusters is applied when its gain is positive.
//! Harvesting repeats runs over restarts and a ladder of shrunken thresholds
//! and returns the deduplicated union.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::msr::Bicluster;
use crate::rng::{self, Rng};

/// Scoring of a single add/remove action.
///
/// All rules add the relative volume change `(v' - v) / v` to a residue
/// term; they differ in how the residue change is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainRule {
    /// `(r_c - r_c') / delta`.
    #[default]
    Normalized,
    /// `r_c (delta - r_c') / delta^2`.
    Printed,
    /// `delta (r_c - r_c') / r_c^2`, the weighting of the original FLOC.
    Floc,
}

impl GainRule {
    pub fn residue_term(self, r_c: f64, r_new: f64, delta: f64) -> f64 {
        match self {
            GainRule::Normalized => (r_c - r_new) / delta,
            GainRule::Printed => r_c * (delta - r_new) / (delta * delta),
            GainRule::Floc => {
                if r_c > 0.0 {
                    delta * (r_c - r_new) / (r_c * r_c)
                } else if r_new > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlocConfig {
    /// Biclusters grown concurrently per run.
    pub k: usize,
    /// MSR threshold.
    pub delta: f64,
    /// Biclusters need strictly more than `min_rows` rows.
    pub min_rows: usize,
    /// Biclusters need strictly more than `min_cols` columns.
    pub min_cols: usize,
    pub max_iters: usize,
    /// Membership probability of each element at initialization.
    pub init_prob: f64,
    pub restarts: usize,
    /// Multipliers of `delta`; every entry in (0, 1], and 1.0 is required.
    pub delta_fractions: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub gain_rule: GainRule,
}

impl FlocConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            k: 20,
            delta,
            min_rows: 4,
            min_cols: 4,
            max_iters: 50,
            init_prob: 0.5,
            restarts: 20,
            delta_fractions: vec![1.0, 0.5, 0.25, 0.125],
            seed: 0,
            gain_rule: GainRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid("delta must be positive and finite"));
        }
        if self.min_rows == 0 || self.min_cols == 0 {
            return Err(Error::invalid("minimum dimensions must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.init_prob > 0.0 && self.init_prob <= 1.0) {
            return Err(Error::invalid("init_prob must lie in (0, 1]"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if self.delta_fractions.is_empty() {
            return Err(Error::invalid("delta_fractions is empty"));
        }
        if let Some(f) = self.delta_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::invalid(format!("delta fraction {f} outside (0, 1]")));
        }
        if !self.delta_fractions.contains(&1.0) {
            return Err(Error::invalid("delta_fractions must contain 1.0"));
        }
        Ok(())
    }

    pub(crate) fn check_dimensions(&self, a: &ExpressionMatrix) -> Result<()> {
        if a.n_rows() <= self.min_rows || a.n_cols() <= self.min_cols {
            return Err(Error::Infeasible(format!(
                "a {}x{} matrix cannot hold a bicluster with more than {} rows and {} columns",
                a.n_rows(),
                a.n_cols(),
                self.min_rows,
                self.min_cols
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub axis: Axis,
    pub element: usize,
    /// Index of the bicluster within the run.
    pub target: usize,
}

/// Gain of moving from a bicluster with residue `r_c` and volume `v` to one
/// with residue `r_new` and volume `v_new`.
///
/// Moves that take a δ-bicluster out of the threshold score `-inf`.
pub fn gain_value(rule: GainRule, r_c: f64, r_new: f64, v: usize, v_new: usize, delta: f64) -> f64 {
    if r_c < delta && r_new >= delta {
        return f64::NEG_INFINITY;
    }
    rule.residue_term(r_c, r_new, delta) + (v_new as f64 - v as f64) / v as f64
}

/// Gain of applying `action` to `c`, evaluated from scratch.
///
/// Actions leaving `c` with `min_rows` rows or `min_cols` columns or fewer
/// score `-inf`.
pub fn action_gain(
    a: &ExpressionMatrix,
    c: &Bicluster,
    action: &Action,
    cfg: &FlocConfig,
) -> Result<f64> {
    let (set, other, bound) = match action.axis {
        Axis::Row => (&c.rows, &c.cols, a.n_rows()),
        Axis::Column => (&c.cols, &c.rows, a.n_cols()),
    };
    if action.element >= bound {
        return Err(Error::invalid(format!("element {} out of range", action.element)));
    }
    let present = set.binary_search(&action.element).is_ok();
    let mut next: Vec<usize> = set.clone();
    match (action.kind, present) {
        (ActionKind::Add, false) => next.push(action.element),
        (ActionKind::Remove, true) => next.retain(|&e| e != action.element),
        (ActionKind::Add, true) => {
            return Err(Error::invalid("cannot add an element already in the bicluster"))
        }
        (ActionKind::Remove, false) => {
            return Err(Error::invalid("cannot remove an element not in the bicluster"))
        }
    }
    let floor = match action.axis {
        Axis::Row => cfg.min_rows,
        Axis::Column => cfg.min_cols,
    };
    if next.len() <= floor {
        return Ok(f64::NEG_INFINITY);
    }
    let (rows, cols) = match action.axis {
        Axis::Row => (next, other.clone()),
        Axis::Column => (other.clone(), next),
    };
    let after = Bicluster::new(a, rows, cols)?;
    Ok(gain_value(cfg.gain_rule, c.msr, after.msr, c.volume, after.volume, cfg.delta))
}

/// Random initial biclusters: every element joins each bicluster with
/// probability `init_prob`; undersized biclusters are topped up uniformly.
pub fn init_biclusters(
    a: &ExpressionMatrix,
    cfg: &FlocConfig,
    rng: &mut Rng,
) -> Result<Vec<Bicluster>> {
    cfg.validate()?;
    cfg.check_dimensions(a)?;
    (0..cfg.k)
        .map(|_| {
            let rows = random_subset(rng, a.n_rows(), cfg.init_prob, cfg.min_rows + 1);
            let cols = random_subset(rng, a.n_cols(), cfg.init_prob, cfg.min_cols + 1);
            Bicluster::new(a, rows, cols)
        })
        .collect()
}

fn random_subset(rng: &mut Rng, n: usize, p: f64, at_least: usize) -> Vec<usize> {
    let mut member: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
    let mut count = member.iter().filter(|&&m| m).count();
    while count < at_least {
        let outside: Vec<usize> = (0..n).filter(|&e| !member[e]).collect();
        let pick = outside[rng.random_range(0..outside.len())];
        member[pick] = true;
        count += 1;
    }
    (0..n).filter(|&e| member[e]).collect()
}

/// Row/column sums of one bicluster, kept for every row and column of the
/// matrix so that any add/remove can be scored in O(|I|) or O(|J|).
#[derive(Debug, Clone)]
struct Tracked {
    in_row: Vec<bool>,
    in_col: Vec<bool>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Sum over the bicluster's columns, for every matrix row.
    row_sum: Vec<f64>,
    row_sq: Vec<f64>,
    /// Sum over the bicluster's rows, for every matrix column.
    col_sum: Vec<f64>,
    col_sq: Vec<f64>,
    total: f64,
    total_sq: f64,
    sum_row_sum_sq: f64,
    sum_col_sum_sq: f64,
    msr: f64,
}

fn msr_from_parts(
    n_r: usize,
    n_c: usize,
    total: f64,
    total_sq: f64,
    sum_row_sum_sq: f64,
    sum_col_sum_sq: f64,
) -> f64 {
    let (nr, nc) = (n_r as f64, n_c as f64);
    let ss = total_sq - sum_row_sum_sq / nc - sum_col_sum_sq / nr + total * total / (nr * nc);
    (ss / (nr * nc)).max(0.0)
}

impl Tracked {
    fn new(a: &ExpressionMatrix, b: &Bicluster) -> Self {
        let mut in_row = vec![false; a.n_rows()];
        let mut in_col = vec![false; a.n_cols()];
        b.rows.iter().for_each(|&i| in_row[i] = true);
        b.cols.iter().for_each(|&j| in_col[j] = true);
        let mut t = Self {
            in_row,
            in_col,
            rows: b.rows.clone(),
            cols: b.cols.clone(),
            row_sum: vec![0.0; a.n_rows()],
            row_sq: vec![0.0; a.n_rows()],
            col_sum: vec![0.0; a.n_cols()],
            col_sq: vec![0.0; a.n_cols()],
            total: 0.0,
            total_sq: 0.0,
            sum_row_sum_sq: 0.0,
            sum_col_sum_sq: 0.0,
            msr: 0.0,
        };
        t.refresh(a);
        t
    }

    /// Recomputes every cached sum from the membership sets.
    fn refresh(&mut self, a: &ExpressionMatrix) {
        self.row_sum.iter_mut().for_each(|s| *s = 0.0);
        self.row_sq.iter_mut().for_each(|s| *s = 0.0);
        self.col_sum.iter_mut().for_each(|s| *s = 0.0);
        self.col_sq.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..a.n_rows() {
            let row = a.row(i);
            let (mut s, mut q) = (0.0, 0.0);
            for &j in &self.cols {
                s += row[j];
                q += row[j] * row[j];
            }
            self.row_sum[i] = s;
            self.row_sq[i] = q;
        }
        for &i in &self.rows {
            for (j, &v) in a.row(i).iter().enumerate() {
                self.col_sum[j] += v;
                self.col_sq[j] += v * v;
            }
        }
        self.recompute_totals();
    }

    fn recompute_totals(&mut self) {
        self.total = self.rows.iter().map(|&i| self.row_sum[i]).sum();
        self.total_sq = self.rows.iter().map(|&i| self.row_sq[i]).sum();
        self.sum_row_sum_sq = self.rows.iter().map(|&i| self.row_sum[i].powi(2)).sum();
        self.sum_col_sum_sq = self.cols.iter().map(|&j| self.col_sum[j].powi(2)).sum();
        self.msr = msr_from_parts(
            self.rows.len(),
            self.cols.len(),
            self.total,
            self.total_sq,
            self.sum_row_sum_sq,
            self.sum_col_sum_sq,
        );
    }

    fn volume(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// MSR and row count after toggling row `x`.
    fn toggled_row(&self, a: &ExpressionMatrix, x: usize) -> (f64, usize) {
        let row = a.row(x);
        let dot: f64 = self.cols.iter().map(|&j| self.col_sum[j] * row[j]).sum();
        let (r, q) = (self.row_sum[x], self.row_sq[x]);
        let sign = if self.in_row[x] { -1.0 } else { 1.0 };
        let n_r = if self.in_row[x] { self.rows.len() - 1 } else { self.rows.len() + 1 };
        if n_r == 0 {
            return (0.0, 0);
        }
        let msr = msr_from_parts(
            n_r,
            self.cols.len(),
            self.total + sign * r,
            self.total_sq + sign * q,
            self.sum_row_sum_sq + sign * r * r,
            self.sum_col_sum_sq + sign * 2.0 * dot + q,
        );
        (msr, n_r)
    }

    fn toggled_col(&self, a: &ExpressionMatrix, y: usize) -> (f64, usize) {
        let dot: f64 = self.rows.iter().map(|&i| self.row_sum[i] * a.get(i, y)).sum();
        let (c, q) = (self.col_sum[y], self.col_sq[y]);
        let sign = if self.in_col[y] { -1.0 } else { 1.0 };
        let n_c = if self.in_col[y] { self.cols.len() - 1 } else { self.cols.len() + 1 };
        if n_c == 0 {
            return (0.0, 0);
        }
        let msr = msr_from_parts(
            self.rows.len(),
            n_c,
            self.total + sign * c,
            self.total_sq + sign * q,
            self.sum_row_sum_sq + sign * 2.0 * dot + q,
            self.sum_col_sum_sq + sign * c * c,
        );
        (msr, n_c)
    }

    fn toggle_row(&mut self, a: &ExpressionMatrix, x: usize) {
        let sign = if self.in_row[x] {
            let pos = self.rows.iter().position(|&i| i == x).expect("tracked row");
            self.rows.swap_remove(pos);
            -1.0
        } else {
            self.rows.push(x);
            1.0
        };
        self.in_row[x] = !self.in_row[x];
        for (j, &v) in a.row(x).iter().enumerate() {
            self.col_sum[j] += sign * v;
            self.col_sq[j] += sign * v * v;
        }
        self.recompute_totals();
    }

    fn toggle_col(&mut self, a: &ExpressionMatrix, y: usize) {
        let sign = if self.in_col[y] {
            let pos = self.cols.iter().position(|&j| j == y).expect("tracked column");
            self.cols.swap_remove(pos);
            -1.0
        } else {
            self.cols.push(y);
            1.0
        };
        self.in_col[y] = !self.in_col[y];
        for i in 0..a.n_rows() {
            let v = a.get(i, y);
            self.row_sum[i] += sign * v;
            self.row_sq[i] += sign * v * v;
        }
        self.recompute_totals();
    }

    fn to_bicluster(&self, a: &ExpressionMatrix) -> Bicluster {
        Bicluster::new(a, self.rows.clone(), self.cols.clone()).expect("tracked sets are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    Row(usize),
    Col(usize),
}

/// One FLOC run in progress over a mean-centred copy of the matrix.
struct FlocRun<'a> {
    centred: ExpressionMatrix,
    cfg: &'a FlocConfig,
    clusters: Vec<Tracked>,
}

impl<'a> FlocRun<'a> {
    fn new(a: &ExpressionMatrix, cfg: &'a FlocConfig, init: &[Bicluster]) -> Self {
        // MSR is shift-invariant; centring keeps the sum-of-squares updates
        // away from catastrophic cancellation.
        let mean = a.values().iter().sum::<f64>() / a.values().len() as f64;
        let centred = a.map(|v| v - mean).expect("centring keeps values finite");
        let clusters = init.iter().map(|b| Tracked::new(&centred, b)).collect();
        Self { centred, cfg, clusters }
    }

    /// Best action for `e` over all biclusters as `(target, gain)`.
    fn best_action(&self, e: Element) -> Option<(usize, f64)> {
        let cfg = self.cfg;
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in self.clusters.iter().enumerate() {
            let (r_new, n_new, floor, other) = match e {
                Element::Row(x) => {
                    let (r, n) = c.toggled_row(&self.centred, x);
                    (r, n, cfg.min_rows, c.cols.len())
                }
                Element::Col(y) => {
                    let (r, n) = c.toggled_col(&self.centred, y);
                    (r, n, cfg.min_cols, c.rows.len())
                }
            };
            let gain = if n_new <= floor {
                f64::NEG_INFINITY
            } else {
                gain_value(cfg.gain_rule, c.msr, r_new, c.volume(), n_new * other, cfg.delta)
            };
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((k, gain));
            }
        }
        best
    }

    fn apply(&mut self, e: Element, target: usize) -> Action {
        let c = &mut self.clusters[target];
        match e {
            Element::Row(x) => {
                let kind = if c.in_row[x] { ActionKind::Remove } else { ActionKind::Add };
                c.toggle_row(&self.centred, x);
                Action { kind, axis: Axis::Row, element: x, target }
            }
            Element::Col(y) => {
                let kind = if c.in_col[y] { ActionKind::Remove } else { ActionKind::Add };
                c.toggle_col(&self.centred, y);
                Action { kind, axis: Axis::Column, element: y, target }
            }
        }
    }

    /// One pass over all rows and columns; returns the applied actions.
    fn sweep(&mut self, rng: &mut Rng) -> Vec<(Action, f64)> {
        for c in &mut self.clusters {
            c.refresh(&self.centred);
        }
        let mut order: Vec<Element> = (0..self.centred.n_rows())
            .map(Element::Row)
            .chain((0..self.centred.n_cols()).map(Element::Col))
            .collect();
        order.shuffle(rng);
        let mut applied = Vec::new();
        for e in order {
            if let Some((target, gain)) = self.best_action(e) {
                if gain > 0.0 {
                    applied.push((self.apply(e, target), gain));
                }
            }
        }
        applied
    }
}

/// A single FLOC run at `cfg.delta`; returns the final biclusters that are
/// δ-biclusters, in run order.
pub fn run_floc(a: &ExpressionMatrix, cfg: &FlocConfig, rng: &mut Rng) -> Result<Vec<Bicluster>> {
    let init = init_biclusters(a, cfg, rng)?;
    let mut run = FlocRun::new(a, cfg, &init);
    for _ in 0..cfg.max_iters {
        if run.sweep(rng).is_empty() {
            break;
        }
    }
    Ok(run
        .clusters
        .iter()
        .map(|c| c.to_bicluster(a))
        .filter(|b| b.msr < cfg.delta && b.n_rows() > cfg.min_rows && b.n_cols() > cfg.min_cols)
        .collect())
}

/// Sorts canonically by `(rows, cols)` and drops exact duplicates.
pub fn dedup_biclusters(mut pool: Vec<Bicluster>) -> Vec<Bicluster> {
    pool.sort_by(|x, y| x.key().cmp(&y.key()));
    pool.dedup_by(|x, y| x.key() == y.key());
    pool
}

/// Union of `run_floc` outputs over every restart and every threshold
/// `delta * fraction`, deduplicated.
///
/// The stream of each run depends only on `(seed, restart, fraction)`, so
/// extending the ladder or the restart count only adds candidates.
pub fn harvest_candidates(a: &ExpressionMatrix, cfg: &FlocConfig) -> Result<Vec<Bicluster>> {
    cfg.validate()?;
    cfg.check_dimensions(a)?;
    let jobs: Vec<(f64, usize)> = cfg
        .delta_fractions
        .iter()
        .flat_map(|&f| (0..cfg.restarts).map(move |r| (f, r)))
        .collect();
    let runs: Vec<Vec<Bicluster>> = jobs
        .par_iter()
        .map(|&(fraction, restart)| {
            let mut run_cfg = cfg.clone();
            run_cfg.delta = cfg.delta * fraction;
            let mut rng = rng::stream(cfg.seed, &[rng::TAG_FLOC, restart as u64, fraction.to_bits()]);
            run_floc(a, &run_cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let pool: Vec<Bicluster> = runs
        .into_iter()
        .flatten()
        .filter(|b| b.msr < cfg.delta)
        .collect();
    let pool = dedup_biclusters(pool);
    if pool.is_empty() {
        warn!("no δ-bicluster found at delta = {}", cfg.delta);
    }
    Ok(pool)
}
