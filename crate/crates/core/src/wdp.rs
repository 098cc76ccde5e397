//! Stage 2: exact winner determination for a combinatorial auction with
//! free disposal, i.e. maximum-weight set packing.
//!
//! [`solve_wdp`] is a depth-first branch and bound in the style of CASS:
//! every node decides which bid gets one still unallocated good, or leaves
//! it unallocated, and is pruned when its revenue plus an admissible bound
//! over the open goods cannot reach the incumbent. Bids whose bundles never
//! conflict (directly or transitively) are solved as separate components.
//!
//! Ties between equal-revenue allocations go to the one with fewer winners,
//! then to the lexicographically smallest sorted list of winner ids.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub id: usize,
    /// Sorted, distinct goods.
    pub bundle: Vec<usize>,
    pub price: f64,
}

impl Bid {
    pub fn new(id: usize, mut bundle: Vec<usize>, price: f64) -> Result<Self> {
        bundle.sort_unstable();
        bundle.dedup();
        if bundle.is_empty() {
            return Err(Error::invalid(format!("bid {id} has an empty bundle")));
        }
        if !(price >= 0.0) || !price.is_finite() {
            return Err(Error::invalid(format!("bid {id} has invalid price {price}")));
        }
        Ok(Self { id, bundle, price })
    }

    pub fn density(&self) -> f64 {
        self.price / self.bundle.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auction {
    pub n_goods: usize,
    pub bids: Vec<Bid>,
}

impl Auction {
    pub fn new(n_goods: usize, bids: Vec<Bid>) -> Result<Self> {
        let auction = Self { n_goods, bids };
        auction.validate()?;
        Ok(auction)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for b in &self.bids {
            if b.bundle.is_empty() {
                return Err(Error::invalid(format!("bid {} has an empty bundle", b.id)));
            }
            if !(b.price >= 0.0) || !b.price.is_finite() {
                return Err(Error::invalid(format!("bid {} has invalid price", b.id)));
            }
            if let Some(&g) = b.bundle.iter().find(|&&g| g >= self.n_goods) {
                return Err(Error::invalid(format!(
                    "bid {} requests good {g} of {}",
                    b.id, self.n_goods
                )));
            }
            if !ids.insert(b.id) {
                return Err(Error::invalid(format!("duplicate bid id {}", b.id)));
            }
        }
        Ok(())
    }

    /// Reads the text format: one bid per line, `price good good ...`.
    /// Blank lines and `#` comments are ignored; bid ids follow line order
    /// starting at 0. `n_goods` defaults to one past the largest good.
    pub fn parse(text: &str, n_goods: Option<usize>) -> Result<Self> {
        let mut bids = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace().enumerate();
            let (_, price) = fields.next().expect("non-empty line");
            let price: f64 = price.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: 1,
                message: format!("invalid price {price:?}"),
            })?;
            let goods = fields
                .map(|(col, tok)| {
                    tok.parse::<usize>().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        column: col + 1,
                        message: format!("invalid good {tok:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let id = bids.len();
            bids.push(Bid::new(id, goods, price).map_err(|e| Error::Parse {
                line: lineno + 1,
                column: 1,
                message: e.to_string(),
            })?);
        }
        let needed = bids.iter().flat_map(|b| b.bundle.iter()).max().map_or(0, |g| g + 1);
        Self::new(n_goods.unwrap_or(needed), bids)
    }

    pub fn from_path(path: &Path, n_goods: Option<usize>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, n_goods)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Winning bid ids, ascending.
    pub winners: Vec<usize>,
    pub revenue: f64,
}

impl Allocation {
    fn empty() -> Self {
        Self { winners: Vec::new(), revenue: 0.0 }
    }
}

/// Tie-aware ordering: `Greater` means `x` is the preferred allocation.
fn preference(x_rev: f64, x: &[usize], y_rev: f64, y: &[usize]) -> Ordering {
    x_rev
        .partial_cmp(&y_rev)
        .unwrap_or(Ordering::Equal)
        .then_with(|| y.len().cmp(&x.len()))
        .then_with(|| y.cmp(x))
}

/// Sum over `remaining_goods` of the best price density among the bids
/// requesting each good. Never below the revenue any packing of `bids`
/// restricted to those goods can collect. Padded by the rounding error of
/// the density sum, so that e.g. three thirds of 19 still reach 19.
pub fn upper_bound(remaining_goods: &[usize], bids: &[Bid]) -> f64 {
    let sum: f64 = remaining_goods
        .iter()
        .map(|g| {
            bids.iter()
                .filter(|b| b.bundle.binary_search(g).is_ok())
                .map(Bid::density)
                .fold(0.0, f64::max)
        })
        .sum();
    sum + sum * 2.0 * remaining_goods.len() as f64 * f64::EPSILON
}

/// Exhaustive oracle over all conflict-free bid subsets.
pub const BRUTE_FORCE_LIMIT: usize = 25;

pub fn brute_force_wdp(auction: &Auction) -> Result<Allocation> {
    auction.validate()?;
    if auction.bids.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyBids { limit: BRUTE_FORCE_LIMIT, got: auction.bids.len() });
    }
    fn go(
        bids: &[Bid],
        idx: usize,
        used: &mut Vec<bool>,
        chosen: &mut Vec<usize>,
        best: &mut Allocation,
    ) {
        if idx == bids.len() {
            let mut ids: Vec<usize> = chosen.iter().map(|&k| bids[k].id).collect();
            ids.sort_unstable();
            let revenue = revenue_of(bids, chosen);
            if preference(revenue, &ids, best.revenue, &best.winners) == Ordering::Greater {
                *best = Allocation { winners: ids, revenue };
            }
            return;
        }
        go(bids, idx + 1, used, chosen, best);
        let b = &bids[idx];
        if b.bundle.iter().all(|&g| !used[g]) {
            b.bundle.iter().for_each(|&g| used[g] = true);
            chosen.push(idx);
            go(bids, idx + 1, used, chosen, best);
            chosen.pop();
            b.bundle.iter().for_each(|&g| used[g] = false);
        }
    }
    let mut best = Allocation::empty();
    go(&auction.bids, 0, &mut vec![false; auction.n_goods], &mut Vec::new(), &mut best);
    Ok(best)
}

/// Revenue in ascending id order, so equal winner sets give equal sums.
fn revenue_of(bids: &[Bid], chosen: &[usize]) -> f64 {
    let mut picked: Vec<&Bid> = chosen.iter().map(|&k| &bids[k]).collect();
    picked.sort_by_key(|b| b.id);
    picked.iter().map(|b| b.price).sum()
}

/// Optimal allocation under the tie rule described in the module docs.
pub fn solve_wdp(auction: &Auction) -> Result<Allocation> {
    auction.validate()?;
    // zero-price bids only ever add winners
    let positive: Vec<&Bid> = auction.bids.iter().filter(|b| b.price > 0.0).collect();
    let bids = undominated(auction.n_goods, &positive);
    let mut winners = Vec::new();
    for component in components(auction.n_goods, &bids) {
        let local: Vec<&Bid> = component.iter().map(|&k| bids[k]).collect();
        winners.extend(Search::new(&local).run());
    }
    winners.sort_unstable();
    let by_id: std::collections::HashMap<usize, f64> =
        auction.bids.iter().map(|b| (b.id, b.price)).collect();
    let revenue = winners.iter().map(|id| by_id[id]).sum();
    Ok(Allocation { winners, revenue })
}

/// Drops every bid `c` for which some non-empty bid `d` asks for a subset of
/// its goods and pays more, or pays the same with a smaller id. Swapping `c`
/// for `d` in any allocation is then feasible and preferred, so the winners
/// are unchanged.
fn undominated<'a>(n_goods: usize, bids: &[&'a Bid]) -> Vec<&'a Bid> {
    let words = n_goods.div_ceil(64);
    let masks: Vec<Vec<u64>> = bids
        .iter()
        .map(|b| {
            let mut m = vec![0u64; words];
            b.bundle.iter().for_each(|&g| m[g / 64] |= 1 << (g % 64));
            m
        })
        .collect();
    let dominates = |d: usize, c: usize| {
        let (bd, bc) = (bids[d], bids[c]);
        !bd.bundle.is_empty()
            && (bd.price > bc.price || (bd.price == bc.price && bd.id < bc.id))
            && bd.bundle.len() <= bc.bundle.len()
            && masks[d].iter().zip(&masks[c]).all(|(x, y)| x & !y == 0)
    };
    (0..bids.len())
        .filter(|&c| !(0..bids.len()).any(|d| d != c && dominates(d, c)))
        .map(|c| bids[c])
        .collect()
}

/// Groups bid indices whose bundles are connected through shared goods.
fn components(n_goods: usize, bids: &[&Bid]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..bids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_goods];
    for (k, b) in bids.iter().enumerate() {
        for &g in &b.bundle {
            match owner[g] {
                None => owner[g] = Some(k),
                Some(o) => {
                    let (ra, rb) = (find(&mut parent, o), find(&mut parent, k));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..bids.len() {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(k);
    }
    groups.into_values().collect()
}

struct SearchBid {
    id: usize,
    price: f64,
    density: f64,
    goods: Vec<usize>,
}

/// Best allocation of a set of live bids: maximal revenue, then fewest
/// winners.
#[derive(Debug, Clone)]
struct Best {
    revenue: f64,
    count: usize,
    bids: Vec<usize>,
}

impl Best {
    /// Meets a floor of the form used by [`Search::optimum_beating`].
    fn beaten_by_floor(&self, revenue: f64, count: usize) -> bool {
        self.revenue >= revenue - Search::slack(revenue) && self.count <= count
    }

    /// Strictly better in revenue, or equal within `slack` with fewer bids.
    fn beaten_by(&self, revenue: f64, count: usize, slack: f64) -> bool {
        revenue > self.revenue + slack
            || (revenue >= self.revenue - slack && count < self.count)
    }
}

/// A packing under local search.
#[derive(Clone)]
struct Packing<'a> {
    search: &'a Search,
    owner: Vec<usize>,
    winning: Vec<bool>,
    /// Owned goods per bid; a bid fits when this is zero.
    cover: Vec<u32>,
    revenue: f64,
}

impl<'a> Packing<'a> {
    fn new(search: &'a Search) -> Self {
        Self {
            search,
            owner: vec![usize::MAX; search.by_good.len()],
            winning: vec![false; search.bids.len()],
            cover: vec![0; search.bids.len()],
            revenue: 0.0,
        }
    }

    fn add(&mut self, k: usize) {
        let s = self.search;
        self.winning[k] = true;
        self.revenue += s.bids[k].price;
        for &g in s.goods(k) {
            self.owner[g] = k;
            s.by_good[g].iter().for_each(|&q| self.cover[q] += 1);
        }
    }

    /// Drops winner `k`; bids that fit afterwards go to `fits`.
    fn remove(&mut self, k: usize, fits: &mut Vec<usize>) {
        let s = self.search;
        self.winning[k] = false;
        self.revenue -= s.bids[k].price;
        for &g in s.goods(k) {
            self.owner[g] = usize::MAX;
            for &q in &s.by_good[g] {
                self.cover[q] -= 1;
                if self.cover[q] == 0 {
                    fits.push(q);
                }
            }
        }
    }

    /// Applies improving moves until none is left, revisiting only bids on
    /// goods that changed hands.
    fn climb(&mut self, goods: Vec<usize>) {
        let s = self.search;
        let mut queued = vec![false; s.bids.len()];
        let mut queue = VecDeque::new();
        let push = |goods: &[usize], queued: &mut [bool], queue: &mut VecDeque<usize>| {
            for &g in goods {
                for &k in &s.by_good[g] {
                    if !queued[k] {
                        queued[k] = true;
                        queue.push_back(k);
                    }
                }
            }
        };
        push(&goods, &mut queued, &mut queue);
        let mut touched = Vec::new();
        while let Some(k) = queue.pop_front() {
            queued[k] = false;
            if self.winning[k] {
                continue;
            }
            touched.clear();
            if self.insert(k, true, &mut touched) {
                push(&touched, &mut queued, &mut queue);
            }
        }
    }

    /// Puts bid `k` in, evicting its conflicts and refilling the freed goods
    /// greedily; the goods that changed hands go to `touched`. With
    /// `only_gain`, a move that does not gain is undone. Reports whether
    /// the move was kept.
    fn insert(&mut self, k: usize, only_gain: bool, touched: &mut Vec<usize>) -> bool {
        let s = self.search;
        let mine = s.goods(k);
        let mut evicted: Vec<usize> = mine.iter().map(|&g| self.owner[g]).filter(|&q| q != usize::MAX).collect();
        evicted.sort_unstable();
        evicted.dedup();
        let before = self.revenue;
        if only_gain {
            // the refill can at best pay the top density on each freed good
            let reach: f64 = evicted
                .iter()
                .flat_map(|&q| s.goods(q).iter())
                .filter(|g| mine.binary_search(g).is_err())
                .map(|&g| s.bids[s.by_good[g][0]].density)
                .sum();
            let loss: f64 = evicted.iter().map(|&q| s.bids[q].price).sum();
            if s.bids[k].price - loss + reach <= Search::slack(before) {
                return false;
            }
        }
        let mut fits = Vec::new();
        evicted.iter().for_each(|&q| self.remove(q, &mut fits));
        self.add(k);
        // bids are stored densest first
        fits.sort_unstable();
        fits.dedup();
        let mut added = Vec::new();
        for q in fits {
            if self.cover[q] == 0 && !self.winning[q] {
                self.add(q);
                added.push(q);
            }
        }
        if only_gain && self.revenue <= before + Search::slack(before) {
            let mut scratch = Vec::new();
            added.into_iter().chain([k]).for_each(|q| self.remove(q, &mut scratch));
            evicted.iter().for_each(|&q| self.add(q));
            self.revenue = before;
            return false;
        }
        touched.extend(mine);
        evicted.iter().for_each(|&q| touched.extend(s.goods(q)));
        true
    }
}

/// Branch and bound on one conflict component, in the style of CASS.
///
/// Each node takes the open good with the largest multiplier and branches
/// on which live bid gets it, or on leaving it unallocated. Nodes are
/// pruned by a Lagrangian bound, optionally capped in winner count for the
/// tie rule, and bids that cannot reach the incumbent are fixed out by
/// their reduced prices. Large components start from the LP relaxation,
/// whose rounding local search improves into an incumbent. Whenever the live
/// bids fall apart into independent groups, each group is solved on its own
/// and the result cached by its bid set. Tie-breaking by revenue, then
/// winner count, then lexicographic ids is compatible with this split: all
/// three compose across independent groups.
struct Search {
    bids: Vec<SearchBid>,
    by_good: Vec<Vec<usize>>,
    /// Reasons a bid cannot be chosen; live when zero.
    blocked: Vec<u32>,
    /// Good allocated or closed.
    taken: Vec<bool>,
    /// Live bids per good.
    live: Vec<u32>,
    memo: HashMap<Vec<usize>, Best>,
    lambda: Vec<f64>,
    y: Vec<f64>,
    live_bids: Vec<usize>,
    open: Vec<usize>,
    // union-find scratch over goods
    parent: Vec<usize>,
    /// All prices are whole numbers, so bounds may be rounded down.
    integral: bool,
    /// A packing rounded from the LP relaxation; any live part of it is a
    /// valid incumbent.
    hint: Option<Vec<usize>>,
}

/// Components at least this large start from the LP relaxation.
const LP_MIN_BIDS: usize = 100;

/// Subgradient steps for the bound before anything is chosen, and after.
const ROOT_ITERS: usize = 200;
const NODE_ITERS: usize = 50;

/// Random restarts of the local search that seeds large components.
const KICKS: usize = 20;

impl Search {
    fn new(bids: &[&Bid]) -> Self {
        let mut goods: Vec<usize> = bids.iter().flat_map(|b| b.bundle.iter().copied()).collect();
        goods.sort_unstable();
        goods.dedup();
        let n_goods = goods.len();
        let mut sb: Vec<SearchBid> = bids
            .iter()
            .map(|b| SearchBid {
                id: b.id,
                price: b.price,
                density: b.density(),
                goods: b.bundle.iter().map(|x| goods.binary_search(x).expect("own good")).collect(),
            })
            .collect();
        // affects speed only
        sb.sort_by(|x, y| {
            y.density
                .total_cmp(&x.density)
                .then(y.price.total_cmp(&x.price))
                .then(x.id.cmp(&y.id))
        });
        let mut by_good = vec![Vec::new(); n_goods];
        for (k, b) in sb.iter().enumerate() {
            b.goods.iter().for_each(|&g| by_good[g].push(k));
        }
        let live = by_good.iter().map(|v| v.len() as u32).collect();
        let n_bids = sb.len();
        let total: f64 = sb.iter().map(|b| b.price).sum();
        let integral = total < 2f64.powi(50) && sb.iter().all(|b| b.price.fract() == 0.0);
        Self {
            integral,
            hint: None,
            bids: sb,
            by_good,
            blocked: vec![0; n_bids],
            taken: vec![false; n_goods],
            live,
            memo: HashMap::new(),
            lambda: vec![0.0; n_goods],
            y: vec![0.0; n_goods],
            live_bids: Vec::new(),
            open: Vec::new(),
            parent: (0..n_goods).collect(),
        }
    }

    fn goods(&self, k: usize) -> &[usize] {
        &self.bids[k].goods
    }

    fn revenue(&self, chosen: &[usize]) -> f64 {
        chosen.iter().map(|&k| self.bids[k].price).sum()
    }

    fn slack(scale: f64) -> f64 {
        1e-9 * scale.abs().max(1.0)
    }

    fn run(mut self) -> Vec<usize> {
        let all: Vec<usize> = (0..self.bids.len()).collect();
        if self.bids.len() >= LP_MIN_BIDS {
            self.warm_start();
        }
        let best = self.optimum(&all);
        let mut ids = self.lexicographic_fix(&all, best);
        ids.sort_unstable();
        ids
    }

    fn live_now(&self) -> Vec<usize> {
        (0..self.bids.len()).filter(|&k| self.blocked[k] == 0).collect()
    }

    /// Optimum over exactly the bids in `set`, which must all be live.
    /// Live bids outside `set` are blocked for the duration.
    fn optimum(&mut self, set: &[usize]) -> Best {
        self.optimum_beating(set, None).expect("unbounded search succeeds")
    }

    /// Like [`Search::optimum`], but with a `floor = (revenue, count)` only
    /// an allocation with at least that revenue and at most that many
    /// winners counts; `None` when there is none.
    fn optimum_beating(&mut self, set: &[usize], floor: Option<(f64, usize)>) -> Option<Best> {
        if let Some(b) = self.memo.get(set) {
            let ok = floor.is_none_or(|(r, c)| b.revenue >= r - Self::slack(r) && b.count <= c);
            return ok.then(|| b.clone());
        }
        let others: Vec<usize> = {
            let mut inside = vec![false; self.bids.len()];
            set.iter().for_each(|&k| inside[k] = true);
            self.live_now().into_iter().filter(|&k| !inside[k]).collect()
        };
        others.iter().for_each(|&k| self.block(k));
        let best = self.solve_live(floor);
        others.iter().for_each(|&k| self.unblock(k));
        if let Some(b) = &best {
            self.memo.insert(set.to_vec(), b.clone());
        }
        best
    }

    /// Optimum over the currently live bids.
    fn solve_live(&mut self, floor: Option<(f64, usize)>) -> Option<Best> {
        let groups = self.live_groups();
        if groups.len() > 1 {
            let total = self.combine(&groups);
            let ok = floor.is_none_or(|(r, c)| total.revenue >= r - Self::slack(r) && total.count <= c);
            return ok.then_some(total);
        }
        // incumbent: best of a density greedy, a reduced-price greedy under
        // the current multipliers and the live part of the LP rounding
        let mut order = self.live_now();
        let mut greedy = self.greedy(&order);
        let reduced: Vec<f64> = (0..self.bids.len())
            .map(|k| self.bids[k].price - self.bids[k].goods.iter().map(|&g| self.lambda[g]).sum::<f64>())
            .collect();
        order.sort_by(|&x, &y| reduced[y].total_cmp(&reduced[x]).then(x.cmp(&y)));
        let mut others = vec![self.greedy(&order)];
        if let Some(hint) = &self.hint {
            let live: Vec<usize> = hint.iter().copied().filter(|&k| self.blocked[k] == 0).collect();
            others.push(Best { revenue: self.revenue(&live), count: live.len(), bids: live });
        }
        for other in others {
            if greedy.beaten_by(other.revenue, other.count, Self::slack(greedy.revenue)) {
                greedy = other;
            }
        }
        // a floor acts as a virtual incumbent that only a qualifying
        // allocation can beat
        let (mut best, real) = match floor {
            Some((r, c)) if !greedy.beaten_by_floor(r, c) => {
                (Best { revenue: r, count: c + 1, bids: Vec::new() }, false)
            }
            _ => (greedy, true),
        };
        let mut chosen = Vec::new();
        let before = (best.revenue, best.count);
        self.descend(0.0, &mut chosen, &mut best);
        (real || (best.revenue, best.count) != before).then_some(best)
    }

    /// Solves the LP relaxation, improves its greedy rounding by local
    /// search into a hint and tunes the multipliers towards the LP optimum,
    /// which is the exact target of the subgradient steps.
    fn warm_start(&mut self) {
        let Some((objective, x)) = self.relaxation() else {
            return;
        };
        let mut order: Vec<usize> = (0..self.bids.len()).collect();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let rounded = self.greedy(&order).bids;
        self.hint = Some(self.local_search(rounded, self.round(objective)));
        self.bound(objective, ROOT_ITERS, None);
    }

    fn relaxation(&self) -> Option<(f64, Vec<f64>)> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Variable> = self.bids.iter().map(|b| lp.add_var(b.price, (0.0, 1.0))).collect();
        for bids in &self.by_good {
            let row: Vec<(Variable, f64)> = bids.iter().map(|&k| (vars[k], 1.0)).collect();
            lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0);
        }
        let solution = lp.solve().ok()?.into_solution().ok()?;
        Some((solution.objective(), vars.iter().map(|&v| solution.var_value(v)).collect()))
    }

    /// Iterated local search from the packing `start`. A move puts one
    /// losing bid in, drops the winners it conflicts with and refills the
    /// freed goods by density; kicks force random losers in. Stops early
    /// once the revenue reaches `bound`.
    fn local_search(&self, start: Vec<usize>, bound: f64) -> Vec<usize> {
        let mut cur = Packing::new(self);
        start.iter().for_each(|&k| cur.add(k));
        let all: Vec<usize> = (0..self.by_good.len()).collect();
        let done = |p: &Packing| p.revenue >= bound - Self::slack(bound);
        if !done(&cur) {
            cur.climb(all);
        }
        let mut best = cur.clone();
        let mut rng = crate::rng::stream(0, &[]);
        for _ in 0..KICKS {
            if done(&best) {
                break;
            }
            let k = rng.random_range(0..self.bids.len());
            if cur.winning[k] {
                continue;
            }
            let mut next = cur.clone();
            let mut touched = Vec::new();
            next.insert(k, false, &mut touched);
            next.climb(touched);
            if next.revenue >= cur.revenue - Self::slack(cur.revenue) {
                cur = next;
                if cur.revenue > best.revenue + Self::slack(best.revenue) {
                    best = cur.clone();
                }
            }
        }
        (0..self.bids.len()).filter(|&k| best.winning[k]).collect()
    }

    /// Takes every bid of `order` that is still live when reached.
    fn greedy(&mut self, order: &[usize]) -> Best {
        let mut taken = Vec::new();
        for &k in order {
            if self.blocked[k] == 0 {
                self.take(k);
                taken.push(k);
            }
        }
        for &k in taken.iter().rev() {
            self.untake(k);
        }
        Best { revenue: self.revenue(&taken), count: taken.len(), bids: taken }
    }

    fn combine(&mut self, groups: &[Vec<usize>]) -> Best {
        let mut total = Best { revenue: 0.0, count: 0, bids: Vec::new() };
        for g in groups {
            let b = self.optimum(g);
            total.revenue += b.revenue;
            total.count += b.count;
            total.bids.extend(b.bids);
        }
        total
    }

    /// Live bids grouped by shared open goods; each group sorted.
    fn live_groups(&mut self) -> Vec<Vec<usize>> {
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let live = self.live_now();
        for &k in &live {
            self.bids[k].goods.iter().for_each(|&g| self.parent[g] = g);
        }
        for &k in &live {
            let goods = &self.bids[k].goods;
            let r0 = find(&mut self.parent, goods[0]);
            for &g in &goods[1..] {
                let r = find(&mut self.parent, g);
                if r != r0 {
                    self.parent[r] = r0;
                }
            }
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for &k in &live {
            let r = find(&mut self.parent, self.bids[k].goods[0]);
            let i = *slot.entry(r).or_insert_with(|| {
                groups.push((r, Vec::new()));
                groups.len() - 1
            });
            groups[i].1.push(k);
        }
        groups.into_iter().map(|(_, v)| v).collect()
    }

    /// Among the optimal allocations of `set` (revenue and count as in
    /// `best`), the one with the lexicographically smallest sorted ids.
    /// Walks ids upwards and keeps an id whenever an optimal allocation
    /// agrees with the choices so far and contains it.
    fn lexicographic_fix(&mut self, set: &[usize], best: Best) -> Vec<usize> {
        let groups = {
            let others: Vec<usize> = {
                let mut inside = vec![false; self.bids.len()];
                set.iter().for_each(|&k| inside[k] = true);
                self.live_now().into_iter().filter(|&k| !inside[k]).collect()
            };
            others.iter().for_each(|&k| self.block(k));
            let g = self.live_groups();
            others.iter().for_each(|&k| self.unblock(k));
            g
        };
        if groups.len() > 1 {
            return groups
                .iter()
                .flat_map(|g| {
                    let b = self.optimum(g);
                    self.lexicographic_fix(g, b)
                })
                .collect();
        }
        let target = best.revenue;
        let count = best.count;
        let slack = Self::slack(target);
        let mut witness: HashSet<usize> = best.bids.into_iter().collect();
        let mut order = set.to_vec();
        order.sort_by_key(|&k| self.bids[k].id);
        let others: Vec<usize> = {
            let mut inside = vec![false; self.bids.len()];
            set.iter().for_each(|&k| inside[k] = true);
            self.live_now().into_iter().filter(|&k| !inside[k]).collect()
        };
        others.iter().for_each(|&k| self.block(k));
        // bids outside every optimum need no probing
        self.bound(target, ROOT_ITERS, None);
        let useless = self.fix_by_reduced_price(target - slack);
        let mut prefix: Vec<usize> = Vec::new();
        let mut excluded: Vec<usize> = Vec::new();
        for k in order {
            if prefix.len() == count {
                break;
            }
            if self.blocked[k] > 0 {
                continue;
            }
            self.take(k);
            prefix.push(k);
            if witness.contains(&k) {
                continue;
            }
            let rest = self.live_now();
            let floor = (target - self.revenue(&prefix), count - prefix.len());
            let sub = if rest.is_empty() {
                (floor.0 <= slack).then(|| Best { revenue: 0.0, count: 0, bids: Vec::new() })
            } else {
                self.optimum_beating(&rest, Some(floor))
            };
            if let Some(sub) = sub {
                witness = prefix.iter().chain(&sub.bids).copied().collect();
            } else {
                prefix.pop();
                self.untake(k);
                self.block(k);
                excluded.push(k);
            }
        }
        for &k in prefix.iter().rev() {
            self.untake(k);
        }
        excluded.iter().for_each(|&k| self.unblock(k));
        useless.iter().for_each(|&k| self.unblock(k));
        others.iter().for_each(|&k| self.unblock(k));
        witness.into_iter().map(|k| self.bids[k].id).collect()
    }

    fn block(&mut self, k: usize) {
        self.blocked[k] += 1;
        if self.blocked[k] == 1 {
            for &g in &self.bids[k].goods {
                self.live[g] -= 1;
            }
        }
    }

    fn unblock(&mut self, k: usize) {
        self.blocked[k] -= 1;
        if self.blocked[k] == 0 {
            for &g in &self.bids[k].goods {
                self.live[g] += 1;
            }
        }
    }

    fn close(&mut self, g: usize) {
        self.taken[g] = true;
        for i in 0..self.by_good[g].len() {
            self.block(self.by_good[g][i]);
        }
    }

    fn reopen(&mut self, g: usize) {
        self.taken[g] = false;
        for i in 0..self.by_good[g].len() {
            self.unblock(self.by_good[g][i]);
        }
    }

    fn take(&mut self, k: usize) {
        for i in 0..self.bids[k].goods.len() {
            self.close(self.bids[k].goods[i]);
        }
    }

    fn untake(&mut self, k: usize) {
        for i in (0..self.bids[k].goods.len()).rev() {
            self.reopen(self.bids[k].goods[i]);
        }
    }

    /// Upper bound on what the live bids can still collect using at most
    /// `cap` more winners, stopping early once it drops to `need`.
    ///
    /// Starts from the density bound (and, under a cap, the `cap` best
    /// prices), then runs subgradient steps on the Lagrangian relaxation of
    /// the one-bid-per-good constraints and the cap:
    /// `L(l, m) = sum_g l_g + m cap + sum_b max(0, p_b - sum_{g in b} l_g - m)`
    /// bounds the LP relaxation, hence every packing, for any `l, m >= 0`.
    /// The good multipliers persist between nodes as a warm start.
    fn bound(&mut self, need: f64, iters: usize, cap: Option<usize>) -> f64 {
        self.live_bids.clear();
        self.open.clear();
        for g in 0..self.taken.len() {
            if !self.taken[g] && self.live[g] > 0 {
                self.open.push(g);
            }
            self.y[g] = 0.0;
        }
        for k in 0..self.bids.len() {
            if self.blocked[k] == 0 {
                self.live_bids.push(k);
                let b = &self.bids[k];
                b.goods.iter().for_each(|&g| self.y[g] = self.y[g].max(b.density));
            }
        }
        let mut best: f64 = self.open.iter().map(|&g| self.y[g]).sum();
        if let Some(cap) = cap {
            let mut prices: Vec<f64> = self.live_bids.iter().map(|&k| self.bids[k].price).collect();
            prices.sort_by(|x, y| y.total_cmp(x));
            best = best.min(prices.iter().take(cap).sum());
        }
        let (mut theta, mut stale, mut mu) = (1.0, 0, 0.0);
        for _ in 0..iters {
            if self.round(best) <= need {
                break;
            }
            let mut l: f64 = self.open.iter().map(|&g| self.lambda[g]).sum();
            self.open.iter().for_each(|&g| self.y[g] = 1.0);
            let mut y_mu = 0.0;
            if let Some(cap) = cap {
                l += mu * cap as f64;
                y_mu = cap as f64;
            }
            for &k in &self.live_bids {
                let b = &self.bids[k];
                let reduced = b.price - b.goods.iter().map(|&g| self.lambda[g]).sum::<f64>() - mu;
                if reduced > 0.0 {
                    l += reduced;
                    b.goods.iter().for_each(|&g| self.y[g] -= 1.0);
                    y_mu -= 1.0;
                }
            }
            if l < best {
                best = l;
                stale = 0;
            } else {
                stale += 1;
                if stale >= 3 {
                    theta *= 0.5;
                    stale = 0;
                }
            }
            let y_mu = if cap.is_some() { y_mu } else { 0.0 };
            let norm: f64 = self.open.iter().map(|&g| self.y[g] * self.y[g]).sum::<f64>() + y_mu * y_mu;
            if norm == 0.0 {
                break;
            }
            let step = theta * (l - need).max(0.0) / norm;
            for &g in &self.open {
                self.lambda[g] = (self.lambda[g] - step * self.y[g]).max(0.0);
            }
            mu = (mu - step * y_mu).max(0.0);
        }
        self.round(best)
    }

    /// Pads a relaxation value for rounding error in the reduced costs, then
    /// drops the fractional part when only whole revenues are possible.
    fn round(&self, bound: f64) -> f64 {
        let padded = bound * (1.0 + 1e-12) + 1e-9;
        if self.integral {
            padded.floor()
        } else {
            padded
        }
    }

    fn leaf(revenue: f64, chosen: &[usize], best: &mut Best) {
        if best.beaten_by(revenue, chosen.len(), Self::slack(best.revenue)) {
            *best = Best { revenue, count: chosen.len(), bids: chosen.to_vec() };
        }
    }

    /// Blocks every live bid that no allocation reaching `need` can contain:
    /// for multipliers `l`, a packing holding bid `b` collects at most
    /// `L(l) + min(0, reduced price of b)`.
    fn fix_by_reduced_price(&mut self, need: f64) -> Vec<usize> {
        let reduced: Vec<(usize, f64)> = (0..self.bids.len())
            .filter(|&k| self.blocked[k] == 0)
            .map(|k| {
                let b = &self.bids[k];
                (k, b.price - b.goods.iter().map(|&g| self.lambda[g]).sum::<f64>())
            })
            .collect();
        let l: f64 = (0..self.taken.len())
            .filter(|&g| !self.taken[g] && self.live[g] > 0)
            .map(|g| self.lambda[g])
            .sum::<f64>()
            + reduced.iter().map(|&(_, r)| r.max(0.0)).sum::<f64>();
        let fixed: Vec<usize> =
            reduced.into_iter().filter(|&(_, r)| self.round(l + r.min(0.0)) < need).map(|(k, _)| k).collect();
        fixed.iter().for_each(|&k| self.block(k));
        fixed
    }

    fn open_goods(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.taken.len()).filter(|&g| !self.taken[g] && self.live[g] > 0)
    }

    fn descend(&mut self, revenue: f64, chosen: &mut Vec<usize>, best: &mut Best) {
        if self.open_goods().next().is_none() {
            return Self::leaf(revenue, chosen, best);
        }
        let slack = Self::slack(best.revenue);
        let iters = if chosen.is_empty() { ROOT_ITERS } else { NODE_ITERS };
        // still needed to match the incumbent revenue
        let tie = best.revenue - revenue;
        if self.bound(tie + slack, iters, None) <= tie + slack {
            // no strictly better revenue below; a tie helps only with fewer winners
            if chosen.len() + usize::from(tie > slack) >= best.count {
                return;
            }
            let cap = best.count - 1 - chosen.len();
            if self.bound(tie - slack, iters, Some(cap)) < tie - slack {
                return;
            }
        }
        let fixed = self.fix_by_reduced_price(tie - slack);
        self.expand(revenue, chosen, best);
        fixed.iter().for_each(|&k| self.unblock(k));
    }

    fn expand(&mut self, revenue: f64, chosen: &mut Vec<usize>, best: &mut Best) {
        // branch on the most contested open good under the current multipliers
        let pick = self
            .open_goods()
            .max_by(|&a, &b| self.lambda[a].total_cmp(&self.lambda[b]).then(b.cmp(&a)));
        let Some(g) = pick else {
            return Self::leaf(revenue, chosen, best);
        };
        let mut groups = self.live_groups();
        if groups.len() > 1 {
            // settle the smaller groups exactly, keep branching on the largest
            let largest = (0..groups.len()).max_by_key(|&i| (groups[i].len(), usize::MAX - i)).unwrap_or(0);
            groups.swap_remove(largest);
            let mark = chosen.len();
            let mut extra = 0.0;
            for group in &groups {
                let b = self.optimum(group);
                extra += b.revenue;
                chosen.extend(b.bids);
            }
            let rest: Vec<usize> = groups.concat();
            rest.iter().for_each(|&k| self.block(k));
            self.descend(revenue + extra, chosen, best);
            rest.iter().for_each(|&k| self.unblock(k));
            chosen.truncate(mark);
            return;
        }
        let branches: Vec<usize> =
            self.by_good[g].iter().copied().filter(|&k| self.blocked[k] == 0).collect();
        for k in branches {
            self.take(k);
            chosen.push(k);
            self.descend(revenue + self.bids[k].price, chosen, best);
            chosen.pop();
            self.untake(k);
        }
        self.close(g);
        self.descend(revenue, chosen, best);
        self.reopen(g);
    }
}
