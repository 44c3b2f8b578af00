//! Global minimization of `T(E) = P(E) + W_p(E)` at fixed volume.
//!
//! The annealer runs a Metropolis chain over two volume-preserving moves:
//! a boundary swap (remove one boundary cell, add one empty cell face-adjacent
//! to the set) and a teleport (relocate one boundary cell to a uniformly
//! random empty cell of the working window, which lets components split and
//! merge). Perimeter deltas are exact and incremental. Transport deltas
//! between checkpoints come from freezing the current plan and re-routing
//! only the displaced cell's mass to its
//! cheapest currently unused sink, which keeps the running value a true upper
//! bound on `W_p`; every `w_recompute_period` proposals the exact solver is
//! re-run and all best-set bookkeeping uses those certified values only.
//!
//! The one-dimensional oracle builds `k` equal intervals with wide gaps and
//! evaluates their energy in closed form via monotone transport, giving an
//! independent reference for the `d = 1` ground truth.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{Cell, GeometryError, LatticeSet};
use crate::math;
use crate::reduction::{self, ReductionError};
use crate::transport::{self, TransportError};

/// Fraction of proposals that are teleports rather than boundary swaps.
pub const DEFAULT_TELEPORT_PROB: f64 = 0.2;

/// Errors from the search harness.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    Geometry(GeometryError),
    Transport(TransportError),
    /// Configuration field out of range.
    BadConfig(&'static str),
    /// The working window would have to grow past its hard cap.
    WindowExhausted { radius_cells: i64 },
    /// Initial set volume differs from the configured volume by more than
    /// one cell.
    VolumeMismatch { expected_cells: usize, got_cells: usize },
}

impl core::fmt::Display for SearchError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SearchError::Geometry(e) => write!(f, "{e}"),
            SearchError::Transport(e) => write!(f, "{e}"),
            SearchError::BadConfig(msg) => write!(f, "bad configuration: {msg}"),
            SearchError::WindowExhausted { radius_cells } => {
                write!(f, "working window exhausted at radius {radius_cells} cells")
            }
            SearchError::VolumeMismatch {
                expected_cells,
                got_cells,
            } => write!(
                f,
                "initial set has {got_cells} cells, configuration asks for {expected_cells}"
            ),
        }
    }
}

impl core::error::Error for SearchError {}

impl From<GeometryError> for SearchError {
    fn from(e: GeometryError) -> Self {
        SearchError::Geometry(e)
    }
}

impl From<TransportError> for SearchError {
    fn from(e: TransportError) -> Self {
        SearchError::Transport(e)
    }
}

impl From<ReductionError> for SearchError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Geometry(g) => SearchError::Geometry(g),
            ReductionError::Transport(t) => SearchError::Transport(t),
            _ => SearchError::BadConfig("energy evaluation rejected its input"),
        }
    }
}

/// Annealing schedule and problem parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnealConfig {
    pub p: f64,
    pub d: usize,
    /// Prescribed volume; the initial set must match within one cell.
    pub m: f64,
    pub h: f64,
    /// Proposals per temperature step; zero turns the run into a single
    /// exact evaluation of the initial set.
    pub moves_per_temp: usize,
    pub temp_initial: f64,
    /// Multiplicative cooling factor, strictly inside `(0, 1)`.
    pub temp_decay: f64,
    /// Proposals between exact re-solves of the transport problem.
    pub w_recompute_period: usize,
    pub seed: u64,
    pub max_temps: usize,
    /// Probability that a proposal is a teleport instead of a boundary swap.
    pub teleport_prob: f64,
}

impl AnnealConfig {
    /// Schedule defaults tuned for desk-scale sets (hundreds of cells).
    pub fn desk(p: f64, d: usize, m: f64, h: f64) -> Self {
        AnnealConfig {
            p,
            d,
            m,
            h,
            moves_per_temp: 300,
            temp_initial: 2.0 * math::powf(h, d as f64 - 1.0),
            temp_decay: 0.9,
            w_recompute_period: 100,
            seed: 0,
            max_temps: 30,
            teleport_prob: DEFAULT_TELEPORT_PROB,
        }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(SearchError::BadConfig("p must be finite and at least 1"));
        }
        if !(1..=3).contains(&self.d) {
            return Err(SearchError::BadConfig("d must be 1, 2, or 3"));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(SearchError::BadConfig("m must be positive"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SearchError::BadConfig("h must be positive"));
        }
        if !(self.temp_initial >= 0.0 && self.temp_initial.is_finite()) {
            return Err(SearchError::BadConfig("temp_initial must be non-negative"));
        }
        if !(self.temp_decay > 0.0 && self.temp_decay < 1.0) {
            return Err(SearchError::BadConfig("temp_decay must lie in (0, 1)"));
        }
        if self.w_recompute_period == 0 {
            return Err(SearchError::BadConfig("w_recompute_period must be positive"));
        }
        if self.max_temps == 0 {
            return Err(SearchError::BadConfig("max_temps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.teleport_prob) {
            return Err(SearchError::BadConfig("teleport_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-temperature chain statistics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TempRecord {
    pub temperature: f64,
    /// Best exactly-evaluated energy seen so far; non-increasing across
    /// records.
    pub best_t: f64,
    /// Estimated energy of the current state at the end of the step
    /// (exact perimeter plus the frozen-plan transport upper bound).
    pub current_t: f64,
    pub acceptance_rate: f64,
    /// Exact `W_p` at each checkpoint inside this temperature step.
    pub checkpoint_ws: Vec<f64>,
    /// Exact `T` at the same checkpoints.
    pub checkpoint_ts: Vec<f64>,
}

/// Full annealing trace; the best set itself is returned alongside.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchTrace {
    pub records: Vec<TempRecord>,
    pub final_best_t: f64,
    /// Filled by callers that can read a clock; the chain itself never
    /// consults one, so traces stay reproducible.
    pub wall_time_secs: Option<f64>,
}

fn neighbor(c: Cell, axis: usize, step: i64) -> Cell {
    let mut n = c;
    n[axis] += step;
    n
}

/// Visit the Chebyshev shell of radius `r` around `c` (all cells at
/// max-norm exactly `r` on the first `d` axes).
fn for_shell(d: usize, c: Cell, r: i64, mut f: impl FnMut(Cell)) {
    if r == 0 {
        f(c);
        return;
    }
    match d {
        1 => {
            f([c[0] - r, c[1], c[2]]);
            f([c[0] + r, c[1], c[2]]);
        }
        2 => {
            for dx in -r..=r {
                f([c[0] + dx, c[1] - r, c[2]]);
                f([c[0] + dx, c[1] + r, c[2]]);
            }
            for dy in (-r + 1)..=(r - 1) {
                f([c[0] - r, c[1] + dy, c[2]]);
                f([c[0] + r, c[1] + dy, c[2]]);
            }
        }
        _ => {
            for dx in -r..=r {
                for dy in -r..=r {
                    f([c[0] + dx, c[1] + dy, c[2] - r]);
                    f([c[0] + dx, c[1] + dy, c[2] + r]);
                }
            }
            for dz in (-r + 1)..=(r - 1) {
                for dx in -r..=r {
                    f([c[0] + dx, c[1] - r, c[2] + dz]);
                    f([c[0] + dx, c[1] + r, c[2] + dz]);
                }
                for dy in (-r + 1)..=(r - 1) {
                    f([c[0] - r, c[1] + dy, c[2] + dz]);
                    f([c[0] + r, c[1] + dy, c[2] + dz]);
                }
            }
        }
    }
}

/// Metropolis chain state: indexed occupancy for O(1) sampling plus the
/// frozen transport plan.
struct Chain {
    d: usize,
    h: f64,
    p: f64,
    mass: f64,
    cells: Vec<Cell>,
    index: alloc::collections::BTreeMap<Cell, usize>,
    /// Frozen plan: source cell to its sink cell.
    plan: alloc::collections::BTreeMap<Cell, Cell>,
    /// Reverse map: sink cell to the source it serves.
    owner: alloc::collections::BTreeMap<Cell, Cell>,
    /// Count of exposed faces (each counted once from its occupied side).
    faces: i64,
    /// Frozen-plan cost `sum mass * |dx|^p`.
    est_cost: f64,
    /// Working window, grown on demand.
    box_lo: [i64; 3],
    box_hi: [i64; 3],
    /// Absolute bound on window coordinates; growth past it is an error.
    hard_lo: [i64; 3],
    hard_hi: [i64; 3],
    /// Sink search gives up past this Chebyshev radius.
    ring_cap: i64,
}

impl Chain {
    fn occupied(&self, c: Cell) -> bool {
        self.index.contains_key(&c)
    }

    fn occupied_neighbors(&self, c: Cell) -> i64 {
        let mut n = 0;
        for axis in 0..self.d {
            if self.occupied(neighbor(c, axis, -1)) {
                n += 1;
            }
            if self.occupied(neighbor(c, axis, 1)) {
                n += 1;
            }
        }
        n
    }

    fn insert_cell(&mut self, c: Cell) {
        self.index.insert(c, self.cells.len());
        self.cells.push(c);
    }

    fn remove_cell(&mut self, c: Cell) {
        let i = self.index.remove(&c).expect("cell present");
        let last = self.cells.pop().expect("non-empty");
        if last != c {
            self.cells[i] = last;
            self.index.insert(last, i);
        }
    }

    fn pair_cost(&self, a: Cell, b: Cell) -> f64 {
        let mut d2 = 0.0;
        for k in 0..self.d {
            let dx = (a[k] - b[k]) as f64;
            d2 += dx * dx;
        }
        let len = math::sqrt(d2) * self.h;
        if self.p == 2.0 {
            self.mass * d2 * self.h * self.h
        } else if self.p == 1.0 {
            self.mass * len
        } else {
            self.mass * math::powf(len, self.p)
        }
    }

    /// Cheapest empty, unused sink cell near `around`, ties broken by cell
    /// order. Expanding Chebyshev shells; a shell at radius `r` cannot beat a
    /// found candidate once `r` exceeds its Euclidean distance.
    fn nearest_free_sink(&self, around: Cell) -> Result<Cell, SearchError> {
        let mut best: Option<(i64, Cell)> = None;
        for r in 0..=self.ring_cap {
            if let Some((bd2, _)) = best {
                if (r * r) as f64 > bd2 as f64 {
                    break;
                }
            }
            for_shell(self.d, around, r, |c| {
                if self.occupied(c) || self.owner.contains_key(&c) {
                    return;
                }
                let mut d2 = 0i64;
                for k in 0..self.d {
                    let dx = c[k] - around[k];
                    d2 += dx * dx;
                }
                if best.is_none_or(|(bd2, bc)| (d2, c) < (bd2, bc)) {
                    best = Some((d2, c));
                }
            });
        }
        match best {
            Some((_, c)) => Ok(c),
            None => Err(SearchError::WindowExhausted {
                radius_cells: self.ring_cap,
            }),
        }
    }

    fn grow_box(&mut self, c: Cell) -> Result<(), SearchError> {
        for k in 0..self.d {
            if c[k] < self.hard_lo[k] || c[k] > self.hard_hi[k] {
                return Err(SearchError::WindowExhausted {
                    radius_cells: self.ring_cap,
                });
            }
            self.box_lo[k] = self.box_lo[k].min(c[k]);
            self.box_hi[k] = self.box_hi[k].max(c[k]);
        }
        Ok(())
    }

    fn estimate_w(&self) -> f64 {
        math::powf(self.est_cost.max(0.0), 1.0 / self.p)
    }

    fn estimate_t(&self) -> f64 {
        self.faces as f64 * math::powf(self.h, self.d as f64 - 1.0) + self.estimate_w()
    }
}

struct MoveUndo {
    removed: Cell,
    removed_sink: Cell,
    added: Cell,
    added_sink: Cell,
    /// Source whose sink was taken over by the added cell, with its new sink.
    displaced: Option<(Cell, Cell)>,
    old_faces: i64,
    old_est_cost: f64,
}

/// Apply a volume-preserving relocation `removed -> added` to the chain,
/// keeping the frozen plan feasible. Returns the undo record.
fn apply_move(chain: &mut Chain, removed: Cell, added: Cell) -> Result<MoveUndo, SearchError> {
    let old_faces = chain.faces;
    let old_est_cost = chain.est_cost;

    let occ_removed = chain.occupied_neighbors(removed);
    chain.remove_cell(removed);
    chain.faces += 2 * occ_removed - 2 * chain.d as i64;
    let occ_added = chain.occupied_neighbors(added);
    chain.insert_cell(added);
    chain.faces += 2 * chain.d as i64 - 2 * occ_added;

    let removed_sink = chain.plan.remove(&removed).expect("plan covers sources");
    chain.owner.remove(&removed_sink);
    chain.est_cost -= chain.pair_cost(removed, removed_sink);

    // a source whose sink is now inside the set must be re-routed too
    let displaced_src = chain.owner.get(&added).copied();
    if let Some(x) = displaced_src {
        chain.plan.remove(&x);
        chain.owner.remove(&added);
        chain.est_cost -= chain.pair_cost(x, added);
    }

    let added_sink = match chain.nearest_free_sink(added) {
        Ok(s) => s,
        Err(e) => {
            // roll the occupancy back before bailing out
            chain.remove_cell(added);
            chain.insert_cell(removed);
            chain.plan.insert(removed, removed_sink);
            chain.owner.insert(removed_sink, removed);
            if let Some(x) = displaced_src {
                chain.plan.insert(x, added);
                chain.owner.insert(added, x);
            }
            chain.faces = old_faces;
            chain.est_cost = old_est_cost;
            return Err(e);
        }
    };
    chain.plan.insert(added, added_sink);
    chain.owner.insert(added_sink, added);
    chain.est_cost += chain.pair_cost(added, added_sink);

    let displaced = match displaced_src {
        None => None,
        Some(x) => {
            let s = match chain.nearest_free_sink(x) {
                Ok(s) => s,
                Err(e) => {
                    chain.plan.remove(&added);
                    chain.owner.remove(&added_sink);
                    chain.remove_cell(added);
                    chain.insert_cell(removed);
                    chain.plan.insert(removed, removed_sink);
                    chain.owner.insert(removed_sink, removed);
                    chain.plan.insert(x, added);
                    chain.owner.insert(added, x);
                    chain.faces = old_faces;
                    chain.est_cost = old_est_cost;
                    return Err(e);
                }
            };
            chain.plan.insert(x, s);
            chain.owner.insert(s, x);
            chain.est_cost += chain.pair_cost(x, s);
            Some((x, s))
        }
    };

    Ok(MoveUndo {
        removed,
        removed_sink,
        added,
        added_sink,
        displaced,
        old_faces,
        old_est_cost,
    })
}

fn revert_move(chain: &mut Chain, undo: MoveUndo) {
    if let Some((x, s)) = undo.displaced {
        chain.plan.remove(&x);
        chain.owner.remove(&s);
        chain.plan.insert(x, undo.added);
        chain.owner.insert(undo.added, x);
    }
    chain.plan.remove(&undo.added);
    chain.owner.remove(&undo.added_sink);
    chain.remove_cell(undo.added);
    chain.insert_cell(undo.removed);
    chain.plan.insert(undo.removed, undo.removed_sink);
    chain.owner.insert(undo.removed_sink, undo.removed);
    chain.faces = undo.old_faces;
    chain.est_cost = undo.old_est_cost;
}

const SAMPLE_TRIES: usize = 64;

/// Anneal from `init` under `cfg`. Returns the best exactly-evaluated set and
/// the trace. Deterministic for a fixed `(init, cfg)`.
pub fn anneal(init: &LatticeSet, cfg: &AnnealConfig) -> Result<(LatticeSet, SearchTrace), SearchError> {
    cfg.validate()?;
    if init.dim() != cfg.d {
        return Err(SearchError::BadConfig("init dimension differs from d"));
    }
    if init.spacing() != cfg.h {
        return Err(SearchError::BadConfig("init spacing differs from h"));
    }
    let expected_cells = math::round(cfg.m / math::powf(cfg.h, cfg.d as f64)) as usize;
    let n = init.cell_count();
    if n == 0 || n.abs_diff(expected_cells) > 1 {
        return Err(SearchError::VolumeMismatch {
            expected_cells,
            got_cells: n,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let twod = 2 * cfg.d as i64;

    // working window: initial bounding box padded by the transport reach,
    // hard-capped at four times that padding
    let reach_cells = math::ceil(transport::window_reach(init, 1.0) / cfg.h) as i64 + 2;
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for c in init.cells() {
        for k in 0..cfg.d {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let mut chain = Chain {
        d: cfg.d,
        h: cfg.h,
        p: cfg.p,
        mass: math::powf(cfg.h, cfg.d as f64),
        cells: Vec::new(),
        index: alloc::collections::BTreeMap::new(),
        plan: alloc::collections::BTreeMap::new(),
        owner: alloc::collections::BTreeMap::new(),
        faces: 0,
        est_cost: 0.0,
        box_lo: core::array::from_fn(|k| if k < cfg.d { lo[k] - reach_cells } else { 0 }),
        box_hi: core::array::from_fn(|k| if k < cfg.d { hi[k] + reach_cells } else { 0 }),
        hard_lo: core::array::from_fn(|k| if k < cfg.d { lo[k] - 4 * reach_cells } else { 0 }),
        hard_hi: core::array::from_fn(|k| if k < cfg.d { hi[k] + 4 * reach_cells } else { 0 }),
        ring_cap: 4 * reach_cells,
    };
    for c in init.cells() {
        chain.insert_cell(c);
    }
    let mut faces = 0i64;
    for c in init.cells() {
        faces += twod - chain.occupied_neighbors(c);
    }
    chain.faces = faces;

    let area = math::powf(cfg.h, cfg.d as f64 - 1.0);
    // initial exact solve seeds the frozen plan and the best record
    let mut best_set = init.clone();
    let mut best_t;
    {
        let res = transport::wasserstein_functional(init, cfg.p)?;
        chain.plan.clear();
        chain.owner.clear();
        for e in &res.plan.entries {
            chain.plan.insert(e.source, e.target);
            chain.owner.insert(e.target, e.source);
        }
        chain.est_cost = res.plan.total_cost;
        best_t = chain.faces as f64 * area + res.value;
    }

    let mut records = Vec::with_capacity(cfg.max_temps);
    let mut temp = cfg.temp_initial;
    let mut proposals_since_solve = 0usize;

    for _ in 0..cfg.max_temps {
        let mut accepted = 0usize;
        let mut checkpoint_ws = Vec::new();
        let mut checkpoint_ts = Vec::new();
        for _ in 0..cfg.moves_per_temp {
            // choose the move kind, then sample an occupied boundary cell
            let teleport = rng.gen::<f64>() < cfg.teleport_prob;
            let mut removed = None;
            for _ in 0..SAMPLE_TRIES {
                let c = chain.cells[rng.gen_range(0..chain.cells.len())];
                if chain.occupied_neighbors(c) < twod {
                    removed = Some(c);
                    break;
                }
            }
            let mut added = None;
            if let Some(b) = removed {
                if teleport {
                    for _ in 0..SAMPLE_TRIES {
                        let c: Cell = core::array::from_fn(|k| {
                            if k < cfg.d {
                                rng.gen_range(chain.box_lo[k]..=chain.box_hi[k])
                            } else {
                                0
                            }
                        });
                        if !chain.occupied(c) {
                            added = Some(c);
                            break;
                        }
                    }
                } else {
                    for _ in 0..SAMPLE_TRIES {
                        let c = chain.cells[rng.gen_range(0..chain.cells.len())];
                        let axis = rng.gen_range(0..cfg.d);
                        let step = if rng.gen::<bool>() { 1 } else { -1 };
                        let a = neighbor(c, axis, step);
                        if !chain.occupied(a) && a != b {
                            added = Some(a);
                            break;
                        }
                    }
                }
            }

            if let (Some(b), Some(a)) = (removed, added) {
                chain.grow_box(a)?;
                let t_old = chain.estimate_t();
                let undo = apply_move(&mut chain, b, a)?;
                let delta = chain.estimate_t() - t_old;
                let accept = if delta <= 0.0 {
                    true
                } else if temp > 0.0 {
                    rng.gen::<f64>() < math::exp(-delta / temp)
                } else {
                    false
                };
                if accept {
                    accepted += 1;
                } else {
                    revert_move(&mut chain, undo);
                }
            }

            proposals_since_solve += 1;
            if proposals_since_solve >= cfg.w_recompute_period {
                proposals_since_solve = 0;
                let (w, t, set) = exact_checkpoint(&mut chain, cfg.p)?;
                checkpoint_ws.push(w);
                checkpoint_ts.push(t);
                if t < best_t {
                    best_t = t;
                    best_set = set;
                }
            }
        }
        records.push(TempRecord {
            temperature: temp,
            best_t,
            current_t: chain.estimate_t(),
            acceptance_rate: if cfg.moves_per_temp == 0 {
                0.0
            } else {
                accepted as f64 / cfg.moves_per_temp as f64
            },
            checkpoint_ws,
            checkpoint_ts,
        });
        temp *= cfg.temp_decay;
    }

    // final certification of the end state
    let (w, t, set) = exact_checkpoint(&mut chain, cfg.p)?;
    if let Some(last) = records.last_mut() {
        last.checkpoint_ws.push(w);
        last.checkpoint_ts.push(t);
        if t < best_t {
            best_t = t;
            best_set = set;
        }
        last.best_t = best_t;
    }

    Ok((
        best_set,
        SearchTrace {
            records,
            final_best_t: best_t,
            wall_time_secs: None,
        },
    ))
}

/// Re-solve transport exactly, refresh the frozen plan, and return
/// `(exact W, exact T, current set)`. Panics if the frozen-plan estimate ever
/// drops below the exact optimum: the estimate is the cost of a feasible
/// plan, so that would mean corrupted bookkeeping.
fn exact_checkpoint(chain: &mut Chain, p: f64) -> Result<(f64, f64, LatticeSet), SearchError> {
    let set = LatticeSet::from_cells(chain.d, chain.h, &chain.cells)?;
    assert_eq!(set.cell_count(), chain.cells.len(), "volume is conserved");
    let area = math::powf(chain.h, chain.d as f64 - 1.0);
    let exact_perimeter = set.face_perimeter();
    assert!(
        math::abs(chain.faces as f64 * area - exact_perimeter) <= 1e-9 * (1.0 + exact_perimeter),
        "incremental perimeter agrees with the set"
    );
    let res = transport::wasserstein_functional(&set, p)?;
    let est = chain.estimate_w();
    assert!(
        est >= res.value - 1e-7 * (1.0 + res.value),
        "frozen-plan estimate {est} must upper-bound the exact value {}",
        res.value
    );
    chain.plan.clear();
    chain.owner.clear();
    for e in &res.plan.entries {
        chain.plan.insert(e.source, e.target);
        chain.owner.insert(e.target, e.source);
    }
    chain.est_cost = res.plan.total_cost;
    let t = chain.faces as f64 * area + res.value;
    Ok((res.value, t, set))
}

/// One row of the equal-intervals table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleRow {
    pub k: usize,
    /// Always exactly `2k`: two interval ends per interval.
    pub perimeter: f64,
    pub w: f64,
    pub t: f64,
}

/// Closed-form energies of `k` equal intervals, `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleTable {
    pub rows: Vec<OracleRow>,
    pub best_k: usize,
}

fn split_counts(total: usize, k: usize) -> impl Iterator<Item = usize> {
    let base = total / k;
    let rem = total % k;
    (0..k).map(move |j| base + usize::from(j < rem))
}

/// Cheapest one-interval transport in cells: send `j` cells contiguously to
/// the left and the rest to the right. Monotone pairing gives every
/// left-mover displacement `j` and every right-mover displacement `n - j`,
/// so the cost is `j^(p+1) + (n-j)^(p+1)`, minimized near the even split.
fn interval_cost_cells(n: usize, p: f64) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..=n {
        let c = math::powf(j as f64, p + 1.0) + math::powf((n - j) as f64, p + 1.0);
        if c < best {
            best = c;
        }
    }
    best
}

/// Energy table of `k` equal intervals of total volume `m` with wide gaps,
/// evaluated in closed form by 1D monotone transport.
pub fn equal_intervals_oracle(
    m: f64,
    p: f64,
    k_max: usize,
    h: f64,
) -> Result<OracleTable, SearchError> {
    if !(m > 0.0 && m.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(SearchError::BadConfig("m and h must be positive"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(SearchError::BadConfig("p must be finite and at least 1"));
    }
    if k_max == 0 {
        return Err(SearchError::BadConfig("k_max must be positive"));
    }
    let total = math::round(m / h).max(1.0) as usize;
    let mut rows = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=k_max.min(total) {
        let cost_cells: f64 = split_counts(total, k)
            .map(|n| interval_cost_cells(n, p))
            .sum();
        let w = math::powf(math::powf(h, 1.0 + p) * cost_cells, 1.0 / p);
        let t = 2.0 * k as f64 + w;
        rows.push(OracleRow {
            k,
            perimeter: 2.0 * k as f64,
            w,
            t,
        });
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, k));
        }
    }
    Ok(OracleTable {
        rows,
        best_k: best.expect("at least one row").1,
    })
}

/// The lattice set realizing one oracle row: `k` near-equal intervals with
/// gaps of at least `4m/k`, so neighboring targets cannot interact.
pub fn equal_intervals_set(m: f64, k: usize, h: f64) -> Result<LatticeSet, SearchError> {
    if !(m > 0.0 && m.is_finite() && h > 0.0 && h.is_finite()) {
        return Err(SearchError::BadConfig("m and h must be positive"));
    }
    if k == 0 {
        return Err(SearchError::BadConfig("k must be positive"));
    }
    let total = math::round(m / h).max(1.0) as usize;
    if k > total {
        return Err(SearchError::BadConfig("k exceeds the cell count"));
    }
    let gap = math::ceil(4.0 * m / (k as f64 * h)) as i64 + 2;
    let mut cells = Vec::with_capacity(total);
    let mut x = 0i64;
    for n in split_counts(total, k) {
        for i in 0..n as i64 {
            cells.push([x + i, 0, 0]);
        }
        x += n as i64 + gap;
    }
    Ok(LatticeSet::from_cells(1, h, &cells)?)
}

/// Uniform random scatter of `cells` distinct cells whose centers lie within
/// `radius` of the origin.
pub fn random_scatter(
    d: usize,
    h: f64,
    cells: usize,
    radius: f64,
    seed: u64,
) -> Result<LatticeSet, SearchError> {
    if cells == 0 {
        return Err(SearchError::BadConfig("cell count must be positive"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SearchError::BadConfig("radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = math::ceil(radius / h) as i64 + 1;
    let mut picked = alloc::collections::BTreeSet::new();
    let mut tries = 0usize;
    while picked.len() < cells {
        tries += 1;
        if tries > 10_000 * cells {
            return Err(SearchError::BadConfig("scatter window too small for the cell count"));
        }
        let c: Cell = core::array::from_fn(|k| if k < d { rng.gen_range(-span..=span) } else { 0 });
        let mut r2 = 0.0;
        for k in 0..d {
            let x = (c[k] as f64 + 0.5) * h;
            r2 += x * x;
        }
        if r2 <= radius * radius {
            picked.insert(c);
        }
    }
    let cells_vec: Vec<Cell> = picked.into_iter().collect();
    Ok(LatticeSet::from_cells(d, h, &cells_vec)?)
}

/// Which initializer produced a sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InitKind {
    Ball,
    Random,
}

/// Summary of one `(m, initializer)` annealing run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRecord {
    pub m: f64,
    pub init: InitKind,
    pub best_t: f64,
    /// Exact energy of the digitized equal-volume ball.
    pub ball_t: f64,
    pub ratio_to_ball: f64,
    pub component_count: usize,
    /// `m^(1/p + 2/d - 1)`; NaN at the degenerate exponent pair.
    pub equivalent_lambda: f64,
}

/// Sweep record plus the best set that produced it.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub record: SweepRecord,
    pub best: LatticeSet,
    pub trace: SearchTrace,
}

/// Digitized ball of volume `m` (cell count repaired to `round(m / h^d)`).
pub fn ball_init(d: usize, h: f64, m: f64) -> Result<LatticeSet, SearchError> {
    let cells = math::round(m / math::powf(h, d as f64)).max(1.0) as usize;
    let r = math::powf(m / math::unit_ball_volume(d), 1.0 / d as f64);
    Ok(LatticeSet::ball_set(d, h, [0.0; 3], r)?.repair_to_cell_count(cells, None)?)
}

/// For each volume, anneal from the ball and from a random scatter, and
/// report best energies against the ball baseline. `base` supplies the
/// schedule; its `m`, `p`, `d`, and `seed` are overridden per run.
pub fn sweep(
    m_values: &[f64],
    p: f64,
    d: usize,
    base: &AnnealConfig,
) -> Result<Vec<SweepOutcome>, SearchError> {
    let mut out = Vec::new();
    for (mi, &m) in m_values.iter().enumerate() {
        let h = base.h;
        let cells = math::round(m / math::powf(h, d as f64)).max(1.0) as usize;
        let ball = ball_init(d, h, m)?;
        let ball_t = reduction::energy_t(&ball, p)?.total_t;
        let radius = 3.0 * math::powf(m / math::unit_ball_volume(d), 1.0 / d as f64);
        for (ki, kind) in [InitKind::Ball, InitKind::Random].into_iter().enumerate() {
            let seed = base
                .seed
                .wrapping_add(mi as u64 * 2)
                .wrapping_add(ki as u64);
            let init = match kind {
                InitKind::Ball => ball.clone(),
                InitKind::Random => random_scatter(d, h, cells, radius.max(2.0 * h), seed ^ 0x9e37)?,
            };
            let cfg = AnnealConfig {
                p,
                d,
                m,
                seed,
                ..base.clone()
            };
            let (best, trace) = anneal(&init, &cfg)?;
            let equivalent_lambda = match reduction::m_to_lambda(m, p, d) {
                Ok(l) => l,
                Err(_) => f64::NAN,
            };
            out.push(SweepOutcome {
                record: SweepRecord {
                    m,
                    init: kind,
                    best_t: trace.final_best_t,
                    ball_t,
                    ratio_to_ball: trace.final_best_t / ball_t,
                    component_count: best.connected_components().len(),
                    equivalent_lambda,
                },
                best,
                trace,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction;

    #[test]
    fn oracle_table_matches_the_closed_form() {
        // n divisible by 2k: the even split makes W = m^2 / (2k) exactly
        let (m, h) = (1.0, 1.0 / 200.0);
        let table = equal_intervals_oracle(m, 1.0, 4, h).unwrap();
        for row in &table.rows {
            assert!((row.perimeter - 2.0 * row.k as f64).abs() == 0.0);
            if 200 % (2 * row.k) == 0 {
                let expect = 2.0 * row.k as f64 + m * m / (2.0 * row.k as f64);
                assert!((row.t - expect).abs() < 1e-12, "k {}: {} vs {expect}", row.k, row.t);
            }
        }
        assert_eq!(table.best_k, 1);
    }

    #[test]
    fn oracle_best_k_grows_with_volume() {
        let h = 1.0 / 200.0;
        let ms = [0.5, 1.0, 2.0, 4.0, 8.0];
        let best: Vec<usize> = ms
            .iter()
            .map(|&m| equal_intervals_oracle(m, 1.0, 8, h).unwrap().best_k)
            .collect();
        assert_eq!(best, alloc::vec![1, 1, 1, 2, 4]);
        for w in best.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn oracle_agrees_with_the_exact_solver() {
        let (m, h, p) = (0.5, 1.0 / 200.0, 1.0);
        for k in [1usize, 2] {
            let set = equal_intervals_set(m, k, h).unwrap();
            let solved = crate::transport::wasserstein_functional(&set, p).unwrap();
            let row = &equal_intervals_oracle(m, p, k, h).unwrap().rows[k - 1];
            assert!(
                (solved.value - row.w).abs() <= 1e-9 * (1.0 + row.w),
                "k {k}: solver {} vs closed form {}",
                solved.value,
                row.w
            );
        }
    }

    /// All 5-cell subsets of a 30-cell 1D window, pinned at the left cell
    /// (energy is translation invariant), evaluated exactly.
    fn exhaustive_5_cell_minimum() -> (f64, LatticeSet) {
        let mut best = f64::INFINITY;
        let mut best_set = None;
        for a in 1i64..27 {
            for b in (a + 1)..28 {
                for c in (b + 1)..29 {
                    for e in (c + 1)..30 {
                        let cells = [[0, 0, 0], [a, 0, 0], [b, 0, 0], [c, 0, 0], [e, 0, 0]];
                        let set = LatticeSet::from_cells(1, 1.0, &cells).unwrap();
                        let t = set.face_perimeter()
                            + crate::transport::wasserstein_functional(&set, 1.0)
                                .unwrap()
                                .value;
                        if t < best {
                            best = t;
                            best_set = Some(set);
                        }
                    }
                }
            }
        }
        (best, best_set.unwrap())
    }

    #[test]
    fn anneal_never_beats_the_exhaustive_minimum() {
        let (t_star, minimizer) = exhaustive_5_cell_minimum();
        // blocks of sizes {2,3} (or {1,2,2}) with enough spacing: 4 + 7
        assert!((t_star - 11.0).abs() < 1e-9, "exhaustive minimum {t_star}");
        let cfg = AnnealConfig {
            moves_per_temp: 60,
            temp_initial: 0.5,
            temp_decay: 0.8,
            w_recompute_period: 20,
            seed: 3,
            max_temps: 8,
            ..AnnealConfig::desk(1.0, 1, 5.0, 1.0)
        };
        let (_, trace) = anneal(&minimizer, &cfg).unwrap();
        assert!((trace.final_best_t - t_star).abs() < 1e-9);
        for rec in &trace.records {
            assert!(rec.best_t >= t_star - 1e-9);
            for &t in &rec.checkpoint_ts {
                assert!(t >= t_star - 1e-9);
            }
        }
    }

    fn bumpy_blob() -> LatticeSet {
        let h = 0.25;
        let ball = LatticeSet::ball_set(2, h, [0.0, 0.0, 0.0], 0.55).unwrap();
        let bump = LatticeSet::from_cells(2, h, &[[4, 0, 0], [4, 1, 0], [5, 0, 0]]).unwrap();
        ball.union(&bump).unwrap()
    }

    #[test]
    fn zero_temperature_descent_never_increases_checkpoint_energy() {
        let init = bumpy_blob();
        let m = init.volume();
        let cfg = AnnealConfig {
            moves_per_temp: 80,
            temp_initial: 0.0,
            temp_decay: 0.5,
            w_recompute_period: 20,
            seed: 9,
            max_temps: 8,
            teleport_prob: 0.0,
            ..AnnealConfig::desk(1.0, 2, m, 0.25)
        };
        let (_, trace) = anneal(&init, &cfg).unwrap();
        let ts: Vec<f64> = trace
            .records
            .iter()
            .flat_map(|r| r.checkpoint_ts.iter().copied())
            .collect();
        assert!(ts.len() >= 2);
        for w in ts.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", ts);
        }
        for w in trace.records.windows(2) {
            assert!(w[1].best_t <= w[0].best_t + 1e-12);
        }
    }

    #[test]
    fn identical_inputs_reproduce_identical_traces() {
        let init = bumpy_blob();
        let m = init.volume();
        let cfg = AnnealConfig {
            moves_per_temp: 50,
            temp_initial: 0.4,
            temp_decay: 0.85,
            w_recompute_period: 25,
            seed: 11,
            max_temps: 6,
            ..AnnealConfig::desk(1.0, 2, m, 0.25)
        };
        let (best_a, trace_a) = anneal(&init, &cfg).unwrap();
        let (best_b, trace_b) = anneal(&init, &cfg).unwrap();
        assert!(trace_a == trace_b);
        assert!(best_a == best_b);
    }

    #[test]
    fn random_scatter_collapses_toward_the_ball() {
        let (d, h) = (2usize, 0.25);
        let m = 12.0 * h * h;
        let ball = ball_init(d, h, m).unwrap();
        let ball_t = reduction::energy_t(&ball, 1.0).unwrap().total_t;
        let radius = 3.0 * crate::math::sqrt(m / core::f64::consts::PI);
        let init = random_scatter(d, h, 12, radius, 171).unwrap();
        let cfg = AnnealConfig {
            moves_per_temp: 200,
            temp_initial: 0.3,
            temp_decay: 0.85,
            w_recompute_period: 50,
            seed: 5,
            max_temps: 25,
            teleport_prob: 0.25,
            ..AnnealConfig::desk(1.0, d, m, h)
        };
        let (best, trace) = anneal(&init, &cfg).unwrap();
        assert!(
            trace.final_best_t <= 1.05 * ball_t,
            "best {} vs ball {}",
            trace.final_best_t,
            ball_t
        );
        assert_eq!(best.cell_count(), 12);
    }

    #[test]
    fn sweep_with_zero_moves_reports_the_ball_energy() {
        let base = AnnealConfig {
            moves_per_temp: 0,
            max_temps: 1,
            ..AnnealConfig::desk(1.0, 2, 0.5, 0.25)
        };
        let out = sweep(&[0.5], 1.0, 2, &base).unwrap();
        assert_eq!(out.len(), 2);
        let ball_run = &out[0];
        assert_eq!(ball_run.record.init, InitKind::Ball);
        assert!((ball_run.record.best_t - ball_run.record.ball_t).abs() < 1e-12);
        assert!((ball_run.record.ratio_to_ball - 1.0).abs() < 1e-12);
        assert_eq!(ball_run.record.component_count, 1);
        assert!(ball_run.record.equivalent_lambda.is_finite());
        assert_eq!(out[1].record.init, InitKind::Random);
        assert!(out[1].record.best_t >= ball_run.record.best_t - 1e-9);
    }

    #[test]
    fn anneal_keeps_two_far_intervals_near_the_oracle_energy() {
        let (m, h, p) = (4.0, 1.0 / 50.0, 1.0);
        let oracle = equal_intervals_oracle(m, p, 4, h).unwrap();
        let init = equal_intervals_set(m, oracle.best_k, h).unwrap();
        let cfg = AnnealConfig {
            moves_per_temp: 100,
            temp_initial: 0.05,
            temp_decay: 0.7,
            w_recompute_period: 100,
            seed: 21,
            max_temps: 4,
            teleport_prob: 0.1,
            ..AnnealConfig::desk(p, 1, m, h)
        };
        let (best, trace) = anneal(&init, &cfg).unwrap();
        let best_row_t = oracle.rows[oracle.best_k - 1].t;
        assert!(
            (trace.final_best_t - best_row_t).abs() <= 0.02 * best_row_t,
            "anneal {} vs oracle {}",
            trace.final_best_t,
            best_row_t
        );
        assert_eq!(best.connected_components().len(), oracle.best_k);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let good = AnnealConfig::desk(1.0, 2, 0.5, 0.1);
        let init = ball_init(2, 0.1, 0.5).unwrap();
        for bad in [
            AnnealConfig { temp_decay: 1.0, ..good.clone() },
            AnnealConfig { temp_decay: 0.0, ..good.clone() },
            AnnealConfig { w_recompute_period: 0, ..good.clone() },
            AnnealConfig { max_temps: 0, ..good.clone() },
            AnnealConfig { p: 0.5, ..good.clone() },
            AnnealConfig { teleport_prob: 1.5, ..good.clone() },
        ] {
            assert!(matches!(anneal(&init, &bad), Err(SearchError::BadConfig(_))));
        }
        // volume mismatch: a set twice the configured size
        let big = ball_init(2, 0.1, 1.0).unwrap();
        assert!(matches!(
            anneal(&big, &good),
            Err(SearchError::VolumeMismatch { .. })
        ));
    }
}
