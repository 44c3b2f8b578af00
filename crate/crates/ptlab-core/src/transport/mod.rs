//! Transport costs between lattice sets.
//!
//! Each occupied cell carries mass `h^d` concentrated at its center. Moving a
//! cell of `E` to a cell of `F` costs `mass * |center difference|^p`, and the
//! distance between two equal-volume disjoint sets is the p-th root of the
//! cheapest total cost over pairings:
//!
//! ```text
//! W_p(E, F) = (h^d * sum |x_i - y_i|^p)^(1/p),   minimized over pairings.
//! ```
//!
//! The functional form `W_p(E)` additionally minimizes over the target `F`
//! itself, ranging over equal-volume sets disjoint from `E` inside a finite
//! candidate window around `E`; optimal targets are always indicator-valued
//! (each target cell absorbs exactly one source cell), so restricting to
//! lattice sets loses nothing. Solutions are exact assignments with dual
//! certificates, see [`flow`]. A Sinkhorn estimator is provided for quick
//! approximate values; it never substitutes for the exact solver where a
//! certified number is needed.

mod flow;

use alloc::vec::Vec;
use core::fmt;

use crate::lattice::{Cell, GeometryError, LatticeSet};
use crate::math;

pub(crate) use flow::cost_from_d2;

/// Errors from transport computations.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Geometry(GeometryError),
    /// Source and target must hold the same number of cells.
    CellCountMismatch { left: usize, right: usize },
    /// Source and target sets overlap.
    NotDisjoint,
    /// The cost exponent must be finite and at least 1.
    BadExponent(f64),
    /// The candidate target window cannot hold the source mass.
    WindowTooSmall { sources: usize, sinks: usize },
    /// The solver failed to close the dual gap; indicates a bug.
    SolverStall,
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Geometry(e) => write!(f, "{e}"),
            TransportError::CellCountMismatch { left, right } => {
                write!(f, "cell counts differ: {left} vs {right}")
            }
            TransportError::NotDisjoint => write!(f, "source and target sets overlap"),
            TransportError::BadExponent(p) => {
                write!(f, "cost exponent must be finite and >= 1, got {p}")
            }
            TransportError::WindowTooSmall { sources, sinks } => {
                write!(f, "candidate window has {sinks} cells for {sources} sources")
            }
            TransportError::SolverStall => write!(f, "transport solver failed to certify"),
        }
    }
}

impl core::error::Error for TransportError {}

impl From<GeometryError> for TransportError {
    fn from(e: GeometryError) -> Self {
        TransportError::Geometry(e)
    }
}

/// One matched pair of the optimal plan.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanEntry {
    pub source: Cell,
    pub target: Cell,
    /// Transported mass, always `h^d`.
    pub mass: f64,
    /// Contribution `mass * |center difference|^p`.
    pub cost: f64,
}

/// An optimal transport plan between two cell families.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportPlan {
    pub dim: usize,
    pub spacing: f64,
    pub exponent: f64,
    /// Entries in source row-major order, one per source cell.
    pub entries: Vec<PlanEntry>,
    /// Sum of entry costs, `h^d * sum |x - y|^p`.
    pub total_cost: f64,
}

impl TransportPlan {
    /// Largest Euclidean center displacement over the plan.
    pub fn max_displacement(&self) -> f64 {
        let mut worst = 0.0f64;
        for e in &self.entries {
            let mut d2 = 0.0;
            for k in 0..self.dim {
                let d = (e.source[k] - e.target[k]) as f64 * self.spacing;
                d2 += d * d;
            }
            worst = worst.max(math::sqrt(d2));
        }
        worst
    }
}

/// Outcome of an exact transport solve.
#[derive(Debug, Clone)]
pub struct WassersteinResult {
    /// `(total_cost)^(1/p)`, units `length^(1 + d/p)`.
    pub value: f64,
    /// Largest Euclidean center displacement in the plan.
    pub max_displacement: f64,
    pub plan: TransportPlan,
    /// The optimal target set (equals `F` for the two-set distance).
    pub target_set: LatticeSet,
    /// All candidate target cells the solve was allowed to use.
    pub sink_window: LatticeSet,
}

fn check_exponent(p: f64) -> Result<(), TransportError> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(TransportError::BadExponent(p));
    }
    Ok(())
}

fn solve(
    e: &LatticeSet,
    sinks: Vec<Cell>,
    sink_window: LatticeSet,
    p: f64,
) -> Result<WassersteinResult, TransportError> {
    let dim = e.dim();
    let h = e.spacing();
    let sources: Vec<Cell> = e.cells().collect();
    let sol = flow::solve_transport(dim, &sources, &sinks, p, h).map_err(|f| match f {
        flow::SolveFail::TooFewSinks => TransportError::WindowTooSmall {
            sources: sources.len(),
            sinks: sinks.len(),
        },
        flow::SolveFail::Stalled => TransportError::SolverStall,
    })?;
    let mass = math::powf(h, dim as f64);
    let mut entries = Vec::with_capacity(sources.len());
    let mut total_cost = 0.0;
    let mut targets = Vec::with_capacity(sources.len());
    for (i, &src) in sources.iter().enumerate() {
        let dst = sinks[sol.sink_of[i] as usize];
        let mut d2 = 0.0;
        for k in 0..dim {
            let d = (src[k] - dst[k]) as f64;
            d2 += d * d;
        }
        let cost = mass * cost_from_d2(d2, p, h);
        total_cost += cost;
        targets.push(dst);
        entries.push(PlanEntry {
            source: src,
            target: dst,
            mass,
            cost,
        });
    }
    let plan = TransportPlan {
        dim,
        spacing: h,
        exponent: p,
        entries,
        total_cost,
    };
    let value = if plan.entries.is_empty() {
        0.0
    } else {
        math::powf(total_cost, 1.0 / p)
    };
    let max_displacement = plan.max_displacement();
    let target_set = LatticeSet::from_cells(dim, h, &targets)?;
    Ok(WassersteinResult {
        value,
        max_displacement,
        plan,
        target_set,
        sink_window,
    })
}

/// Exact `W_p(E, F)` between equal-volume disjoint sets on the same lattice.
pub fn wasserstein_distance(
    e: &LatticeSet,
    f: &LatticeSet,
    p: f64,
) -> Result<WassersteinResult, TransportError> {
    check_exponent(p)?;
    e.check_compatible(f)?;
    if e.cell_count() != f.cell_count() {
        return Err(TransportError::CellCountMismatch {
            left: e.cell_count(),
            right: f.cell_count(),
        });
    }
    if !e.is_disjoint(f) {
        return Err(TransportError::NotDisjoint);
    }
    let sinks: Vec<Cell> = f.cells().collect();
    solve(e, sinks, f.clone(), p)
}

/// Center-to-center reach of the candidate target window:
/// `scale * (C0(d) vol(E)^(1/d) + 2 h sqrt(d))`.
pub fn window_reach(e: &LatticeSet, scale: f64) -> f64 {
    let d = e.dim();
    let base = math::localization_constant(d) * math::powf(e.volume(), 1.0 / d as f64)
        + 2.0 * e.spacing() * math::sqrt(d as f64);
    scale * base
}

/// Candidate target cells for the functional: every empty cell whose center
/// lies within [`window_reach`] of some cell of `E`.
pub fn transport_window(e: &LatticeSet, scale: f64) -> Result<LatticeSet, TransportError> {
    let dim = e.dim();
    let h = e.spacing();
    if e.cell_count() == 0 {
        return Ok(LatticeSet::empty(dim, h)?);
    }
    let wh = window_reach(e, scale) / h;
    let r = math::floor(wh) as i64;
    let wh2 = wh * wh;
    // stencil of integer offsets within Euclidean reach
    let mut offsets: Vec<Cell> = Vec::new();
    let lim = |k: usize| if k < dim { r } else { 0 };
    for z in -lim(2)..=lim(2) {
        for y in -lim(1)..=lim(1) {
            for x in -lim(0)..=lim(0) {
                if (x * x + y * y + z * z) as f64 <= wh2 {
                    offsets.push([x, y, z]);
                }
            }
        }
    }
    // mark the dilation over an enlarged box
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for c in e.cells() {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    for k in 0..dim {
        lo[k] -= r;
        hi[k] += r;
    }
    let mut dims = [1usize; 3];
    for k in 0..dim {
        dims[k] = (hi[k] - lo[k] + 1) as usize;
    }
    let mut mark = alloc::vec![false; dims[0] * dims[1] * dims[2]];
    let at = |c: Cell| -> usize {
        (((c[2] - lo[2]) as usize * dims[1] + (c[1] - lo[1]) as usize) * dims[0])
            + (c[0] - lo[0]) as usize
    };
    for c in e.cells() {
        for o in &offsets {
            let t = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            mark[at(t)] = true;
        }
    }
    let mut cells: Vec<Cell> = Vec::new();
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c = [x, y, z];
                if mark[at(c)] && !e.contains(c) {
                    cells.push(c);
                }
            }
        }
    }
    Ok(LatticeSet::from_cells(dim, h, &cells)?)
}

/// Exact `W_p(E)`: cheapest transport of `E` onto an equal-volume disjoint
/// target within the standard candidate window.
pub fn wasserstein_functional(
    e: &LatticeSet,
    p: f64,
) -> Result<WassersteinResult, TransportError> {
    wasserstein_functional_scaled(e, p, 1.0)
}

/// [`wasserstein_functional`] with the window reach multiplied by `scale`.
/// Values are invariant under `scale >= 1`; the knob exists to demonstrate
/// exactly that.
pub fn wasserstein_functional_scaled(
    e: &LatticeSet,
    p: f64,
    scale: f64,
) -> Result<WassersteinResult, TransportError> {
    check_exponent(p)?;
    let window = transport_window(e, scale)?;
    let sinks: Vec<Cell> = window.cells().collect();
    solve(e, sinks, window, p)
}

/// Best (most negative) change in total cost over all single-entry reroutes
/// to an unused window cell. A certified optimal plan returns a value
/// `>= -1e-9 * scale`; strictly negative beyond tolerance would mean the
/// plan is not optimal.
pub fn improving_reroute_gain(res: &WassersteinResult) -> f64 {
    let dim = res.plan.dim;
    let h = res.plan.spacing;
    let p = res.plan.exponent;
    let mass = math::powf(h, dim as f64);
    let free: Vec<Cell> = res
        .sink_window
        .cells()
        .filter(|&c| !res.target_set.contains(c))
        .collect();
    let mut best = 0.0f64;
    for entry in &res.plan.entries {
        for &z in &free {
            let mut d2 = 0.0;
            for k in 0..dim {
                let d = (entry.source[k] - z[k]) as f64;
                d2 += d * d;
            }
            let alt = mass * cost_from_d2(d2, p, h);
            best = best.min(alt - entry.cost);
        }
    }
    best
}

/// Entropic estimate of the transport value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SinkhornEstimate {
    /// `(sum plan * cost)^(1/p)` for the entropic plan.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Worst relative marginal violation of the entropic plan.
    pub max_marginal_error: f64,
}

/// Sinkhorn iteration in the log domain for `W_p(E, F)`. `reg` is the
/// entropic temperature in cost units; smaller means closer to exact but
/// slower. Diagnostics only — certificates always come from the exact solver.
pub fn sinkhorn_estimate(
    e: &LatticeSet,
    f: &LatticeSet,
    p: f64,
    reg: f64,
    max_iters: usize,
) -> Result<SinkhornEstimate, TransportError> {
    check_exponent(p)?;
    e.check_compatible(f)?;
    if e.cell_count() != f.cell_count() {
        return Err(TransportError::CellCountMismatch {
            left: e.cell_count(),
            right: f.cell_count(),
        });
    }
    if !e.is_disjoint(f) {
        return Err(TransportError::NotDisjoint);
    }
    if !(reg.is_finite() && reg > 0.0) {
        return Err(TransportError::BadExponent(reg));
    }
    let dim = e.dim();
    let h = e.spacing();
    let n = e.cell_count();
    if n == 0 {
        return Ok(SinkhornEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            max_marginal_error: 0.0,
        });
    }
    let sources: Vec<Cell> = e.cells().collect();
    let sinks: Vec<Cell> = f.cells().collect();
    let mut cost = alloc::vec![0.0f64; n * n];
    for (i, &a) in sources.iter().enumerate() {
        for (j, &b) in sinks.iter().enumerate() {
            let mut d2 = 0.0;
            for k in 0..dim {
                let d = (a[k] - b[k]) as f64;
                d2 += d * d;
            }
            cost[i * n + j] = cost_from_d2(d2, p, h);
        }
    }
    let mass = math::powf(h, dim as f64);
    let log_mass = math::ln(mass);
    let mut fu = alloc::vec![0.0f64; n];
    let mut gv = alloc::vec![0.0f64; n];
    let lse = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return f64::NEG_INFINITY;
        }
        let s: f64 = vals.iter().map(|&t| math::exp(t - m)).sum();
        m + math::ln(s)
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut max_err = f64::INFINITY;
    while iterations < max_iters {
        for i in 0..n {
            let row = &cost[i * n..(i + 1) * n];
            let l = lse(&mut (0..n).map(|j| (gv[j] - row[j]) / reg));
            fu[i] = reg * (log_mass - l);
        }
        for j in 0..n {
            let l = lse(&mut (0..n).map(|i| (fu[i] - cost[i * n + j]) / reg));
            gv[j] = reg * (log_mass - l);
        }
        iterations += 1;
        // row marginals are exact right after a row update; check columns
        if iterations % 10 == 0 || iterations == max_iters {
            let mut err = 0.0f64;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += math::exp((fu[i] + gv[j] - cost[i * n + j]) / reg);
                }
                err = err.max(math::abs(s - mass) / mass);
            }
            max_err = err;
            if err < 1e-6 {
                converged = true;
                break;
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += math::exp((fu[i] + gv[j] - cost[i * n + j]) / reg) * cost[i * n + j];
        }
    }
    let value = math::powf(total.max(0.0), 1.0 / p);
    Ok(SinkhornEstimate {
        value,
        iterations,
        converged,
        max_marginal_error: max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSet;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(dim: usize, h: f64, cells: &[Cell]) -> LatticeSet {
        LatticeSet::from_cells(dim, h, cells).unwrap()
    }

    /// Exhaustive minimum pairing cost via subset dynamic programming.
    /// Only for tiny instances; shares no code with the solver.
    fn min_pairing_cost(dim: usize, srcs: &[Cell], dsts: &[Cell], p: f64, h: f64) -> f64 {
        assert_eq!(srcs.len(), dsts.len());
        let n = srcs.len();
        assert!(n <= 12);
        let mut dp = vec![f64::INFINITY; 1 << n];
        dp[0] = 0.0;
        for mask in 0..(1usize << n) {
            let i = mask.count_ones() as usize;
            if i >= n || !dp[mask].is_finite() {
                continue;
            }
            for (j, &d) in dsts.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let mut d2 = 0.0;
                for k in 0..dim {
                    let t = (srcs[i][k] - d[k]) as f64;
                    d2 += t * t;
                }
                let c = cost_from_d2(d2, p, h);
                let nm = mask | (1 << j);
                if dp[mask] + c < dp[nm] {
                    dp[nm] = dp[mask] + c;
                }
            }
        }
        dp[(1 << n) - 1] * crate::math::powf(h, dim as f64)
    }

    /// In one dimension with convex costs the sorted pairing is optimal.
    fn monotone_cost_1d(srcs: &[Cell], dsts: &[Cell], p: f64, h: f64) -> f64 {
        let mut a: Vec<i64> = srcs.iter().map(|c| c[0]).collect();
        let mut b: Vec<i64> = dsts.iter().map(|c| c[0]).collect();
        a.sort_unstable();
        b.sort_unstable();
        let mut total = 0.0;
        for (x, y) in a.iter().zip(&b) {
            let d = (x - y).abs() as f64;
            total += cost_from_d2(d * d, p, h);
        }
        total * h
    }

    /// `span` must give at least ~3x the cells being drawn or rejection
    /// sampling will crawl; asserted to keep the generator honest.
    fn random_disjoint_pair(
        rng: &mut ChaCha8Rng,
        dim: usize,
        n: usize,
        span: i64,
    ) -> (Vec<Cell>, Vec<Cell>) {
        use alloc::collections::BTreeSet;
        let pool = (2 * span + 1).pow(dim as u32);
        assert!(pool >= 3 * (2 * n) as i64, "span {span} too tight for {n} cells");
        let mut used: BTreeSet<Cell> = BTreeSet::new();
        let mut draw = |used: &mut BTreeSet<Cell>| -> Vec<Cell> {
            let mut out = Vec::new();
            while out.len() < n {
                let mut c = [0i64; 3];
                for k in c.iter_mut().take(dim) {
                    *k = rng.gen_range(-span..=span);
                }
                if used.insert(c) {
                    out.push(c);
                }
            }
            out
        };
        let a = draw(&mut used);
        let b = draw(&mut used);
        (a, b)
    }

    #[test]
    fn single_cell_pair_value_is_distance_times_mass_root() {
        // one cell at 0, one at 5, h = 1: cost = 5^p, mass = 1, value = 5
        for dim in 1..=3 {
            for &p in &[1.0, 1.5, 2.0] {
                let e = set(dim, 1.0, &[[0, 0, 0]]);
                let f = set(dim, 1.0, &[[5, 0, 0]]);
                let r = wasserstein_distance(&e, &f, p).unwrap();
                assert!((r.value - 5.0).abs() < 1e-12, "dim {dim} p {p}: {}", r.value);
                assert_eq!(r.plan.entries.len(), 1);
                assert!((r.max_displacement - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_units_carry_spacing_power() {
        // adjacent cells, spacing h: value = (h^d * h^p)^(1/p) = h^(d/p + 1)
        let h = 0.25;
        for dim in 1..=3 {
            for &p in &[1.0, 2.0] {
                let e = set(dim, h, &[[0, 0, 0]]);
                let f = set(dim, h, &[[1, 0, 0]]);
                let r = wasserstein_distance(&e, &f, p).unwrap();
                let expect = crate::math::powf(h, dim as f64 / p + 1.0);
                assert!(
                    (r.value - expect).abs() < 1e-14,
                    "dim {dim} p {p}: {} vs {expect}",
                    r.value
                );
            }
        }
    }

    #[test]
    fn distance_matches_sorted_pairing_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let n = 1 + (trial % 9);
            let (a, b) = random_disjoint_pair(&mut rng, 1, n, 30);
            let e = set(1, 0.5, &a);
            let f = set(1, 0.5, &b);
            for &p in &[1.0, 1.5, 2.0, 3.0] {
                let r = wasserstein_distance(&e, &f, p).unwrap();
                let oracle = monotone_cost_1d(&a, &b, p, 0.5);
                assert!(
                    (r.plan.total_cost - oracle).abs() <= 1e-12 * (1.0 + oracle),
                    "n {n} p {p}: {} vs {oracle}",
                    r.plan.total_cost
                );
            }
        }
    }

    #[test]
    fn distance_matches_exhaustive_pairing_in_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..30 {
            let n = 2 + (trial % 6);
            let (a, b) = random_disjoint_pair(&mut rng, 2, n, 6);
            let e = set(2, 1.0, &a);
            let f = set(2, 1.0, &b);
            for &p in &[1.0, 2.0, 2.5] {
                let r = wasserstein_distance(&e, &f, p).unwrap();
                let oracle = min_pairing_cost(2, &a, &b, p, 1.0);
                assert!(
                    (r.plan.total_cost - oracle).abs() <= 1e-12 * (1.0 + oracle),
                    "n {n} p {p}: {} vs {oracle}",
                    r.plan.total_cost
                );
            }
        }
    }

    #[test]
    fn distance_matches_exhaustive_pairing_in_three_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..10 {
            let n = 2 + (trial % 4);
            let (a, b) = random_disjoint_pair(&mut rng, 3, n, 4);
            let e = set(3, 0.5, &a);
            let f = set(3, 0.5, &b);
            let r = wasserstein_distance(&e, &f, 2.0).unwrap();
            let oracle = min_pairing_cost(3, &a, &b, 2.0, 0.5);
            assert!((r.plan.total_cost - oracle).abs() <= 1e-12 * (1.0 + oracle));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = set(2, 1.0, &[[0, 0, 0], [1, 0, 0]]);
        let f = set(2, 1.0, &[[3, 0, 0]]);
        assert!(matches!(
            wasserstein_distance(&e, &f, 2.0),
            Err(TransportError::CellCountMismatch { left: 2, right: 1 })
        ));
        let g = set(2, 1.0, &[[1, 0, 0], [2, 0, 0]]);
        assert!(matches!(
            wasserstein_distance(&e, &g, 2.0),
            Err(TransportError::NotDisjoint)
        ));
        let h = set(2, 0.5, &[[4, 0, 0], [5, 0, 0]]);
        assert!(matches!(
            wasserstein_distance(&e, &h, 2.0),
            Err(TransportError::Geometry(GeometryError::SpacingMismatch { .. }))
        ));
        assert!(matches!(
            wasserstein_distance(&e, &f, 0.5),
            Err(TransportError::BadExponent(_))
        ));
    }

    /// Enumerate all n-subsets of the window and match each exhaustively.
    /// The functional must equal the global minimum.
    #[test]
    fn functional_matches_exhaustive_target_enumeration_1d() {
        let e = set(1, 1.0, &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let n = e.cell_count();
        for &p in &[1.0, 2.0] {
            let r = wasserstein_functional(&e, p).unwrap();
            let window: Vec<Cell> = r.sink_window.cells().collect();
            let srcs: Vec<Cell> = e.cells().collect();
            let m = window.len();
            let mut best = f64::INFINITY;
            let mut idx: Vec<usize> = (0..n).collect();
            loop {
                let dsts: Vec<Cell> = idx.iter().map(|&i| window[i]).collect();
                let c = min_pairing_cost(1, &srcs, &dsts, p, 1.0);
                if c < best {
                    best = c;
                }
                // advance to the next combination in lexicographic order
                let mut advanced = false;
                let mut i = n;
                while i > 0 {
                    i -= 1;
                    if idx[i] < i + m - n {
                        idx[i] += 1;
                        for j in i + 1..n {
                            idx[j] = idx[j - 1] + 1;
                        }
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    break;
                }
            }
            assert!(
                (r.plan.total_cost - best).abs() <= 1e-12 * (1.0 + best),
                "p {p}: {} vs {best}",
                r.plan.total_cost
            );
        }
    }

    #[test]
    fn functional_single_cell_moves_to_a_neighbor() {
        for dim in 1..=3 {
            for &p in &[1.0, 2.0] {
                let h = 0.5;
                let e = set(dim, h, &[[0, 0, 0]]);
                let r = wasserstein_functional(&e, p).unwrap();
                let expect = crate::math::powf(h, dim as f64 / p + 1.0);
                assert!(
                    (r.value - expect).abs() < 1e-14,
                    "dim {dim} p {p}: {} vs {expect}",
                    r.value
                );
                let t: Vec<Cell> = r.target_set.cells().collect();
                assert_eq!(t.len(), 1);
                let d: i64 = (0..dim).map(|k| (t[0][k]).abs()).sum();
                assert_eq!(d, 1, "target must be a face neighbor");
            }
        }
    }

    #[test]
    fn functional_target_is_disjoint_equal_volume_within_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dim in 1..=2 {
            for trial in 0..8 {
                let n = 3 + trial;
                let span = if dim == 1 { 40 } else { 5 };
                let (a, _) = random_disjoint_pair(&mut rng, dim, n, span);
                let e = set(dim, 0.5, &a);
                let r = wasserstein_functional(&e, 2.0).unwrap();
                assert_eq!(r.target_set.cell_count(), e.cell_count());
                assert!(r.target_set.is_disjoint(&e));
                let reach = window_reach(&e, 1.0);
                assert!(r.max_displacement <= reach + 1e-9);
                // each target cell absorbs exactly one source: entries
                // already pair one-to-one, so targets must be distinct
                let mut seen: Vec<Cell> = r.plan.entries.iter().map(|x| x.target).collect();
                seen.sort_unstable();
                seen.dedup();
                assert_eq!(seen.len(), r.plan.entries.len());
            }
        }
    }

    #[test]
    fn enlarging_the_window_does_not_change_the_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for dim in 1..=2 {
            let span = if dim == 1 { 20 } else { 4 };
            let (a, _) = random_disjoint_pair(&mut rng, dim, 6, span);
            let e = set(dim, 1.0, &a);
            for &p in &[1.0, 2.0] {
                let base = wasserstein_functional(&e, p).unwrap();
                let wide = wasserstein_functional_scaled(&e, p, 2.0).unwrap();
                assert!(
                    wide.sink_window.cell_count() > base.sink_window.cell_count(),
                    "scaled window must actually grow"
                );
                assert!(
                    (base.value - wide.value).abs() <= 1e-10 * (1.0 + base.value),
                    "dim {dim} p {p}: {} vs {}",
                    base.value,
                    wide.value
                );
            }
        }
    }

    #[test]
    fn no_single_reroute_improves_an_optimal_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for dim in 1..=2 {
            for trial in 0..6 {
                let span = if dim == 1 { 30 } else { 4 };
                let (a, _) = random_disjoint_pair(&mut rng, dim, 4 + trial, span);
                let e = set(dim, 0.5, &a);
                for &p in &[1.0, 2.0] {
                    let r = wasserstein_functional(&e, p).unwrap();
                    let gain = improving_reroute_gain(&r);
                    assert!(
                        gain >= -1e-9 * (1.0 + r.plan.total_cost),
                        "dim {dim} p {p}: improving reroute of {gain}"
                    );
                }
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (a, _) = random_disjoint_pair(&mut rng, 2, 9, 5);
        let e = set(2, 0.5, &a);
        let r1 = wasserstein_functional(&e, 1.7).unwrap();
        let r2 = wasserstein_functional(&e, 1.7).unwrap();
        assert_eq!(r1.plan, r2.plan);
        assert!(r1.value == r2.value);
    }

    #[test]
    fn sinkhorn_two_cells_recovers_exact_distance() {
        let e = set(2, 1.0, &[[0, 0, 0]]);
        let f = set(2, 1.0, &[[1, 0, 0]]);
        for &p in &[1.0, 2.0] {
            let est = sinkhorn_estimate(&e, &f, p, 0.5, 1000).unwrap();
            assert!(est.converged);
            // a single admissible plan: marginals force exactness
            assert!((est.value - 1.0).abs() < 1e-2, "p {p}: {}", est.value);
        }
    }

    #[test]
    fn sinkhorn_tracks_the_exact_solver_on_separated_blocks() {
        // two 3 x 2 blocks, 10 cells apart
        let mut a = Vec::new();
        let mut b = Vec::new();
        for y in 0..2 {
            for x in 0..3 {
                a.push([x, y, 0]);
                b.push([x + 10, y, 0]);
            }
        }
        let e = set(2, 1.0, &a);
        let f = set(2, 1.0, &b);
        for &p in &[1.0, 2.0] {
            let exact = wasserstein_distance(&e, &f, p).unwrap();
            let est = sinkhorn_estimate(&e, &f, p, 0.5, 20_000).unwrap();
            assert!(est.converged, "p {p} did not converge");
            let rel = (est.value - exact.value).abs() / exact.value;
            assert!(rel < 0.03, "p {p}: sinkhorn {} exact {}", est.value, exact.value);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn plan_marginals_and_total_are_consistent(seed in 0u64..500, dim in 1usize..=2, n in 1usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let span = if dim == 1 { 40 } else { 8 };
            let (a, b) = random_disjoint_pair(&mut rng, dim, n, span);
            let h = 0.5;
            let e = set(dim, h, &a);
            let f = set(dim, h, &b);
            let r = wasserstein_distance(&e, &f, 2.0).unwrap();
            // one entry per source, in row-major source order
            let srcs: Vec<Cell> = e.cells().collect();
            prop_assert_eq!(r.plan.entries.len(), srcs.len());
            let mass = crate::math::powf(h, dim as f64);
            let mut recomputed = 0.0;
            for (entry, src) in r.plan.entries.iter().zip(&srcs) {
                prop_assert_eq!(&entry.source, src);
                prop_assert!((entry.mass - mass).abs() < 1e-15);
                prop_assert!(f.contains(entry.target));
                let mut d2 = 0.0;
                for k in 0..dim {
                    let d = (entry.source[k] - entry.target[k]) as f64 * h;
                    d2 += d * d;
                }
                recomputed += entry.mass * d2;
            }
            let rel = (recomputed - r.plan.total_cost).abs() / (1.0 + r.plan.total_cost);
            prop_assert!(rel < 1e-10);
            // every sink absorbs exactly one source
            let mut targets: Vec<Cell> = r.plan.entries.iter().map(|x| x.target).collect();
            targets.sort_unstable();
            targets.dedup();
            prop_assert_eq!(targets.len(), srcs.len());
            let value_check = crate::math::powf(r.plan.total_cost, 0.5);
            prop_assert!((value_check - r.value).abs() <= 1e-12 * (1.0 + r.value));
        }
    }
}
