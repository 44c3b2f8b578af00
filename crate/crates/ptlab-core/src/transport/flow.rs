//! Exact min-cost assignment of equal-mass cells by successive shortest
//! augmenting paths with potentials.
//!
//! Every source ships one unit, every sink absorbs at most one, so basic
//! optimal flows are assignments and the integral structure of the plan is
//! automatic. Search runs on a sparse candidate edge set (nearest sinks per
//! source); after solving, dual feasibility `cost(i,j) >= u[i] + v[j]` is
//! checked against *every* sink and violated edges are added until none
//! remain, so the returned assignment is optimal for the full bipartite
//! problem, not just the candidates.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::math::{self, OrdF64};

pub(crate) const NONE: u32 = u32::MAX;

/// `|x - y|^p` from the integer squared cell distance.
#[inline]
pub(crate) fn cost_from_d2(d2_cells: f64, p: f64, h: f64) -> f64 {
    if p == 2.0 {
        d2_cells * h * h
    } else if p == 1.0 {
        math::sqrt(d2_cells) * h
    } else {
        math::powf(math::sqrt(d2_cells) * h, p)
    }
}

#[inline]
fn d2(a: [i64; 3], b: [i64; 3]) -> f64 {
    let dx = (a[0] - b[0]) as f64;
    let dy = (a[1] - b[1]) as f64;
    let dz = (a[2] - b[2]) as f64;
    dx * dx + dy * dy + dz * dz
}

pub(crate) struct Solution {
    /// Sink index per source.
    pub sink_of: Vec<u32>,
}

/// Lookup grid over the sink bounding box for ring searches.
struct SinkGrid {
    lo: [i64; 3],
    dims: [usize; 3],
    ids: Vec<u32>,
}

impl SinkGrid {
    fn build(sinks: &[[i64; 3]]) -> SinkGrid {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for s in sinks {
            for k in 0..3 {
                lo[k] = lo[k].min(s[k]);
                hi[k] = hi[k].max(s[k]);
            }
        }
        let mut dims = [0usize; 3];
        for k in 0..3 {
            dims[k] = (hi[k] - lo[k] + 1) as usize;
        }
        let mut ids = vec![NONE; dims[0] * dims[1] * dims[2]];
        for (i, s) in sinks.iter().enumerate() {
            let idx = (((s[2] - lo[2]) as usize * dims[1] + (s[1] - lo[1]) as usize) * dims[0])
                + (s[0] - lo[0]) as usize;
            ids[idx] = i as u32;
        }
        SinkGrid { lo, dims, ids }
    }

    #[inline]
    fn id_at(&self, c: [i64; 3]) -> u32 {
        for k in 0..3 {
            if c[k] < self.lo[k] || c[k] >= self.lo[k] + self.dims[k] as i64 {
                return NONE;
            }
        }
        let idx = (((c[2] - self.lo[2]) as usize * self.dims[1]
            + (c[1] - self.lo[1]) as usize)
            * self.dims[0])
            + (c[0] - self.lo[0]) as usize;
        self.ids[idx]
    }

    fn max_ring(&self, src: [i64; 3]) -> i64 {
        let mut r = 0i64;
        for k in 0..3 {
            let a = (src[k] - self.lo[k]).abs();
            let b = (src[k] - (self.lo[k] + self.dims[k] as i64 - 1)).abs();
            r = r.max(a.max(b));
        }
        r
    }

    /// The `k` sinks nearest to `src` (all of them when fewer exist), sorted
    /// by squared distance then id. Exact: rings are expanded until the next
    /// ring cannot beat the current k-th best.
    fn nearest(&self, dim: usize, src: [i64; 3], k: usize) -> Vec<(u32, f64)> {
        let mut found: Vec<(i64, u32)> = Vec::new();
        let max_r = self.max_ring(src);
        let mut r = 0i64;
        while r <= max_r {
            self.for_shell(dim, src, r, |c, id| {
                let dx = c[0] - src[0];
                let dy = c[1] - src[1];
                let dz = c[2] - src[2];
                found.push((dx * dx + dy * dy + dz * dz, id));
            });
            if found.len() >= k {
                found.sort_unstable();
                found.truncate(k);
                let kth = found[k - 1].0;
                if (r + 1) * (r + 1) > kth {
                    break;
                }
            }
            r += 1;
        }
        found.sort_unstable();
        found.truncate(k);
        found.into_iter().map(|(q, id)| (id, q as f64)).collect()
    }

    /// Visit sinks on the Chebyshev shell of radius `r` around `src`.
    fn for_shell(&self, dim: usize, src: [i64; 3], r: i64, mut f: impl FnMut([i64; 3], u32)) {
        let mut try_cell = |c: [i64; 3]| {
            let id = self.id_at(c);
            if id != NONE {
                f(c, id);
            }
        };
        if r == 0 {
            try_cell(src);
            return;
        }
        match dim {
            1 => {
                try_cell([src[0] - r, src[1], src[2]]);
                try_cell([src[0] + r, src[1], src[2]]);
            }
            2 => {
                for x in -r..=r {
                    try_cell([src[0] + x, src[1] - r, src[2]]);
                    try_cell([src[0] + x, src[1] + r, src[2]]);
                }
                for y in -r + 1..=r - 1 {
                    try_cell([src[0] - r, src[1] + y, src[2]]);
                    try_cell([src[0] + r, src[1] + y, src[2]]);
                }
            }
            _ => {
                for y in -r..=r {
                    for x in -r..=r {
                        try_cell([src[0] + x, src[1] + y, src[2] - r]);
                        try_cell([src[0] + x, src[1] + y, src[2] + r]);
                    }
                }
                for z in -r + 1..=r - 1 {
                    for x in -r..=r {
                        try_cell([src[0] + x, src[1] - r, src[2] + z]);
                        try_cell([src[0] + x, src[1] + r, src[2] + z]);
                    }
                    for y in -r + 1..=r - 1 {
                        try_cell([src[0] - r, src[1] + y, src[2] + z]);
                        try_cell([src[0] + r, src[1] + y, src[2] + z]);
                    }
                }
            }
        }
    }
}

/// Shortest augmenting path phase for one source. Potentials keep reduced
/// costs non-negative, so plain Dijkstra applies; ties break on sink id.
struct Jv {
    sink_of: Vec<u32>,
    src_of: Vec<u32>,
    u: Vec<f64>,
    v: Vec<f64>,
    dist: Vec<f64>,
    pred: Vec<u32>,
    stamp: Vec<u32>,
    done: Vec<u32>,
    epoch: u32,
}

impl Jv {
    fn new(n: usize, m: usize) -> Jv {
        Jv {
            sink_of: vec![NONE; n],
            src_of: vec![NONE; m],
            u: vec![0.0; n],
            v: vec![0.0; m],
            dist: vec![0.0; m],
            pred: vec![NONE; m],
            stamp: vec![0; m],
            done: vec![0; m],
            epoch: 0,
        }
    }

    fn run(&mut self, n: usize, adj: &[Vec<(u32, f64)>]) -> bool {
        let mut heap: BinaryHeap<Reverse<(OrdF64, u32)>> = BinaryHeap::new();
        let mut finalized: Vec<u32> = Vec::new();
        for s in 0..n {
            self.epoch += 1;
            heap.clear();
            finalized.clear();
            for &(j, c) in &adj[s] {
                let rd = (c - self.u[s] - self.v[j as usize]).max(0.0);
                self.relax(j, rd, s as u32, &mut heap);
            }
            let mut hit = NONE;
            let mut hit_dist = 0.0;
            while let Some(Reverse((OrdF64(d), j))) = heap.pop() {
                let ju = j as usize;
                if self.done[ju] == self.epoch || d > self.dist[ju] {
                    continue;
                }
                self.done[ju] = self.epoch;
                finalized.push(j);
                if self.src_of[ju] == NONE {
                    hit = j;
                    hit_dist = d;
                    break;
                }
                let i = self.src_of[ju] as usize;
                for &(j2, c2) in &adj[i] {
                    if self.done[j2 as usize] == self.epoch {
                        continue;
                    }
                    let rd = (c2 - self.u[i] - self.v[j2 as usize]).max(0.0);
                    self.relax(j2, d + rd, i as u32, &mut heap);
                }
            }
            if hit == NONE {
                return false;
            }
            for &j in &finalized {
                let ju = j as usize;
                if j == hit {
                    continue;
                }
                let delta = self.dist[ju] - hit_dist;
                self.v[ju] += delta;
                let i = self.src_of[ju];
                debug_assert_ne!(i, NONE);
                self.u[i as usize] -= delta;
            }
            self.u[s] += hit_dist;
            // flip matched edges along the augmenting path
            let mut j = hit;
            loop {
                let i = self.pred[j as usize];
                let prev = self.sink_of[i as usize];
                self.sink_of[i as usize] = j;
                self.src_of[j as usize] = i;
                if i as usize == s {
                    break;
                }
                j = prev;
            }
        }
        true
    }

    #[inline]
    fn relax(&mut self, j: u32, d: f64, from: u32, heap: &mut BinaryHeap<Reverse<(OrdF64, u32)>>) {
        let ju = j as usize;
        if self.stamp[ju] != self.epoch || d < self.dist[ju] {
            self.stamp[ju] = self.epoch;
            self.dist[ju] = d;
            self.pred[ju] = from;
            heap.push(Reverse((OrdF64(d), j)));
        }
    }
}

pub(crate) enum SolveFail {
    /// More sources than sinks.
    TooFewSinks,
    /// Edge generation kept finding violations; should not happen.
    Stalled,
}

/// Solve the transportation problem exactly. `sources` and `sinks` are cell
/// indices; costs are `|center difference|^p`.
pub(crate) fn solve_transport(
    dim: usize,
    sources: &[[i64; 3]],
    sinks: &[[i64; 3]],
    p: f64,
    h: f64,
) -> Result<Solution, SolveFail> {
    let n = sources.len();
    let m = sinks.len();
    if n == 0 {
        return Ok(Solution { sink_of: Vec::new() });
    }
    if n > m {
        return Err(SolveFail::TooFewSinks);
    }
    let grid = SinkGrid::build(sinks);
    // dense cutoff: small problems skip candidate generation entirely
    let mut k = if n * m <= 50_000 { m } else { 24.min(m) };
    let mut extra: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    for _round in 0..64 {
        let mut adj: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        for (i, &s) in sources.iter().enumerate() {
            let mut edges: Vec<(u32, f64)> = if k >= m {
                (0..m as u32)
                    .map(|j| (j, cost_from_d2(d2(s, sinks[j as usize]), p, h)))
                    .collect()
            } else {
                grid.nearest(dim, s, k)
                    .into_iter()
                    .map(|(j, q)| (j, cost_from_d2(q, p, h)))
                    .collect()
            };
            for &j in &extra[i] {
                if !edges.iter().any(|&(e, _)| e == j) {
                    edges.push((j, cost_from_d2(d2(s, sinks[j as usize]), p, h)));
                }
            }
            adj.push(edges);
        }
        let mut jv = Jv::new(n, m);
        if !jv.run(n, &adj) {
            if k >= m {
                return Err(SolveFail::TooFewSinks);
            }
            k = (k * 2).min(m);
            continue;
        }
        let mut max_cost = 0.0f64;
        for (i, &s) in sources.iter().enumerate() {
            let c = cost_from_d2(d2(s, sinks[jv.sink_of[i] as usize]), p, h);
            max_cost = max_cost.max(c);
        }
        if k >= m {
            return Ok(Solution { sink_of: jv.sink_of });
        }
        // dual feasibility against the full sink set
        let tol = 1e-9 * max_cost.max(1.0);
        let mut violations = 0usize;
        for (i, &s) in sources.iter().enumerate() {
            let ui = jv.u[i];
            for (j, &t) in sinks.iter().enumerate() {
                if cost_from_d2(d2(s, t), p, h) - ui - jv.v[j] < -tol {
                    extra[i].insert(j as u32);
                    violations += 1;
                }
            }
        }
        if violations == 0 {
            return Ok(Solution { sink_of: jv.sink_of });
        }
        k = (k * 2).min(m);
    }
    Err(SolveFail::Stalled)
}
