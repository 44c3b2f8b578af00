//! Finite unions of cubic lattice cells and their exact geometry.
//!
//! A [`LatticeSet`] is an occupancy window over `Z^d` (`d = 1, 2, 3`) with a
//! fixed cell spacing `h`. The cell with index `i` covers the half-open cube
//! `[i*h, (i+1)*h)^d`, so volume is `count * h^d` and the face perimeter is
//! the number of occupied/empty face pairs times `h^(d-1)`, both exact.
//! Windows are bookkeeping only: two sets are equal when they occupy the same
//! absolute cells with the same spacing, whatever their windows.

use alloc::vec;
use alloc::vec::Vec;
use alloc::collections::VecDeque;
use core::fmt;

use crate::math;
use crate::perimeter;

/// Absolute cell index. Axes beyond the set dimension are pinned to zero.
pub type Cell = [i64; 3];

/// Errors for geometry constructors and operations.
#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// Dimension outside `1..=3`.
    DimOutOfRange(usize),
    /// Spacing not strictly positive and finite.
    BadSpacing(f64),
    /// A cell uses an axis beyond the set dimension.
    CellOutsideDim { cell: Cell, dim: usize },
    /// Two operands live on different dimensions.
    DimMismatch { left: usize, right: usize },
    /// Two operands live on different spacings.
    SpacingMismatch { left: f64, right: f64 },
    /// Operation requires a non-empty set.
    EmptySet,
    /// Rescale factor below one.
    ScaleBelowOne(f64),
    /// Requested volume is more than 10% away from the rasterized volume.
    RepairOutOfRange { raster_cells: usize, target_cells: usize },
    /// Volume repair ran out of admissible cells to add or remove.
    RepairStuck,
    /// Cell counts differ by more than one cell where equality is required.
    CellCountMismatch { left: usize, right: usize },
    /// Operation requires dimension at least two.
    NeedsPlanarDim(usize),
    /// Annulus radii are not `0 <= r_in <= r_out`.
    BadAnnulus { r_in: f64, r_out: f64 },
    /// Negative ball radius.
    BadRadius(f64),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DimOutOfRange(d) => write!(f, "dimension {d} not in 1..=3"),
            GeometryError::BadSpacing(h) => write!(f, "spacing {h} must be positive and finite"),
            GeometryError::CellOutsideDim { cell, dim } => {
                write!(f, "cell {cell:?} uses axes beyond dimension {dim}")
            }
            GeometryError::DimMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            GeometryError::SpacingMismatch { left, right } => {
                write!(f, "spacing mismatch: {left} vs {right}")
            }
            GeometryError::EmptySet => write!(f, "operation requires a non-empty set"),
            GeometryError::ScaleBelowOne(l) => write!(f, "rescale factor {l} must be >= 1"),
            GeometryError::RepairOutOfRange {
                raster_cells,
                target_cells,
            } => write!(
                f,
                "target of {target_cells} cells is more than 10% away from raster of {raster_cells}"
            ),
            GeometryError::RepairStuck => write!(f, "volume repair has no admissible cell left"),
            GeometryError::CellCountMismatch { left, right } => {
                write!(f, "cell counts {left} and {right} differ by more than one")
            }
            GeometryError::NeedsPlanarDim(d) => {
                write!(f, "operation requires dimension >= 2, got {d}")
            }
            GeometryError::BadAnnulus { r_in, r_out } => {
                write!(f, "annulus radii must satisfy 0 <= r_in <= r_out, got {r_in}, {r_out}")
            }
            GeometryError::BadRadius(r) => write!(f, "radius {r} must be non-negative"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// Exact and estimated geometry of one set in a single record.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometrySummary {
    pub volume: f64,
    pub face_perimeter: f64,
    /// Reconstructed boundary length; estimator, not exact (see
    /// [`LatticeSet::euclid_perimeter`]).
    pub euclid_perimeter: f64,
    pub component_count: usize,
    /// Largest distance from the volume centroid to an occupied cell center.
    pub bounding_radius: f64,
}

/// Isoperimetric deficit `(P(S) - P(B)) / P(B)` against the equal-volume ball,
/// measured with the reconstructed boundary length. Values below `-0.05` are
/// clamped and flagged: they can only come from estimator error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IsoDeficit {
    pub value: f64,
    pub clamped: bool,
}

const DEFICIT_CLAMP: f64 = -0.05;

#[derive(Clone, Debug, Default, PartialEq)]
struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    fn new(len: usize) -> Self {
        Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            core::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }
}

/// Occupancy window over the cubic lattice; see the module docs.
#[derive(Clone, Debug)]
pub struct LatticeSet {
    dim: usize,
    spacing: f64,
    origin: [i64; 3],
    shape: [usize; 3],
    bits: Bits,
}

fn check_dim_spacing(dim: usize, spacing: f64) -> Result<(), GeometryError> {
    if !(1..=3).contains(&dim) {
        return Err(GeometryError::DimOutOfRange(dim));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(GeometryError::BadSpacing(spacing));
    }
    Ok(())
}

fn cell_in_dim(dim: usize, cell: Cell) -> bool {
    cell[dim..].iter().all(|&c| c == 0)
}

impl LatticeSet {
    /// Empty set with a zero-size window.
    pub fn empty(dim: usize, spacing: f64) -> Result<Self, GeometryError> {
        check_dim_spacing(dim, spacing)?;
        let mut shape = [1; 3];
        shape[..dim].fill(0);
        Ok(LatticeSet {
            dim,
            spacing,
            origin: [0; 3],
            shape,
            bits: Bits::new(0),
        })
    }

    /// Set occupying exactly `cells`, with a tight window.
    pub fn from_cells(dim: usize, spacing: f64, cells: &[Cell]) -> Result<Self, GeometryError> {
        check_dim_spacing(dim, spacing)?;
        if cells.is_empty() {
            return Self::empty(dim, spacing);
        }
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for &c in cells {
            if !cell_in_dim(dim, c) {
                return Err(GeometryError::CellOutsideDim { cell: c, dim });
            }
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let mut shape = [1usize; 3];
        for k in 0..dim {
            shape[k] = (hi[k] - lo[k] + 1) as usize;
        }
        let mut origin = [0i64; 3];
        origin[..dim].copy_from_slice(&lo[..dim]);
        let mut set = LatticeSet {
            dim,
            spacing,
            origin,
            shape,
            bits: Bits::new(shape[0] * shape[1] * shape[2]),
        };
        for &c in cells {
            let idx = set.index_of(c).expect("cell inside computed window");
            set.bits.set(idx, true);
        }
        Ok(set)
    }

    /// Set with an explicit window and row-major occupancy (`x` fastest, then
    /// `y`, then `z`). The window is preserved as given, which is what keeps
    /// file round-trips byte-exact.
    pub fn from_occupancy(
        dim: usize,
        spacing: f64,
        origin: [i64; 3],
        shape: [usize; 3],
        occupancy: impl IntoIterator<Item = bool>,
    ) -> Result<Self, GeometryError> {
        check_dim_spacing(dim, spacing)?;
        if !cell_in_dim(dim, origin) || shape[dim..].iter().any(|&s| s != 1) {
            return Err(GeometryError::CellOutsideDim { cell: origin, dim });
        }
        let n = shape[0] * shape[1] * shape[2];
        let mut bits = Bits::new(n);
        let mut written = 0usize;
        for (i, v) in occupancy.into_iter().take(n).enumerate() {
            bits.set(i, v);
            written += 1;
        }
        debug_assert_eq!(written, n, "occupancy shorter than window");
        Ok(LatticeSet {
            dim,
            spacing,
            origin,
            shape,
            bits,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [i64; 3] {
        self.origin
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Row-major occupancy of the current window, `x` fastest.
    pub fn occupancy(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.shape[0] * self.shape[1] * self.shape[2]).map(|i| self.bits.get(i))
    }

    fn index_of(&self, cell: Cell) -> Option<usize> {
        let mut idx = 0usize;
        for k in (0..3).rev() {
            let local = cell[k] - self.origin[k];
            if local < 0 || local >= self.shape[k] as i64 {
                return None;
            }
            idx = idx * self.shape[k] + local as usize;
        }
        Some(idx)
    }

    fn cell_at(&self, idx: usize) -> Cell {
        let x = idx % self.shape[0];
        let y = (idx / self.shape[0]) % self.shape[1];
        let z = idx / (self.shape[0] * self.shape[1]);
        [
            self.origin[0] + x as i64,
            self.origin[1] + y as i64,
            self.origin[2] + z as i64,
        ]
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.index_of(cell).is_some_and(|i| self.bits.get(i))
    }

    pub fn cell_count(&self) -> usize {
        self.bits.count()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }

    /// Occupied cells in window row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.bits.iter_ones().map(|i| self.cell_at(i))
    }

    /// Center coordinates of a cell, `(i + 1/2) h` per active axis.
    pub fn center(&self, cell: Cell) -> [f64; 3] {
        let mut c = [0.0; 3];
        for k in 0..self.dim {
            c[k] = (cell[k] as f64 + 0.5) * self.spacing;
        }
        c
    }

    /// Grow the window so `cell` fits, with a small margin to amortize.
    fn ensure_window(&mut self, cell: Cell) {
        if self.index_of(cell).is_some() {
            return;
        }
        const MARGIN: i64 = 4;
        let mut lo = self.origin;
        let mut hi = [0i64; 3];
        for k in 0..3 {
            hi[k] = self.origin[k] + self.shape[k] as i64 - 1;
        }
        if self.bits.len == 0 {
            lo = cell;
            hi = cell;
        }
        let mut new_lo = lo;
        let mut new_hi = hi;
        for k in 0..self.dim {
            if cell[k] < lo[k] {
                new_lo[k] = cell[k] - MARGIN;
            }
            if cell[k] > hi[k] {
                new_hi[k] = cell[k] + MARGIN;
            }
        }
        let mut shape = [1usize; 3];
        let mut origin = [0i64; 3];
        for k in 0..self.dim {
            origin[k] = new_lo[k];
            shape[k] = (new_hi[k] - new_lo[k] + 1) as usize;
        }
        let mut grown = LatticeSet {
            dim: self.dim,
            spacing: self.spacing,
            origin,
            shape,
            bits: Bits::new(shape[0] * shape[1] * shape[2]),
        };
        for c in self.cells() {
            let idx = grown.index_of(c).expect("old cell inside grown window");
            grown.bits.set(idx, true);
        }
        *self = grown;
    }

    /// Insert a cell, growing the window when needed. Returns whether the set
    /// changed. Panics if the cell uses axes beyond the set dimension.
    pub fn insert(&mut self, cell: Cell) -> bool {
        assert!(cell_in_dim(self.dim, cell), "cell {cell:?} outside dim {}", self.dim);
        self.ensure_window(cell);
        let idx = self.index_of(cell).expect("window grown to fit");
        let was = self.bits.get(idx);
        self.bits.set(idx, true);
        !was
    }

    /// Remove a cell. Returns whether the set changed.
    pub fn remove(&mut self, cell: Cell) -> bool {
        match self.index_of(cell) {
            Some(idx) => {
                let was = self.bits.get(idx);
                self.bits.set(idx, false);
                was
            }
            None => false,
        }
    }

    /// Copy with the window shrunk to the occupied bounding box.
    pub fn normalized(&self) -> LatticeSet {
        let cells: Vec<Cell> = self.cells().collect();
        LatticeSet::from_cells(self.dim, self.spacing, &cells).expect("cells are valid")
    }

    pub fn volume(&self) -> f64 {
        self.cell_count() as f64 * math::powf(self.spacing, self.dim as f64)
    }

    /// Face neighbors of a cell (2d of them).
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let dim = self.dim;
        (0..dim).flat_map(move |k| {
            [-1i64, 1].into_iter().map(move |s| {
                let mut n = cell;
                n[k] += s;
                n
            })
        })
    }

    /// Number of occupied face neighbors.
    pub fn occupied_neighbors(&self, cell: Cell) -> usize {
        self.neighbors(cell).filter(|&n| self.contains(n)).count()
    }

    /// Exact boundary measure: occupied/empty face pairs times `h^(d-1)`.
    pub fn face_perimeter(&self) -> f64 {
        let mut faces = 0usize;
        for c in self.cells() {
            faces += 2 * self.dim - self.occupied_neighbors(c);
        }
        faces as f64 * math::powf(self.spacing, self.dim as f64 - 1.0)
    }

    /// Boundary length (`d = 2`) or area (`d = 3`) of a piecewise-linear
    /// interface reconstructed through the boundary cells. Estimator: accurate
    /// to about a percent on well-resolved sets but not exact; use
    /// [`LatticeSet::face_perimeter`] wherever certificates need exactness.
    /// For `d = 1` the interface is the endpoint set and the count is exact.
    pub fn euclid_perimeter(&self) -> f64 {
        if self.dim == 1 {
            return self.face_perimeter();
        }
        self.connected_components()
            .iter()
            .map(perimeter::component_euclid_perimeter)
            .sum()
    }

    /// Face-connected components, ordered by their first cell in window
    /// row-major order; each comes with a tight window.
    pub fn connected_components(&self) -> Vec<LatticeSet> {
        let mut seen = Bits::new(self.bits.len);
        let mut out = Vec::new();
        for start in self.bits.iter_ones() {
            if seen.get(start) {
                continue;
            }
            let mut component = Vec::new();
            let mut queue = VecDeque::new();
            seen.set(start, true);
            queue.push_back(self.cell_at(start));
            while let Some(c) = queue.pop_front() {
                component.push(c);
                for n in self.neighbors(c) {
                    if let Some(idx) = self.index_of(n) {
                        if self.bits.get(idx) && !seen.get(idx) {
                            seen.set(idx, true);
                            queue.push_back(n);
                        }
                    }
                }
            }
            out.push(
                LatticeSet::from_cells(self.dim, self.spacing, &component)
                    .expect("component cells are valid"),
            );
        }
        out
    }

    /// Translate by whole cells. Occupancy words are untouched, so geometry is
    /// preserved bit-exactly.
    pub fn translate(&self, v: Cell) -> Result<LatticeSet, GeometryError> {
        if !cell_in_dim(self.dim, v) {
            return Err(GeometryError::CellOutsideDim { cell: v, dim: self.dim });
        }
        let mut out = self.clone();
        for k in 0..self.dim {
            out.origin[k] += v[k];
        }
        Ok(out)
    }

    /// Volume centroid of the occupied cell centers.
    pub fn centroid(&self) -> Result<[f64; 3], GeometryError> {
        let n = self.cell_count();
        if n == 0 {
            return Err(GeometryError::EmptySet);
        }
        let mut acc = [0.0; 3];
        for c in self.cells() {
            let ctr = self.center(c);
            for k in 0..3 {
                acc[k] += ctr[k];
            }
        }
        Ok([acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
    }

    /// Largest distance from the centroid to an occupied cell center.
    pub fn bounding_radius(&self) -> Result<f64, GeometryError> {
        let ctr = self.centroid()?;
        let mut best = 0.0f64;
        for c in self.cells() {
            let p = self.center(c);
            let d2: f64 = (0..3).map(|k| (p[k] - ctr[k]) * (p[k] - ctr[k])).sum();
            best = best.max(d2);
        }
        Ok(math::sqrt(best))
    }

    pub fn summary(&self) -> GeometrySummary {
        let component_count = self.connected_components().len();
        GeometrySummary {
            volume: self.volume(),
            face_perimeter: self.face_perimeter(),
            euclid_perimeter: self.euclid_perimeter(),
            component_count,
            bounding_radius: self.bounding_radius().unwrap_or(0.0),
        }
    }

    /// Dilation by `ell >= 1` via re-rasterization: cell `j` survives when the
    /// center of `j` lies inside the scaled set, i.e. `floor((j + 1/2)/ell)`
    /// is occupied. Integer `ell` therefore replicates each cell into an
    /// `ell^d` block, which scales volume by `ell^d` and the face perimeter by
    /// `ell^(d-1)` exactly. With `target_volume` the result is repaired to
    /// `round(target_volume / h^d)` cells; a target more than 10% away from
    /// the raster volume is rejected.
    pub fn rescale(
        &self,
        ell: f64,
        target_volume: Option<f64>,
    ) -> Result<LatticeSet, GeometryError> {
        if !(ell.is_finite() && ell >= 1.0) {
            return Err(GeometryError::ScaleBelowOne(ell));
        }
        let mut cells = Vec::new();
        if !self.is_empty() {
            let mut lo = [0i64; 3];
            let mut hi = [0i64; 3];
            for k in 0..self.dim {
                let a = self.origin[k];
                let b = self.origin[k] + self.shape[k] as i64;
                lo[k] = math::floor(a as f64 * ell) as i64 - 1;
                hi[k] = math::floor(b as f64 * ell) as i64 + 1;
            }
            let mut j = lo;
            loop {
                let mut src = [0i64; 3];
                for k in 0..self.dim {
                    src[k] = math::floor((j[k] as f64 + 0.5) / ell) as i64;
                }
                if self.contains(src) {
                    cells.push(j);
                }
                // advance the d-dimensional counter
                let mut k = 0;
                loop {
                    if k == self.dim {
                        break;
                    }
                    j[k] += 1;
                    if j[k] <= hi[k] {
                        break;
                    }
                    j[k] = lo[k];
                    k += 1;
                }
                if k == self.dim {
                    break;
                }
            }
        }
        let scaled = LatticeSet::from_cells(self.dim, self.spacing, &cells)?;
        match target_volume {
            None => Ok(scaled),
            Some(tv) => {
                let hv = math::powf(self.spacing, self.dim as f64);
                let target_cells = math::round(tv / hv) as usize;
                let raster_cells = scaled.cell_count();
                let raster_volume = raster_cells as f64 * hv;
                if math::abs(raster_volume - tv) > 0.10 * tv {
                    return Err(GeometryError::RepairOutOfRange {
                        raster_cells,
                        target_cells,
                    });
                }
                scaled.repair_to_cell_count(target_cells, None)
            }
        }
    }

    /// Adjust the cell count to `target` by repeatedly adding the outside
    /// face-adjacent cell (or removing the boundary cell) with the smallest
    /// face-perimeter increase, ties broken by lexicographic `(x, y, z)` cell
    /// index. `forbidden` cells are never added.
    pub fn repair_to_cell_count(
        &self,
        target: usize,
        forbidden: Option<&LatticeSet>,
    ) -> Result<LatticeSet, GeometryError> {
        let mut set = self.clone();
        while set.cell_count() < target {
            // candidates: empty cells sharing a face with the set
            let mut best: Option<(i64, Cell)> = None;
            let mut cand: Vec<Cell> = Vec::new();
            for c in set.cells() {
                for n in set.neighbors(c) {
                    if !set.contains(n) && forbidden.is_none_or(|f| !f.contains(n)) {
                        cand.push(n);
                    }
                }
            }
            cand.sort_unstable();
            cand.dedup();
            for n in cand {
                // adding n flips 2d faces: currently-empty neighbors add one
                // each, occupied neighbors remove one each
                let occ = set.occupied_neighbors(n) as i64;
                let delta = 2 * self.dim as i64 - 2 * occ;
                if best.as_ref().is_none_or(|&(bd, bc)| (delta, n) < (bd, bc)) {
                    best = Some((delta, n));
                }
            }
            match best {
                Some((_, c)) => {
                    set.insert(c);
                }
                None => return Err(GeometryError::RepairStuck),
            }
        }
        while set.cell_count() > target {
            let mut best: Option<(i64, Cell)> = None;
            for c in set.cells() {
                let occ = set.occupied_neighbors(c) as i64;
                if occ == 2 * self.dim as i64 {
                    continue; // interior
                }
                let delta = 2 * occ - 2 * self.dim as i64;
                if best.as_ref().is_none_or(|&(bd, bc)| (delta, c) < (bd, bc)) {
                    best = Some((delta, c));
                }
            }
            match best {
                Some((_, c)) => {
                    set.remove(c);
                }
                None => return Err(GeometryError::RepairStuck),
            }
        }
        Ok(set.normalized())
    }

    /// Smallest translation (in cells) of `other` minimizing the symmetric
    /// difference with `self`, scanned exhaustively over every shift that can
    /// produce overlap. Returns the dimensionless asymmetry
    /// `vol(self symdiff shifted) / vol(self)` and the best shift. Cell counts
    /// may differ by at most one.
    pub fn fraenkel_asymmetry(&self, other: &LatticeSet) -> Result<(f64, Cell), GeometryError> {
        self.check_compatible(other)?;
        let n1 = self.cell_count();
        let n2 = other.cell_count();
        if n1 == 0 || n2 == 0 {
            return Err(GeometryError::EmptySet);
        }
        if n1.abs_diff(n2) > 1 {
            return Err(GeometryError::CellCountMismatch { left: n1, right: n2 });
        }
        let c1 = self.centroid()?;
        let c2 = other.centroid()?;
        let h = self.spacing;
        let mut base = [0i64; 3];
        for k in 0..self.dim {
            base[k] = math::round((c1[k] - c2[k]) / h) as i64;
        }
        // any overlapping shift keeps the centroids within the summed radii
        let radius_cells =
            math::ceil((self.bounding_radius()? + other.bounding_radius()?) / h) as i64 + 1;
        let others: Vec<Cell> = other.cells().collect();
        let ranges: [(i64, i64); 3] = core::array::from_fn(|k| {
            if k < self.dim {
                (base[k] - radius_cells, base[k] + radius_cells)
            } else {
                (0, 0)
            }
        });
        let mut best = (0usize, base);
        let mut first = true;
        let mut cur = [ranges[0].0, ranges[1].0, ranges[2].0];
        loop {
            let mut overlap = 0usize;
            for &c in &others {
                let shifted = [c[0] + cur[0], c[1] + cur[1], c[2] + cur[2]];
                if self.contains(shifted) {
                    overlap += 1;
                }
            }
            if first || overlap > best.0 {
                best = (overlap, cur);
                first = false;
            }
            let mut k = 0;
            loop {
                if k == 3 {
                    break;
                }
                cur[k] += 1;
                if cur[k] <= ranges[k].1 {
                    break;
                }
                cur[k] = ranges[k].0;
                k += 1;
            }
            if k == 3 {
                break;
            }
        }
        let value = (n1 + n2 - 2 * best.0) as f64 / n1 as f64;
        Ok((value, best.1))
    }

    /// Isoperimetric deficit against the equal-volume ball, using the
    /// reconstructed boundary length. Requires `d >= 2` and a non-empty set.
    pub fn isoperimetric_deficit(&self) -> Result<IsoDeficit, GeometryError> {
        if self.dim < 2 {
            return Err(GeometryError::NeedsPlanarDim(self.dim));
        }
        if self.is_empty() {
            return Err(GeometryError::EmptySet);
        }
        let d = self.dim as f64;
        let omega = math::unit_ball_volume(self.dim);
        let r = math::powf(self.volume() / omega, 1.0 / d);
        let ball_perimeter = d * omega * math::powf(r, d - 1.0);
        Ok(clamp_deficit(
            (self.euclid_perimeter() - ball_perimeter) / ball_perimeter,
        ))
    }

    /// Cells whose centers lie in the closed ball `|x - center| <= r`.
    pub fn ball_set(
        dim: usize,
        spacing: f64,
        center: [f64; 3],
        r: f64,
    ) -> Result<LatticeSet, GeometryError> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(GeometryError::BadRadius(r));
        }
        Self::annulus_like(dim, spacing, center, 0.0, r)
    }

    /// Cells whose centers lie in the closed annulus `r_in <= |x - center| <=
    /// r_out`. With `r_in = 0` this is exactly [`LatticeSet::ball_set`].
    pub fn annulus_set(
        dim: usize,
        spacing: f64,
        center: [f64; 3],
        r_in: f64,
        r_out: f64,
    ) -> Result<LatticeSet, GeometryError> {
        if !(r_in.is_finite() && r_out.is_finite() && 0.0 <= r_in && r_in <= r_out) {
            return Err(GeometryError::BadAnnulus { r_in, r_out });
        }
        Self::annulus_like(dim, spacing, center, r_in, r_out)
    }

    fn annulus_like(
        dim: usize,
        spacing: f64,
        center: [f64; 3],
        r_in: f64,
        r_out: f64,
    ) -> Result<LatticeSet, GeometryError> {
        check_dim_spacing(dim, spacing)?;
        let h = spacing;
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for k in 0..dim {
            lo[k] = math::floor((center[k] - r_out) / h) as i64 - 1;
            hi[k] = math::floor((center[k] + r_out) / h) as i64 + 1;
        }
        let mut cells = Vec::new();
        let mut cur = lo;
        loop {
            let mut d2 = 0.0;
            for k in 0..dim {
                let x = (cur[k] as f64 + 0.5) * h - center[k];
                d2 += x * x;
            }
            let dist = math::sqrt(d2);
            if dist >= r_in && dist <= r_out {
                cells.push(cur);
            }
            let mut k = 0;
            loop {
                if k == dim {
                    break;
                }
                cur[k] += 1;
                if cur[k] <= hi[k] {
                    break;
                }
                cur[k] = lo[k];
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        LatticeSet::from_cells(dim, spacing, &cells)
    }

    pub fn check_compatible(&self, other: &LatticeSet) -> Result<(), GeometryError> {
        if self.dim != other.dim {
            return Err(GeometryError::DimMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        if self.spacing != other.spacing {
            return Err(GeometryError::SpacingMismatch {
                left: self.spacing,
                right: other.spacing,
            });
        }
        Ok(())
    }

    pub fn is_disjoint(&self, other: &LatticeSet) -> bool {
        let (small, big) = if self.cell_count() <= other.cell_count() {
            (self, other)
        } else {
            (other, self)
        };
        small.cells().all(|c| !big.contains(c))
    }

    pub fn overlap_cell_count(&self, other: &LatticeSet) -> usize {
        let (small, big) = if self.cell_count() <= other.cell_count() {
            (self, other)
        } else {
            (other, self)
        };
        small.cells().filter(|&c| big.contains(c)).count()
    }

    pub fn intersect(&self, other: &LatticeSet) -> Result<LatticeSet, GeometryError> {
        self.check_compatible(other)?;
        let cells: Vec<Cell> = self.cells().filter(|&c| other.contains(c)).collect();
        LatticeSet::from_cells(self.dim, self.spacing, &cells)
    }

    pub fn minus(&self, other: &LatticeSet) -> Result<LatticeSet, GeometryError> {
        self.check_compatible(other)?;
        let cells: Vec<Cell> = self.cells().filter(|&c| !other.contains(c)).collect();
        LatticeSet::from_cells(self.dim, self.spacing, &cells)
    }

    pub fn union(&self, other: &LatticeSet) -> Result<LatticeSet, GeometryError> {
        self.check_compatible(other)?;
        let mut cells: Vec<Cell> = self.cells().collect();
        cells.extend(other.cells().filter(|&c| !self.contains(c)));
        LatticeSet::from_cells(self.dim, self.spacing, &cells)
    }
}

fn clamp_deficit(value: f64) -> IsoDeficit {
    if value < DEFICIT_CLAMP {
        IsoDeficit {
            value: DEFICIT_CLAMP,
            clamped: true,
        }
    } else {
        IsoDeficit {
            value,
            clamped: false,
        }
    }
}

impl PartialEq for LatticeSet {
    /// Geometric equality: same dimension, same spacing, same absolute cells.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.spacing == other.spacing
            && self.cell_count() == other.cell_count()
            && self.cells().all(|c| other.contains(c))
    }
}

impl Eq for LatticeSet {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set2(cells: &[(i64, i64)], h: f64) -> LatticeSet {
        let cells: Vec<Cell> = cells.iter().map(|&(x, y)| [x, y, 0]).collect();
        LatticeSet::from_cells(2, h, &cells).unwrap()
    }

    fn interval(start: i64, len: usize, h: f64) -> LatticeSet {
        let cells: Vec<Cell> = (start..start + len as i64).map(|x| [x, 0, 0]).collect();
        LatticeSet::from_cells(1, h, &cells).unwrap()
    }

    fn square(n: usize, h: f64) -> LatticeSet {
        let mut cells = Vec::new();
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                cells.push([x, y, 0]);
            }
        }
        LatticeSet::from_cells(2, h, &cells).unwrap()
    }

    /// Independent labeling oracle: repeated set expansion over a cell list,
    /// no shared code with `connected_components`.
    fn flood_components_oracle(cells: &[Cell]) -> Vec<BTreeSet<Cell>> {
        let all: BTreeSet<Cell> = cells.iter().copied().collect();
        let mut remaining = all.clone();
        let mut out = Vec::new();
        while let Some(&seed) = remaining.iter().next() {
            let mut comp = BTreeSet::new();
            comp.insert(seed);
            loop {
                let mut grew = false;
                let members: Vec<Cell> = comp.iter().copied().collect();
                for c in members {
                    for k in 0..3 {
                        for s in [-1i64, 1] {
                            let mut n = c;
                            n[k] += s;
                            if remaining.contains(&n) && comp.insert(n) {
                                grew = true;
                            }
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            for c in &comp {
                remaining.remove(c);
            }
            out.push(comp);
        }
        out
    }

    #[test]
    fn single_cell_measures() {
        for (dim, h) in [(1usize, 0.5f64), (2, 0.5), (3, 0.5)] {
            let s = LatticeSet::from_cells(dim, h, &[[0, 0, 0]]).unwrap();
            assert_eq!(s.cell_count(), 1);
            assert!((s.volume() - math::powf(h, dim as f64)).abs() < 1e-15);
            let expect = 2.0 * dim as f64 * math::powf(h, dim as f64 - 1.0);
            assert!((s.face_perimeter() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn l_tromino_perimeter() {
        // three cells in an L: 12 faces minus 2 shared pairs = 8
        let s = set2(&[(0, 0), (1, 0), (0, 1)], 1.0);
        assert_eq!(s.face_perimeter(), 8.0);
        assert_eq!(s.volume(), 3.0);
    }

    #[test]
    fn unit_square_100_cells() {
        let s = square(10, 0.1);
        assert!((s.volume() - 1.0).abs() < 1e-12);
        assert!((s.face_perimeter() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interval_perimeter_is_endpoint_count() {
        let s = interval(3, 7, 0.25);
        assert_eq!(s.face_perimeter(), 2.0);
        assert!((s.volume() - 7.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn equality_ignores_window() {
        let tight = set2(&[(0, 0), (1, 1)], 1.0);
        let occupancy = [
            false, false, false, false, //
            false, true, false, false, //
            false, false, true, false, //
            false, false, false, false,
        ];
        let loose =
            LatticeSet::from_occupancy(2, 1.0, [-1, -1, 0], [4, 4, 1], occupancy).unwrap();
        assert_eq!(tight, loose);
        assert_eq!(loose.shape(), [4, 4, 1]); // window preserved as given
    }

    #[test]
    fn translate_preserves_geometry_bit_exact() {
        let s = set2(&[(0, 0), (1, 0), (0, 1), (5, 5)], 0.125);
        let t = s.translate([7, -3, 0]).unwrap();
        assert_eq!(s.face_perimeter().to_bits(), t.face_perimeter().to_bits());
        assert_eq!(s.volume().to_bits(), t.volume().to_bits());
        let back = t.translate([-7, 3, 0]).unwrap();
        assert_eq!(s, back);
        assert!(t.contains([12, 2, 0]));
    }

    #[test]
    fn components_match_flood_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for dim in [1usize, 2, 3] {
            for _ in 0..20 {
                let n = rng.gen_range(1..40);
                let span = 6i64;
                let mut cells = BTreeSet::new();
                for _ in 0..n {
                    let mut c = [0i64; 3];
                    for k in c.iter_mut().take(dim) {
                        *k = rng.gen_range(-span..=span);
                    }
                    cells.insert(c);
                }
                let cells: Vec<Cell> = cells.into_iter().collect();
                let s = LatticeSet::from_cells(dim, 1.0, &cells).unwrap();
                let got = s.connected_components();
                let want = flood_components_oracle(&cells);
                assert_eq!(got.len(), want.len(), "dim {dim} cells {cells:?}");
                let got_sets: BTreeSet<BTreeSet<Cell>> =
                    got.iter().map(|c| c.cells().collect()).collect();
                let want_sets: BTreeSet<BTreeSet<Cell>> = want.into_iter().collect();
                assert_eq!(got_sets, want_sets);
                // components partition the set
                assert_eq!(
                    got.iter().map(|c| c.cell_count()).sum::<usize>(),
                    s.cell_count()
                );
            }
        }
    }

    #[test]
    fn rescale_integer_factor_is_exact() {
        let s = set2(&[(0, 0), (1, 0), (0, 1)], 1.0);
        let r = s.rescale(2.0, None).unwrap();
        assert_eq!(r.cell_count(), 12);
        assert_eq!(r.face_perimeter(), 16.0); // 8 * 2^(d-1)
        let r3 = s.rescale(3.0, None).unwrap();
        assert_eq!(r3.cell_count(), 27);
        assert_eq!(r3.face_perimeter(), 24.0);
    }

    #[test]
    fn rescale_identity() {
        let s = set2(&[(0, 0), (2, 1), (1, 1)], 0.5);
        assert_eq!(s.rescale(1.0, None).unwrap(), s);
    }

    #[test]
    fn rescale_rejects_shrink() {
        let s = set2(&[(0, 0)], 1.0);
        assert!(matches!(
            s.rescale(0.5, None),
            Err(GeometryError::ScaleBelowOne(_))
        ));
    }

    #[test]
    fn rescale_with_volume_repair() {
        let s = square(4, 1.0);
        // 1.3^2 * 16 = 27.04; ask for 27 cells
        let r = s.rescale(1.3, Some(27.0)).unwrap();
        assert_eq!(r.cell_count(), 27);
        // more than 10% off is rejected
        assert!(matches!(
            s.rescale(1.3, Some(40.0)),
            Err(GeometryError::RepairOutOfRange { .. })
        ));
    }

    #[test]
    fn repair_tie_breaks_lexicographically() {
        let s = interval(0, 4, 1.0);
        let grown = s.repair_to_cell_count(5, None).unwrap();
        // both ends cost the same; (-1,0,0) < (4,0,0)
        assert!(grown.contains([-1, 0, 0]));
        assert!(!grown.contains([4, 0, 0]));
        let shrunk = s.repair_to_cell_count(3, None).unwrap();
        // both ends free the same 0 faces net; removal delta ties at the ends
        assert!(!shrunk.contains([0, 0, 0]));
        assert!(shrunk.contains([3, 0, 0]));
    }

    #[test]
    fn repair_respects_forbidden_cells() {
        let s = interval(0, 3, 1.0);
        let forbid = LatticeSet::from_cells(1, 1.0, &[[-1, 0, 0]]).unwrap();
        let grown = s.repair_to_cell_count(4, Some(&forbid)).unwrap();
        assert!(!grown.contains([-1, 0, 0]));
        assert!(grown.contains([3, 0, 0]));
    }

    #[test]
    fn ball_tiny_radius_is_one_cell() {
        let h = 0.2;
        // center of cell (3, -2): (0.7, -0.3)
        let s = LatticeSet::ball_set(2, h, [0.7, -0.3, 0.0], 0.09).unwrap();
        assert_eq!(s.cell_count(), 1);
        assert!(s.contains([3, -2, 0]));
    }

    #[test]
    fn annulus_with_zero_inner_radius_is_ball() {
        let b = LatticeSet::ball_set(2, 0.1, [0.31, 0.4, 0.0], 0.73).unwrap();
        let a = LatticeSet::annulus_set(2, 0.1, [0.31, 0.4, 0.0], 0.0, 0.73).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ball_volume_approaches_continuum() {
        let s = LatticeSet::ball_set(2, 0.01, [0.0, 0.0, 0.0], 1.0).unwrap();
        let err = (s.volume() - core::f64::consts::PI).abs() / core::f64::consts::PI;
        assert!(err < 0.01, "volume {} err {err}", s.volume());
    }

    #[test]
    fn fraenkel_identical_sets_zero_at_zero_shift() {
        let s = set2(&[(0, 0), (1, 0), (1, 1), (2, 1)], 0.5);
        let (val, shift) = s.fraenkel_asymmetry(&s).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(shift, [0, 0, 0]);
    }

    #[test]
    fn fraenkel_translate_recovers_shift() {
        let s = set2(&[(0, 0), (1, 0), (1, 1), (2, 1), (0, 2)], 1.0);
        let t = s.translate([9, -4, 0]).unwrap();
        let (val, shift) = s.fraenkel_asymmetry(&t).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(shift, [-9, 4, 0]);
    }

    #[test]
    fn fraenkel_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut a = BTreeSet::new();
            let mut b = BTreeSet::new();
            let n = rng.gen_range(3..9);
            while a.len() < n {
                a.insert([rng.gen_range(-3i64..4), rng.gen_range(-3i64..4), 0]);
            }
            while b.len() < n {
                b.insert([rng.gen_range(-3i64..4), rng.gen_range(-3i64..4), 0]);
            }
            let sa = LatticeSet::from_cells(2, 1.0, &a.iter().copied().collect::<Vec<_>>()).unwrap();
            let sb = LatticeSet::from_cells(2, 1.0, &b.iter().copied().collect::<Vec<_>>()).unwrap();
            let (got, _) = sa.fraenkel_asymmetry(&sb).unwrap();
            // oracle: scan a window 5x wider than the bounding data
            let mut best = usize::MAX;
            for vx in -40i64..=40 {
                for vy in -40i64..=40 {
                    let overlap = b
                        .iter()
                        .filter(|c| a.contains(&[c[0] + vx, c[1] + vy, 0]))
                        .count();
                    let sym = a.len() + b.len() - 2 * overlap;
                    best = best.min(sym);
                }
            }
            let want = best as f64 / a.len() as f64;
            assert!((got - want).abs() < 1e-12, "got {got} want {want}");
        }
    }

    #[test]
    fn deficit_clamps_below_threshold() {
        let d = clamp_deficit(-0.2);
        assert_eq!(d.value, DEFICIT_CLAMP);
        assert!(d.clamped);
        let ok = clamp_deficit(0.3);
        assert_eq!(ok.value, 0.3);
        assert!(!ok.clamped);
    }

    #[test]
    fn deficit_rejects_one_dimensional_sets() {
        let s = interval(0, 5, 1.0);
        assert!(matches!(
            s.isoperimetric_deficit(),
            Err(GeometryError::NeedsPlanarDim(1))
        ));
    }

    #[test]
    fn set_algebra_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut a = BTreeSet::new();
            let mut b = BTreeSet::new();
            for _ in 0..rng.gen_range(1..30) {
                a.insert([rng.gen_range(-4i64..5), rng.gen_range(-4i64..5), 0]);
            }
            for _ in 0..rng.gen_range(1..30) {
                b.insert([rng.gen_range(-4i64..5), rng.gen_range(-4i64..5), 0]);
            }
            let sa = LatticeSet::from_cells(2, 1.0, &a.iter().copied().collect::<Vec<_>>()).unwrap();
            let sb = LatticeSet::from_cells(2, 1.0, &b.iter().copied().collect::<Vec<_>>()).unwrap();
            let inter = sa.intersect(&sb).unwrap();
            let diff = sa.minus(&sb).unwrap();
            let uni = sa.union(&sb).unwrap();
            assert_eq!(inter.cell_count() + diff.cell_count(), sa.cell_count());
            assert_eq!(
                uni.cell_count() + inter.cell_count(),
                sa.cell_count() + sb.cell_count()
            );
            assert!(diff.is_disjoint(&sb));
        }
    }

    #[test]
    fn insert_grows_window() {
        let mut s = set2(&[(0, 0)], 1.0);
        assert!(s.insert([10, -7, 0]));
        assert!(s.contains([10, -7, 0]));
        assert!(s.contains([0, 0, 0]));
        assert_eq!(s.cell_count(), 2);
        assert!(!s.insert([10, -7, 0])); // already present
        assert!(s.remove([0, 0, 0]));
        assert!(!s.remove([0, 0, 0]));
    }

    #[test]
    fn summary_counts_components() {
        let s = set2(&[(0, 0), (1, 0), (8, 8)], 1.0);
        let sum = s.summary();
        assert_eq!(sum.component_count, 2);
        assert_eq!(sum.volume, 3.0);
        assert_eq!(sum.face_perimeter, 10.0);
        assert!(sum.bounding_radius > 0.0);
    }
}
