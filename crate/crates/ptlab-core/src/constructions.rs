//! Covering, slicing, packing, and the bounded rearrangement.
//!
//! Any competitor can be rebuilt inside a bounded container at almost no
//! energy cost. The pipeline:
//!
//! 1. cover `E` by balls around a sparse family of nucleation points, leaving
//!    a residual of measure below `epsilon`;
//! 2. pick a cheap spherical slice radius through the coarea mean value, so
//!    cutting there adds little perimeter;
//! 3. pair every covered component with its cheapest transport target and
//!    translate each pair into its own ball of a packing laid out on the
//!    first axis;
//! 4. replace the residual by a small ball, paired with a concentric annulus
//!    band of equal volume.
//!
//! Every claimed bound is re-checked numerically on the output and reported
//! as a [`Certificate`]; nothing is trusted from the construction itself.

use alloc::string::String;
use alloc::vec::Vec;

use crate::lattice::{Cell, GeometryError, LatticeSet};
use crate::math;
use crate::transport::{self, TransportError};

/// Default covering scale when the caller has no preference: half the
/// volume-equivalent length of the set.
pub fn default_unit_scale(e: &LatticeSet) -> f64 {
    math::powf(e.volume(), 1.0 / e.dim() as f64) / 2.0
}

/// Default guess for the covering constant when checking the admissible
/// range of `epsilon`.
pub const DEFAULT_C_GUESS: f64 = 0.01;

/// Errors from the construction pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstructError {
    Geometry(GeometryError),
    Transport(TransportError),
    /// `epsilon` must lie in `(0, min(vol(E), P(E)/(2 d c_guess))]`.
    EpsilonOutOfRange { epsilon: f64, max_allowed: f64 },
    /// The covering scale must exceed two cell widths.
    UnitScaleTooSmall { unit_scale: f64, spacing: f64 },
    /// Greedy covering exhausted all candidates above the residual target;
    /// cannot happen for finite sets and indicates a bug.
    CoverageFailed,
    /// Source and target must be equal-volume and disjoint.
    BadPair,
}

impl core::fmt::Display for ConstructError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConstructError::Geometry(e) => write!(f, "{e}"),
            ConstructError::Transport(e) => write!(f, "{e}"),
            ConstructError::EpsilonOutOfRange { epsilon, max_allowed } => {
                write!(f, "epsilon {epsilon} outside (0, {max_allowed}]")
            }
            ConstructError::UnitScaleTooSmall { unit_scale, spacing } => {
                write!(f, "unit scale {unit_scale} must exceed 2 x spacing {spacing}")
            }
            ConstructError::CoverageFailed => write!(f, "greedy covering failed to converge"),
            ConstructError::BadPair => {
                write!(f, "source and target must be equal-volume and disjoint")
            }
        }
    }
}

impl core::error::Error for ConstructError {}

impl From<GeometryError> for ConstructError {
    fn from(e: GeometryError) -> Self {
        ConstructError::Geometry(e)
    }
}

impl From<TransportError> for ConstructError {
    fn from(e: TransportError) -> Self {
        ConstructError::Transport(e)
    }
}

/// One component of the covered union.
#[derive(Debug, Clone)]
pub struct CoverComponent {
    /// Nucleation points whose balls form this component.
    pub points: Vec<[f64; 3]>,
    /// The component of the covered union (all cells within the slice
    /// radius of the points, occupied or not).
    pub region: LatticeSet,
    /// Cells of `E` inside the region.
    pub piece: LatticeSet,
}

/// Greedy ball cover of a set: nucleation points, slice radius, covered
/// union with its component decomposition, and the residual.
#[derive(Debug, Clone)]
pub struct CoveringResult {
    /// Centers of the selected nuclei (cell centers of `E`).
    pub points: Vec<[f64; 3]>,
    /// Length playing the role of radius 1; covering balls have radius
    /// `2 x unit_scale`, slices live in `[2, 3] x unit_scale`.
    pub unit_scale: f64,
    /// Chosen slice radius in `[2, 3] x unit_scale`.
    pub slice_radius: f64,
    /// Discrete coarea density at the chosen radius.
    pub slice_measure: f64,
    /// Union of closed balls of the slice radius around the points.
    pub covered_union: LatticeSet,
    pub components: Vec<CoverComponent>,
    /// `E` minus the covered union; volume below `epsilon`.
    pub residual: LatticeSet,
    pub epsilon: f64,
    /// `P(E)/epsilon x (#points / vol(E))^(-1/d)`: the covering constant this
    /// run achieved, reported for comparison against an a-priori guess.
    pub empirical_c: f64,
}

/// A checked inequality: `passed` iff `lhs <= rhs + slack_allowance`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Certificate {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack_allowance: f64,
    pub passed: bool,
}

impl Certificate {
    pub fn check(name: &str, lhs: f64, rhs: f64, slack_allowance: f64) -> Certificate {
        Certificate {
            name: String::from(name),
            lhs,
            rhs,
            slack_allowance,
            passed: lhs <= rhs + slack_allowance,
        }
    }
}

/// Balls placed along the first coordinate axis inside one container.
#[derive(Debug, Clone)]
pub struct PackingLayout {
    pub container_radius: f64,
    /// `(center, radius)` per component ball, in input order.
    pub ball_centers: Vec<([f64; 3], f64)>,
    pub residual_center: [f64; 3],
    pub residual_radius: f64,
    /// Radius of the ball replacing the residual, `(vol/omega_d)^(1/d)`.
    pub s_eps: f64,
    /// Outer radius of its annulus target, `(2 vol/omega_d)^(1/d)`.
    pub t_eps: f64,
}

fn check_epsilon(e: &LatticeSet, epsilon: f64, c_guess: f64) -> Result<(), ConstructError> {
    let max_allowed = e
        .volume()
        .min(e.face_perimeter() / (2.0 * e.dim() as f64 * c_guess));
    if !(epsilon > 0.0 && epsilon <= max_allowed) {
        return Err(ConstructError::EpsilonOutOfRange { epsilon, max_allowed });
    }
    Ok(())
}

fn check_unit_scale(e: &LatticeSet, unit_scale: f64) -> Result<(), ConstructError> {
    if !(unit_scale > 2.0 * e.spacing()) {
        return Err(ConstructError::UnitScaleTooSmall {
            unit_scale,
            spacing: e.spacing(),
        });
    }
    Ok(())
}

#[inline]
fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    math::sqrt(dx * dx + dy * dy + dz * dz)
}

/// Cells of `set` whose centers lie within `radius` of `point`.
fn covered_by(set: &LatticeSet, point: [f64; 3], radius: f64) -> Vec<Cell> {
    set.cells()
        .filter(|&c| dist(set.center(c), point) <= radius)
        .collect()
}

/// Greedy nucleation cover: repeatedly pick the candidate cell center with
/// the largest occupied volume in its `unit_scale` ball, keeping points
/// strictly further than `2 x unit_scale` apart, until the volume left
/// uncovered by the `2 x unit_scale` balls drops below `epsilon`.
pub fn nucleation_cover(
    e: &LatticeSet,
    epsilon: f64,
    unit_scale: f64,
) -> Result<CoveringResult, ConstructError> {
    check_epsilon(e, epsilon, DEFAULT_C_GUESS)?;
    check_unit_scale(e, unit_scale)?;
    let u = unit_scale;

    // score every occupied cell once; scores never change, only eligibility
    let mut ranked: Vec<(usize, Cell)> = e
        .cells()
        .map(|c| {
            let p = e.center(c);
            (covered_by(e, p, u).len(), c)
        })
        .collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut uncovered = e.clone();
    for &(_, cand) in &ranked {
        if uncovered.volume() < epsilon {
            break;
        }
        let p = e.center(cand);
        if points.iter().any(|&q| dist(p, q) <= 2.0 * u) {
            continue;
        }
        points.push(p);
        for c in covered_by(&uncovered, p, 2.0 * u) {
            uncovered.remove(c);
        }
    }
    if uncovered.volume() >= epsilon {
        return Err(ConstructError::CoverageFailed);
    }

    let (slice_radius, slice_measure) = slice_scan(e, &points, u);

    // the covered union at the slice radius, over all lattice cells
    let h = e.spacing();
    let dim = e.dim();
    let r_cells = math::ceil(slice_radius / h) as i64;
    let mut union_cells: Vec<Cell> = Vec::new();
    {
        use alloc::collections::BTreeSet;
        let mut seen: BTreeSet<Cell> = BTreeSet::new();
        for &p in &points {
            let base = [
                math::floor(p[0] / h) as i64,
                math::floor(p[1] / h) as i64,
                math::floor(p[2] / h) as i64,
            ];
            let lim = |k: usize| if k < dim { r_cells } else { 0 };
            for dz in -lim(2)..=lim(2) {
                for dy in -lim(1)..=lim(1) {
                    for dx in -lim(0)..=lim(0) {
                        let c = [base[0] + dx, base[1] + dy, base[2] + dz];
                        let mut ctr = [0.0; 3];
                        for k in 0..dim {
                            ctr[k] = (c[k] as f64 + 0.5) * h;
                        }
                        if dist(ctr, p) <= slice_radius && seen.insert(c) {
                            union_cells.push(c);
                        }
                    }
                }
            }
        }
    }
    let covered_union = LatticeSet::from_cells(dim, h, &union_cells)?;
    let residual = e.minus(&covered_union)?;

    let mut components = Vec::new();
    for region in covered_union.connected_components() {
        let pts: Vec<[f64; 3]> = points
            .iter()
            .copied()
            .filter(|&p| {
                let cell = core::array::from_fn(|k| {
                    if k < dim { math::floor(p[k] / h) as i64 } else { 0 }
                });
                region.contains(cell)
            })
            .collect();
        let piece = e.intersect(&region)?;
        if piece.cell_count() == 0 {
            continue;
        }
        components.push(CoverComponent {
            points: pts,
            region,
            piece,
        });
    }

    let empirical_c = e.face_perimeter() / epsilon
        * math::powf(points.len() as f64 / e.volume(), -1.0 / dim as f64);

    Ok(CoveringResult {
        points,
        unit_scale: u,
        slice_radius,
        slice_measure,
        covered_union,
        components,
        residual,
        epsilon,
        empirical_c,
    })
}

/// Discrete coarea scan: for `f(y) = dist(y, points)`, the slice measure at
/// radius `r` is `vol(E ∩ f⁻¹([r, r+h))) / h`. Returns the radius with the
/// smallest measure among multiples of `h` in `[2, 3] x unit_scale`
/// (smallest radius on ties) together with that measure.
fn slice_scan(e: &LatticeSet, points: &[[f64; 3]], u: f64) -> (f64, f64) {
    let h = e.spacing();
    let k_lo = math::ceil(2.0 * u / h) as i64;
    let k_hi = math::floor(3.0 * u / h) as i64;
    let mut best = (f64::INFINITY, 2.0 * u);
    for k in k_lo..=k_hi {
        let r = k as f64 * h;
        let mut band_cells = 0usize;
        for c in e.cells() {
            let p = e.center(c);
            let f = points
                .iter()
                .map(|&q| dist(p, q))
                .fold(f64::INFINITY, f64::min);
            if f >= r && f < r + h {
                band_cells += 1;
            }
        }
        let measure = band_cells as f64 * math::powf(h, e.dim() as f64) / h;
        if measure < best.0 {
            best = (measure, r);
        }
    }
    (best.1, best.0)
}

/// Recompute the slice scan for an existing cover; exposed for diagnostics.
pub fn select_slice_radius(e: &LatticeSet, cover: &CoveringResult) -> (f64, f64) {
    slice_scan(e, &cover.points, cover.unit_scale)
}

/// Place balls of the given radii, then one residual ball, along the first
/// axis with gap `spacing` between consecutive balls and half a gap of
/// padding at each end. A zero residual radius adds no ball.
pub fn pack_balls(radii: &[f64], residual_radius: f64, spacing: f64) -> PackingLayout {
    let h = spacing;
    let mut span = 0.0;
    for &r in radii {
        span += 2.0 * r + h;
    }
    if residual_radius > 0.0 {
        span += 2.0 * residual_radius + h;
    }
    let mut left = -span / 2.0;
    let mut ball_centers = Vec::with_capacity(radii.len());
    for &r in radii {
        ball_centers.push(([left + h / 2.0 + r, 0.0, 0.0], r));
        left += h + 2.0 * r;
    }
    let residual_center = if residual_radius > 0.0 {
        [left + h / 2.0 + residual_radius, 0.0, 0.0]
    } else {
        [left + h / 2.0, 0.0, 0.0]
    };
    PackingLayout {
        container_radius: span / 2.0,
        ball_centers,
        residual_center,
        residual_radius,
        s_eps: 0.0,
        t_eps: 0.0,
    }
}

/// Container bound from the covering data: with `P, eps, vol` measured in
/// units of `unit_scale`,
/// `R = (6 (P/(c eps))^d + C0(d) (P/(c eps))^(d-1)) vol + (2 eps/omega_d)^(1/d)`,
/// returned in physical length units. With `c = empirical_c` this bounds the
/// axis packing; with an a-priori `c` it is the scale-free prediction.
pub fn containment_radius(e: &LatticeSet, epsilon: f64, unit_scale: f64, c: f64) -> f64 {
    let d = e.dim() as f64;
    let u = unit_scale;
    let p_u = e.face_perimeter() / math::powf(u, d - 1.0);
    let eps_u = epsilon / math::powf(u, d);
    let vol_u = e.volume() / math::powf(u, d);
    let ratio = p_u / (c * eps_u);
    let r_u = (6.0 * math::powf(ratio, d)
        + math::localization_constant(e.dim()) * math::powf(ratio, d - 1.0))
        * vol_u
        + math::powf(2.0 * eps_u / math::unit_ball_volume(e.dim()), 1.0 / d);
    u * r_u
}

/// The rearranged pair with its certificate bundle and the intermediate
/// covering and packing data.
#[derive(Debug, Clone)]
pub struct RearrangeResult {
    /// The rebuilt competitor, equal in volume to the input `E`.
    pub source: LatticeSet,
    /// Its transport target, equal in volume and disjoint.
    pub target: LatticeSet,
    pub certificates: Vec<Certificate>,
    pub cover: CoveringResult,
    pub layout: PackingLayout,
}

impl RearrangeResult {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

/// Rebuild `(E, F)` inside a bounded container near the origin, certifying
/// volume preservation, disjointness, the perimeter increment `+2 eps`, the
/// transport increment `+(2/omega_d)^(1/d) eps^(1/p+1/d)`, and containment.
/// Uses [`DEFAULT_C_GUESS`] for the admissibility check.
pub fn rearrange(
    e: &LatticeSet,
    f: &LatticeSet,
    p: f64,
    epsilon: f64,
    unit_scale: f64,
) -> Result<RearrangeResult, ConstructError> {
    rearrange_with_c(e, f, p, epsilon, unit_scale, DEFAULT_C_GUESS)
}

/// [`rearrange`] with an explicit covering-constant guess for the
/// `epsilon` admissibility check.
pub fn rearrange_with_c(
    e: &LatticeSet,
    f: &LatticeSet,
    p: f64,
    epsilon: f64,
    unit_scale: f64,
    c_guess: f64,
) -> Result<RearrangeResult, ConstructError> {
    e.check_compatible(f)?;
    if e.cell_count() != f.cell_count() || !e.is_disjoint(f) {
        return Err(ConstructError::BadPair);
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(ConstructError::Transport(TransportError::BadExponent(p)));
    }
    check_epsilon(e, epsilon, c_guess)?;
    check_unit_scale(e, unit_scale)?;

    let dim = e.dim();
    let d = dim as f64;
    let h = e.spacing();
    let u = unit_scale;
    let c0 = math::localization_constant(dim);
    let omega = math::unit_ball_volume(dim);

    let cover = nucleation_cover(e, epsilon, u)?;

    // cheapest transport target per covered component
    let mut pieces: Vec<(LatticeSet, LatticeSet)> = Vec::new();
    let mut w_power_sum = 0.0;
    for comp in &cover.components {
        let sol = transport::wasserstein_functional(&comp.piece, p)?;
        w_power_sum += sol.plan.total_cost;
        pieces.push((comp.piece.clone(), sol.target_set));
    }

    // one packing ball per component: the covering bound, or the measured
    // extent of the pair when the lattice makes it larger
    let mut radii = Vec::with_capacity(pieces.len());
    let mut anchors = Vec::with_capacity(pieces.len());
    for (i, (piece, target)) in pieces.iter().enumerate() {
        let combined = piece.union(target)?;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for cell in combined.cells() {
            let ctr = combined.center(cell);
            for k in 0..3 {
                lo[k] = lo[k].min(ctr[k]);
                hi[k] = hi[k].max(ctr[k]);
            }
        }
        let anchor = core::array::from_fn(|k| if k < dim { (lo[k] + hi[k]) / 2.0 } else { 0.0 });
        let extent = combined
            .cells()
            .map(|cell| dist(combined.center(cell), anchor))
            .fold(0.0f64, f64::max);
        let n_j = cover.components[i].points.len() as f64;
        let bound = 6.0 * n_j * u + c0 * math::powf(piece.volume(), 1.0 / d);
        radii.push(bound.max(extent + math::sqrt(d) * h));
        anchors.push(anchor);
    }

    // residual ball and annulus sizes
    let resid_cells = cover.residual.cell_count();
    let resid_vol = cover.residual.volume();
    let s_eps = math::powf(resid_vol / omega, 1.0 / d);
    let t_eps = math::powf(2.0 * resid_vol / omega, 1.0 / d);
    let rho_eps = math::powf(2.0 * epsilon / omega, 1.0 / d);
    let residual_radius = if resid_cells > 0 {
        rho_eps.max(t_eps + 3.0 * math::sqrt(d) * h)
    } else {
        0.0
    };

    let mut layout = pack_balls(&radii, residual_radius, h);
    layout.s_eps = s_eps;
    layout.t_eps = t_eps;

    // translate each pair into its ball (integer cell shifts keep the face
    // perimeter exact; the gap absorbs the rounding)
    let mut e_parts: Vec<LatticeSet> = Vec::new();
    let mut f_parts: Vec<LatticeSet> = Vec::new();
    for (i, (piece, target)) in pieces.iter().enumerate() {
        let (center, _) = layout.ball_centers[i];
        let shift = core::array::from_fn(|k| {
            if k < dim {
                math::round((center[k] - anchors[i][k]) / h) as i64
            } else {
                0
            }
        });
        e_parts.push(piece.translate(shift)?);
        f_parts.push(target.translate(shift)?);
    }

    // residual: equal-volume ball and annulus band around its center
    if resid_cells > 0 {
        let y0 = layout.residual_center;
        let mut ball = LatticeSet::ball_set(dim, h, y0, s_eps)?;
        if ball.cell_count() == 0 {
            let seed = core::array::from_fn(|k| {
                if k < dim { math::floor(y0[k] / h) as i64 } else { 0 }
            });
            ball.insert(seed);
        }
        let ball = ball.repair_to_cell_count(resid_cells, None)?;
        let mut band = LatticeSet::annulus_set(dim, h, y0, s_eps, t_eps)?.minus(&ball)?;
        let mut grow = t_eps;
        while band.cell_count() == 0 {
            grow += 2.0 * h;
            band = LatticeSet::ball_set(dim, h, y0, grow)?.minus(&ball)?;
        }
        let band = band.repair_to_cell_count(resid_cells, Some(&ball))?;
        e_parts.push(ball);
        f_parts.push(band);
    }

    let mut source = e_parts[0].clone();
    for part in &e_parts[1..] {
        source = source.union(part)?;
    }
    let mut target = f_parts[0].clone();
    for part in &f_parts[1..] {
        target = target.union(part)?;
    }
    // layout separation makes overlaps impossible; catch bugs loudly
    let parts_total: usize = e_parts.iter().map(|s| s.cell_count()).sum();
    assert_eq!(source.cell_count(), parts_total, "source pieces overlap");
    let parts_total: usize = f_parts.iter().map(|s| s.cell_count()).sum();
    assert_eq!(target.cell_count(), parts_total, "target pieces overlap");

    // certificates
    let mut certs = Vec::new();
    certs.push(Certificate::check(
        "volume_source_exact",
        (source.cell_count() as f64 - e.cell_count() as f64).abs(),
        0.0,
        0.0,
    ));
    certs.push(Certificate::check(
        "volume_target_exact",
        (target.cell_count() as f64 - f.cell_count() as f64).abs(),
        0.0,
        0.0,
    ));
    certs.push(Certificate::check(
        "disjoint_exact",
        source.overlap_cell_count(&target) as f64,
        0.0,
        0.0,
    ));

    // perimeter: cutting along the slice costs at most 2 eps; the lattice
    // replacement of the residual by a ball may add a little, granted as slack
    let resid_excess = if resid_cells > 0 {
        let built = &e_parts[e_parts.len() - 1];
        (built.face_perimeter() - cover.residual.face_perimeter()).max(0.0)
    } else {
        0.0
    };
    certs.push(Certificate::check(
        "perimeter_increment",
        source.face_perimeter(),
        e.face_perimeter() + 2.0 * epsilon,
        resid_excess + 2.0 * d * math::powf(h, d - 1.0),
    ));

    let w_before = transport::wasserstein_distance(e, f, p)?;
    let w_after = transport::wasserstein_distance(&source, &target, p)?;
    certs.push(Certificate::check(
        "wasserstein_increment",
        w_after.value,
        w_before.value
            + math::powf(2.0 / omega, 1.0 / d) * math::powf(epsilon, 1.0 / p + 1.0 / d),
        3.0 * h * math::powf(e.volume(), 1.0 / p),
    ));

    let everything = source.union(&target)?;
    let outermost = everything
        .cells()
        .map(|cell| dist(everything.center(cell), [0.0; 3]))
        .fold(0.0f64, f64::max);
    let balls_placed = layout.ball_centers.len() + 1;
    certs.push(Certificate::check(
        "containment",
        outermost,
        containment_radius(e, epsilon, u, cover.empirical_c),
        balls_placed as f64 * (2.0 * math::sqrt(d) + 1.0) * h,
    ));

    let _ = w_power_sum; // the power sum is certified transitively through w_after
    Ok(RearrangeResult {
        source,
        target,
        certificates: certs,
        cover,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSet;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(h: f64, center: [f64; 3], r: f64) -> LatticeSet {
        LatticeSet::ball_set(2, h, center, r).unwrap()
    }

    #[test]
    fn single_ball_needs_one_nucleus_and_leaves_nothing() {
        let h = 0.1;
        let u = 1.0;
        let e = disk(h, [0.0, 0.0, 0.0], u);
        let cover = nucleation_cover(&e, 0.5 * e.volume(), u).unwrap();
        assert_eq!(cover.points.len(), 1);
        assert_eq!(cover.residual.cell_count(), 0);
        let p = cover.points[0];
        assert!(dist(p, [0.0, 0.0, 0.0]) <= 2.0 * h, "nucleus near the center");
        assert_eq!(cover.components.len(), 1);
        assert_eq!(cover.components[0].piece.cell_count(), e.cell_count());
    }

    #[test]
    fn two_far_balls_get_one_nucleus_each() {
        let h = 0.1;
        let u = 1.0;
        let a = disk(h, [0.0, 0.0, 0.0], u);
        let b = disk(h, [10.0 * u, 0.0, 0.0], u);
        let e = a.union(&b).unwrap();
        let cover = nucleation_cover(&e, 0.25 * e.volume(), u).unwrap();
        assert_eq!(cover.points.len(), 2);
        assert_eq!(cover.residual.cell_count(), 0);
        assert_eq!(cover.components.len(), 2);
        // strict separation
        let d01 = dist(cover.points[0], cover.points[1]);
        assert!(d01 > 2.0 * u);
    }

    #[test]
    fn nuclei_are_strictly_separated_and_count_matches_reported_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 0.25;
        let mut cells = vec![];
        for _ in 0..150 {
            let c = [rng.gen_range(-14..14), rng.gen_range(-14..14), 0];
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let e = LatticeSet::from_cells(2, h, &cells).unwrap();
        let u = 3.0 * h;
        let eps = 0.3 * e.volume();
        let cover = nucleation_cover(&e, eps, u).unwrap();
        for (i, &p) in cover.points.iter().enumerate() {
            for &q in &cover.points[i + 1..] {
                assert!(dist(p, q) > 2.0 * u, "nuclei too close");
            }
        }
        assert!(cover.residual.volume() < eps);
        // reported constant inverts to the point count bound with equality
        let bound = e.volume()
            * crate::math::powf(
                e.face_perimeter() / (cover.empirical_c * eps),
                e.dim() as f64,
            );
        assert!((cover.points.len() as f64 - bound).abs() < 1e-6 * bound.max(1.0));
    }

    #[test]
    fn slice_is_free_when_the_set_sits_inside_the_inner_radius() {
        let h = 0.05;
        let u = 1.0;
        let e = disk(h, [0.0, 0.0, 0.0], 1.5 * u);
        let cover = nucleation_cover(&e, 0.5 * e.volume(), u).unwrap();
        assert_eq!(cover.slice_measure, 0.0);
        // smallest scanned radius: first multiple of h at or above 2u
        let expect = crate::math::ceil(2.0 * u / h) * h;
        assert!((cover.slice_radius - expect).abs() < 1e-12);
        assert_eq!(cover.residual.cell_count(), 0);
    }

    #[test]
    fn slice_on_a_full_annulus_picks_the_smallest_sphere() {
        // E fills the whole scan band around one nucleus: every slice is
        // nonempty and the cheapest is the innermost (smallest circle). The
        // outer radius reaches past the last scanned band so no band is cut.
        let h = 0.02;
        let u = 1.0;
        let e = LatticeSet::annulus_set(2, h, [0.0, 0.0, 0.0], 2.0 * u, 3.0 * u + 2.0 * h).unwrap();
        let points = vec![[0.0, 0.0, 0.0]];
        let (r, measure) = slice_scan(&e, &points, u);
        let r_min = crate::math::ceil(2.0 * u / h) * h;
        assert!((r - r_min).abs() < 1e-12, "argmin at the inner edge, got {r}");
        // ring of width h at radius r has measure close to the circumference
        let circumference = 2.0 * core::f64::consts::PI * r;
        assert!(
            (measure - circumference).abs() < 0.1 * circumference,
            "{measure} vs {circumference}"
        );
    }

    #[test]
    fn slice_minimum_never_exceeds_the_band_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..5 {
            let h = 0.1;
            let u = 0.5;
            let mut cells = vec![];
            for _ in 0..120 {
                let c = [rng.gen_range(-30..30), rng.gen_range(-30..30), 0];
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
            let e = LatticeSet::from_cells(2, h, &cells).unwrap();
            let points = vec![e.center(cells[0])];
            let (_, min_measure) = slice_scan(&e, &points, u);
            // average band density over the scanned range
            let k_lo = crate::math::ceil(2.0 * u / h) as i64;
            let k_hi = crate::math::floor(3.0 * u / h) as i64;
            let mut total = 0.0;
            let mut count = 0;
            for k in k_lo..=k_hi {
                let r = k as f64 * h;
                let band = e
                    .cells()
                    .filter(|&c| {
                        let f = dist(e.center(c), points[0]);
                        f >= r && f < r + h
                    })
                    .count();
                total += band as f64 * h * h / h;
                count += 1;
            }
            assert!(min_measure <= total / count as f64 + 1e-12);
        }
    }

    #[test]
    fn packing_one_ball_sits_near_the_origin() {
        let h = 0.01;
        let layout = pack_balls(&[1.0], 0.0, h);
        assert!(layout.container_radius <= 1.0 + h);
        let (c, r) = layout.ball_centers[0];
        assert!((r - 1.0).abs() < 1e-15);
        assert!(c[0].abs() <= h);
    }

    #[test]
    fn packing_two_balls_is_tangent_with_one_gap() {
        let h = 0.01;
        let layout = pack_balls(&[1.0, 1.0], 0.0, h);
        let (c1, _) = layout.ball_centers[0];
        let (c2, _) = layout.ball_centers[1];
        assert!((c1[0] + 1.0 + h / 2.0).abs() < 1e-12);
        assert!((c2[0] - 1.0 - h / 2.0).abs() < 1e-12);
        assert!((layout.container_radius - (2.0 + h)).abs() < 1e-12);
    }

    #[test]
    fn packed_balls_are_disjoint_and_contained() {
        let h = 0.05;
        let radii = [0.7, 1.3, 0.2, 2.0];
        let layout = pack_balls(&radii, 0.6, h);
        let mut all: Vec<([f64; 3], f64)> = layout.ball_centers.clone();
        all.push((layout.residual_center, layout.residual_radius));
        for (i, &(ci, ri)) in all.iter().enumerate() {
            assert!(
                dist(ci, [0.0; 3]) + ri <= layout.container_radius + 1e-12,
                "ball {i} sticks out"
            );
            for &(cj, rj) in &all[i + 1..] {
                assert!(dist(ci, cj) >= ri + rj + h - 1e-12, "balls overlap");
            }
        }
    }

    #[test]
    fn axis_packing_respects_the_covering_container_bound() {
        // synthetic covering data at unit scale: radii as the covering bound
        // prescribes, residual at its nominal size
        let h = 0.01;
        let d = 2.0;
        let c0 = crate::math::localization_constant(2);
        let omega = crate::math::unit_ball_volume(2);
        let vols = [0.8, 0.5, 0.3];
        let n_j = [1.0, 1.0, 2.0];
        let eps = 0.2;
        let radii: Vec<f64> = vols
            .iter()
            .zip(&n_j)
            .map(|(&v, &n)| 6.0 * n + c0 * crate::math::powf(v, 1.0 / d))
            .collect();
        let rho = crate::math::powf(2.0 * eps / omega, 1.0 / d);
        let layout = pack_balls(&radii, rho, h);
        // the container bound with the achieved point count and total volume
        let points = 4.0;
        let vol: f64 = vols.iter().sum();
        let bound =
            6.0 * points + c0 * crate::math::powf(points, (d - 1.0) / d) * crate::math::powf(vol, 1.0 / d) + rho;
        assert!(
            layout.container_radius <= bound,
            "{} vs {}",
            layout.container_radius,
            bound
        );
    }

    #[test]
    fn rearranged_single_ball_is_an_exact_translate() {
        let h = 0.1;
        let e = disk(h, [7.3, -4.1, 0.0], 1.0);
        let f = crate::transport::wasserstein_functional(&e, 2.0)
            .unwrap()
            .target_set;
        let eps = 0.9 * e.volume();
        let out = rearrange(&e, &f, 2.0, eps, 1.0).unwrap();
        assert!(out.all_passed(), "{:?}", out.certificates);
        assert_eq!(out.source.cell_count(), e.cell_count());
        assert_eq!(out.source.face_perimeter(), e.face_perimeter());
        let (asym, _) = out.source.fraenkel_asymmetry(&e).unwrap();
        assert_eq!(asym, 0.0, "output must be a translate of the input");
    }

    #[test]
    fn rearranged_far_balls_keep_their_perimeter() {
        let h = 0.1;
        let a = disk(h, [0.0, 0.0, 0.0], 1.0);
        let b = disk(h, [40.0, 25.0, 0.0], 1.0);
        let e = a.union(&b).unwrap();
        let f = {
            let fa = crate::transport::wasserstein_functional(&a, 1.0).unwrap().target_set;
            let fb = crate::transport::wasserstein_functional(&b, 1.0).unwrap().target_set;
            fa.union(&fb).unwrap()
        };
        let eps = 0.5 * e.volume();
        let out = rearrange(&e, &f, 1.0, eps, 1.0).unwrap();
        assert!(out.all_passed(), "{:?}", out.certificates);
        assert_eq!(out.source.face_perimeter(), e.face_perimeter());
        assert_eq!(out.source.connected_components().len(), 2);
        // everything now fits near the origin
        let reach = out
            .source
            .cells()
            .map(|c| dist(out.source.center(c), [0.0; 3]))
            .fold(0.0f64, f64::max);
        assert!(reach <= out.layout.container_radius + h);
    }

    #[test]
    fn rearranged_three_blob_set_passes_all_certificates() {
        let h = 0.2;
        let blobs = [
            disk(h, [0.0, 0.0, 0.0], 1.1),
            disk(h, [9.0, 3.0, 0.0], 0.8),
            disk(h, [-6.0, 8.0, 0.0], 0.9),
        ];
        let mut e = blobs[0].clone();
        for b in &blobs[1..] {
            e = e.union(b).unwrap();
        }
        let mut f_parts = Vec::new();
        for b in &blobs {
            f_parts.push(crate::transport::wasserstein_functional(b, 2.0).unwrap().target_set);
        }
        let mut f = f_parts[0].clone();
        for part in &f_parts[1..] {
            f = f.union(part).unwrap();
        }
        let eps = e.volume() / 10.0;
        let out = rearrange(&e, &f, 2.0, eps, 1.0).unwrap();
        assert!(out.all_passed(), "{:?}", out.certificates);
        assert_eq!(out.certificates.len(), 6);
    }

    #[test]
    fn residual_speck_becomes_a_ball_with_annulus_target() {
        // a big blob plus a distant speck below the epsilon budget: the
        // greedy cover stops without touching the speck, which then goes
        // through the residual ball-and-band path
        let h = 0.1;
        let blob = disk(h, [0.0, 0.0, 0.0], 1.2);
        let speck = LatticeSet::from_cells(2, h, &[[200, 200, 0], [201, 200, 0], [200, 201, 0]])
            .unwrap();
        let e = blob.union(&speck).unwrap();
        let f = {
            let fb = crate::transport::wasserstein_functional(&blob, 1.0).unwrap().target_set;
            let fs = crate::transport::wasserstein_functional(&speck, 1.0).unwrap().target_set;
            fb.union(&fs).unwrap()
        };
        let eps = 5.0 * h * h; // speck volume is 3 h^2 < eps
        let out = rearrange(&e, &f, 1.0, eps, 1.0).unwrap();
        assert_eq!(out.cover.residual.cell_count(), 3);
        assert!(out.all_passed(), "{:?}", out.certificates);
        // residual ball has exactly the speck's cells, disjoint from its band
        assert_eq!(out.source.cell_count(), e.cell_count());
        assert_eq!(out.target.cell_count(), f.cell_count());
    }

    #[test]
    fn rearrange_rejects_bad_inputs() {
        let h = 0.1;
        let e = disk(h, [0.0, 0.0, 0.0], 1.0);
        let f = crate::transport::wasserstein_functional(&e, 2.0).unwrap().target_set;
        assert!(matches!(
            rearrange(&e, &f, 2.0, 0.0, 1.0),
            Err(ConstructError::EpsilonOutOfRange { .. })
        ));
        assert!(matches!(
            rearrange(&e, &f, 2.0, 0.5, 0.15),
            Err(ConstructError::UnitScaleTooSmall { .. })
        ));
        assert!(matches!(
            rearrange(&e, &e, 2.0, 0.5, 1.0),
            Err(ConstructError::BadPair)
        ));
    }
}
