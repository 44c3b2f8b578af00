//! Total energy, the volume/penalty reformulation, and improvement steps.
//!
//! The energy of a set is `T(E) = P(E) + W_p(E)`: face perimeter plus the
//! cheapest equal-volume transport cost. Scaling a minimizer reformulates a
//! penalty weight `lambda` into a prescribed volume `m` through
//! `lambda = m^(1/p + 2/d - 1)`, so the laboratory works at fixed volume and
//! converts on demand.
//!
//! The improvement step turns a wasteful split into a strictly better
//! competitor: if a partition `G = G1 ⊔ G2` satisfies
//! `P(G1) + P(G2) - P(G) <= T(G2)/2` and the small part carries a volume
//! fraction `gamma` below a threshold, then either `G1` rescaled to full
//! volume or a plain ball must do better; both candidates are evaluated
//! directly and a candidate is accepted only when its measured energy drops.
//! The truncation scan hunts for such partitions along growing centered
//! balls and records the classification and tail-decay data.

use alloc::vec::Vec;

use crate::lattice::{GeometryError, LatticeSet};
use crate::math;
use crate::transport::{self, TransportError};

/// Largest volume fraction of the split-off part for which the rescale
/// candidate is attempted.
pub const DEFAULT_GAMMA_THRESHOLD: f64 = 0.05;

/// Errors from energy evaluation and improvement.
#[derive(Debug, Clone, PartialEq)]
pub enum ReductionError {
    Geometry(GeometryError),
    Transport(TransportError),
    /// `1/p + 2/d = 1`: the volume/penalty reformulation degenerates and
    /// neither direction of the conversion is defined.
    DegenerateExponents { p: f64, d: usize },
    /// Conversion inputs must be positive.
    NonPositive(f64),
    /// `G1`, `G2` must partition `G` exactly, both non-empty.
    BadPartition,
    /// The scan and the split step assume volume below the unit window.
    VolumeNotNormalized { volume: f64, limit: f64 },
}

impl core::fmt::Display for ReductionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReductionError::Geometry(e) => write!(f, "{e}"),
            ReductionError::Transport(e) => write!(f, "{e}"),
            ReductionError::DegenerateExponents { p, d } => {
                write!(f, "1/p + 2/d = 1 at p = {p}, d = {d}: reformulation degenerates")
            }
            ReductionError::NonPositive(x) => write!(f, "conversion input must be positive, got {x}"),
            ReductionError::BadPartition => write!(f, "parts must partition the set exactly"),
            ReductionError::VolumeNotNormalized { volume, limit } => {
                write!(f, "volume {volume} must be below {limit}; rescale first")
            }
        }
    }
}

impl core::error::Error for ReductionError {}

impl From<GeometryError> for ReductionError {
    fn from(e: GeometryError) -> Self {
        ReductionError::Geometry(e)
    }
}

impl From<TransportError> for ReductionError {
    fn from(e: TransportError) -> Self {
        ReductionError::Transport(e)
    }
}

fn conversion_exponent(p: f64, d: usize) -> Result<f64, ReductionError> {
    let exp = 1.0 / p + 2.0 / d as f64 - 1.0;
    if math::abs(exp) < 1e-12 {
        return Err(ReductionError::DegenerateExponents { p, d });
    }
    Ok(exp)
}

/// Volume prescribed by a penalty weight: `m = lambda^(1/(1/p + 2/d - 1))`.
pub fn lambda_to_m(lambda: f64, p: f64, d: usize) -> Result<f64, ReductionError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ReductionError::NonPositive(lambda));
    }
    Ok(math::powf(lambda, 1.0 / conversion_exponent(p, d)?))
}

/// Penalty weight equivalent to a prescribed volume: `lambda = m^(1/p + 2/d - 1)`.
pub fn m_to_lambda(m: f64, p: f64, d: usize) -> Result<f64, ReductionError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(ReductionError::NonPositive(m));
    }
    Ok(math::powf(m, conversion_exponent(p, d)?))
}

/// Full energy accounting for one set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    pub p: f64,
    pub d: usize,
    /// Volume of the set (the `m` of the fixed-volume problem).
    pub volume: f64,
    /// Face-count perimeter; the term entering `total_t`.
    pub face_perimeter: f64,
    /// Boundary-reconstruction perimeter, recorded alongside.
    pub euclid_perimeter: f64,
    /// Exact cheapest transport value `W_p(E)`.
    pub w_functional: f64,
    /// `face_perimeter + w_functional`.
    pub total_t: f64,
    /// `volume^(1/p + 2/d - 1)`; NaN when the reformulation degenerates.
    pub equivalent_lambda: f64,
    /// `volume^(1/d - 1) x total_t`: the energy after rescaling to unit volume.
    pub lambda_scaled_energy: f64,
}

/// Evaluate `T(E) = P(E) + W_p(E)` with the full report.
pub fn energy_t(e: &LatticeSet, p: f64) -> Result<EnergyReport, ReductionError> {
    if e.cell_count() == 0 {
        return Err(ReductionError::Geometry(GeometryError::EmptySet));
    }
    let d = e.dim();
    let volume = e.volume();
    let face_perimeter = e.face_perimeter();
    let euclid_perimeter = e.euclid_perimeter();
    let w = transport::wasserstein_functional(e, p)?;
    let total_t = face_perimeter + w.value;
    let equivalent_lambda = match m_to_lambda(volume, p, d) {
        Ok(l) => l,
        Err(ReductionError::DegenerateExponents { .. }) => f64::NAN,
        Err(other) => return Err(other),
    };
    Ok(EnergyReport {
        p,
        d,
        volume,
        face_perimeter,
        euclid_perimeter,
        w_functional: w.value,
        total_t,
        equivalent_lambda,
        lambda_scaled_energy: math::powf(volume, 1.0 / d as f64 - 1.0) * total_t,
    })
}

/// Outcome of one split-improvement attempt.
#[derive(Debug, Clone)]
pub struct ImprovementOutcome {
    /// The strictly better set, when one was found.
    pub improved: Option<LatticeSet>,
    /// Volume ratio `vol(G2)/vol(G1)`.
    pub gamma: f64,
    /// Rescale factor `(1 + gamma)^(1/d)` for the large part.
    pub ell: f64,
    /// `P(G1) + P(G2) - P(G)`: the perimeter paid for the split.
    pub condition_lhs: f64,
    /// `T(G2)/2`: half the energy of the small part.
    pub condition_rhs: f64,
    pub t_before: f64,
    pub t_after: f64,
    pub accepted: bool,
}

/// Try to beat `G` using a partition `G = G1 ⊔ G2`: when the split condition
/// `condition_lhs <= condition_rhs` holds and `gamma <= gamma_threshold`,
/// evaluate both the rescaled large part and the equal-volume ball, and
/// accept the better one only if its energy is strictly below `T(G)`.
pub fn try_split_improvement(
    g: &LatticeSet,
    g1: &LatticeSet,
    g2: &LatticeSet,
    p: f64,
    gamma_threshold: f64,
) -> Result<ImprovementOutcome, ReductionError> {
    g.check_compatible(g1)?;
    g.check_compatible(g2)?;
    if g1.cell_count() == 0
        || g2.cell_count() == 0
        || !g1.is_disjoint(g2)
        || g1.cell_count() + g2.cell_count() != g.cell_count()
        || g1.union(g2)? != *g
    {
        return Err(ReductionError::BadPartition);
    }
    let d = g.dim();
    let limit = 1.0f64.min(math::unit_ball_volume(d));
    if !(g.volume() < limit) {
        return Err(ReductionError::VolumeNotNormalized {
            volume: g.volume(),
            limit,
        });
    }

    let gamma = g2.volume() / g1.volume();
    let ell = math::powf(1.0 + gamma, 1.0 / d as f64);
    let p_g = g.face_perimeter();
    let condition_lhs = g1.face_perimeter() + g2.face_perimeter() - p_g;
    let t_g2 = energy_t(g2, p)?.total_t;
    let condition_rhs = 0.5 * t_g2;
    let t_before = energy_t(g, p)?.total_t;

    let mut best: Option<(f64, LatticeSet)> = None;
    if condition_lhs <= condition_rhs && gamma <= gamma_threshold {
        // candidate 1: the large part rescaled back to full volume
        let rescaled = g1.rescale(ell, Some(g.volume()))?;
        let t_rescaled = energy_t(&rescaled, p)?.total_t;
        best = Some((t_rescaled, rescaled));
        // candidate 2: the plain ball of the same volume
        let r = math::powf(g.volume() / math::unit_ball_volume(d), 1.0 / d as f64);
        let center = g.centroid()?;
        let ball = LatticeSet::ball_set(d, g.spacing(), center, r)?
            .repair_to_cell_count(g.cell_count(), None)?;
        let t_ball = energy_t(&ball, p)?.total_t;
        if t_ball < best.as_ref().map(|(t, _)| *t).unwrap_or(f64::INFINITY) {
            best = Some((t_ball, ball));
        }
    }

    let (t_after, improved, accepted) = match best {
        Some((t, set)) if t < t_before - 1e-9 => (t, Some(set), true),
        Some((t, _)) => (t, None, false),
        None => (t_before, None, false),
    };
    Ok(ImprovementOutcome {
        improved,
        gamma,
        ell,
        condition_lhs,
        condition_rhs,
        t_before,
        t_after,
        accepted,
    })
}

/// How the scan centers its balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanCenter {
    /// Volume centroid of the set.
    Centroid,
    /// Centroid shifted to the best lattice overlap with the equal-volume
    /// ball (the translation minimizing the symmetric difference).
    BestBallOverlap,
}

/// Classification of one truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TruncationCase {
    /// The split condition holds here: improvement is attempted.
    SplitCandidate,
    /// The cut is too expensive; the tail volume must decay instead.
    TailDecay,
    /// Nothing remains outside this radius.
    Contained,
}

/// One row of the truncation table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncationRow {
    pub t: f64,
    /// `P(G ∩ B_t) + P(G ∖ B_t) - P(G)`.
    pub cut: f64,
    /// `T(G ∖ B_t)`, absent once the tail is empty.
    pub tail_t: Option<f64>,
    pub tail_volume: f64,
    pub case: TruncationCase,
}

/// Scan result: the classification table, the verdict, and the improvement
/// attempted at the most favorable split radius.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub rows: Vec<TruncationRow>,
    pub center: [f64; 3],
    /// Scan start `(vol(G)/omega_d)^(1/d)`, the equal-volume ball radius.
    pub inner_radius: f64,
    /// True when some scanned ball swallowed the whole set.
    pub contained: bool,
    pub improvement: Option<ImprovementOutcome>,
}

/// Scan truncations of `G` by balls `B_t` centered per [`ScanCenter`], `t`
/// over multiples of the spacing in `[inner_radius, 1]`. Each radius is
/// classified; if any radius qualifies for a split, the improvement step runs
/// at the qualifying radius with the smallest tail volume.
pub fn truncation_scan(
    g: &LatticeSet,
    p: f64,
    center_mode: ScanCenter,
    gamma_threshold: f64,
) -> Result<TruncationReport, ReductionError> {
    if g.cell_count() == 0 {
        return Err(ReductionError::Geometry(GeometryError::EmptySet));
    }
    if !(g.volume() <= 1.0) {
        return Err(ReductionError::VolumeNotNormalized {
            volume: g.volume(),
            limit: 1.0,
        });
    }
    let d = g.dim();
    let h = g.spacing();
    let inner_radius = math::powf(g.volume() / math::unit_ball_volume(d), 1.0 / d as f64);
    let centroid = g.centroid()?;
    let center = match center_mode {
        ScanCenter::Centroid => centroid,
        ScanCenter::BestBallOverlap => {
            let ball = LatticeSet::ball_set(d, h, centroid, inner_radius)?;
            match g.fraenkel_asymmetry(&ball) {
                Ok((_, shift)) => {
                    core::array::from_fn(|k| centroid[k] + shift[k] as f64 * h)
                }
                Err(_) => centroid,
            }
        }
    };

    let p_g = g.face_perimeter();
    let mut rows = Vec::new();
    let mut contained = false;
    let mut best_split: Option<(f64, f64)> = None; // (tail_volume, t)
    let k_lo = math::ceil(inner_radius / h) as i64;
    let k_hi = math::floor(1.0 / h) as i64;
    for k in k_lo..=k_hi {
        let t = k as f64 * h;
        let ball = LatticeSet::ball_set(d, h, center, t)?;
        let inside = g.intersect(&ball)?;
        let tail = g.minus(&ball)?;
        let tail_volume = tail.volume();
        if tail.cell_count() == 0 {
            rows.push(TruncationRow {
                t,
                cut: 0.0,
                tail_t: None,
                tail_volume: 0.0,
                case: TruncationCase::Contained,
            });
            contained = true;
            break;
        }
        let cut = inside.face_perimeter() + tail.face_perimeter() - p_g;
        let tail_t = energy_t(&tail, p)?.total_t;
        let case = if cut <= 0.5 * tail_t {
            TruncationCase::SplitCandidate
        } else {
            TruncationCase::TailDecay
        };
        if case == TruncationCase::SplitCandidate && inside.cell_count() > 0 {
            let better = match best_split {
                None => true,
                Some((v, _)) => tail_volume < v,
            };
            if better {
                best_split = Some((tail_volume, t));
            }
        }
        rows.push(TruncationRow {
            t,
            cut,
            tail_t: Some(tail_t),
            tail_volume,
            case,
        });
    }

    let improvement = match best_split {
        Some((_, t)) => {
            let ball = LatticeSet::ball_set(d, h, center, t)?;
            let inside = g.intersect(&ball)?;
            let tail = g.minus(&ball)?;
            Some(try_split_improvement(g, &inside, &tail, p, gamma_threshold)?)
        }
        None => None,
    };

    Ok(TruncationReport {
        rows,
        center,
        inner_radius,
        contained,
        improvement,
    })
}

/// Transport values of a partition, for probing how the functional composes
/// across pieces.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartitionGap {
    pub w_whole: f64,
    pub w_part1: f64,
    pub w_part2: f64,
    /// `w_part1 + w_part2 - w_whole`.
    pub gap: f64,
}

/// Evaluate `W_p` on a set and on both parts of a partition of it. Restricting
/// the whole plan to each part stays feasible for that part, so the power sum
/// obeys `W_p(G1)^p + W_p(G2)^p <= W_p(G)^p`; for `p = 1` this is plain
/// superadditivity. The reverse comparison `W_p(G) <= W_p(G1) + W_p(G2)` is
/// only guaranteed when the parts are far enough apart that their own targets
/// cannot collide.
pub fn partition_gap(
    g: &LatticeSet,
    g1: &LatticeSet,
    g2: &LatticeSet,
    p: f64,
) -> Result<PartitionGap, ReductionError> {
    g.check_compatible(g1)?;
    g.check_compatible(g2)?;
    if g1.cell_count() == 0
        || g2.cell_count() == 0
        || !g1.is_disjoint(g2)
        || g1.cell_count() + g2.cell_count() != g.cell_count()
        || g1.union(g2)? != *g
    {
        return Err(ReductionError::BadPartition);
    }
    let w_whole = transport::wasserstein_functional(g, p)?.value;
    let w_part1 = transport::wasserstein_functional(g1, p)?.value;
    let w_part2 = transport::wasserstein_functional(g2, p)?.value;
    Ok(PartitionGap {
        w_whole,
        w_part1,
        w_part2,
        gap: w_part1 + w_part2 - w_whole,
    })
}
