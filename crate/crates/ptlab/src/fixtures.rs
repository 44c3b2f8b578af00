//! Seeded fixture generators for the verification suites.
//!
//! Everything here is a pure function of its arguments: the same seed always
//! yields the same set, which is what lets whole suite reports be compared
//! byte for byte.

use ptlab_core::{Cell, LatticeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn neighbors(d: usize, c: Cell) -> impl Iterator<Item = Cell> {
    (0..d).flat_map(move |axis| {
        [-1i64, 1].into_iter().map(move |s| {
            let mut n = c;
            n[axis] += s;
            n
        })
    })
}

/// Random connected set grown cell by cell from the origin until its
/// bounding box spans at least `min_span` cells along some axis.
pub fn connected_blob(d: usize, h: f64, min_span: i64, seed: u64) -> LatticeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupied = std::collections::BTreeSet::<Cell>::new();
    occupied.insert([0, 0, 0]);
    let mut frontier: Vec<Cell> = neighbors(d, [0, 0, 0]).collect();
    let (mut lo, mut hi) = ([0i64; 3], [0i64; 3]);
    loop {
        let span = (0..d).map(|k| hi[k] - lo[k] + 1).max().unwrap_or(1);
        if span >= min_span {
            break;
        }
        let i = rng.gen_range(0..frontier.len());
        let c = frontier.swap_remove(i);
        if occupied.contains(&c) {
            continue;
        }
        occupied.insert(c);
        for k in 0..d {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
        for n in neighbors(d, c) {
            if !occupied.contains(&n) {
                frontier.push(n);
            }
        }
    }
    let cells: Vec<Cell> = occupied.into_iter().collect();
    LatticeSet::from_cells(d, h, &cells).expect("blob cells are valid")
}

/// Union of `count` connected blobs with pairwise-separated bounding boxes,
/// scattered inside `[-spread, spread]^2` (cells).
pub fn multi_blob(h: f64, count: usize, blob_span: i64, spread: i64, seed: u64) -> LatticeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes: Vec<([i64; 2], [i64; 2])> = Vec::new();
    let mut all = LatticeSet::empty(2, h).expect("valid dim");
    for i in 0..count {
        let blob = connected_blob(2, h, blob_span, seed.wrapping_add(1 + i as u64));
        let (mut lo, mut hi) = ([i64::MAX; 2], [i64::MIN; 2]);
        for c in blob.cells() {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        for _ in 0..1000 {
            let shift = [rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread)];
            let slo = [lo[0] + shift[0] - 2, lo[1] + shift[1] - 2];
            let shi = [hi[0] + shift[0] + 2, hi[1] + shift[1] + 2];
            let clash = boxes
                .iter()
                .any(|&(blo, bhi)| slo[0] <= bhi[0] && blo[0] <= shi[0] && slo[1] <= bhi[1] && blo[1] <= shi[1]);
            if clash {
                continue;
            }
            let placed = blob.translate([shift[0], shift[1], 0]).expect("compatible");
            all = all.union(&placed).expect("separated boxes cannot overlap");
            boxes.push((slo, shi));
            break;
        }
    }
    assert_eq!(
        boxes.len(),
        count,
        "spread too small to place {count} separated blobs"
    );
    all
}

/// Ball at the origin plus a small far satellite: returns
/// `(whole, ball part, satellite part)`.
pub fn ball_with_satellite(
    h: f64,
    ball_radius: f64,
    satellite_cells: usize,
    distance_cells: i64,
    seed: u64,
) -> (LatticeSet, LatticeSet, LatticeSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let main = LatticeSet::ball_set(2, h, [0.0, 0.0, 0.0], ball_radius).expect("ball");
    let shapes: [&[Cell]; 4] = [
        &[[0, 0, 0]],
        &[[0, 0, 0], [1, 0, 0]],
        &[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
        &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
    ];
    let base = shapes[(satellite_cells.clamp(1, 4)) - 1];
    let angle = rng.gen_range(0.0..core::f64::consts::TAU);
    let shift = [
        (distance_cells as f64 * angle.cos()).round() as i64,
        (distance_cells as f64 * angle.sin()).round() as i64,
        0,
    ];
    let sat = LatticeSet::from_cells(2, h, base)
        .expect("satellite")
        .translate(shift)
        .expect("compatible");
    assert!(main.is_disjoint(&sat), "satellite distance too small");
    let whole = main.union(&sat).expect("disjoint parts");
    (whole, main, sat)
}

/// Digitized disk with a two-cell-wide ridge of `arm_cells` columns sticking
/// out along a seeded axis direction; `arm_cells = 0` is the plain disk. The
/// ridge is two cells wide so that boundary-length estimation, which smooths
/// the occupancy field before reconstructing the interface, still resolves
/// it. Adds exactly `2 * arm_cells` cells.
pub fn perturbed_disk(h: f64, radius: f64, arm_cells: usize, seed: u64) -> LatticeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disk = LatticeSet::ball_set(2, h, [0.0, 0.0, 0.0], radius).expect("disk");
    if arm_cells == 0 {
        return disk;
    }
    let pick = rng.gen_range(0..4u8);
    let axis = (pick / 2) as usize;
    let sign: i64 = if pick % 2 == 0 { 1 } else { -1 };
    let perp = 1 - axis;
    // the two rows straddling the center line; the ridge starts one cell past
    // the disk's extreme in those rows, so every ridge cell is new and the
    // first column touches the disk face-to-face
    let rows = [-1i64, 0];
    let ext = disk
        .cells()
        .filter(|c| rows.contains(&c[perp]))
        .map(|c| sign * c[axis])
        .max()
        .expect("disk meets the center rows");
    let mut ridge: Vec<Cell> = Vec::new();
    for j in 0..arm_cells as i64 {
        for row in rows {
            let mut c = [0i64; 3];
            c[axis] = sign * (ext + 1 + j);
            c[perp] = row;
            ridge.push(c);
        }
    }
    let ridge_set = LatticeSet::from_cells(2, h, &ridge).expect("ridge");
    disk.union(&ridge_set).expect("ridge may touch the disk only on faces")
}
