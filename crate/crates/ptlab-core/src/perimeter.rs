//! Boundary length and area estimation by interface reconstruction.
//!
//! The occupancy indicator is averaged over the `3^d` cell neighborhood and
//! the `1/2` level set of that field is reconstructed: marching-squares
//! segments in 2D, marching-tetrahedra triangles in 3D, summed with spacing
//! scaling. Averaging first removes most of the directional bias of a binary
//! reconstruction (a staircase overestimates slanted edges by up to 8%, the
//! smoothed field by well under 1%). Components too thin to survive the
//! averaging (a single cell, a one-cell-wide bar) fall back to reconstructing
//! the binary field directly, so no non-empty component reports zero boundary.
//!
//! This is an estimator. Exact certificates use face counting instead.

use alloc::vec;
use alloc::vec::Vec;

use crate::lattice::LatticeSet;
use crate::math;

/// Boundary estimate of one face-connected component (`d >= 2`).
pub(crate) fn component_euclid_perimeter(set: &LatticeSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    match set.dim() {
        2 => nonzero_or_fallback(set, squares_length),
        3 => nonzero_or_fallback(set, tetra_area),
        d => unreachable!("euclid reconstruction for dim {d}"),
    }
}

fn nonzero_or_fallback(set: &LatticeSet, f: fn(&LatticeSet, bool) -> f64) -> f64 {
    let smoothed = f(set, true);
    if smoothed > 0.0 {
        smoothed
    } else {
        f(set, false)
    }
}

/// Sampled field on the padded window: occupancy, optionally box-averaged.
struct Field {
    values: Vec<f64>,
    dims: [usize; 3],
}

impl Field {
    fn build(set: &LatticeSet, smooth: bool) -> Field {
        const PAD: i64 = 2;
        let dim = set.dim();
        let origin = set.origin();
        let shape = set.shape();
        let mut lo = [0i64; 3];
        let mut dims = [1usize; 3];
        for k in 0..dim {
            lo[k] = origin[k] - PAD;
            dims[k] = shape[k] + 2 * PAD as usize;
        }
        let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
        let inv = if dim == 3 { 1.0 / 27.0 } else { 1.0 / 9.0 };
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let cell = [
                        lo[0] + x as i64,
                        lo[1] + y as i64,
                        lo[2] + z as i64,
                    ];
                    let v = if smooth {
                        let mut acc = 0usize;
                        let zr = if dim == 3 { -1..=1 } else { 0..=0 };
                        for dz in zr {
                            for dy in -1..=1 {
                                for dx in -1..=1 {
                                    if set.contains([cell[0] + dx, cell[1] + dy, cell[2] + dz]) {
                                        acc += 1;
                                    }
                                }
                            }
                        }
                        acc as f64 * inv
                    } else if set.contains(cell) {
                        1.0
                    } else {
                        0.0
                    };
                    values[(z * dims[1] + y) * dims[0] + x] = v;
                }
            }
        }
        Field { values, dims }
    }

    #[inline]
    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[(z * self.dims[1] + y) * self.dims[0] + x]
    }
}

const LEVEL: f64 = 0.5;

#[inline]
fn lerp_t(a: f64, b: f64) -> f64 {
    (LEVEL - a) / (b - a)
}

/// Marching squares over the smoothed (or binary) field; returns total
/// segment length times spacing.
fn squares_length(set: &LatticeSet, smooth: bool) -> f64 {
    let field = Field::build(set, smooth);
    let (nx, ny) = (field.dims[0], field.dims[1]);
    let mut total = 0.0f64;
    for by in 0..ny - 1 {
        for bx in 0..nx - 1 {
            // corners counterclockwise from lower-left
            let c0 = field.at(bx, by, 0);
            let c1 = field.at(bx + 1, by, 0);
            let c2 = field.at(bx + 1, by + 1, 0);
            let c3 = field.at(bx, by + 1, 0);
            let mask = (c0 > LEVEL) as u8
                | ((c1 > LEVEL) as u8) << 1
                | ((c2 > LEVEL) as u8) << 2
                | ((c3 > LEVEL) as u8) << 3;
            if mask == 0 || mask == 15 {
                continue;
            }
            // crossing points on the four block edges
            let e0 = [bx as f64 + lerp_t(c0, c1), by as f64];
            let e1 = [bx as f64 + 1.0, by as f64 + lerp_t(c1, c2)];
            let e2 = [bx as f64 + lerp_t(c3, c2), by as f64 + 1.0];
            let e3 = [bx as f64, by as f64 + lerp_t(c0, c3)];
            let segs: &[( [f64; 2], [f64; 2] )] = match mask {
                1 => &[(e3, e0)],
                2 => &[(e0, e1)],
                3 => &[(e3, e1)],
                4 => &[(e1, e2)],
                6 => &[(e0, e2)],
                7 => &[(e3, e2)],
                8 => &[(e2, e3)],
                9 => &[(e0, e2)],
                11 => &[(e1, e2)],
                12 => &[(e3, e1)],
                13 => &[(e0, e1)],
                14 => &[(e3, e0)],
                5 | 10 => {
                    // saddle: decide by the block average
                    let inside = (c0 + c1 + c2 + c3) * 0.25 > LEVEL;
                    match (mask, inside) {
                        (5, true) => &[(e0, e1), (e2, e3)],
                        (5, false) => &[(e3, e0), (e1, e2)],
                        (10, true) => &[(e3, e0), (e1, e2)],
                        (10, false) => &[(e0, e1), (e2, e3)],
                        _ => unreachable!(),
                    }
                }
                _ => unreachable!(),
            };
            for (p, q) in segs {
                let dx = p[0] - q[0];
                let dy = p[1] - q[1];
                total += math::sqrt(dx * dx + dy * dy);
            }
        }
    }
    total * set.spacing()
}

/// Corner offsets of the sampling cube and its six-tetrahedra split around
/// the main diagonal `v0-v6`; the split is translation consistent, so faces
/// agree between neighboring cubes.
const CUBE: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const TETS: [[usize; 4]; 6] = [
    [0, 1, 2, 6],
    [0, 2, 3, 6],
    [0, 3, 7, 6],
    [0, 7, 4, 6],
    [0, 4, 5, 6],
    [0, 5, 1, 6],
];

/// Marching tetrahedra over the smoothed (or binary) field; returns total
/// triangle area times spacing squared.
fn tetra_area(set: &LatticeSet, smooth: bool) -> f64 {
    let field = Field::build(set, smooth);
    let (nx, ny, nz) = (field.dims[0], field.dims[1], field.dims[2]);
    let mut total = 0.0f64;
    for bz in 0..nz - 1 {
        for by in 0..ny - 1 {
            for bx in 0..nx - 1 {
                let mut vals = [0.0f64; 8];
                let mut pos = [[0.0f64; 3]; 8];
                for (i, off) in CUBE.iter().enumerate() {
                    vals[i] = field.at(bx + off[0], by + off[1], bz + off[2]);
                    pos[i] = [
                        (bx + off[0]) as f64,
                        (by + off[1]) as f64,
                        (bz + off[2]) as f64,
                    ];
                }
                if vals.iter().all(|&v| v > LEVEL) || vals.iter().all(|&v| v <= LEVEL) {
                    continue;
                }
                for tet in &TETS {
                    total += tet_interface_area(tet, &vals, &pos);
                }
            }
        }
    }
    total * set.spacing() * set.spacing()
}

fn tet_interface_area(tet: &[usize; 4], vals: &[f64; 8], pos: &[[f64; 3]; 8]) -> f64 {
    let inside: Vec<usize> = tet.iter().copied().filter(|&v| vals[v] > LEVEL).collect();
    let outside: Vec<usize> = tet.iter().copied().filter(|&v| vals[v] <= LEVEL).collect();
    let cross = |a: usize, b: usize| -> [f64; 3] {
        let t = lerp_t(vals[a], vals[b]);
        [
            pos[a][0] + t * (pos[b][0] - pos[a][0]),
            pos[a][1] + t * (pos[b][1] - pos[a][1]),
            pos[a][2] + t * (pos[b][2] - pos[a][2]),
        ]
    };
    match inside.len() {
        1 => {
            let a = inside[0];
            tri_area(
                cross(a, outside[0]),
                cross(a, outside[1]),
                cross(a, outside[2]),
            )
        }
        3 => {
            let a = outside[0];
            tri_area(
                cross(a, inside[0]),
                cross(a, inside[1]),
                cross(a, inside[2]),
            )
        }
        2 => {
            // quad in cyclic order: (a,c), (a,d), (b,d), (b,c)
            let (a, b) = (inside[0], inside[1]);
            let (c, d) = (outside[0], outside[1]);
            let p0 = cross(a, c);
            let p1 = cross(a, d);
            let p2 = cross(b, d);
            let p3 = cross(b, c);
            tri_area(p0, p1, p2) + tri_area(p0, p2, p3)
        }
        _ => 0.0,
    }
}

fn tri_area(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> f64 {
    let u = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
    let v = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    math::sqrt(cx * cx + cy * cy + cz * cz) * 0.5
}
