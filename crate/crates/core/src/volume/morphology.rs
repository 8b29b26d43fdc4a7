//! Binary morphology on voxel grids: connected components, ball dilation and
//! exterior flood fill.

use super::Volume;
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Extract a skull mask from a CT volume in HU.
///
/// Thresholds at `threshold` HU, keeps the largest 26-connected component and
/// dilates it with a Euclidean ball of `dilation_radius` voxels (voxel-center
/// distance, anisotropy ignored — the radius is in voxels by construction).
pub fn extract_skull_mask(ct: &Volume, threshold: f64, dilation_radius: f64) -> Result<Volume> {
    let thr = threshold as f32;
    let bone: Vec<bool> = ct.data().iter().map(|&v| v >= thr).collect();
    if !bone.iter().any(|&b| b) {
        return Err(Error::EmptySkull { threshold_hu: threshold });
    }
    let largest = largest_component_26(ct.dims(), &bone);
    let mut mask = ct.same_grid_filled(0.0);
    if dilation_radius > 0.0 {
        dilate_ball_into(ct.dims(), &largest, dilation_radius, mask.data_mut());
    } else {
        for (out, &b) in mask.data_mut().iter_mut().zip(&largest) {
            *out = if b { 1.0 } else { 0.0 };
        }
    }
    Ok(mask)
}

/// Largest 26-connected component of a boolean field.
fn largest_component_26(dims: [usize; 3], field: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut label = vec![0u32; field.len()];
    let mut next = 0u32;
    let mut best_label = 0u32;
    let mut best_size = 0usize;
    let mut queue = VecDeque::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let s = idx(i, j, k);
                if !field[s] || label[s] != 0 {
                    continue;
                }
                next += 1;
                let mut size = 0usize;
                label[s] = next;
                queue.push_back([i, j, k]);
                while let Some([ci, cj, ck]) = queue.pop_front() {
                    size += 1;
                    for dk in -1isize..=1 {
                        for dj in -1isize..=1 {
                            for di in -1isize..=1 {
                                if di == 0 && dj == 0 && dk == 0 {
                                    continue;
                                }
                                let ni = ci as isize + di;
                                let nj = cj as isize + dj;
                                let nk = ck as isize + dk;
                                if ni < 0
                                    || nj < 0
                                    || nk < 0
                                    || ni >= nx as isize
                                    || nj >= ny as isize
                                    || nk >= nz as isize
                                {
                                    continue;
                                }
                                let n = idx(ni as usize, nj as usize, nk as usize);
                                if field[n] && label[n] == 0 {
                                    label[n] = next;
                                    queue.push_back([ni as usize, nj as usize, nk as usize]);
                                }
                            }
                        }
                    }
                }
                if size > best_size {
                    best_size = size;
                    best_label = next;
                }
            }
        }
    }
    label.iter().map(|&l| l == best_label && l != 0).collect()
}

/// Dilate `src` by a Euclidean ball of `radius` voxels, writing 1.0 into `out`.
fn dilate_ball_into(dims: [usize; 3], src: &[bool], radius: f64, out: &mut [f32]) {
    let [nx, ny, nz] = dims;
    let r = radius.floor() as isize;
    let r2 = radius * radius;
    let mut offsets = Vec::new();
    for dk in -r..=r {
        for dj in -r..=r {
            for di in -r..=r {
                let d2 = (di * di + dj * dj + dk * dk) as f64;
                if d2 <= r2 {
                    offsets.push([di, dj, dk]);
                }
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !src[idx(i, j, k)] {
                    continue;
                }
                for off in &offsets {
                    let ni = i as isize + off[0];
                    let nj = j as isize + off[1];
                    let nk = k as isize + off[2];
                    if ni >= 0
                        && nj >= 0
                        && nk >= 0
                        && ni < nx as isize
                        && nj < ny as isize
                        && nk < nz as isize
                    {
                        out[idx(ni as usize, nj as usize, nk as usize)] = 1.0;
                    }
                }
            }
        }
    }
}

/// Voxels NOT reachable from the grid boundary through `blocked == false`
/// voxels with 6-connected moves. Used to find the intracranial cavity:
/// pass the skull mask as `blocked`; the result contains cavity plus skull,
/// so subtract the skull afterwards.
pub(crate) fn interior_by_exterior_flood(dims: [usize; 3], blocked: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut reached = vec![false; blocked.len()];
    let mut queue = VecDeque::new();
    let seed = |i: usize, j: usize, k: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<[usize; 3]>| {
        let s = idx(i, j, k);
        if !blocked[s] && !reached[s] {
            reached[s] = true;
            queue.push_back([i, j, k]);
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            seed(i, j, 0, &mut reached, &mut queue);
            seed(i, j, nz - 1, &mut reached, &mut queue);
        }
    }
    for k in 0..nz {
        for i in 0..nx {
            seed(i, 0, k, &mut reached, &mut queue);
            seed(i, ny - 1, k, &mut reached, &mut queue);
        }
    }
    for k in 0..nz {
        for j in 0..ny {
            seed(0, j, k, &mut reached, &mut queue);
            seed(nx - 1, j, k, &mut reached, &mut queue);
        }
    }
    const STEPS: [[isize; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    while let Some([i, j, k]) = queue.pop_front() {
        for s in STEPS {
            let ni = i as isize + s[0];
            let nj = j as isize + s[1];
            let nk = k as isize + s[2];
            if ni < 0 || nj < 0 || nk < 0 || ni >= nx as isize || nj >= ny as isize || nk >= nz as isize {
                continue;
            }
            let n = idx(ni as usize, nj as usize, nk as usize);
            if !blocked[n] && !reached[n] {
                reached[n] = true;
                queue.push_back([ni as usize, nj as usize, nk as usize]);
            }
        }
    }
    reached.iter().map(|&r| !r).collect()
}
