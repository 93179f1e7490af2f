//! Trilinear sampling kernels shared by resampling, warping and landmark
//! transport.
//!
//! Two boundary conventions are used in this crate:
//! * `zero` — corners outside the grid contribute 0 (warping),
//! * `clamp` — voxel coordinates are clamped to the grid (resampling,
//!   landmark/field sampling).

use ndarray::{Array4, ArrayView3};

/// Trilinear sample at voxel coordinates `(x, y, z)`; out-of-grid corners
/// contribute zero.
#[inline]
pub fn sample_trilinear_zero(data: &ArrayView3<f32>, x: f64, y: f64, z: f64) -> f64 {
    let (nx, ny, nz) = data.dim();
    let x0 = x.floor();
    let y0 = y.floor();
    let z0 = z.floor();
    let fx = x - x0;
    let fy = y - y0;
    let fz = z - z0;
    let (x0, y0, z0) = (x0 as isize, y0 as isize, z0 as isize);

    let mut acc = 0.0;
    for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
        if wx == 0.0 {
            continue;
        }
        let xi = x0 + dx;
        if xi < 0 || xi >= nx as isize {
            continue;
        }
        for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            let yi = y0 + dy;
            if yi < 0 || yi >= ny as isize {
                continue;
            }
            for (dz, wz) in [(0isize, 1.0 - fz), (1, fz)] {
                if wz == 0.0 {
                    continue;
                }
                let zi = z0 + dz;
                if zi < 0 || zi >= nz as isize {
                    continue;
                }
                acc += wx * wy * wz * data[[xi as usize, yi as usize, zi as usize]] as f64;
            }
        }
    }
    acc
}

/// Trilinear sample with voxel coordinates clamped into `[0, n-1]`.
#[inline]
pub fn sample_trilinear_clamp(data: &ArrayView3<f32>, x: f64, y: f64, z: f64) -> f64 {
    let (nx, ny, nz) = data.dim();
    let cx = x.clamp(0.0, (nx - 1) as f64);
    let cy = y.clamp(0.0, (ny - 1) as f64);
    let cz = z.clamp(0.0, (nz - 1) as f64);
    let x0 = (cx.floor() as usize).min(nx - 1);
    let y0 = (cy.floor() as usize).min(ny - 1);
    let z0 = (cz.floor() as usize).min(nz - 1);
    let x1 = (x0 + 1).min(nx - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let z1 = (z0 + 1).min(nz - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    let fz = cz - z0 as f64;

    let v = |i: usize, j: usize, k: usize| data[[i, j, k]] as f64;
    let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
    let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
    let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
    let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

/// Clamped trilinear sample of one component of a dense vector field stored
/// as `(nx, ny, nz, 3)`.
#[inline]
pub fn sample_field_trilinear_clamp(u: &Array4<f64>, x: f64, y: f64, z: f64, c: usize) -> f64 {
    let (nx, ny, nz, _) = u.dim();
    let cx = x.clamp(0.0, (nx - 1) as f64);
    let cy = y.clamp(0.0, (ny - 1) as f64);
    let cz = z.clamp(0.0, (nz - 1) as f64);
    let x0 = (cx.floor() as usize).min(nx - 1);
    let y0 = (cy.floor() as usize).min(ny - 1);
    let z0 = (cz.floor() as usize).min(nz - 1);
    let x1 = (x0 + 1).min(nx - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let z1 = (z0 + 1).min(nz - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    let fz = cz - z0 as f64;

    let v = |i: usize, j: usize, k: usize| u[[i, j, k, c]];
    let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
    let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
    let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
    let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}
