//! Seeded pseudo-random test fields.

use rand::Rng;

use crate::grid::{FaceVectorField, StaggeredGrid};

/// Independent uniform entries in `[-1, 1)` on the unknowns, zero wall-normal entries.
pub fn white_noise<R: Rng>(grid: &StaggeredGrid, rng: &mut R) -> FaceVectorField {
    let mut w = FaceVectorField::zeros(grid);
    for c in [&mut w.u, &mut w.v] {
        c.values_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        c.enforce_boundary();
    }
    w
}

/// Discretely divergence-free field from a random stream function built of
/// the sine modes `sin(k pi x / lx) sin(m pi y / ly)`, `k, m <= modes`.
///
/// The stream function is sampled at the grid nodes, where it vanishes on
/// the walls, and differenced onto the faces: `u = d psi / dy`,
/// `v = -d psi / dx`. The MAC divergence of the result is zero up to round-off.
pub fn random_solenoidal<R: Rng>(grid: &StaggeredGrid, modes: usize, rng: &mut R) -> FaceVectorField {
    use std::f64::consts::PI;
    let modes = modes.max(1);
    let mut coef = Vec::with_capacity(modes * modes);
    for k in 1..=modes {
        for m in 1..=modes {
            let amp = rng.random_range(-1.0..1.0) / (k * k + m * m) as f64;
            coef.push((k as f64, m as f64, amp));
        }
    }
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let (lx, ly) = (grid.lx(), grid.ly());
    let mut psi = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            let (x, y) = (i as f64 * hx, j as f64 * hy);
            psi[j * (nx + 1) + i] = coef
                .iter()
                .map(|&(k, m, a)| a * (k * PI * x / lx).sin() * (m * PI * y / ly).sin())
                .sum();
        }
    }
    let node = |i: usize, j: usize| psi[j * (nx + 1) + i];
    let mut w = FaceVectorField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            w.u.set(i, j, (node(i, j + 1) - node(i, j)) / hy);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            w.v.set(i, j, -(node(i + 1, j) - node(i, j)) / hx);
        }
    }
    w
}
