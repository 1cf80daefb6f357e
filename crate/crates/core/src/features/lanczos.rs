//! Thick-restart Lanczos with locking for the largest eigenpairs of a
//! symmetric operator.
//!
//! The search space is grown Krylov-style with full reorthogonalization,
//! then reduced by Rayleigh-Ritz. Converged Ritz pairs are locked from the
//! top of the spectrum down; the best unconverged Ritz vectors are kept
//! across restarts, which keeps convergence steady inside tight eigenvalue
//! clusters. Once `k` pairs are locked, a fresh random start orthogonal to
//! them checks that no copy of a repeated eigenvalue was missed.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LOCK_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize<'a>(w: &mut [f64], basis: impl Iterator<Item = &'a Vec<f64>> + Clone) {
    for _ in 0..2 {
        for b in basis.clone() {
            let c = dot(w, b);
            axpy(-c, b, w);
        }
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

struct Ritz {
    value: f64,
    vector: Vec<f64>,
    image: Vec<f64>,
    residual: f64,
}

/// Rayleigh-Ritz on the orthonormal basis `v` with images `w = A v`,
/// returning the `want` largest Ritz pairs, descending.
fn rayleigh_ritz(v: &[Vec<f64>], w: &[Vec<f64>], want: usize) -> Vec<Ritz> {
    let p = v.len();
    let n = v[0].len();
    let h = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&v[i], &w[j]) + dot(&v[j], &w[i])));
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .take(want)
        .map(|c| {
            let s = eig.eigenvectors.column(c);
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for k in 0..p {
                axpy(s[k], &v[k], &mut y);
                axpy(s[k], &w[k], &mut ay);
            }
            let value = eig.eigenvalues[c];
            let mut r = ay.clone();
            axpy(-value, &y, &mut r);
            Ritz {
                value,
                residual: norm(&r),
                vector: y,
                image: ay,
            }
        })
        .collect()
}

/// Largest `k` eigenpairs of the symmetric operator `op` acting on
/// `n`-vectors, sorted by eigenvalue descending.
pub fn lanczos_top<F>(n: usize, op: F, k: usize, seed: u64, max_cycles: usize) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let k = k.min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked: Vec<(f64, Vec<f64>)> = Vec::new();
    let max_basis = (3 * k + 40).max(60);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut next: Option<Vec<f64>> = None;
    let mut verifying = false;

    for _ in 0..max_cycles {
        let room = (n - locked.len()).min(max_basis);
        while basis.len() < room {
            let mut v = next.take().unwrap_or_else(|| random_vec(n, &mut rng));
            let mut fresh = false;
            loop {
                orthogonalize(&mut v, locked.iter().map(|p| &p.1).chain(basis.iter()));
                let nv = norm(&v);
                if nv > 1e-8 {
                    v.iter_mut().for_each(|x| *x /= nv);
                    break;
                }
                if fresh {
                    break;
                }
                // the Krylov space became invariant
                v = random_vec(n, &mut rng);
                fresh = true;
            }
            if norm(&v) < 0.5 {
                break;
            }
            let mut w = vec![0.0; n];
            op(&v, &mut w);
            next = Some(w.clone());
            basis.push(v);
            images.push(w);
        }
        if basis.is_empty() {
            break;
        }
        let remaining = k.saturating_sub(locked.len()).max(1);
        let keep = (remaining + 8).min(basis.len().div_ceil(2)).max(1);
        let ritz = rayleigh_ritz(&basis, &images, keep.max(remaining));
        // continue from the residual direction of the whole current space
        if let Some(r) = next.as_mut() {
            orthogonalize(r, locked.iter().map(|p| &p.1).chain(basis.iter()));
        }

        if verifying {
            // A Ritz value above the smallest locked one means a direction was missed.
            let min_locked = locked.last().map_or(f64::NEG_INFINITY, |p| p.0);
            match ritz.first() {
                Some(top) if top.value > min_locked + 1e-9 => {
                    if top.residual <= LOCK_TOL {
                        locked.pop();
                        locked.push((top.value, top.vector.clone()));
                        locked.sort_by(|a, b| b.0.total_cmp(&a.0));
                        basis.clear();
                        images.clear();
                        next = None;
                        continue;
                    }
                }
                _ => return Ok(locked),
            }
        } else {
            let mut converged = 0;
            for r in &ritz {
                if locked.len() >= k || r.residual > LOCK_TOL {
                    break;
                }
                locked.push((r.value, r.vector.clone()));
                converged += 1;
            }
            locked.sort_by(|a, b| b.0.total_cmp(&a.0));
            if locked.len() >= k {
                if locked.len() == n {
                    return Ok(locked);
                }
                verifying = true;
                basis.clear();
                images.clear();
                next = None;
                continue;
            }
            let rest: Vec<Ritz> = ritz.into_iter().skip(converged).take(keep).collect();
            basis = rest.iter().map(|r| r.vector.clone()).collect();
            images = rest.into_iter().map(|r| r.image).collect();
            continue;
        }
        let rest: Vec<Ritz> = ritz.into_iter().take(keep).collect();
        basis = rest.iter().map(|r| r.vector.clone()).collect();
        images = rest.into_iter().map(|r| r.image).collect();
    }
    if locked.len() >= k {
        return Ok(locked);
    }
    Err(Error::Numeric(format!(
        "Lanczos found {} of {k} eigenpairs within {max_cycles} cycles",
        locked.len()
    )))
}
