//! Dense linear-algebra and finite-difference helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const INERTIA_CONDITION_LIMIT: f64 = 1e12;

/// Solve `M x = b` for symmetric positive-definite `M` with a condition guard.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = m.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    if !(lo > 0.0) || hi / lo > INERTIA_CONDITION_LIMIT {
        return Err(Error::SingularInertia {
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let chol = m.clone().cholesky().ok_or(Error::SingularInertia {
        condition: f64::INFINITY,
    })?;
    Ok(chol.solve(b))
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().is_some()
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).min()
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.max();
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Moore–Penrose pseudoinverse through the SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = top * 1e-12 * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(eps).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Relative finite-difference step for coordinate value `x`.
pub fn fd_step(base: f64, x: f64) -> f64 {
    base * (1.0 + x.abs())
}

/// Fourth-order central difference of a vector-valued map along `dir`.
pub fn directional_derivative5<F>(f: F, x: &DVector<f64>, dir: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let p1 = f(&(x + dir * h));
    let m1 = f(&(x - dir * h));
    let p2 = f(&(x + dir * (2.0 * h)));
    let m2 = f(&(x - dir * (2.0 * h)));
    (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h)
}

/// Same as [`directional_derivative5`] for matrix-valued maps.
pub fn directional_derivative5_mat<F>(f: F, x: &DVector<f64>, dir: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let p1 = f(&(x + dir * h));
    let m1 = f(&(x - dir * h));
    let p2 = f(&(x + dir * (2.0 * h)));
    let m2 = f(&(x - dir * (2.0 * h)));
    (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h)
}

/// Central-difference Jacobian `∂f/∂x` (rows: outputs, columns: inputs).
pub fn jacobian_fd<F>(f: F, x: &DVector<f64>, base_step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let h = fd_step(base_step, x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        cols.push((f(&xp) - f(&xm)) / (2.0 * h));
    }
    DMatrix::from_columns(&cols)
}

/// Scrambled Halton points in a box; the random shift makes the sequence
/// reproducible per seed while avoiding the degenerate first point.
pub struct HaltonSampler {
    bounds: Vec<(f64, f64)>,
    shift: Vec<f64>,
    index: u64,
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

impl HaltonSampler {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyDomain("no coordinates".into()));
        }
        if bounds.len() > PRIMES.len() {
            return Err(Error::EmptyDomain(format!(
                "at most {} dimensions supported",
                PRIMES.len()
            )));
        }
        if let Some((i, b)) = bounds
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.1 > b.0) || !b.0.is_finite() || !b.1.is_finite())
        {
            return Err(Error::EmptyDomain(format!(
                "interval {i} = [{}, {}] is empty",
                b.0, b.1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = bounds.iter().map(|_| rng.random::<f64>()).collect();
        Ok(HaltonSampler {
            bounds,
            shift,
            index: 1,
        })
    }

    pub fn next_point(&mut self) -> DVector<f64> {
        let i = self.index;
        self.index += 1;
        DVector::from_iterator(
            self.bounds.len(),
            self.bounds.iter().enumerate().map(|(d, &(lo, hi))| {
                let u = (radical_inverse(i, PRIMES[d]) + self.shift[d]).fract();
                lo + (hi - lo) * u
            }),
        )
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}
