//! Banded LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns on
//! the right hold the fill created by row interchanges, as in LAPACK's
//! `gbtrf`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(
            c + self.kl >= r && c <= r + self.kl + self.ku,
            "({r}, {c}) outside the band"
        );
        r * self.width + c + self.kl - r
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.ku {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    /// Add `v` to entry `(r, c)`. Panics if the entry lies outside the
    /// declared band.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn clear_row(&mut self, r: usize) {
        let w = self.width;
        self.data[r * w..(r + 1) * w].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.data[self.slot(r, c)] * x[c]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::SolverFailure("matrix is zero or non-finite".into()));
        }
        let mut perm = vec![0usize; n];
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.slot(i, i)].abs();
            for r in i + 1..=last_row {
                let v = self.data[self.slot(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::SolverFailure(format!("singular pivot at row {i}")));
            }
            perm[i] = p;
            if p != i {
                for c in i..=last_col {
                    let (a, b) = (self.slot(i, c), self.slot(p, c));
                    self.data.swap(a, b);
                }
            }
            let piv = self.data[self.slot(i, i)];
            for r in i + 1..=last_row {
                let s = self.slot(r, i);
                let l = self.data[s] / piv;
                self.data[s] = l;
                if l == 0.0 {
                    continue;
                }
                for c in i + 1..=last_col {
                    let u = self.data[self.slot(i, c)];
                    let t = self.slot(r, c);
                    self.data[t] -= l * u;
                }
            }
        }
        Ok(BandLu { m: self, perm })
    }
}

/// Factorization produced by [`BandMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    perm: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for i in 0..n {
            b.swap(i, self.perm[i]);
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + m.kl).min(n - 1) {
                    b[r] -= m.data[m.slot(r, i)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for c in i + 1..=(i + m.kl + m.ku).min(n - 1) {
                acc -= m.data[m.slot(i, c)] * b[c];
            }
            b[i] = acc / m.data[m.slot(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut StdRng) -> (BandMatrix, DMatrix<f64>) {
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // weak diagonal so that pivoting actually happens
                let v: f64 = rng.random_range(-1.0..1.0) + if r == c { 0.1 } else { 0.0 };
                b.add(r, c, v);
                d[(r, c)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn agrees_with_dense_lu() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (12, 2, 3), (40, 5, 1), (60, 7, 7), (25, 0, 4)] {
            let (b, d) = random_band(n, kl, ku, &mut rng);
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let expected = d.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            let mv = b.matvec(expected.as_slice());
            for (a, e) in mv.iter().zip(&rhs) {
                assert!((a - e).abs() < 1e-9 * (1.0 + expected.amax()), "{a} vs {e}, n={n}");
            }
            let lu = b.factor().unwrap();
            let mut x = rhs.clone();
            lu.solve(&mut x);
            for (a, e) in x.iter().zip(expected.iter()) {
                assert!((a - e).abs() < 1e-8 * (1.0 + e.abs()), "n={n}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut b = BandMatrix::zeros(3, 1, 1);
        b.add(0, 0, 1.0);
        b.add(1, 0, 1.0);
        assert!(matches!(b.factor(), Err(Error::SolverFailure(_))));
    }

    #[test]
    #[should_panic]
    fn out_of_band_write_panics() {
        let mut b = BandMatrix::zeros(5, 1, 1);
        b.add(0, 3, 1.0);
    }
}
