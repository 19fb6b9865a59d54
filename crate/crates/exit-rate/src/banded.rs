//! Banded LU factorization without pivoting.
//!
//! The discretized negative generator is an irreducibly diagonally dominant
//! M-matrix, for which LU without pivoting is stable; lattice grids order
//! nodes so that the band is narrow (bandwidth 1 in 1-D, one grid column in
//! 2-D). Fill-in stays inside the band.

use crate::error::{Error, Result};

/// Row-major band storage: entry `(i, j)` with `|i - j| <= bandwidth` lives
/// at `data[i * (2*bandwidth + 1) + (j - i + bandwidth)]`.
pub struct BandedMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedMatrix {
            n,
            bandwidth,
            data: vec![0.0; n * (2 * bandwidth + 1)],
        }
    }

    pub fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let bandwidth = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(j, _)| i.abs_diff(*j)))
            .max()
            .unwrap_or(0);
        let mut m = BandedMatrix::zeros(n, bandwidth);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                *m.at_mut(i, j) = v;
            }
        }
        m
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = 2 * self.bandwidth + 1;
        &mut self.data[i * w + (j + self.bandwidth - i)]
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        let w = 2 * self.bandwidth + 1;
        self.data[i * w + (j + self.bandwidth - i)]
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// In-place LU factorization (Doolittle, no pivoting). Errs on a
    /// vanishing pivot.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let p = self.bandwidth;
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for k in 0..n {
            let pivot = self.at(k, k);
            if pivot.abs() <= 1e-300 * scale {
                return Err(Error::Numerical(format!(
                    "singular factorization: pivot {pivot} at row {k}"
                )));
            }
            let i_max = (k + p).min(n - 1);
            for i in k + 1..=i_max {
                let l = self.at(i, k) / pivot;
                *self.at_mut(i, k) = l;
                if l != 0.0 {
                    let j_max = (k + p).min(n - 1);
                    for j in k + 1..=j_max {
                        let u = self.at(k, j);
                        if u != 0.0 {
                            *self.at_mut(i, j) -= l * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { inner: self })
    }
}

pub struct BandedLu {
    inner: BandedMatrix,
}

impl BandedLu {
    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.inner.n;
        let p = self.inner.bandwidth;
        for i in 0..n {
            let k_min = i.saturating_sub(p);
            let mut acc = b[i];
            for k in k_min..i {
                acc -= self.inner.at(i, k) * b[k];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let k_max = (i + p).min(n - 1);
            let mut acc = b[i];
            for k in i + 1..=k_max {
                acc -= self.inner.at(i, k) * b[k];
            }
            b[i] = acc / self.inner.at(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tridiagonal_solve_matches_direct_elimination() {
        // -u'' = 1 on (0,1), Dirichlet: u(x) = x(1-x)/2 at the nodes
        let n = 50;
        let h = 1.0 / (n as f64 + 1.0);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut row = vec![(i, 2.0 / (h * h))];
                if i > 0 {
                    row.push((i - 1, -1.0 / (h * h)));
                }
                if i + 1 < n {
                    row.push((i + 1, -1.0 / (h * h)));
                }
                row
            })
            .collect();
        let lu = BandedMatrix::from_rows(n, &rows).factorize().unwrap();
        let mut b = vec![1.0; n];
        lu.solve(&mut b);
        for i in 0..n {
            let x = (i as f64 + 1.0) * h;
            assert_relative_eq!(b[i], x * (1.0 - x) / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn wide_band_solve() {
        // pentadiagonal, diagonally dominant; verify A x = b round-trip
        let n = 30;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut row = vec![(i, 10.0 + i as f64)];
                for off in 1..=2usize {
                    if i >= off {
                        row.push((i - off, -1.0 / off as f64));
                    }
                    if i + off < n {
                        row.push((i + off, -0.5 / off as f64));
                    }
                }
                row
            })
            .collect();
        let lu = BandedMatrix::from_rows(n, &rows).factorize().unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                b[i] += v * x_true[j];
            }
        }
        lu.solve(&mut b);
        for i in 0..n {
            assert_relative_eq!(b[i], x_true[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let rows = vec![vec![(0usize, 0.0)], vec![(1usize, 1.0)]];
        assert!(BandedMatrix::from_rows(2, &rows).factorize().is_err());
    }
}
