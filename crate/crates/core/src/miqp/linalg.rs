//! Symmetric matrices in skyline (envelope) storage with an in-place
//! Cholesky factorization.
//!
//! Row `i` stores the entries from its first structural nonzero up to the
//! diagonal. Fill-in never leaves the envelope, so banded systems (corridor
//! variables ordered by time unit) factor in `O(n b^2)`.

#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    first: Vec<usize>,
    /// Offset of row `i` in `data`; the row holds columns `first[i]..=i`.
    off: Vec<usize>,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix whose envelope covers the given `(i, j)` positions and the diagonal.
    pub fn with_pattern(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in entries {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            first[r] = first[r].min(c);
        }
        let mut off = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            off.push(total);
            total += i - first[i] + 1;
        }
        off.push(total);
        SymMatrix { n, first, off, data: vec![0.0; total] }
    }

    /// Storage index of `(i, j)`. Panics outside the envelope.
    pub fn position(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(c >= self.first[r], "entry ({r}, {c}) outside the envelope");
        self.off[r] + c - self.first[r]
    }

    pub fn add_at(&mut self, pos: usize, v: f64) {
        self.data[pos] += v;
    }

    /// Adds `v` to entry `(i, j)` and its mirror.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let pos = self.position(i, j);
        self.data[pos] += v;
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.data[self.off[i + 1] - 1] += v;
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[self.off[i + 1] - 1]
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.data[self.off[r] + c - self.first[r]]
        }
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.diag(i).abs()).fold(0.0, f64::max)
    }

    /// In-place lower Cholesky factor. Returns the failing pivot index when the
    /// matrix is not numerically positive definite.
    pub fn cholesky(mut self) -> Result<Cholesky, usize> {
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.off[i];
            for j in fi..=i {
                let fj = self.first[j];
                let oj = self.off[j];
                let start = fi.max(fj);
                let mut s = self.data[oi + j - fi];
                let ri = &self.data[oi + start - fi..oi + j - fi];
                let rj = &self.data[oj + start - fj..oj + j - fj];
                for (a, b) in ri.iter().zip(rj) {
                    s -= a * b;
                }
                if j < i {
                    let d = self.data[self.off[j + 1] - 1];
                    self.data[oi + j - fi] = s / d;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(i);
                    }
                    self.data[oi + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Cholesky { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    m: SymMatrix,
}

impl Cholesky {
    /// Solves `L L^T x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = &self.m;
        for i in 0..m.n {
            let (fi, oi) = (m.first[i], m.off[i]);
            let row = &m.data[oi..m.off[i + 1]];
            let mut s = x[i];
            for (a, xk) in row[..i - fi].iter().zip(&x[fi..i]) {
                s -= a * xk;
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..m.n).rev() {
            let (fi, oi) = (m.first[i], m.off[i]);
            let row = &m.data[oi..m.off[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (a, xk) in row[..i - fi].iter().zip(&mut x[fi..i]) {
                *xk -= a * xi;
            }
        }
    }
}
