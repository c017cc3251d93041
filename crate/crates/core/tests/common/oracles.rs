//! Reference solvers that share no code with the library: dense Gaussian
//! elimination, active-set enumeration for small convex QPs and exhaustive
//! enumeration of binary assignments.

#![allow(dead_code)]

use istc_core::miqp::{MiqpProblem, QpProblem};
use rand::Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Dense convex QP: minimize 1/2 z'Qz + c'z + offset s.t. A z <= b.
#[derive(Clone, Debug)]
pub struct DenseQp {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub offset: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl DenseQp {
    pub fn objective(&self, z: &[f64]) -> f64 {
        let n = z.len();
        let mut v = self.offset;
        for i in 0..n {
            v += self.c[i] * z[i];
            for j in 0..n {
                v += 0.5 * z[i] * self.q[i][j] * z[j];
            }
        }
        v
    }

    /// Converts a sparse problem with bounds into dense rows.
    pub fn from_sparse(p: &QpProblem) -> Self {
        let n = p.n;
        let mut q = vec![vec![0.0; n]; n];
        for &(i, j, v) in &p.q {
            q[i][j] += v;
            if i != j {
                q[j][i] += v;
            }
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (r, row) in p.rows.iter().enumerate() {
            let mut d = vec![0.0; n];
            row.iter().for_each(|&(j, v)| d[j] += v);
            a.push(d);
            b.push(p.b[r]);
        }
        for j in 0..n {
            if p.lower[j].is_finite() {
                let mut d = vec![0.0; n];
                d[j] = -1.0;
                a.push(d);
                b.push(-p.lower[j]);
            }
            if p.upper[j].is_finite() {
                let mut d = vec![0.0; n];
                d[j] = 1.0;
                a.push(d);
                b.push(p.upper[j]);
            }
        }
        DenseQp { q, c: p.c.clone(), offset: p.offset, a, b }
    }
}

fn subsets(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if cur.len() == k {
        return f(cur);
    }
    for i in start..m {
        cur.push(i);
        if subsets(m, k, i + 1, cur, f) {
            return true;
        }
        cur.pop();
    }
    false
}

/// Active-set enumeration for a strictly convex QP. Returns the unique KKT
/// point, or `None` when no active set yields one (infeasible problem).
pub fn brute_force_qp(p: &DenseQp) -> Option<(Vec<f64>, f64)> {
    let n = p.c.len();
    let m = p.b.len();
    let tol = 1e-9;
    let mut found = None;
    for k in 0..=m.min(n) {
        let mut cur = Vec::new();
        let hit = subsets(m, k, 0, &mut cur, &mut |s: &[usize]| {
            let dim = n + s.len();
            let mut mat = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for i in 0..n {
                mat[i][..n].copy_from_slice(&p.q[i]);
                rhs[i] = -p.c[i];
            }
            for (t, &r) in s.iter().enumerate() {
                for i in 0..n {
                    mat[i][n + t] = p.a[r][i];
                    mat[n + t][i] = p.a[r][i];
                }
                rhs[n + t] = p.b[r];
            }
            let Some(sol) = gauss_solve(mat, rhs) else { return false };
            let z = &sol[..n];
            if sol[n..].iter().any(|&l| l < -tol) {
                return false;
            }
            let feasible = (0..m).all(|r| {
                let act: f64 = (0..n).map(|i| p.a[r][i] * z[i]).sum();
                act <= p.b[r] + 1e-9 * (1.0 + p.b[r].abs())
            });
            if feasible {
                found = Some((z.to_vec(), p.objective(z)));
            }
            feasible
        });
        if hit {
            break;
        }
    }
    found
}

/// Enumerates every binary assignment and solves the remaining QP with
/// [`brute_force_qp`]. Returns `None` when all assignments are infeasible.
pub fn enumerate_miqp(p: &MiqpProblem) -> Option<(Vec<f64>, f64)> {
    let dense = DenseQp::from_sparse(&p.base);
    let n = p.base.n;
    let bins = &p.binaries;
    let cont: Vec<usize> = (0..n).filter(|j| !bins.contains(j)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut fixed = vec![0.0; n];
        for (t, &j) in bins.iter().enumerate() {
            fixed[j] = ((mask >> t) & 1) as f64;
        }
        // Substitute the binaries into the dense problem.
        let nc = cont.len();
        let mut q = vec![vec![0.0; nc]; nc];
        let mut c = vec![0.0; nc];
        let mut offset = dense.offset;
        for (a, &i) in cont.iter().enumerate() {
            c[a] = dense.c[i];
            for (b, &j) in cont.iter().enumerate() {
                q[a][b] = dense.q[i][j];
            }
            for &j in bins {
                c[a] += dense.q[i][j] * fixed[j];
            }
        }
        for &i in bins {
            offset += dense.c[i] * fixed[i];
            for &j in bins {
                offset += 0.5 * fixed[i] * dense.q[i][j] * fixed[j];
            }
        }
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut consistent = true;
        for (r, row) in dense.a.iter().enumerate() {
            let shift: f64 = bins.iter().map(|&j| row[j] * fixed[j]).sum();
            let red: Vec<f64> = cont.iter().map(|&i| row[i]).collect();
            let bb = dense.b[r] - shift;
            if red.iter().all(|v| *v == 0.0) {
                if bb < -1e-9 {
                    consistent = false;
                }
                continue;
            }
            rows.push(red);
            rhs.push(bb);
        }
        if !consistent {
            continue;
        }
        let sub = DenseQp { q, c, offset, a: rows, b: rhs };
        if let Some((zc, obj)) = brute_force_qp(&sub) {
            if best.as_ref().map_or(true, |b| obj < b.1) {
                let mut z = fixed.clone();
                for (a, &i) in cont.iter().enumerate() {
                    z[i] = zc[a];
                }
                best = Some((z, obj));
            }
        }
    }
    best
}

/// Random strictly convex QP with a known interior point: `m` general rows
/// and at most `max_bounds` finite variable bounds.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m: usize, max_bounds: usize) -> QpProblem {
    let mut p = QpProblem::new(n);
    let mut l = vec![vec![0.0; n]; n];
    for row in l.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let mut v: f64 = (0..n).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                v += 0.1;
            }
            p.add_q(i, j, v);
        }
        p.c[i] = rng.gen_range(-5.0..5.0);
    }
    let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..m {
        let row: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| rng.gen_bool(0.7).then_some(j))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|j| (j, rng.gen_range(-2.0..2.0)))
            .collect();
        if row.is_empty() {
            continue;
        }
        let act: f64 = row.iter().map(|&(j, a)| a * z0[j]).sum();
        p.add_row(row, act + rng.gen_range(0.0..1.0), 0);
    }
    let mut left = max_bounds;
    for j in 0..n {
        if left > 0 && rng.gen_bool(0.3) {
            p.lower[j] = z0[j] - rng.gen_range(0.1..2.0);
            left -= 1;
        }
        if left > 0 && rng.gen_bool(0.3) {
            p.upper[j] = z0[j] + rng.gen_range(0.1..2.0);
            left -= 1;
        }
    }
    p
}

/// Random MIQP: a strictly convex QP in the continuous part plus binaries
/// that enter the cost and the rows. Some instances are infeasible.
pub fn random_miqp<R: Rng>(rng: &mut R, n_cont: usize, n_bin: usize, m: usize) -> MiqpProblem {
    let n = n_cont + n_bin;
    let mut base = random_qp(rng, n, 0, 0);
    for j in n_cont..n {
        base.lower[j] = 0.0;
        base.upper[j] = 1.0;
        base.c[j] = rng.gen_range(-3.0..3.0);
    }
    let z0: Vec<f64> = (0..n)
        .map(|j| if j < n_cont { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0..2) as f64 })
        .collect();
    for _ in 0..m {
        let row: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| rng.gen_bool(0.6).then_some(j))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|j| (j, rng.gen_range(-2.0..2.0)))
            .collect();
        if row.is_empty() {
            continue;
        }
        let act: f64 = row.iter().map(|&(j, a)| a * z0[j]).sum();
        // A few rows are tightened past the witness, so infeasibility occurs.
        let slack = rng.gen_range(-0.3..1.0);
        base.add_row(row, act + slack, 0);
    }
    for j in 0..n_cont {
        base.lower[j] = -3.0;
        base.upper[j] = 3.0;
    }
    MiqpProblem { base, binaries: (n_cont..n).collect(), groups: vec![] }
}
