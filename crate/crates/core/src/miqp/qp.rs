//! Primal-dual interior point method (Mehrotra predictor-corrector) for
//! convex QPs in inequality form. Variable bounds are folded into the
//! inequality system; the Newton step is reduced to the normal equations
//! `(Q + G' W G) dz = r` and factored with the envelope Cholesky.

use super::linalg::{Cholesky, SymMatrix};
use super::{QpProblem, SparseRow};
use crate::error::QpError;

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Target for the scaled primal, dual and complementarity residuals.
    pub tol: f64,
    /// Initial primal point; projected onto the bounds before use.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_iter: 200,
            tol: 1e-9,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// Multipliers (or certificate weights) for rows, lower bounds and upper bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Duals {
    pub rows: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Infinity-norm KKT residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub z: Vec<f64>,
    pub objective: f64,
    pub duals: Duals,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// Nonnegative row weights `y` with `G'y ~ 0` and `h'y < 0` proving the
    /// feasible set empty. Present only for infeasible problems.
    pub certificate: Option<Duals>,
}

#[derive(Clone, Copy)]
enum Kind {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

struct Ineq {
    g: Vec<SparseRow>,
    h: Vec<f64>,
    kind: Vec<Kind>,
}

impl Ineq {
    fn new(p: &QpProblem) -> Self {
        let mut g = Vec::with_capacity(p.m() + 2 * p.n);
        let mut h = Vec::with_capacity(g.capacity());
        let mut kind = Vec::with_capacity(g.capacity());
        for (r, row) in p.rows.iter().enumerate() {
            g.push(row.clone());
            h.push(p.b[r]);
            kind.push(Kind::Row(r));
        }
        for j in 0..p.n {
            if p.lower[j].is_finite() {
                g.push(vec![(j, -1.0)]);
                h.push(-p.lower[j]);
                kind.push(Kind::Lower(j));
            }
            if p.upper[j].is_finite() {
                g.push(vec![(j, 1.0)]);
                h.push(p.upper[j]);
                kind.push(Kind::Upper(j));
            }
        }
        Ineq { g, h, kind }
    }

    fn len(&self) -> usize {
        self.g.len()
    }

    fn mul(&self, z: &[f64]) -> Vec<f64> {
        self.g.iter().map(|row| row.iter().map(|&(j, a)| a * z[j]).sum()).collect()
    }

    fn mul_t(&self, y: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (row, &yi) in self.g.iter().zip(y) {
            if yi != 0.0 {
                for &(j, a) in row {
                    out[j] += a * yi;
                }
            }
        }
        out
    }

    fn split(&self, y: &[f64], p: &QpProblem) -> Duals {
        let mut d = Duals {
            rows: vec![0.0; p.m()],
            lower: vec![0.0; p.n],
            upper: vec![0.0; p.n],
        };
        for (k, &v) in self.kind.iter().zip(y) {
            match k {
                Kind::Row(r) => d.rows[*r] = v,
                Kind::Lower(j) => d.lower[*j] = v,
                Kind::Upper(j) => d.upper[*j] = v,
            }
        }
        d
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rejects cost matrices that fail a lightly regularized Cholesky.
fn check_psd(p: &QpProblem) -> Result<(), QpError> {
    if p.q.is_empty() {
        return Ok(());
    }
    let mut m = SymMatrix::with_pattern(p.n, p.q.iter().map(|&(i, j, _)| (i, j)));
    for &(i, j, v) in &p.q {
        if !v.is_finite() {
            return Err(QpError::NotPsd);
        }
        m.add(i, j, v);
    }
    let reg = 1e-9 * (1.0 + m.max_abs_diag());
    (0..p.n).for_each(|i| m.add_diag(i, reg));
    m.cholesky().map(|_| ()).map_err(|_| QpError::NotPsd)
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

const REG_MIN: f64 = 1e-11;

struct Newton<'a> {
    p: &'a QpProblem,
    base: SymMatrix,
    /// Per inequality row: storage positions and coefficient products of its
    /// contribution to `G' W G`.
    contrib: Vec<Vec<(usize, f64)>>,
    reg: f64,
}

impl<'a> Newton<'a> {
    fn new(p: &'a QpProblem, ineq: &'a Ineq) -> Self {
        let q_pattern = p.q.iter().map(|&(i, j, _)| (i, j));
        let g_pattern = ineq
            .g
            .iter()
            .flat_map(|row| row.iter().flat_map(move |&(a, _)| row.iter().map(move |&(b, _)| (a, b))));
        let mut base = SymMatrix::with_pattern(p.n, q_pattern.chain(g_pattern));
        for &(i, j, v) in &p.q {
            base.add(i, j, v);
        }
        let contrib = ineq
            .g
            .iter()
            .map(|row| {
                let mut out = Vec::new();
                for (ia, &(a, va)) in row.iter().enumerate() {
                    for &(b, vb) in &row[..=ia] {
                        out.push((base.position(a, b), va * vb));
                    }
                }
                out
            })
            .collect();
        Newton { p, base, contrib, reg: REG_MIN }
    }

    fn factor(&mut self, w: &[f64]) -> Result<Cholesky, QpError> {
        loop {
            let mut m = self.base.clone();
            for (entries, &wi) in self.contrib.iter().zip(w) {
                for &(pos, coef) in entries {
                    m.add_at(pos, wi * coef);
                }
            }
            let scale = 1.0 + self.base.max_abs_diag();
            for i in 0..self.p.n {
                // After a failed attempt the shift also grows with the diagonal,
                // which keeps rows dominated by large barrier weights factorizable.
                let rel = if self.reg > REG_MIN { m.diag(i).abs() } else { 0.0 };
                m.add_diag(i, self.reg * (scale + rel));
            }
            match m.cholesky() {
                Ok(ch) => return Ok(ch),
                Err(_) if self.reg < 1e-2 => self.reg *= 10.0,
                Err(_) => return Err(QpError::NoConvergence { iterations: 0, best: vec![] }),
            }
        }
    }
}

pub fn solve_qp(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    p.check_dimensions()?;
    check_psd(p)?;
    let n = p.n;
    let ineq = Ineq::new(p);
    let m = ineq.len();
    let h = &ineq.h;

    let mut z: Vec<f64> = match &opts.warm_start {
        Some(w) if w.len() == n => w.clone(),
        _ => vec![0.0; n],
    };
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        z[j] = if lo.is_finite() && hi.is_finite() {
            let margin = 0.05 * (hi - lo);
            z[j].clamp(lo + margin, hi - margin)
        } else {
            z[j].clamp(lo, hi)
        };
    }

    let mut newton = Newton::new(p, &ineq);

    if m == 0 {
        let ch = newton.factor(&[])?;
        let mut rhs: Vec<f64> = p.c.iter().map(|v| -v).collect();
        ch.solve_in_place(&mut rhs);
        return Ok(finish(p, &ineq, rhs, vec![], QpStatus::Optimal, 0, None));
    }

    let gz = ineq.mul(&z);
    let mut s: Vec<f64> = (0..m).map(|i| (h[i] - gz[i]).max(1.0)).collect();
    let mut lam = vec![1.0; m];

    let h_scale = 1.0 + inf_norm(h);
    let c_scale = 1.0 + inf_norm(&p.c);
    let tol = opts.tol;
    // Best iterate by scaled KKT merit. Degenerate problems can lose accuracy
    // once complementarity is tiny; the best point is returned if it is close.
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
    let fallback = |best: Option<(f64, usize, Vec<f64>, Vec<f64>)>, it: usize, z: Vec<f64>| match best {
        Some((merit, bit, bz, bl)) if merit <= 1e3 * tol => Ok(finish(p, &ineq, bz, bl, QpStatus::Optimal, bit, None)),
        _ => Err(QpError::NoConvergence { iterations: it, best: z }),
    };

    for it in 0..opts.max_iter {
        let qz = p.q_mul(&z);
        let gtl = ineq.mul_t(&lam, n);
        let rd: Vec<f64> = (0..n).map(|j| qz[j] + p.c[j] + gtl[j]).collect();
        let gz = ineq.mul(&z);
        let rp: Vec<f64> = (0..m).map(|i| gz[i] + s[i] - h[i]).collect();
        let mu = dot(&s, &lam) / m as f64;
        let comp_max = s.iter().zip(&lam).map(|(a, b)| a * b).fold(0.0, f64::max);

        let obj_scale = 1.0 + (0.5 * dot(&z, &qz) + dot(&p.c, &z)).abs();
        if inf_norm(&rp) <= tol * h_scale && inf_norm(&rd) <= tol * c_scale && comp_max <= tol * obj_scale.min(1e3) {
            return Ok(finish(p, &ineq, z, lam, QpStatus::Optimal, it, None));
        }
        let merit = (inf_norm(&rp) / h_scale)
            .max(inf_norm(&rd) / c_scale)
            .max(comp_max / obj_scale.min(1e3));
        if merit.is_finite() && best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, it, z.clone(), lam.clone()));
        } else if let Some(b) = &best {
            if b.0 <= 1e3 * tol && merit > 1e2 * b.0 && it > b.1 + 2 {
                return fallback(best, it, z);
            }
        }
        // Complementarity has collapsed; accept a slightly looser point
        // rather than iterate on a numerically singular system.
        if mu < 1e-24 && inf_norm(&rp) <= 1e3 * tol * h_scale && inf_norm(&rd) <= 1e3 * tol * c_scale {
            return Ok(finish(p, &ineq, z, lam, QpStatus::Optimal, it, None));
        }

        // Farkas test: y = lam with G'y ~ 0 and h'y < 0.
        let hty = dot(h, &lam);
        if hty < 0.0 && it > 2 {
            let gty1: f64 = gtl.iter().map(|v| v.abs()).sum();
            let radius = 1e2 * (1.0 + inf_norm(&z));
            if gty1 * radius < -hty && inf_norm(&lam) > 1e3 {
                let norm: f64 = lam.iter().sum();
                let y: Vec<f64> = lam.iter().map(|v| v / norm).collect();
                let cert = ineq.split(&y, p);
                let mut sol = finish(p, &ineq, z, lam, QpStatus::Infeasible, it, Some(cert));
                sol.objective = f64::INFINITY;
                return Ok(sol);
            }
        }

        let w: Vec<f64> = (0..m).map(|i| lam[i] / s[i]).collect();
        let ch = match newton.factor(&w) {
            Ok(ch) => ch,
            Err(_) => return fallback(best, it, z),
        };

        let refine = if newton.reg > REG_MIN { 2 } else { 0 };
        let solve_dir = |rcc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            // rhs = -rd - G' ((lam*rp - rcc) / s)
            let t: Vec<f64> = (0..m).map(|i| (lam[i] * rp[i] - rcc[i]) / s[i]).collect();
            let gt = ineq.mul_t(&t, n);
            let rhs: Vec<f64> = (0..n).map(|j| -rd[j] - gt[j]).collect();
            let mut dz = rhs.clone();
            ch.solve_in_place(&mut dz);
            // Iterative refinement removes the bias of a large diagonal regularization.
            for _ in 0..refine {
                let gdz = ineq.mul(&dz);
                let wg: Vec<f64> = (0..m).map(|i| w[i] * gdz[i]).collect();
                let gwg = ineq.mul_t(&wg, n);
                let qdz = p.q_mul(&dz);
                let mut res: Vec<f64> = (0..n).map(|j| rhs[j] - qdz[j] - gwg[j]).collect();
                ch.solve_in_place(&mut res);
                dz.iter_mut().zip(&res).for_each(|(d, r)| *d += r);
            }
            let gdz = ineq.mul(&dz);
            let ds: Vec<f64> = (0..m).map(|i| -rp[i] - gdz[i]).collect();
            let dl: Vec<f64> = (0..m).map(|i| (-rcc[i] - lam[i] * ds[i]) / s[i]).collect();
            (dz, ds, dl)
        };

        let rc_aff: Vec<f64> = (0..m).map(|i| s[i] * lam[i]).collect();
        let (_, ds_a, dl_a) = solve_dir(&rc_aff);
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let mu_aff = (0..m)
            .map(|i| (s[i] + a_aff * ds_a[i]) * (lam[i] + a_aff * dl_a[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rc: Vec<f64> = (0..m)
            .map(|i| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu)
            .collect();
        let (dz, ds, dl) = solve_dir(&rc);
        let tau = 0.995_f64.max(1.0 - mu);
        let alpha = (tau * max_step(&s, &ds).min(max_step(&lam, &dl))).min(1.0);

        for j in 0..n {
            z[j] += alpha * dz[j];
        }
        for i in 0..m {
            s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            lam[i] = (lam[i] + alpha * dl[i]).max(1e-300);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return fallback(best, it, z);
        }
    }
    fallback(best, opts.max_iter, z)
}

fn finish(
    p: &QpProblem,
    ineq: &Ineq,
    z: Vec<f64>,
    lam: Vec<f64>,
    status: QpStatus,
    iterations: usize,
    certificate: Option<Duals>,
) -> QpSolution {
    let n = p.n;
    let lam = if lam.is_empty() { vec![0.0; ineq.len()] } else { lam };
    let qz = p.q_mul(&z);
    let gtl = ineq.mul_t(&lam, n);
    let gz = ineq.mul(&z);
    let stationarity = (0..n).map(|j| (qz[j] + p.c[j] + gtl[j]).abs()).fold(0.0, f64::max);
    let primal = (0..ineq.len()).map(|i| gz[i] - ineq.h[i]).fold(0.0, f64::max);
    let dual = lam.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let complementarity = (0..ineq.len())
        .map(|i| (lam[i] * (ineq.h[i] - gz[i])).abs())
        .fold(0.0, f64::max);
    let objective = p.objective(&z);
    QpSolution {
        status,
        objective,
        duals: ineq.split(&lam, p),
        kkt: KktResiduals {
            stationarity,
            primal,
            dual,
            complementarity,
        },
        iterations,
        certificate,
        z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_with_lower_bound() {
        // min z^2 s.t. z >= 3
        let mut p = QpProblem::new(1);
        p.add_q(0, 0, 2.0);
        p.add_row(vec![(0, -1.0)], -3.0, 0);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 3.0).abs() < 1e-7);
        assert!((s.objective - 9.0).abs() < 1e-6);
        assert!(s.kkt.max() <= 1e-7, "{:?}", s.kkt);
    }

    #[test]
    fn interior_optimum_of_box() {
        // min |z - g|^2 with g inside the box
        let g = [0.3, -1.2, 2.5];
        let mut p = QpProblem::new(3);
        for (j, gj) in g.iter().enumerate() {
            p.add_q(j, j, 2.0);
            p.c[j] = -2.0 * gj;
            p.offset += gj * gj;
            p.lower[j] = -5.0;
            p.upper[j] = 5.0;
        }
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        for j in 0..3 {
            assert!((s.z[j] - g[j]).abs() < 1e-7);
        }
        assert!(s.objective.abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_rows() {
        // z >= 2 and z <= 1
        let mut p = QpProblem::new(1);
        p.add_q(0, 0, 1.0);
        let f = p.family("contradiction");
        p.add_row(vec![(0, -1.0)], -2.0, f);
        p.add_row(vec![(0, 1.0)], 1.0, f);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let cert = s.certificate.unwrap();
        assert!(cert.rows.iter().all(|&y| y >= 0.0));
        assert!(cert.rows[0] > 0.1 && cert.rows[1] > 0.1);
    }

    #[test]
    fn linear_objective_with_bounds() {
        // Pure LP: min -z0 - z1, z0 + z1 <= 1, z >= 0
        let mut p = QpProblem::new(2);
        p.c = vec![-1.0, -2.0];
        p.lower = vec![0.0, 0.0];
        p.add_row(vec![(0, 1.0), (1, 1.0)], 1.0, 0);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert!((s.objective + 2.0).abs() < 1e-7);
        assert!(s.kkt.max() <= 1e-7);
    }

    #[test]
    fn rejects_indefinite_cost() {
        let mut p = QpProblem::new(2);
        p.add_q(0, 0, 1.0);
        p.add_q(1, 1, -1.0);
        assert!(matches!(solve_qp(&p, &QpOptions::default()), Err(QpError::NotPsd)));
    }
}
