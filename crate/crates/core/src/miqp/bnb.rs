//! Branch and bound over binary variables with a QP relaxation at each node.
//!
//! Binaries that belong to an [`IndicatorGroup`](super::IndicatorGroup) are
//! branched as a disjunction: a child per member that states which member is
//! the first one enforced. Unfixed indicators and the rows they relax are left
//! out of the node relaxation, which keeps the QPs small and tight.

use super::qp::{solve_qp, QpOptions, QpStatus};
use super::{MiqpProblem, QpProblem};
use crate::error::{MiqpError, QpError};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct MiqpOptions {
    pub node_budget: usize,
    /// Wall-clock limit; `None` makes the search fully deterministic.
    pub time_budget: Option<Duration>,
    /// Relative optimality gap used for pruning.
    pub rel_gap: f64,
    /// Row and bound tolerance for accepting an integer solution.
    pub feas_tol: f64,
    pub parallel: bool,
    pub qp: QpOptions,
}

impl Default for MiqpOptions {
    fn default() -> Self {
        MiqpOptions {
            node_budget: 50_000,
            time_budget: None,
            rel_gap: 1e-6,
            feas_tol: 1e-6,
            parallel: false,
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiqpStatus {
    Optimal,
    /// Budget exhausted; the returned point is the best one found.
    FeasibleTimeout,
    Infeasible,
}

#[derive(Debug, Clone, Default)]
pub struct MiqpStats {
    pub nodes: usize,
    pub qp_solves: usize,
    pub pruned_bound: usize,
    pub pruned_infeasible: usize,
    pub presolve_fixed: usize,
    pub max_depth: usize,
    /// `(nodes explored, objective)` each time the incumbent improved.
    pub incumbent_trace: Vec<(usize, f64)>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct MiqpSolution {
    pub status: MiqpStatus,
    pub z: Vec<f64>,
    pub objective: f64,
    /// Lower bound on the optimum when the search ended.
    pub bound: f64,
    pub stats: MiqpStats,
    /// Row families carrying the infeasibility certificate of the last
    /// pruned node (only for `Infeasible`).
    pub blocking_families: Vec<String>,
}

const FREE: i8 = -1;

struct Node {
    id: usize,
    depth: usize,
    fix: Vec<i8>,
    z: Vec<f64>,
    bound: f64,
}

struct Ranked(Node);

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    // BinaryHeap is a max-heap: the smallest bound (then smallest id) ranks highest.
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.bound.total_cmp(&self.0.bound).then(o.0.id.cmp(&self.0.id))
    }
}

/// Groups probed by strong branching per node before falling back to the
/// average pseudo-cost.
const STRONG_BRANCH_CANDIDATES: usize = 10;

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

struct Child {
    fix: Vec<i8>,
    result: NodeResult,
    solved: bool,
}

fn min_increase(kids: &[Child], parent: f64) -> f64 {
    kids.iter()
        .filter_map(|c| match c.result {
            NodeResult::Solved { bound, .. } => Some((bound - parent).max(0.0)),
            NodeResult::Infeasible { .. } => None,
        })
        .fold(f64::INFINITY, f64::min)
}

fn record(pc: &mut (f64, usize), d: f64) {
    pc.0 += d.min(1e6);
    pc.1 += 1;
}

enum NodeResult {
    Solved { z: Vec<f64>, bound: f64 },
    Infeasible { families: Vec<String> },
}

struct Search<'a> {
    p: &'a MiqpProblem,
    opts: &'a MiqpOptions,
    is_bin: Vec<bool>,
    group_of: Vec<Option<usize>>,
    /// For each row: does it mention any grouped indicator?
    row_has_group: Vec<bool>,
}

impl<'a> Search<'a> {
    fn new(p: &'a MiqpProblem, opts: &'a MiqpOptions) -> Self {
        let n = p.base.n;
        let mut is_bin = vec![false; n];
        p.binaries.iter().for_each(|&v| is_bin[v] = true);
        let mut group_of = vec![None; n];
        for (g, grp) in p.groups.iter().enumerate() {
            grp.members.iter().for_each(|m| group_of[m.var] = Some(g));
        }
        let row_has_group = p
            .base
            .rows
            .iter()
            .map(|row| row.iter().any(|&(j, _)| group_of[j].is_some()))
            .collect();
        Search { p, opts, is_bin, group_of, row_has_group }
    }

    /// Builds the node relaxation: fixed binaries are substituted, unfixed
    /// indicators are dropped with every row that mentions them, and rows
    /// relaxed by an indicator fixed to one are dropped as well.
    fn relaxation(&self, fix: &[i8], bounds: &Bounds) -> Result<(QpProblem, Vec<usize>, Vec<usize>), Vec<String>> {
        let base = &self.p.base;
        let n = base.n;
        let mut map = vec![usize::MAX; n];
        let mut vars = Vec::new();
        for j in 0..n {
            let dropped = self.group_of[j].is_some() && fix[j] == FREE;
            if fix[j] == FREE && !dropped {
                map[j] = vars.len();
                vars.push(j);
            }
        }
        let mut r = QpProblem::new(vars.len());
        r.families = base.families.clone();
        r.offset = base.offset;
        for (k, &j) in vars.iter().enumerate() {
            r.c[k] = base.c[j];
            r.lower[k] = base.lower[j];
            r.upper[k] = base.upper[j];
            if self.is_bin[j] {
                r.lower[k] = r.lower[k].max(0.0);
                r.upper[k] = r.upper[k].min(1.0);
            }
        }
        let val = |j: usize| fix[j] as f64;
        for j in 0..n {
            if fix[j] != FREE {
                r.offset += base.c[j] * val(j);
            }
        }
        for &(i, j, v) in &base.q {
            match (map[i] != usize::MAX, map[j] != usize::MAX) {
                (true, true) => r.q.push((map[i], map[j], v)),
                (true, false) if fix[j] != FREE => r.c[map[i]] += v * val(j),
                (false, true) if fix[i] != FREE => r.c[map[j]] += v * val(i),
                (false, false) if fix[i] != FREE && fix[j] != FREE => {
                    let f = if i == j { 0.5 } else { 1.0 };
                    r.offset += f * v * val(i) * val(j);
                }
                _ => {}
            }
        }
        let mut rows = Vec::new();
        for (ri, row) in base.rows.iter().enumerate() {
            if self.row_has_group[ri] {
                let skip = row
                    .iter()
                    .any(|&(j, _)| self.group_of[j].is_some() && fix[j] != 0);
                if skip {
                    continue;
                }
            }
            let mut b = base.b[ri];
            let mut out = Vec::with_capacity(row.len());
            for &(j, a) in row {
                if map[j] != usize::MAX {
                    out.push((map[j], a));
                } else if fix[j] != FREE {
                    b -= a * val(j);
                }
            }
            if out.is_empty() {
                if b < -self.opts.feas_tol {
                    return Err(vec![base.family_of_row(ri).to_string()]);
                }
                continue;
            }
            let fam = base.row_family.get(ri).copied().unwrap_or(0);
            r.rows.push(out);
            r.b.push(b);
            r.row_family.push(fam);
            rows.push(ri);
        }
        // Each open group with k live members admits the valid row
        // sum_m (a_m x - b_m) / R_m <= k - 1, where R_m is the largest value
        // the member slack can take within the node bounds.
        let tol = self.opts.feas_tol;
        'groups: for grp in &self.p.groups {
            if grp.members.iter().any(|m| fix[m.var] == 0) {
                continue;
            }
            let mut coef: Vec<(usize, f64)> = Vec::new();
            let mut rhs = -1.0;
            for m in grp.members.iter().filter(|m| fix[m.var] != 1) {
                let terms: Vec<(usize, f64)> = base.rows[m.row].iter().filter(|e| e.0 != m.var).copied().collect();
                let maxact: f64 = terms
                    .iter()
                    .map(|&(j, a)| if a > 0.0 { a * bounds.hi[j] } else { a * bounds.lo[j] })
                    .sum();
                let range = maxact - base.b[m.row];
                if !range.is_finite() || range <= tol {
                    continue 'groups;
                }
                for (j, a) in terms {
                    if map[j] == usize::MAX {
                        continue 'groups;
                    }
                    match coef.iter_mut().find(|c| c.0 == map[j]) {
                        Some(c) => c.1 += a / range,
                        None => coef.push((map[j], a / range)),
                    }
                }
                rhs += 1.0 + base.b[m.row] / range;
            }
            coef.retain(|c| c.1 != 0.0);
            if coef.is_empty() {
                continue;
            }
            let ri = grp.members[0].row;
            r.rows.push(coef);
            r.b.push(rhs);
            r.row_family.push(base.row_family.get(ri).copied().unwrap_or(0));
            rows.push(ri);
        }
        if r.families.is_empty() {
            r.families.push("rows".into());
        }
        Ok((r, vars, rows))
    }

    fn solve_node(&self, fix: &[i8], bounds: &Bounds, warm: Option<&[f64]>) -> Result<NodeResult, QpError> {
        let (r, vars, rows) = match self.relaxation(fix, bounds) {
            Ok(t) => t,
            Err(families) => return Ok(NodeResult::Infeasible { families }),
        };
        let mut qo = self.opts.qp.clone();
        qo.warm_start = warm.map(|w| vars.iter().map(|&j| w[j]).collect());
        let sol = solve_qp(&r, &qo)?;
        if sol.status == QpStatus::Infeasible {
            let cert = sol.certificate.unwrap_or_default();
            let peak = cert.rows.iter().cloned().fold(0.0, f64::max);
            let mut families: Vec<String> = Vec::new();
            for (k, &y) in cert.rows.iter().enumerate() {
                if y > 1e-3 * peak {
                    let name = self.p.base.family_of_row(rows[k]).to_string();
                    if !families.contains(&name) {
                        families.push(name);
                    }
                }
            }
            let bounds = cert.lower.iter().chain(&cert.upper).any(|&y| y > 1e-3 * peak);
            if bounds && !families.iter().any(|f| f == "bounds") {
                families.push("bounds".into());
            }
            return Ok(NodeResult::Infeasible { families });
        }
        let mut z = vec![0.0; self.p.base.n];
        for (k, &j) in vars.iter().enumerate() {
            z[j] = sol.z[k];
        }
        for j in 0..z.len() {
            if fix[j] != FREE {
                z[j] = fix[j] as f64;
            }
        }
        Ok(NodeResult::Solved { z, bound: sol.objective })
    }

    /// Activity of a member row without its indicator term, minus the rhs.
    fn member_violation(&self, row: usize, var: usize, z: &[f64]) -> f64 {
        let base = &self.p.base;
        let act: f64 = base.rows[row].iter().filter(|e| e.0 != var).map(|&(j, a)| a * z[j]).sum();
        act - base.b[row]
    }

    /// Unresolved groups, most violated first. Each comes with its open
    /// members sorted by violation.
    fn open_groups(&self, fix: &[i8], z: &[f64]) -> Vec<(usize, Vec<(usize, f64)>)> {
        let tol = self.opts.feas_tol;
        let mut out: Vec<(usize, Vec<(usize, f64)>, f64)> = Vec::new();
        for (g, grp) in self.p.groups.iter().enumerate() {
            let mut cand = Vec::new();
            let mut resolved = false;
            for m in &grp.members {
                if fix[m.var] == 1 {
                    continue;
                }
                let v = self.member_violation(m.row, m.var, z);
                if fix[m.var] == 0 || v <= tol {
                    resolved = true;
                    break;
                }
                cand.push((m.var, v));
            }
            if resolved {
                continue;
            }
            cand.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let key = cand[0].1;
            out.push((g, cand, key));
        }
        out.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(g, c, _)| (g, c)).collect()
    }

    /// Children of a group branch. Child `t` enforces member `t` and excludes
    /// the members before it, so the children partition the disjunction.
    fn group_children(&self, fix: &[i8], cand: &[(usize, f64)]) -> Vec<Vec<i8>> {
        (0..cand.len())
            .map(|t| {
                let mut f = fix.to_vec();
                for c in cand.iter().take(t) {
                    f[c.0] = 1;
                }
                f[cand[t].0] = 0;
                f
            })
            .collect()
    }

    /// Presolves and solves each child relaxation.
    fn expand(&self, children: Vec<Vec<i8>>, warm: &[f64]) -> Result<Vec<Child>, QpError> {
        let eval = |mut f: Vec<i8>| -> Result<Child, QpError> {
            match self.presolve(&mut f) {
                Err(families) => Ok(Child { fix: f, result: NodeResult::Infeasible { families }, solved: false }),
                Ok((_, bounds)) => {
                    let result = self.solve_node(&f, &bounds, Some(warm))?;
                    Ok(Child { fix: f, result, solved: true })
                }
            }
        };
        if self.opts.parallel {
            children.into_par_iter().map(eval).collect()
        } else {
            children.into_iter().map(eval).collect()
        }
    }

    /// Most fractional binary outside any group.
    fn pick_binary(&self, fix: &[i8], z: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.p.binaries {
            if fix[j] != FREE || self.group_of[j].is_some() {
                continue;
            }
            let frac = (z[j] - z[j].round()).abs();
            if frac > 1e-6 && best.map_or(true, |b| frac > b.1 + 1e-12) {
                best = Some((j, frac));
            }
        }
        best.map(|b| b.0)
    }

    /// Completes a leaf into a full integer point and verifies it.
    fn complete(&self, fix: &[i8], z: &[f64]) -> Option<Vec<f64>> {
        let mut out = z.to_vec();
        for &j in &self.p.binaries {
            if self.group_of[j].is_none() {
                out[j] = out[j].round();
            }
        }
        let tol = self.opts.feas_tol;
        for grp in &self.p.groups {
            let mut chosen = None;
            for m in &grp.members {
                if fix[m.var] == 0 {
                    chosen = Some(m.var);
                    break;
                }
            }
            if chosen.is_none() {
                chosen = grp
                    .members
                    .iter()
                    .find(|m| fix[m.var] != 1 && self.member_violation(m.row, m.var, z) <= tol)
                    .map(|m| m.var);
            }
            let chosen = chosen?;
            for m in &grp.members {
                out[m.var] = if fix[m.var] == 0 || m.var == chosen { 0.0 } else { 1.0 };
            }
        }
        (self.p.base.max_violation(&out) <= tol * 10.0).then_some(out)
    }

    /// Node presolve. Interval bounds are propagated through every row the
    /// node enforces; an indicator whose row cannot hold within those bounds
    /// is fixed to one, and the last open member of a group is fixed to zero.
    /// Repeats until no more indicators get fixed.
    fn presolve(&self, fix: &mut [i8]) -> Result<(usize, Bounds), Vec<String>> {
        let base = &self.p.base;
        let n = base.n;
        let tol = self.opts.feas_tol;
        let mut count = 0;
        loop {
            let mut lo = base.lower.clone();
            let mut hi = base.upper.clone();
            for j in 0..n {
                if fix[j] != FREE {
                    lo[j] = fix[j] as f64;
                    hi[j] = fix[j] as f64;
                }
            }
            for _pass in 0..30 {
                let mut changed = false;
                for (ri, row) in base.rows.iter().enumerate() {
                    if self.row_has_group[ri]
                        && row.iter().any(|&(j, _)| self.group_of[j].is_some() && fix[j] != 0)
                    {
                        continue;
                    }
                    match tighten_row(row, base.b[ri], &mut lo, &mut hi, tol) {
                        Some(c) => changed |= c,
                        None => return Err(vec![base.family_of_row(ri).to_string()]),
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut fixed_more = false;
            for grp in &self.p.groups {
                let mut open = Vec::new();
                for m in &grp.members {
                    if fix[m.var] == 1 {
                        continue;
                    }
                    let minact: f64 = base.rows[m.row]
                        .iter()
                        .filter(|e| e.0 != m.var)
                        .map(|&(j, a)| if a > 0.0 { a * lo[j] } else { a * hi[j] })
                        .sum();
                    if minact > base.b[m.row] + tol {
                        if fix[m.var] == 0 {
                            return Err(vec![base.family_of_row(m.row).to_string()]);
                        }
                        fix[m.var] = 1;
                        count += 1;
                        fixed_more = true;
                    } else {
                        open.push(m.var);
                    }
                }
                match open.as_slice() {
                    [] => return Err(vec![base.family_of_row(grp.members[0].row).to_string()]),
                    [j] if fix[*j] == FREE => {
                        fix[*j] = 0;
                        count += 1;
                        fixed_more = true;
                    }
                    _ => {}
                }
            }
            if !fixed_more {
                return Ok((count, Bounds { lo, hi }));
            }
        }
    }
}

/// One round of interval propagation on `row . x <= b`. Returns whether a
/// bound moved, or `None` when the row cannot hold.
fn tighten_row(row: &[(usize, f64)], b: f64, lo: &mut [f64], hi: &mut [f64], tol: f64) -> Option<bool> {
    let mut finite = 0.0;
    let mut inf_count = 0;
    let mut inf_var = usize::MAX;
    for &(j, a) in row {
        let c = if a > 0.0 { a * lo[j] } else { a * hi[j] };
        if c.is_finite() {
            finite += c;
        } else {
            inf_count += 1;
            inf_var = j;
        }
    }
    if inf_count == 0 && finite > b + tol * (1.0 + b.abs()) {
        return None;
    }
    if inf_count > 1 {
        return Some(false);
    }
    let mut changed = false;
    for &(j, a) in row {
        if a == 0.0 {
            continue;
        }
        let rest = if inf_count == 1 {
            if j != inf_var {
                continue;
            }
            finite
        } else {
            finite - if a > 0.0 { a * lo[j] } else { a * hi[j] }
        };
        let lim = (b - rest) / a;
        let slack = 1e-7 * (1.0 + lim.abs());
        if a > 0.0 {
            if lim < hi[j] - slack {
                hi[j] = lim;
                changed = true;
            }
        } else if lim > lo[j] + slack {
            lo[j] = lim;
            changed = true;
        }
        if lo[j] > hi[j] + tol * (1.0 + lo[j].abs()) {
            return None;
        }
    }
    Some(changed)
}

pub fn solve_miqp(p: &MiqpProblem, opts: &MiqpOptions) -> Result<MiqpSolution, MiqpError> {
    p.validate()?;
    let start = Instant::now();
    let search = Search::new(p, opts);
    let n = p.base.n;
    let mut stats = MiqpStats::default();
    let infeasible = |families: Vec<String>, stats: MiqpStats| MiqpSolution {
        status: MiqpStatus::Infeasible,
        z: Vec::new(),
        objective: f64::INFINITY,
        bound: f64::INFINITY,
        stats,
        blocking_families: families,
    };

    let mut root_fix = vec![FREE; n];
    for &j in &p.binaries {
        if p.base.lower[j] > 0.0 {
            root_fix[j] = 1;
        } else if p.base.upper[j] < 1.0 {
            root_fix[j] = 0;
        }
    }
    let root_bounds = match search.presolve(&mut root_fix) {
        Ok((k, b)) => {
            stats.presolve_fixed = k;
            b
        }
        Err(f) => {
            stats.elapsed = start.elapsed();
            return Ok(infeasible(f, stats));
        }
    };

    stats.qp_solves += 1;
    let root = match search.solve_node(&root_fix, &root_bounds, None)? {
        NodeResult::Solved { z, bound } => Node { id: 0, depth: 0, fix: root_fix, z, bound },
        NodeResult::Infeasible { families } => {
            stats.pruned_infeasible += 1;
            stats.nodes = 1;
            stats.elapsed = start.elapsed();
            return Ok(infeasible(families, stats));
        }
    };

    let mut next_id = 1;
    let mut stack: Vec<Node> = vec![root];
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::new();
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut last_families: Vec<String> = Vec::new();
    let mut exhausted = false;
    let mut dive: Option<Node> = None;
    let mut pc: Vec<(f64, usize)> = vec![(0.0, 0); p.groups.len()];

    let cutoff = |inc: &Option<(Vec<f64>, f64)>| {
        inc.as_ref()
            .map(|(_, v)| v - opts.rel_gap * v.abs().max(1.0))
            .unwrap_or(f64::INFINITY)
    };

    loop {
        let node = if incumbent.is_none() {
            match stack.pop() {
                Some(nd) => nd,
                None => break,
            }
        } else {
            if !stack.is_empty() {
                heap.extend(stack.drain(..).map(Ranked));
            }
            match dive.take().or_else(|| heap.pop().map(|r| r.0)) {
                Some(nd) => nd,
                None => break,
            }
        };
        if node.bound >= cutoff(&incumbent) {
            stats.pruned_bound += 1;
            continue;
        }
        let over_time = opts.time_budget.map_or(false, |t| start.elapsed() > t);
        if stats.nodes >= opts.node_budget || over_time {
            exhausted = true;
            heap.push(Ranked(node));
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);

        let groups = search.open_groups(&node.fix, &node.z);
        let expanded: Vec<Child> = if !groups.is_empty() {
            // Pseudo-cost branching: the score of a group is the smallest bound
            // increase among its children, measured by strong branching the
            // first time a group is considered.
            let known: Vec<f64> = (0..pc.len()).filter(|&g| pc[g].1 > 0).map(|g| pc[g].0 / pc[g].1 as f64).collect();
            let fallback = if known.is_empty() { 0.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
            let mut best: Option<(f64, usize, Option<Vec<Child>>)> = None;
            let mut probes = 0;
            for (t, (g, cand)) in groups.iter().enumerate() {
                let (score, cached) = if pc[*g].1 > 0 {
                    (pc[*g].0 / pc[*g].1 as f64, None)
                } else if probes < STRONG_BRANCH_CANDIDATES {
                    probes += 1;
                    let kids = search.expand(search.group_children(&node.fix, cand), &node.z)?;
                    stats.qp_solves += kids.iter().filter(|c| c.solved).count();
                    let d = min_increase(&kids, node.bound);
                    record(&mut pc[*g], d);
                    (d, Some(kids))
                } else {
                    (fallback, None)
                };
                if best.as_ref().map_or(true, |b| score > b.0) {
                    best = Some((score, t, cached));
                }
                if score == f64::INFINITY {
                    break;
                }
            }
            let (_, t, cached) = best.expect("at least one open group");
            let (g, cand) = &groups[t];
            match cached {
                Some(kids) => kids,
                None => {
                    let kids = search.expand(search.group_children(&node.fix, cand), &node.z)?;
                    stats.qp_solves += kids.iter().filter(|c| c.solved).count();
                    record(&mut pc[*g], min_increase(&kids, node.bound));
                    kids
                }
            }
        } else if let Some(j) = search.pick_binary(&node.fix, &node.z) {
            let first: i8 = if node.z[j] >= 0.5 { 1 } else { 0 };
            let children = [first, 1 - first]
                .iter()
                .map(|&v| {
                    let mut f = node.fix.clone();
                    f[j] = v;
                    f
                })
                .collect();
            let kids = search.expand(children, &node.z)?;
            stats.qp_solves += kids.iter().filter(|c| c.solved).count();
            kids
        } else {
            match search.complete(&node.fix, &node.z) {
                Some(z) => {
                    let obj = p.base.objective(&z);
                    if incumbent.as_ref().map_or(true, |(_, v)| obj < *v) {
                        stats.incumbent_trace.push((stats.nodes, obj));
                        incumbent = Some((z, obj));
                    }
                }
                None => {
                    // Relaxation dropped rows that the integer point violates:
                    // enforce every remaining indicator explicitly.
                    let mut f = node.fix.clone();
                    let mut changed = false;
                    for grp in &p.groups {
                        if grp.members.iter().all(|m| f[m.var] != 0) {
                            if let Some(m) = grp.members.iter().find(|m| f[m.var] == FREE) {
                                f[m.var] = 0;
                                changed = true;
                            }
                        }
                    }
                    if changed {
                        if let Ok((_, b)) = search.presolve(&mut f) {
                            stats.qp_solves += 1;
                            if let NodeResult::Solved { z, bound } = search.solve_node(&f, &b, Some(&node.z))? {
                                stack.push(Node { id: next_id, depth: node.depth + 1, fix: f, z, bound });
                                next_id += 1;
                            }
                        }
                    }
                }
            }
            continue;
        };

        let mut kids = Vec::new();
        for child in expanded {
            match child.result {
                NodeResult::Solved { z, bound } => {
                    if bound >= cutoff(&incumbent) {
                        stats.pruned_bound += 1;
                    } else {
                        kids.push(Node { id: next_id, depth: node.depth + 1, fix: child.fix, z, bound });
                    }
                }
                NodeResult::Infeasible { families } => {
                    stats.pruned_infeasible += 1;
                    last_families = families;
                }
            }
            next_id += 1;
        }
        if incumbent.is_none() {
            // Deepest-first plunge: the preferred child is popped next.
            stack.extend(kids.into_iter().rev());
        } else if !kids.is_empty() {
            // Plunge into the best child; its siblings wait in the heap.
            let best = (0..kids.len())
                .min_by(|&a, &b| kids[a].bound.total_cmp(&kids[b].bound))
                .unwrap_or(0);
            dive = Some(kids.swap_remove(best));
            heap.extend(kids.into_iter().map(Ranked));
        }
    }

    stats.elapsed = start.elapsed();
    let open_bound = stack
        .iter()
        .map(|nd| nd.bound)
        .chain(heap.iter().map(|r| r.0.bound))
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((z, obj)) => Ok(MiqpSolution {
            status: if exhausted { MiqpStatus::FeasibleTimeout } else { MiqpStatus::Optimal },
            z,
            objective: obj,
            bound: if exhausted { open_bound.min(obj) } else { obj },
            stats,
            blocking_families: Vec::new(),
        }),
        None if exhausted => Err(MiqpError::Timeout { nodes: stats.nodes }),
        None => Ok(infeasible(last_families, stats)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miqp::{IndicatorGroup, IndicatorMember};

    #[test]
    fn knapsack_like() {
        // min (z0-0.6)^2 + (z1-0.6)^2 - z2, z0 + z1 + z2 <= 2, all binary
        let mut p = QpProblem::new(3);
        p.add_q(0, 0, 2.0);
        p.add_q(1, 1, 2.0);
        p.c = vec![-1.2, -1.2, -1.0];
        p.offset = 0.72;
        p.lower = vec![0.0; 3];
        p.upper = vec![1.0; 3];
        p.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 2.0, 0);
        let m = MiqpProblem { base: p, binaries: vec![0, 1, 2], groups: vec![] };
        let s = solve_miqp(&m, &MiqpOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        // Candidates: (1,0,1) -> 0.16+0.36-1 = -0.48 ; (1,1,0) -> 0.32
        assert!((s.objective + 0.48).abs() < 1e-6, "{}", s.objective);
    }

    #[test]
    fn disjunction_picks_cheaper_side() {
        // min (x - 1)^2 with x <= -2 or x >= 5 (big-M form)
        let mut p = QpProblem::new(3);
        p.add_q(0, 0, 2.0);
        p.c[0] = -2.0;
        p.offset = 1.0;
        p.lower = vec![-10.0, 0.0, 0.0];
        p.upper = vec![10.0, 1.0, 1.0];
        let f = p.family("separation");
        let r0 = p.add_row(vec![(0, 1.0), (1, -100.0)], -2.0, f);
        let r1 = p.add_row(vec![(0, -1.0), (2, -100.0)], -5.0, f);
        p.add_row(vec![(1, 1.0), (2, 1.0)], 1.0, f);
        let m = MiqpProblem {
            base: p,
            binaries: vec![1, 2],
            groups: vec![IndicatorGroup {
                members: vec![IndicatorMember { var: 1, row: r0 }, IndicatorMember { var: 2, row: r1 }],
            }],
        };
        let s = solve_miqp(&m, &MiqpOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        assert!((s.z[0] + 2.0).abs() < 1e-6);
        assert!((s.objective - 9.0).abs() < 1e-6);
        assert_eq!((s.z[1], s.z[2]), (0.0, 1.0));
    }

    #[test]
    fn infeasible_reports_families() {
        let mut p = QpProblem::new(2);
        p.lower = vec![0.0, 0.0];
        p.upper = vec![1.0, 1.0];
        let f = p.family("capacity");
        p.add_row(vec![(0, -1.0), (1, -1.0)], -1.5, f);
        p.add_row(vec![(0, 1.0), (1, 1.0)], 1.0, f);
        let m = MiqpProblem { base: p, binaries: vec![0, 1], groups: vec![] };
        let s = solve_miqp(&m, &MiqpOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Infeasible);
        assert!(s.blocking_families.iter().any(|f| f == "capacity"));
    }

    #[test]
    fn node_budget_without_incumbent_times_out() {
        let mut p = QpProblem::new(4);
        p.lower = vec![0.0; 4];
        p.upper = vec![1.0; 4];
        // Sum of four binaries equal to 2.5 is impossible but LP-feasible.
        p.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)], 2.5, 0);
        p.add_row(vec![(0, -1.0), (1, -1.0), (2, -1.0), (3, -1.0)], -2.5, 0);
        let m = MiqpProblem { base: p, binaries: vec![0, 1, 2, 3], groups: vec![] };
        let o = MiqpOptions { node_budget: 2, ..Default::default() };
        assert!(matches!(solve_miqp(&m, &o), Err(MiqpError::Timeout { .. })));
        let s = solve_miqp(&m, &MiqpOptions::default()).unwrap();
        assert_eq!(s.status, MiqpStatus::Infeasible);
    }
}
