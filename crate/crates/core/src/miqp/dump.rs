//! Plain-text triplet format for mixed-integer QPs.
//!
//! ```text
//! n <vars>
//! Q i j v       cost entry (off-diagonal pairs listed once)
//! c j v         linear cost
//! o v           constant offset
//! A r j v       row coefficient
//! b r v [fam]   right-hand side, optional family name
//! lb j v / ub j v
//! bin j
//! grp g j r     indicator member j relaxing row r in group g
//! ```

use super::{IndicatorGroup, IndicatorMember, MiqpProblem, QpProblem};
use crate::error::MiqpError;
use std::fmt::Write;

pub fn write_triplets(p: &MiqpProblem) -> String {
    let q = &p.base;
    let mut out = String::new();
    let _ = writeln!(out, "n {}", q.n);
    for &(i, j, v) in &q.q {
        let _ = writeln!(out, "Q {i} {j} {v:e}");
    }
    for (j, &v) in q.c.iter().enumerate() {
        if v != 0.0 {
            let _ = writeln!(out, "c {j} {v:e}");
        }
    }
    if q.offset != 0.0 {
        let _ = writeln!(out, "o {:e}", q.offset);
    }
    for (r, row) in q.rows.iter().enumerate() {
        for &(j, v) in row {
            let _ = writeln!(out, "A {r} {j} {v:e}");
        }
        let fam = q.family_of_row(r).replace(char::is_whitespace, "_");
        let _ = writeln!(out, "b {r} {:e} {fam}", q.b[r]);
    }
    for j in 0..q.n {
        if q.lower[j].is_finite() {
            let _ = writeln!(out, "lb {j} {:e}", q.lower[j]);
        }
        if q.upper[j].is_finite() {
            let _ = writeln!(out, "ub {j} {:e}", q.upper[j]);
        }
    }
    for &j in &p.binaries {
        let _ = writeln!(out, "bin {j}");
    }
    for (g, grp) in p.groups.iter().enumerate() {
        for m in &grp.members {
            let _ = writeln!(out, "grp {g} {} {}", m.var, m.row);
        }
    }
    out
}

pub fn read_triplets(text: &str) -> Result<MiqpProblem, MiqpError> {
    let bad = |line: usize, msg: &str| MiqpError::Invalid(format!("line {}: {msg}", line + 1));
    let mut p = QpProblem::default();
    let mut binaries = Vec::new();
    let mut groups: Vec<IndicatorGroup> = Vec::new();
    let mut sized = false;
    for (ln, line) in text.lines().enumerate() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.is_empty() || tok[0].starts_with('#') {
            continue;
        }
        let idx = |k: usize| -> Result<usize, MiqpError> {
            tok.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad index"))
        };
        let val = |k: usize| -> Result<f64, MiqpError> {
            tok.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad value"))
        };
        if tok[0] != "n" && !sized {
            return Err(bad(ln, "missing `n` header"));
        }
        let ensure_row = |p: &mut QpProblem, r: usize| {
            while p.rows.len() <= r {
                p.rows.push(Vec::new());
                p.b.push(0.0);
                p.row_family.push(0);
            }
        };
        match tok[0] {
            "n" => {
                p = QpProblem::new(idx(1)?);
                p.family("rows");
                sized = true;
            }
            "Q" => p.q.push((idx(1)?, idx(2)?, val(3)?)),
            "c" => *p.c.get_mut(idx(1)?).ok_or_else(|| bad(ln, "index out of range"))? = val(2)?,
            "o" => p.offset = val(1)?,
            "A" => {
                let r = idx(1)?;
                ensure_row(&mut p, r);
                p.rows[r].push((idx(2)?, val(3)?));
            }
            "b" => {
                let r = idx(1)?;
                ensure_row(&mut p, r);
                p.b[r] = val(2)?;
                if let Some(name) = tok.get(3) {
                    p.row_family[r] = p.family(name);
                }
            }
            "lb" => *p.lower.get_mut(idx(1)?).ok_or_else(|| bad(ln, "index out of range"))? = val(2)?,
            "ub" => *p.upper.get_mut(idx(1)?).ok_or_else(|| bad(ln, "index out of range"))? = val(2)?,
            "bin" => binaries.push(idx(1)?),
            "grp" => {
                let g = idx(1)?;
                while groups.len() <= g {
                    groups.push(IndicatorGroup { members: Vec::new() });
                }
                groups[g].members.push(IndicatorMember { var: idx(2)?, row: idx(3)? });
            }
            other => return Err(bad(ln, &format!("unknown record `{other}`"))),
        }
    }
    let out = MiqpProblem { base: p, binaries, groups };
    out.validate()?;
    Ok(out)
}
