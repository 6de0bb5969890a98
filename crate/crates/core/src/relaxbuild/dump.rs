//! Plain-text form of a conic program for inspection and for solving with
//! other tools.
//!
//! ```text
//! conic-program 1
//! size <n_vars> <n_rows>
//! cones Z<k> L<k> Q<k> ...
//! c <j>:<value> ...
//! <tag> <cone> <b> <j>:<value> ... # <family> <element>
//! ```
//!
//! One line per row, in row order. Values use the shortest round-trip form.

use super::builder::BuiltProgram;
use crate::conesolve::{Cone, ConicProgram, CscMatrix};

const HEADER: &str = "conic-program 1";

/// Writes `built` in the text format above.
pub fn dump_program(built: &BuiltProgram) -> String {
    let p = &built.program;
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("size {} {}\n", p.n_vars(), p.n_rows()));
    let cones: Vec<String> = p.cones.iter().map(|c| format!("{}{}", c.tag(), c.dim())).collect();
    out.push_str(&format!("cones {}\n", cones.join(" ")));
    out.push('c');
    for (j, v) in p.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
        out.push_str(&format!(" {j}:{v:e}"));
    }
    out.push('\n');
    let at = p.a.transpose();
    let mut row = 0;
    for (k, cone) in p.cones.iter().enumerate() {
        for _ in 0..cone.dim() {
            out.push_str(&format!("{} {k} {:e}", cone.tag(), p.b[row]));
            for (j, v) in at.col(row) {
                out.push_str(&format!(" {j}:{v:e}"));
            }
            let (fam, elem) = built.rows[row];
            out.push_str(&format!(" # {} {elem}\n", fam.name().replace(' ', "-")));
            row += 1;
        }
    }
    out
}

/// Reads a program written by [`dump_program`].
pub fn parse_dump(text: &str) -> Result<ConicProgram, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some(HEADER) {
        return Err("missing header".into());
    }
    let size: Vec<usize> = lines
        .next()
        .and_then(|l| l.strip_prefix("size "))
        .ok_or("missing size line")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad size {t}")))
        .collect::<Result<_, _>>()?;
    let [n, m] = size[..] else { return Err("size needs two numbers".into()) };
    let cones = lines
        .next()
        .and_then(|l| l.strip_prefix("cones"))
        .ok_or("missing cones line")?
        .split_whitespace()
        .map(|t| {
            let (tag, dim) = t.split_at(1);
            let dim: usize = dim.parse().map_err(|_| format!("bad cone {t}"))?;
            match tag {
                "Z" => Ok(Cone::Zero(dim)),
                "L" => Ok(Cone::NonNeg(dim)),
                "Q" => Ok(Cone::SecondOrder(dim)),
                _ => Err(format!("bad cone {t}")),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let entry = |t: &str| -> Result<(usize, f64), String> {
        let (j, v) = t.split_once(':').ok_or_else(|| format!("bad entry {t}"))?;
        Ok((
            j.parse().map_err(|_| format!("bad index {j}"))?,
            v.parse().map_err(|_| format!("bad value {v}"))?,
        ))
    };
    let cline = lines.next().ok_or("missing objective line")?;
    let mut c = vec![0.0; n];
    for t in cline.strip_prefix('c').ok_or("missing objective line")?.split_whitespace() {
        let (j, v) = entry(t)?;
        *c.get_mut(j).ok_or("objective index out of range")? = v;
    }
    let mut b = Vec::with_capacity(m);
    let mut trip = Vec::new();
    for line in lines {
        let body = line.split('#').next().unwrap_or("");
        let mut toks = body.split_whitespace().skip(2);
        let bv: f64 = toks
            .next()
            .ok_or("row without constant")?
            .parse()
            .map_err(|_| "bad row constant".to_string())?;
        let row = b.len();
        b.push(bv);
        for t in toks {
            let (j, v) = entry(t)?;
            if j >= n {
                return Err(format!("column {j} out of range"));
            }
            trip.push((row, j, v));
        }
    }
    if b.len() != m {
        return Err(format!("expected {m} rows, found {}", b.len()));
    }
    Ok(ConicProgram {
        c,
        a: CscMatrix::from_triplets(m, n, &trip),
        b,
        cones,
    })
}
