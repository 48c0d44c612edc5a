//! Plain-text sparse dump of an [`SdpProblem`].
//!
//! ```text
//! vars <d>
//! blocks <n_1> ... <n_B> [-<R>]
//! objective <q_1> ... <q_d>
//! <block> <row> <col> <var> <value>
//! ```
//!
//! Blocks, rows and columns are 1-based and only the upper triangle is listed.
//! Variable 0 denotes the constant matrix F0. A trailing negative block size
//! marks the diagonal block of R linear rows `g - G x >= 0`; its entries use
//! `row == col`, value g_r for var 0 and -G_ri for var i. Bounds x >= 0 are
//! implicit. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{LinearRow, PsdBlock, SdpProblem};
use crate::error::{Error, Result};

const MAX_ELEMENTS: usize = 50_000_000;
const MAX_VARS: usize = 1_000_000;

pub fn write_triplets(p: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {}", p.num_vars);
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.size().to_string()).collect();
    if !p.linear.is_empty() {
        sizes.push(format!("-{}", p.linear.len()));
    }
    let _ = writeln!(out, "blocks {}", sizes.join(" "));
    let q: Vec<String> = p.objective.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "objective {}", q.join(" "));
    for (b, block) in p.blocks.iter().enumerate() {
        let mats = std::iter::once((0, &block.constant)).chain(block.coefficients.iter().map(|(i, f)| (i + 1, f)));
        for (var, f) in mats {
            for c in 0..f.ncols() {
                for r in 0..=c {
                    if f[(r, c)] != 0.0 {
                        let _ = writeln!(out, "{} {} {} {} {}", b + 1, r + 1, c + 1, var, f[(r, c)]);
                    }
                }
            }
        }
    }
    let lp = p.blocks.len() + 1;
    for (r, row) in p.linear.iter().enumerate() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "{lp} {0} {0} 0 {1}", r + 1, row.rhs);
        }
        for (i, a) in &row.coefficients {
            if *a != 0.0 {
                let _ = writeln!(out, "{lp} {0} {0} {1} {2}", r + 1, i + 1, -a);
            }
        }
    }
    out
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::SdpFormat(format!("line {line}: {msg}"))
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| Error::SdpFormat(format!("missing `{key}` header")))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(bad(no, format!("expected `{key}`")));
    }
    Ok((no, toks.collect()))
}

pub fn parse_triplets(text: &str) -> Result<SdpProblem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (no, toks) = header(&mut lines, "vars")?;
    let num_vars: usize = match toks.as_slice() {
        [v] => v.parse().map_err(|e| bad(no, e))?,
        _ => return Err(bad(no, "expected one variable count")),
    };
    if num_vars > MAX_VARS {
        return Err(bad(no, "too many variables"));
    }

    let (no, toks) = header(&mut lines, "blocks")?;
    let mut sizes = Vec::new();
    let mut num_rows = 0usize;
    for (k, t) in toks.iter().enumerate() {
        let v: i64 = t.parse().map_err(|e| bad(no, e))?;
        if v < 0 {
            if k + 1 != toks.len() {
                return Err(bad(no, "the linear block must come last"));
            }
            num_rows = v.unsigned_abs() as usize;
            if num_rows > MAX_VARS {
                return Err(bad(no, "too many linear rows"));
            }
        } else if v == 0 {
            return Err(bad(no, "block size 0"));
        } else {
            sizes.push(v as usize);
        }
    }
    let psd_elements: usize = sizes.iter().try_fold(0usize, |acc, &n| acc.checked_add(n.checked_mul(n)?)).unwrap_or(usize::MAX);
    if psd_elements > MAX_ELEMENTS {
        return Err(bad(no, "blocks too large"));
    }

    let (no, toks) = header(&mut lines, "objective")?;
    if toks.len() != num_vars {
        return Err(bad(no, format!("expected {num_vars} objective entries, got {}", toks.len())));
    }
    let objective = toks
        .iter()
        .map(|t| t.parse::<f64>().map_err(|e| bad(no, e)))
        .collect::<Result<Vec<_>>>()?;

    let mut mats: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
    let mut allocated = psd_elements;
    let mut linear: Vec<LinearRow> = (0..num_rows)
        .map(|_| LinearRow {
            coefficients: Vec::new(),
            rhs: 0.0,
        })
        .collect();
    for (no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [b, r, c, var, val] = toks.as_slice() else {
            return Err(bad(no, "expected `block row col var value`"));
        };
        let parse_idx = |s: &str| s.parse::<usize>().map_err(|e| bad(no, e));
        let (b, r, c, var) = (parse_idx(b)?, parse_idx(r)?, parse_idx(c)?, parse_idx(var)?);
        let val: f64 = val.parse().map_err(|e| bad(no, e))?;
        if !val.is_finite() {
            return Err(bad(no, "non-finite value"));
        }
        if var > num_vars {
            return Err(bad(no, format!("variable {var} out of range")));
        }
        if b == 0 || r == 0 || c == 0 {
            return Err(bad(no, "indices are 1-based"));
        }
        if b == sizes.len() + 1 && num_rows > 0 {
            if r != c || r > num_rows {
                return Err(bad(no, "linear block entries must be diagonal and in range"));
            }
            let row = &mut linear[r - 1];
            if var == 0 {
                row.rhs += val;
            } else {
                row.coefficients.push((var - 1, -val));
            }
            continue;
        }
        let n = *sizes.get(b - 1).ok_or_else(|| bad(no, format!("block {b} out of range")))?;
        if r > n || c > n {
            return Err(bad(no, "entry outside block"));
        }
        if r > c {
            return Err(bad(no, "only upper-triangle entries are allowed"));
        }
        let m = match mats.entry((b - 1, var)) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                allocated += n * n;
                if allocated > MAX_ELEMENTS {
                    return Err(bad(no, "problem too large"));
                }
                e.insert(DMatrix::zeros(n, n))
            }
        };
        m[(r - 1, c - 1)] += val;
        if r != c {
            m[(c - 1, r - 1)] += val;
        }
    }

    let mut blocks: Vec<PsdBlock> = sizes.iter().map(|&n| PsdBlock::new(n)).collect();
    for ((b, var), m) in mats {
        if var == 0 {
            blocks[b].constant = m;
        } else {
            blocks[b].coefficients.push((var - 1, m));
        }
    }
    let p = SdpProblem {
        num_vars,
        objective,
        blocks,
        linear,
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SdpProblem {
        let mut b = PsdBlock::new(2);
        b.constant = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        b.coefficients.push((0, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])));
        b.coefficients.push((1, DMatrix::from_row_slice(2, 2, &[0.25, -0.5, -0.5, 0.0])));
        SdpProblem {
            num_vars: 2,
            objective: vec![1.0, 0.1],
            blocks: vec![b],
            linear: vec![LinearRow {
                coefficients: vec![(1, 3.5)],
                rhs: 7.0,
            }],
        }
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let text = write_triplets(&p);
        assert!(text.starts_with("vars 2\nblocks 2 -1\nobjective 1 0.1\n"));
        assert_eq!(parse_triplets(&text).unwrap(), p);
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "vars x",
            "vars 1\nblocks 2\nobjective 1 2",
            "vars 1\nblocks 2\nobjective 1\n1 2 1 0 1.0",
            "vars 1\nblocks 2\nobjective 1\n3 1 1 0 1.0",
            "vars 1\nblocks 2\nobjective 1\n1 1 1 2 1.0",
            "vars 1\nblocks -1 2\nobjective 1",
            "vars 1\nblocks 99999999\nobjective 1",
            "vars 1\nblocks 2\nobjective 1\n1 1 1 0 NaN",
        ] {
            assert!(parse_triplets(bad).is_err(), "{bad:?}");
        }
    }
}
