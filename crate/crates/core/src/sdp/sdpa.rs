//! SDPA sparse format (`.dat-s`) export and import.
//!
//! SDPA states the primal as `min cᵀx  s.t.  Σ_i F_i x_i − F_0 ⪰ 0`. A block
//! `G_0 + Σ y_v G_v ⪯ 0` is written as `F_0 = G_0`, `F_v = −G_v`; a `⪰ 0`
//! block as `F_0 = −G_0`, `F_v = G_v`; and `c = −objective`. Negation is
//! exact, and every number is printed with 17 significant digits, so a
//! write/read cycle reproduces the problem bit for bit. Variable names and
//! block senses travel in leading `*` comment lines; files without them are
//! read with every block in the SDPA `⪰ 0` convention.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{LmiBlock, SdpProblem, Sense, SymMatrix};
use crate::error::{Error, Result};

/// `(row, col, value)` entries of one block.
type Entries = Vec<(usize, usize, f64)>;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write(problem: &SdpProblem) -> String {
    let mut out = String::new();
    out.push_str("\"pclpv semidefinite program\n");
    for (i, name) in problem.variables.iter().enumerate() {
        let _ = writeln!(out, "* var {} {}", i + 1, name);
    }
    for (i, block) in problem.blocks.iter().enumerate() {
        let sense = match block.sense {
            Sense::Nsd => "nsd",
            Sense::Psd => "psd",
        };
        let _ = writeln!(out, "* block {} {} {}", i + 1, sense, block.name);
    }
    let _ = writeln!(out, "{} = mDIM", problem.variables.len());
    let _ = writeln!(out, "{} = nBLOCK", problem.blocks.len());
    let dims: Vec<String> = problem.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{} = bLOCKsTRUCT", dims.join(" "));
    let c: Vec<String> = problem.objective.iter().map(|v| num(-v)).collect();
    let _ = writeln!(out, "{}", c.join(" "));

    for (bi, block) in problem.blocks.iter().enumerate() {
        let (f0_sign, fv_sign) = match block.sense {
            Sense::Nsd => (1.0, -1.0),
            Sense::Psd => (-1.0, 1.0),
        };
        let mut emit = |mat: usize, m: &SymMatrix, sign: f64| {
            for &(r, c, v) in &m.entries {
                // SDPA lists the upper triangle, 1-based.
                let _ = writeln!(out, "{} {} {} {} {}", mat, bi + 1, c + 1, r + 1, num(sign * v));
            }
        };
        emit(0, &block.constant, f0_sign);
        for (var, coeff) in &block.terms {
            emit(var + 1, coeff, fv_sign);
        }
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("SDPA line {line}: {msg}"))
}

pub fn read(text: &str) -> Result<SdpProblem> {
    let mut names: Vec<(usize, String)> = Vec::new();
    let mut senses: Vec<(usize, Sense, String)> = Vec::new();
    let mut header: Vec<(usize, &str)> = Vec::new();
    let mut data_start = None;

    let lines: Vec<&str> = text.lines().collect();
    for (ln, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('"') || line.starts_with('*') {
            if header.is_empty() {
                let mut parts = line.trim_start_matches('*').split_whitespace();
                match parts.next() {
                    Some("var") => {
                        let idx: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(ln + 1, "bad var index"))?;
                        names.push((idx, parts.collect::<Vec<_>>().join(" ")));
                    }
                    Some("block") => {
                        let idx: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(ln + 1, "bad block index"))?;
                        let sense = match parts.next() {
                            Some("nsd") => Sense::Nsd,
                            Some("psd") => Sense::Psd,
                            other => return Err(parse_err(ln + 1, format!("unknown sense {other:?}"))),
                        };
                        senses.push((idx, sense, parts.collect::<Vec<_>>().join(" ")));
                    }
                    _ => {}
                }
            }
            continue;
        }
        header.push((ln + 1, line));
        if header.len() == 4 {
            data_start = Some(ln + 1);
            break;
        }
    }
    let data_start = data_start.ok_or_else(|| Error::Input("SDPA header is incomplete".into()))?;

    // Header values may be followed by "= mDIM"-style annotations or braces.
    let first_numbers = |(ln, s): (usize, &str)| -> Result<Vec<String>> {
        let cleaned: String = s.chars().map(|ch| if matches!(ch, ',' | '{' | '}' | '(' | ')') { ' ' } else { ch }).collect();
        let toks: Vec<String> = cleaned
            .split_whitespace()
            .take_while(|t| !t.starts_with('='))
            .map(str::to_owned)
            .collect();
        if toks.is_empty() {
            return Err(parse_err(ln, "expected numbers"));
        }
        Ok(toks)
    };
    let m: usize = first_numbers(header[0])?[0].parse().map_err(|e| parse_err(header[0].0, e))?;
    let nblocks: usize = first_numbers(header[1])?[0].parse().map_err(|e| parse_err(header[1].0, e))?;
    let dims: Vec<usize> = first_numbers(header[2])?
        .iter()
        .map(|t| t.parse::<i64>().map(|d| d.unsigned_abs() as usize))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(header[2].0, e))?;
    if dims.len() != nblocks {
        return Err(parse_err(header[2].0, format!("expected {nblocks} block sizes, found {}", dims.len())));
    }
    let c: Vec<f64> = first_numbers(header[3])?
        .iter()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(header[3].0, e))?;
    if c.len() != m {
        return Err(parse_err(header[3].0, format!("expected {m} objective entries, found {}", c.len())));
    }

    let block_sense = |bi: usize| senses.iter().find(|s| s.0 == bi + 1).map(|s| s.1).unwrap_or(Sense::Psd);
    let mut constants: Vec<Entries> = vec![Vec::new(); nblocks];
    let mut terms: Vec<BTreeMap<usize, Entries>> = vec![Default::default(); nblocks];
    for (ln, raw) in lines.iter().enumerate().skip(data_start) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(parse_err(ln + 1, "expected `matno blkno i j value`"));
        }
        let p = |t: &str| t.parse::<usize>().map_err(|e| parse_err(ln + 1, e));
        let (mat, blk, i, j) = (p(toks[0])?, p(toks[1])?, p(toks[2])?, p(toks[3])?);
        let v: f64 = toks[4].parse().map_err(|e| parse_err(ln + 1, e))?;
        if blk == 0 || blk > nblocks || mat > m || i == 0 || j == 0 || i.max(j) > dims[blk - 1] {
            return Err(parse_err(ln + 1, "index out of range"));
        }
        let (r, col) = (i.max(j) - 1, i.min(j) - 1);
        let (f0_sign, fv_sign) = match block_sense(blk - 1) {
            Sense::Nsd => (1.0, -1.0),
            Sense::Psd => (-1.0, 1.0),
        };
        if mat == 0 {
            constants[blk - 1].push((r, col, f0_sign * v));
        } else {
            terms[blk - 1].entry(mat - 1).or_default().push((r, col, fv_sign * v));
        }
    }

    let mut variables: Vec<String> = (0..m).map(|i| format!("x{}", i + 1)).collect();
    for (idx, name) in names {
        if idx >= 1 && idx <= m && !name.is_empty() {
            variables[idx - 1] = name;
        }
    }
    let sort = |mut v: Vec<(usize, usize, f64)>| {
        v.sort_by_key(|&(r, c, _)| (r, c));
        SymMatrix { entries: v }
    };
    let blocks = (0..nblocks)
        .map(|bi| {
            let name = senses
                .iter()
                .find(|s| s.0 == bi + 1)
                .map(|s| s.2.clone())
                .filter(|n| !n.is_empty())
                .unwrap_or_else(|| format!("block{}", bi + 1));
            LmiBlock {
                name,
                dim: dims[bi],
                sense: block_sense(bi),
                constant: sort(std::mem::take(&mut constants[bi])),
                terms: std::mem::take(&mut terms[bi]).into_iter().map(|(k, v)| (k, sort(v))).collect(),
            }
        })
        .collect();
    let problem = SdpProblem { variables, objective: c.into_iter().map(|v| -v).collect(), blocks };
    problem.validate()?;
    Ok(problem)
}
