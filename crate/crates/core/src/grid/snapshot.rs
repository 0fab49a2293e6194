//! Field snapshots.
//!
//! Both encodings start with the header line
//!
//! ```text
//! # mac-field kind=<u|v|p> nx=<cells> ny=<cells> lx=<len> ly=<len>
//! ```
//!
//! followed by the stored entries in row-major order (`i` fastest). The text
//! encoding puts one value per line; the binary encoding appends the raw
//! little-endian `f64`s right after the header's newline.

use std::io::{BufRead, Write};

use super::{Field, Location, StaggeredGrid};
use crate::error::{Error, Result};

fn header(f: &Field) -> String {
    let g = f.grid();
    format!(
        "# mac-field kind={} nx={} ny={} lx={} ly={}",
        f.loc().tag(),
        g.nx(),
        g.ny(),
        g.lx(),
        g.ly()
    )
}

fn parse_header(line: &str) -> Result<(Location, StaggeredGrid)> {
    let rest = line
        .trim_end()
        .strip_prefix("# mac-field ")
        .ok_or_else(|| Error::Snapshot(format!("bad header line: {line:?}")))?;
    let (mut kind, mut nx, mut ny, mut lx, mut ly) = (None, None, None, None, None);
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Snapshot(format!("bad header token {tok:?}")))?;
        let bad = || Error::Snapshot(format!("bad value in header token {tok:?}"));
        match k {
            "kind" => kind = Some(Location::from_tag(v).ok_or_else(bad)?),
            "nx" => nx = Some(v.parse::<usize>().map_err(|_| bad())?),
            "ny" => ny = Some(v.parse::<usize>().map_err(|_| bad())?),
            "lx" => lx = Some(v.parse::<f64>().map_err(|_| bad())?),
            "ly" => ly = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(Error::Snapshot(format!("unknown header key {k:?}"))),
        }
    }
    let missing = |k: &str| Error::Snapshot(format!("header missing {k}"));
    let grid = StaggeredGrid::new(
        nx.ok_or_else(|| missing("nx"))?,
        ny.ok_or_else(|| missing("ny"))?,
        lx.ok_or_else(|| missing("lx"))?,
        ly.ok_or_else(|| missing("ly"))?,
    )?;
    Ok((kind.ok_or_else(|| missing("kind"))?, grid))
}

pub fn write_csv<W: Write>(f: &Field, mut out: W) -> Result<()> {
    writeln!(out, "{}", header(f))?;
    for x in f.values() {
        writeln!(out, "{x:e}")?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Field> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Snapshot("empty snapshot".into()))??;
    let (loc, grid) = parse_header(&first)?;
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| Error::Snapshot(format!("line {}: not a number: {t:?}", n + 2)))?,
        );
    }
    Field::from_values(&grid, loc, values)
}

pub fn write_binary<W: Write>(f: &Field, mut out: W) -> Result<()> {
    writeln!(out, "{}", header(f))?;
    for x in f.values() {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: BufRead>(mut input: R) -> Result<Field> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let (loc, grid) = parse_header(&first)?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Snapshot("payload is not a whole number of f64".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Field::from_values(&grid, loc, values)
}
