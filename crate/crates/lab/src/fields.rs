//! Plain-text field dumps.
//!
//! ```text
//! smlab-field 1
//! dim 3
//! cells 8 8 8
//! side 1 1 1
//! <one interior value per line, row-major, last axis fastest>
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a dump
//! restores the field bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use smlab_core::grid::{Grid, ScalarField};

const MAGIC: &str = "smlab-field 1";

pub fn to_text(field: &ScalarField) -> String {
    let grid = field.grid();
    let dim = grid.dim();
    let join = |xs: Vec<String>| xs.join(" ");
    let mut out = String::with_capacity(24 * field.len() + 64);
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "dim {dim}").unwrap();
    writeln!(out, "cells {}", join(grid.cells()[..dim].iter().map(|c| c.to_string()).collect())).unwrap();
    writeln!(out, "side {}", join(grid.side_lengths()[..dim].iter().map(|s| s.to_string()).collect())).unwrap();
    for v in field.values() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn from_text(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    ensure!(lines.next() == Some(MAGIC), "not a field dump (expected header {MAGIC:?})");
    let mut header = |name: &str| -> Result<Vec<&str>> {
        let line = lines.next().with_context(|| format!("missing {name} line"))?;
        let mut words = line.split_whitespace();
        ensure!(words.next() == Some(name), "expected {name} line, got {line:?}");
        Ok(words.collect())
    };
    let dim: usize = header("dim")?.first().context("empty dim line")?.parse()?;
    let cells = header("cells")?.iter().map(|w| w.parse()).collect::<Result<Vec<usize>, _>>()?;
    let side = header("side")?.iter().map(|w| w.parse()).collect::<Result<Vec<f64>, _>>()?;
    ensure!(cells.len() == dim && side.len() == dim, "header lengths do not match dim {dim}");
    let grid = Grid::new(dim, &cells, &side)?;
    let values = lines.map(|l| l.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
    if values.len() != grid.len() {
        bail!("expected {} values, found {}", grid.len(), values.len());
    }
    Ok(ScalarField::new(grid, values)?)
}

pub fn write(path: &Path, field: &ScalarField) -> Result<()> {
    std::fs::write(path, to_text(field)).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_text(&text).with_context(|| format!("parsing {}", path.display()))
}
