use std::path::{Path, PathBuf};

use super::runner::RunMetrics;
use super::sweep::SweepResult;
use crate::error::{Result, ScreenError};
use crate::io::create_output;

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const LOSS_PRICE_CSV: &str = "loss_price.csv";
pub const SAVINGS_CSV: &str = "savings.csv";
pub const PLOT_SCRIPT: &str = "plot_loss_price.py";

pub const AGGREGATE_HEADER: [&str; 9] = [
    "correlation",
    "strategy",
    "mean_loss_per_item",
    "std_loss_per_item",
    "mean_price_per_item",
    "std_price_per_item",
    "mean_fe_rate",
    "mean_fi_rate",
    "iterations",
];

fn writer(path: &Path, force: bool) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(create_output(path, force)?))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| ScreenError::io(path, e))
}

pub const RUNS_HEADER: [&str; 11] = [
    "strategy",
    "correlation",
    "iteration",
    "loss_per_item",
    "price_per_item",
    "fe_rate",
    "fi_rate",
    "crowd_votes",
    "expert_items",
    "measured_output_rho",
    "world_checksum",
];

pub fn write_runs(path: &Path, runs: &[RunMetrics], force: bool) -> Result<()> {
    let mut w = writer(path, force)?;
    w.write_record(RUNS_HEADER)?;
    for r in runs {
        w.write_record([
            r.strategy.to_string(),
            r.correlation.map(|c| c.to_string()).unwrap_or_default(),
            r.iteration.to_string(),
            r.loss_per_item.to_string(),
            r.price_per_item.to_string(),
            r.fe_rate.to_string(),
            r.fi_rate.to_string(),
            r.crowd_votes.to_string(),
            r.expert_items.to_string(),
            r.measured_output_rho.to_string(),
            r.world_checksum.clone(),
        ])?;
    }
    finish(w, path)
}

pub fn write_aggregate(path: &Path, result: &SweepResult, force: bool) -> Result<()> {
    let mut w = writer(path, force)?;
    w.write_record(AGGREGATE_HEADER)?;
    for a in &result.aggregate {
        w.write_record([
            a.correlation.to_string(),
            a.strategy.to_string(),
            a.mean_loss_per_item.to_string(),
            a.std_loss_per_item.to_string(),
            a.mean_price_per_item.to_string(),
            a.std_price_per_item.to_string(),
            a.mean_fe_rate.to_string(),
            a.mean_fi_rate.to_string(),
            a.iterations.to_string(),
        ])?;
    }
    finish(w, path)
}

fn write_loss_price(path: &Path, result: &SweepResult, force: bool) -> Result<()> {
    let mut w = writer(path, force)?;
    w.write_record(["strategy", "correlation", "price_per_item", "loss_per_item"])?;
    let mut rows: Vec<_> = result.aggregate.iter().collect();
    rows.sort_by_key(|a| a.strategy);
    for a in rows {
        w.write_record([
            a.strategy.to_string(),
            a.correlation.to_string(),
            a.mean_price_per_item.to_string(),
            a.mean_loss_per_item.to_string(),
        ])?;
    }
    finish(w, path)
}

fn write_savings(path: &Path, result: &SweepResult, force: bool) -> Result<()> {
    let mut w = writer(path, force)?;
    w.write_record([
        "correlation",
        "crowd_price_per_item",
        "hybrid_price_per_item",
        "savings",
    ])?;
    for s in &result.savings {
        w.write_record([
            s.correlation.to_string(),
            s.crowd_price_per_item.to_string(),
            s.hybrid_price_per_item.to_string(),
            s.savings.to_string(),
        ])?;
    }
    finish(w, path)
}

const PLOT_SOURCE: &str = r#"#!/usr/bin/env python3
# Renders loss_price.csv as a loss-vs-price scatter, one series per strategy.
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "loss_price.csv"))))
fig, ax = plt.subplots(figsize=(6, 4))
for strategy in ("machine", "crowd", "hybrid"):
    pts = [r for r in rows if r["strategy"] == strategy]
    xs = [float(r["price_per_item"]) for r in pts]
    ys = [float(r["loss_per_item"]) for r in pts]
    ax.plot(xs, ys, "o-", label=strategy)
    for r, x, y in zip(pts, xs, ys):
        ax.annotate(r["correlation"], (x, y), fontsize=7)
ax.set_xlabel("price per item")
ax.set_ylabel("loss per item")
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "loss_price.png"), dpi=150)
"#;

/// Writes every sweep table into `out_dir`. Existing files are an error unless
/// `force`; the check covers all targets before anything is written.
pub fn emit_outputs(
    result: &SweepResult,
    out_dir: &Path,
    force: bool,
    plot_script: bool,
) -> Result<Vec<PathBuf>> {
    if result.runs.is_empty() {
        return Err(ScreenError::invalid("nothing to emit: no runs"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| ScreenError::io(out_dir, e))?;
    let mut names = vec![RUNS_CSV, AGGREGATE_CSV, LOSS_PRICE_CSV, SAVINGS_CSV];
    if plot_script {
        names.push(PLOT_SCRIPT);
    }
    let paths: Vec<PathBuf> = names.iter().map(|n| out_dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(ScreenError::OutputExists(p.clone()));
        }
    }
    write_runs(&paths[0], &result.runs, force)?;
    write_aggregate(&paths[1], result, force)?;
    write_loss_price(&paths[2], result, force)?;
    write_savings(&paths[3], result, force)?;
    if plot_script {
        crate::io::write_text(&paths[4], PLOT_SOURCE, force)?;
    }
    Ok(paths)
}
