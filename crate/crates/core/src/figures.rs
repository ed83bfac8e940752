//! Data series for the four protocol curves: peg, supply, whale penalty and
//! cumulative penalty. Pure functions of fixed grids, so output never varies.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fixed::FixedAmount;
use crate::tokenomics::target_supply;
use crate::vault::{anticoin_value, cumulative_penalty, whale_penalty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Peg,
    Supply,
    Whale,
    Cumulative,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Peg, Figure::Supply, Figure::Whale, Figure::Cumulative];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Peg => "peg.csv",
            Figure::Supply => "supply.csv",
            Figure::Whale => "whale.csv",
            Figure::Cumulative => "cumulative.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Point {
    pub series: String,
    pub x: FixedAmount,
    pub y: FixedAmount,
}

pub const PEG_P0: i64 = 100;
pub const SUPPLY_S0: i64 = 1000;
pub const WHALE_K: FixedAmount = FixedAmount::from_raw(10_000_000);
pub const WHALE_LAMBDAS: [&str; 3] = ["1.5", "2", "3"];
pub const SYBIL_GAMMA: FixedAmount = FixedAmount::from_raw(50_000_000);
pub const SYBIL_DELTA_GAMMA: FixedAmount = FixedAmount::from_raw(10_000_000);
pub const SYBIL_SPLITS: [u64; 3] = [1, 4, 10];

fn fa(s: &str) -> FixedAmount {
    FixedAmount::parse(s).expect("literal")
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: FixedAmount, hi: FixedAmount, n: usize) -> Vec<FixedAmount> {
    assert!(n >= 2);
    let span = hi - lo;
    (0..n).map(|i| lo + FixedAmount::from_raw(span.raw() * i as i128 / (n as i128 - 1))).collect()
}

pub fn points(figure: Figure) -> Vec<Point> {
    let mut out = Vec::new();
    match figure {
        Figure::Peg => {
            let p0 = FixedAmount::from_int(PEG_P0);
            let grid = linear_grid(fa("0.01"), fa("200"), 200);
            for c_r in grid.iter().rev() {
                let y = anticoin_value(p0, *c_r).expect("positive grid");
                out.push(Point { series: "falling".into(), x: *c_r, y });
            }
            for c_r in &grid {
                let y = anticoin_value(p0, *c_r).expect("positive grid");
                out.push(Point { series: "rising".into(), x: *c_r, y });
            }
        }
        Figure::Supply => {
            let s0 = FixedAmount::from_int(SUPPLY_S0);
            for v in linear_grid(fa("1"), fa("1000000"), 1000) {
                let y = target_supply(v, s0).expect("non-negative grid");
                out.push(Point { series: "target".into(), x: v, y });
            }
        }
        Figure::Whale => {
            for l in WHALE_LAMBDAS {
                for h in 0..=100 {
                    let h = FixedAmount::from_int(h);
                    let y = whale_penalty(h, WHALE_K, fa(l)).expect("finite");
                    out.push(Point { series: format!("lambda={l}"), x: h, y });
                }
            }
        }
        Figure::Cumulative => {
            for n in SYBIL_SPLITS {
                for h in 1..=100 {
                    let h = FixedAmount::from_int(h);
                    let y = cumulative_penalty(h, n, SYBIL_GAMMA, SYBIL_DELTA_GAMMA).expect("finite");
                    out.push(Point { series: format!("n={n}"), x: h, y });
                }
            }
        }
    }
    out
}

/// Writes one figure's CSV into `dir` and returns its path.
pub fn write_figure(figure: Figure, dir: &Path) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(figure.file_name());
    let mut w = csv::Writer::from_path(&path)?;
    for p in points(figure) {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(path)
}
