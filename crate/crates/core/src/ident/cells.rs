use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::IdentVariables;
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::vehicle::{VehicleModel, Wheel};

/// Refined coefficients of one wheel at one step, placed at the wheel's
/// world position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub step: usize,
    pub wheel: Wheel,
    pub xy: Vector2<f64>,
    pub s: [f64; 4],
}

pub fn pseudo_labels(vars: &IdentVariables, vehicle: &VehicleModel) -> Vec<PseudoLabel> {
    let mut out = Vec::with_capacity(vars.len() * 4);
    for (i, st) in vars.states.iter().enumerate() {
        for w in Wheel::ALL {
            let p = st.wheel_position(vehicle, w);
            out.push(PseudoLabel { step: i, wheel: w, xy: Vector2::new(p.x, p.y), s: vars.s[i][w.index()] });
        }
    }
    out
}

pub fn write_pseudo_labels_csv<W: Write>(mut out: W, labels: &[PseudoLabel]) -> Result<()> {
    writeln!(out, "step,wheel,x,y,mu_s,mu_d,v_s,mu_v")?;
    for l in labels {
        writeln!(out, "{},{},{},{},{},{},{},{}", l.step, l.wheel.name(), l.xy.x, l.xy.y, l.s[0], l.s[1], l.s[2], l.s[3])?;
    }
    Ok(())
}

pub fn read_pseudo_labels_csv<R: BufRead>(input: R) -> Result<Vec<PseudoLabel>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::domain(format!("malformed pseudo-label row {}: {line}", n + 1));
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|_| bad());
        out.push(PseudoLabel {
            step: f[0].trim().parse().map_err(|_| bad())?,
            wheel: Wheel::from_name(f[1].trim()).ok_or_else(bad)?,
            xy: Vector2::new(num(2)?, num(3)?),
            s: [num(4)?, num(5)?, num(6)?, num(7)?],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CellFit {
    pub map: GridMap,
    pub updated_cells: usize,
    /// Labels outside the map.
    pub skipped: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Write the channel-wise median of the labels in each cell into the
/// friction layer; cells without labels keep their prior.
pub fn fit_cells(labels: &[PseudoLabel], map: &GridMap) -> CellFit {
    let mut bins: BTreeMap<(usize, usize), Vec<[f64; 4]>> = BTreeMap::new();
    let mut skipped = 0;
    for l in labels {
        match map.spec().cell_of(l.xy.x, l.xy.y) {
            Some(c) => bins.entry(c).or_default().push(l.s),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} pseudo-labels fell outside the map");
    }
    let mut out = map.clone();
    for (cell, samples) in &bins {
        let s: [f64; 4] = std::array::from_fn(|c| median(&mut samples.iter().map(|x| x[c]).collect::<Vec<_>>()));
        out.set_stribeck(*cell, s);
    }
    CellFit { map: out, updated_cells: bins.len(), skipped }
}
