//! Grid search for the minimum-norm feasible point, used as a test oracle.
//!
//! A coarse grid over the box locates feasible points; boxes around the best
//! candidates are then re-gridded with finer spacing until the spacing
//! reaches `resolution`. A refinement box whose best point lands on its
//! border is re-centered before going finer.

use super::{SoccProgram, SolverError};
use crate::Vector;

const COARSE_POINTS_PER_SIDE: usize = 41;
const REFINE_HALF_STEPS: i64 = 12;
const CANDIDATES: usize = 4;
const POINT_BUDGET: usize = 4_000_000;

#[derive(Clone, Copy)]
struct Candidate {
    norm2: f64,
    u: [f64; 3],
}

struct Best {
    items: Vec<Candidate>,
}

impl Best {
    fn new() -> Self {
        Self {
            items: Vec::with_capacity(CANDIDATES + 1),
        }
    }

    fn offer(&mut self, c: Candidate, min_sep2: f64) {
        if let Some(last) = self.items.last() {
            if self.items.len() == CANDIDATES && c.norm2 >= last.norm2 {
                return;
            }
        }
        // keep candidates apart so they explore different regions
        if let Some(pos) = self.items.iter().position(|o| dist2(&o.u, &c.u) < min_sep2) {
            if c.norm2 < self.items[pos].norm2 {
                self.items.remove(pos);
            } else {
                return;
            }
        }
        let at = self.items.partition_point(|o| o.norm2 <= c.norm2);
        self.items.insert(at, c);
        self.items.truncate(CANDIDATES);
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Scans the grid `center + spacing·k`, `|k_i| ≤ half_steps`, clipped to
/// the outer box.
fn scan(
    prog: &SoccProgram,
    center: &[f64; 3],
    spacing: f64,
    half_steps: i64,
    halfwidth: f64,
    best: &mut Best,
) {
    let m = prog.m();
    let side = (2 * half_steps + 1) as usize;
    let total = side.pow(m as u32);
    let mut u = [0.0; 3];
    let min_sep2 = (4.0 * spacing).powi(2);
    for flat in 0..total {
        let mut rest = flat;
        let mut inside = true;
        for i in 0..m {
            let k = (rest % side) as i64 - half_steps;
            rest /= side;
            u[i] = center[i] + spacing * k as f64;
            if u[i].abs() > halfwidth * (1.0 + 1e-12) {
                inside = false;
            }
        }
        if !inside {
            continue;
        }
        if prog.max_residual_slice(&u[..m]) <= 0.0 {
            let norm2 = u[..m].iter().map(|x| x * x).sum();
            best.offer(Candidate { norm2, u }, min_sep2);
        }
    }
}

/// Grid-search minimizer of `‖u‖` over feasible points of `[−w, w]^m`.
pub fn brute_force_min_norm(
    prog: &SoccProgram,
    box_halfwidth: f64,
    resolution: f64,
) -> Result<Vector, SolverError> {
    let m = prog.m();
    if m > 3 {
        return Err(SolverError::GridTooLarge { m });
    }
    if !(box_halfwidth > 0.0 && box_halfwidth.is_finite()) {
        return Err(SolverError::InvalidGrid {
            name: "box_halfwidth",
            value: box_halfwidth,
        });
    }
    if !(resolution > 0.0 && resolution <= box_halfwidth) {
        return Err(SolverError::InvalidGrid {
            name: "resolution",
            value: resolution,
        });
    }

    let origin = [0.0; 3];
    let mut half_steps = (COARSE_POINTS_PER_SIDE as i64 - 1) / 2;
    let mut spacing = box_halfwidth / half_steps as f64;
    let mut best = Best::new();
    loop {
        scan(prog, &origin, spacing, half_steps, box_halfwidth, &mut best);
        if !best.items.is_empty() || spacing <= resolution {
            break;
        }
        let next = ((2 * half_steps + 1) as usize * 2).pow(m as u32);
        if next > POINT_BUDGET {
            break;
        }
        half_steps *= 2;
        spacing *= 0.5;
    }
    if best.items.is_empty() {
        return Err(SolverError::EmptyFeasibleGrid);
    }

    while spacing > resolution {
        let fine = (spacing / 4.0).max(resolution);
        let steps = REFINE_HALF_STEPS;
        let mut next = Best::new();
        for c in best.items.clone() {
            let mut center = c.u;
            // follow the minimizer if it sits on the border of the local box
            for _ in 0..64 {
                let mut local = Best::new();
                scan(prog, &center, fine, steps, box_halfwidth, &mut local);
                let Some(top) = local.items.first().copied() else {
                    break;
                };
                for item in &local.items {
                    next.offer(*item, (4.0 * fine).powi(2));
                }
                let on_border = (0..m).any(|i| {
                    let k = ((top.u[i] - center[i]) / fine).round().abs() as i64;
                    k >= steps && top.u[i].abs() < box_halfwidth - fine
                });
                if !on_border {
                    break;
                }
                center = top.u;
            }
        }
        best = next;
        spacing = fine;
    }
    let top = best.items[0];
    Ok(Vector::from_column_slice(&top.u[..m]))
}
