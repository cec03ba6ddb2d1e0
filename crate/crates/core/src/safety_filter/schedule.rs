use nalgebra::DVector;

use super::{FilterConfig, Obstacle};
use crate::error::{Error, Result};
use crate::set_algebra::IntervalBox;

/// Per-step output constraint boxes in full state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeRegionSchedule {
    pub boxes: Vec<IntervalBox>,
}

impl SafeRegionSchedule {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Tightens the velocity coordinates of the last box to `[-v, v]`.
    pub fn with_terminal_speed(mut self, velocity_dims: &[usize], v: f64) -> Self {
        if let Some(last) = self.boxes.last_mut() {
            for &d in velocity_dims {
                let lo = last.lower()[d].max(-v);
                let hi = last.upper()[d].min(v);
                if lo <= hi {
                    last.set_bounds(d, lo, hi);
                }
            }
        }
        self
    }
}

/// Number of growth rounds needed to cross the workspace; sets the step.
const GROWTH_ROUNDS: f64 = 200.0;

/// Free box around `p` (position space) inside `workspace` that touches,
/// but does not enter, any obstacle. All faces advance in turn by a small
/// step until blocked, so the box grows roughly evenly around `p` instead
/// of spanning the workspace along the first axis. Obstacles and workspace
/// must already be inflated/shrunk by the caller.
pub fn grow_free_box(p: &[f64], obstacles: &[IntervalBox], workspace: &IntervalBox) -> Result<IntervalBox> {
    let dim = p.len();
    let pv = DVector::from_column_slice(p);
    if !workspace.contains_point(&pv) || obstacles.iter().any(|o| o.contains_point(&pv)) {
        return Err(Error::InfeasibleStart);
    }
    let step = workspace.widths().max() / GROWTH_ROUNDS;
    let mut lo = p.to_vec();
    let mut hi = p.to_vec();
    let overlaps_others = |o: &IntervalBox, lo: &[f64], hi: &[f64], axis: usize| {
        (0..dim).all(|d| d == axis || (o.lower()[d] <= hi[d] && lo[d] <= o.upper()[d]))
    };
    let mut blocked = vec![[false; 2]; dim];
    while blocked.iter().any(|b| !b[0] || !b[1]) {
        for axis in 0..dim {
            if !blocked[axis][0] {
                let mut limit = workspace.lower()[axis];
                for o in obstacles {
                    if o.upper()[axis] <= lo[axis] && overlaps_others(o, &lo, &hi, axis) {
                        limit = limit.max(o.upper()[axis]);
                    }
                }
                let target = lo[axis] - step;
                if target <= limit {
                    lo[axis] = limit;
                    blocked[axis][0] = true;
                } else {
                    lo[axis] = target;
                }
            }
            if !blocked[axis][1] {
                let mut limit = workspace.upper()[axis];
                for o in obstacles {
                    if o.lower()[axis] >= hi[axis] && overlaps_others(o, &lo, &hi, axis) {
                        limit = limit.min(o.lower()[axis]);
                    }
                }
                let target = hi[axis] + step;
                if target >= limit {
                    hi[axis] = limit;
                    blocked[axis][1] = true;
                } else {
                    hi[axis] = target;
                }
            }
        }
    }
    IntervalBox::from_slices(&lo, &hi)
}

/// Extra obstacle inflation, relative to the workspace width, used only
/// while growing the free box. A tube touching a face of the box then still
/// clears the inflated obstacle, which the final check treats as closed.
const FACE_GAP: f64 = 1e-9;

/// `n_plan` copies of the free box around the measured position, lifted to
/// state space. Obstacles are inflated and the workspace shrunk by
/// `inflation` (measurement-noise hull radius plus clearance); velocity
/// coordinates are bounded by `±v_max`, all other coordinates unbounded.
pub fn free_boxes(
    y: &DVector<f64>,
    obstacles: &[Obstacle],
    cfg: &FilterConfig,
    inflation: f64,
) -> Result<SafeRegionSchedule> {
    let pos: Vec<f64> = cfg.position_dims.iter().map(|&d| y[d]).collect();
    let workspace = cfg
        .workspace
        .inflate(-inflation)
        .map_err(|_| Error::InfeasibleStart)?;
    let gap = FACE_GAP * cfg.workspace.widths().max();
    let inflated: Vec<IntervalBox> = obstacles
        .iter()
        .map(|o| o.region().inflate(inflation + gap))
        .collect::<Result<_>>()?;
    let free = grow_free_box(&pos, &inflated, &workspace)?;
    let mut full = free.lift(y.len(), &cfg.position_dims)?;
    for &d in &cfg.velocity_dims {
        full.set_bounds(d, -cfg.v_max, cfg.v_max);
    }
    Ok(SafeRegionSchedule {
        boxes: vec![full; cfg.n_plan],
    })
}
