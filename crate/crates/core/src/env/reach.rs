use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, GRID_CELLS};
use crate::zyz::{FeasibilityOracle, GeometricOracle, KinematicModel, Pose, ZyzAngles};

/// Where the assembly grid sits in the robot base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridFrame {
    /// Base-frame position of the grid's outer corner at cell (0,0,0), mm.
    pub origin_mm: [f64; 3],
    pub cell_mm: f64,
}

impl Default for GridFrame {
    fn default() -> Self {
        Self {
            origin_mm: [325.0, -37.5, 0.0],
            cell_mm: 25.0,
        }
    }
}

impl GridFrame {
    /// Top-down placement pose over the centre of `cell`.
    pub fn pose_for(&self, cell: Cell) -> Pose {
        let c = [cell.x, cell.y, cell.z];
        let position =
            std::array::from_fn(|i| self.origin_mm[i] + (f64::from(c[i]) + 0.5) * self.cell_mm);
        Pose::from_zyz(position, ZyzAngles::new(0.0, PI, 0.0)).expect("top-down pose is valid")
    }
}

/// Per-cell reachability, evaluated once through a feasibility oracle.
#[derive(Clone, Debug)]
pub struct Reachability {
    table: [bool; GRID_CELLS],
    oracle: Arc<dyn FeasibilityOracle>,
    frame: GridFrame,
}

impl Default for Reachability {
    fn default() -> Self {
        Self::new(
            Arc::new(GeometricOracle::new(KinematicModel::default())),
            GridFrame::default(),
        )
    }
}

impl Reachability {
    pub fn new(oracle: Arc<dyn FeasibilityOracle>, frame: GridFrame) -> Self {
        let table = std::array::from_fn(|i| oracle.feasible(&frame.pose_for(Cell::from_index(i))));
        Self {
            table,
            oracle,
            frame,
        }
    }

    pub fn cell(&self, index: usize) -> bool {
        self.table[index]
    }

    pub fn reachable_count(&self) -> usize {
        self.table.iter().filter(|&&r| r).count()
    }

    pub fn oracle(&self) -> &dyn FeasibilityOracle {
        self.oracle.as_ref()
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }
}
