use crate::params::Grid;

/// The matrix of per-area filter states plus the activity flags consulted
/// by the global update. Storage is row-major (`y * cells_x + x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMap {
    grid: Grid,
    states: Vec<u64>,
    active: Vec<bool>,
    pub last_ts: u64,
}

impl TimeMap {
    pub fn new(grid: Grid) -> Self {
        TimeMap {
            grid,
            states: vec![0; grid.len()],
            active: vec![false; grid.len()],
            last_ts: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [u64] {
        &mut self.states
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_mut(&mut self) -> &mut [bool] {
        &mut self.active
    }

    #[inline]
    pub fn state(&self, x_cell: usize, y_cell: usize) -> u64 {
        self.states[self.grid.address(x_cell, y_cell)]
    }

    #[inline]
    pub fn is_active(&self, x_cell: usize, y_cell: usize) -> bool {
        self.active[self.grid.address(x_cell, y_cell)]
    }

    pub fn parts_mut(&mut self) -> (&mut [u64], &mut [bool]) {
        (&mut self.states, &mut self.active)
    }

    pub fn fill(&mut self, value: u64) {
        self.states.fill(value);
    }

    pub fn clear_active(&mut self) {
        self.active.fill(false);
    }

    /// Number of bits needed to store the states at `state_bits` each.
    pub fn storage_bits(&self, state_bits: u32) -> u64 {
        self.grid.len() as u64 * u64::from(state_bits)
    }
}
