//! Non-uniform 1D grids (sinh stretching around a focus point), barrier ghost
//! zones and the extended jump grid, composed into the 3D tensor grid.

use serde::{Deserialize, Serialize};

use crate::error::{PricerError, Result};

/// Geometric step ratio used when extending a grid for the jump operator.
pub const JUMP_EXTENSION_RATIO: f64 = 1.15;

/// A strictly increasing 1D grid. `core_range` marks the diffusion region;
/// ghost nodes and jump-extension nodes lie outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    nodes: Vec<f64>,
    /// steps[i] = nodes[i] - nodes[i-1]; steps[0] is unused and set to 0.
    steps: Vec<f64>,
    /// Half-open index interval [start, end) of the core region.
    core_start: usize,
    core_end: usize,
}

impl Grid1D {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        let core = (0, n);
        Self::with_core(nodes, core)
    }

    pub fn with_core(nodes: Vec<f64>, core: (usize, usize)) -> Result<Self> {
        let mut g = Grid1D { nodes, steps: Vec::new(), core_start: core.0, core_end: core.1 };
        g.rebuild_steps();
        g.validate()?;
        Ok(g)
    }

    fn rebuild_steps(&mut self) {
        self.steps = vec![0.0; self.nodes.len()];
        for i in 1..self.nodes.len() {
            self.steps[i] = self.nodes[i] - self.nodes[i - 1];
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(PricerError::InvalidGrid("grid needs at least 2 nodes".into()));
        }
        if !self.nodes.iter().all(|x| x.is_finite()) {
            return Err(PricerError::InvalidGrid("grid nodes must be finite".into()));
        }
        if !self.nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(PricerError::InvalidGrid("grid nodes must strictly increase".into()));
        }
        if self.core_start >= self.core_end || self.core_end > self.nodes.len() {
            return Err(PricerError::InvalidGrid(format!(
                "core range [{}, {}) invalid for {} nodes",
                self.core_start,
                self.core_end,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// steps()[i] = node(i) - node(i-1) for i >= 1.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn core_range(&self) -> std::ops::Range<usize> {
        self.core_start..self.core_end
    }

    pub fn core_nodes(&self) -> &[f64] {
        &self.nodes[self.core_start..self.core_end]
    }

    pub fn min_core_step(&self) -> f64 {
        let lo = self.core_start.max(1);
        self.steps[lo..self.core_end].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &n) in self.nodes.iter().enumerate() {
            let d = (n - x).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Relocate the node nearest to `x` to exactly `x`. Used to pin barriers,
    /// strikes or evaluation points onto the grid before ghosting.
    pub fn with_node_at(mut self, x: f64) -> Result<Self> {
        if x < self.nodes[0] || x > *self.nodes.last().unwrap() {
            return Err(PricerError::InvalidGrid(format!("point {x} outside grid domain")));
        }
        let i = self.nearest_index(x);
        self.nodes[i] = x;
        self.rebuild_steps();
        self.validate()?;
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,node,step,core\n");
        for i in 0..self.nodes.len() {
            let core = i >= self.core_start && i < self.core_end;
            out.push_str(&format!("{},{:.17e},{:.17e},{}\n", i, self.nodes[i], self.steps[i], core as u8));
        }
        out
    }
}

/// Sinh-stretched grid on [lo, hi] with `n` nodes concentrated around `focus`.
/// `density` is the sinh scale in axis units: small values concentrate hard,
/// large values wash the stretching out toward a uniform grid.
pub fn build_nonuniform_grid(lo: f64, hi: f64, n: usize, focus: f64, density: f64) -> Result<Grid1D> {
    if !(lo < hi) {
        return Err(PricerError::InvalidGrid(format!("invalid bounds [{lo}, {hi}]")));
    }
    if n < 5 {
        return Err(PricerError::InvalidGrid(format!("too few nodes: {n} < 5")));
    }
    if !(focus >= lo && focus <= hi) {
        return Err(PricerError::InvalidGrid(format!("focus {focus} outside [{lo}, {hi}]")));
    }
    if !(density > 0.0) {
        return Err(PricerError::InvalidGrid("density must be > 0".into()));
    }
    let xi_lo = ((lo - focus) / density).asinh();
    let xi_hi = ((hi - focus) / density).asinh();
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let xi = xi_lo + (xi_hi - xi_lo) * i as f64 / (n - 1) as f64;
        nodes.push(focus + density * xi.sinh());
    }
    nodes[0] = lo;
    nodes[n - 1] = hi;
    Grid1D::from_nodes(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierSide {
    Above,
    Below,
}

/// Result of installing barrier ghost nodes: the grid, the barrier level
/// after snapping to the nearest node, and how far it moved.
#[derive(Debug, Clone)]
pub struct GhostedGrid {
    pub grid: Grid1D,
    pub barrier: f64,
    pub snap_distance: f64,
}

/// Snap `barrier` to the nearest node and append `count` ghost nodes beyond it
/// with spacing equal to the adjacent interior step. The core range excludes
/// the ghosts.
pub fn add_barrier_ghosts(g: &Grid1D, barrier: f64, side: BarrierSide, count: usize) -> Result<GhostedGrid> {
    if !(2..=3).contains(&count) {
        return Err(PricerError::InvalidGrid(format!("ghost count must be 2 or 3, got {count}")));
    }
    if barrier < g.nodes[0] || barrier > *g.nodes.last().unwrap() {
        return Err(PricerError::InvalidGrid(format!("barrier {barrier} outside grid domain")));
    }
    let idx = g.nearest_index(barrier);
    let snapped = g.nodes[idx];
    let snap_distance = (snapped - barrier).abs();

    let n = g.nodes.len();
    let mut nodes = Vec::with_capacity(n + count);
    let (core_start, core_end);
    match side {
        BarrierSide::Above => {
            // ghosts above the barrier; spacing = last interior step below it
            let h = if idx > 0 { g.steps[idx] } else { g.steps[1] };
            nodes.extend_from_slice(&g.nodes[..=idx]);
            for k in 1..=count {
                nodes.push(snapped + h * k as f64);
            }
            core_start = g.core_start;
            core_end = idx + 1;
        }
        BarrierSide::Below => {
            let h = if idx + 1 < n { g.steps[idx + 1] } else { g.steps[n - 1] };
            for k in (1..=count).rev() {
                nodes.push(snapped - h * k as f64);
            }
            nodes.extend_from_slice(&g.nodes[idx..]);
            core_start = count;
            core_end = count + (n - idx).min(g.core_end.saturating_sub(idx));
        }
    }
    let grid = Grid1D::with_core(nodes, (core_start, core_end))?;
    Ok(GhostedGrid { grid, barrier: snapped, snap_distance })
}

/// Extend the grid with `extra` nodes beyond the core ends, steps growing
/// geometrically (ratio 1.15), so the jump operator's stencil never reads
/// outside the region of valid data. Axes whose lowest node is 0 (a
/// degenerate boundary for multiplicative jumps) are extended upward only.
pub fn extend_jump_grid(g: &Grid1D, extra: usize) -> Grid1D {
    if extra == 0 {
        return g.clone();
    }
    let n = g.nodes.len();
    let zero_low = g.nodes[0] <= 0.0 + 1e-300;
    let (n_lo, n_hi) = if zero_low { (0, extra) } else { (extra / 2, extra - extra / 2) };

    let mut nodes = Vec::with_capacity(n + extra);
    let mut lower = Vec::with_capacity(n_lo);
    let mut h = g.steps[1];
    let mut x = g.nodes[0];
    for _ in 0..n_lo {
        h *= JUMP_EXTENSION_RATIO;
        x -= h;
        lower.push(x);
    }
    lower.reverse();
    nodes.extend_from_slice(&lower);
    nodes.extend_from_slice(&g.nodes);
    let mut h = g.steps[n - 1];
    let mut x = g.nodes[n - 1];
    for _ in 0..n_hi {
        h *= JUMP_EXTENSION_RATIO;
        x += h;
        nodes.push(x);
    }
    let core = (g.core_start + n_lo, g.core_end + n_lo);
    Grid1D::with_core(nodes, core).expect("extension preserves monotonicity")
}

/// The 3D tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub s_grid: Grid1D,
    pub v_grid: Grid1D,
    pub r_grid: Grid1D,
}

impl Grid3D {
    pub fn new(s_grid: Grid1D, v_grid: Grid1D, r_grid: Grid1D) -> Result<Self> {
        s_grid.validate()?;
        v_grid.validate()?;
        r_grid.validate()?;
        Ok(Grid3D { s_grid, v_grid, r_grid })
    }

    pub fn axis(&self, k: usize) -> &Grid1D {
        match k {
            0 => &self.s_grid,
            1 => &self.v_grid,
            2 => &self.r_grid,
            _ => panic!("axis index {k} out of range"),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.s_grid.len(), self.v_grid.len(), self.r_grid.len())
    }

    pub fn total_nodes(&self) -> usize {
        self.s_grid.len() * self.v_grid.len() * self.r_grid.len()
    }
}
