use serde::{Deserialize, Serialize};

use super::{Episode, Result, SimError};

/// Raster dimensions in pixels and channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl GridShape {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    /// Desk-scale default, 32×32 single channel.
    pub const DESK: GridShape = GridShape::new(32, 32, 1);
    /// Full-size 128×128 RGB grids.
    pub const PAPER: GridShape = GridShape::new(128, 128, 3);

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ego-centric top-down raster, row-major `height × width × channels`
/// with intensities in `[0, 1]`. Row 0 is the farthest row ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub shape: GridShape,
    pub cells: Vec<f32>,
}

impl OccupancyGrid {
    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            cells: vec![0.0; shape.len()],
        }
    }

    pub fn from_cells(shape: GridShape, cells: Vec<f32>) -> Result<Self> {
        if cells.len() != shape.len() {
            return Err(SimError::Config(format!(
                "grid of shape {}x{}x{} needs {} cells, got {}",
                shape.width,
                shape.height,
                shape.channels,
                shape.len(),
                cells.len()
            )));
        }
        if let Some(v) = cells.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SimError::Config(format!("grid cell value {v} outside [0, 1]")));
        }
        Ok(Self { shape, cells })
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        let s = self.shape;
        self.cells[(row * s.width + col) * s.channels + channel]
    }

    fn fill_pixel(&mut self, row: usize, col: usize, value: f32) {
        let s = self.shape;
        let base = (row * s.width + col) * s.channels;
        // Grey-scale: every channel carries the same intensity.
        self.cells[base..base + s.channels].fill(value);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub shape: GridShape,
    /// Metres covered across the width of the grid.
    pub lateral_extent: f64,
    /// Metres covered along the height of the grid.
    pub longitudinal_extent: f64,
    /// Fraction of the height, from the top, at which the ego centre sits.
    pub ego_row_fraction: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub draw_markings: bool,
    pub draw_boundaries: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            shape: GridShape::DESK,
            lateral_extent: 16.0,
            longitudinal_extent: 48.0,
            ego_row_fraction: 0.75,
            ego_length: 4.5,
            ego_width: 1.8,
            draw_markings: true,
            draw_boundaries: true,
        }
    }
}

impl GridConfig {
    pub fn with_shape(shape: GridShape) -> Self {
        Self {
            shape,
            ..Self::default()
        }
    }
}

pub(crate) const MARKING_INTENSITY: f32 = 0.5;
pub(crate) const BOUNDARY_INTENSITY: f32 = 0.8;
pub(crate) const EGO_INTENSITY: f32 = 1.0;

/// Renders the road around the ego vehicle at step `t`.
///
/// The raster is road-aligned and centred laterally on the ego vehicle.
/// Lane markings and road boundaries are solid lines along the road axis,
/// road surface and off-road cells are 0, the ego footprint is 1.
pub fn render_grid(episode: &Episode, t: usize, config: &GridConfig) -> Result<OccupancyGrid> {
    let shape = config.shape;
    if shape.width < 8 || shape.height < 8 {
        return Err(SimError::Config(format!(
            "grid {}x{} is smaller than the 8x8 minimum",
            shape.width, shape.height
        )));
    }
    if shape.channels == 0 {
        return Err(SimError::Config("grid needs at least one channel".into()));
    }
    let state = episode.states.get(t).ok_or(SimError::Index {
        t,
        len: episode.states.len(),
    })?;

    let mut grid = OccupancyGrid::zeros(shape);
    let col_width = config.lateral_extent / shape.width as f64;
    let row_height = config.longitudinal_extent / shape.height as f64;
    let left = state.x - config.lateral_extent / 2.0;

    let column_of = |world_x: f64| -> Option<usize> {
        let c = ((world_x - left) / col_width).floor();
        (c >= 0.0 && c < shape.width as f64).then_some(c as usize)
    };
    let mut draw_line = |world_x: f64, value: f32| {
        if let Some(col) = column_of(world_x) {
            for row in 0..shape.height {
                grid.fill_pixel(row, col, value);
            }
        }
    };

    if config.draw_boundaries {
        draw_line(0.0, BOUNDARY_INTENSITY);
        draw_line(episode.lanes as f64 * episode.lane_width, BOUNDARY_INTENSITY);
    }
    if config.draw_markings {
        for k in 1..episode.lanes {
            draw_line(k as f64 * episode.lane_width, MARKING_INTENSITY);
        }
    }

    // Ego footprint in ego-centric coordinates: every cell whose centre lies
    // inside the rectangle, and at least the cell under the ego centre.
    let centre_col = shape.width as f64 / 2.0;
    let centre_row = config.ego_row_fraction * shape.height as f64;
    let half_w = config.ego_width / 2.0 / col_width;
    let half_l = config.ego_length / 2.0 / row_height;
    for row in 0..shape.height {
        let dy = row as f64 + 0.5 - centre_row;
        if dy.abs() > half_l {
            continue;
        }
        for col in 0..shape.width {
            let dx = col as f64 + 0.5 - centre_col;
            if dx.abs() <= half_w {
                grid.fill_pixel(row, col, EGO_INTENSITY);
            }
        }
    }
    let r = (centre_row.floor() as usize).min(shape.height - 1);
    let c = (centre_col.floor() as usize).min(shape.width - 1);
    grid.fill_pixel(r, c, EGO_INTENSITY);

    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{simulate_episode, EgoState, EpisodeConfig};

    fn straight_episode() -> Episode {
        // Two states, constant velocity, no lateral motion.
        let v = 100.0;
        let dt = 0.1;
        let s0 = EgoState {
            x: 5.25,
            y: 0.0,
            heading: 0.0,
            v_f: v,
            v_delta: 0.0,
            t: 0,
        };
        let s1 = EgoState {
            y: v / 3.6 * dt,
            t: 1,
            ..s0
        };
        Episode {
            id: 0,
            states: vec![s0, s1],
            dt,
            lanes: 3,
            lane_width: 3.5,
            seed: 0,
        }
    }

    #[test]
    fn cells_in_unit_range() {
        let ep = simulate_episode(&EpisodeConfig::default(), 5).unwrap();
        for shape in [GridShape::DESK, GridShape::PAPER, GridShape::new(8, 8, 1)] {
            let cfg = GridConfig::with_shape(shape);
            for t in [0, 10, ep.len() - 1] {
                let g = render_grid(&ep, t, &cfg).unwrap();
                assert_eq!(g.cells.len(), shape.len());
                assert!(g.cells.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn translation_invariant_on_straight_road() {
        let ep = straight_episode();
        let cfg = GridConfig::default();
        let a = render_grid(&ep, 0, &cfg).unwrap();
        let b = render_grid(&ep, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_road_has_only_ego() {
        let ep = straight_episode();
        let cfg = GridConfig {
            draw_markings: false,
            draw_boundaries: false,
            ..GridConfig::default()
        };
        let g = render_grid(&ep, 0, &cfg).unwrap();
        let lit: Vec<f32> = g.cells.iter().copied().filter(|&v| v != 0.0).collect();
        assert!(!lit.is_empty());
        assert!(lit.iter().all(|&v| v == EGO_INTENSITY));
        // Footprint spans ~1.8 m / 0.5 m wide and ~4.5 m / 1.5 m long.
        assert!(lit.len() >= 6 && lit.len() <= 20, "{}", lit.len());
    }

    #[test]
    fn road_features_are_drawn() {
        let ep = straight_episode();
        let g = render_grid(&ep, 0, &GridConfig::default()).unwrap();
        // Ego at x = 5.25 in the middle lane: markings at 3.5 and 7.0,
        // boundaries at 0 and 10.5, grid spans [-2.75, 13.25).
        let col = |x: f64| ((x + 2.75) / 0.5).floor() as usize;
        assert_eq!(g.get(0, col(3.5), 0), MARKING_INTENSITY);
        assert_eq!(g.get(0, col(7.0), 0), MARKING_INTENSITY);
        assert_eq!(g.get(0, col(0.0), 0), BOUNDARY_INTENSITY);
        assert_eq!(g.get(0, col(10.5), 0), BOUNDARY_INTENSITY);
        assert_eq!(g.get(0, col(-1.0), 0), 0.0);
        assert_eq!(g.get(0, col(12.0), 0), 0.0);
        assert_eq!(g.get(24, 16, 0), EGO_INTENSITY);
    }

    #[test]
    fn rgb_channels_replicate() {
        let ep = straight_episode();
        let g = render_grid(&ep, 0, &GridConfig::with_shape(GridShape::PAPER)).unwrap();
        for px in g.cells.chunks(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }

    #[test]
    fn out_of_range_and_small_grids_rejected() {
        let ep = straight_episode();
        assert!(matches!(
            render_grid(&ep, 2, &GridConfig::default()),
            Err(SimError::Index { t: 2, len: 2 })
        ));
        let tiny = GridConfig::with_shape(GridShape::new(4, 8, 1));
        assert!(matches!(render_grid(&ep, 0, &tiny), Err(SimError::Config(_))));
    }
}
