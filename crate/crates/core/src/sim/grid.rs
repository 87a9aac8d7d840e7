use crate::error::SimError;
use crate::geometry::Point2;

/// Binary occupancy raster. Cell `(i, j)` covers
/// `[origin.x + i*res, origin.x + (i+1)*res) x [origin.y + j*res, ...)`;
/// storage is row-major with `j` as the row index. Out-of-range cells read
/// as occupied, and the outermost ring is always occupied.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point2,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// Empty interior with an occupied border.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point2) -> Result<Self, SimError> {
        if width < 3 || height < 3 {
            return Err(SimError::InvalidGrid(format!("{width}x{height} is smaller than 3x3")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(SimError::InvalidGrid(format!("resolution {resolution} must be positive")));
        }
        if !origin.is_finite() {
            return Err(SimError::NonFinite("grid origin"));
        }
        let mut g = Self { width, height, resolution, origin, cells: vec![false; width * height] };
        g.close_border();
        Ok(g)
    }

    /// Builds a grid from row-major flags and forces the border closed.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Point2,
        cells: Vec<bool>,
    ) -> Result<Self, SimError> {
        let mut g = Self::new(width, height, resolution, origin)?;
        if cells.len() != width * height {
            return Err(SimError::InvalidGrid(format!("{} cells for a {width}x{height} grid", cells.len())));
        }
        g.cells = cells;
        g.close_border();
        Ok(g)
    }

    fn close_border(&mut self) {
        for i in 0..self.width {
            self.cells[i] = true;
            self.cells[(self.height - 1) * self.width + i] = true;
        }
        for j in 0..self.height {
            self.cells[j * self.width] = true;
            self.cells[j * self.width + self.width - 1] = true;
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn is_border(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.width || j + 1 == self.height
    }

    #[inline]
    pub fn occupied(&self, i: isize, j: isize) -> bool {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return true;
        }
        self.cells[j as usize * self.width + i as usize]
    }

    /// Sets an interior cell; border cells stay occupied.
    pub fn set(&mut self, i: usize, j: usize, occupied: bool) {
        if i < self.width && j < self.height && !self.is_border(i, j) {
            let k = self.index(i, j);
            self.cells[k] = occupied;
        }
    }

    /// Continuous grid coordinates (cells) of a world point.
    #[inline]
    pub fn to_grid(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.origin.x) / self.resolution, (p.y - self.origin.y) / self.resolution)
    }

    /// Cell containing `p`, or `None` outside the raster.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let (gx, gy) = self.to_grid(p);
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (i, j) = (gx.floor() as usize, gy.floor() as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn occupied_at(&self, p: Point2) -> bool {
        match self.cell_of(p) {
            Some((i, j)) => self.cells[self.index(i, j)],
            None => true,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn world_width(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn world_height(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// A grid plus the navigation task posed on it.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub grid: OccupancyGrid,
    pub start: Point2,
    pub goal: Point2,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn border_is_closed_and_interior_free() {
        let g = OccupancyGrid::new(5, 4, 0.1, Point2::default()).unwrap();
        assert_eq!(g.occupied_count(), 2 * 5 + 2 * 2);
        assert!(!g.occupied(2, 2));
        assert!(g.occupied(-1, 2) && g.occupied(5, 0));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(OccupancyGrid::new(2, 5, 0.1, Point2::default()).is_err());
        assert!(OccupancyGrid::new(5, 5, 0.0, Point2::default()).is_err());
    }

    #[test]
    fn border_cannot_be_freed() {
        let mut g = OccupancyGrid::new(4, 4, 1.0, Point2::default()).unwrap();
        g.set(0, 1, false);
        assert!(g.occupied(0, 1));
        let g2 = OccupancyGrid::from_cells(3, 3, 1.0, Point2::default(), vec![false; 9]).unwrap();
        assert_eq!(g2.occupied_count(), 8);
    }

    #[test]
    fn cell_lookup() {
        let g = OccupancyGrid::new(10, 10, 0.5, Point2::new(-1.0, 2.0)).unwrap();
        assert_eq!(g.cell_of(Point2::new(-1.0, 2.0)), Some((0, 0)));
        assert_eq!(g.cell_of(Point2::new(0.26, 3.74)), Some((2, 3)));
        assert_eq!(g.cell_of(Point2::new(-1.01, 2.0)), None);
        assert_eq!(g.cell_center(2, 3), Point2::new(0.25, 3.75));
    }
}
