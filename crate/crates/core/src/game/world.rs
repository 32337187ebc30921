//! Microcell world grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("position ({0}, {1}) outside the world")]
    OutOfBounds(f64, f64),
    #[error("entity {0} is not owned by this session")]
    NotOwner(u64),
    #[error("invalid region set: {0}")]
    InvalidRegion(String),
    #[error("region {stated} does not match region_of(position) = {actual}")]
    RegionMismatch { stated: u32, actual: u32 },
    #[error("update crosses regions ({from} -> {to}); use handoff")]
    RegionChanged { from: u32, to: u32 },
    #[error("handoff requires a region change (still in {0})")]
    SameRegion(u32),
    #[error(transparent)]
    Middleware(#[from] crate::error::DcpsError),
}

/// World dimensions partitioned into square microcells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub cell_size: f64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.width <= 0.0 || self.height <= 0.0 || self.cell_size <= 0.0 {
            return Err(GameError::InvalidRegion(
                "width, height and cell_size must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn regions_x(&self) -> u32 {
        (self.width / self.cell_size).ceil() as u32
    }

    pub fn regions_y(&self) -> u32 {
        (self.height / self.cell_size).ceil() as u32
    }

    pub fn region_count(&self) -> u32 {
        self.regions_x() * self.regions_y()
    }

    /// Region id of a position; the world is half-open on both axes.
    pub fn region_of(&self, x: f64, y: f64) -> Result<u32, GameError> {
        if !(0.0..self.width).contains(&x) || !(0.0..self.height).contains(&y) {
            return Err(GameError::OutOfBounds(x, y));
        }
        let col = (x / self.cell_size).floor() as u32;
        let row = (y / self.cell_size).floor() as u32;
        Ok(row * self.regions_x() + col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> WorldConfig {
        WorldConfig {
            width: 1024.0,
            height: 1024.0,
            cell_size: 64.0,
        }
    }

    #[test]
    fn origin_is_region_zero() {
        assert_eq!(world().region_of(0.0, 0.0).unwrap(), 0);
    }

    #[test]
    fn region_arithmetic_matches_formula() {
        // floor(200/64) = 3 rows down, floor(100/64) = 1 column over.
        assert_eq!(world().region_of(100.0, 200.0).unwrap(), 3 * 16 + 1);
    }

    #[test]
    fn world_is_half_open() {
        assert!(world().region_of(1024.0, 0.0).is_err());
        assert!(world().region_of(0.0, 1024.0).is_err());
        assert!(world().region_of(-0.1, 0.0).is_err());
        assert_eq!(world().region_of(1023.999, 1023.999).unwrap(), 255);
    }

    #[test]
    fn region_count_is_grid_product() {
        assert_eq!(world().region_count(), 256);
        let odd = WorldConfig {
            width: 100.0,
            height: 50.0,
            cell_size: 33.0,
        };
        assert_eq!(odd.regions_x(), 4);
        assert_eq!(odd.regions_y(), 2);
        assert_eq!(odd.region_count(), 8);
    }
}
