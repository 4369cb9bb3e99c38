//! Projective geometry for the word rendering domain.
//!
//! Coordinates are `x` = column, `y` = row, with the origin at the centre of
//! the top-left pixel. The rendering domain is 32 rows by 256 columns, so its
//! corners are (0, 0), (255, 0), (255, 31) and (0, 31).

mod diff;
mod homography;
mod quad;
mod warp;

pub use diff::{corners_to_homography, projective_grid, Mesh};
pub use homography::Homography;
pub use quad::{quad_to_domain, Quad};
pub use warp::{sampling_grid, warp_image};

use thiserror::Error;

pub const DOMAIN_HEIGHT: usize = 32;
pub const DOMAIN_WIDTH: usize = 256;

/// Domain corners in TL, TR, BR, BL order.
pub const DOMAIN_CORNERS: [Point; 4] = [
    Point::new(0.0, 0.0),
    Point::new((DOMAIN_WIDTH - 1) as f64, 0.0),
    Point::new((DOMAIN_WIDTH - 1) as f64, (DOMAIN_HEIGHT - 1) as f64),
    Point::new(0.0, (DOMAIN_HEIGHT - 1) as f64),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("homography is singular (det = {det:e})")]
    Singular { det: f64 },
    #[error("homography has a vanishing bottom-right entry")]
    Unnormalizable,
    #[error("point ({x}, {y}) maps to infinity")]
    AtInfinity { x: f64, y: f64 },
    #[error("corner set is degenerate (three corners are collinear)")]
    Degenerate,
    #[error("quad is not a simple polygon with positive area: {0:?}")]
    InvalidQuad([f64; 8]),
    #[error("quad {quad:?} is not inside the {width}x{height} canvas")]
    Clipped {
        quad: [f64; 8],
        width: usize,
        height: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Twice the signed area of triangle `abc`; positive when `c` lies clockwise
/// of `ab` on screen (y pointing down).
pub(crate) fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}
