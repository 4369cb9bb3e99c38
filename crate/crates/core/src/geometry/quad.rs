use super::homography::degenerate;
use super::{cross, GeometryError, Homography, Point, DOMAIN_CORNERS};

/// Four image-space corners in TL, TR, BR, BL order.
///
/// Always a simple polygon with positive (clockwise on screen) area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    pub fn new(corners: [Point; 4]) -> Result<Self, GeometryError> {
        let quad = Quad { corners };
        let finite = corners.iter().all(|p| p.x.is_finite() && p.y.is_finite());
        if !finite || !quad.is_simple() || quad.signed_area() <= 0.0 || degenerate(&corners) {
            return Err(GeometryError::InvalidQuad(quad.to_array()));
        }
        Ok(quad)
    }

    /// Axis-aligned rectangle with top-left pixel `(x, y)` spanning `width`
    /// columns and `height` rows of pixel centres.
    pub fn rect(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        let (r, b) = (x + width - 1.0, y + height - 1.0);
        Self::new([Point::new(x, y), Point::new(r, y), Point::new(r, b), Point::new(x, b)])
    }

    /// The rendering domain's own corners.
    pub fn domain() -> Self {
        Quad {
            corners: DOMAIN_CORNERS,
        }
    }

    /// Parses `x0 y0 x1 y1 x2 y2 x3 y3` in TL, TR, BR, BL order.
    pub fn from_array(v: [f64; 8]) -> Result<Self, GeometryError> {
        Self::new([
            Point::new(v[0], v[1]),
            Point::new(v[2], v[3]),
            Point::new(v[4], v[5]),
            Point::new(v[6], v[7]),
        ])
    }

    pub fn to_array(&self) -> [f64; 8] {
        let c = &self.corners;
        [c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y]
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    /// Shoelace area, positive for TL, TR, BR, BL on a y-down screen.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    fn is_simple(&self) -> bool {
        let c = &self.corners;
        !segments_cross(c[0], c[1], c[2], c[3]) && !segments_cross(c[1], c[2], c[3], c[0])
    }

    /// `(min_x, min_y, width, height)` of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let xs = self.corners.map(|p| p.x);
        let ys = self.corners.map(|p| p.y);
        let min_x = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max_x = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_y = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let max_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min_x, min_y, max_x - min_x, max_y - min_y)
    }

    pub fn centroid(&self) -> Point {
        let c = &self.corners;
        Point::new(
            c.iter().map(|p| p.x).sum::<f64>() / 4.0,
            c.iter().map(|p| p.y).sum::<f64>() / 4.0,
        )
    }

    /// Whether every corner lies inside the pixel-centre extent of a
    /// `height × width` canvas.
    pub fn inside(&self, height: usize, width: usize) -> bool {
        self.corners.iter().all(|p| {
            p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64
        })
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::new(self.corners.map(|p| Point::new(p.x + dx, p.y + dy)))
    }

    /// Source-lookup map of this quad: it sends the domain corners onto the
    /// quad's corners, so `rectified(p) = scene(H(p))`.
    pub fn to_domain(&self) -> Result<Homography, GeometryError> {
        Homography::from_correspondences(&DOMAIN_CORNERS, &self.corners)
    }
}

/// See [`Quad::to_domain`].
pub fn quad_to_domain(quad: &Quad) -> Result<Homography, GeometryError> {
    quad.to_domain()
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}
