use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::{cross, GeometryError, Point};

const SINGULAR_DET: f64 = 1e-12;
const INFINITY_W: f64 = 1e-12;

/// Invertible 3×3 projective map, normalized so the bottom-right entry is 1.
///
/// Serializes as its 9 row-major entries.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            m: Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0),
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let corner = m[(2, 2)];
        if !corner.is_finite() || corner.abs() < SINGULAR_DET || m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Unnormalizable);
        }
        let m = m / corner;
        let det = m.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular { det });
        }
        Ok(Homography { m })
    }

    /// Row-major entries.
    pub fn from_row_slice(entries: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(entries))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.m * other.m)
    }

    pub fn invert(&self) -> Result<Self, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::Singular {
            det: self.m.determinant(),
        })?;
        Self::from_matrix(inv)
    }

    pub fn apply(&self, p: Point) -> Result<Point, GeometryError> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() < INFINITY_W {
            return Err(GeometryError::AtInfinity { x: p.x, y: p.y });
        }
        Ok(Point::new(v.x / v.z, v.y / v.z))
    }

    /// The unique homography taking each `src[i]` to `dst[i]`.
    ///
    /// Both point sets are first moved to zero mean and unit RMS radius so the
    /// 8×8 system stays well conditioned at canvas scale.
    pub fn from_correspondences(src: &[Point; 4], dst: &[Point; 4]) -> Result<Self, GeometryError> {
        if degenerate(src) || degenerate(dst) {
            return Err(GeometryError::Degenerate);
        }
        let (ns, src_n) = normalizer(src);
        let (nd, dst_n) = normalizer(dst);
        let h = solve_dlt(&src_n, &dst_n).ok_or(GeometryError::Degenerate)?;
        let hn = Matrix3::from_row_slice(&[h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0]);
        let nd_inv = nd.try_inverse().ok_or(GeometryError::Degenerate)?;
        Self::from_matrix(nd_inv * hn * ns)
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = GeometryError;

    fn try_from(entries: [f64; 9]) -> Result<Self, GeometryError> {
        Homography::from_row_slice(&entries)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_array()
    }
}

/// Some three of the four points are (nearly) collinear.
pub(crate) fn degenerate(p: &[Point; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| a.distance(*b)))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return true;
    }
    let tol = 1e-9 * scale * scale;
    (0..4).any(|skip| {
        let t: Vec<Point> = (0..4).filter(|&i| i != skip).map(|i| p[i]).collect();
        cross(t[0], t[1], t[2]).abs() <= tol
    })
}

fn normalizer(p: &[Point; 4]) -> (Matrix3<f64>, [Point; 4]) {
    let cx = p.iter().map(|q| q.x).sum::<f64>() / 4.0;
    let cy = p.iter().map(|q| q.y).sum::<f64>() / 4.0;
    let rms = (p.iter().map(|q| (q.x - cx).powi(2) + (q.y - cy).powi(2)).sum::<f64>() / 4.0).sqrt();
    let s = 1.0 / rms;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    (t, p.map(|q| Point::new(s * (q.x - cx), s * (q.y - cy))))
}

/// Direct linear solve for the first 8 entries with `h₈ = 1`.
pub(crate) fn dlt_system(src: &[Point; 4], dst: &[Point; 4]) -> (SMatrix<f64, 8, 8>, SVector<f64, 8>) {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = (src[i].x, src[i].y);
        let (u, v) = (dst[i].x, dst[i].y);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]);
        b[r] = u;
        b[r + 1] = v;
    }
    (a, b)
}

pub(crate) fn solve_dlt(src: &[Point; 4], dst: &[Point; 4]) -> Option<SVector<f64, 8>> {
    let (a, b) = dlt_system(src, dst);
    a.lu().solve(&b)
}
