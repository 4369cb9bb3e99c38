//! Tape nodes for differentiable rectification.

use nalgebra::SVector;

use crate::diffcore::{CustomOp, DiffError, Real, Tape, Tensor, Var};

use super::homography::{dlt_system, solve_dlt};
use super::{Point, DOMAIN_HEIGHT, DOMAIN_WIDTH};

/// Regular lattice of points `(x0 + sx·j, y0 + sy·i)` for `i < height`, `j < width`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    pub height: usize,
    pub width: usize,
    pub x0: f64,
    pub y0: f64,
    pub sx: f64,
    pub sy: f64,
}

impl Mesh {
    /// Every pixel centre of the rendering domain.
    pub fn domain() -> Self {
        Mesh {
            height: DOMAIN_HEIGHT,
            width: DOMAIN_WIDTH,
            x0: 0.0,
            y0: 0.0,
            sx: 1.0,
            sy: 1.0,
        }
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + self.sx * j as f64, self.y0 + self.sy * i as f64)
    }
}

/// 3×3 homography (row-major, bottom-right entry 1) taking each `src[i]` to
/// the point `(dst[2i], dst[2i+1])` of the 8-vector `dst`.
pub fn corners_to_homography<T: Real>(tape: &mut Tape<T>, src: [Point; 4], dst: Var) -> Result<Var, DiffError> {
    const OP: &str = "corners_to_homography";
    let d = tape.value(dst);
    if d.shape() != [8] {
        return Err(DiffError::Rank {
            op: OP,
            expected: 1,
            shape: d.shape().to_vec(),
        });
    }
    let pts = corner_points(d.data());
    // Unmoved corners give the identity exactly rather than up to solver
    // round-off, so a zero correction leaves downstream values bit-identical.
    let h = if pts == src {
        SVector::<f64, 8>::from_column_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    } else {
        solve_dlt(&src, &pts).ok_or_else(|| DiffError::Custom {
            op: OP,
            reason: "degenerate corner set".into(),
        })?
    };
    let mut out: Vec<T> = h.iter().map(|&v| T::of(v)).collect();
    out.push(T::ONE);
    tape.custom(&[dst], Tensor::new(&[3, 3], out)?, Box::new(CornersToHomography { src }))
}

fn corner_points<T: Real>(d: &[T]) -> [Point; 4] {
    std::array::from_fn(|i| Point::new(d[2 * i].to_f64(), d[2 * i + 1].to_f64()))
}

struct CornersToHomography {
    src: [Point; 4],
}

impl<T: Real> CustomOp<T> for CornersToHomography {
    fn name(&self) -> &'static str {
        "corners_to_homography"
    }

    // A(u, v)·h = b(u, v) implies ∂h/∂u_i = A⁻¹ e_{2i} w_i with
    // w_i = 1 + x_i h₆ + y_i h₇ (likewise v_i with e_{2i+1}).
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_output: &[T]) -> Vec<Option<Vec<T>>> {
        let dst = corner_points(inputs[0].data());
        let (a, _) = dlt_system(&self.src, &dst);
        let h = output.data();
        let g = SVector::<f64, 8>::from_fn(|k, _| grad_output[k].to_f64());
        let lambda = a.transpose().lu().solve(&g).unwrap_or_else(SVector::zeros);
        let (h6, h7) = (h[6].to_f64(), h[7].to_f64());
        let mut grad = vec![T::ZERO; 8];
        for i in 0..4 {
            let w = 1.0 + self.src[i].x * h6 + self.src[i].y * h7;
            grad[2 * i] = T::of(lambda[2 * i] * w);
            grad[2 * i + 1] = T::of(lambda[2 * i + 1] * w);
        }
        vec![Some(grad)]
    }
}

/// Projects every mesh point through the 3×3 matrix `h`, giving a
/// `height × width × 2` grid of `(x, y)` source points.
pub fn projective_grid<T: Real>(tape: &mut Tape<T>, h: Var, mesh: Mesh) -> Result<Var, DiffError> {
    const OP: &str = "projective_grid";
    let hv = tape.value(h);
    if hv.len() != 9 {
        return Err(DiffError::ShapeMismatch {
            op: OP,
            left: hv.shape().to_vec(),
            right: vec![3, 3],
        });
    }
    let m: Vec<f64> = hv.data().iter().map(|v| v.to_f64()).collect();
    let mut out = Vec::with_capacity(mesh.height * mesh.width * 2);
    for i in 0..mesh.height {
        for j in 0..mesh.width {
            let (x, y) = mesh.point(i, j);
            let d = m[6] * x + m[7] * y + m[8];
            if d.abs() < 1e-12 {
                return Err(DiffError::Custom {
                    op: OP,
                    reason: format!("mesh point ({x}, {y}) maps to infinity"),
                });
            }
            out.push(T::of((m[0] * x + m[1] * y + m[2]) / d));
            out.push(T::of((m[3] * x + m[4] * y + m[5]) / d));
        }
    }
    let out = Tensor::new(&[mesh.height, mesh.width, 2], out)?;
    tape.custom(&[h], out, Box::new(ProjectiveGrid { mesh }))
}

struct ProjectiveGrid {
    mesh: Mesh,
}

impl<T: Real> CustomOp<T> for ProjectiveGrid {
    fn name(&self) -> &'static str {
        "projective_grid"
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_output: &[T]) -> Vec<Option<Vec<T>>> {
        let m: Vec<f64> = inputs[0].data().iter().map(|v| v.to_f64()).collect();
        let out = output.data();
        let mut g = [0.0f64; 9];
        let mesh = self.mesh;
        for i in 0..mesh.height {
            for j in 0..mesh.width {
                let (x, y) = mesh.point(i, j);
                let k = 2 * (i * mesh.width + j);
                let d = m[6] * x + m[7] * y + m[8];
                let (u, v) = (out[k].to_f64(), out[k + 1].to_f64());
                let (gu, gv) = (grad_output[k].to_f64() / d, grad_output[k + 1].to_f64() / d);
                g[0] += gu * x;
                g[1] += gu * y;
                g[2] += gu;
                g[3] += gv * x;
                g[4] += gv * y;
                g[5] += gv;
                let back = gu * u + gv * v;
                g[6] -= back * x;
                g[7] -= back * y;
                g[8] -= back;
            }
        }
        vec![Some(g.iter().map(|&v| T::of(v)).collect())]
    }
}
