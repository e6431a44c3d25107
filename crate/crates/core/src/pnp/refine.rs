use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};

use crate::geometry::{orthonormalize, point_error, CameraIntrinsics, CorrespondenceSet, Pixel, Point3, RigidPose};

pub const MAX_REFINE_ITERATIONS: usize = 20;
const MIN_RELATIVE_IMPROVEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub pose: RigidPose,
    /// Sum of squared reprojection errors over the refined subset, before and after.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// Set when the normal equations were singular and the initial pose was returned.
    pub degraded: bool,
}

/// Damped Gauss-Newton on the squared reprojection error over the masked
/// correspondences. Rotation updates are left-multiplied axis-angle
/// increments; a step is only accepted when it lowers the cost, so the
/// returned pose is never worse than `initial`.
pub fn refine_pose(
    corr: &CorrespondenceSet,
    intr: &CameraIntrinsics,
    initial: &RigidPose,
    inlier_mask: &[bool],
) -> Refinement {
    let lifted = corr.lifted(intr);
    let (pts, pix): (Vec<Point3>, Vec<Pixel>) = lifted
        .into_iter()
        .zip(corr.goal_points().iter().copied())
        .zip(inlier_mask.iter().copied().chain(std::iter::repeat(false)))
        .filter_map(|(pair, keep)| keep.then_some(pair))
        .unzip();
    refine_points(&pts, &pix, intr, initial)
}

pub(crate) fn refine_points(pts: &[Point3], pix: &[Pixel], intr: &CameraIntrinsics, initial: &RigidPose) -> Refinement {
    let cost_of = |pose: &RigidPose| -> f64 { pts.iter().zip(pix).map(|(x, p)| point_error(pose, x, p, intr)).sum() };
    let initial_cost = cost_of(initial);
    let unchanged = |degraded: bool| Refinement {
        pose: *initial,
        initial_cost,
        final_cost: initial_cost,
        iterations: 0,
        degraded,
    };
    if pts.len() < 4 || !initial_cost.is_finite() {
        return unchanged(true);
    }

    let mut pose = *initial;
    let mut cost = initial_cost;
    let mut damping = 0.0;
    let mut iterations = 0;
    while iterations < MAX_REFINE_ITERATIONS && cost > 0.0 {
        let (jtj, jtr) = normal_equations(&pose, pts, pix, intr);
        if iterations == 0 && is_singular(&jtj) {
            return unchanged(true);
        }
        iterations += 1;

        let mut accepted = false;
        while !accepted {
            let mut lhs = jtj;
            for i in 0..6 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = lhs.cholesky() else {
                damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
                if damping > 1e8 {
                    break;
                }
                continue;
            };
            let delta = chol.solve(&(-jtr));
            let candidate = apply_increment(&pose, &delta);
            let next = cost_of(&candidate);
            if next < cost {
                let improvement = (cost - next) / cost;
                pose = candidate;
                cost = next;
                damping *= 0.1;
                accepted = true;
                if improvement < MIN_RELATIVE_IMPROVEMENT {
                    return Refinement { pose, initial_cost, final_cost: cost, iterations, degraded: false };
                }
            } else {
                damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
                if damping > 1e8 {
                    break;
                }
            }
        }
        if !accepted {
            break;
        }
    }
    Refinement { pose, initial_cost, final_cost: cost, iterations, degraded: false }
}

fn is_singular(jtj: &Matrix6<f64>) -> bool {
    let eig = jtj.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    !(max > 0.0) || min <= max * 1e-14
}

fn normal_equations(
    pose: &RigidPose,
    pts: &[Point3],
    pix: &[Pixel],
    intr: &CameraIntrinsics,
) -> (Matrix6<f64>, Vector6<f64>) {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for (x, obs) in pts.iter().zip(pix) {
        let rx = pose.rotation * x;
        let y = rx + pose.translation;
        if y.z <= 0.0 {
            continue;
        }
        let iz = 1.0 / y.z;
        let ru = intr.fx * y.x * iz + intr.px - obs.u;
        let rv = intr.fy * y.y * iz + intr.py - obs.v;
        let du = Vector3::new(intr.fx * iz, 0.0, -intr.fx * y.x * iz * iz);
        let dv = Vector3::new(0.0, intr.fy * iz, -intr.fy * y.y * iz * iz);
        // dY/dω = -[R x]×, dY/dt = I
        let skew = skew(&rx);
        let ju_w = -(skew.transpose() * du);
        let jv_w = -(skew.transpose() * dv);
        let ju = Vector6::new(ju_w.x, ju_w.y, ju_w.z, du.x, du.y, du.z);
        let jv = Vector6::new(jv_w.x, jv_w.y, jv_w.z, dv.x, dv.y, dv.z);
        jtj += ju * ju.transpose() + jv * jv.transpose();
        jtr += ju * ru + jv * rv;
    }
    (jtj, jtr)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn apply_increment(pose: &RigidPose, delta: &Vector6<f64>) -> RigidPose {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    let rotation = orthonormalize(&(Rotation3::new(w).into_inner() * pose.rotation));
    RigidPose { rotation, translation: pose.translation + dt }
}
