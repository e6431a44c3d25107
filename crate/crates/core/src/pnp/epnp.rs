//! Closed-form Perspective-n-Point with four (or, for planar scenes, three)
//! virtual control points.
//!
//! Every 3D point is written as a barycentric combination of the control
//! points. The projection constraints are linear in the camera-frame control
//! point coordinates, so the solution lies in the span of the smallest
//! eigenvectors of `MᵀM`. The span coefficients (betas) are fixed by requiring
//! the camera-frame control points to keep their reference-frame pairwise
//! distances; closed-form approximations seed a Gauss-Newton refinement of the
//! betas, and rotation and translation follow from an absolute-orientation
//! (Procrustes) fit.


use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, point_error, CameraIntrinsics, CorrespondenceSet, Pixel, Point3, RigidPose};

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;

const MIN_POINTS: usize = 4;
const BETA_GN_ITERATIONS: usize = 30;
/// Beta refinement budget for minimal samples, whose poses only score RANSAC hypotheses.
const BETA_GN_ITERATIONS_MINIMAL: usize = 6;
/// Below this ratio of principal spreads the point cloud is treated as planar.
const PLANAR_RATIO: f64 = 1e-5;
/// Below this ratio the cloud is treated as collinear (no pose is recoverable).
const COLLINEAR_RATIO: f64 = 1e-6;
/// Mean squared pixel error under which a candidate is taken as an exact fit.
const EXACT_FIT: f64 = 1e-14;

const PAIRS_GENERAL: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const PAIRS_PLANAR: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Estimates the pose mapping lifted agent-frame points into the goal camera.
pub fn epnp_solve(corr: &CorrespondenceSet, intr: &CameraIntrinsics) -> Result<RigidPose> {
    let points = corr.lifted(intr);
    solve(&points, corr.goal_points(), intr)
}

pub(crate) fn solve(points: &[Point3], pixels: &[Pixel], intr: &CameraIntrinsics) -> Result<RigidPose> {
    solve_within(points, pixels, intr, EXACT_FIT, true)
}

/// Like [`solve`], but stops searching beta hypotheses once the mean squared
/// reprojection error over the input drops below `accept`. Without
/// `exhaustive` only the best linearized approximation is refined, with a
/// short iteration budget; this is the cheap mode used for minimal samples.
pub(crate) fn solve_within(
    points: &[Point3],
    pixels: &[Pixel],
    intr: &CameraIntrinsics,
    accept: f64,
    exhaustive: bool,
) -> Result<RigidPose> {
    let n = points.len();
    if n < MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_POINTS, got: n });
    }
    let controls = ControlPoints::choose(points)?;
    let nc = controls.count;
    let alphas: Vec<Vector4<f64>> = points.iter().map(|p| controls.barycentric(p)).collect();

    let mut mtm = Mat12::zeros();
    let mut rows = Vec::with_capacity(2 * n);
    for (a, pix) in alphas.iter().zip(pixels) {
        let mut ru = Vec12::zeros();
        let mut rv = Vec12::zeros();
        for j in 0..nc {
            ru[3 * j] = a[j] * intr.fx;
            ru[3 * j + 2] = a[j] * (intr.px - pix.u);
            rv[3 * j + 1] = a[j] * intr.fy;
            rv[3 * j + 2] = a[j] * (intr.py - pix.v);
        }
        mtm += ru * ru.transpose() + rv * rv.transpose();
        rows.push(ru);
        rows.push(rv);
    }
    if nc == 3 {
        // The fourth control point carries no weight; push it out of the null space.
        let lift = mtm.trace().max(1.0);
        for i in 9..12 {
            mtm[(i, i)] += lift;
        }
    }

    let exact = if n == MIN_POINTS && nc == 4 { exact_null_space(rows) } else { None };
    let basis = exact.unwrap_or_else(|| {
        let eig = mtm.symmetric_eigen();
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut basis = [Vec12::zeros(); 4];
        for (k, &i) in order.iter().take(nc).enumerate() {
            basis[k] = eig.eigenvectors.column(i).into_owned();
        }
        basis
    });

    let pairs: &[(usize, usize)] = if nc == 4 { &PAIRS_GENERAL } else { &PAIRS_PLANAR };
    let rho: Vec<f64> = pairs.iter().map(|&(a, b)| (controls.points[a] - controls.points[b]).norm_squared()).collect();
    // gram[k][(i, j)] = (v_i[a] - v_i[b]) · (v_j[a] - v_j[b]) for control pair k = (a, b)
    let gram: Vec<Matrix4<f64>> = pairs
        .iter()
        .map(|&(a, b)| {
            let diffs: Vec<Vector3<f64>> =
                basis.iter().map(|v| v.fixed_rows::<3>(3 * a) - v.fixed_rows::<3>(3 * b)).collect();
            Matrix4::from_fn(|i, j| if i < nc && j < nc { diffs[i].dot(&diffs[j]) } else { 0.0 })
        })
        .collect();

    let iterations = if exhaustive { BETA_GN_ITERATIONS } else { BETA_GN_ITERATIONS_MINIMAL };
    let problem = BetaProblem { gram: &gram, rho: &rho, nc, iterations };
    let mut best: Option<(f64, RigidPose)> = None;
    let mut consider = |betas: &Vector4<f64>| -> bool {
        if let Some(pose) = pose_from_betas(betas, &basis, &alphas, points, nc) {
            let err: f64 = points.iter().zip(pixels).map(|(x, p)| point_error(&pose, x, p, intr)).sum();
            if err.is_finite() && best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, pose));
            }
        }
        best.as_ref().is_some_and(|(e, _)| *e < accept * n as f64)
    };

    let approximations: [&dyn Fn() -> Option<Vector4<f64>>; 4] = [
        &|| problem.approx_one(),
        &|| problem.approx_two(),
        &|| problem.approx_three(),
        &|| problem.equal_depth(&basis, &alphas),
    ];
    let seeds = approximations.iter().filter_map(|f| f()).chain(problem.axis_seeds().take(if exhaustive { usize::MAX } else { 0 }));
    let mut seeds: Vec<_> = seeds.collect();
    if !exhaustive {
        // Minimal samples refine only the seed that best honors the distance constraints.
        seeds = seeds.into_iter().min_by(|a, b| problem.cost(a).total_cmp(&problem.cost(b))).into_iter().collect();
    }
    for seed in seeds {
        if consider(&seed) || consider(&problem.refine(seed)) {
            break;
        }
    }

    best.map(|(_, pose)| pose)
        .ok_or_else(|| Error::Degenerate("no beta hypothesis produced a valid pose".into()))
}

/// Orthonormal null space of the eight constraint rows of a four-point
/// problem, by row reduction. `None` when the rows are rank deficient.
fn exact_null_space(mut rows: Vec<Vec12>) -> Option<[Vec12; 4]> {
    let scale = rows.iter().map(|r| r.amax()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let mut pivots = Vec::with_capacity(8);
    let mut r = 0;
    for c in 0..12 {
        if r == rows.len() {
            break;
        }
        let (best, mag) = (r..rows.len()).map(|i| (i, rows[i][c].abs())).fold((r, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if mag <= 1e-10 * scale {
            continue;
        }
        rows.swap(r, best);
        let pivot = rows[r] / rows[r][c];
        rows[r] = pivot;
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[c] != 0.0 {
                *row -= pivot * row[c];
            }
        }
        pivots.push(c);
        r += 1;
    }
    if pivots.len() != 8 {
        return None;
    }
    let free = (0..12).filter(|c| !pivots.contains(c));
    let mut basis = [Vec12::zeros(); 4];
    for (k, f) in free.enumerate() {
        let mut v = Vec12::zeros();
        v[f] = 1.0;
        for (row, &p) in rows.iter().zip(&pivots) {
            v[p] = -row[f];
        }
        for prev in &basis[..k] {
            v -= prev * prev.dot(&v);
        }
        basis[k] = v.try_normalize(1e-12)?;
    }
    Some(basis)
}

struct ControlPoints {
    points: [Point3; 4],
    count: usize,
    /// Maps `p - c0` to the barycentric weights of control points 1..count.
    inverse: SMatrix<f64, 3, 3>,
}

impl ControlPoints {
    fn choose(points: &[Point3]) -> Result<Self> {
        let n = points.len() as f64;
        let centroid = points.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambda = order.map(|i| eig.eigenvalues[i].max(0.0));
        if lambda[0] <= 0.0 || (lambda[1] / lambda[0]).sqrt() < COLLINEAR_RATIO {
            return Err(Error::Degenerate("points are collinear or coincident".into()));
        }
        let planar = (lambda[2] / lambda[0]).sqrt() < PLANAR_RATIO;
        let count = if planar { 3 } else { 4 };

        let mut cps = [centroid; 4];
        let mut axes = Matrix3::zeros();
        for k in 1..count {
            let axis = eig.eigenvectors.column(order[k - 1]).into_owned();
            cps[k] = centroid + (lambda[k - 1] / n).sqrt() * axis;
            axes.set_column(k - 1, &(cps[k] - centroid));
        }
        let inverse = if planar {
            // Least-squares weights on the two in-plane axes.
            let a = axes.fixed_columns::<2>(0).into_owned();
            let normal = (a.transpose() * a)
                .try_inverse()
                .ok_or_else(|| Error::Degenerate("control points are rank deficient".into()))?;
            let pinv = normal * a.transpose();
            let mut m = Matrix3::zeros();
            m.fixed_rows_mut::<2>(0).copy_from(&pinv);
            m
        } else {
            axes.try_inverse().ok_or_else(|| Error::Degenerate("control points are rank deficient".into()))?
        };
        Ok(Self { points: cps, count, inverse })
    }

    fn barycentric(&self, p: &Point3) -> Vector4<f64> {
        let w = self.inverse * (p - self.points[0]);
        let mut a = Vector4::zeros();
        for k in 1..self.count {
            a[k] = w[k - 1];
        }
        a[0] = 1.0 - w.iter().take(self.count - 1).sum::<f64>();
        a
    }
}

/// Distance constraints `βᵀ G_k β = ρ_k` on the null-space coefficients.
struct BetaProblem<'a> {
    gram: &'a [Matrix4<f64>],
    rho: &'a [f64],
    nc: usize,
    iterations: usize,
}

impl BetaProblem<'_> {
    fn cost(&self, b: &Vector4<f64>) -> f64 {
        self.gram.iter().zip(self.rho).map(|(g, r)| (b.dot(&(g * b)) - r).powi(2)).sum()
    }

    /// Least squares over the linearized products `B_ij = β_i β_j` listed in `terms`.
    /// Padded to six constraints and five terms; the zero rows and columns
    /// leave the minimum-norm solution unchanged.
    fn linearized(&self, terms: &[(usize, usize)]) -> Option<SVector<f64, 5>> {
        if terms.len() > self.rho.len() {
            return None;
        }
        let mut l = SMatrix::<f64, 6, 5>::zeros();
        let mut rho = SVector::<f64, 6>::zeros();
        for (k, (g, r)) in self.gram.iter().zip(self.rho).enumerate() {
            rho[k] = *r;
            for (c, &(i, j)) in terms.iter().enumerate() {
                l[(k, c)] = if i == j { g[(i, i)] } else { 2.0 * g[(i, j)] };
            }
        }
        let mut normal = l.transpose() * l;
        for c in terms.len()..5 {
            normal[(c, c)] = 1.0;
        }
        let rhs = l.transpose() * rho;
        let sol = match normal.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => l.svd(true, true).solve(&rho, 1e-12).ok()?,
        };
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    fn approx_one(&self) -> Option<Vector4<f64>> {
        let b = if self.nc == 4 {
            self.linearized(&[(0, 0), (0, 1), (0, 2), (0, 3)])?
        } else {
            self.linearized(&[(0, 0), (0, 1), (0, 2)])?
        };
        let b0 = b[0].abs().sqrt();
        if b0 == 0.0 {
            return None;
        }
        let sign = if b[0] < 0.0 { -1.0 } else { 1.0 };
        let mut betas = Vector4::zeros();
        betas[0] = b0;
        for j in 1..self.nc {
            betas[j] = sign * b[j] / b0;
        }
        Some(betas)
    }

    /// Shared first two coefficients of the two- and three-vector approximations.
    fn leading_pair(b: &SVector<f64, 5>) -> Option<Vector4<f64>> {
        let mut betas = Vector4::zeros();
        if b[0] < 0.0 {
            betas[0] = (-b[0]).sqrt();
            betas[1] = if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 };
        } else {
            betas[0] = b[0].sqrt();
            betas[1] = if b[2] > 0.0 { b[2].sqrt() } else { 0.0 };
        }
        if b[1] < 0.0 {
            betas[0] = -betas[0];
        }
        (betas[0] != 0.0).then_some(betas)
    }

    fn approx_two(&self) -> Option<Vector4<f64>> {
        Self::leading_pair(&self.linearized(&[(0, 0), (0, 1), (1, 1)])?)
    }

    fn approx_three(&self) -> Option<Vector4<f64>> {
        if self.nc < 4 {
            return None;
        }
        let b = self.linearized(&[(0, 0), (0, 1), (1, 1), (0, 2), (1, 2)])?;
        let mut betas = Self::leading_pair(&b)?;
        betas[2] = b[3] / betas[0];
        Some(betas)
    }

    fn scaled(&self, dir: Vector4<f64>) -> Option<Vector4<f64>> {
        let q: Vec<f64> = self.gram.iter().map(|g| dir.dot(&(g * dir))).collect();
        let num: f64 = q.iter().zip(self.rho).map(|(a, b)| a * b).sum();
        let den: f64 = q.iter().map(|a| a * a).sum();
        (den > 0.0 && num > 0.0).then(|| dir * (num / den).sqrt())
    }

    /// Every reconstructed point at the same depth, scaled to the reference distances.
    fn equal_depth(&self, basis: &[Vec12; 4], alphas: &[Vector4<f64>]) -> Option<Vector4<f64>> {
        // depth_i(β) = Σ_k β_k Σ_j α_ij v_k[3j + 2], solved through the normal equations
        let mut ata = Matrix4::zeros();
        let mut atb = Vector4::zeros();
        for a in alphas {
            let row = Vector4::from_fn(|k, _| {
                if k < self.nc {
                    (0..self.nc).map(|j| a[j] * basis[k][3 * j + 2]).sum()
                } else {
                    0.0
                }
            });
            ata += row * row.transpose();
            atb += row;
        }
        for k in self.nc..4 {
            ata[(k, k)] = 1.0;
        }
        let d = match ata.cholesky() {
            Some(ch) => ch.solve(&atb),
            None => ata.svd(true, true).solve(&atb, 1e-12).ok()?,
        };
        let mut dir = Vector4::zeros();
        dir.rows_mut(0, self.nc).copy_from(&d.rows(0, self.nc));
        self.scaled(dir)
    }

    /// Single basis vectors and their pairwise combinations. The linearized
    /// approximations degrade when the null space is fully four-dimensional
    /// (minimal samples); these starts keep the refinement out of wrong basins.
    fn axis_seeds(&self) -> impl Iterator<Item = Vector4<f64>> + '_ {
        let nc = self.nc;
        let mut dirs = Vec::new();
        for i in 0..nc {
            dirs.push(Vector4::from_fn(|k, _| if k == i { 1.0 } else { 0.0 }));
            for j in i + 1..nc {
                for sign in [1.0, -1.0] {
                    dirs.push(Vector4::from_fn(|k, _| match k {
                        k if k == i => 1.0,
                        k if k == j => sign,
                        _ => 0.0,
                    }));
                }
            }
        }
        dirs.into_iter().filter_map(|d| self.scaled(d))
    }

    /// Damped Gauss-Newton over the active coefficients.
    fn refine(&self, mut betas: Vector4<f64>) -> Vector4<f64> {
        let mut current = self.cost(&betas);
        let mut damping = 1e-4;
        for _ in 0..self.iterations {
            let previous = current;
            let mut jtj = Matrix4::zeros();
            let mut jtr = Vector4::zeros();
            for (g, r) in self.gram.iter().zip(self.rho) {
                let gb = g * betas;
                let res = r - betas.dot(&gb);
                let row = 2.0 * gb;
                jtj += row * row.transpose();
                jtr += row * res;
            }
            let mut improved = false;
            while damping < 1e8 {
                let mut lhs = jtj;
                for i in 0..4 {
                    if i < self.nc {
                        lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
                    } else {
                        lhs[(i, i)] = 1.0;
                    }
                }
                let Some(step) = lhs.cholesky().map(|c| c.solve(&jtr)) else {
                    damping *= 10.0;
                    continue;
                };
                let candidate = betas + step;
                let next = self.cost(&candidate);
                if next < current {
                    betas = candidate;
                    current = next;
                    damping = (damping * 0.1).max(1e-12);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved || current < 1e-30 || previous - current < 1e-10 * previous {
                break;
            }
        }
        betas
    }
}

fn pose_from_betas(
    betas: &Vector4<f64>,
    basis: &[Vec12; 4],
    alphas: &[Vector4<f64>],
    points: &[Point3],
    nc: usize,
) -> Option<RigidPose> {
    let mut ccs = [Vector3::zeros(); 4];
    for (b, v) in betas.iter().zip(basis).take(nc) {
        for (j, cc) in ccs.iter_mut().enumerate().take(nc) {
            *cc += *b * v.fixed_rows::<3>(3 * j);
        }
    }
    let mut pcs: Vec<Vector3<f64>> =
        alphas.iter().map(|a| (0..nc).map(|j| a[j] * ccs[j]).sum::<Vector3<f64>>()).collect();
    // The null space is defined up to sign; pick the sign that puts points in front.
    if pcs.iter().map(|p| p.z).sum::<f64>() < 0.0 {
        pcs.iter_mut().for_each(|p| *p = -*p);
    }
    let pose = absolute_orientation(points, &pcs)?;
    pose.is_valid().then_some(pose)
}

/// Rigid transform taking `from[i]` onto `to[i]` in the least-squares sense.
pub(crate) fn absolute_orientation(from: &[Point3], to: &[Point3]) -> Option<RigidPose> {
    let n = from.len() as f64;
    let cf = from.iter().sum::<Vector3<f64>>() / n;
    let ct = to.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (f, t) in from.iter().zip(to) {
        h += (t - ct) * (f - cf).transpose();
    }
    if !h.iter().all(|v| v.is_finite()) {
        return None;
    }
    let rotation = orthonormalize(&h);
    let translation = ct - rotation * cf;
    Some(RigidPose { rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnp::synth;

    #[test]
    fn recovers_pose_from_six_noise_free_points() {
        for seed in 0..50 {
            let case = synth::Case::random(seed, 6);
            let pose = epnp_solve(&case.corr, &case.intr).unwrap();
            assert!(pose.rotation_angle_to(&case.truth) < 1e-6, "seed {seed}");
            assert!(pose.translation_distance_to(&case.truth) < 1e-6, "seed {seed}");
            assert!(pose.is_valid());
        }
    }

    #[test]
    fn recovers_identity_when_views_coincide() {
        let case = synth::Case::with_pose(7, 10, RigidPose::identity());
        let pose = epnp_solve(&case.corr, &case.intr).unwrap();
        assert!(pose.rotation_angle_to(&RigidPose::identity()) < 1e-6);
        assert!(pose.translation.norm() < 1e-6);
    }

    #[test]
    fn recovers_pose_from_planar_points() {
        for seed in 0..30 {
            let case = synth::Case::planar(seed, 8);
            let pose = epnp_solve(&case.corr, &case.intr).unwrap();
            assert!(pose.rotation_angle_to(&case.truth) < 1e-6, "seed {seed}");
            assert!(pose.translation_distance_to(&case.truth) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn minimal_four_point_samples_mostly_exact() {
        let mut exact = 0;
        for seed in 0..100 {
            let case = synth::Case::random(seed, 4);
            if let Ok(pose) = epnp_solve(&case.corr, &case.intr) {
                if pose.rotation_angle_to(&case.truth) < 1e-4 && pose.translation_distance_to(&case.truth) < 1e-4 {
                    exact += 1;
                }
            }
        }
        assert!(exact >= 80, "only {exact}/100 minimal samples solved");
    }

    #[test]
    fn three_points_is_insufficient() {
        let case = synth::Case::random(1, 3);
        assert!(matches!(
            epnp_solve(&case.corr, &case.intr),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let intr = synth::intrinsics();
        let pts: Vec<Point3> = (0..6).map(|i| Vector3::new(0.1 * i as f64, 0.0, 2.0 + 0.1 * i as f64)).collect();
        let pix: Vec<Pixel> = pts.iter().map(|p| crate::geometry::project(p, &intr).unwrap()).collect();
        assert!(matches!(solve(&pts, &pix, &intr), Err(Error::Degenerate(_))));
    }

    #[test]
    fn absolute_orientation_is_exact_on_rigid_copies() {
        let case = synth::Case::random(3, 12);
        let pts = case.corr.lifted(&case.intr);
        let moved: Vec<Point3> = pts.iter().map(|p| crate::geometry::transform_point(&case.truth, p)).collect();
        let pose = absolute_orientation(&pts, &moved).unwrap();
        assert!(pose.rotation_angle_to(&case.truth) < 1e-9);
        assert!(pose.translation_distance_to(&case.truth) < 1e-9);
    }
}
