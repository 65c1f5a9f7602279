//! Pose accuracy: 3DPCK, MPJPE after root alignment and PA-MPJPE after
//! similarity (Procrustes) alignment.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{root_of, Pose, Vec3, DEFAULT_ROOT_INDEX};

pub const DEFAULT_PCK_THRESHOLD: f64 = 150.0;

/// JSON schema of a serialized [`MetricReport`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/metric_report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let q = self.scale * (self.rotation * Vector3::from(p)) + self.translation;
        [q.x, q.y, q.z]
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        Pose::from_joints_unchecked(pose.joints().iter().map(|&p| self.apply_point(p)).collect())
    }
}

fn check_pair(pred: &Pose, gt: &Pose) -> Result<()> {
    if pred.num_joints() != gt.num_joints() {
        return Err(Error::JointCount {
            expected: gt.num_joints(),
            got: pred.num_joints(),
        });
    }
    Ok(())
}

/// Translates `pred` so its root joint coincides with the root of `gt`.
pub fn root_align(pred: &Pose, gt: &Pose) -> Result<Pose> {
    check_pair(pred, gt)?;
    let (rp, rg) = (root_of(pred, DEFAULT_ROOT_INDEX), root_of(gt, DEFAULT_ROOT_INDEX));
    Ok(pred.translated([rg[0] - rp[0], rg[1] - rp[1], rg[2] - rp[2]]))
}

fn joint_errors(pred: &Pose, gt: &Pose) -> Vec<f64> {
    pred.joints()
        .iter()
        .zip(gt.joints())
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .collect()
}

fn root_aligned_errors(pred: &Pose, gt: &Pose) -> Result<Vec<f64>> {
    Ok(joint_errors(&root_align(pred, gt)?, gt))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean per-joint position error after root alignment, in mm.
pub fn mpjpe(pred: &Pose, gt: &Pose) -> Result<f64> {
    Ok(mean(&root_aligned_errors(pred, gt)?))
}

fn centroid(pts: &[Vec3]) -> Vector3<f64> {
    pts.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / pts.len() as f64
}

/// Least-squares similarity transform taking `pred` onto `gt`, reflections
/// excluded.
pub fn procrustes_align(pred: &Pose, gt: &Pose) -> Result<(SimilarityTransform, Pose)> {
    check_pair(pred, gt)?;
    let j = pred.num_joints();
    if j < 3 {
        return Err(Error::Degenerate(format!("{j} joints; need at least 3")));
    }
    let (mx, my) = (centroid(pred.joints()), centroid(gt.joints()));
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (p, g) in pred.joints().iter().zip(gt.joints()) {
        let x = Vector3::from(*p) - mx;
        let y = Vector3::from(*g) - my;
        cov += y * x.transpose();
        var_x += x.norm_squared();
    }
    let svd = nalgebra::linalg::SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let sv = svd.singular_values;
    // pred spread, tested on its own covariance so a degenerate gt is allowed
    let mut cov_x = Matrix3::zeros();
    for p in pred.joints() {
        let x = Vector3::from(*p) - mx;
        cov_x += x * x.transpose();
    }
    let ev = cov_x.symmetric_eigenvalues();
    let mut ev: Vec<f64> = ev.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(var_x > 0.0) || ev[1] <= 1e-12 * ev[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("prediction has rank < 2".into()));
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // singular values are sorted descending, flip the smallest direction
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace = sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)];
    let scale = trace / var_x;
    if !(scale > 0.0) {
        return Err(Error::Degenerate(format!("non-positive scale {scale}")));
    }
    let translation = my - scale * (rotation * mx);
    let t = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let aligned = t.apply(pred);
    Ok((t, aligned))
}

/// Mean per-joint position error after Procrustes alignment, in mm.
pub fn pa_mpjpe(pred: &Pose, gt: &Pose) -> Result<f64> {
    let (_, aligned) = procrustes_align(pred, gt)?;
    Ok(mean(&joint_errors(&aligned, gt)))
}

fn check_lists(preds: &[Pose], gts: &[Pose]) -> Result<usize> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch(format!("{} predictions vs {} ground truths", preds.len(), gts.len())));
    }
    if preds.is_empty() {
        return Err(Error::Empty("pose list"));
    }
    let j = gts[0].num_joints();
    for (p, g) in preds.iter().zip(gts) {
        check_pair(p, g)?;
        if g.num_joints() != j {
            return Err(Error::JointCount {
                expected: j,
                got: g.num_joints(),
            });
        }
    }
    Ok(j)
}

/// Percentage of joints within `threshold` mm (inclusive) after root alignment.
pub fn pck3d(preds: &[Pose], gts: &[Pose], threshold: f64) -> Result<f64> {
    check_lists(preds, gts)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(gts) {
        let e = root_aligned_errors(p, g)?;
        hit += e.iter().filter(|&&d| d <= threshold).count();
        total += e.len();
    }
    Ok(100.0 * hit as f64 / total as f64)
}

/// PCK computed independently for every joint index.
pub fn pck_per_joint(preds: &[Pose], gts: &[Pose], threshold: f64) -> Result<Vec<f64>> {
    let j = check_lists(preds, gts)?;
    let mut hits = vec![0usize; j];
    for (p, g) in preds.iter().zip(gts) {
        for (h, d) in hits.iter_mut().zip(root_aligned_errors(p, g)?) {
            if d <= threshold {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| 100.0 * h as f64 / preds.len() as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pck_150: f64,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub per_joint_pck: Vec<f64>,
    /// Number of joints evaluated.
    pub count: usize,
    pub poses: usize,
}

impl MetricReport {
    pub fn compute(preds: &[Pose], gts: &[Pose]) -> Result<Self> {
        let j = check_lists(preds, gts)?;
        let mut m = 0.0;
        let mut pa = 0.0;
        for (p, g) in preds.iter().zip(gts) {
            m += mpjpe(p, g)?;
            pa += pa_mpjpe(p, g)?;
        }
        let n = preds.len() as f64;
        Ok(Self {
            pck_150: pck3d(preds, gts, DEFAULT_PCK_THRESHOLD)?,
            mpjpe: m / n,
            pa_mpjpe: pa / n,
            per_joint_pck: pck_per_joint(preds, gts, DEFAULT_PCK_THRESHOLD)?,
            count: preds.len() * j,
            poses: preds.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Summary row plus one joint-wise row.
    pub fn to_table(&self, label: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>9} {:>9} {:>9} {:>7}\n", "", "3DPCK", "MPJPE", "PA-MPJPE", "joints"));
        out.push_str(&format!(
            "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>7}\n",
            label, self.pck_150, self.mpjpe, self.pa_mpjpe, self.count
        ));
        out.push_str(&joint_header(self.per_joint_pck.len()));
        out.push_str(&joint_row(label, &self.per_joint_pck));
        out
    }
}

fn joint_header(j: usize) -> String {
    let mut s = format!("{:<12}", "joint");
    for i in 0..j {
        s.push_str(&format!(" {:>6}", i));
    }
    s.push('\n');
    s
}

fn joint_row(label: &str, v: &[f64]) -> String {
    let mut s = format!("{:<12}", label);
    for x in v {
        s.push_str(&format!(" {:>6.1}", x));
    }
    s.push('\n');
    s
}

/// Metrics of the unrefined inputs next to the refined outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub input: MetricReport,
    pub refined: MetricReport,
    /// `refined - input` for pck, mpjpe, pa_mpjpe.
    pub delta_pck_150: f64,
    pub delta_mpjpe: f64,
    pub delta_pa_mpjpe: f64,
}

impl MetricComparison {
    pub fn new(input: MetricReport, refined: MetricReport) -> Self {
        Self {
            delta_pck_150: refined.pck_150 - input.pck_150,
            delta_mpjpe: refined.mpjpe - input.mpjpe,
            delta_pa_mpjpe: refined.pa_mpjpe - input.pa_mpjpe,
            input,
            refined,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>9} {:>9} {:>9}\n", "", "3DPCK", "MPJPE", "PA-MPJPE"));
        for (label, r) in [("input", &self.input), ("refined", &self.refined)] {
            out.push_str(&format!("{:<12} {:>9.2} {:>9.2} {:>9.2}\n", label, r.pck_150, r.mpjpe, r.pa_mpjpe));
        }
        out.push_str(&format!(
            "{:<12} {:>+9.2} {:>+9.2} {:>+9.2}\n",
            "delta", self.delta_pck_150, self.delta_mpjpe, self.delta_pa_mpjpe
        ));
        out.push_str(&joint_header(self.input.per_joint_pck.len()));
        out.push_str(&joint_row("input", &self.input.per_joint_pck));
        out.push_str(&joint_row("refined", &self.refined.per_joint_pck));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, SymmetricEigen, Matrix4, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng, j: usize) -> Pose {
        Pose::new(
            (0..j)
                .map(|_| [rng.random_range(-500.0..500.0), rng.random_range(-900.0..900.0), rng.random_range(3000.0..5000.0)])
                .collect(),
        )
        .unwrap()
    }

    fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(-3.1..3.1))
    }

    fn loop_mpjpe(pred: &Pose, gt: &Pose) -> f64 {
        let (rp, rg) = (pred.joint(0), gt.joint(0));
        let mut s = 0.0;
        for j in 0..gt.num_joints() {
            let (p, g) = (pred.joint(j), gt.joint(j));
            let mut d2 = 0.0;
            for k in 0..3 {
                d2 += ((p[k] - rp[k] + rg[k]) - g[k]).powi(2);
            }
            s += d2.sqrt();
        }
        s / gt.num_joints() as f64
    }

    /// Rotation by Horn's quaternion method; scale by grid search.
    fn horn_oracle(pred: &Pose, gt: &Pose) -> f64 {
        let n = pred.num_joints();
        let cx = pred.joints().iter().fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]).map(|v| v / n as f64);
        let cy = gt.joints().iter().fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]).map(|v| v / n as f64);
        let xs: Vec<[f64; 3]> = pred.joints().iter().map(|p| [p[0] - cx[0], p[1] - cx[1], p[2] - cx[2]]).collect();
        let ys: Vec<[f64; 3]> = gt.joints().iter().map(|p| [p[0] - cy[0], p[1] - cy[1], p[2] - cy[2]]).collect();
        let mut s = [[0.0; 3]; 3];
        for (x, y) in xs.iter().zip(&ys) {
            for a in 0..3 {
                for b in 0..3 {
                    s[a][b] += x[a] * y[b];
                }
            }
        }
        let (sxx, sxy, sxz) = (s[0][0], s[0][1], s[0][2]);
        let (syx, syy, syz) = (s[1][0], s[1][1], s[1][2]);
        let (szx, szy, szz) = (s[2][0], s[2][1], s[2][2]);
        #[rustfmt::skip]
        let k = Matrix4::new(
            sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
            syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
            szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
            sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
        );
        let eig = SymmetricEigen::new(k);
        let imax = eig.eigenvalues.imax();
        let q = eig.eigenvectors.column(imax);
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        let r = Matrix3::new(
            w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
            2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z,
        );
        let rotated: Vec<Vector3<f64>> = xs.iter().map(|x| r * Vector3::from(*x)).collect();
        let sq = |sc: f64| -> f64 { rotated.iter().zip(&ys).map(|(x, y)| (sc * x - Vector3::from(*y)).norm_squared()).sum() };
        let (mut lo, mut hi) = (0.01, 100.0);
        // coarse log grid, then refine around the best cell
        for _ in 0..6 {
            let step = (hi / lo as f64).powf(1.0 / 200.0);
            let best = (0..=200).map(|i| lo * step.powi(i)).min_by(|a, b| sq(*a).total_cmp(&sq(*b))).unwrap();
            lo = best / step;
            hi = best * step;
        }
        let sc = 0.5 * (lo + hi);
        rotated.iter().zip(&ys).map(|(x, y)| (sc * x - Vector3::from(*y)).norm()).sum::<f64>() / n as f64
    }

    #[test]
    fn root_align_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(&mut rng, 17);
        assert_eq!(root_align(&gt, &gt).unwrap(), gt);
        let shifted = gt.translated([10.0, -20.0, 35.0]);
        let a = root_align(&shifted, &gt).unwrap();
        for (p, g) in a.joints().iter().zip(gt.joints()) {
            for k in 0..3 {
                assert!((p[k] - g[k]).abs() < 1e-9);
            }
        }
        let other = random_pose(&mut rng, 17);
        let a = root_align(&other, &gt).unwrap();
        for k in 0..3 {
            assert!((a.joint(0)[k] - gt.joint(0)[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mpjpe_single_joint() {
        let gt = Pose::new((0..17).map(|i| [i as f64 * 10.0, 0.0, 4000.0]).collect()).unwrap();
        let mut j = gt.joints().to_vec();
        j[5][1] += 34.0;
        let pred = Pose::new(j).unwrap();
        assert!((mpjpe(&pred, &gt).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn mpjpe_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (p, g) = (random_pose(&mut rng, 17), random_pose(&mut rng, 17));
            assert!((mpjpe(&p, &g).unwrap() - loop_mpjpe(&p, &g)).abs() < 1e-12);
        }
    }

    #[test]
    fn procrustes_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_pose(&mut rng, 17);
        let (t, aligned) = procrustes_align(&gt, &gt).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!(t.translation.norm() < 1e-6);
        assert!(mean(&joint_errors(&aligned, &gt)) < 1e-9);
    }

    #[test]
    fn procrustes_inverts_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let gt = random_pose(&mut rng, 17);
            let r0 = random_rotation(&mut rng);
            let t0 = Vector3::new(rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0));
            let fwd = SimilarityTransform {
                scale: 2.0,
                rotation: *r0.matrix(),
                translation: t0,
            };
            let pred = fwd.apply(&gt);
            let (t, aligned) = procrustes_align(&pred, &gt).unwrap();
            assert!((t.scale - 0.5).abs() < 1e-12);
            assert!((t.rotation - r0.matrix().transpose()).norm() < 1e-9);
            for (a, g) in aligned.joints().iter().zip(gt.joints()) {
                for k in 0..3 {
                    assert!((a[k] - g[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn procrustes_excludes_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_pose(&mut rng, 17);
        let mirrored = Pose::new(gt.joints().iter().map(|p| [-p[0], p[1], p[2]]).collect()).unwrap();
        let (t, _) = procrustes_align(&mirrored, &gt).unwrap();
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
        assert!((t.rotation.transpose() * t.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!(pa_mpjpe(&mirrored, &gt).unwrap() > 1.0);
    }

    #[test]
    fn procrustes_degenerate() {
        let gt = Pose::new((0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect()).unwrap();
        let line = gt.clone();
        assert!(matches!(procrustes_align(&line, &gt), Err(Error::Degenerate(_))));
        let point = Pose::new(vec![[1.0, 1.0, 1.0]; 5]).unwrap();
        assert!(matches!(procrustes_align(&point, &gt), Err(Error::Degenerate(_))));
        let two = Pose::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(procrustes_align(&two, &two), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pa_mpjpe_rigid_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = random_pose(&mut rng, 17);
        let r = random_rotation(&mut rng);
        let rot = SimilarityTransform {
            scale: 1.0,
            rotation: *r.matrix(),
            translation: Vector3::new(5.0, 6.0, 7.0),
        };
        assert!(pa_mpjpe(&rot.apply(&gt), &gt).unwrap() < 1e-9);
        let scaled = Pose::new(gt.joints().iter().map(|p| p.map(|v| 1.1 * v)).collect()).unwrap();
        assert!(pa_mpjpe(&scaled, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn pa_mpjpe_matches_horn_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let gt = random_pose(&mut rng, 17);
            let noisy = Pose::new(
                gt.joints()
                    .iter()
                    .map(|p| [p[0] + rng.random_range(-60.0..60.0), p[1] + rng.random_range(-60.0..60.0), p[2] + rng.random_range(-60.0..60.0)])
                    .collect(),
            )
            .unwrap();
            let a = pa_mpjpe(&noisy, &gt).unwrap();
            let o = horn_oracle(&noisy, &gt);
            assert!((a - o).abs() <= 1e-3 * o, "{a} vs {o}");
        }
    }

    #[test]
    fn pck_cases() {
        let gt = Pose::new((0..17).map(|i| [i as f64 * 10.0, 0.0, 4000.0]).collect()).unwrap();
        assert_eq!(pck3d(&[gt.clone()], &[gt.clone()], 150.0).unwrap(), 100.0);
        let mut j = gt.joints().to_vec();
        j[3][2] += 150.0;
        let at = Pose::new(j.clone()).unwrap();
        assert_eq!(pck3d(&[at], &[gt.clone()], 150.0).unwrap(), 100.0);
        j[3][2] += 1.0;
        let over = Pose::new(j).unwrap();
        let p = pck3d(&[over.clone()], &[gt.clone()], 150.0).unwrap();
        assert!((p - 94.118).abs() < 1e-3);
        assert!((p - 1600.0 / 17.0).abs() < 1e-12);
        assert!(matches!(pck3d(&[over], &[], 150.0), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn pck_per_joint_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gts: Vec<Pose> = (0..10).map(|_| random_pose(&mut rng, 17)).collect();
        assert!(pck_per_joint(&gts, &gts, 150.0).unwrap().iter().all(|&v| v == 100.0));
        let preds: Vec<Pose> = gts
            .iter()
            .map(|g| {
                let mut j = g.joints().to_vec();
                j[5][0] += 400.0;
                Pose::new(j).unwrap()
            })
            .collect();
        let pj = pck_per_joint(&preds, &gts, 150.0).unwrap();
        for (i, v) in pj.iter().enumerate() {
            assert_eq!(*v, if i == 5 { 0.0 } else { 100.0 });
        }
    }

    #[test]
    fn report_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gts: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng, 17)).collect();
        let preds: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng, 17)).collect();
        let r = MetricReport::compute(&preds, &gts).unwrap();
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.count, 68);
        assert!(r.to_table("x").contains("PA-MPJPE"));
        let exact = MetricReport::compute(&gts, &gts).unwrap();
        assert_eq!((exact.pck_150, exact.mpjpe), (100.0, 0.0));
        assert!(exact.pa_mpjpe < 1e-9);
    }

    fn pose_strategy() -> impl Strategy<Value = (Pose, Pose)> {
        (any::<u64>()).prop_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let g = random_pose(&mut rng, 17);
            let p = Pose::new(
                g.joints()
                    .iter()
                    .map(|q| [q[0] + rng.random_range(-200.0..200.0), q[1] + rng.random_range(-200.0..200.0), q[2] + rng.random_range(-200.0..200.0)])
                    .collect(),
            )
            .unwrap();
            (p, g)
        })
    }

    proptest! {
        #[test]
        fn pa_never_exceeds_mpjpe((p, g) in pose_strategy()) {
            prop_assert!(pa_mpjpe(&p, &g).unwrap() <= mpjpe(&p, &g).unwrap() + 1e-9);
        }

        #[test]
        fn mpjpe_translation_invariant((p, g) in pose_strategy(), dx in -1e3..1e3f64, dz in -1e3..1e3f64) {
            let a = mpjpe(&p, &g).unwrap();
            prop_assert!((mpjpe(&p.translated([dx, 0.0, dz]), &g).unwrap() - a).abs() < 1e-9);
            prop_assert!((mpjpe(&p, &g.translated([0.0, dz, dx])).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn pa_similarity_invariant((p, g) in pose_strategy(), seed in any::<u64>(), s in 0.2..5.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = SimilarityTransform { scale: s, rotation: *random_rotation(&mut rng).matrix(), translation: Vector3::new(100.0, -50.0, 20.0) };
            let a = pa_mpjpe(&p, &g).unwrap();
            prop_assert!((pa_mpjpe(&t.apply(&p), &g).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn rotation_is_proper((p, g) in pose_strategy()) {
            let (t, _) = procrustes_align(&p, &g).unwrap();
            prop_assert!((t.rotation.transpose() * t.rotation - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pck_monotone((p, g) in pose_strategy(), a in 0.0..400.0f64, b in 0.0..400.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(pck3d(&[p.clone()], &[g.clone()], lo).unwrap() <= pck3d(&[p], &[g], hi).unwrap());
        }

        #[test]
        fn per_joint_mean_is_pck((p, g) in pose_strategy()) {
            let pj = pck_per_joint(&[p.clone()], &[g.clone()], 150.0).unwrap();
            let m = pj.iter().sum::<f64>() / pj.len() as f64;
            prop_assert!((m - pck3d(&[p], &[g], 150.0).unwrap()).abs() < 1e-9);
        }
    }
}
