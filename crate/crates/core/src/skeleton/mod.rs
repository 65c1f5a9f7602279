//! Pose and scene data model, dataset-wide normalization and the
//! proximity-based interaction ordering.

mod format;

pub use format::{parse_scenes, read_scenes, read_scenes_dir, scenes_to_json, write_scenes, SceneFile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Default joint count of the 17-joint (Human3.6M-style) skeleton.
pub const DEFAULT_NUM_JOINTS: usize = 17;

/// Default root joint: the pelvis in the 17-joint convention.
pub const DEFAULT_ROOT_INDEX: usize = 0;

/// Standard deviations below this (mm) are clamped.
pub const STD_EPS: f64 = 1e-6;

/// One person's joints in millimeters, camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct Pose {
    joints: Vec<Vec3>,
}

impl Pose {
    pub fn new(joints: Vec<Vec3>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Empty("pose joints"));
        }
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pose joints".into()));
        }
        Ok(Self { joints })
    }

    /// Builds a pose from a flattened `[x0, y0, z0, x1, ...]` vector.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || flat.len() % 3 != 0 {
            return Err(Error::shape("pose", format!("flat length {} is not a positive multiple of 3", flat.len())));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Vec3] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> Vec3 {
        self.joints[j]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn translated(&self, offset: Vec3) -> Pose {
        Pose {
            joints: self
                .joints
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }

    pub(crate) fn from_joints_unchecked(joints: Vec<Vec3>) -> Pose {
        debug_assert!(joints.iter().flatten().all(|v| v.is_finite()));
        Pose { joints }
    }
}

impl TryFrom<Vec<Vec3>> for Pose {
    type Error = Error;

    fn try_from(joints: Vec<Vec3>) -> Result<Self> {
        Pose::new(joints)
    }
}

impl From<Pose> for Vec<Vec3> {
    fn from(p: Pose) -> Self {
        p.joints
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: u64,
    pub pose: Pose,
}

/// Ordered collection of the persons detected in one image, optionally with
/// index-aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    persons: Vec<Person>,
    gt: Option<Vec<Pose>>,
}

impl Scene {
    pub fn new(persons: Vec<Person>, gt: Option<Vec<Pose>>) -> Result<Self> {
        if persons.is_empty() {
            return Err(Error::InvalidScene("scene has no persons".into()));
        }
        let j = persons[0].pose.num_joints();
        for (i, p) in persons.iter().enumerate() {
            if p.pose.num_joints() != j {
                return Err(Error::JointCount {
                    expected: j,
                    got: p.pose.num_joints(),
                });
            }
            if persons[..i].iter().any(|q| q.id == p.id) {
                return Err(Error::InvalidScene(format!("duplicate person id {}", p.id)));
            }
        }
        if let Some(gt) = &gt {
            if gt.len() != persons.len() {
                return Err(Error::InvalidScene(format!(
                    "{} ground-truth poses for {} persons",
                    gt.len(),
                    persons.len()
                )));
            }
            if let Some(bad) = gt.iter().find(|g| g.num_joints() != j) {
                return Err(Error::JointCount {
                    expected: j,
                    got: bad.num_joints(),
                });
            }
        }
        Ok(Self { persons, gt })
    }

    /// Scene of poses with ids `0..N` and no ground truth.
    pub fn from_poses(poses: Vec<Pose>) -> Result<Self> {
        let persons = poses
            .into_iter()
            .enumerate()
            .map(|(i, pose)| Person { id: i as u64, pose })
            .collect();
        Self::new(persons, None)
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.persons[0].pose.num_joints()
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn pose(&self, n: usize) -> &Pose {
        &self.persons[n].pose
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.persons.iter().map(|p| &p.pose)
    }

    pub fn gt(&self) -> Option<&[Pose]> {
        self.gt.as_deref()
    }

    pub fn with_gt(self, gt: Option<Vec<Pose>>) -> Result<Self> {
        Scene::new(self.persons, gt)
    }

    /// Same scene with the person list (and ground truth) reordered so that
    /// new position `k` holds old person `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Scene> {
        check_permutation(perm, self.len())?;
        let persons = perm.iter().map(|&i| self.persons[i].clone()).collect();
        let gt = self.gt.as_ref().map(|g| perm.iter().map(|&i| g[i].clone()).collect());
        Scene::new(persons, gt)
    }

    /// Splits the scene into one single-person scene per person.
    pub fn split_persons(&self) -> Vec<Scene> {
        (0..self.len())
            .map(|n| Scene {
                persons: vec![self.persons[n].clone()],
                gt: self.gt.as_ref().map(|g| vec![g[n].clone()]),
            })
            .collect()
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::LengthMismatch(format!("permutation of length {} for {n} items", perm.len())));
    }
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidScene(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Order in which a scene's poses are fed to the recurrent encoder for one
/// person-of-interest. `perm[0]` is always the person-of-interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
}

impl Ordering {
    pub fn new(perm: Vec<usize>, person_of_interest: usize) -> Result<Self> {
        check_permutation(&perm, perm.len())?;
        if perm.first() != Some(&person_of_interest) {
            return Err(Error::InvalidScene(format!(
                "ordering {perm:?} does not start with person {person_of_interest}"
            )));
        }
        Ok(Self { perm })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn person_of_interest(&self) -> usize {
        self.perm[0]
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

pub fn root_of(pose: &Pose, root_index: usize) -> Vec3 {
    pose.joints[root_index]
}

/// Mean of the joint positions.
pub fn centroid(pose: &Pose) -> Vec3 {
    let n = pose.num_joints() as f64;
    let mut c = [0.0; 3];
    for p in pose.joints() {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    c
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Person `n` first, then every other person by increasing root distance.
///
/// Ties are broken by person id so that the resulting id sequence does not
/// depend on where persons sit in the input list.
pub fn order_for(scene: &Scene, n: usize, root_index: usize) -> Result<Ordering> {
    if n >= scene.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: scene.len(),
        });
    }
    if root_index >= scene.num_joints() {
        return Err(Error::IndexOutOfRange {
            index: root_index,
            len: scene.num_joints(),
        });
    }
    let anchor = root_of(scene.pose(n), root_index);
    let mut rest: Vec<(f64, u64, usize)> = (0..scene.len())
        .filter(|&m| m != n)
        .map(|m| {
            let d = distance(root_of(scene.pose(m), root_index), anchor);
            (d, scene.persons[m].id, m)
        })
        .collect();
    rest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let perm = std::iter::once(n).chain(rest.into_iter().map(|r| r.2)).collect();
    Ok(Ordering { perm })
}

/// Dataset-wide per-coordinate mean and standard deviation (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() || mean.len() % 3 != 0 {
            return Err(Error::shape(
                "norm stats",
                format!("mean {} / std {}", mean.len(), std.len()),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) || std.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("norm stats".into()));
        }
        if std.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidConfig("norm stats std must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    /// Identity normalization for `num_joints` joints.
    pub fn identity(num_joints: usize) -> Self {
        Self {
            mean: vec![0.0; 3 * num_joints],
            std: vec![1.0; 3 * num_joints],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_joints(&self) -> usize {
        self.mean.len() / 3
    }
}

/// Per-coordinate mean and population std over all poses, with std clamped
/// below at [`STD_EPS`].
pub fn compute_stats<'a, I>(poses: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a Pose>,
{
    let mut iter = poses.into_iter();
    let first = iter.next().ok_or(Error::Empty("pose list"))?;
    let dim = 3 * first.num_joints();
    // Welford's running update
    let mut count = 0.0;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for pose in std::iter::once(first).chain(iter) {
        if pose.num_joints() * 3 != dim {
            return Err(Error::JointCount {
                expected: dim / 3,
                got: pose.num_joints(),
            });
        }
        count += 1.0;
        for (k, x) in pose.joints.iter().flatten().enumerate() {
            let delta = x - mean[k];
            mean[k] += delta / count;
            m2[k] += delta * (x - mean[k]);
        }
    }
    let std = m2.iter().map(|s| (s / count).sqrt().max(STD_EPS)).collect();
    Ok(NormStats { mean, std })
}

pub fn normalize(pose: &Pose, stats: &NormStats) -> Result<Vec<f64>> {
    if pose.num_joints() * 3 != stats.dim() {
        return Err(Error::JointCount {
            expected: stats.num_joints(),
            got: pose.num_joints(),
        });
    }
    Ok(pose
        .joints
        .iter()
        .flatten()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(x, (m, s))| (x - m) / s)
        .collect())
}

pub fn denormalize(vec: &[f64], stats: &NormStats) -> Result<Pose> {
    if vec.len() != stats.dim() {
        return Err(Error::shape(
            "denormalize",
            format!("vector of length {} for {} coordinates", vec.len(), stats.dim()),
        ));
    }
    let flat: Vec<f64> = vec
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(v, (m, s))| v * s + m)
        .collect();
    Pose::from_flat(&flat)
}
