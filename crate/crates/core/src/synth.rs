//! Seeded generator of interacting multi-person scenes and a known
//! corruption model for their initial estimates.
//!
//! Every person's pose is a fixed template plus a limb offset field. Person 0
//! draws its offsets independently; every later person blends a mirror image
//! of its nearest already-placed neighbor's offsets with a fresh draw, with
//! weight `interaction_strength`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::Rng64;
use crate::skeleton::{read_scenes_dir, write_scenes, SceneFile};
use crate::skeleton::{Person, Pose, Scene, Vec3};

pub const MANIFEST_VERSION: u32 = 1;

/// Left/right joint pairs of the 17-joint template.
pub const MIRROR_PAIRS: [(usize, usize); 6] = [(1, 4), (2, 5), (3, 6), (11, 14), (12, 15), (13, 16)];

/// Knees, ankles, head, elbows and wrists: the joints carrying fine
/// per-joint offsets. The torso only moves with the coarse factors.
pub const DISTAL_JOINTS: [usize; 9] = [2, 3, 5, 6, 10, 12, 13, 15, 16];

/// 17-joint skeleton in mm, pelvis at the origin, y pointing down, the
/// person's right side at negative x.
pub fn template() -> Vec<Vec3> {
    vec![
        [0.0, 0.0, 0.0],       // pelvis
        [-130.0, 0.0, 0.0],    // right hip
        [-130.0, 450.0, 0.0],  // right knee
        [-130.0, 890.0, 0.0],  // right ankle
        [130.0, 0.0, 0.0],     // left hip
        [130.0, 450.0, 0.0],   // left knee
        [130.0, 890.0, 0.0],   // left ankle
        [0.0, -230.0, 0.0],    // spine
        [0.0, -480.0, 0.0],    // thorax
        [0.0, -580.0, 0.0],    // neck
        [0.0, -690.0, 0.0],    // head
        [170.0, -450.0, 0.0],  // left shoulder
        [190.0, -200.0, 0.0],  // left elbow
        [200.0, 30.0, 0.0],    // left wrist
        [-170.0, -450.0, 0.0], // right shoulder
        [-190.0, -200.0, 0.0], // right elbow
        [-200.0, 30.0, 0.0],   // right wrist
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_scenes: usize,
    pub persons_min: usize,
    pub persons_max: usize,
    pub seed: u64,
    pub base_skeleton: Vec<Vec3>,
    /// κ in `[0, 1]`.
    pub interaction_strength: f64,
    /// Radius (mm) of the disc the roots are placed in.
    pub placement_radius: f64,
    /// Magnitude (mm) of the coarse limb factors.
    pub limb_scale: f64,
    /// Per-coordinate std (mm) of the independent fine offsets.
    pub detail_sigma: f64,
    /// Joints receiving fine offsets.
    pub detail_joints: Vec<usize>,
    /// Distance (mm) of the disc center from the camera.
    pub depth: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_scenes: 10,
            persons_min: 2,
            persons_max: 3,
            seed: 0,
            base_skeleton: template(),
            interaction_strength: 0.8,
            placement_radius: 1000.0,
            limb_scale: 120.0,
            detail_sigma: 30.0,
            detail_joints: DISTAL_JOINTS.to_vec(),
            depth: 4000.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.persons_min < 1 || self.persons_max < self.persons_min {
            return bad(format!("persons range {}..={}", self.persons_min, self.persons_max));
        }
        if !(0.0..=1.0).contains(&self.interaction_strength) {
            return bad(format!("interaction_strength {} outside [0, 1]", self.interaction_strength));
        }
        if !(self.placement_radius > 0.0) {
            return bad(format!("placement_radius {} must be positive", self.placement_radius));
        }
        if !(self.limb_scale >= 0.0) || !(self.detail_sigma >= 0.0) || !self.depth.is_finite() {
            return bad("limb_scale, detail_sigma must be >= 0 and depth finite".into());
        }
        if self.base_skeleton.len() != template().len() {
            return bad(format!(
                "base_skeleton has {} joints; the limb model needs {}",
                self.base_skeleton.len(),
                template().len()
            ));
        }
        if let Some(&j) = self.detail_joints.iter().find(|&&j| j >= self.num_joints()) {
            return bad(format!("detail joint {j} out of range"));
        }
        Pose::new(self.base_skeleton.clone())?;
        Ok(())
    }

    pub fn num_joints(&self) -> usize {
        self.base_skeleton.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub joint_sigma: f64,
    pub root_sigma: f64,
    pub outlier_prob: f64,
    pub outlier_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            joint_sigma: 40.0,
            root_sigma: 60.0,
            outlier_prob: 0.02,
            outlier_sigma: 300.0,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            joint_sigma: 0.0,
            root_sigma: 0.0,
            outlier_prob: 0.0,
            outlier_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sig = [self.joint_sigma, self.root_sigma, self.outlier_sigma];
        if sig.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!("noise sigmas {sig:?} must be finite and >= 0")));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::InvalidConfig(format!("outlier_prob {} outside [0, 1]", self.outlier_prob)));
        }
        Ok(())
    }
}

/// Offset field of a pose relative to the template, `J×3` in mm.
pub type Offsets = Vec<Vec3>;

/// Left/right mirror image of an offset field: sides swapped, x negated.
pub fn mirror(offsets: &[Vec3]) -> Offsets {
    let mut out: Offsets = offsets.iter().map(|p| [-p[0], p[1], p[2]]).collect();
    for &(r, l) in &MIRROR_PAIRS {
        out.swap(r, l);
    }
    out
}

/// Coarse limb factors: right arm forward/side, right leg forward/side, the
/// mirrored left versions, torso forward and side lean.
fn limb_basis() -> Vec<Offsets> {
    let j = template().len();
    let field = |entries: &[(usize, Vec3)]| {
        let mut f = vec![[0.0; 3]; j];
        for &(i, v) in entries {
            f[i] = v;
        }
        f
    };
    let r_arm_fwd = field(&[(15, [0.0, -0.3, 0.6]), (16, [0.0, -0.6, 1.2])]);
    let r_arm_side = field(&[(15, [-0.6, -0.3, 0.0]), (16, [-1.2, -0.6, 0.0])]);
    let r_leg_fwd = field(&[(2, [0.0, -0.1, 0.5]), (3, [0.0, -0.2, 1.0])]);
    let r_leg_side = field(&[(2, [-0.4, 0.0, 0.0]), (3, [-0.8, 0.0, 0.0])]);
    let upper = [7, 8, 9, 10, 11, 12, 13, 14, 15, 16];
    let weight = |i: usize| match i {
        7 => 0.2,
        8 | 11 | 14 => 0.5,
        9 => 0.6,
        _ => 0.7,
    };
    let lean_fwd = field(&upper.map(|i| (i, [0.0, 0.0, weight(i)])));
    let lean_side = field(&upper.map(|i| (i, [weight(i), 0.0, 0.0])));
    vec![
        mirror(&r_arm_fwd),
        mirror(&r_arm_side),
        r_arm_fwd,
        r_arm_side,
        mirror(&r_leg_fwd),
        mirror(&r_leg_side),
        r_leg_fwd,
        r_leg_side,
        lean_fwd,
        lean_side,
    ]
}

/// Independent draw of an offset field.
pub fn draw_offsets(cfg: &GenConfig, rng: &mut impl Rng) -> Offsets {
    let basis = limb_basis();
    let mut out = vec![[0.0; 3]; cfg.num_joints()];
    for b in &basis {
        let z: f64 = StandardNormal.sample(rng);
        for (o, v) in out.iter_mut().zip(b) {
            for k in 0..3 {
                o[k] += cfg.limb_scale * z * v[k];
            }
        }
    }
    for &j in &cfg.detail_joints {
        for v in out[j].iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += cfg.detail_sigma * e;
        }
    }
    out
}

/// A clean scene: persons' initial poses equal their ground truth.
pub fn gen_scene(cfg: &GenConfig, index: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = Rng64::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let n = rng.random_range(cfg.persons_min..=cfg.persons_max);
    let mut roots: Vec<Vec3> = Vec::with_capacity(n);
    let mut offsets: Vec<Offsets> = Vec::with_capacity(n);
    let kappa = cfg.interaction_strength;
    for k in 0..n {
        let r = cfg.placement_radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let root = [r * a.cos(), 0.0, cfg.depth + r * a.sin()];
        let fresh = draw_offsets(cfg, &mut rng);
        let off = if k == 0 {
            fresh
        } else {
            let nearest = (0..k)
                .min_by(|&a, &b| dist2(roots[a], root).total_cmp(&dist2(roots[b], root)))
                .expect("k > 0");
            mirror(&offsets[nearest])
                .iter()
                .zip(&fresh)
                .map(|(m, f)| [0, 1, 2].map(|c| kappa * m[c] + (1.0 - kappa) * f[c]))
                .collect()
        };
        roots.push(root);
        offsets.push(off);
    }
    let poses: Vec<Pose> = roots
        .iter()
        .zip(&offsets)
        .map(|(root, off)| {
            Pose::new(
                cfg.base_skeleton
                    .iter()
                    .zip(off)
                    .map(|(t, o)| [0, 1, 2].map(|c| t[c] + o[c] + root[c]))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let persons = poses
        .iter()
        .enumerate()
        .map(|(i, p)| Person {
            id: i as u64,
            pose: p.clone(),
        })
        .collect();
    Scene::new(persons, Some(poses))
}

fn dist2(a: Vec3, b: Vec3) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

/// Replaces every person's pose by a noisy copy of its ground truth.
pub fn corrupt(scene: &Scene, ncfg: &NoiseConfig, seed: u64) -> Result<Scene> {
    ncfg.validate()?;
    let gt = scene.gt().ok_or(Error::MissingGroundTruth)?;
    let mut rng = Rng64::seed_from_u64(seed);
    let joint = Normal::new(0.0, ncfg.joint_sigma).expect("validated sigma");
    let root = Normal::new(0.0, ncfg.root_sigma).expect("validated sigma");
    let outlier = Normal::new(0.0, ncfg.outlier_sigma).expect("validated sigma");
    let mut persons = Vec::with_capacity(scene.len());
    for (p, g) in scene.persons().iter().zip(gt) {
        let shift: Vec3 = [0, 1, 2].map(|_| root.sample(&mut rng));
        let joints = g
            .joints()
            .iter()
            .map(|q| {
                let mut out = [0, 1, 2].map(|c| q[c] + shift[c] + joint.sample(&mut rng));
                if rng.random::<f64>() < ncfg.outlier_prob {
                    out.iter_mut().for_each(|v| *v += outlier.sample(&mut rng));
                }
                out
            })
            .collect();
        persons.push(Person {
            id: p.id,
            pose: Pose::new(joints)?,
        });
    }
    Scene::new(persons, Some(gt.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Noise seed of one scene; train and test draw from disjoint streams.
pub fn noise_seed(seed: u64, split: Split, index: u64) -> u64 {
    let tag = match split {
        Split::Train => 0x7a11_0000_0000_0001u64,
        Split::Test => 0x7e57_0000_0000_0002u64,
    };
    splitmix(splitmix(seed ^ tag).wrapping_add(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Number of training scenes of an 80/20 split.
pub fn train_count(n_scenes: usize) -> usize {
    n_scenes * 4 / 5
}

/// Corrupted scenes split 80/20 by index.
pub fn make_dataset(cfg: &GenConfig, ncfg: &NoiseConfig) -> Result<(Vec<Scene>, Vec<Scene>)> {
    cfg.validate()?;
    ncfg.validate()?;
    if cfg.n_scenes < 2 {
        return Err(Error::InvalidConfig(format!("n_scenes {} must be at least 2", cfg.n_scenes)));
    }
    let n_train = train_count(cfg.n_scenes);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(cfg.n_scenes - n_train);
    for i in 0..cfg.n_scenes {
        let clean = gen_scene(cfg, i as u64)?;
        if i < n_train {
            train.push(corrupt(&clean, ncfg, noise_seed(cfg.seed, Split::Train, i as u64))?);
        } else {
            test.push(corrupt(&clean, ncfg, noise_seed(cfg.seed, Split::Test, i as u64))?);
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub gen: GenConfig,
    pub noise: NoiseConfig,
    pub train_files: Vec<String>,
    pub test_files: Vec<String>,
}

/// Writes `train/scene_XXXXX.json`, `test/scene_XXXXX.json` and
/// `manifest.json` below `dir`. File numbers are global scene indices.
pub fn write_dataset(dir: &Path, cfg: &GenConfig, ncfg: &NoiseConfig, train: &[Scene], test: &[Scene]) -> Result<Manifest> {
    let mut names = [Vec::new(), Vec::new()];
    for (k, (split, scenes, offset)) in [(Split::Train, train, 0), (Split::Test, test, train.len())].into_iter().enumerate() {
        let sub = dir.join(split.as_str());
        fs::create_dir_all(&sub)?;
        for (i, s) in scenes.iter().enumerate() {
            let name = format!("{}/scene_{:05}.json", split.as_str(), offset + i);
            write_scenes(dir.join(&name), &SceneFile::new(s.num_joints(), vec![s.clone()])?)?;
            names[k].push(name);
        }
    }
    let [train_files, test_files] = names;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        gen: cfg.clone(),
        noise: ncfg.clone(),
        train_files,
        test_files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads the `train` and `test` splits written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(SceneFile, SceneFile)> {
    Ok((read_scenes_dir(dir.join("train"))?, read_scenes_dir(dir.join("test"))?))
}
