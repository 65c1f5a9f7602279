//! JSON scene files:
//!
//! ```json
//! {"num_joints": 17, "scenes": [{"persons": [{"id": 0, "joints": [[x, y, z], ...]}], "gt": [[[x, y, z], ...]] | null}]}
//! ```
//!
//! Parsing is seeded with the declared joint count so that a wrong count or
//! a non-finite coordinate is reported at its line and column.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, DeserializeSeed, Deserializer, MapAccess, SeqAccess, Visitor};

use super::{Person, Pose, Scene, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub num_joints: usize,
    pub scenes: Vec<Scene>,
}

impl SceneFile {
    pub fn new(num_joints: usize, scenes: Vec<Scene>) -> Result<Self> {
        if let Some(s) = scenes.iter().find(|s| s.num_joints() != num_joints) {
            return Err(Error::JointCount {
                expected: num_joints,
                got: s.num_joints(),
            });
        }
        Ok(Self { num_joints, scenes })
    }
}

pub fn parse_scenes(text: &str, path: &Path) -> Result<SceneFile> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file = de
        .deserialize_map(FileVisitor)
        .and_then(|f| de.end().map(|_| f))
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: strip_position(&e),
        })?;
    Ok(file)
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

pub fn read_scenes(path: impl AsRef<Path>) -> Result<SceneFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_scenes(&text, path)
}

/// Reads every `*.json` scene file of a directory in file-name order and
/// concatenates their scenes.
pub fn read_scenes_dir(dir: impl AsRef<Path>) -> Result<SceneFile> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut num_joints = None;
    let mut scenes = Vec::new();
    for p in paths {
        let f = read_scenes(&p)?;
        match num_joints {
            Some(j) if j != f.num_joints => {
                return Err(Error::JointCount {
                    expected: j,
                    got: f.num_joints,
                })
            }
            _ => num_joints = Some(f.num_joints),
        }
        scenes.extend(f.scenes);
    }
    let num_joints = num_joints.ok_or(Error::Empty("scene directory"))?;
    Ok(SceneFile { num_joints, scenes })
}

pub fn write_scenes(path: impl AsRef<Path>, file: &SceneFile) -> Result<()> {
    fs::write(path, scenes_to_json(file))?;
    Ok(())
}

/// Serializes with one pose per line. Floats use the shortest representation
/// that parses back to the same bits.
pub fn scenes_to_json(file: &SceneFile) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"num_joints\": {}, \"scenes\": [", file.num_joints);
    for (i, scene) in file.scenes.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str("  {\"persons\": [");
        for (k, p) in scene.persons().iter().enumerate() {
            out.push_str(if k == 0 { "\n" } else { ",\n" });
            let _ = write!(out, "    {{\"id\": {}, \"joints\": ", p.id);
            push_joints(&mut out, p.pose.joints());
            out.push('}');
        }
        out.push_str("\n  ], \"gt\": ");
        match scene.gt() {
            None => out.push_str("null"),
            Some(gt) => {
                out.push('[');
                for (k, g) in gt.iter().enumerate() {
                    out.push_str(if k == 0 { "\n    " } else { ",\n    " });
                    push_joints(&mut out, g.joints());
                }
                out.push_str("\n  ]");
            }
        }
        out.push('}');
    }
    if !file.scenes.is_empty() {
        out.push('\n');
    }
    out.push_str("]}\n");
    out
}

fn push_joints(out: &mut String, joints: &[Vec3]) {
    out.push('[');
    for (i, j) in joints.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "[{:?}, {:?}, {:?}]", j[0], j[1], j[2]);
    }
    out.push(']');
}

const FILE_FIELDS: &[&str] = &["num_joints", "scenes"];
const SCENE_FIELDS: &[&str] = &["persons", "gt"];
const PERSON_FIELDS: &[&str] = &["id", "joints"];

struct FileVisitor;

impl<'de> Visitor<'de> for FileVisitor {
    type Value = SceneFile;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a scene file object")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<SceneFile, A::Error> {
        let mut num_joints: Option<usize> = None;
        let mut scenes: Option<Vec<Scene>> = None;
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "num_joints" => {
                    let j = map.next_value::<usize>()?;
                    if j == 0 {
                        return Err(de::Error::custom("num_joints must be positive"));
                    }
                    num_joints = Some(j);
                }
                "scenes" => scenes = Some(map.next_value_seed(VecSeed(SceneSeed { joints: num_joints }))?),
                other => return Err(de::Error::unknown_field(other, FILE_FIELDS)),
            }
        }
        let num_joints = num_joints.ok_or_else(|| de::Error::missing_field("num_joints"))?;
        let scenes = scenes.ok_or_else(|| de::Error::missing_field("scenes"))?;
        SceneFile::new(num_joints, scenes).map_err(de::Error::custom)
    }
}

/// Deserializes a JSON array, running `S` on every element.
#[derive(Clone, Copy)]
struct VecSeed<S>(S);

impl<'de, S> DeserializeSeed<'de> for VecSeed<S>
where
    S: DeserializeSeed<'de> + Copy,
{
    type Value = Vec<S::Value>;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de, S> Visitor<'de> for VecSeed<S>
where
    S: DeserializeSeed<'de> + Copy,
{
    type Value = Vec<S::Value>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an array")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
        let mut out = Vec::new();
        while let Some(v) = seq.next_element_seed(self.0)? {
            out.push(v);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy)]
struct SceneSeed {
    joints: Option<usize>,
}

impl<'de> DeserializeSeed<'de> for SceneSeed {
    type Value = Scene;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Scene, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for SceneSeed {
    type Value = Scene;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a scene object")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Scene, A::Error> {
        let mut persons = None;
        let mut gt = None;
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "persons" => persons = Some(map.next_value_seed(VecSeed(PersonSeed { joints: self.joints }))?),
                "gt" => gt = Some(map.next_value_seed(OptionSeed(VecSeed(JointsSeed { joints: self.joints })))?),
                other => return Err(de::Error::unknown_field(other, SCENE_FIELDS)),
            }
        }
        let persons = persons.ok_or_else(|| de::Error::missing_field("persons"))?;
        Scene::new(persons, gt.flatten()).map_err(de::Error::custom)
    }
}

#[derive(Clone, Copy)]
struct OptionSeed<S>(S);

impl<'de, S: DeserializeSeed<'de>> DeserializeSeed<'de> for OptionSeed<S> {
    type Value = Option<S::Value>;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
        d.deserialize_option(self)
    }
}

impl<'de, S: DeserializeSeed<'de>> Visitor<'de> for OptionSeed<S> {
    type Value = Option<S::Value>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("null or a value")
    }

    fn visit_none<E: de::Error>(self) -> Result<Self::Value, E> {
        Ok(None)
    }

    fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
        Ok(None)
    }

    fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
        self.0.deserialize(d).map(Some)
    }
}

#[derive(Clone, Copy)]
struct PersonSeed {
    joints: Option<usize>,
}

impl<'de> DeserializeSeed<'de> for PersonSeed {
    type Value = Person;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Person, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for PersonSeed {
    type Value = Person;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a person object")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Person, A::Error> {
        let mut id = None;
        let mut pose = None;
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "id" => id = Some(map.next_value::<u64>()?),
                "joints" => pose = Some(map.next_value_seed(JointsSeed { joints: self.joints })?),
                other => return Err(de::Error::unknown_field(other, PERSON_FIELDS)),
            }
        }
        Ok(Person {
            id: id.ok_or_else(|| de::Error::missing_field("id"))?,
            pose: pose.ok_or_else(|| de::Error::missing_field("joints"))?,
        })
    }
}

#[derive(Clone, Copy)]
struct JointsSeed {
    joints: Option<usize>,
}

impl<'de> DeserializeSeed<'de> for JointsSeed {
    type Value = Pose;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Pose, D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for JointsSeed {
    type Value = Pose;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self.joints {
            Some(j) => write!(f, "an array of {j} joints"),
            None => f.write_str("an array of joints"),
        }
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Pose, A::Error> {
        let mut joints = Vec::with_capacity(self.joints.unwrap_or(17));
        while let Some(FinitePoint(p)) = seq.next_element()? {
            joints.push(p);
            if self.joints.is_some_and(|j| joints.len() > j) {
                return Err(de::Error::invalid_length(joints.len(), &self));
            }
        }
        if self.joints.is_some_and(|j| joints.len() != j) || joints.is_empty() {
            return Err(de::Error::invalid_length(joints.len(), &self));
        }
        Ok(Pose::from_joints_unchecked(joints))
    }
}

struct FinitePoint(Vec3);

impl<'de> de::Deserialize<'de> for FinitePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = <[f64; 3]>::deserialize(d)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(de::Error::custom("non-finite coordinate"));
        }
        Ok(FinitePoint(p))
    }
}
