use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Joint names probed, in order, for the four contact joints
/// (left ankle, left toe, right ankle, right toe).
pub const DEFAULT_CONTACT_JOINTS: [&[&str]; 4] = [
    &["LeftFoot", "LeftAnkle", "lAnkle"],
    &["LeftToe", "LeftToeBase", "LeftToes", "lToe"],
    &["RightFoot", "RightAnkle", "rAnkle"],
    &["RightToe", "RightToeBase", "RightToes", "rToe"],
];

/// Joint hierarchy with bone offsets. Parents always precede children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joint_names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    contact_joints: Option<[usize; 4]>,
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vec3>,
    ) -> Result<Self> {
        let n = joint_names.len();
        if n == 0 {
            return Err(Error::shape("skeleton has no joints"));
        }
        if parents.len() != n || offsets.len() != n {
            return Err(Error::shape(format!(
                "skeleton arrays disagree: {n} names, {} parents, {} offsets",
                parents.len(),
                offsets.len()
            )));
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 || parents[0].is_some() {
            return Err(Error::shape(format!(
                "skeleton must have exactly one root at index 0, found {roots} roots"
            )));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(Error::shape(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
                None => unreachable!(),
            }
        }
        if offsets[0] != Vec3::ZERO {
            return Err(Error::shape("root offset must be the zero vector"));
        }
        let mut skel = Skeleton {
            joint_names,
            parents,
            offsets,
            contact_joints: None,
        };
        skel.contact_joints = skel.find_default_contacts();
        Ok(skel)
    }

    fn find_default_contacts(&self) -> Option<[usize; 4]> {
        let mut out = [0usize; 4];
        for (slot, candidates) in DEFAULT_CONTACT_JOINTS.iter().enumerate() {
            out[slot] = candidates.iter().find_map(|c| self.index_of(c))?;
        }
        Some(out)
    }

    /// Override the contact joints by name.
    pub fn with_contact_joints(mut self, names: &[String; 4]) -> Result<Self> {
        let mut out = [0usize; 4];
        for (slot, name) in names.iter().enumerate() {
            out[slot] = self
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("contact joint `{name}` not in skeleton")))?;
        }
        self.contact_joints = Some(out);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.joint_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joint_names.is_empty()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn children(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(j))
            .map(|(c, _)| c)
    }

    pub fn contact_joints(&self) -> Result<[usize; 4]> {
        self.contact_joints.ok_or_else(|| {
            Error::Config("skeleton has no contact joints (ankles and toes) configured".into())
        })
    }

    /// Small biped used by the procedural gait generator and the tests.
    /// Y is up, characters face +X, lengths are centimeters.
    pub fn synthetic_biped() -> Self {
        let spec: [(&str, Option<usize>, [f64; 3]); 11] = [
            ("Hips", None, [0.0, 0.0, 0.0]),
            ("Spine", Some(0), [0.0, 20.0, 0.0]),
            ("Head", Some(1), [0.0, 40.0, 0.0]),
            ("LeftUpLeg", Some(0), [0.0, -5.0, -10.0]),
            ("LeftLeg", Some(3), [0.0, -45.0, 0.0]),
            ("LeftFoot", Some(4), [0.0, -45.0, 0.0]),
            ("LeftToe", Some(5), [12.0, -3.0, 0.0]),
            ("RightUpLeg", Some(0), [0.0, -5.0, 10.0]),
            ("RightLeg", Some(7), [0.0, -45.0, 0.0]),
            ("RightFoot", Some(8), [0.0, -45.0, 0.0]),
            ("RightToe", Some(9), [12.0, -3.0, 0.0]),
        ];
        Skeleton::new(
            spec.iter().map(|s| s.0.to_string()).collect(),
            spec.iter().map(|s| s.1).collect(),
            spec.iter().map(|s| Vec3::from_array(s.2)).collect(),
        )
        .expect("built-in skeleton is valid")
    }

    /// Checks name, topology and offsets agree (contact joints ignored).
    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.joint_names == other.joint_names && self.parents == other.parents
    }
}
