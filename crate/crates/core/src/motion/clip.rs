use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{forward_kinematics, Quat, Skeleton, Vec3};
use crate::error::{Error, Result};

pub const CONTACT_COUNT: usize = 4;

/// One frame of character state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub root_position: Vec3,
    /// Root displacement since the previous frame, in length units per frame.
    pub root_velocity: Vec3,
    pub local_rotations: Vec<Quat>,
    /// Left ankle, left toe, right ankle, right toe.
    pub contacts: [bool; CONTACT_COUNT],
}

impl Pose {
    pub fn identity(joints: usize) -> Self {
        Pose {
            root_position: Vec3::ZERO,
            root_velocity: Vec3::ZERO,
            local_rotations: vec![Quat::IDENTITY; joints],
            contacts: [false; CONTACT_COUNT],
        }
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.local_rotations.len() != skeleton.len() {
            return Err(Error::shape(format!(
                "pose has {} rotations, skeleton has {} joints",
                self.local_rotations.len(),
                skeleton.len()
            )));
        }
        if let Some(j) = self.local_rotations.iter().position(|q| !q.is_unit(1e-6)) {
            return Err(Error::shape(format!(
                "rotation of joint {j} is not unit length: {:?}",
                self.local_rotations[j]
            )));
        }
        Ok(())
    }

    pub fn global_positions(&self, skeleton: &Skeleton) -> Result<Vec<Vec3>> {
        forward_kinematics(skeleton, self.root_position, &self.local_rotations)
    }
}

/// Ordered pose sequence at a fixed frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub skeleton: Arc<Skeleton>,
    pub frames: Vec<Pose>,
    pub frame_rate: f64,
}

impl MotionClip {
    pub fn new(skeleton: Arc<Skeleton>, frames: Vec<Pose>, frame_rate: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::shape("motion clip has no frames"));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate must be positive, got {frame_rate}")));
        }
        for (t, f) in frames.iter().enumerate() {
            f.validate(&skeleton)
                .map_err(|e| Error::shape(format!("frame {t}: {e}")))?;
        }
        Ok(MotionClip {
            skeleton,
            frames,
            frame_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Global joint positions, `[frame][joint]`.
    pub fn global_positions(&self) -> Result<Vec<Vec<Vec3>>> {
        self.frames
            .iter()
            .map(|f| f.global_positions(&self.skeleton))
            .collect()
    }

    /// Copy of frames `start..start+len` sharing the skeleton.
    pub fn slice(&self, start: usize, len: usize) -> Result<MotionClip> {
        if len == 0 || start + len > self.len() {
            return Err(Error::shape(format!(
                "slice {start}..{} out of range for a {}-frame clip",
                start + len,
                self.len()
            )));
        }
        Ok(MotionClip {
            skeleton: self.skeleton.clone(),
            frames: self.frames[start..start + len].to_vec(),
            frame_rate: self.frame_rate,
        })
    }

    pub fn same_skeleton(&self, other: &MotionClip) -> bool {
        Arc::ptr_eq(&self.skeleton, &other.skeleton) || *self.skeleton == *other.skeleton
    }
}

/// Recomputes root velocities as backward differences of root positions.
/// Frame 0 copies frame 1.
pub fn derive_velocities(clip: &MotionClip) -> Result<MotionClip> {
    let mut out = clip.clone();
    derive_velocities_in_place(&mut out.frames)?;
    Ok(out)
}

pub(crate) fn derive_velocities_in_place(frames: &mut [Pose]) -> Result<()> {
    if frames.len() < 2 {
        return Err(Error::shape("velocities need at least 2 frames"));
    }
    for t in (1..frames.len()).rev() {
        frames[t].root_velocity = frames[t].root_position - frames[t - 1].root_position;
    }
    frames[0].root_velocity = frames[1].root_velocity;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactThresholds {
    /// Length units per frame.
    pub speed: f64,
    /// Length units above the ground plane.
    pub height: f64,
    /// Index of the vertical axis (1 for Y-up data).
    pub up_axis: usize,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        ContactThresholds {
            speed: 0.2,
            height: 8.0,
            up_axis: 1,
        }
    }
}

/// Flags a contact joint when it is both slow and low. Speed is a central
/// difference in the interior and a one-sided difference at the clip ends.
pub fn extract_contacts(clip: &MotionClip, thresholds: &ContactThresholds) -> Result<MotionClip> {
    let n = clip.len();
    if n < 2 {
        return Err(Error::shape("contact extraction needs at least 2 frames"));
    }
    let joints = clip.skeleton.contact_joints()?;
    let positions = clip.global_positions()?;
    let mut out = clip.clone();
    for t in 0..n {
        let (a, b, span) = match t {
            0 => (0, 1, 1.0),
            t if t == n - 1 => (n - 2, n - 1, 1.0),
            t => (t - 1, t + 1, 2.0),
        };
        for (slot, &j) in joints.iter().enumerate() {
            let speed = (positions[b][j] - positions[a][j]).norm() / span;
            let height = positions[t][j].get(thresholds.up_axis);
            out.frames[t].contacts[slot] = speed < thresholds.speed && height < thresholds.height;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn clip_from_roots(roots: &[Vec3]) -> MotionClip {
        let skel = Arc::new(Skeleton::synthetic_biped());
        let frames = roots
            .iter()
            .map(|&r| Pose {
                root_position: r,
                ..Pose::identity(skel.len())
            })
            .collect();
        MotionClip::new(skel, frames, 30.0).unwrap()
    }

    #[test]
    fn constant_root_has_zero_velocity() {
        let clip = derive_velocities(&clip_from_roots(&[Vec3::new(1.0, 2.0, 3.0); 5])).unwrap();
        assert!(clip.frames.iter().all(|f| f.root_velocity == Vec3::ZERO));
    }

    #[test]
    fn linear_root_has_constant_velocity() {
        let roots: Vec<Vec3> = (0..10).map(|t| Vec3::new(0.1 * t as f64, 0.0, 0.0)).collect();
        let clip = derive_velocities(&clip_from_roots(&roots)).unwrap();
        for f in &clip.frames {
            assert!((f.root_velocity - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn random_walk_velocities_match_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut p = Vec3::ZERO;
        let roots: Vec<Vec3> = (0..40)
            .map(|_| {
                p += Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0));
                p
            })
            .collect();
        let clip = derive_velocities(&clip_from_roots(&roots)).unwrap();
        let mut expect = vec![Vec3::ZERO; roots.len()];
        for t in 1..roots.len() {
            expect[t] = roots[t] - roots[t - 1];
        }
        expect[0] = expect[1];
        for (f, e) in clip.frames.iter().zip(&expect) {
            assert_eq!(f.root_velocity, *e);
        }
    }

    #[test]
    fn single_frame_is_an_error() {
        let clip = clip_from_roots(&[Vec3::ZERO]);
        assert!(derive_velocities(&clip).is_err());
        assert!(extract_contacts(&clip, &ContactThresholds::default()).is_err());
    }

    // Root low enough that the ankles sit at y = 5 and toes at y = 2.
    const GROUNDED_ROOT_Y: f64 = 100.0;

    #[test]
    fn stationary_grounded_feet_are_in_contact() {
        let clip = clip_from_roots(&[Vec3::new(0.0, GROUNDED_ROOT_Y, 0.0); 6]);
        let out = extract_contacts(&clip, &ContactThresholds::default()).unwrap();
        assert!(out.frames.iter().all(|f| f.contacts == [true; 4]));
    }

    #[test]
    fn fast_feet_are_not_in_contact() {
        let roots: Vec<Vec3> = (0..6)
            .map(|t| Vec3::new(2.0 * t as f64, GROUNDED_ROOT_Y, 0.0))
            .collect();
        let out = extract_contacts(&clip_from_roots(&roots), &ContactThresholds::default()).unwrap();
        assert!(out.frames.iter().all(|f| f.contacts == [false; 4]));
    }

    #[test]
    fn lifted_feet_are_not_in_contact() {
        let clip = clip_from_roots(&[Vec3::new(0.0, GROUNDED_ROOT_Y + 10.0, 0.0); 4]);
        let out = extract_contacts(&clip, &ContactThresholds::default()).unwrap();
        assert!(out.frames.iter().all(|f| f.contacts == [false; 4]));
    }

    proptest::proptest! {
        #[test]
        fn contacts_invariant_to_horizontal_shift(dx in -500.0f64..500.0, dz in -500.0f64..500.0, seed in 0u64..100) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let roots: Vec<Vec3> = (0..8)
                .map(|_| Vec3::new(rng.random_range(-0.2..0.2), GROUNDED_ROOT_Y + rng.random_range(-4.0..4.0), 0.0))
                .collect();
            let shifted: Vec<Vec3> = roots.iter().map(|r| *r + Vec3::new(dx, 0.0, dz)).collect();
            let th = ContactThresholds::default();
            let a = extract_contacts(&clip_from_roots(&roots), &th).unwrap();
            let b = extract_contacts(&clip_from_roots(&shifted), &th).unwrap();
            let fa: Vec<_> = a.frames.iter().map(|f| f.contacts).collect();
            let fb: Vec<_> = b.frames.iter().map(|f| f.contacts).collect();
            proptest::prop_assert_eq!(fa, fb);
        }
    }
}
