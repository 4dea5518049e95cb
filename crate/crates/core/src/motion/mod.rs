//! Skeleton, quaternion algebra, forward kinematics and per-frame state.

mod clip;
mod fk;
mod quat;
mod skeleton;

pub use clip::{
    derive_velocities, extract_contacts, ContactThresholds, MotionClip, Pose, CONTACT_COUNT,
};
pub(crate) use clip::derive_velocities_in_place;
pub use fk::{forward_kinematics, forward_kinematics_full};
pub use quat::{quat_multiply, Quat, Vec3};
pub use skeleton::{Skeleton, DEFAULT_CONTACT_JOINTS};
