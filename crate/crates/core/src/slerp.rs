//! Deterministic baseline: linear root motion and spherical rotation blending
//! between the two keyframes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::motion::{MotionClip, Pose, Quat, Skeleton};

/// Constant angular velocity interpolation along the shorter arc.
pub fn slerp(a: Quat, b: Quat, t: f64) -> Quat {
    let mut d = a.dot(b);
    let b = if d < 0.0 {
        d = -d;
        -b
    } else {
        b
    };
    if d > 1.0 - 1e-6 {
        return Quat::new(
            a.w + (b.w - a.w) * t,
            a.x + (b.x - a.x) * t,
            a.y + (b.y - a.y) * t,
            a.z + (b.z - a.z) * t,
        )
        .normalize();
    }
    let theta = d.min(1.0).acos();
    let s = theta.sin();
    let ka = ((1.0 - t) * theta).sin() / s;
    let kb = (t * theta).sin() / s;
    Quat::new(
        ka * a.w + kb * b.w,
        ka * a.x + kb * b.x,
        ka * a.y + kb * b.y,
        ka * a.z + kb * b.z,
    )
}

/// `length + 2` frames: the two keyframes verbatim with `length` interpolated
/// frames between them at parameters `t / (length + 1)`.
pub fn interpolate_transition(
    skeleton: Arc<Skeleton>,
    start: &Pose,
    end: &Pose,
    length: usize,
    frame_rate: f64,
) -> Result<MotionClip> {
    if length < 1 {
        return Err(Error::invalid("transition length must be at least 1"));
    }
    start.validate(&skeleton)?;
    end.validate(&skeleton)?;
    let steps = (length + 1) as f64;
    let mut frames = Vec::with_capacity(length + 2);
    frames.push(start.clone());
    for t in 1..=length {
        let u = t as f64 / steps;
        let rotations = start
            .local_rotations
            .iter()
            .zip(&end.local_rotations)
            .map(|(a, b)| slerp(*a, *b, u))
            .collect();
        let root_position = start.root_position.lerp(end.root_position, u);
        let root_velocity = root_position - frames[t - 1].root_position;
        let contacts = if u <= 0.5 { start.contacts } else { end.contacts };
        frames.push(Pose {
            root_position,
            root_velocity,
            local_rotations: rotations,
            contacts,
        });
    }
    frames.push(end.clone());
    MotionClip::new(skeleton, frames, frame_rate)
}
