//! Binary clip cache. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "MSTC"
//! version      u32      1
//! joints       u32      J
//! clips        u32      C
//! frames       u64      total frame count over all clips
//! frame_rate   f32
//! skeleton     J records: parent i32 (-1 for the root), offset 3 x f32,
//!              name length u16, name bytes (UTF-8)
//! contacts     4 x i32  joint indices of the contact joints, -1 if unset
//! lengths      C x u32  frames per clip
//! frames       per frame: root position 3 x f32, root velocity 3 x f32,
//!              rotations J x 4 x f32 (w, x, y, z), contacts 4 x u8 (0 or 1)
//! ```

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::motion::{MotionClip, Pose, Quat, Skeleton, Vec3, CONTACT_COUNT};

pub const MAGIC: &[u8; 4] = b"MSTC";
pub const VERSION: u32 = 1;

pub fn write_cache(out: &mut impl Write, clips: &[MotionClip]) -> Result<()> {
    let first = clips
        .first()
        .ok_or_else(|| Error::invalid("cannot cache an empty clip list"))?;
    let skel = &first.skeleton;
    if clips.iter().any(|c| !c.same_skeleton(first)) {
        return Err(Error::shape("cached clips must share one skeleton"));
    }
    let total: u64 = clips.iter().map(|c| c.len() as u64).sum();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(skel.len() as u32).to_le_bytes())?;
    out.write_all(&(clips.len() as u32).to_le_bytes())?;
    out.write_all(&total.to_le_bytes())?;
    out.write_all(&(first.frame_rate as f32).to_le_bytes())?;
    let f32s = |out: &mut dyn Write, v: &[f64]| -> std::io::Result<()> {
        for x in v {
            out.write_all(&(*x as f32).to_le_bytes())?;
        }
        Ok(())
    };
    for j in 0..skel.len() {
        let parent = skel.parent(j).map_or(-1, |p| p as i32);
        out.write_all(&parent.to_le_bytes())?;
        f32s(out, &skel.offsets()[j].to_array())?;
        let name = skel.joint_names()[j].as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format("joint name too long".into()))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name)?;
    }
    let contacts = skel.contact_joints().map(|c| c.map(|j| j as i32)).unwrap_or([-1; 4]);
    for c in contacts {
        out.write_all(&c.to_le_bytes())?;
    }
    for c in clips {
        out.write_all(&(c.len() as u32).to_le_bytes())?;
    }
    for c in clips {
        for f in &c.frames {
            f32s(out, &f.root_position.to_array())?;
            f32s(out, &f.root_velocity.to_array())?;
            for q in &f.local_rotations {
                f32s(out, &q.to_array())?;
            }
            out.write_all(&f.contacts.map(u8::from))?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated cache: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.bytes()?) as f64)
    }
    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }
}

pub fn read_cache(input: &mut impl Read) -> Result<Vec<MotionClip>> {
    let mut r = Reader { inner: input };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Format("not a clip cache (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let joints = r.u32()? as usize;
    let clip_count = r.u32()? as usize;
    let total = u64::from_le_bytes(r.bytes()?);
    let frame_rate = r.f32()?;
    let mut names = Vec::with_capacity(joints);
    let mut parents = Vec::with_capacity(joints);
    let mut offsets = Vec::with_capacity(joints);
    for _ in 0..joints {
        let p = r.i32()?;
        parents.push(if p < 0 { None } else { Some(p as usize) });
        offsets.push(r.vec3()?);
        let len = u16::from_le_bytes(r.bytes()?) as usize;
        let mut name = vec![0u8; len];
        r.inner
            .read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated cache: {e}")))?;
        names.push(String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?);
    }
    let mut skel = Skeleton::new(names, parents, offsets)?;
    let contacts: Vec<i32> = (0..CONTACT_COUNT).map(|_| r.i32()).collect::<Result<_>>()?;
    if contacts.iter().all(|&c| c >= 0 && (c as usize) < joints) {
        let names: [String; 4] = std::array::from_fn(|i| skel.joint_names()[contacts[i] as usize].clone());
        skel = skel.with_contact_joints(&names)?;
    }
    let skel = Arc::new(skel);
    let lengths: Vec<usize> = (0..clip_count).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    if lengths.iter().map(|&l| l as u64).sum::<u64>() != total {
        return Err(Error::Format("clip lengths disagree with the frame count".into()));
    }
    let mut clips = Vec::with_capacity(clip_count);
    for len in lengths {
        let mut frames = Vec::with_capacity(len);
        for _ in 0..len {
            let root_position = r.vec3()?;
            let root_velocity = r.vec3()?;
            let local_rotations = (0..joints)
                .map(|_| Ok(Quat::new(r.f32()?, r.f32()?, r.f32()?, r.f32()?)))
                .collect::<Result<Vec<_>>>()?;
            let contacts = r.bytes::<CONTACT_COUNT>()?.map(|b| b != 0);
            frames.push(Pose {
                root_position,
                root_velocity,
                local_rotations,
                contacts,
            });
        }
        clips.push(MotionClip::new(skel.clone(), frames, frame_rate)?);
    }
    Ok(clips)
}

pub fn save_cache(path: &Path, clips: &[MotionClip]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_cache(&mut w, clips)?;
    w.flush()?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<Vec<MotionClip>> {
    let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_cache(&mut std::io::BufReader::new(f))
}
