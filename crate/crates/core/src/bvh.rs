//! BVH motion-capture text format.
//!
//! Rotation channels are in degrees and compose in channel order, so a joint
//! declaring `Zrotation Xrotation Yrotation` has local rotation
//! `Rz(a) * Rx(b) * Ry(c)` acting on column vectors.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::motion::{derive_velocities_in_place, MotionClip, Pose, Quat, Skeleton, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    fn parse(s: &str) -> Option<Channel> {
        Some(match s.to_ascii_lowercase().as_str() {
            "xposition" => Channel::Xposition,
            "yposition" => Channel::Yposition,
            "zposition" => Channel::Zposition,
            "xrotation" => Channel::Xrotation,
            "yrotation" => Channel::Yrotation,
            "zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }

    fn rotation_axis(self) -> Option<usize> {
        match self {
            Channel::Xrotation => Some(0),
            Channel::Yrotation => Some(1),
            Channel::Zrotation => Some(2),
            _ => None,
        }
    }

    fn position_axis(self) -> Option<usize> {
        match self {
            Channel::Xposition => Some(0),
            Channel::Yposition => Some(1),
            Channel::Zposition => Some(2),
            _ => None,
        }
    }
}

/// Proper Tait-Bryan orders; the name lists axes in composition order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EulerOrder {
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    Zyx,
}

impl EulerOrder {
    pub const ALL: [EulerOrder; 6] = [
        EulerOrder::Xyz,
        EulerOrder::Xzy,
        EulerOrder::Yxz,
        EulerOrder::Yzx,
        EulerOrder::Zxy,
        EulerOrder::Zyx,
    ];

    pub fn axes(self) -> [usize; 3] {
        match self {
            EulerOrder::Xyz => [0, 1, 2],
            EulerOrder::Xzy => [0, 2, 1],
            EulerOrder::Yxz => [1, 0, 2],
            EulerOrder::Yzx => [1, 2, 0],
            EulerOrder::Zxy => [2, 0, 1],
            EulerOrder::Zyx => [2, 1, 0],
        }
    }

    pub fn from_axes(axes: [usize; 3]) -> Option<EulerOrder> {
        EulerOrder::ALL.into_iter().find(|o| o.axes() == axes)
    }

    pub fn name(self) -> &'static str {
        match self {
            EulerOrder::Xyz => "XYZ",
            EulerOrder::Xzy => "XZY",
            EulerOrder::Yxz => "YXZ",
            EulerOrder::Yzx => "YZX",
            EulerOrder::Zxy => "ZXY",
            EulerOrder::Zyx => "ZYX",
        }
    }

    fn supported_list() -> String {
        EulerOrder::ALL.map(|o| o.name()).join(", ")
    }
}

impl FromStr for EulerOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EulerOrder::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unsupported rotation order `{s}`; supported: {}",
                    EulerOrder::supported_list()
                ))
            })
    }
}

/// Euler angles in degrees, listed in composition order.
pub fn euler_to_quat(order: EulerOrder, degrees: [f64; 3]) -> Quat {
    let [a, b, c] = order.axes();
    let q = |axis, deg: f64| Quat::about_axis(axis, deg.to_radians());
    q(a, degrees[0]).mul_raw(q(b, degrees[1])).mul_raw(q(c, degrees[2])).normalize()
}

/// Inverse of [`euler_to_quat`]; the middle angle lies in [-90, 90] degrees.
pub fn quat_to_euler(order: EulerOrder, q: Quat) -> [f64; 3] {
    let m = q.normalize().to_matrix();
    let [i, j, k] = order.axes();
    let sign = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sb = (sign * m[i][k]).clamp(-1.0, 1.0);
    let (a, b, c);
    if sb.abs() > 1.0 - 1e-12 {
        // gimbal lock: fold the third angle into the first
        b = sb.asin();
        c = 0.0;
        a = (sign * m[k][j]).atan2(m[j][j]);
    } else {
        b = sb.asin();
        a = (-sign * m[j][k]).atan2(m[k][k]);
        c = (-sign * m[i][j]).atan2(m[i][i]);
    }
    [a.to_degrees(), b.to_degrees(), c.to_degrees()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EndSite {
    pub parent: usize,
    pub offset: Vec3,
}

/// Parsed BVH file. Channel values are kept verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct BvhDocument {
    pub joints: Vec<BvhJoint>,
    pub end_sites: Vec<EndSite>,
    pub frames: Vec<Vec<f64>>,
    pub frame_time: f64,
}

impl BvhDocument {
    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// Derived skeleton. The root offset folds into the root position.
    pub fn skeleton(&self) -> Result<Skeleton> {
        let mut offsets: Vec<Vec3> = self.joints.iter().map(|j| j.offset).collect();
        offsets[0] = Vec3::ZERO;
        Skeleton::new(
            self.joints.iter().map(|j| j.name.clone()).collect(),
            self.joints.iter().map(|j| j.parent).collect(),
            offsets,
        )
    }

    /// Rotation order of joint `j`, or `None` when it has no rotation channels.
    pub fn rotation_order(&self, j: usize) -> Result<Option<EulerOrder>> {
        let axes: Vec<usize> = self.joints[j]
            .channels
            .iter()
            .filter_map(|c| c.rotation_axis())
            .collect();
        if axes.is_empty() {
            return Ok(None);
        }
        let order = <[usize; 3]>::try_from(axes.as_slice())
            .ok()
            .and_then(EulerOrder::from_axes);
        match order {
            Some(o) => Ok(Some(o)),
            None => {
                let declared: Vec<&str> = self.joints[j]
                    .channels
                    .iter()
                    .filter(|c| c.rotation_axis().is_some())
                    .map(|c| c.name())
                    .collect();
                Err(Error::invalid(format!(
                    "joint `{}` has unsupported rotation channels [{}]; supported orders: {}",
                    self.joints[j].name,
                    declared.join(" "),
                    EulerOrder::supported_list()
                )))
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("HIERARCHY\n");
        let mut sites_by_parent = vec![Vec::new(); self.joints.len()];
        for site in &self.end_sites {
            sites_by_parent[site.parent].push(site.offset);
        }
        self.write_joint(&mut out, 0, 0, &sites_by_parent);
        out.push_str("MOTION\n");
        let _ = writeln!(out, "Frames: {}", self.frames.len());
        let _ = writeln!(out, "Frame Time: {:.8}", self.frame_time);
        // rows follow the depth-first order in which joints were written
        let mut starts = Vec::with_capacity(self.joints.len());
        let mut col = 0;
        for joint in &self.joints {
            starts.push(col);
            col += joint.channels.len();
        }
        let order = self.depth_first_order();
        for row in &self.frames {
            let line: Vec<String> = order
                .iter()
                .flat_map(|&j| &row[starts[j]..starts[j] + self.joints[j].channels.len()])
                .map(|v| format!("{v:.6}"))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    fn depth_first_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.joints.len());
        let mut stack = vec![0];
        while let Some(j) = stack.pop() {
            order.push(j);
            let children: Vec<usize> = (0..self.joints.len())
                .filter(|&c| self.joints[c].parent == Some(j))
                .collect();
            stack.extend(children.into_iter().rev());
        }
        order
    }

    fn write_joint(&self, out: &mut String, j: usize, depth: usize, sites: &[Vec<Vec3>]) {
        let pad = "\t".repeat(depth);
        let joint = &self.joints[j];
        let kind = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
        let _ = writeln!(out, "{pad}{kind} {}", joint.name);
        let _ = writeln!(out, "{pad}{{");
        let o = joint.offset;
        let _ = writeln!(out, "{pad}\tOFFSET {:.6} {:.6} {:.6}", o.x, o.y, o.z);
        let names: Vec<&str> = joint.channels.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "{pad}\tCHANNELS {} {}", names.len(), names.join(" "));
        for c in (0..self.joints.len()).filter(|&c| self.joints[c].parent == Some(j)) {
            self.write_joint(out, c, depth + 1, sites);
        }
        for s in &sites[j] {
            let _ = writeln!(out, "{pad}\tEnd Site");
            let _ = writeln!(out, "{pad}\t{{");
            let _ = writeln!(out, "{pad}\t\tOFFSET {:.6} {:.6} {:.6}", s.x, s.y, s.z);
            let _ = writeln!(out, "{pad}\t}}");
        }
        let _ = writeln!(out, "{pad}}}");
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::parse(self.last_line, "unexpected end of HIERARCHY section (unterminated brace?)"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, want: &str) -> Result<usize> {
        let (line, tok) = self.next()?;
        if tok != want {
            return Err(Error::parse(line, format!("expected `{want}`, found `{tok}`")));
        }
        Ok(line)
    }

    fn number(&mut self) -> Result<f64> {
        let (line, tok) = self.next()?;
        tok.parse()
            .map_err(|_| Error::parse(line, format!("expected a number, found `{tok}`")))
    }
}

pub fn parse_bvh(text: &str) -> Result<BvhDocument> {
    let lines: Vec<&str> = text.lines().collect();
    let motion_at = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or_else(|| Error::parse(lines.len().max(1), "missing MOTION section"))?;

    let mut tokens = Tokens {
        items: lines[..motion_at]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect(),
        pos: 0,
        last_line: motion_at + 1,
    };
    tokens.expect("HIERARCHY")?;
    tokens.expect("ROOT")?;
    let mut joints = Vec::new();
    let mut end_sites = Vec::new();
    parse_joint(&mut tokens, None, &mut joints, &mut end_sites)?;
    if let Some(extra) = tokens.items.get(tokens.pos) {
        return Err(Error::parse(
            extra.0,
            format!("unexpected `{}` after the root joint", extra.1),
        ));
    }

    let mut rest = lines
        .iter()
        .enumerate()
        .skip(motion_at + 1)
        .filter(|(_, l)| !l.trim().is_empty());
    let header = |entry: Option<(usize, &&str)>, key: &str| -> Result<(usize, String)> {
        let (i, l) = entry.ok_or_else(|| Error::parse(lines.len(), format!("missing `{key}` line")))?;
        let t = l.trim();
        let v = t
            .strip_prefix(key)
            .ok_or_else(|| Error::parse(i + 1, format!("expected `{key}`, found `{t}`")))?;
        Ok((i + 1, v.trim().to_string()))
    };
    let (line, count) = header(rest.next(), "Frames:")?;
    let frame_count: usize = count
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid frame count `{count}`")))?;
    let (line, ft) = header(rest.next(), "Frame Time:")?;
    let frame_time: f64 = ft
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid frame time `{ft}`")))?;
    if !(frame_time > 0.0) {
        return Err(Error::parse(line, "frame time must be positive"));
    }

    let width: usize = joints.iter().map(|j: &BvhJoint| j.channels.len()).sum();
    let mut frames = Vec::with_capacity(frame_count);
    for (i, l) in rest {
        let row = frames.len();
        let values = l
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::parse(i + 1, format!("frame {row}: non-numeric value `{v}`"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != width {
            return Err(Error::parse(
                i + 1,
                format!(
                    "frame {row} has {} values but {width} channels are declared",
                    values.len()
                ),
            ));
        }
        frames.push(values);
    }
    if frames.len() != frame_count {
        return Err(Error::parse(
            lines.len(),
            format!("declared {frame_count} frames, found {}", frames.len()),
        ));
    }
    Ok(BvhDocument {
        joints,
        end_sites,
        frames,
        frame_time,
    })
}

fn parse_joint(
    t: &mut Tokens<'_>,
    parent: Option<usize>,
    joints: &mut Vec<BvhJoint>,
    end_sites: &mut Vec<EndSite>,
) -> Result<()> {
    let (line, name) = t.next()?;
    if name == "{" {
        return Err(Error::parse(line, "joint name missing"));
    }
    t.expect("{")?;
    t.expect("OFFSET")?;
    let offset = Vec3::new(t.number()?, t.number()?, t.number()?);
    let index = joints.len();
    joints.push(BvhJoint {
        name: name.to_string(),
        parent,
        offset,
        channels: Vec::new(),
    });
    if t.peek() == Some("CHANNELS") {
        let (line, _) = t.next()?;
        let (_, n) = t.next()?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid channel count `{n}`")))?;
        for k in 0..n {
            let (cl, c) = t.next()?;
            let ch = Channel::parse(c).ok_or_else(|| {
                Error::parse(
                    cl,
                    format!("joint `{name}` declares {n} channels but entry {k} is `{c}`"),
                )
            })?;
            joints[index].channels.push(ch);
        }
    }
    loop {
        let (line, tok) = t.next()?;
        match tok {
            "JOINT" => parse_joint(t, Some(index), joints, end_sites)?,
            "End" => {
                t.expect("Site")?;
                t.expect("{")?;
                t.expect("OFFSET")?;
                let o = Vec3::new(t.number()?, t.number()?, t.number()?);
                t.expect("}")?;
                end_sites.push(EndSite {
                    parent: index,
                    offset: o,
                });
            }
            "}" => return Ok(()),
            other => {
                return Err(Error::parse(
                    line,
                    format!("unexpected `{other}` in joint `{name}`"),
                ))
            }
        }
    }
}

/// Converts Euler channels to quaternions. Frame 0 is canonicalized to
/// `w >= 0` and later frames are sign-aligned with their predecessor.
pub fn to_clip(doc: &BvhDocument) -> Result<MotionClip> {
    let skeleton = Arc::new(doc.skeleton()?);
    let orders = (0..doc.joints.len())
        .map(|j| doc.rotation_order(j))
        .collect::<Result<Vec<_>>>()?;
    let mut layout = Vec::with_capacity(doc.joints.len());
    let mut col = 0;
    for joint in &doc.joints {
        layout.push(col);
        col += joint.channels.len();
    }
    let root_offset = doc.joints[0].offset;

    let mut frames: Vec<Pose> = Vec::with_capacity(doc.frames.len());
    for row in &doc.frames {
        let mut pose = Pose::identity(doc.joints.len());
        let mut root = root_offset;
        for (j, joint) in doc.joints.iter().enumerate() {
            let mut angles = [0.0; 3];
            let mut k = 0;
            for (c, ch) in joint.channels.iter().enumerate() {
                let v = row[layout[j] + c];
                if ch.rotation_axis().is_some() {
                    angles[k] = v;
                    k += 1;
                } else if j == 0 {
                    let axis = ch.position_axis().expect("position channel");
                    match axis {
                        0 => root.x = root_offset.x + v,
                        1 => root.y = root_offset.y + v,
                        _ => root.z = root_offset.z + v,
                    }
                }
            }
            if let Some(order) = orders[j] {
                pose.local_rotations[j] = euler_to_quat(order, angles);
            }
        }
        pose.root_position = root;
        if let Some(prev) = frames.last() {
            for (q, p) in pose.local_rotations.iter_mut().zip(&prev.local_rotations) {
                if q.dot(*p) < 0.0 {
                    *q = -*q;
                }
            }
        } else {
            for q in &mut pose.local_rotations {
                *q = q.canonical();
            }
        }
        frames.push(pose);
    }
    if frames.len() >= 2 {
        derive_velocities_in_place(&mut frames)?;
    }
    MotionClip::new(skeleton, frames, 1.0 / doc.frame_time)
}

/// Document for a clip: the root carries three position channels, every joint
/// three rotation channels in `order`.
pub fn clip_to_document(clip: &MotionClip, order: EulerOrder) -> BvhDocument {
    let skel = &clip.skeleton;
    let rot_channels: Vec<Channel> = order
        .axes()
        .iter()
        .map(|a| [Channel::Xrotation, Channel::Yrotation, Channel::Zrotation][*a])
        .collect();
    let joints = (0..skel.len())
        .map(|j| {
            let mut channels = Vec::new();
            if j == 0 {
                channels.extend([Channel::Xposition, Channel::Yposition, Channel::Zposition]);
            }
            channels.extend(rot_channels.iter().copied());
            BvhJoint {
                name: skel.joint_names()[j].clone(),
                parent: skel.parent(j),
                offset: skel.offsets()[j],
                channels,
            }
        })
        .collect();
    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let mut row = Vec::with_capacity(3 + 3 * skel.len());
            row.extend(f.root_position.to_array());
            for q in &f.local_rotations {
                row.extend(quat_to_euler(order, *q));
            }
            row
        })
        .collect();
    BvhDocument {
        joints,
        end_sites: Vec::new(),
        frames,
        frame_time: 1.0 / clip.frame_rate,
    }
}

pub fn emit_bvh(clip: &MotionClip, order: EulerOrder) -> String {
    clip_to_document(clip, order).to_text()
}
