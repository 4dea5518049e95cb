//! Corpus construction: fragment windows, time reversal, procedural gait and
//! the declarative dataset config.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bvh;
use crate::error::{Error, Result};
use crate::motion::{
    derive_velocities_in_place, extract_contacts, ContactThresholds, MotionClip, Pose, Quat,
    Skeleton, Vec3, CONTACT_COUNT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub offset: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window: 50,
            offset: 20,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.offset < 1 {
            return Err(Error::Config(format!(
                "window must be >= 3 and offset >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Fragments {
    pub clips: Vec<MotionClip>,
    /// Source clips too short to yield a single window.
    pub skipped: usize,
}

/// Sliding windows over each clip in order; fragment `f` of a clip starts at
/// frame `f * offset`.
pub fn make_fragments(clips: &[MotionClip], spec: WindowSpec) -> Result<Fragments> {
    spec.validate()?;
    let mut out = Fragments::default();
    for clip in clips {
        if clip.len() < spec.window {
            out.skipped += 1;
            continue;
        }
        let mut start = 0;
        while start + spec.window <= clip.len() {
            out.clips.push(clip.slice(start, spec.window)?);
            start += spec.offset;
        }
    }
    Ok(out)
}

/// Frames in reverse order with velocities re-derived in reversed time.
pub fn reverse_clip(clip: &MotionClip) -> Result<MotionClip> {
    if clip.len() < 2 {
        return Err(Error::shape("reversal needs at least 2 frames"));
    }
    let mut frames: Vec<Pose> = clip.frames.iter().rev().cloned().collect();
    derive_velocities_in_place(&mut frames)?;
    Ok(MotionClip {
        skeleton: clip.skeleton.clone(),
        frames,
        frame_rate: clip.frame_rate,
    })
}

/// Procedural walk along +X on a Y-up biped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    /// Frames per gait cycle.
    pub period: usize,
    /// Fraction of the cycle with the foot planted.
    pub stance_fraction: f64,
    /// Cycle offset of frame 0, in frames.
    pub start_frame: usize,
    pub root_height: f64,
    pub bob: f64,
    /// Ankle height while planted.
    pub ankle_height: f64,
    pub lift: f64,
    pub sway_degrees: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            period: 30,
            stance_fraction: 0.6,
            start_frame: 0,
            root_height: 85.0,
            bob: 1.0,
            ankle_height: 6.0,
            lift: 12.0,
            sway_degrees: 4.0,
        }
    }
}

/// A generated walk together with its constructed contact schedule and
/// per-foot phase (in cycles, measured from the detectable contact onset).
#[derive(Clone, Debug)]
pub struct SynthGait {
    pub clip: MotionClip,
    pub contacts: Vec<[bool; CONTACT_COUNT]>,
    pub phases: Vec<[f64; 2]>,
}

struct Leg {
    hip: usize,
    knee: usize,
    ankle: usize,
    toe: usize,
    thigh: f64,
    shin: f64,
    shift: usize,
}

fn leg(skel: &Skeleton, side: &str, shift: usize) -> Result<Leg> {
    let find = |name: String| {
        skel.index_of(&name)
            .ok_or_else(|| Error::Config(format!("gait skeleton lacks joint `{name}`")))
    };
    let hip = find(format!("{side}UpLeg"))?;
    let knee = find(format!("{side}Leg"))?;
    let ankle = find(format!("{side}Foot"))?;
    let toe = find(format!("{side}Toe"))?;
    let vertical = |j: usize| -> Result<f64> {
        let o = skel.offsets()[j];
        if o.x != 0.0 || o.z != 0.0 || o.y >= 0.0 {
            return Err(Error::Config(format!(
                "gait skeleton expects joint {j} straight below its parent, offset {o:?}"
            )));
        }
        Ok(-o.y)
    };
    if skel.parent(hip) != Some(0) || skel.parent(knee) != Some(hip) || skel.parent(ankle) != Some(knee) {
        return Err(Error::Config(format!("unexpected {side} leg topology")));
    }
    Ok(Leg {
        hip,
        knee,
        ankle,
        toe,
        thigh: vertical(knee)?,
        shin: vertical(ankle)?,
        shift,
    })
}

pub fn synth_gait(duration: usize, speed: f64, skeleton: Arc<Skeleton>) -> Result<MotionClip> {
    Ok(synth_gait_with(duration, speed, skeleton, &GaitParams::default())?.clip)
}

pub fn synth_gait_with(
    duration: usize,
    speed: f64,
    skeleton: Arc<Skeleton>,
    params: &GaitParams,
) -> Result<SynthGait> {
    if duration < 2 {
        return Err(Error::invalid("gait duration must be at least 2 frames"));
    }
    let p = params.period;
    let stance = (params.stance_fraction * p as f64).round() as usize;
    if p < 4 || stance < 3 || stance >= p {
        return Err(Error::invalid(format!("degenerate gait cycle {params:?}")));
    }
    let legs = [leg(&skeleton, "Left", 0)?, leg(&skeleton, "Right", p / 2)?];
    let spine = skeleton.index_of("Spine");
    let pf = p as f64;

    let cycle = |t: usize, leg: &Leg| -> (usize, usize) {
        let s = t + params.start_frame + leg.shift;
        (s / p, s % p)
    };
    // foot x at the start of stance in cycle n, frame-relative to clip start
    let plant_x = |n: usize, leg: &Leg| -> f64 {
        let onset = (n * p) as f64 - (params.start_frame + leg.shift) as f64;
        speed * onset + speed * stance as f64 / 2.0
    };

    let mut frames = Vec::with_capacity(duration);
    for t in 0..duration {
        let tf = t as f64;
        let root = Vec3::new(
            speed * tf,
            params.root_height + params.bob * (4.0 * PI * tf / pf).cos(),
            0.0,
        );
        let mut pose = Pose::identity(skeleton.len());
        pose.root_position = root;
        if let Some(s) = spine {
            let sway = params.sway_degrees.to_radians() * (2.0 * PI * tf / pf).sin();
            pose.local_rotations[s] = Quat::about_axis(1, sway).canonical();
        }
        for leg in &legs {
            let (n, k) = cycle(t, leg);
            let (ax, ay) = if k <= stance {
                (plant_x(n, leg), params.ankle_height)
            } else {
                let u = (k - stance) as f64 / (p - stance) as f64;
                (
                    plant_x(n, leg) + u * speed * pf,
                    params.ankle_height + params.lift * (PI * u).sin(),
                )
            };
            let hip = root + skeleton.offsets()[leg.hip];
            let (dx, dy) = (ax - hip.x, ay - hip.y);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist >= leg.thigh + leg.shin {
                return Err(Error::invalid(format!(
                    "gait target out of reach at frame {t}: {dist:.2} >= {}",
                    leg.thigh + leg.shin
                )));
            }
            let beta = dx.atan2(-dy);
            let law = |a: f64, b: f64| ((a * a + dist * dist - b * b) / (2.0 * a * dist)).clamp(-1.0, 1.0).acos();
            let hip_angle = beta + law(leg.thigh, leg.shin);
            let shin_angle = beta - law(leg.shin, leg.thigh);
            pose.local_rotations[leg.hip] = Quat::about_axis(2, hip_angle);
            pose.local_rotations[leg.knee] = Quat::about_axis(2, shin_angle - hip_angle);
            pose.local_rotations[leg.ankle] = Quat::about_axis(2, -shin_angle);
            pose.local_rotations[leg.toe] = Quat::IDENTITY;
        }
        frames.push(pose);
    }
    derive_velocities_in_place(&mut frames)?;

    // contact iff every frame of the difference stencil is planted
    let planted = |t: usize, leg: &Leg| cycle(t, leg).1 <= stance;
    let mut contacts = Vec::with_capacity(duration);
    let mut phases = Vec::with_capacity(duration);
    for t in 0..duration {
        let (a, b) = match t {
            0 => (0, 1),
            t if t == duration - 1 => (t - 1, t),
            t => (t - 1, t + 1),
        };
        let mut flags = [false; CONTACT_COUNT];
        let mut phase = [0.0; 2];
        for (f, leg) in legs.iter().enumerate() {
            let c = (a..=b).all(|s| planted(s, leg));
            flags[2 * f] = c;
            flags[2 * f + 1] = c;
            let k = cycle(t, leg).1;
            phase[f] = ((k + p - 1) % p) as f64 / pf;
        }
        frames[t].contacts = flags;
        contacts.push(flags);
        phases.push(phase);
    }
    Ok(SynthGait {
        clip: MotionClip::new(skeleton, frames, 30.0)?,
        contacts,
        phases,
    })
}

/// Where the clips for a corpus come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    /// Directory of BVH files; subjects are matched against file stems.
    Bvh { directory: PathBuf },
    Synthetic(SyntheticSource),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSource {
    pub duration: usize,
    pub train_speeds: Vec<f64>,
    pub test_speeds: Vec<f64>,
    /// Cycle offsets; each speed is generated once per offset.
    pub start_frames: Vec<usize>,
    pub gait: GaitParams,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        SyntheticSource {
            duration: 190,
            train_speeds: vec![2.5, 3.0, 3.5, 4.0],
            test_speeds: vec![2.75, 3.25],
            start_frames: vec![0],
            gait: GaitParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Subject tokens for training, e.g. `["subject1", "subject2"]`.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub speed_threshold: f64,
    pub height_threshold: f64,
    pub joints: [String; 4],
}

impl Default for ContactConfig {
    fn default() -> Self {
        let d = ContactThresholds::default();
        ContactConfig {
            speed_threshold: d.speed,
            height_threshold: d.height,
            joints: ["LeftFoot", "LeftToe", "RightFoot", "RightToe"].map(String::from),
        }
    }
}

/// Human-readable dataset description (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Length unit of the source data, recorded for reports.
    pub units: String,
    /// Vertical axis: "x", "y" or "z". The other two span the ground plane.
    pub up_axis: String,
    pub window: WindowSpec,
    pub contacts: ContactConfig,
    pub splits: SplitConfig,
    pub source: SourceConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            units: "centimeters".into(),
            up_axis: "y".into(),
            window: WindowSpec::default(),
            contacts: ContactConfig::default(),
            splits: SplitConfig::default(),
            source: SourceConfig::Synthetic(SyntheticSource::default()),
        }
    }
}

impl DatasetConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: DatasetConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("dataset config: {e}")))?;
        cfg.window.validate()?;
        cfg.up_axis_index()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn up_axis_index(&self) -> Result<usize> {
        match self.up_axis.to_ascii_lowercase().as_str() {
            "x" => Ok(0),
            "y" => Ok(1),
            "z" => Ok(2),
            other => Err(Error::Config(format!("up_axis must be x, y or z, got `{other}`"))),
        }
    }

    pub fn thresholds(&self) -> Result<ContactThresholds> {
        Ok(ContactThresholds {
            speed: self.contacts.speed_threshold,
            height: self.contacts.height_threshold,
            up_axis: self.up_axis_index()?,
        })
    }
}

/// Train and test clips with contacts extracted.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<MotionClip>,
    pub test: Vec<MotionClip>,
}

pub fn load_corpus(cfg: &DatasetConfig) -> Result<Corpus> {
    let thresholds = cfg.thresholds()?;
    match &cfg.source {
        SourceConfig::Synthetic(src) => {
            let skel = Arc::new(Skeleton::synthetic_biped());
            let make = |speeds: &[f64]| -> Result<Vec<MotionClip>> {
                let mut out = Vec::new();
                for &speed in speeds {
                    for &start in &src.start_frames {
                        let params = GaitParams {
                            start_frame: start,
                            ..src.gait
                        };
                        let g = synth_gait_with(src.duration, speed, skel.clone(), &params)?;
                        out.push(extract_contacts(&g.clip, &thresholds)?);
                    }
                }
                Ok(out)
            };
            Ok(Corpus {
                train: make(&src.train_speeds)?,
                test: make(&src.test_speeds)?,
            })
        }
        SourceConfig::Bvh { directory } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(directory)
                .map_err(|e| Error::file(directory, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
                .collect();
            paths.sort();
            let matches = |path: &Path, tokens: &[String]| {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                tokens.iter().any(|t| stem.ends_with(t.as_str()))
            };
            let mut corpus = Corpus {
                train: Vec::new(),
                test: Vec::new(),
            };
            let mut skeleton: Option<Arc<Skeleton>> = None;
            for path in paths {
                let is_train = matches(&path, &cfg.splits.train);
                let is_test = matches(&path, &cfg.splits.test);
                if !is_train && !is_test {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
                let mut clip = bvh::to_clip(&bvh::parse_bvh(&text)?)?;
                let skel = (*clip.skeleton).clone().with_contact_joints(&cfg.contacts.joints)?;
                match &skeleton {
                    Some(s) if !s.same_topology(&skel) => {
                        return Err(Error::shape(format!(
                            "{} uses a different skeleton from earlier files",
                            path.display()
                        )))
                    }
                    Some(s) => clip.skeleton = s.clone(),
                    None => {
                        let s = Arc::new(skel);
                        clip.skeleton = s.clone();
                        skeleton = Some(s);
                    }
                }
                let clip = extract_contacts(&clip, &thresholds)?;
                if is_train {
                    corpus.train.push(clip.clone());
                }
                if is_test {
                    corpus.test.push(clip);
                }
            }
            Ok(corpus)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::forward_kinematics;

    fn walk(frames: usize) -> MotionClip {
        synth_gait(frames, 3.0, Arc::new(Skeleton::synthetic_biped())).unwrap()
    }

    #[test]
    fn ninety_frames_give_three_windows() {
        let frags = make_fragments(&[walk(90)], WindowSpec::default()).unwrap();
        assert_eq!(frags.clips.len(), (90 - 50) / 20 + 1);
        let src = walk(90);
        for (f, clip) in frags.clips.iter().enumerate() {
            assert_eq!(clip.frames[0], src.frames[f * 20]);
            assert_eq!(clip.len(), 50);
        }
    }

    #[test]
    fn short_clips_are_skipped_and_counted() {
        let frags = make_fragments(&[walk(49)], WindowSpec::default()).unwrap();
        assert!(frags.clips.is_empty());
        assert_eq!(frags.skipped, 1);
    }

    #[test]
    fn reversal_is_an_involution_on_state() {
        let clip = walk(40);
        let back = reverse_clip(&reverse_clip(&clip).unwrap()).unwrap();
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.frames.iter().zip(&back.frames) {
            assert_eq!(a.root_position, b.root_position);
            assert_eq!(a.local_rotations, b.local_rotations);
            assert_eq!(a.contacts, b.contacts);
        }
    }

    #[test]
    fn reversed_constant_walk_negates_velocity() {
        let skel = Arc::new(Skeleton::synthetic_biped());
        let frames: Vec<Pose> = (0..12)
            .map(|t| Pose {
                root_position: Vec3::new(0.7 * t as f64, 1.0, 0.0),
                ..Pose::identity(skel.len())
            })
            .collect();
        let mut clip = MotionClip::new(skel, frames, 30.0).unwrap();
        derive_velocities_in_place(&mut clip.frames).unwrap();
        let rev = reverse_clip(&clip).unwrap();
        let n = clip.len();
        for t in 1..n - 1 {
            let d = rev.frames[t].root_velocity + clip.frames[n - 1 - t].root_velocity;
            assert!(d.norm() < 1e-6);
        }
    }

    #[test]
    fn gait_root_travel_matches_speed() {
        let clip = walk(61);
        let d = clip.frames[60].root_position.x - clip.frames[0].root_position.x;
        assert!((d - 3.0 * 60.0).abs() < 1e-9);
    }

    #[test]
    fn gait_contacts_match_schedule() {
        let skel = Arc::new(Skeleton::synthetic_biped());
        for start in [0, 7, 29] {
            for speed in [2.5, 4.0] {
                let params = GaitParams { start_frame: start, ..GaitParams::default() };
                let g = synth_gait_with(95, speed, skel.clone(), &params).unwrap();
                let out = extract_contacts(&g.clip, &ContactThresholds::default()).unwrap();
                let got: Vec<_> = out.frames.iter().map(|f| f.contacts).collect();
                assert_eq!(got, g.contacts);
                assert!(got.iter().any(|c| c[0]) && got.iter().any(|c| !c[0]));
            }
        }
    }

    #[test]
    fn planted_feet_do_not_move() {
        let g = synth_gait_with(60, 3.0, Arc::new(Skeleton::synthetic_biped()), &GaitParams::default()).unwrap();
        let skel = &g.clip.skeleton;
        let pos: Vec<Vec<Vec3>> = g
            .clip
            .frames
            .iter()
            .map(|f| forward_kinematics(skel, f.root_position, &f.local_rotations).unwrap())
            .collect();
        for t in 1..59 {
            if g.contacts[t][0] {
                assert!((pos[t + 1][5] - pos[t - 1][5]).norm() < 1e-9);
                assert!((pos[t][5].y - 6.0).abs() < 1e-9);
                assert!((pos[t][6].y - 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dataset_config_parses() {
        let cfg = DatasetConfig::from_toml(
            r#"
units = "centimeters"
up_axis = "y"
[window]
window = 52
offset = 20
[splits]
train = ["subject1", "subject2"]
test = ["subject5"]
[source]
kind = "bvh"
directory = "/data/lafan1"
"#,
        )
        .unwrap();
        assert_eq!(cfg.window.window, 52);
        assert_eq!(cfg.source, SourceConfig::Bvh { directory: "/data/lafan1".into() });
        assert!(DatasetConfig::from_toml("up_axis = \"w\"").is_err());
    }

    #[test]
    fn synthetic_corpus_loads() {
        let corpus = load_corpus(&DatasetConfig::default()).unwrap();
        assert_eq!(corpus.train.len(), 4);
        assert_eq!(corpus.test.len(), 2);
        let frags = make_fragments(&corpus.train, WindowSpec::default()).unwrap();
        assert_eq!(frags.clips.len(), 32);
    }

    proptest::proptest! {
        #[test]
        fn fragments_are_stride_exact(len in 3usize..120, window in 3usize..40, offset in 1usize..25) {
            let clip = walk(len);
            let frags = make_fragments(std::slice::from_ref(&clip), WindowSpec { window, offset }).unwrap();
            let expect = if len < window { 0 } else { (len - window) / offset + 1 };
            proptest::prop_assert_eq!(frags.clips.len(), expect);
            for (f, c) in frags.clips.iter().enumerate() {
                proptest::prop_assert_eq!(&c.frames[..], &clip.frames[f * offset..f * offset + window]);
            }
        }
    }
}
