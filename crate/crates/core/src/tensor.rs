//! Batched, differentiable counterparts of the pose types and kinematics.

use candle_core::{DType, Device, Tensor, D};

use crate::error::{Error, Result};
use crate::motion::{Pose, Quat, Skeleton, Vec3, CONTACT_COUNT};

/// A batch of poses as tensors: `root_position`/`root_velocity` are `[B, 3]`,
/// `rotations` is `[B, J, 4]` (scalar first) and `contacts` is `[B, 4]` of 0/1.
#[derive(Clone, Debug)]
pub struct PoseBatch {
    pub root_position: Tensor,
    pub root_velocity: Tensor,
    pub rotations: Tensor,
    pub contacts: Tensor,
}

impl PoseBatch {
    pub fn from_poses(poses: &[&Pose], device: &Device, dtype: DType) -> Result<Self> {
        let b = poses.len();
        if b == 0 {
            return Err(Error::shape("empty pose batch"));
        }
        let j = poses[0].local_rotations.len();
        let mut root = Vec::with_capacity(b * 3);
        let mut vel = Vec::with_capacity(b * 3);
        let mut rot = Vec::with_capacity(b * j * 4);
        let mut con = Vec::with_capacity(b * CONTACT_COUNT);
        for p in poses {
            if p.local_rotations.len() != j {
                return Err(Error::shape("poses in a batch disagree on joint count"));
            }
            root.extend(p.root_position.to_array());
            vel.extend(p.root_velocity.to_array());
            for q in &p.local_rotations {
                rot.extend([q.w, q.x, q.y, q.z]);
            }
            con.extend(p.contacts.map(|c| if c { 1.0 } else { 0.0 }));
        }
        let t = |v: Vec<f64>, shape: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
        };
        Ok(PoseBatch {
            root_position: t(root, &[b, 3])?,
            root_velocity: t(vel, &[b, 3])?,
            rotations: t(rot, &[b, j, 4])?,
            contacts: t(con, &[b, CONTACT_COUNT])?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.root_position.dims()[0]
    }

    pub fn joints(&self) -> usize {
        self.rotations.dims()[1]
    }

    /// Converts back to host poses; quaternions are renormalized in f64.
    pub fn to_poses(&self) -> Result<Vec<Pose>> {
        let root: Vec<Vec<f64>> = self.root_position.to_dtype(DType::F64)?.to_vec2()?;
        let vel: Vec<Vec<f64>> = self.root_velocity.to_dtype(DType::F64)?.to_vec2()?;
        let rot: Vec<Vec<Vec<f64>>> = self.rotations.to_dtype(DType::F64)?.to_vec3()?;
        let con: Vec<Vec<f64>> = self.contacts.to_dtype(DType::F64)?.to_vec2()?;
        let v3 = |v: &[f64]| Vec3::new(v[0], v[1], v[2]);
        Ok((0..root.len())
            .map(|b| Pose {
                root_position: v3(&root[b]),
                root_velocity: v3(&vel[b]),
                local_rotations: rot[b]
                    .iter()
                    .map(|q| Quat::new(q[0], q[1], q[2], q[3]).normalize())
                    .collect(),
                contacts: std::array::from_fn(|i| con[b][i] > 0.5),
            })
            .collect())
    }

    /// The same poses seen in reversed time (velocity negated).
    pub fn time_reversed(&self) -> Result<Self> {
        Ok(PoseBatch {
            root_velocity: self.root_velocity.neg()?,
            ..self.clone()
        })
    }

    pub fn detach(&self) -> Self {
        PoseBatch {
            root_position: self.root_position.detach(),
            root_velocity: self.root_velocity.detach(),
            rotations: self.rotations.detach(),
            contacts: self.contacts.detach(),
        }
    }

    /// Concatenates batches along the batch dimension.
    pub fn cat(parts: &[&PoseBatch]) -> Result<Self> {
        let pick = |f: fn(&PoseBatch) -> &Tensor| -> Result<Tensor> {
            let v: Vec<&Tensor> = parts.iter().map(|p| f(p)).collect();
            Ok(Tensor::cat(&v, 0)?)
        };
        Ok(PoseBatch {
            root_position: pick(|p| &p.root_position)?,
            root_velocity: pick(|p| &p.root_velocity)?,
            rotations: pick(|p| &p.rotations)?,
            contacts: pick(|p| &p.contacts)?,
        })
    }
}

/// Normalizes the last dimension of `q` to unit length.
pub fn normalize_last(q: &Tensor) -> Result<Tensor> {
    let n = q.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    Ok(q.broadcast_div(&n.clamp(1e-12, f64::INFINITY)?)?)
}

/// Rotation matrices `[..., 3, 3]` of unit quaternions `[..., 4]`.
pub fn quat_to_matrix(q: &Tensor) -> Result<Tensor> {
    let last = q.rank() - 1;
    let c = |i: usize| q.narrow(last, i, 1);
    let (w, x, y, z) = (c(0)?, c(1)?, c(2)?, c(3)?);
    let two = |a: &Tensor, b: &Tensor| -> Result<Tensor> { Ok((a * b)?.affine(2.0, 0.0)?) };
    let (xx, yy, zz) = (two(&x, &x)?, two(&y, &y)?, two(&z, &z)?);
    let (xy, xz, yz) = (two(&x, &y)?, two(&x, &z)?, two(&y, &z)?);
    let (wx, wy, wz) = (two(&w, &x)?, two(&w, &y)?, two(&w, &z)?);
    let one_minus = |a: &Tensor, b: &Tensor| -> Result<Tensor> { Ok((a + b)?.affine(-1.0, 1.0)?) };
    let entries = [
        one_minus(&yy, &zz)?,
        (&xy - &wz)?,
        (&xz + &wy)?,
        (&xy + &wz)?,
        one_minus(&xx, &zz)?,
        (&yz - &wx)?,
        (&xz - &wy)?,
        (&yz + &wx)?,
        one_minus(&xx, &yy)?,
    ];
    let m = Tensor::cat(&entries, last)?;
    let mut shape = q.dims().to_vec();
    shape.pop();
    shape.extend([3, 3]);
    Ok(m.reshape(shape)?)
}

/// Batched forward kinematics: `root` `[N, 3]`, `rotations` `[N, J, 4]` of unit
/// quaternions, result `[N, J, 3]`.
pub fn forward_kinematics_tensor(
    skeleton: &Skeleton,
    root: &Tensor,
    rotations: &Tensor,
) -> Result<Tensor> {
    let (n, j, four) = rotations.dims3()?;
    if j != skeleton.len() || four != 4 {
        return Err(Error::shape(format!(
            "rotations {:?} do not match a {}-joint skeleton",
            rotations.dims(),
            skeleton.len()
        )));
    }
    if root.dims() != [n, 3] {
        return Err(Error::shape(format!("root shape {:?}, expected [{n}, 3]", root.dims())));
    }
    let local = quat_to_matrix(rotations)?;
    let mut globals: Vec<Tensor> = Vec::with_capacity(j);
    let mut positions: Vec<Tensor> = Vec::with_capacity(j);
    for k in 0..j {
        let r = local.narrow(1, k, 1)?.squeeze(1)?;
        match skeleton.parent(k) {
            None => {
                globals.push(r);
                positions.push(root.clone());
            }
            Some(p) => {
                let o = skeleton.offsets()[k];
                let off = Tensor::new(&[o.x, o.y, o.z], root.device())?
                    .to_dtype(root.dtype())?
                    .reshape((1, 1, 3))?;
                let moved = globals[p].broadcast_mul(&off)?.sum(2)?;
                positions.push((&positions[p] + moved)?);
                globals.push(globals[p].matmul(&r)?);
            }
        }
    }
    Ok(Tensor::stack(&positions, 1)?)
}
