use super::{quat_multiply, Quat, Skeleton, Vec3};
use crate::error::{Error, Result};

/// Global joint positions from the root position and per-joint local rotations.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    root_position: Vec3,
    local_rotations: &[Quat],
) -> Result<Vec<Vec3>> {
    Ok(forward_kinematics_full(skeleton, root_position, local_rotations)?.0)
}

/// Like [`forward_kinematics`] but also returns the accumulated global rotations.
pub fn forward_kinematics_full(
    skeleton: &Skeleton,
    root_position: Vec3,
    local_rotations: &[Quat],
) -> Result<(Vec<Vec3>, Vec<Quat>)> {
    let n = skeleton.len();
    if local_rotations.len() != n {
        return Err(Error::shape(format!(
            "{} rotations for a {n}-joint skeleton",
            local_rotations.len()
        )));
    }
    let mut positions = Vec::with_capacity(n);
    let mut globals = Vec::with_capacity(n);
    positions.push(root_position);
    globals.push(local_rotations[0]);
    for j in 1..n {
        let p = skeleton.parent(j).expect("non-root joint has a parent");
        let parent_rot = globals[p];
        positions.push(positions[p] + parent_rot.rotate(skeleton.offsets()[j]));
        globals.push(quat_multiply(parent_rot, local_rotations[j]));
    }
    Ok((positions, globals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    type Mat4 = [[f64; 4]; 4];

    fn homogeneous(q: Quat, t: Vec3) -> Mat4 {
        let r = q.to_matrix();
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
        }
        m[0][3] = t.x;
        m[1][3] = t.y;
        m[2][3] = t.z;
        m[3][3] = 1.0;
        m
    }

    fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
        let mut r = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    r[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        r
    }

    /// Matrix-stack FK: world_j = world_parent * T(offset_j) * R(q_j).
    fn matrix_fk(skel: &Skeleton, root: Vec3, rots: &[Quat]) -> Vec<Vec3> {
        let mut world: Vec<Mat4> = Vec::new();
        for j in 0..skel.len() {
            let local = match skel.parent(j) {
                None => homogeneous(rots[j], root),
                Some(_) => homogeneous(rots[j], skel.offsets()[j]),
            };
            let m = match skel.parent(j) {
                None => local,
                Some(p) => mat4_mul(&world[p], &local),
            };
            world.push(m);
        }
        world
            .iter()
            .map(|m| Vec3::new(m[0][3], m[1][3], m[2][3]))
            .collect()
    }

    fn random_chain(rng: &mut impl Rng, n: usize) -> Skeleton {
        let mut parents = vec![None];
        let mut offsets = vec![Vec3::ZERO];
        for j in 1..n {
            parents.push(Some(rng.random_range(0..j)));
            offsets.push(Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
        }
        Skeleton::new((0..n).map(|i| format!("j{i}")).collect(), parents, offsets).unwrap()
    }

    fn random_rot(rng: &mut impl Rng) -> Quat {
        Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize()
    }

    #[test]
    fn identity_rotations_sum_offsets() {
        let skel = Skeleton::synthetic_biped();
        let root = Vec3::new(1.0, 85.0, 2.0);
        let pos = forward_kinematics(&skel, root, &vec![Quat::IDENTITY; skel.len()]).unwrap();
        for j in 0..skel.len() {
            let mut expect = root;
            let mut k = j;
            while let Some(p) = skel.parent(k) {
                expect += skel.offsets()[k];
                k = p;
            }
            assert!((pos[j] - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn two_joint_quarter_turn() {
        let skel = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)],
        )
        .unwrap();
        let root = Vec3::new(2.0, 3.0, 4.0);
        let rots = [Quat::about_axis(2, FRAC_PI_2), Quat::IDENTITY];
        let pos = forward_kinematics(&skel, root, &rots).unwrap();
        assert!((pos[1] - (root + Vec3::new(0.0, 1.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn random_chains_match_matrix_stack() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=10);
            let skel = random_chain(&mut rng, n);
            let rots: Vec<Quat> = (0..n).map(|_| random_rot(&mut rng)).collect();
            let root = Vec3::new(rng.random_range(-5.0..5.0), 1.0, -2.0);
            let got = forward_kinematics(&skel, root, &rots).unwrap();
            let oracle = matrix_fk(&skel, root, &rots);
            for (g, o) in got.iter().zip(&oracle) {
                assert!((*g - *o).to_array().iter().all(|d| d.abs() < 1e-6));
            }
        }
    }

    #[test]
    fn joint_count_mismatch_is_shape_error() {
        let skel = Skeleton::synthetic_biped();
        let r = forward_kinematics(&skel, Vec3::ZERO, &[Quat::IDENTITY]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    proptest::proptest! {
        #[test]
        fn translation_equivariant(seed in 0u64..1000, d in proptest::array::uniform3(-100.0f64..100.0)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let skel = random_chain(&mut rng, 6);
            let rots: Vec<Quat> = (0..6).map(|_| random_rot(&mut rng)).collect();
            let p = Vec3::new(0.5, -0.25, 2.0);
            let d = Vec3::from_array(d);
            let a = forward_kinematics(&skel, p, &rots).unwrap();
            let b = forward_kinematics(&skel, p + d, &rots).unwrap();
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!(((*x + d) - *y).norm() < 1e-9);
            }
        }
    }
}
