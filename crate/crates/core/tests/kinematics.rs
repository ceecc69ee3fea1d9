use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use proptest::prelude::*;
use softwrist::kinematics::{compose_chains, dh_transform, forward_kinematics, jacobian, DHParam, KinematicChain, Transform};
use softwrist::robot::{ur5_chain, wrist_chain, Manipulator};

fn closed_form(t1: f64, t2: f64) -> [f64; 3] {
    let r = 34.0 + 48.0 * t2.cos();
    [t1.cos() * r, t1.sin() * r, 48.0 * t2.sin()]
}

fn fd_jacobian(chain: &KinematicChain, q: &[f64], h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        let tp = forward_kinematics(chain, &qp).unwrap();
        let tm = forward_kinematics(chain, &qm).unwrap();
        let v = (tp.translation - tm.translation) / (2.0 * h);
        let d = tp.rotation * tm.rotation.transpose();
        let w = nalgebra::Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]) / (4.0 * h);
        for r in 0..3 {
            j[(r, i)] = v[r];
            j[(r + 3, i)] = w[r];
        }
    }
    j
}

#[test]
fn wrist_matches_closed_form_on_grid() {
    let chain = wrist_chain();
    for i in -30..=30 {
        for k in -90..=90 {
            let (t1, t2) = ((i as f64).to_radians(), (k as f64).to_radians());
            let p = forward_kinematics(&chain, &[t1, t2]).unwrap().translation;
            let c = closed_form(t1, t2);
            for a in 0..3 {
                assert!((p[a] - c[a]).abs() < 1e-9, "({i}, {k}) axis {a}");
            }
        }
    }
}

#[test]
fn wrist_table_examples() {
    let chain = wrist_chain();
    let t = forward_kinematics(&chain, &[0.0, 0.0]).unwrap();
    assert!((t.translation - nalgebra::Vector3::new(82.0, 0.0, 0.0)).amax() < 1e-12);
    let t = forward_kinematics(&chain, &[0.0, FRAC_PI_2]).unwrap();
    assert!((t.translation - nalgebra::Vector3::new(34.0, 0.0, 48.0)).amax() < 1e-12);
    let row = DHParam::new(48.0, 0.0, 0.0, 0.0).unwrap();
    let t = dh_transform(&row, FRAC_PI_2).unwrap();
    assert!(t.approx_eq(&Transform::new(Transform::rot_z(FRAC_PI_2).rotation, [0.0, 48.0, 0.0].into()), 1e-12));
}

#[test]
fn dh_param_range() {
    assert!(DHParam::new(0.0, PI, 0.0, PI).is_ok());
    assert!(DHParam::new(0.0, -PI, 0.0, 0.0).is_err());
    assert!(DHParam::new(-1.0, 0.0, 0.0, 0.0).is_err());
    assert!(DHParam::new(0.0, 0.0, f64::NAN, 0.0).is_err());
}

fn composite_q() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(-PI..PI, 6),
        -(30f64.to_radians())..30f64.to_radians(),
        -FRAC_PI_2..FRAC_PI_2,
    )
        .prop_map(|(mut arm, a, b)| {
            arm.push(a);
            arm.push(b);
            arm
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn composite_jacobian_matches_finite_differences(q in composite_q()) {
        let chain = Manipulator::shipped().chain;
        let j = jacobian(&chain, &q).unwrap();
        let fd = fd_jacobian(&chain, &q, 1e-6);
        let rel = (&j - &fd).norm() / j.norm().max(1.0);
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn composition_is_product_of_parts(q in composite_q()) {
        let arm = ur5_chain();
        let wrist = wrist_chain();
        let both = compose_chains(&arm, &wrist);
        let whole = forward_kinematics(&both, &q).unwrap();
        let parts = forward_kinematics(&arm, &q[..6]).unwrap() * forward_kinematics(&wrist, &q[6..]).unwrap();
        prop_assert!(whole.approx_eq(&parts, 1e-9));
    }

    #[test]
    fn rotations_stay_orthonormal(q in composite_q()) {
        let t = forward_kinematics(&Manipulator::shipped().chain, &q).unwrap();
        prop_assert!(t.is_orthonormal(1e-9));
    }
}
