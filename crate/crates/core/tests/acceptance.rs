//! Acceptance checks, one PASS/FAIL line each. Runs without the test harness
//! so the lines are always printed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softwrist::kinematics::{forward_kinematics, jacobian, KinematicChain};
use softwrist::robot::{wrist_chain, Manipulator};
use softwrist::servo::{decode_frame, encode_frame, ServoFrame};
use softwrist::tasks::{compare_conditions, run_rotation_task, run_stacking_task, TaskKind, TaskReport, TaskSetup};
use softwrist::transmission::{
    angle_to_servo, finger_tendon_displacement, servo_to_angle, CalibrationSet, CouplingMode, TransmissionConfig,
    TICK_MAX, TICK_MIN,
};
use softwrist::wrist::{palm_workspace, WristState};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn wrist_closed_form() -> Check {
    let chain = wrist_chain();
    let mut worst: f64 = 0.0;
    for i in -30..=30 {
        for k in -90..=90 {
            let (t1, t2) = ((i as f64).to_radians(), (k as f64).to_radians());
            let p = forward_kinematics(&chain, &[t1, t2]).map_err(|e| e.to_string())?.translation;
            let r = 34.0 + 48.0 * t2.cos();
            let c = [t1.cos() * r, t1.sin() * r, 48.0 * t2.sin()];
            for a in 0..3 {
                worst = worst.max((p[a] - c[a]).abs());
            }
        }
    }
    let home = forward_kinematics(&chain, &[0.0, 0.0]).map_err(|e| e.to_string())?.translation;
    ensure(worst < 1e-9, format!("max residual {worst:e} mm"))?;
    ensure(home.norm() == 82.0, format!("reach at neutral {}", home.norm()))?;
    Ok(format!("61x181 grid, max residual {worst:.1e} mm, neutral reach 82 mm"))
}

fn fd_jacobian(chain: &KinematicChain, q: &[f64]) -> DMatrix<f64> {
    let h = 1e-6;
    let mut j = DMatrix::zeros(6, q.len());
    for i in 0..q.len() {
        let (mut qp, mut qm) = (q.to_vec(), q.to_vec());
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

fn jacobian_oracle() -> Check {
    let chain = Manipulator::shipped().chain;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q: Vec<f64> = chain.limits().iter().map(|l| rng.gen_range(l.min.max(-PI)..l.max.min(PI))).collect();
        let j = jacobian(&chain, &q).map_err(|e| e.to_string())?;
        let rel = (&j - fd_jacobian(&chain, &q)).norm() / j.norm().max(1.0);
        worst = worst.max(rel);
    }
    ensure(worst < 1e-6, format!("worst relative error {worst:e}"))?;
    Ok(format!("1000 configurations of the 8-joint chain, worst relative error {worst:.1e}"))
}

fn decoupling() -> Check {
    let sheathed = TransmissionConfig::default();
    let loose = TransmissionConfig {
        mode: CouplingMode::Unsheathed,
        ..sheathed
    };
    let grid = palm_workspace(1.0).map_err(|e| e.to_string())?;
    let zero = WristState::new(0.0, 0.0);
    let [k1, k2] = loose.coupling_mm_per_rad;
    let mut spread: f64 = 0.0;
    for k in 0..10 {
        let s = k as f64 / 9.0;
        let rest = finger_tendon_displacement(s, &zero, &sheathed).unwrap();
        let loose_rest = finger_tendon_displacement(s, &zero, &loose).unwrap();
        for p in &grid {
            let w = WristState::from_degrees(p.theta1_deg, p.theta2_deg);
            let d = finger_tendon_displacement(s, &w, &sheathed).unwrap();
            ensure(d == rest, format!("sheathed displacement moved at {w:?}"))?;
            let u = finger_tendon_displacement(s, &w, &loose).unwrap();
            let expected = k1 * w.theta1 + k2 * w.theta2;
            ensure(
                (u.flexor_mm - loose_rest.flexor_mm - expected).abs() < 1e-12,
                format!("unsheathed flexor off the coupling at {w:?}"),
            )?;
            spread = spread.max((u.flexor_mm - loose_rest.flexor_mm).abs());
        }
    }
    ensure(spread > 0.0, "unsheathed displacement never changed")?;
    Ok(format!("{} wrist poses x 10 synergies; unsheathed spread {spread:.3} mm", grid.len()))
}

fn transmission_round_trip() -> Check {
    let set = CalibrationSet::shipped();
    let mut worst: f64 = 0.0;
    for cal in &set.servo {
        for t in TICK_MIN..=TICK_MAX {
            let a = servo_to_angle(t, cal).map_err(|e| e.to_string())?;
            ensure(angle_to_servo(a, cal).map_err(|e| e.to_string())? == t, format!("{} tick {t}", cal.role))?;
            let nudged = a + 0.49 * cal.gain;
            let back = servo_to_angle(angle_to_servo(nudged, cal).unwrap_or(t), cal).unwrap();
            worst = worst.max((back - nudged).abs() / cal.gain.abs());
        }
    }
    ensure(worst <= 0.5, format!("quantization {worst} ticks"))?;
    Ok(format!("{} servos x 4096 ticks, worst quantization {worst:.2} tick", set.servo.len()))
}

fn run_pair(kind: TaskKind) -> Result<(TaskReport, TaskReport), String> {
    let setup = TaskSetup::shipped(kind);
    let run = |wrist| match kind {
        TaskKind::Rotation => run_rotation_task(wrist, &setup),
        TaskKind::Stacking => run_stacking_task(wrist, &setup),
    };
    Ok((run(true).map_err(|e| e.to_string())?, run(false).map_err(|e| e.to_string())?))
}

fn rotation_ablation(on: &TaskReport, off: &TaskReport) -> Check {
    ensure(
        off.config_change_count == 2 && on.config_change_count == 1,
        format!("changes off {} on {}", off.config_change_count, on.config_change_count),
    )?;
    ensure(on.success && off.success, "rotation did not complete")?;
    Ok("configuration changes: wrist off 2, wrist on 1".into())
}

fn rotation_time(on: &TaskReport, off: &TaskReport) -> Check {
    let ratio = on.time_proxy_s / off.time_proxy_s;
    ensure(ratio <= 0.85, format!("ratio {ratio:.3}"))?;
    Ok(format!("time proxy {:.2} s vs {:.2} s, ratio {ratio:.3}", on.time_proxy_s, off.time_proxy_s))
}

fn stacking_ablation(on: &TaskReport, off: &TaskReport) -> Check {
    let n = on.cubes.len();
    ensure(n == 6, format!("{n} cubes"))?;
    ensure(
        on.reoriented_count() == 6 && on.stacked_count() == 6,
        format!("wrist on {}/6 reoriented, {}/6 stacked", on.reoriented_count(), on.stacked_count()),
    )?;
    ensure(
        off.reoriented_count() <= 4 && off.stacked_count() <= 5,
        format!("wrist off {}/6 reoriented, {}/6 stacked", off.reoriented_count(), off.stacked_count()),
    )?;
    let cube5 = &off.cubes[4];
    ensure(cube5.cube == 5 && !cube5.reoriented && !cube5.stacked, "cube 5 did not fail without the wrist")?;
    Ok(format!(
        "wrist on 6/6 and 6/6; wrist off {}/6 reoriented, {}/6 stacked, cube 5 failed",
        off.reoriented_count(),
        off.stacked_count()
    ))
}

fn joint4_travel(on: &TaskReport, off: &TaskReport) -> Check {
    let c = compare_conditions(on, off).map_err(|e| e.to_string())?;
    let ratio = c.joint4_max_ratio.ok_or("no joint-4 ratio")?;
    ensure(ratio <= 0.75, format!("ratio {ratio:.3}"))?;
    Ok(format!(
        "joint 4 max travel {:.1} deg vs {:.1} deg, ratio {ratio:.3}",
        on.travel_max_deg[3], off.travel_max_deg[3]
    ))
}

fn protocol() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let id = rng.gen_range(0..=0xFEu8);
        let inst = rng.gen::<u8>();
        let params: Vec<u8> = (0..rng.gen_range(0..=250)).map(|_| rng.gen()).collect();
        let f = decode_frame(&encode_frame(id, inst, &params).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(f.id == id && f.instruction == inst && f.params == params, "round trip mismatch")?;
    }
    let mut flips = 0usize;
    for n in 0..=10usize {
        for _ in 0..200 {
            let params: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            let bytes = encode_frame(rng.gen_range(0..=0xFE), rng.gen(), &params).unwrap();
            for bit in 0..bytes.len() * 8 {
                let mut bad = bytes.clone();
                bad[bit / 8] ^= 1 << (bit % 8);
                ensure(decode_frame(&bad).is_err(), format!("flip {bit} of {bytes:02X?} accepted"))?;
                flips += 1;
            }
        }
    }
    let ping = ServoFrame::ping(1).encode();
    ensure(ping == [0xFF, 0xFF, 0x01, 0x02, 0x01, 0xFB], format!("ping {ping:02X?}"))?;
    Ok(format!("10000 round trips, {flips} single-bit flips rejected, ping FF FF 01 02 01 FB"))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn full_cli_run(dir: &Path) -> Result<(), String> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let config = std::fs::read_to_string(data.join("softwrist.toml"))
        .map_err(|e| e.to_string())?
        .replace("seed_jitter_deg = 0.0", "seed_jitter_deg = 0.25");
    std::fs::write(dir.join("run.toml"), config).map_err(|e| e.to_string())?;
    for f in ["ur5.toml", "wrist.toml", "calibration.toml", "rotation.toml", "stacking.toml"] {
        std::fs::copy(data.join(f), dir.join(f)).map_err(|e| e.to_string())?;
    }
    std::fs::write(dir.join("bus.txt"), "ping 1\nping 2\nping 3\nping 4\nwrist 30 -45\nstep 0.5\nread 3\nread 4\n")
        .map_err(|e| e.to_string())?;
    let runs: Vec<Vec<&str>> = vec![
        vec!["workspace", "--step-deg", "2.5", "--format", "svg"],
        vec!["task", "rotate", "--wrist", "on", "--format", "csv"],
        vec!["task", "rotate", "--wrist", "off", "--format", "svg"],
        vec!["task", "stack", "--wrist", "on", "--format", "csv"],
        vec!["task", "stack", "--wrist", "off", "--format", "svg"],
        vec!["compare", "out/stack_on.json", "out/stack_off.json"],
        vec!["servo-sim", "bus.txt"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let o = Command::new(env!("CARGO_BIN_EXE_softwrist"))
            .args(args)
            .args(["--config", "run.toml", "--seed", "42", "--out", "out"])
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(matches!(o.status.code(), Some(0) | Some(3)), format!("{args:?} exited {:?}", o.status.code()))?;
        std::fs::create_dir_all(dir.join("out")).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("out").join(format!("{i}_{}.stdout", args[0])), &o.stdout)
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_cli_run(a.path())?;
    full_cli_run(b.path())?;
    let (ta, tb) = (tree(&a.path().join("out")), tree(&b.path().join("out")));
    ensure(ta.keys().eq(tb.keys()), "file lists differ")?;
    for (name, bytes) in &ta {
        ensure(tb[name] == *bytes, format!("{name} differs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", ta.len()))
}

fn main() {
    let rotation = run_pair(TaskKind::Rotation);
    let stacking = run_pair(TaskKind::Stacking);
    let with = |pair: &Result<(TaskReport, TaskReport), String>, f: fn(&TaskReport, &TaskReport) -> Check| match pair {
        Ok((on, off)) => f(on, off),
        Err(e) => Err(e.clone()),
    };
    let checks: Vec<Criterion> = vec![
        ("wrist forward kinematics closed form", Box::new(wrist_closed_form)),
        ("composite Jacobian vs finite differences", Box::new(jacobian_oracle)),
        ("sheathed tendon decoupling", Box::new(decoupling)),
        ("servo angle/tick round trip", Box::new(transmission_round_trip)),
        ("rotation task configuration changes", Box::new(|| with(&rotation, rotation_ablation))),
        ("rotation task time proxy", Box::new(|| with(&rotation, rotation_time))),
        ("stacking task outcomes", Box::new(|| with(&stacking, stacking_ablation))),
        ("stacking joint-4 travel", Box::new(|| with(&stacking, joint4_travel))),
        ("servo protocol robustness", Box::new(protocol)),
        ("CLI determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.2} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
