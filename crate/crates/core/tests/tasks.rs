use nalgebra::Vector3;
use proptest::prelude::*;
use softwrist::kinematics::Transform;
use softwrist::tasks::{
    compare_conditions, export_report, report_csv, run_rotation_task, run_stacking_task, GraspAttachment,
    ReportFormat, TaskKind, TaskReport, TaskScenario, TaskSetup,
};

fn run(kind: TaskKind, wrist: bool, setup: &TaskSetup) -> TaskReport {
    match kind {
        TaskKind::Rotation => run_rotation_task(wrist, setup),
        TaskKind::Stacking => run_stacking_task(wrist, setup),
    }
    .unwrap()
}

#[test]
fn shipped_scenarios_show_monotone_benefit() {
    for kind in [TaskKind::Rotation, TaskKind::Stacking] {
        let setup = TaskSetup::shipped(kind);
        let on = run(kind, true, &setup);
        let off = run(kind, false, &setup);
        assert!(on.config_change_count <= off.config_change_count, "{kind:?}");
        for j in [2, 3] {
            assert!(
                on.travel_max_deg[j] <= off.travel_max_deg[j],
                "{kind:?} joint {}: {} > {}",
                j + 1,
                on.travel_max_deg[j],
                off.travel_max_deg[j]
            );
        }
        let c = compare_conditions(&on, &off).unwrap();
        assert!(c.travel_max_diff_deg[3] > 0.0);
    }
}

#[test]
fn rotation_time_ratio_below_one() {
    let setup = TaskSetup::shipped(TaskKind::Rotation);
    let c = compare_conditions(&run(TaskKind::Rotation, true, &setup), &run(TaskKind::Rotation, false, &setup)).unwrap();
    assert!(c.time_proxy_ratio.unwrap() < 1.0);
}

#[test]
fn reports_are_reproducible() {
    for kind in [TaskKind::Rotation, TaskKind::Stacking] {
        let setup = TaskSetup::shipped(kind);
        for wrist in [false, true] {
            let a = run(kind, wrist, &setup);
            let b = run(kind, wrist, &setup);
            for f in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg] {
                assert_eq!(export_report(&a, f).unwrap(), export_report(&b, f).unwrap());
            }
        }
    }
}

#[test]
fn json_report_round_trips() {
    let r = run(TaskKind::Stacking, false, &TaskSetup::shipped(TaskKind::Stacking));
    let text = export_report(&r, ReportFormat::Json).unwrap();
    let back = TaskReport::from_json(&text, "report").unwrap();
    assert_eq!(export_report(&back, ReportFormat::Json).unwrap(), text);
    assert_eq!(back.config_change_count, r.config_change_count);
}

#[test]
fn event_rows_match_count() {
    for wrist in [false, true] {
        let r = run(TaskKind::Rotation, wrist, &TaskSetup::shipped(TaskKind::Rotation));
        let rows = report_csv(&r).lines().filter(|l| l.starts_with("event,")).count();
        assert_eq!(rows, r.config_change_count);
        assert_eq!(r.events.len(), r.config_change_count);
    }
}

#[test]
fn zero_rotation_is_a_null_task() {
    let mut setup = TaskSetup::shipped(TaskKind::Rotation);
    setup.scenario.disc.as_mut().unwrap().rotation_deg = 0.0;
    for wrist in [false, true] {
        let r = run(TaskKind::Rotation, wrist, &setup);
        assert_eq!(r.config_change_count, 0);
        assert!(r.success);
        assert!(r.travel_cumulative_deg.iter().all(|v| v.abs() < 1e-9), "{:?}", r.travel_cumulative_deg);
    }
}

#[test]
fn no_cubes_is_vacuous_success() {
    let mut setup = TaskSetup::shipped(TaskKind::Stacking);
    setup.scenario.stacking.as_mut().unwrap().cube.clear();
    let r = run(TaskKind::Stacking, false, &setup);
    assert!(r.success);
    assert!(r.cubes.is_empty());
    assert_eq!(r.config_change_count, 0);
}

#[test]
fn tool_stays_over_the_bench() {
    for kind in [TaskKind::Rotation, TaskKind::Stacking] {
        let setup = TaskSetup::shipped(kind);
        let bounds = setup.scenario.bench.bounds();
        for wrist in [false, true] {
            let r = run(kind, wrist, &setup);
            let flagged = r.events.iter().any(|e| e.cause == "workspace_bound");
            for p in &r.tool_path {
                assert!(flagged || bounds.contains(&Vector3::new(p[0], p[1], p[2])), "{kind:?} {p:?}");
            }
        }
    }
}

#[test]
fn shipped_geometry() {
    let rot = TaskScenario::shipped(TaskKind::Rotation);
    let disc = rot.disc.unwrap();
    assert_eq!((disc.diameter_mm, disc.thickness_mm, disc.rotation_deg), (90.0, 20.0, 90.0));
    let st = TaskScenario::shipped(TaskKind::Stacking);
    let (w, d) = st.bench.size_mm();
    assert_eq!((w.min(d), w.max(d)), (100.0, 130.0));
    let spec = st.stacking.unwrap();
    assert_eq!(spec.cube_size_mm, 50.0);
    let axes: Vec<_> = spec.cube.iter().map(|c| (c.axis.as_str(), c.rotation_deg.signum())).collect();
    assert_eq!(
        axes,
        [("yaw", 1.0), ("yaw", -1.0), ("roll", 1.0), ("roll", -1.0), ("pitch", 1.0), ("pitch", -1.0)]
    );
    for c in &spec.cube {
        assert!(st.bench.contains_xy(c.start_mm[0], c.start_mm[1]));
        assert_eq!(c.rotation_deg.abs(), 90.0);
    }
}

#[test]
fn scenario_files_reject_unknown_keys() {
    let text = include_str!("../data/rotation.toml").replace("step_deg", "stpe_deg");
    assert!(TaskScenario::from_toml(&text, "rotation.toml").is_err());
}

fn pose(v: [f64; 6]) -> Transform {
    let axis = Vector3::new(v[3], v[4], v[5]);
    let r = if axis.norm() > 1e-9 { Transform::rot_axis(&axis.normalize(), axis.norm()) } else { Transform::identity() };
    Transform::new(r.rotation, Vector3::new(v[0], v[1], v[2]))
}

proptest! {
    #[test]
    fn attached_object_follows_the_palm(
        palm in prop::array::uniform6(-3.0f64..3.0),
        next in prop::array::uniform6(-3.0f64..3.0),
        off in prop::array::uniform3(-15.0f64..15.0),
    ) {
        let settings = TaskScenario::shipped(TaskKind::Stacking).planner;
        let palm = pose([palm[0] * 100.0, palm[1] * 100.0, palm[2] * 100.0, palm[3], palm[4], palm[5]]);
        let object = palm * Transform::from_translation(off[0], off[1], off[2]);
        let g = GraspAttachment::try_attach(5, &palm, &object, 1.0, &settings);
        prop_assert!(g.attached);
        prop_assert!(g.object_pose(&palm).approx_eq(&object, 1e-9));
        let moved = pose([next[0] * 100.0, next[1] * 100.0, next[2] * 100.0, next[3], next[4], next[5]]);
        let held = g.object_pose(&moved);
        prop_assert!((moved.inverse() * held).approx_eq(&g.offset, 1e-9));
        prop_assert!(!GraspAttachment::try_attach(5, &palm, &object, 0.5, &settings).attached);
    }
}
