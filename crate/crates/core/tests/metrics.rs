mod common;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use skelmesh::hand::{inject_noise, HandTemplate};
use skelmesh::metrics::{
    bench_s2m, position_error, procrustes_align, robustness_sweep, root_relative_joint_error,
    sample_metrics, ErrorMode, DEFAULT_SIGMA_SQ,
};
use skelmesh::s2m::S2MConfig;

use common::{builtin_model, pairs, tiny_config};

fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
    let t = HandTemplate::builtin();
    let x = pairs(&t, 1, seed)[0].0;
    x.joints
        .iter()
        .cycle()
        .take(n)
        .enumerate()
        .map(|(i, p)| p + Vector3::new(0.0, 0.0, i as f64 * 0.01))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn error_ordering(seed in any::<u64>(), noise in 0.5f64..20.0, ox in -50.0f64..50.0) {
        let gt = cloud(seed, 21);
        let pred = inject_noise(&skelmesh::hand::HandSkeleton::from_slice(&gt).unwrap(), noise, seed ^ 1).unwrap();
        let pred: Vec<_> = pred.joints.iter().map(|p| p + Vector3::new(ox, 1.0, -2.0)).collect();
        let raw = position_error(&pred, &gt, ErrorMode::Raw).unwrap();
        let rr = root_relative_joint_error(&pred, &gt).unwrap();
        let pa = procrustes_align(&pred, &gt).unwrap().1;
        let offset = (pred[0] - gt[0]).norm();
        prop_assert!(pa <= rr + 1e-9);
        prop_assert!(rr <= raw + offset + 1e-9);
    }

    #[test]
    fn metrics_ignore_common_rigid_motion(seed in any::<u64>(), a in -3.0f64..3.0, b in -1.5f64..1.5) {
        let gt = cloud(seed, 21);
        let pred: Vec<_> = gt.iter().enumerate().map(|(i, p)| p + Vector3::new((i as f64).sin(), 0.5, (i as f64).cos())).collect();
        let r = Rotation3::from_euler_angles(a, b, 0.3 * a);
        let t = Vector3::new(10.0, -20.0, 5.0);
        let mv = |v: &[Vector3<f64>]| -> Vec<Vector3<f64>> { v.iter().map(|p| r * p + t).collect() };
        let m1 = sample_metrics(&pred, &gt, &pred, &gt).unwrap();
        let m2 = sample_metrics(&mv(&pred), &mv(&gt), &mv(&pred), &mv(&gt)).unwrap();
        for (x, y) in [(m1.mpjpe, m2.mpjpe), (m1.rr_j, m2.rr_j), (m1.pa_j, m2.pa_j), (m1.pa_v, m2.pa_v)] {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn sweep_reference_column_follows_the_analytic_curve() {
    let t = HandTemplate::builtin();
    let (_, model) = builtin_model(tiny_config(), 1);
    let data = pairs(&t, 500, 3);
    let rows = robustness_sweep(&model, &data, &DEFAULT_SIGMA_SQ, 9).unwrap();
    assert_eq!(rows[0].ref_mpjpe, 0.0);
    for r in &rows[1..] {
        let want = 2.0 * r.sigma_sq.sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        assert!((r.ref_mpjpe / want - 1.0).abs() < 0.02, "{r:?} vs {want}");
    }
}

#[test]
fn bench_reports_analytic_counts() {
    let t = HandTemplate::builtin();
    let (_, model) = builtin_model(S2MConfig::default(), 1);
    let x = pairs(&t, 1, 1)[0].0;
    let one = bench_s2m(&model, &x, 1, 3).unwrap();
    let two = bench_s2m(&model, &x, 2, 3).unwrap();
    assert_eq!(one.macs, model.mac_count());
    assert_eq!(one.params, model.param_count());
    assert_eq!(one.macs, two.macs);
    assert!(one.median_ms > 0.0);
}
