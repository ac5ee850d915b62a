mod common;

use nalgebra::Vector3;
use skelmesh::error::Error;
use skelmesh::fusion::MgfpModel;
use skelmesh::hand::{HandTemplate, RigConfig, SynthConfig};
use skelmesh::io::{
    export_obj, load_mgfp, load_model, load_pairs, load_s2m, load_template, read_manifest,
    save_mgfp, save_s2m, save_template, write_dataset, StoredModel,
};
use skelmesh::s2m::S2MConfig;

use common::{builtin_model, params, quantized};

#[test]
fn s2m_weights_round_trip_after_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = builtin_model(S2MConfig::default(), 3);
    let path = dir.path().join("m.s2mw");
    save_s2m(&model, &path).unwrap();
    let loaded = load_s2m(&path, Some(model.config())).unwrap();
    assert_eq!(
        params(loaded.named_tensors()),
        quantized(model.named_tensors())
    );
    assert_eq!(loaded.tree(), model.tree());
    assert_eq!(loaded.spec(), model.spec());
    // Saving the loaded model reproduces the file byte for byte.
    let again = dir.path().join("again.s2mw");
    save_s2m(&loaded, &again).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn truncated_weights_name_the_first_missing_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = builtin_model(S2MConfig::default(), 3);
    let path = dir.path().join("m.s2mw");
    save_s2m(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let last = model.named_tensors().last().unwrap().2.len();
    std::fs::write(&path, &bytes[..bytes.len() - 4 * last - 4]).unwrap();
    match load_s2m(&path, None) {
        Err(Error::Format { field, reason }) => {
            let names: Vec<String> = model.named_tensors().into_iter().map(|t| t.0).collect();
            assert_eq!(field, names[names.len() - 2]);
            assert!(reason.contains("truncated"), "{reason}");
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn depth_mismatch_is_incompatible() {
    let dir = tempfile::tempdir().unwrap();
    let (_, model) = builtin_model(S2MConfig::default(), 3);
    let path = dir.path().join("m.s2mw");
    save_s2m(&model, &path).unwrap();
    let want = S2MConfig {
        depth: 4,
        ..S2MConfig::default()
    };
    match load_s2m(&path, Some(&want)) {
        Err(Error::Incompatible { field, .. }) => assert_eq!(field, "depth"),
        other => panic!("expected incompatibility, got {other:?}"),
    }
}

#[test]
fn bad_magic_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.s2mw");
    std::fs::write(&path, b"NOPE\x01\0\0\0").unwrap();
    assert!(matches!(load_s2m(&path, None), Err(Error::Format { field, .. }) if field == "magic"));
}

#[test]
fn mgfp_weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, locked) = builtin_model(S2MConfig::default(), 5);
    let mut model = MgfpModel::new(locked, 2, 8).unwrap();
    for (i, t) in model.tensors_mut().into_iter().enumerate() {
        t.iter_mut()
            .enumerate()
            .for_each(|(j, x)| *x += 1e-3 * ((i + j) % 7) as f64);
    }
    let path = dir.path().join("f.s2mw");
    save_mgfp(&model, &path).unwrap();
    let loaded = load_mgfp(&path, None).unwrap();
    assert_eq!(
        params(loaded.named_tensors()),
        quantized(model.named_tensors())
    );
    assert_eq!(
        params(loaded.locked().named_tensors()),
        quantized(model.locked().named_tensors())
    );
    assert!(matches!(
        load_model(&path, None).unwrap(),
        StoredModel::Mgfp(_)
    ));
    assert!(load_s2m(&path, None).is_err());
}

#[test]
fn template_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = HandTemplate::builtin();
    let path = dir.path().join("t.s2mw");
    save_template(&t, &path).unwrap();
    let back = load_template(&path).unwrap();
    assert_eq!(back.faces, t.faces);
    assert_eq!(back.joint_regressor, t.joint_regressor);
    for (a, b) in back.vertices.iter().zip(&t.vertices) {
        assert!((a - b).norm() < 1e-4);
    }
}

fn parse_obj(text: &str) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let mut v = Vec::new();
    let mut f = Vec::new();
    for line in text.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "v" => v.push(Vector3::new(
                parts[1].parse().unwrap(),
                parts[2].parse().unwrap(),
                parts[3].parse().unwrap(),
            )),
            "f" => f.push([
                parts[1].parse().unwrap(),
                parts[2].parse().unwrap(),
                parts[3].parse().unwrap(),
            ]),
            other => panic!("unexpected line kind {other}"),
        }
    }
    (v, f)
}

#[test]
fn obj_unit_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tri.obj");
    let mesh = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
    ];
    export_obj(&mesh, &[[0, 1, 2]], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
    assert_eq!(text.lines().last().unwrap(), "f 1 2 3");
}

#[test]
fn obj_reparse_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let t = HandTemplate::builtin();
    let path = dir.path().join("hand.obj");
    export_obj(&t.vertices, &t.faces, &path).unwrap();
    let (v, f) = parse_obj(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(v.len(), t.vertex_count());
    assert_eq!(f.len(), t.faces.len());
    for (a, b) in v.iter().zip(&t.vertices) {
        assert!((a - b).abs().max() <= 5e-7 + 1e-12);
    }
    export_obj(&t.vertices, &[], &path).unwrap();
    assert_eq!(
        parse_obj(&std::fs::read_to_string(&path).unwrap()).1.len(),
        0
    );
    assert!(export_obj(&t.vertices[..3], &[[0, 1, 3]], &path).is_err());
}

#[test]
fn datasets_are_byte_identical_across_runs() {
    let t = HandTemplate::builtin();
    let rig = RigConfig {
        n_views: 2,
        ..RigConfig::default()
    }
    .build(Vector3::zeros())
    .unwrap();
    let synth = SynthConfig {
        feature_channels: 4,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(a.path(), &t, "builtin", &rig, &synth, 11, 4, true).unwrap();
    write_dataset(b.path(), &t, "builtin", &rig, &synth, 11, 4, true).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in &names {
        assert_eq!(
            std::fs::read(a.path().join(n)).unwrap(),
            std::fs::read(b.path().join(n)).unwrap(),
            "{n:?}"
        );
    }
    let (m, pairs) = load_pairs(a.path()).unwrap();
    let s = m.regenerate(&t, 2).unwrap();
    assert_eq!(pairs[2].0, s.skeleton);
    assert_eq!(pairs[2].1, s.mesh);
}

#[test]
fn tampered_manifest_fails_hash_check() {
    let t = HandTemplate::builtin();
    let rig = RigConfig::default().build(Vector3::zeros()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(
        dir.path(),
        &t,
        "builtin",
        &rig,
        &SynthConfig::default(),
        1,
        2,
        false,
    )
    .unwrap();
    let p = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&p)
        .unwrap()
        .replace("\"global_seed\": 1", "\"global_seed\": 2");
    std::fs::write(&p, text).unwrap();
    assert!(
        matches!(read_manifest(dir.path()), Err(Error::Format { field, .. }) if field == "config_hash")
    );
}
