use std::ffi::{CStr, CString};
use std::ptr;

use geognn_ffi::*;

fn last_error() -> String {
    let p = gg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn manifold_round_trips() {
    let v = [0.3, -1.2, 0.7];
    let (mut x, mut back, mut k, mut p) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]);
    unsafe {
        assert_eq!(gg_exp0(0.75, v.as_ptr(), 3, x.as_mut_ptr()), GgStatus::Ok);
        assert_eq!(gg_log0(0.75, x.as_ptr(), 3, back.as_mut_ptr()), GgStatus::Ok);
        assert_eq!(gg_poincare_to_klein(0.75, x.as_ptr(), 3, k.as_mut_ptr()), GgStatus::Ok);
        assert_eq!(gg_klein_to_poincare(0.75, k.as_ptr(), 3, p.as_mut_ptr()), GgStatus::Ok);
    }
    for i in 0..3 {
        assert!((back[i] - v[i]).abs() < 1e-12);
        assert!((p[i] - x[i]).abs() < 1e-12);
    }
    assert!(gg_last_error().is_null());
}

#[test]
fn klein_mean_and_distance() {
    let pts = [0.5, 0.0, 0.0, 0.0];
    let mut m = [0.0; 2];
    let mut d = 0.0;
    unsafe {
        assert_eq!(gg_klein_mean(1.0, pts.as_ptr(), 2, 2, m.as_mut_ptr()), GgStatus::Ok);
        assert_eq!(gg_distance(1.0, pts.as_ptr(), pts[2..].as_ptr(), 2, &mut d), GgStatus::Ok);
    }
    // Klein image of (0.5, 0) is 0.8; half of it maps back to 0.4 / (1 + sqrt(0.84)).
    assert!((m[0] - 0.4 / (1.0 + 0.84f64.sqrt())).abs() < 1e-12);
    assert_eq!(m[1], 0.0);
    assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-12);
}

#[test]
fn errors_map_to_codes_and_messages() {
    let x = [2.0, 0.0];
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(gg_log0(1.0, x.as_ptr(), 2, out.as_mut_ptr()), GgStatus::Domain);
        assert!(last_error().contains("outside the ball"));
        assert_eq!(gg_exp0(-1.0, x.as_ptr(), 2, out.as_mut_ptr()), GgStatus::InvalidInput);
        assert_eq!(gg_exp0(1.0, ptr::null(), 2, out.as_mut_ptr()), GgStatus::NullPointer);
        assert!(last_error().contains("v"));
        assert_eq!(gg_klein_mean(1.0, x.as_ptr(), 0, 2, out.as_mut_ptr()), GgStatus::InvalidInput);
        let mut g = ptr::null_mut();
        let missing = CString::new("/nonexistent/edges.tsv").unwrap();
        assert_eq!(gg_graph_load(missing.as_ptr(), ptr::null(), ptr::null(), &mut g), GgStatus::Io);
        assert!(g.is_null());
        let mut m = ptr::null_mut();
        assert_eq!(gg_model_load(missing.as_ptr(), &mut m), GgStatus::Io);
        // Null handles are tolerated by queries and frees.
        assert_eq!(gg_graph_node_count(ptr::null()), 0);
        gg_graph_free(ptr::null_mut());
        gg_model_free(ptr::null_mut());
    }
    assert!(!unsafe { CStr::from_ptr(gg_version()) }.to_bytes().is_empty());
}

#[test]
fn graph_sampling_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.tsv");
    std::fs::write(&edges, "0\t1\n0\t2\n1\t3\n2\t4\n4\t5\n").unwrap();
    let features = dir.path().join("features.csv");
    let mut text = String::from("node_id,a,b\n");
    for v in 0..6 {
        text.push_str(&format!("{v},{},{}\n", v as f64 * 0.1, 1.0 - v as f64 * 0.1));
    }
    std::fs::write(&features, text).unwrap();

    let model = geognn::models::Model::new(
        geognn::models::ModelConfig::new(
            geognn::models::Architecture::Gcn,
            geognn::models::Geometry::Hyperbolic,
            2,
        )
        .with_hidden(8, 2),
        2,
        4,
    )
    .unwrap();
    let ckpt = dir.path().join("m.ckpt");
    geognn::models::save_checkpoint(&model, &ckpt).unwrap();

    let e = CString::new(edges.to_str().unwrap()).unwrap();
    let f = CString::new(features.to_str().unwrap()).unwrap();
    let c = CString::new(ckpt.to_str().unwrap()).unwrap();
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(gg_graph_load(e.as_ptr(), f.as_ptr(), ptr::null(), &mut g), GgStatus::Ok);
        assert_eq!(gg_graph_node_count(g), 6);
        assert_eq!(gg_graph_feature_dim(g), 2);

        let fanouts = [5usize, 10];
        let mut s = ptr::null_mut();
        assert_eq!(gg_sample_ego(g, 0, fanouts.as_ptr(), 2, 9, &mut s), GgStatus::Ok);
        let n = gg_subgraph_len(s);
        assert_eq!(n, 5); // 0, its neighbors 1 and 2, then 3 and 4
        let mut nodes = vec![0usize; n];
        assert_eq!(gg_subgraph_nodes(s, nodes.as_mut_ptr(), n), n);
        assert_eq!(nodes[0], 0);
        nodes.sort_unstable();
        assert_eq!(nodes, [0, 1, 2, 3, 4]);

        let mut bad = ptr::null_mut();
        assert_eq!(gg_sample_ego(g, 99, fanouts.as_ptr(), 2, 9, &mut bad), GgStatus::InvalidInput);

        let mut m = ptr::null_mut();
        assert_eq!(gg_model_load(c.as_ptr(), &mut m), GgStatus::Ok);
        assert_eq!(gg_model_input_dim(m), 2);
        let mut class = u32::MAX;
        assert_eq!(gg_model_predict(m, s, &mut class), GgStatus::Ok);
        let batch = geognn::models::GraphBatch::from_subgraphs(&[&geognn::graphstore::sample_ego(
            &geognn::graphstore::TransactionGraph::load(&edges, Some(&features), None).unwrap(),
            0,
            &geognn::graphstore::FanoutSpec::depth2(),
            &mut geognn::rng::stream(9, &[0]),
        )
        .unwrap()])
        .unwrap();
        assert_eq!(class as usize, model.predict(&batch).unwrap()[0]);

        gg_model_free(m);
        gg_subgraph_free(s);
        gg_graph_free(g);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/geognn.h")).unwrap();
    for name in [
        "gg_last_error",
        "gg_exp0",
        "gg_klein_mean",
        "gg_graph_load",
        "gg_sample_ego",
        "gg_model_predict",
        "gg_model_free",
        "typedef struct GgGraph GgGraph",
        "GG_STATUS_NULL_POINTER = 1",
    ] {
        assert!(header.contains(name), "{name}");
    }
    // The header must be valid C when a compiler is around.
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/geognn.h"))
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
