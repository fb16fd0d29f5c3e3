use contactkit_wasm_demo::{
    classify_point_json, planar_fibers_json, three_component_fold_profile_json,
};

#[test]
fn fibers_keep_the_first_integral() {
    let v = planar_fibers_json(&[0.0, 0.0, 1.0, -1.0, 3.0, 0.5], 1.5).unwrap();
    let fibers = v["fibers"].as_array().unwrap();
    assert_eq!(fibers.len(), 3);
    for f in fibers {
        let pts = f["points"].as_array().unwrap();
        assert!(pts.len() > 5);
        let h = |p: &serde_json::Value| {
            p[1].as_f64().unwrap() - (p[0].as_f64().unwrap() - 2.0).abs().ln()
        };
        let h0 = h(&pts[0]);
        for p in pts {
            assert!((h(p) - h0).abs() <= 1e-6);
        }
    }
    assert_eq!(v["contacts"].as_array().unwrap().len(), 2);
    assert!(planar_fibers_json(&[0.0], 1.0).is_err());
    assert!(planar_fibers_json(&[0.0, 0.0], -1.0).is_err());
}

#[test]
fn fold_profile_matches_the_closed_form() {
    let v = three_component_fold_profile_json(0.2, 2.0, 0.2, 40).unwrap();
    let num = v["numeric"].as_array().unwrap();
    let formula = v["formula"].as_array().unwrap();
    assert_eq!(num.len(), 40);
    for (a, b) in num.iter().zip(formula) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-8);
    }
    let cusps = v["cusps"].as_array().unwrap();
    assert_eq!(cusps.len(), 1);
    assert!((cusps[0][2].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    // Cusp at sqrt(alpha2 - 1).
    let v = three_component_fold_profile_json(0.2, 1.5, 0.2, 10).unwrap();
    let z = v["cusps"][0][2].as_f64().unwrap();
    assert!((z - 0.5f64.sqrt()).abs() <= 1e-6, "{z}");
    assert!(three_component_fold_profile_json(0.2, 0.5, 0.2, 10).is_err());
}

#[test]
fn classify_point_labels() {
    let v = classify_point_json("cusp_normal_form", &[0.0, 0.0, 0.0], 1e-4).unwrap();
    assert_eq!(v["label"], "cusp");
    assert_eq!(v["cusp_coefficient"].as_f64().unwrap().round(), 6.0);
    let v = classify_point_json("planar_parabola", &[0.0, 1.0], 1e-4).unwrap();
    assert_eq!(v["kind"], "normally_hyperbolic");
    let x = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let v = classify_point_json("planar_parabola", &[x, 1.0 - x * x + 1e-7], 1e-4).unwrap();
    assert_eq!(v["label"], "fold");
    assert_eq!(v["projected"], true);
    assert!(classify_point_json("nope", &[0.0], 1e-4).is_err());
}
