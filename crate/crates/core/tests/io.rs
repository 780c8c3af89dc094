use bayesmet::measurement::{
    load_povm, parse_povm, povm_to_json, two_phase_povm, Completion, Povm,
};
use bayesmet::models::{
    load_model, model_to_json, parse_model, preset_global_imaging, preset_local_imaging,
    preset_qubit_network, save_model,
};
use bayesmet::operators::{frobenius, random_orthonormal_basis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn models_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, model) in [
        preset_qubit_network(1.3).unwrap(),
        preset_global_imaging(3, 4, 0.9, false).unwrap(),
        preset_local_imaging(2, 4, 6, false).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let path = dir.path().join(format!("model{i}.json"));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert!(model.approx_eq(&back, 1e-12));
        let again = parse_model(&model_to_json(&back), "again").unwrap();
        assert_eq!(model_to_json(&back), model_to_json(&again));
    }
}

#[test]
fn model_errors_name_the_offending_field() {
    let model = preset_qubit_network(1.0).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&model_to_json(&model)).unwrap();
    value["weights"] = serde_json::json!([1.0, -1.0]);
    let err = parse_model(&value.to_string(), "bad.json")
        .unwrap_err()
        .to_string();
    assert!(err.contains("weight"), "{err}");

    let err = parse_model("{\"format\": \"other\"}", "x.json")
        .unwrap_err()
        .to_string();
    assert!(err.contains("x.json"), "{err}");
}

#[test]
fn missing_model_file_is_an_io_error() {
    let err = load_model(std::path::Path::new("/nonexistent/model.json")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/model.json"));
}

#[test]
fn povm_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let povm = Povm::from_basis(&random_orthonormal_basis(4, &mut rng)).unwrap();
    let path = dir.path().join("povm.json");
    std::fs::write(&path, povm_to_json(&povm)).unwrap();
    let (back, record) = load_povm(&path, Completion::Residual).unwrap();
    assert!(!record.applied);
    assert_eq!(back.labels(), povm.labels());
    for (a, b) in povm.elements().iter().zip(back.elements()) {
        assert!(frobenius(&(a.matrix() - b.matrix())) < 1e-12);
    }
}

#[test]
fn shipped_two_phase_povm_matches_the_builtin() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/two_phase_povm.json"
    );
    for convention in [Completion::Residual, Completion::Renormalize] {
        let (file, file_rec) = load_povm(std::path::Path::new(path), convention).unwrap();
        let (builtin, rec) = two_phase_povm(convention).unwrap();
        assert_eq!(file_rec.applied, rec.applied);
        assert_eq!(file.len(), builtin.len());
        for (a, b) in file.elements().iter().zip(builtin.elements()) {
            assert!(frobenius(&(a.matrix() - b.matrix())) < 1e-12);
        }
    }
}

#[test]
fn malformed_povm_reports_the_element() {
    let text = r#"{"format":"bayesmet-povm-v1","elements":[
        {"matrix":[[[1,0],[0,0]],[[0,0],[0,0]]]},
        {"matrix":[[[0,0],[0,0]],[[0,0],[-0.5,0]]]}]}"#;
    let err = parse_povm(text, "neg.json", Completion::Residual)
        .unwrap_err()
        .to_string();
    assert!(err.contains("element 1"), "{err}");
}
