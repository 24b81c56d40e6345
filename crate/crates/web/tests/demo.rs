use ftjnf_kd_web::{gram_view, model_size, simulate_scene};

#[test]
fn preset_sizes_map_to_themselves() {
    let s = model_size(80, 32).unwrap();
    assert_eq!((s.params, s.nearest_preset.as_str()), (44098, "E"));
    assert!(model_size(0, 4).is_err());
}

#[test]
fn scene_reports_requested_snr() {
    let v = simulate_scene(3, 5.0, 0.5).unwrap();
    assert!((v.meta.measured_snr_db - 5.0).abs() < 1e-9);
    assert_eq!(v.mic_rms.len(), v.mic_positions.len());
    assert_eq!(v.noisy_envelope.len(), 50);
    assert_eq!(v.clean_envelope.len(), 50);
}

#[test]
fn gram_views_are_symmetric() {
    let v = gram_view(1, "G", "I", "flstm", 3).unwrap();
    let n = v.size();
    assert_eq!(v.teacher().len(), n * n);
    for i in 0..n {
        for j in 0..i {
            assert_eq!(v.student()[i * n + j], v.student()[j * n + i]);
        }
    }
    assert!(v.loss() > 0.0);
    assert!(gram_view(1, "G", "I", "flstm", 1000).is_err());
    assert!(gram_view(1, "G", "I", "conv", 0).is_err());
}
