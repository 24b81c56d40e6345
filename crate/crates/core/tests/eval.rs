use ftjnf_kd::eval::{
    enhance, plot_size, plot_snr, run_size_sweep, run_snr_sweep, si_sdr, size_summary, snr_summary, ConstantMask,
    EnhanceOptions, EvalProtocol, MaskModel, PesqAdapter, SizeCell, SweepOptions, TestSet, NOISY_LABEL,
};
use ftjnf_kd::losses::KdMethod;
use ftjnf_kd::model::{FtJnfModel, SizePreset};
use ftjnf_kd::scene::{SceneSimulator, SyntheticCorpus};

fn protocol(per_snr: usize, seconds: f64) -> EvalProtocol {
    EvalProtocol {
        snr_grid: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
        examples_per_snr: per_snr,
        example_seconds: seconds,
        seed: 21,
        ..EvalProtocol::default()
    }
}

fn test_set(p: &EvalProtocol) -> TestSet {
    TestSet::simulate(p, &SceneSimulator::default(), &SyntheticCorpus::default()).unwrap()
}

fn no_rows(_: &ftjnf_kd::eval::MetricResult) -> ftjnf_kd::Result<()> {
    Ok(())
}

#[test]
fn identity_mask_returns_the_reference_microphone() {
    let test = test_set(&protocol(1, 0.5));
    let ex = &test.buckets[2].1[0];
    let opts = EnhanceOptions::default();
    let out = enhance(&ConstantMask::identity(), ex, &opts).unwrap();
    let reference = &ex.y.channels[opts.reference_mic];
    assert_eq!(out.len(), reference.len());
    let err: f64 = out.samples.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = reference.iter().map(|v| v * v).sum();
    assert!((err / norm).sqrt() < 1e-9);

    let silent = enhance(&ConstantMask::zero(), ex, &opts).unwrap();
    assert_eq!(silent.len(), reference.len());
    assert!(silent.samples.iter().all(|v| *v == 0.0));
    assert!(si_sdr(&silent, &ex.s).unwrap() <= -59.0);
}

#[test]
fn noisy_baseline_improves_with_snr() {
    let p = protocol(100, 0.5);
    let test = test_set(&p);
    let identity = ConstantMask::identity();
    let report = run_snr_sweep(&[&identity], &test, &p, &SweepOptions::default(), &mut no_rows).unwrap();
    let medians: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.model == NOISY_LABEL && r.metric == "si_sdr")
        .map(|r| r.median.unwrap())
        .collect();
    assert_eq!(medians.len(), 5);
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

#[test]
fn sweeps_are_deterministic_and_cover_every_cell() {
    let p = protocol(2, 0.5);
    let test = test_set(&p);
    let teacher = FtJnfModel::init(&SizePreset::H.config(), 1).unwrap();
    let student = FtJnfModel::init(&SizePreset::I.config(), 2).unwrap();
    let models: Vec<&dyn MaskModel> = vec![&teacher, &student];
    let mut streamed = 0;
    let mut count = |_: &ftjnf_kd::eval::MetricResult| -> ftjnf_kd::Result<()> {
        streamed += 1;
        Ok(())
    };
    let a = run_snr_sweep(&models, &test, &p, &SweepOptions::default(), &mut count).unwrap();
    let b = run_snr_sweep(&models, &test, &p, &SweepOptions::default(), &mut no_rows).unwrap();
    assert_eq!(a, b);
    assert_eq!(streamed, a.rows.len());
    // noisy plus two models, two metrics, five buckets
    assert_eq!(a.rows.len(), 3 * 2 * 5);
    assert!(run_snr_sweep(&[], &test, &p, &SweepOptions::default(), &mut no_rows).is_err());

    let teacher_cell = SizeCell {
        config: SizePreset::H.config(),
        method: None,
        model: Some(&teacher),
    };
    let cells: Vec<SizeCell> = [KdMethod::Linear, KdMethod::Multi]
        .into_iter()
        .flat_map(|m| {
            [
                SizeCell {
                    config: SizePreset::I.config(),
                    method: Some(m),
                    model: (m == KdMethod::Linear).then_some(&student as &dyn MaskModel),
                },
                SizeCell {
                    config: SizePreset::G.config(),
                    method: Some(m),
                    model: None,
                },
            ]
        })
        .collect();
    let size = run_size_sweep(&cells, &teacher_cell, &test, 0.0, &p, &SweepOptions::default()).unwrap();
    assert_eq!(size.rows.len(), 5);
    assert_eq!(size.rows.iter().filter(|r| r.missing).count(), 3);
    assert_eq!(size.rows[0].method, "teacher");
    assert!(run_size_sweep(&cells, &teacher_cell, &test, 3.0, &p, &SweepOptions::default()).is_err());
    assert!(size_summary(&size, "si_sdr").contains("missing"));

    let dir = tempfile::tempdir().unwrap();
    plot_snr(&a, "si_sdr", &dir.path().join("snr.svg")).unwrap();
    plot_size(&size, "si_sdr", &dir.path().join("size.svg")).unwrap();
    for f in ["snr.svg", "size.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"), "{f}");
    }
    assert!(snr_summary(&a).contains(NOISY_LABEL));
}

fn script(dir: &std::path::Path, name: &str, body: &str) -> PesqAdapter {
    let path = dir.join(name);
    std::fs::write(&path, format!("{body}\n")).unwrap();
    PesqAdapter {
        program: "sh".into(),
        args: vec![path.display().to_string()],
    }
}

#[test]
fn pesq_adapter_scores_and_failures_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let p = EvalProtocol {
        snr_grid: vec![5.0],
        ..protocol(2, 0.5)
    };
    let test = test_set(&p);
    let identity = ConstantMask::identity();
    let good = SweepOptions {
        pesq: Some(script(dir.path(), "good.sh", r#"test -s "$1" && test -s "$2" && echo 2.75"#)),
    };
    let report = run_snr_sweep(&[&identity], &test, &p, &good, &mut no_rows).unwrap();
    let pesq: Vec<_> = report.rows.iter().filter(|r| r.metric == "pesq").collect();
    assert_eq!(pesq.len(), 2);
    assert!(pesq.iter().all(|r| r.values == vec![2.75, 2.75] && r.errors.is_empty()));

    let bad = SweepOptions {
        pesq: Some(script(dir.path(), "bad.sh", "echo broken >&2; exit 1")),
    };
    let report = run_snr_sweep(&[&identity], &test, &p, &bad, &mut no_rows).unwrap();
    let row = report.rows.iter().find(|r| r.metric == "pesq").unwrap();
    assert!(row.values.is_empty() && row.median.is_none());
    assert_eq!(row.errors.len(), 2);
    assert!(report.rows.iter().any(|r| r.metric == "si_sdr" && r.values.len() == 2));
}
