use cdfilter::model::ModelStatistics;
use cdfilter::{simulate_truth, CoordinatedTurn64, LinearModel, MeasurementCase, SamplingSchedule, VanDerPol64};
use nalgebra::{DMatrix, DVector};

fn scalar_model(a: f64, q: f64, p0: f64, r: f64) -> LinearModel<f64> {
    LinearModel::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, 1.0),
        ModelStatistics {
            diffusion: DMatrix::from_element(1, 1, 1.0),
            process_cov: DMatrix::from_element(1, 1, q),
            meas_cov: DMatrix::from_element(1, 1, r),
            initial_mean: DVector::from_element(1, 0.5),
            initial_cov: DMatrix::from_element(1, 1, p0),
            angle_mask: vec![false],
        },
    )
    .unwrap()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn ornstein_uhlenbeck_moments() {
    // x' = -x + noise with intensity 0.5: Var x(1) = e^-2 p0 + 0.25 (1 - e^-2).
    let model = scalar_model(-1.0, 0.5, 0.2, 0.01);
    let schedule = SamplingSchedule::new(vec![1.0]).unwrap();
    let runs = 4000;
    let mut xs = Vec::with_capacity(runs);
    let mut residuals = Vec::with_capacity(runs);
    for stream in 0..runs as u64 {
        let rec = simulate_truth(&model, &schedule, 1e-3, 99, stream).unwrap();
        xs.push(rec.true_states[(0, 0)]);
        residuals.push(rec.measurements[(0, 0)] - rec.true_states[(0, 0)]);
    }
    let e2 = (-2.0f64).exp();
    let (mean, var) = moments(&xs);
    let expected_var = e2 * 0.2 + 0.25 * (1.0 - e2);
    assert!((mean - 0.5 * (-1.0f64).exp()).abs() < 4.0 * (expected_var / runs as f64).sqrt());
    assert!((var / expected_var - 1.0).abs() < 0.1, "{var} vs {expected_var}");
    let (rm, rv) = moments(&residuals);
    assert!(rm.abs() < 4.0 * (0.01 / runs as f64).sqrt());
    assert!((rv / 0.01 - 1.0).abs() < 0.1);
}

#[test]
fn brownian_variance_grows_linearly() {
    let model = scalar_model(0.0, 2.0, 0.0, 1.0);
    let schedule = SamplingSchedule::new(vec![0.5, 1.5]).unwrap();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for stream in 0..3000u64 {
        let rec = simulate_truth(&model, &schedule, 1e-2, 5, stream).unwrap();
        first.push(rec.true_states[(0, 0)]);
        second.push(rec.true_states[(1, 0)]);
    }
    assert!((moments(&first).1 / 1.0 - 1.0).abs() < 0.1);
    assert!((moments(&second).1 / 3.0 - 1.0).abs() < 0.1);
}

#[test]
fn records_are_reproducible_and_streams_independent() {
    let model = CoordinatedTurn64::new(MeasurementCase::Original).unwrap();
    let schedule = SamplingSchedule::uniform(12.0, 150.0).unwrap();
    let a = simulate_truth(&model, &schedule, 1e-3, 42, 3).unwrap();
    let b = simulate_truth(&model, &schedule, 1e-3, 42, 3).unwrap();
    let c = simulate_truth(&model, &schedule, 1e-3, 42, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.measurement_checksum(), b.measurement_checksum());
    assert_ne!(a.measurement_checksum(), c.measurement_checksum());
    // 150 / 12 leaves a partial interval, which is dropped.
    assert_eq!(a.len(), 12);
    assert_eq!(*a.times.last().unwrap(), 144.0);
}

#[test]
fn oscillator_record_length() {
    let model = VanDerPol64::new(1.0).unwrap();
    let schedule = SamplingSchedule::uniform(0.2, 2.0).unwrap();
    let rec = simulate_truth(&model, &schedule, 1e-5, 1, 0).unwrap();
    assert_eq!(rec.len(), 10);
    assert!((rec.times[9] - 2.0).abs() < 1e-12);
}

#[test]
fn csv_export_has_header_and_rows() {
    let model = VanDerPol64::new(1.0).unwrap();
    let schedule = SamplingSchedule::uniform(0.5, 2.0).unwrap();
    let rec = simulate_truth(&model, &schedule, 1e-3, 1, 0).unwrap();
    let path = std::env::temp_dir().join(format!("truth-{}.csv", std::process::id()));
    rec.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x_1,x_2,z_1");
    assert_eq!(lines.len(), 5);
    let _ = std::fs::remove_file(path);
}
