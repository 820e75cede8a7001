use lavc::kernels::Kernel;
use lavc::semivarying::SemiMethod;
use lavc::smoothing::SmootherSpec;
use lavc_sim::stats::ks_standard_normal;
use lavc_sim::*;

fn local_average(h: f64) -> CurveEstimator {
    CurveEstimator::LocalAverage {
        group_size: 10,
        smoother: SmootherSpec::new(Kernel::Epanechnikov, h, 3).unwrap(),
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let mise = MiseConfig {
        dgp: Dgp::new(Model::example(3).unwrap(), 300, 5),
        reps: 12,
        grid_points: 31,
        estimators: vec![
            local_average(0.3),
            CurveEstimator::OneStep {
                kernel: Kernel::Epanechnikov,
                bandwidth: 0.3,
            },
        ],
    };
    let one = in_pool(1, || mise_study(&mise).unwrap());
    let four = in_pool(4, || mise_study(&mise).unwrap());
    assert_eq!(one, four);

    let power = SizePowerConfig {
        example: 8,
        a_values: vec![0.0, 0.5],
        n: 400,
        seed: 3,
        reps: 10,
        group_size: 10,
        alpha: 0.05,
        tests: default_test_specs(400, 1, Kernel::Epanechnikov, true),
        noise: NoiseDist::Normal,
        sigma_override: None,
    };
    let one = in_pool(1, || size_power_study(&power).unwrap());
    let four = in_pool(4, || size_power_study(&power).unwrap());
    assert_eq!(one, four);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    one.write_json(&mut a).unwrap();
    four.write_json(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noiseless_mise_reaches_numerical_floor() {
    let mut dgp = Dgp::new(Model::example(2).unwrap(), 20_000, 1);
    dgp.sigma_override = Some(0.0);
    let cfg = MiseConfig {
        dgp,
        reps: 2,
        grid_points: 91,
        estimators: vec![local_average(0.1)],
    };
    let report = mise_study(&cfg).unwrap();
    let mise = report.rows[0].metrics["mise"];
    assert!(mise < 1e-6, "{mise}");
}

#[test]
fn failing_replication_names_its_seed() {
    let cfg = MiseConfig {
        dgp: Dgp::new(Model::example(1).unwrap(), 60, 77),
        reps: 3,
        grid_points: 11,
        estimators: vec![CurveEstimator::OneStep {
            kernel: Kernel::Epanechnikov,
            bandwidth: 0.005,
        }],
    };
    match mise_study(&cfg) {
        Err(SimError::Replication { rep, seed, label, .. }) => {
            assert_eq!(rep, 0);
            assert_eq!(seed, 77);
            assert_eq!(label, "one_step(h=0.005)");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn study_configs_are_validated() {
    let dgp = Dgp::new(Model::example(2).unwrap(), 100, 1);
    let cfg = MiseConfig {
        dgp,
        reps: 1,
        grid_points: 11,
        estimators: vec![local_average(0.5)],
    };
    assert!(matches!(mise_study(&cfg), Err(SimError::Config(_))));
    let cfg = ConstantCoefConfig {
        dgp,
        reps: 5,
        group_sizes: vec![10],
        method: SemiMethod::Projection,
    };
    assert!(matches!(constant_coef_study(&cfg), Err(SimError::Config(_))));
}

#[test]
fn joint_and_projection_studies_agree() {
    let dgp = Dgp::new(Model::example(5).unwrap(), 400, 8);
    let mut cfg = ConstantCoefConfig {
        dgp,
        reps: 20,
        group_sizes: vec![5],
        method: SemiMethod::Projection,
    };
    let lape = constant_coef_study(&cfg).unwrap();
    cfg.method = SemiMethod::Joint;
    let joint = constant_coef_study(&cfg).unwrap();
    let (a, b) = (&lape.samples["b_hat:I=5"], &joint.samples["b_hat:I=5"]);
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-10);
    }
}

// The kurtosis-corrected T3 standardization is close to N(0, 1) under the
// null at n = 1600.
#[test]
fn t3_null_standardization_is_near_normal() {
    let cfg = SizePowerConfig {
        example: 7,
        a_values: vec![0.0],
        n: 1600,
        seed: 42,
        reps: 1000,
        group_size: 10,
        alpha: 0.05,
        tests: vec![default_test_specs(1600, 1, Kernel::Epanechnikov, true)[2]],
        noise: NoiseDist::Normal,
        sigma_override: None,
    };
    let report = size_power_study(&cfg).unwrap();
    let (d, p) = ks_standard_normal(&report.samples["standardized:a=0/t3"]);
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

// Uniform errors are platykurtic; the corrected variance shrinks the
// standardization while the chi-square referral ignores it.
#[test]
fn t3_kurtosis_correction_under_uniform_errors() {
    let cfg = SizePowerConfig {
        example: 7,
        a_values: vec![0.0],
        n: 800,
        seed: 11,
        reps: 300,
        group_size: 10,
        alpha: 0.05,
        tests: vec![default_test_specs(800, 1, Kernel::Epanechnikov, true)[2]],
        noise: NoiseDist::Uniform,
        sigma_override: None,
    };
    let report = size_power_study(&cfg).unwrap();
    let row = report.row("a=0/t3").unwrap();
    let var_std = row.metrics["var_standardized"];
    assert!(var_std > 0.7 && var_std < 1.4, "{var_std}");
    assert!(row.metrics["rejection_rate"] < 0.1);
}
