use glcert::density::sample_y;
use glcert::model::{argmax, train_augmented, Classifier, Layer, Mlp, TrainConfig};
use glcert::synth;
use glcert::transforms::{compose, ParamMap, Transform};
use glcert::{LabeledDataset, SmoothingSpec};

fn transformed_accuracy(model: &Mlp, data: &LabeledDataset, spec: &SmoothingSpec, seed: u64) -> f64 {
    let hits = data
        .images()
        .iter()
        .zip(data.labels())
        .enumerate()
        .filter(|(i, (x, &label))| {
            let draw = spec.draw(seed, *i as u64, x.len());
            let y = sample_y(spec, x, &draw.alpha, &draw.noise).unwrap().clamp_unit();
            argmax(&model.forward(&y).unwrap()) == label
        })
        .count();
    hits as f64 / data.len() as f64
}

#[test]
fn augmentation_helps_under_random_transforms() {
    let spec = SmoothingSpec::new(
        compose(vec![Transform::Contrast, Transform::Brightness]).unwrap(),
        vec![ParamMap::LogNormal { mu: 0.0, sigma: 0.5 }, ParamMap::normal(0.4)],
        0.05,
        1,
    )
    .unwrap();
    let train = synth::shapes(600, 11);
    let test = synth::shapes(400, 12);
    let base = TrainConfig {
        epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut clean = Mlp::new(train.image_shape(), &[64], 4, 1).unwrap();
    train_augmented(&mut clean, &train, &base, |_| {}).unwrap();
    let mut robust = Mlp::new(train.image_shape(), &[64], 4, 1).unwrap();
    train_augmented(
        &mut robust,
        &train,
        &TrainConfig {
            augmentation: Some(spec.clone()),
            ..base
        },
        |_| {},
    )
    .unwrap();
    let (a_clean, a_robust) = (
        transformed_accuracy(&clean, &test, &spec, 99),
        transformed_accuracy(&robust, &test, &spec, 99),
    );
    assert!(a_robust > a_clean, "augmented {a_robust} vs clean {a_clean}");
    assert!(robust.accuracy(&test).unwrap() >= 0.9);
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let data = synth::separable(20, 4, 0);
    let mut model = Mlp::new((4, 4, 1), &[5], 2, 7).unwrap();
    let before = model.params();
    let hist = train_augmented(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        |_| {},
    )
    .unwrap();
    assert!(hist.is_empty());
    assert_eq!(model.params(), before);
}

#[test]
fn zero_weights_predict_uniformly() {
    let mut model = Mlp::new((3, 3, 1), &[4], 5, 0).unwrap();
    model.set_params(&vec![0.0; model.num_params()]).unwrap();
    let x = glcert::Image::filled(3, 3, 1, 0.7).unwrap();
    for p in model.forward(&x).unwrap() {
        assert!((p - 0.2).abs() < 1e-15);
    }
    assert!(model.layers().iter().any(|l| matches!(l, Layer::Relu)));
}
