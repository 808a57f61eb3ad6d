mod support;

use glcert::transforms::{compose, Padding, ResolvableTransform, Transform};

#[test]
fn composition_law_per_transform() {
    for (name, tol) in [
        ("brightness", 1e-10),
        ("contrast", 1e-10),
        ("gamma", 1e-10),
        ("translate", 0.0),
        ("blur", 2e-3),
    ] {
        let err = support::resolvability_error(name, 100);
        assert!(err <= tol, "{name}: {err:e}");
    }
}

#[test]
fn composition_law_for_chains() {
    let chain = compose(vec![
        Transform::Translate { padding: Padding::Wrap },
        Transform::Contrast,
        Transform::Brightness,
    ])
    .unwrap();
    let x = support::random_image(12, 12, 5);
    let inner = [2.0, -1.0, 1.3, 0.1];
    let outer = [-3.0, 4.0, 0.8, -0.2];
    let lhs = chain.apply(&chain.apply(&x, &inner).unwrap(), &outer).unwrap();
    let rhs = chain.apply(&x, &chain.resolve(&outer, &inner).unwrap()).unwrap();
    assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
}
