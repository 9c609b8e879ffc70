use hoseq_core::gradcheck::{check_model, toy_dataset, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use hoseq_core::layers::Activation;
use hoseq_core::model::{HoseqConfig, HoseqModel, ModelMode};

fn check(config: &HoseqConfig) -> f64 {
    let data = toy_dataset(config.seed).unwrap();
    let (model, mut store) = HoseqModel::build(config, data.dims()).unwrap();
    let report = check_model(&model, &mut store, &data, DEFAULT_EPSILON, 1.0).unwrap();
    for p in &report.params {
        if p.max_rel_error >= DEFAULT_THRESHOLD {
            eprintln!("{} [{}] a={:e} n={:e} err={:e}", p.name, p.index, p.analytic, p.numeric, p.max_rel_error);
        }
    }
    report.max_error()
}

fn config(mode: ModelMode, seed: u64) -> HoseqConfig {
    HoseqConfig { mode, seed, ..HoseqConfig::default() }.without_dropout()
}

#[test]
fn every_mode_matches_finite_differences() {
    for mode in [ModelMode::Full, ModelMode::CommonOnly, ModelMode::UniqueOnly] {
        for seed in 0..3 {
            let e = check(&config(mode, seed));
            assert!(e < DEFAULT_THRESHOLD, "{mode} seed {seed}: {e:e}");
        }
    }
}

#[test]
fn batchnorm_and_per_step_weights() {
    let mut c = config(ModelMode::Full, 7);
    c.batchnorm = true;
    c.unique.share_step_weights = false;
    let e = check(&c);
    assert!(e < DEFAULT_THRESHOLD, "{e:e}");
}

#[test]
fn smooth_activations() {
    for act in [Activation::Tanh, Activation::Sigmoid] {
        let mut c = config(ModelMode::Full, 3);
        c.activation = act;
        let e = check(&c);
        assert!(e < DEFAULT_THRESHOLD, "{act}: {e:e}");
    }
}
