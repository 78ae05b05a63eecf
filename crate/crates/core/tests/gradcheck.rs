use ministl::gradcheck::{check_model, GradcheckOptions};
use ministl::models::ModelKind;
use ministl::rng::{derive_rng, SeedSpec};
use ministl::{FrameSpec, MixerKind, ModelConfig, Registry, Tensor};
use rand::Rng;

fn tiny_metavp(mixer: MixerKind) -> ModelConfig {
    let mut cfg = ModelConfig::metavp(mixer);
    cfg.frame_spec = FrameSpec { channels: 1, height: 8, width: 8 };
    cfg.hid_s = 4;
    cfg.hid_t = 8;
    cfg.n_s = 2;
    cfg.n_t = 2;
    cfg.t = 2;
    cfg.t_prime = 2;
    cfg.mlp_ratio = 2.0;
    cfg
}

fn random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = derive_rng(SeedSpec::new(seed, 1));
    Tensor::from_fn(shape, |_| rng.gen::<f64>())
}

#[test]
fn metavp_mixers_match_finite_differences() {
    let r = Registry::with_defaults();
    for mixer in MixerKind::ALL {
        let cfg = tiny_metavp(mixer);
        let mut model = r.build_f64(&format!("metavp-{mixer}"), &cfg, 3).unwrap();
        let x = random(vec![2, 2, 1, 8, 8], 1);
        let y = random(vec![2, 2, 1, 8, 8], 2);
        let rep = check_model(&mut model, &x, &y, GradcheckOptions::default());
        assert!(rep.max_rel_err < 1e-3, "{mixer}: {rep:?}");
    }
}

#[test]
fn convlstm_rollout_matches_finite_differences() {
    let mut cfg = ModelConfig::mmnist(ModelKind::Convlstm, None);
    cfg.frame_spec = FrameSpec { channels: 1, height: 1, width: 1 };
    cfg.rnn_layers = 2;
    cfg.rnn_hidden = 3;
    cfg.t = 3;
    cfg.t_prime = 2;
    let mut model = Registry::with_defaults().build_f64("convlstm", &cfg, 5).unwrap();
    let rep = check_model(&mut model, &random(vec![2, 3, 1, 1, 1], 3), &random(vec![2, 2, 1, 1, 1], 4), GradcheckOptions::default());
    assert!(rep.max_rel_err < 1e-3, "{rep:?}");
}
