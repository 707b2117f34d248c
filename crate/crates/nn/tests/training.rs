use lsd2_core::scene::procedural_scene;
use lsd2_core::synth::{synthesize_pair, SynthParams};
use lsd2_core::Rng;
use lsd2_nn::{train, Model, ModelConfig, TrainConfig, TrainSample, TrainState, UNetConfig};

#[test]
fn tiny_unet_overfits_one_sample() {
    let src = procedural_scene(4, 0, 16, 16);
    let pair = synthesize_pair(&src, None, &SynthParams::lsd2(), &mut Rng::new(2)).unwrap();
    let sample = TrainSample::<f32>::from_images(&pair.short, &pair.long, &pair.target).unwrap();
    let model = Model::new(
        ModelConfig::Lsd2(UNetConfig {
            depth: 2,
            base_features: 8,
            ..UNetConfig::default()
        }),
        1,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        initial_lr: 3e-3,
        lr_halving_period: None,
        ..TrainConfig::lsd2()
    };
    let mut st = TrainState::new(model, &cfg);
    let initial = st.model.loss(&sample).unwrap() as f64;
    train(&mut st, std::slice::from_ref(&sample), &cfg, |_| Ok(())).unwrap();
    let last = st.model.loss(&sample).unwrap() as f64;
    assert_eq!(st.adam.step, 500);
    assert!(last < 0.01 * initial, "initial {initial}, final {last}");
}
