use evkit_core::temporal::{
    convlstm_step, init_state, ConvLSTMParams, FeatureMap, PlacementMask, TemporalModule, SCALES,
};
use evkit_core::RealFrame;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_features(dim: usize, sizes: [(usize, usize); 3], rng: &mut impl Rng) -> Vec<FeatureMap> {
    SCALES
        .iter()
        .zip(sizes)
        .map(|(&s, (h, w))| {
            let data = (0..dim * h * w).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
            FeatureMap::new(s, RealFrame::from_vec(dim, h, w, data).unwrap())
        })
        .collect()
}

proptest! {
    #[test]
    fn zero_projection_keeps_features_bit_exact(seed in any::<u64>(), hidden in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 3;
        prop_assume!(hidden != dim);
        let modules = (0..3).map(|_| Some(ConvLSTMParams::random(3, dim, hidden, &mut rng))).collect();
        let mut module = TemporalModule::new(modules, PlacementMask::ALL).unwrap();
        for _ in 0..3 {
            let feats = random_features(dim, [(6, 5), (3, 3), (2, 2)], &mut rng);
            prop_assert_eq!(module.step(&feats).unwrap(), feats);
        }
        prop_assert!(module.states().iter().all(Option::is_some));
    }

    #[test]
    fn reset_matches_a_fresh_module(seed in any::<u64>(), warmup in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modules: Vec<_> = (0..3).map(|_| Some(ConvLSTMParams::random(3, 2, 2, &mut rng))).collect();
        let mask = PlacementMask([true, rng.gen(), true]);
        let mut used = TemporalModule::new(modules.clone(), mask).unwrap();
        for _ in 0..warmup {
            used.step(&random_features(2, [(4, 4), (2, 2), (1, 1)], &mut rng)).unwrap();
        }
        used.reset();
        let mut fresh = TemporalModule::new(modules, mask).unwrap();
        for _ in 0..2 {
            let feats = random_features(2, [(4, 4), (2, 2), (1, 1)], &mut rng);
            prop_assert_eq!(used.step(&feats).unwrap(), fresh.step(&feats).unwrap());
        }
    }

    #[test]
    fn module_step_equals_manual_recurrence(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ConvLSTMParams::random(3, 2, 2, &mut rng);
        let mut module = TemporalModule::new(vec![Some(params.clone()), None, None], PlacementMask([true, false, false])).unwrap();
        let mut state = init_state(5, 4, &params);
        for _ in 0..4 {
            let feats = random_features(2, [(5, 4), (2, 2), (1, 1)], &mut rng);
            let (out, next) = convlstm_step(&feats[0], &state, &params).unwrap();
            state = next;
            let stepped = module.step(&feats).unwrap();
            for ((&e, &o), &got) in feats[0].values.data().iter().zip(out.values.data()).zip(stepped[0].values.data()) {
                prop_assert_eq!(got, if o != 0.0 { e + o } else { e });
            }
            prop_assert_eq!(&stepped[1..], &feats[1..]);
        }
    }
}

/// Textbook scalar LSTM on one pixel with one channel.
fn scalar_lstm(x: f64, h: f64, c: f64, wx: [f64; 4], wh: [f64; 4], b: [f64; 4]) -> (f64, f64) {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z: Vec<f64> = (0..4).map(|k| wx[k] * x + wh[k] * h + b[k]).collect();
    let c_next = sig(z[1]) * c + sig(z[0]) * z[2].tanh();
    (sig(z[3]) * c_next.tanh(), c_next)
}

#[test]
fn one_by_one_kernel_is_a_per_pixel_lstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = ConvLSTMParams::zeros(1, 1, 1);
    for v in p.w_x.iter_mut().chain(&mut p.w_h).chain(&mut p.bias) {
        *v = rng.gen_range(-1.5..1.5);
    }
    let x = FeatureMap::new(3, RealFrame::from_vec(1, 2, 3, (0..6).map(|i| i as f32 * 0.3 - 0.8).collect()).unwrap());
    let mut state = init_state(2, 3, &p);
    for (k, v) in state.hidden.data_mut().iter_mut().enumerate() {
        *v = 0.1 * k as f32 - 0.2;
    }
    for (k, v) in state.cell.data_mut().iter_mut().enumerate() {
        *v = 0.5 - 0.15 * k as f32;
    }
    let (out, next) = convlstm_step(&x, &state, &p).unwrap();
    let f = |v: &[f32]| -> [f64; 4] { [v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64] };
    for k in 0..6 {
        let (h, c) = scalar_lstm(
            x.values.data()[k] as f64,
            state.hidden.data()[k] as f64,
            state.cell.data()[k] as f64,
            f(&p.w_x),
            f(&p.w_h),
            f(&p.bias),
        );
        assert!((out.values.data()[k] as f64 - h).abs() < 1e-6);
        assert!((next.cell.data()[k] as f64 - c).abs() < 1e-6);
    }
}
