use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::NetworkSpec;

/// Zero-mean uniform initialisation with variance `2 / fan_in`, i.e. bound
/// `sqrt(6 / fan_in)`; biases start at zero.
pub fn init_weights(net: &mut NetworkSpec, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers.iter_mut().filter(|l| l.kind.is_parametric()) {
        let fan_in = (layer.kernel * layer.kernel * layer.in_channels) as f64;
        let bound = (6.0 / fan_in).sqrt();
        for w in &mut layer.weights {
            *w = rng.gen_range(-bound..bound);
        }
        layer.biases.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    #[test]
    fn seeded_and_scaled() {
        let build = || {
            NetworkSpec::new(
                "n",
                vec![LayerSpec::conv(3, 64, 3, 1, 0), LayerSpec::head(64, 1)],
            )
            .unwrap()
        };
        let (mut a, mut b) = (build(), build());
        init_weights(&mut a, 9);
        init_weights(&mut b, 9);
        assert_eq!(a, b);
        let w = &a.layers[0].weights;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var - 2.0 / 27.0).abs() < 0.01, "variance {var}");
        assert!(w.iter().all(|v| v.abs() <= (6.0f64 / 27.0).sqrt()));
    }
}
