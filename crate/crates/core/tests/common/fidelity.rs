//! Constructor fidelity: Φ of each built network against the closed form.

use divnet_core::builders::{bregman_net, conj_jensen_net, f_net, jensen_net, sym_bregman_net};
use divnet_core::identities::{f_generator, sample_masses};
use divnet_core::sampling::{log_uniform, trial_rng};
use divnet_core::{phi, WeightedPoints};
use rand::Rng;

use super::{bregman, conj_jensen, f_divergence, jensen, rel, spec, sym_bregman};

pub const FIDELITY_TOL: f64 = 1e-9;

pub const CONSTRUCTORS: [&str; 5] = [
    "bregman_net",
    "sym_bregman_net",
    "jensen_net",
    "conj_jensen_net",
    "f_net",
];

/// Worst relative residual per constructor over `trials` random inputs.
pub fn constructor_residuals(g: &str, seed: u64, trials: u64) -> Vec<(&'static str, f64)> {
    let mut worst = [0.0f64; 5];
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let dim = rng.random_range(1..=4);
        let s = spec(g, dim);
        let p = s.sample_point(&mut rng).unwrap();
        let q = s.sample_point(&mut rng).unwrap();
        let alpha =
            log_uniform(&mut rng, 0.1, 10.0) * if rng.random_bool(0.3) { -1.0 } else { 1.0 };
        let r = rel(
            phi(&bregman_net(&s, &p, &q, alpha).unwrap(), &s).unwrap(),
            alpha * bregman(g, &p, &q),
        );
        worst[0] = worst[0].max(r);
        let r = rel(
            phi(&sym_bregman_net(&s, &p, &q, alpha).unwrap(), &s).unwrap(),
            alpha * sym_bregman(g, &p, &q),
        );
        worst[1] = worst[1].max(r);

        let m = rng.random_range(2..=5);
        let pts: Vec<Vec<f64>> = (0..m).map(|_| s.sample_point(&mut rng).unwrap()).collect();
        let w: Vec<f64> = (0..m).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
        let sigma: f64 = w.iter().sum();
        let wp = WeightedPoints::new(pts.clone(), w.clone()).unwrap();
        let r = rel(
            phi(&jensen_net(&s, &wp).unwrap(), &s).unwrap(),
            sigma * jensen(g, &pts, &w),
        );
        worst[2] = worst[2].max(r);
        let r = rel(
            phi(&conj_jensen_net(&s, &wp).unwrap(), &s).unwrap(),
            sigma * conj_jensen(g, &pts, &w),
        );
        worst[3] = worst[3].max(r);

        let fs = f_generator(&s).unwrap();
        let n = rng.random_range(2..=5);
        let (mp, mq) = sample_masses(&mut rng, n);
        let total: f64 = mq.iter().sum();
        let r = rel(
            phi(&f_net(&fs, &mp, &mq).unwrap(), &fs).unwrap(),
            total * f_divergence(fs.id(), &mp, &mq),
        );
        worst[4] = worst[4].max(r);
    }
    CONSTRUCTORS.into_iter().zip(worst).collect()
}
