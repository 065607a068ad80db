use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};
use crate::rng;

use super::{DenoiserNet, NoiseSchedule};

/// Ancestral (DDPM) sampling of `n` images under `condition_id`.
///
/// Latents start as seeded standard normals at step `T`. Each step applies the
/// posterior mean `(x - β_t/√(1-ᾱ_t)·ε̂)/√α_t` and, for `t > 1`, adds
/// `√β_t`-scaled seeded noise. The result is clamped to `[-1, 1]` and shaped
/// `[n, side, side]` when `pixels` is a perfect square, `[n, pixels]` otherwise.
pub fn ancestral_sample<R: Real>(
    net: &DenoiserNet<R>,
    sched: &NoiseSchedule,
    condition_id: usize,
    n: usize,
    seed: u64,
) -> Result<Tensor<R>> {
    if n == 0 {
        return Err(Error::Contract("ancestral_sample needs n >= 1".into()));
    }
    let pixels = net.arch.pixels;
    let mut rng = rng::stream(seed, rng::SAMPLING);
    let mut x = Tensor::new(vec![n, pixels], rng::normals::<R>(&mut rng, n * pixels))?;
    let conditions = vec![condition_id; n];

    for t in (1..=sched.steps()).rev() {
        let eps_hat = net.predict(&x, &vec![t; n], &conditions, sched)?;
        let inv_sqrt_alpha = R::of(1.0 / sched.alpha(t).sqrt());
        let eps_coef = R::of(sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt());
        let noise = if t > 1 {
            Some((
                R::of(sched.beta(t).sqrt()),
                rng::normals::<R>(&mut rng, n * pixels),
            ))
        } else {
            None
        };
        let data = x.data_mut();
        for (i, (v, &e)) in data.iter_mut().zip(eps_hat.data()).enumerate() {
            let mean = (*v - eps_coef * e) * inv_sqrt_alpha;
            *v = match &noise {
                Some((sigma, z)) => mean + *sigma * z[i],
                None => mean,
            };
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("sampler diverged at step {t}")));
        }
    }

    let lo = -R::one();
    for v in x.data_mut() {
        *v = v.max(lo).min(R::one());
    }
    let side = (pixels as f64).sqrt().round() as usize;
    if side * side == pixels {
        x.reshape(vec![n, side, side])
    } else {
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PIXELS;
    use crate::diffusion::{DenoiserArch, ScheduleConfig};

    #[test]
    fn single_step_with_zero_denoiser_matches_hand_computation() {
        let arch = DenoiserArch {
            preconditioned: false,
            ..DenoiserArch::default()
        };
        let net = DenoiserNet::<f64>::zeros(arch).unwrap();
        let sched = NoiseSchedule::from_betas(vec![0.3]).unwrap();
        let out = ancestral_sample(&net, &sched, 0, 2, 17).unwrap();
        assert_eq!(out.shape(), &[2, 28, 28]);

        let mut g = rng::stream(17, rng::SAMPLING);
        let init = rng::normals::<f64>(&mut g, 2 * PIXELS);
        for (got, x) in out.data().iter().zip(init) {
            let want = (x * (1.0 / 0.7f64.sqrt())).clamp(-1.0, 1.0);
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let arch = DenoiserArch {
            hidden: 16,
            ..DenoiserArch::default()
        };
        let net = DenoiserNet::<f32>::init(arch, 2).unwrap();
        let sched = ScheduleConfig {
            steps: 10,
            ..ScheduleConfig::default()
        }
        .build()
        .unwrap();
        let a = ancestral_sample(&net, &sched, 4, 3, 5).unwrap();
        let b = ancestral_sample(&net, &sched, 4, 3, 5).unwrap();
        assert_eq!(a.shape(), &[3, 28, 28]);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, ancestral_sample(&net, &sched, 4, 3, 6).unwrap());
    }
}
