use ddm_core::debias::{ddm_objective, Batch, Indicator, IndicatorArch, NoiseDraw};
use ddm_core::diffusion::{DenoiserArch, DenoiserNet, NoiseSchedule, ScheduleConfig};
use ddm_core::metrics::{cross_entropy, OracleClassifier};
use ddm_core::numerics::{finite_difference_check, ParameterSet, Tape};
use ddm_core::rng;
use rand::Rng as _;

const PIXELS: usize = 6;

fn tiny_denoiser(seed: u64) -> DenoiserNet<f64> {
    let arch = DenoiserArch {
        pixels: PIXELS,
        time_dim: 4,
        cond_dim: 3,
        hidden: 7,
        vocab: 12,
        preconditioned: true,
    };
    let mut net = DenoiserNet::init(arch, seed).unwrap();
    // nonzero skip rows so their gradients are exercised too
    let mut g = rng::stream(seed, 100);
    for name in ["skip.gate", "skip.offset"] {
        for v in net.params.get_mut(name).unwrap().data_mut() {
            *v = g.random_range(-0.5..0.5);
        }
    }
    net
}

fn tiny_indicator(seed: u64) -> Indicator<f64> {
    let arch = IndicatorArch {
        input: PIXELS,
        hidden1: 5,
        hidden2: 4,
    };
    Indicator::init(arch, seed).unwrap()
}

fn batch_and_noise(seed: u64, n: usize, sched: &NoiseSchedule) -> (Batch<f64>, NoiseDraw<f64>) {
    let mut g = rng::stream(seed, 200);
    let batch = Batch {
        z0: (0..n * PIXELS).map(|_| g.random_range(-1.0..1.0)).collect(),
        labels: (0..n).map(|i| (i % 2) as u8).collect(),
        conditions: (0..n).map(|_| g.random_range(0..12)).collect(),
    };
    let noise = NoiseDraw {
        steps: (0..n).map(|_| g.random_range(1..=sched.steps())).collect(),
        eps: rng::normals(&mut g, n * PIXELS),
    };
    (batch, noise)
}

fn joint(den: &DenoiserNet<f64>, ind: &Indicator<f64>) -> ParameterSet<f64> {
    let mut all = ParameterSet::new();
    all.absorb("denoiser", den.params.clone()).unwrap();
    all.absorb("indicator", ind.params.clone()).unwrap();
    all
}

fn ddm_gradient_error(seed: u64, alpha: f64) -> f64 {
    let sched = ScheduleConfig {
        steps: 20,
        ..ScheduleConfig::default()
    }
    .build()
    .unwrap();
    let den = tiny_denoiser(seed);
    let ind = tiny_indicator(seed);
    let (batch, noise) = batch_and_noise(seed, 3, &sched);
    let params = joint(&den, &ind);
    assert!(params.numel() <= 2000);
    finite_difference_check(
        |tape, bound| {
            let dv = bound.scoped("denoiser");
            let iv = bound.scoped("indicator");
            Ok(ddm_objective(
                tape,
                &den,
                &dv,
                Some((&ind, &iv)),
                &batch,
                &noise,
                &sched,
                alpha,
            )?
            .loss)
        },
        &params,
        1e-5,
    )
    .unwrap()
}

#[test]
fn ddm_loss_gradients_match_finite_differences() {
    for seed in 0..6 {
        for alpha in [0.0, 0.3, 1.0] {
            let err = ddm_gradient_error(seed, alpha);
            assert!(err <= 1e-4, "seed {seed} alpha {alpha}: {err}");
        }
    }
}

#[test]
fn small_oracle_gradients_match_finite_differences() {
    for seed in 0..4 {
        let oracle = OracleClassifier::<f64>::init_with([12, 9, 7, 5, 10], seed).unwrap();
        let mut g = rng::stream(seed, 300);
        let x: Vec<f64> = (0..4 * 12).map(|_| g.random_range(-1.0..1.0)).collect();
        let labels: Vec<u8> = (0..4).map(|_| g.random_range(0..10)).collect();
        let err = finite_difference_check(
            |tape, bound| {
                let input = tape.constant(vec![4, 12], x.clone())?;
                let (_, probs) = oracle.forward(tape, bound, input)?;
                cross_entropy(tape, probs, &labels)
            },
            &oracle.params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

/// Gradients of the combined loss split linearly into its two parts.
#[test]
fn combined_gradient_is_linear_in_alpha() {
    let sched = ScheduleConfig::default().build().unwrap();
    let den = tiny_denoiser(3);
    let ind = tiny_indicator(3);
    let (batch, noise) = batch_and_noise(3, 4, &sched);
    let params = joint(&den, &ind);
    let grads_of = |which: &str, alpha: f64| -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let dv = bound.scoped("denoiser");
        let iv = bound.scoped("indicator");
        let obj = ddm_objective(
            &mut tape,
            &den,
            &dv,
            Some((&ind, &iv)),
            &batch,
            &noise,
            &sched,
            alpha,
        )
        .unwrap();
        let target = match which {
            "loss" => obj.loss,
            "sdm" => obj.sdm,
            _ => obj.indicator.unwrap(),
        };
        let grads = tape.backward(target).unwrap();
        bound.iter().flat_map(|(_, v)| grads.wrt(v)).collect()
    };
    let sdm = grads_of("sdm", 0.0);
    let ind_g = grads_of("ind", 0.0);
    for alpha in [0.0, 0.01, 0.5, 1.0] {
        let total = grads_of("loss", alpha);
        for ((t, s), i) in total.iter().zip(&sdm).zip(&ind_g) {
            assert!((t - ((1.0 - alpha) * s + alpha * i)).abs() <= 1e-9);
        }
    }
}

/// At α > 0 the indicator loss reaches the denoiser through the reconstruction.
#[test]
fn indicator_term_reaches_denoiser() {
    let sched = ScheduleConfig::default().build().unwrap();
    let den = tiny_denoiser(5);
    let ind = tiny_indicator(5);
    let (batch, noise) = batch_and_noise(5, 4, &sched);
    let params = joint(&den, &ind);
    let denoiser_grads = |alpha: f64| -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let dv = bound.scoped("denoiser");
        let iv = bound.scoped("indicator");
        let obj = ddm_objective(
            &mut tape,
            &den,
            &dv,
            Some((&ind, &iv)),
            &batch,
            &noise,
            &sched,
            alpha,
        )
        .unwrap();
        let grads = tape.backward(obj.loss).unwrap();
        dv.iter().flat_map(|(_, v)| grads.wrt(v)).collect()
    };
    let base = denoiser_grads(0.0);
    let mixed = denoiser_grads(0.5);
    let scaled: Vec<f64> = base.iter().map(|g| 0.5 * g).collect();
    assert!(mixed.iter().zip(&scaled).any(|(a, b)| (a - b).abs() > 1e-9));
}
