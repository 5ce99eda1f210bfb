use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bec::{simulate_round_robin, BecParams};
use crate::corpus::{Transcript, Utterance, Vocabulary};
use crate::hawkes::{self, stationarity_margin, DurationModel, EventTimes, HawkesParams};
use crate::matrix::SquareMatrix;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of an autocorrelated series via batch means.
fn batch_se(xs: &[f64]) -> f64 {
    let batches = 50;
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(mean).collect();
    (variance(&means) / means.len() as f64).sqrt()
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

const KS_1PCT: f64 = 1.628;

fn ks_critical(n: usize, m: usize) -> f64 {
    KS_1PCT * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Regularized lower incomplete gamma for integer shape via the Poisson tail.
fn gamma_cdf_int(shape: u32, rate: f64, x: f64) -> f64 {
    let lx = rate * x;
    let mut term = (-lx).exp();
    let mut sum = term;
    for k in 1..shape {
        term *= lx / k as f64;
        sum += term;
    }
    1.0 - sum
}

#[test]
fn slice_1d_gamma_moments() {
    let target = Gamma1 {
        shape: 10.0,
        scale: 10.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = 50.0;
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            x = slice_sample_1d(
                |v| target.log_density(v),
                x,
                30.0,
                Interval::POSITIVE,
                200,
                &mut rng,
            )
            .unwrap()
            .value;
            x
        })
        .collect();
    let m = mean(&draws);
    assert!((m - 100.0).abs() < 3.0 * batch_se(&draws), "mean {m}");
    let sq: Vec<f64> = draws.iter().map(|v| (v - 100.0).powi(2)).collect();
    let v = mean(&sq);
    assert!((v - 1000.0).abs() < 3.0 * batch_se(&sq), "variance {v}");
}

#[test]
fn slice_1d_uniform_passes_ks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dom = Interval::new(0.0, 1.0);
    let mut x = 0.5;
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            x = slice_sample_1d(|_| 0.0, x, 1.0, dom, 200, &mut rng)
                .unwrap()
                .value;
            x
        })
        .collect();
    let d = ks_one_sample(&draws, |u| u);
    assert!(d < KS_1PCT / (draws.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn hyperrect_gamma_moments() {
    let target = Gamma1 {
        shape: 10.0,
        scale: 20.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = vec![150.0, 250.0];
    let mut cols = [Vec::new(), Vec::new()];
    for _ in 0..100_000 {
        x = slice_sample_hyperrect(
            |v| v.iter().map(|&u| target.log_density(u)).sum(),
            &x,
            &[150.0, 150.0],
            Interval::POSITIVE,
            &mut rng,
        )
        .unwrap()
        .value;
        cols[0].push(x[0]);
        cols[1].push(x[1]);
    }
    for c in &cols {
        let m = mean(c);
        assert!((m - 200.0).abs() < 3.0 * batch_se(c), "mean {m}");
        let sq: Vec<f64> = c.iter().map(|v| (v - 200.0).powi(2)).collect();
        let v = mean(&sq);
        assert!((v - 4000.0).abs() < 3.0 * batch_se(&sq), "variance {v}");
    }
}

#[test]
fn hyperrect_in_one_dimension_matches_univariate() {
    let target = Gamma1 {
        shape: 3.0,
        scale: 2.0,
    };
    let thin = 20;
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = 6.0;
    let mut a = Vec::new();
    for i in 0..n * thin {
        x = slice_sample_1d(
            |v| target.log_density(v),
            x,
            4.0,
            Interval::POSITIVE,
            200,
            &mut rng,
        )
        .unwrap()
        .value;
        if i % thin == 0 {
            a.push(x);
        }
    }
    let mut y = vec![6.0];
    let mut b = Vec::new();
    for i in 0..n * thin {
        y = slice_sample_hyperrect(
            |v| target.log_density(v[0]),
            &y,
            &[8.0],
            Interval::POSITIVE,
            &mut rng,
        )
        .unwrap()
        .value;
        if i % thin == 0 {
            b.push(y[0]);
        }
    }
    let d = ks_two_sample(&a, &b);
    assert!(d < ks_critical(a.len(), b.len()), "KS {d}");
}

fn single_person_events(n: usize, horizon: f64, seed: u64) -> EventTimes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = HawkesParams {
        base_rate: vec![n as f64 / horizon],
        excitation: SquareMatrix::zeros(1),
        decay: vec![1.0],
    };
    hawkes::simulate(
        &params,
        horizon,
        &DurationModel::Constant { value: 0.01 },
        10 * n,
        &mut rng,
    )
    .unwrap()
}

#[test]
fn poisson_rate_posterior_matches_closed_form() {
    let events = single_person_events(500, 100.0, 5);
    let n = events.total();
    let cfg = SamplerConfig {
        burn_in: 200,
        samples: 50_000,
        seed: 6,
        ..SamplerConfig::default()
    };
    let out = run_chain(
        Model::Hawkes,
        ModelData::events(&events),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    assert!(out.is_complete());
    let draws: Vec<f64> = out
        .draws
        .iter()
        .step_by(5)
        .map(|d| d.hawkes.as_ref().unwrap().base_rate[0])
        .collect();
    // Flat prior times Poisson likelihood: Gamma(N + 1, rate T).
    let d = ks_one_sample(&draws, |x| gamma_cdf_int(n as u32 + 1, 100.0, x));
    assert!(d < KS_1PCT / (draws.len() as f64).sqrt(), "KS {d}");
    let m = mean(&draws);
    let rate = n as f64 / 100.0;
    assert!((m - rate).abs() < 0.05 * rate, "mean {m} vs {rate}");
}

#[test]
fn excitation_recovered_within_two_sd() {
    let truth = HawkesParams {
        base_rate: vec![0.3, 0.2, 0.25],
        excitation: SquareMatrix::try_from(vec![
            vec![0.0, 0.3, 0.05],
            vec![0.1, 0.0, 0.25],
            vec![0.2, 0.05, 0.0],
        ])
        .unwrap(),
        decay: vec![1.5, 1.4, 1.6],
    };
    let margin = stationarity_margin(&truth);
    assert!(margin > 0.45 && margin < 0.55, "margin {margin}");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let events = hawkes::simulate(
        &truth,
        3000.0,
        &DurationModel::Exponential { mean: 0.05 },
        hawkes::DEFAULT_EVENT_CAP,
        &mut rng,
    )
    .unwrap();
    let cfg = SamplerConfig {
        burn_in: 300,
        samples: 1500,
        seed: 8,
        ..SamplerConfig::default()
    };
    let out = run_chain(
        Model::Hawkes,
        ModelData::events(&events),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    assert!(out.is_complete());
    for q in 0..3 {
        for p in (0..3).filter(|&p| p != q) {
            let xs: Vec<f64> = out
                .draws
                .iter()
                .map(|d| d.hawkes.as_ref().unwrap().excitation[(q, p)])
                .collect();
            let (m, sd) = (mean(&xs), variance(&xs).sqrt());
            let t = truth.excitation[(q, p)];
            assert!(
                (m - t).abs() <= 2.0 * sd,
                "nu[{q},{p}] mean {m} sd {sd} truth {t}"
            );
        }
    }
    for d in &out.draws {
        assert!(stationarity_margin(d.hawkes.as_ref().unwrap()) > 0.0);
    }
}

fn small_corpus(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = BecParams {
        concentration: vec![50.0, 80.0],
        inherent: vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
        ],
        influence: SquareMatrix::off_diagonal(2, 1.0),
        decay: vec![5.0, 5.0],
    };
    simulate_round_robin(
        &params,
        30,
        8.0,
        100.0,
        vec!["a".into(), "b".into()],
        &mut rng,
    )
    .unwrap()
}

fn quick_cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        burn_in: 10,
        samples: 20,
        seed,
        checkpoint_every: 7,
        adapt_interval: 5,
        ..SamplerConfig::default()
    }
}

#[test]
fn chains_are_deterministic_and_positive() {
    let t = small_corpus(9);
    for model in Model::ALL {
        let a = run_chain(
            model,
            ModelData::transcript(&t),
            &Priors::default(),
            &quick_cfg(3),
        )
        .unwrap();
        let b = run_chain(
            model,
            ModelData::transcript(&t),
            &Priors::default(),
            &quick_cfg(3),
        )
        .unwrap();
        assert!(a.is_complete(), "{model}: {:?}", a.status);
        assert_eq!(a.draws, b.draws, "{model}");
        assert_eq!(a.draws.len(), 20);
        for d in &a.draws {
            if let Some(bec) = &d.bec {
                bec.validate().unwrap();
            }
            if let Some(h) = &d.hawkes {
                h.validate().unwrap();
                assert!(stationarity_margin(h) > 0.0);
            }
        }
        let c = run_chain(
            model,
            ModelData::transcript(&t),
            &Priors::default(),
            &quick_cfg(4),
        )
        .unwrap();
        assert_ne!(a.draws, c.draws, "{model}");
    }
}

#[test]
fn tied_influence_is_scaled_excitation() {
    let t = small_corpus(10);
    let out = run_chain(
        Model::Tied,
        ModelData::transcript(&t),
        &Priors::default(),
        &quick_cfg(1),
    )
    .unwrap();
    for d in &out.draws {
        let r = d.r.unwrap();
        let h = d.hawkes.as_ref().unwrap();
        let b = d.bec.as_ref().unwrap();
        for (x, y) in b.influence.as_slice().iter().zip(h.excitation.as_slice()) {
            assert_eq!(*x, r * y);
        }
    }
}

#[test]
fn unigram_keeps_influence_at_zero() {
    let t = small_corpus(11);
    let out = run_chain(
        Model::Unigram,
        ModelData::transcript(&t),
        &Priors::default(),
        &quick_cfg(1),
    )
    .unwrap();
    assert!(out.draws.iter().all(|d| d
        .bec
        .as_ref()
        .unwrap()
        .influence
        .as_slice()
        .iter()
        .all(|&x| x == 0.0)));
}

#[test]
fn single_retained_draw() {
    let t = small_corpus(12);
    let cfg = SamplerConfig {
        burn_in: 0,
        samples: 1,
        ..SamplerConfig::default()
    };
    let out = run_chain(
        Model::Bec,
        ModelData::transcript(&t),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    assert_eq!(out.draws.len(), 1);
    assert_eq!(out.loglik.len(), 1);
    assert_eq!(SamplerConfig::default().samples, 3000);
}

#[test]
fn sweeps_are_deterministic() {
    let t = small_corpus(13);
    let cfg = quick_cfg(5);
    let s = Sampler::new(
        Model::Bec,
        ModelData::transcript(&t),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    let mut a = s.init_state().unwrap();
    let mut b = a.clone();
    for _ in 0..2 {
        gibbs_sweep_bec(&mut a, &t, &Priors::default(), &cfg).unwrap();
        gibbs_sweep_bec(&mut b, &t, &Priors::default(), &cfg).unwrap();
    }
    assert_eq!(a, b);
    assert_eq!(a.sweep, 2);
}

#[test]
fn invalid_state_is_rejected_and_untouched() {
    let t = small_corpus(14);
    let cfg = quick_cfg(5);
    let s = Sampler::new(
        Model::Bec,
        ModelData::transcript(&t),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    let mut st = s.init_state().unwrap();
    st.bec.as_mut().unwrap().concentration[0] = -1.0;
    let before = st.clone();
    assert!(gibbs_sweep_bec(&mut st, &t, &Priors::default(), &cfg).is_err());
    assert_eq!(st, before);
}

#[test]
fn resume_is_bit_exact() {
    let t = small_corpus(15);
    let cfg = quick_cfg(21);
    let dir = tempfile::tempdir().unwrap();
    for model in [Model::Bec, Model::Tied] {
        let full = ChainStore::new(dir.path().join("full"), model.as_str());
        let part = ChainStore::new(dir.path().join("part"), model.as_str());
        let data = ModelData::transcript(&t);
        let a =
            run_chain_persisted(model, data, &Priors::default(), &cfg, &full, false, None).unwrap();
        assert!(a.is_complete());
        let stopped = run_chain_persisted(
            model,
            data,
            &Priors::default(),
            &cfg,
            &part,
            false,
            Some(13),
        )
        .unwrap();
        assert_eq!(stopped.status, ChainStatus::Stopped);
        assert_eq!(stopped.state.sweep, 13);
        let b =
            run_chain_persisted(model, data, &Priors::default(), &cfg, &part, true, None).unwrap();
        assert!(b.is_complete());
        assert_eq!(a.draws, b.draws);
        assert_eq!(
            std::fs::read(full.draws_path()).unwrap(),
            std::fs::read(part.draws_path()).unwrap()
        );
        assert_eq!(a.state, b.state);
        let mem = run_chain(model, data, &Priors::default(), &cfg).unwrap();
        assert_eq!(mem.draws, a.draws);
    }
}

#[test]
fn resume_drops_lines_past_checkpoint() {
    let t = small_corpus(16);
    let cfg = quick_cfg(2);
    let dir = tempfile::tempdir().unwrap();
    let store = ChainStore::new(dir.path(), "c");
    let data = ModelData::transcript(&t);
    let a = run_chain_persisted(
        Model::Bec,
        data,
        &Priors::default(),
        &cfg,
        &store,
        false,
        None,
    )
    .unwrap();
    // Simulate a crash after the checkpoint at sweep 14: extra and torn lines.
    let cp = ChainStore::new(dir.path().join("b"), "c");
    run_chain_persisted(
        Model::Bec,
        data,
        &Priors::default(),
        &cfg,
        &cp,
        false,
        Some(14),
    )
    .unwrap();
    let mut text = std::fs::read_to_string(cp.draws_path()).unwrap();
    text.push_str(
        &std::fs::read_to_string(store.draws_path())
            .unwrap()
            .lines()
            .nth(6)
            .unwrap(),
    );
    text.push_str("\n{\"sweep\":");
    std::fs::write(cp.draws_path(), text).unwrap();
    let b =
        run_chain_persisted(Model::Bec, data, &Priors::default(), &cfg, &cp, true, None).unwrap();
    assert_eq!(a.draws, b.draws);
}

#[test]
fn resume_with_other_config_is_refused() {
    let t = small_corpus(17);
    let dir = tempfile::tempdir().unwrap();
    let store = ChainStore::new(dir.path(), "c");
    let data = ModelData::transcript(&t);
    run_chain_persisted(
        Model::Bec,
        data,
        &Priors::default(),
        &quick_cfg(1),
        &store,
        false,
        Some(3),
    )
    .unwrap();
    let r = run_chain_persisted(
        Model::Bec,
        data,
        &Priors::default(),
        &quick_cfg(2),
        &store,
        true,
        None,
    );
    assert!(matches!(r, Err(crate::Error::Usage(_))));
}

#[test]
fn uninformative_corpus_shrinks_influence_to_prior() {
    let v = 4;
    let mut utterances = Vec::new();
    for i in 0..40 {
        utterances.push(Utterance {
            person: i % 2,
            start: i as f64 * 2.0,
            duration: 1.0,
            tokens: vec![(i / 2 % v) as u32],
        });
    }
    let t = Transcript::new(
        utterances,
        vec!["a".into(), "b".into()],
        Vocabulary::synthetic(v),
        100.0,
    )
    .unwrap();
    let cfg = SamplerConfig {
        burn_in: 300,
        samples: 3000,
        seed: 3,
        ..SamplerConfig::default()
    };
    let out = run_chain(
        Model::Bec,
        ModelData::transcript(&t),
        &Priors::default(),
        &cfg,
    )
    .unwrap();
    let prior_mean = Priors::default().resolve().unwrap().rho.mean();
    for (q, p) in [(0, 1), (1, 0)] {
        let xs: Vec<f64> = out
            .draws
            .iter()
            .map(|d| d.bec.as_ref().unwrap().influence[(q, p)])
            .collect();
        let m = mean(&xs);
        assert!(
            (m - prior_mean).abs() < 0.25 * prior_mean,
            "rho[{q},{p}] mean {m}"
        );
    }
}

#[test]
fn fixed_zero_scale_decouples_excitation() {
    let truth = HawkesParams {
        base_rate: vec![0.5, 0.4],
        excitation: SquareMatrix::try_from(vec![vec![0.0, 0.4], vec![0.3, 0.0]]).unwrap(),
        decay: vec![1.0, 1.0],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let events = hawkes::simulate(
        &truth,
        1000.0,
        &DurationModel::Constant { value: 0.1 },
        100_000,
        &mut rng,
    )
    .unwrap();
    let words = BecParams {
        concentration: vec![20.0, 20.0],
        inherent: vec![vec![1.0; 5]; 2],
        influence: SquareMatrix::zeros(2),
        decay: vec![1.0, 1.0],
    };
    let t =
        crate::bec::simulate_contents(&words, &events, 3.0, vec!["a".into(), "b".into()], &mut rng)
            .unwrap();
    let events = t.events();

    let thin = 20;
    let base = SamplerConfig {
        burn_in: 500,
        samples: 20_000,
        beta_inner_loops: 1,
        ..SamplerConfig::default()
    };
    let tied_cfg = SamplerConfig {
        fixed_r: Some(0.0),
        seed: 31,
        ..base.clone()
    };
    let tied = run_chain(
        Model::Tied,
        ModelData::transcript(&t),
        &Priors::default(),
        &tied_cfg,
    )
    .unwrap();
    let solo_cfg = SamplerConfig { seed: 32, ..base };
    let solo = run_chain(
        Model::Hawkes,
        ModelData::events(&events),
        &Priors::default(),
        &solo_cfg,
    )
    .unwrap();
    for (q, p) in [(0, 1), (1, 0)] {
        let nu = |out: &ChainOutput| -> Vec<f64> {
            out.draws
                .iter()
                .step_by(thin)
                .map(|d| d.hawkes.as_ref().unwrap().excitation[(q, p)])
                .collect()
        };
        let (a, b) = (nu(&tied), nu(&solo));
        let d = ks_two_sample(&a, &b);
        assert!(d < ks_critical(a.len(), b.len()), "nu[{q},{p}] KS {d}");
    }
}

#[test]
fn model_names_round_trip() {
    for m in Model::ALL {
        assert_eq!(m.as_str().parse::<Model>().unwrap(), m);
    }
    assert!("lda".parse::<Model>().is_err());
}
