//! Exact property checks shared by the `properties` tests and the acceptance
//! binary. Each check returns a one-line summary or a description of the failure.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use qmetro_core::dataset::{sample_grid_dataset, GridDataset};
use qmetro_core::estimator::{bayes_update, shift_table, ParticleSet, Provider, TableProvider};
use qmetro_core::grid::{ParameterGrid, PriorVector, ProbTable, Restriction};
use qmetro_core::models::{FourArmDevice, LikelihoodModel, MachZehnder, OutcomeDistribution, OutcomeIndexing};
use qmetro_core::neural::{
    posterior_table, prior_residual, solve_prior, train_posterior_network, PosteriorNetwork, ShotGroup, TrainConfig,
};
use qmetro_core::policy::{cem_train, run_episode, CemConfig, CemState, EpisodeOutcome, Environment, EstimationEnv};
use qmetro_core::estimator::OutcomeSource;
use qmetro_core::rng;

pub type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

type C4 = [[Complex64; 4]; 4];

fn matmul(a: &C4, b: &C4) -> C4 {
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Four couplers: `B` on modes (0,1) and (2,3), then on (0,2) and (1,3).
fn oracle_quarter() -> C4 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (re, im) = (Complex64::new(h, 0.0), Complex64::new(0.0, h));
    let coupler = |p: usize, q: usize| {
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = Complex64::new(1.0, 0.0);
        }
        m[p][p] = re;
        m[q][q] = re;
        m[p][q] = im;
        m[q][p] = im;
        m
    };
    let first = matmul(&coupler(0, 1), &coupler(2, 3));
    let second = matmul(&coupler(0, 2), &coupler(1, 3));
    matmul(&second, &first)
}

/// Outcome probabilities from the full two-photon wavefunction
/// `Ψ = (U e_a ⊗ U e_b + U e_b ⊗ U e_a)/√2` on the 16-dimensional product space.
fn oracle_two_photon(total: &[f64], input: (usize, usize)) -> Vec<f64> {
    let q = oracle_quarter();
    let mut d = [[Complex64::new(0.0, 0.0); 4]; 4];
    d[0][0] = Complex64::new(1.0, 0.0);
    for m in 0..3 {
        d[m + 1][m + 1] = Complex64::from_polar(1.0, total[m]);
    }
    let u = matmul(&q, &matmul(&d, &q));
    let (a, b) = input;
    let mut psi = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (r, row) in psi.iter_mut().enumerate() {
        for (s, slot) in row.iter_mut().enumerate() {
            *slot = (u[r][a] * u[s][b] + u[r][b] * u[s][a]) / 2f64.sqrt();
        }
    }
    OutcomeIndexing::EVENTS
        .iter()
        .map(|&(r, s)| {
            if r == s {
                psi[r][r].norm_sqr()
            } else {
                psi[r][s].norm_sqr() + psi[s][r].norm_sqr()
            }
        })
        .collect()
}

pub fn two_photon_oracle() -> Check {
    let device = FourArmDevice::ideal();
    let mut r = rng::stream(81, &[]);
    let (mut worst, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let phases: Vec<f64> = (0..3).map(|_| r.random_range(-PI..PI)).collect();
        let controls: Vec<f64> = (0..3).map(|_| r.random_range(-PI..PI)).collect();
        let got = device.outcome_probs(&phases, &controls);
        let total: Vec<f64> = phases.iter().zip(&controls).map(|(p, c)| p + c).collect();
        let want = oracle_two_photon(&total, device.input());
        for (g, w) in got.probs().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        worst_sum = worst_sum.max((got.probs().iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-12 && worst_sum <= 1e-10, || {
        format!("max deviation {worst:.2e}, max |Σp − 1| {worst_sum:.2e}")
    })?;
    Ok(format!("oracle deviation {worst:.1e}, normalisation {worst_sum:.1e}"))
}

fn toy_groups(classes: usize, outcomes: usize, seed: u64) -> Vec<ShotGroup> {
    let mut r = rng::stream(seed, &[]);
    (0..outcomes)
        .map(|d| ShotGroup {
            outcome: d,
            classes: (0..7).map(|_| r.random_range(0..classes as u32)).collect(),
        })
        .collect()
}

pub fn gradient_matches_finite_differences() -> Check {
    let mut net = PosteriorNetwork::new(&[6, 5, 4], 7, 3, &mut rng::stream(82, &[])).map_err(|e| e.to_string())?;
    // Nonzero biases keep every rectifier away from its kink.
    let mut r = rng::stream(82, &[1]);
    net.mlp_mut().params_mut().iter_mut().for_each(|p| *p = r.random_range(-1.0..1.0));
    let groups = toy_groups(7, 3, 83);
    let n = net.mlp().params().len();
    let mut grad = vec![0.0; n];
    net.loss_and_gradient(&groups, &mut grad).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..n {
        let x = net.mlp().params()[i];
        net.mlp_mut().params_mut()[i] = x + h;
        let up = net.loss(&groups).map_err(|e| e.to_string())?;
        net.mlp_mut().params_mut()[i] = x - h;
        let down = net.loss(&groups).map_err(|e| e.to_string())?;
        net.mlp_mut().params_mut()[i] = x;
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    ensure(worst <= 1e-4, || format!("worst relative gradient error {worst:.2e}"))?;
    Ok(format!("{n} parameters, worst relative error {worst:.1e}"))
}

fn likelihood_table(model: &dyn LikelihoodModel, grid: &ParameterGrid) -> ProbTable {
    let d = model.outcome_count();
    let mut values = vec![0.0; d * grid.len()];
    for j in 0..grid.len() {
        let p = model.outcome_probs(&grid.point(j), &vec![0.0; grid.dims()]);
        for (a, v) in p.probs().iter().enumerate() {
            values[a * grid.len() + j] = *v;
        }
    }
    ProbTable::new(grid.clone(), d, values).unwrap()
}

/// Bayes posterior `P(φ_j|d) = f(d|φ_j) q_j / Σ_k f(d|φ_k) q_k` for discrete prior `q`.
fn analytic_posterior(likelihood: &ProbTable, q: &[f64]) -> ProbTable {
    let n = likelihood.grid().len();
    let d = likelihood.outcomes();
    let mut values = vec![0.0; d * n];
    for a in 0..d {
        let row = likelihood.row(a);
        let z: f64 = row.iter().zip(q).map(|(f, p)| f * p).sum();
        for j in 0..n {
            values[a * n + j] = row[j] * q[j] / z;
        }
    }
    ProbTable::new(likelihood.grid().clone(), d, values).unwrap()
}

pub fn prior_residual_on_trained_tables() -> Check {
    let grid = ParameterGrid::new(0.0, PI, 20, 1).unwrap();
    let data = sample_grid_dataset(&MachZehnder, &grid, 200, 84).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 15,
        seed: 85,
        ..TrainConfig::default()
    };
    let net = train_posterior_network(&data, &config).map_err(|e| e.to_string())?.network;
    let post = posterior_table(&net, &grid, 2).map_err(|e| e.to_string())?;
    let freqs = qmetro_core::dataset::outcome_frequencies(&data);
    let sol = solve_prior(&post, &freqs).map_err(|e| e.to_string())?;
    let residual = prior_residual(&post, &freqs, sol.prior.weights(), sol.eigenvalue);
    ensure(residual <= 1e-8, || format!("eigen-residual {residual:.2e}"))?;
    Ok(format!("λ = {:.6}, residual {residual:.1e} after {} iterations", sol.eigenvalue, sol.iterations))
}

pub fn analytic_prior_recovery() -> Check {
    let mut worst = 0.0f64;
    let cases: Vec<(Arc<dyn LikelihoodModel>, ParameterGrid)> = vec![
        (Arc::new(MachZehnder), ParameterGrid::new(0.0, PI, 10, 1).unwrap()),
        (Arc::new(MachZehnder), ParameterGrid::new(0.0, PI, 7, 1).unwrap()),
        (Arc::new(FourArmDevice::ideal()), ParameterGrid::new(0.0, PI, 4, 3).unwrap()),
    ];
    for (i, (model, grid)) in cases.iter().enumerate() {
        let mut r = rng::stream(86, &[i as u64]);
        let raw: Vec<f64> = (0..grid.len()).map(|_| r.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let f = likelihood_table(model.as_ref(), grid);
        let post = analytic_posterior(&f, &q);
        let sol = solve_prior(&post, &f).map_err(|e| format!("case {i}: {e}"))?;
        let got = sol.prior.probabilities();
        for (g, w) in got.iter().zip(&q) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("prior recovery error {worst:.2e}"))?;
    Ok(format!("worst ∞-norm error {worst:.1e} over 3 grids"))
}

/// Mach–Zehnder with fringe visibility 0.9, so no likelihood is exactly zero
/// and the probability floor never acts.
struct DampedMz;

impl LikelihoodModel for DampedMz {
    fn dims(&self) -> usize {
        1
    }

    fn outcome_count(&self) -> usize {
        2
    }

    fn outcome_probs(&self, phases: &[f64], controls: &[f64]) -> OutcomeDistribution {
        let p0 = 0.5 * (1.0 + 0.9 * (phases[0] + controls[0]).cos());
        OutcomeDistribution::new(vec![p0, 1.0 - p0]).unwrap()
    }
}

/// Runs the same outcome/control sequence through a table provider built from
/// an analytic posterior and through the exact model; returns the largest weight gap.
fn table_vs_exact(restricted: bool) -> std::result::Result<f64, String> {
    let full = ParameterGrid::new(0.0, 2.0 * PI, 37, 1).unwrap();
    let raw: Vec<f64> = (0..full.len()).map(|j| 1.0 + 0.5 * full.point(j)[0].cos()).collect();
    let prior = PriorVector::from_weights(full.clone(), raw).map_err(|e| e.to_string())?;
    let f = likelihood_table(&DampedMz, &full);
    let post = analytic_posterior(&f, &prior.probabilities());
    let restriction: Restriction = if restricted {
        full.restrict_to_half_period().map_err(|e| e.to_string())?
    } else {
        full.full_restriction()
    };
    let table = Provider::Table(TableProvider::neural(post, &prior, restriction.clone()).map_err(|e| e.to_string())?);
    let exact = Provider::exact(Arc::new(DampedMz), restriction.sub().clone()).map_err(|e| e.to_string())?;
    let mut a = table.initial_particles();
    let mut b = exact.initial_particles();
    let mut r = rng::stream(87, &[restricted as u64]);
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let c = full.spacing() * r.random_range(-18i64..=18) as f64;
        let outcome = r.random_range(0..2);
        bayes_update(&mut a, outcome, &[c], &table).map_err(|e| e.to_string())?;
        bayes_update(&mut b, outcome, &[c], &exact).map_err(|e| e.to_string())?;
        for (x, y) in a.weights().iter().zip(b.weights()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

pub fn neural_mode_matches_exact_bayes() -> Check {
    let full = table_vs_exact(false)?;
    let half = table_vs_exact(true)?;
    ensure(full <= 1e-9 && half <= 1e-9, || {
        format!("weight gaps {full:.2e} (full grid) and {half:.2e} (restricted)")
    })?;
    Ok(format!("weight gap {full:.1e} full grid, {half:.1e} restricted, 40 shifted updates"))
}

pub fn reward_telescoping() -> Check {
    let model: Arc<dyn LikelihoodModel> = Arc::new(FourArmDevice::ideal());
    let grid = ParameterGrid::new(0.0, PI, 6, 3).unwrap();
    let env = EstimationEnv::new(
        OutcomeSource::Model(model.clone()),
        Provider::exact(model, grid).map_err(|e| e.to_string())?,
        30,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let mut r = rng::stream(88, &[]);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let w: Vec<f64> = (0..env.param_count()).map(|_| r.random_range(-1.0..1.0)).collect();
        let o = run_episode(&env, &w, seed).map_err(|e| e.to_string())?;
        let gap = (o.total_reward - (o.initial_cov_trace - o.final_cov_trace)).abs();
        worst = worst.max(gap);
        ensure(o.total_reward <= o.initial_cov_trace, || "reward exceeds the prior trace".into())?;
    }
    ensure(worst <= 1e-12, || format!("telescoping gap {worst:.2e}"))?;
    Ok(format!("telescoping gap {worst:.1e} over 10 episodes"))
}

pub fn shift_roundtrip() -> Check {
    let grid = ParameterGrid::new(-PI, PI, 5, 3).unwrap();
    let last = grid.n_per_axis() - 1;
    let mut r = rng::stream(89, &[]);
    // Random periodic table: the two ends of each axis are the same phase.
    let base: Vec<f64> = (0..3 * grid.len()).map(|_| r.random_range(0.0..1.0)).collect();
    let mut values = vec![0.0; 3 * grid.len()];
    for j in 0..grid.len() {
        let idx: Vec<usize> = grid.unflatten(j).into_iter().map(|k| if k == last { 0 } else { k }).collect();
        for d in 0..3 {
            values[d * grid.len() + j] = base[d * grid.len() + grid.flatten(&idx)];
        }
    }
    let table = ProbTable::new(grid.clone(), 3, values).unwrap();
    for _ in 0..50 {
        let c: Vec<f64> = (0..3).map(|_| grid.spacing() * r.random_range(-4i64..=4) as f64).collect();
        let back: Vec<f64> = c.iter().map(|x| -x).collect();
        let there = shift_table(&table, &c).map_err(|e| e.to_string())?;
        let again = shift_table(&there, &back).map_err(|e| e.to_string())?;
        ensure(again == table, || format!("shift by {c:?} is not undone"))?;
    }
    Ok("50 random shifts undone exactly".into())
}

pub fn no_resampling() -> Check {
    let model: Arc<dyn LikelihoodModel> = Arc::new(FourArmDevice::ideal());
    let grid = ParameterGrid::new(0.0, PI, 5, 3).unwrap();
    let provider = Provider::exact(model.clone(), grid).map_err(|e| e.to_string())?;
    let mut p = provider.initial_particles();
    let before = p.positions().to_vec();
    let mut r = rng::stream(90, &[]);
    for _ in 0..60 {
        let c: Vec<f64> = (0..3).map(|_| r.random_range(-PI..PI)).collect();
        let d = r.random_range(0..10);
        bayes_update(&mut p, d, &c, &provider).map_err(|e| e.to_string())?;
    }
    ensure(p.positions() == before.as_slice(), || "particle positions moved".into())?;
    Ok("positions bit-identical after 60 updates".into())
}

pub fn exact_order_invariance() -> Check {
    let model: Arc<dyn LikelihoodModel> = Arc::new(FourArmDevice::ideal());
    let grid = ParameterGrid::new(0.0, PI, 6, 3).unwrap();
    let provider = Provider::exact(model, grid).map_err(|e| e.to_string())?;
    let mut r = rng::stream(91, &[]);
    let outcomes: Vec<usize> = (0..25).map(|_| r.random_range(0..10)).collect();
    let mut shuffled = outcomes.clone();
    shuffled.shuffle(&mut r);
    let run = |seq: &[usize]| -> std::result::Result<ParticleSet, String> {
        let mut p = provider.initial_particles();
        for &d in seq {
            bayes_update(&mut p, d, &[0.0; 3], &provider).map_err(|e| e.to_string())?;
        }
        Ok(p)
    };
    let (a, b) = (run(&outcomes)?, run(&shuffled)?);
    let gap = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(gap <= 1e-12, || format!("order changes weights by {gap:.2e}"))?;
    Ok(format!("permuted sequence differs by {gap:.1e}"))
}

pub fn separable_toy_accuracy() -> Check {
    let grid = ParameterGrid::new(0.0, 1.0, 2, 1).unwrap();
    let data = GridDataset::new(grid, 50, 2, vec![50, 0, 0, 50]).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 40,
        batch_size: 20,
        learning_rate: 1e-2,
        seed: 92,
        ..TrainConfig::default()
    };
    let net = train_posterior_network(&data, &config).map_err(|e| e.to_string())?.network;
    for d in 0..2 {
        let p = net.forward(d).map_err(|e| e.to_string())?;
        let arg = if p[0] >= p[1] { 0 } else { 1 };
        ensure(arg == d, || format!("outcome {d} classified as {arg} ({p:?})"))?;
    }
    Ok("both outcomes classified correctly".into())
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

pub fn mz_posterior_correlation() -> Check {
    let grid = ParameterGrid::new(0.0, PI, 20, 1).unwrap();
    let data = sample_grid_dataset(&MachZehnder, &grid, 1000, 93).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 20,
        batch_size: 512,
        seed: 94,
        ..TrainConfig::default()
    };
    let net = train_posterior_network(&data, &config).map_err(|e| e.to_string())?.network;
    let post = posterior_table(&net, &grid, 2).map_err(|e| e.to_string())?;
    let uniform = vec![1.0 / grid.len() as f64; grid.len()];
    let truth = analytic_posterior(&likelihood_table(&MachZehnder, &grid), &uniform);
    let rho = pearson(post.values(), truth.values());
    ensure(rho >= 0.95, || format!("Pearson correlation {rho:.4}"))?;
    Ok(format!("Pearson correlation {rho:.4}"))
}

struct Quadratic(Vec<f64>);

impl Environment for Quadratic {
    fn param_count(&self) -> usize {
        self.0.len()
    }

    fn episode(&self, w: &[f64], _seed: u64) -> qmetro_core::Result<EpisodeOutcome> {
        let r = -w.iter().zip(&self.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        Ok(EpisodeOutcome {
            total_reward: r,
            rewards: vec![r],
            initial_cov_trace: 0.0,
            final_cov_trace: 0.0,
            aborted: false,
        })
    }
}

pub fn cem_quadratic() -> Check {
    let target = vec![-0.2, 0.35, 0.5, -0.45, 0.1];
    let env = Quadratic(target.clone());
    let cfg = CemConfig::default();
    let state = CemState::new(target.len(), &cfg).map_err(|e| e.to_string())?;
    let report = cem_train(&env, state, &cfg, 50 * cfg.population, 95).map_err(|e| e.to_string())?;
    let err = report.weights.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 0.05, || format!("∞-norm error {err:.3}"))?;
    ensure(report.elite_mean_rewards.last() >= report.elite_mean_rewards.first(), || "elite reward decreased".into())?;
    Ok(format!("∞-norm error {err:.1e} after {} iterations", report.elite_mean_rewards.len()))
}

pub const ALL: [(&str, fn() -> Check); 12] = [
    ("two-photon oracle", two_photon_oracle),
    ("gradient", gradient_matches_finite_differences),
    ("prior residual", prior_residual_on_trained_tables),
    ("analytic prior", analytic_prior_recovery),
    ("neural vs exact Bayes", neural_mode_matches_exact_bayes),
    ("reward telescoping", reward_telescoping),
    ("shift round trip", shift_roundtrip),
    ("no resampling", no_resampling),
    ("order invariance", exact_order_invariance),
    ("separable toy", separable_toy_accuracy),
    ("MZ correlation", mz_posterior_correlation),
    ("CEM quadratic", cem_quadratic),
];
