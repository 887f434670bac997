use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qmetro_core::dataset::{load_dataset, outcome_frequencies, sample_grid_dataset, save_dataset, GridDataset};
use qmetro_core::estimator::{
    FeedbackStrategy, OutcomeSource, Provider, RandomFeedback, TableProvider, TruthWindowFeedback, ZeroFeedback,
};
use qmetro_core::experiment::{qloss_curve, CurveSpec, QlossCurve};
use qmetro_core::grid::ParameterGrid;
use qmetro_core::models::{qcrb_bound, FourArmDevice, LikelihoodModel, MachZehnder, QuarterKind, QFI_STEP};
use qmetro_core::neural::{
    posterior_table, solve_prior, train_posterior_network, PosteriorNetwork, TrainConfig, WeightDocument,
};
use qmetro_core::policy::{cem_train, CemConfig, CemReport, CemState, Environment, EstimationEnv, PolicyNetwork};

use crate::config::{default_margin, ExperimentConfig, ModelKind, ProviderKind, SourceKind, StrategyKind};
use crate::error::{CliError, CliResult};

/// Input photons enter the last two modes, `|0011⟩`.
pub const INPUT_MODES: (usize, usize) = (2, 3);

pub fn version() -> &'static str {
    env!("QMETRO_VERSION")
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn build_model(kind: ModelKind, quarter: QuarterKind) -> CliResult<Arc<dyn LikelihoodModel>> {
    Ok(match kind {
        ModelKind::Mz => Arc::new(MachZehnder),
        ModelKind::Fourarm => Arc::new(FourArmDevice::new(quarter, INPUT_MODES)?),
    })
}

/// QCRB coefficient of the configured device; the single-photon
/// Mach–Zehnder bound coincides with the shot-noise limit.
pub fn qcrb_coefficient(kind: ModelKind, quarter: QuarterKind) -> CliResult<f64> {
    Ok(match kind {
        ModelKind::Mz => 1.0,
        ModelKind::Fourarm => qcrb_bound(quarter, INPUT_MODES, QFI_STEP)?.coefficient,
    })
}

fn load_weights(path: &Path) -> CliResult<WeightDocument> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(WeightDocument::from_json(&text)?)
}

/// Everything an estimation run needs, assembled from a configuration.
pub struct Setup {
    pub model: Arc<dyn LikelihoodModel>,
    pub provider: Provider,
    pub source: OutcomeSource,
    pub strategy: Box<dyn FeedbackStrategy>,
    pub dataset: Option<Arc<GridDataset>>,
    /// Extra facts for the summary (training loss, prior eigenvalue, ...).
    pub notes: BTreeMap<String, Value>,
}

fn config_grid(config: &ExperimentConfig) -> CliResult<ParameterGrid> {
    let g = config
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("configuration has no grid".into()))?;
    Ok(ParameterGrid::new(g.lo, g.hi, g.n, config.model.dims())?)
}

fn dataset_for(config: &ExperimentConfig, model: &dyn LikelihoodModel) -> CliResult<GridDataset> {
    let data = match &config.artifacts.dataset {
        Some(path) => load_dataset(path)?,
        None => {
            let r = config.r.ok_or_else(|| CliError::Config("r is needed to generate a dataset".into()))?;
            sample_grid_dataset(model, &config_grid(config)?, r, config.seeds.data)?
        }
    };
    if data.grid().dims() != model.dims() || data.outcomes() != model.outcome_count() {
        return Err(CliError::Config(format!(
            "dataset has {} phases and {} outcomes; the model has {} and {}",
            data.grid().dims(),
            data.outcomes(),
            model.dims(),
            model.outcome_count()
        )));
    }
    Ok(data)
}

pub fn setup(config: &ExperimentConfig) -> CliResult<Setup> {
    config.validate()?;
    let model = build_model(config.model, config.quarter)?;
    let mut notes = BTreeMap::new();
    let needs_data = config.provider != ProviderKind::Exact || config.source == SourceKind::Dataset;
    let dataset = if needs_data {
        Some(Arc::new(dataset_for(config, model.as_ref())?))
    } else {
        None
    };

    let provider = match config.provider {
        ProviderKind::Exact => Provider::exact(model.clone(), config_grid(config)?)?,
        ProviderKind::Freq | ProviderKind::Nn => {
            let data = dataset.as_ref().expect("table providers load a dataset");
            let grid = data.grid();
            let restriction = match config.restrict {
                Some([lo, hi]) => grid.restrict(lo, hi)?,
                None => grid.full_restriction(),
            };
            if config.provider == ProviderKind::Freq {
                Provider::Table(TableProvider::frequency(outcome_frequencies(data), restriction)?)
            } else {
                let network = match &config.artifacts.network {
                    Some(path) => PosteriorNetwork::from_document(&load_weights(path)?)?,
                    None => {
                        let training = TrainConfig {
                            seed: config.seeds.train,
                            ..config.training.clone()
                        };
                        let report = train_posterior_network(data, &training)?;
                        if let Some(loss) = report.epoch_losses.last() {
                            notes.insert("training_loss".into(), json!(loss));
                        }
                        report.network
                    }
                };
                let post = posterior_table(&network, grid, data.outcomes())?;
                let prior = solve_prior(&post, &outcome_frequencies(data))?;
                notes.insert("prior_eigenvalue".into(), json!(prior.eigenvalue));
                notes.insert("prior_residual".into(), json!(prior.residual));
                Provider::Table(TableProvider::neural(post, &prior.prior, restriction)?)
            }
        }
    };

    let source = match config.source {
        SourceKind::Model => OutcomeSource::Model(model.clone()),
        SourceKind::Dataset => OutcomeSource::Offline(dataset.clone().expect("dataset source loads a dataset")),
    };

    let particles = provider.particle_grid();
    let strategy: Box<dyn FeedbackStrategy> = match config.strategy {
        StrategyKind::None => Box::new(ZeroFeedback),
        StrategyKind::Random => Box::new(RandomFeedback::default()),
        StrategyKind::Window => Box::new(TruthWindowFeedback {
            lo: particles.lo(),
            hi: particles.hi(),
        }),
        StrategyKind::Policy => {
            let path = config.artifacts.policy.as_ref().expect("validated");
            let policy = PolicyNetwork::from_document(&load_weights(path)?)?;
            if policy.dims() != model.dims() {
                return Err(CliError::Config(format!(
                    "policy controls {} phases; the model has {}",
                    policy.dims(),
                    model.dims()
                )));
            }
            Box::new(policy)
        }
    };

    Ok(Setup {
        model,
        provider,
        source,
        strategy,
        dataset,
        notes,
    })
}

pub fn curve_spec(config: &ExperimentConfig, provider: &Provider) -> CurveSpec {
    let grid = provider.particle_grid();
    let (lo, hi, margin) = match &config.truth {
        Some(t) => (t.lo, t.hi, t.margin),
        None => (grid.lo(), grid.hi(), default_margin(config.model, grid.lo(), grid.hi())),
    };
    CurveSpec {
        n_truths: config.n_truths,
        n_reps: config.n_reps,
        n_probes: config.n_probes,
        truth_lo: lo,
        truth_hi: hi,
        margin,
        seed: config.seeds.estimation,
        aggregation: config.aggregation,
    }
}

/// Curve CSV: header `N,qloss,dispersion`, one row per probe count.
pub fn curve_csv(curve: &QlossCurve) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["N", "qloss", "dispersion"])?;
    for (k, (q, d)) in curve.qloss.iter().zip(&curve.dispersion).enumerate() {
        w.write_record([(k + 1).to_string(), q.to_string(), d.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct ArtifactRecord {
    path: String,
    sha256: String,
}

fn record(path: &Path) -> CliResult<ArtifactRecord> {
    Ok(ArtifactRecord {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

pub struct ExperimentOutput {
    pub curve: QlossCurve,
    pub curve_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs the configured estimation sweep and writes the curve CSV and summary JSON.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<ExperimentOutput> {
    let setup = setup(config)?;
    let spec = curve_spec(config, &setup.provider);
    let init = setup.provider.initial_particles();
    let curve = qloss_curve(&setup.source, &setup.provider, &init, setup.strategy.as_ref(), &spec)?;
    write_file(&config.output.curve, &curve_csv(&curve)?)?;

    let mut artifacts = BTreeMap::new();
    for (role, path) in [
        ("dataset", &config.artifacts.dataset),
        ("network", &config.artifacts.network),
        ("policy", &config.artifacts.policy),
    ] {
        if let Some(p) = path {
            artifacts.insert(role, record(p)?);
        }
    }
    artifacts.insert("curve", record(&config.output.curve)?);
    let last = config.n_probes;
    let summary = json!({
        "tool": "qmetro",
        "version": version(),
        "config": config,
        "seeds": {
            "data": config.seeds.data,
            "train": config.seeds.train,
            "estimation": config.seeds.estimation,
        },
        "artifacts": artifacts,
        "truths": { "lo": spec.truth_lo, "hi": spec.truth_hi, "margin": spec.margin, "count": spec.n_truths },
        "bounds": { "snl": 1.0, "qcrb": qcrb_coefficient(config.model, config.quarter)? },
        "final": {
            "n_probes": last,
            "qloss": curve.at(last),
            "dispersion": curve.dispersion[last - 1],
            "cov_trace": curve.cov_trace[last - 1],
        },
        "notes": setup.notes,
    });
    write_file(&config.output.summary, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(ExperimentOutput {
        curve,
        curve_path: config.output.curve.clone(),
        summary_path: config.output.summary.clone(),
    })
}

/// Writes the trace of the first truth's first repetition as CSV.
pub fn write_first_trace(config: &ExperimentConfig, path: &Path) -> CliResult<()> {
    let setup = setup(config)?;
    let spec = curve_spec(config, &setup.provider);
    let truth = &qmetro_core::experiment::sample_truths(setup.provider.dims(), &spec)[0];
    let seed = qmetro_core::rng::derive_seed(spec.seed, &[1, 0, 0]);
    let trace = qmetro_core::estimator::run_estimation(
        &setup.source,
        &setup.provider,
        &setup.provider.initial_particles(),
        setup.strategy.as_ref(),
        config.n_probes,
        truth,
        seed,
    )?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_file(path, &buf)
}

pub struct GridRequest {
    pub model: ModelKind,
    pub quarter: QuarterKind,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub dims: Option<usize>,
    pub r: u64,
    pub seed: u64,
}

pub fn generate_grid(req: &GridRequest, out: &Path) -> CliResult<GridDataset> {
    let dims = req.dims.unwrap_or(req.model.dims());
    if dims != req.model.dims() {
        return Err(CliError::Config(format!(
            "model {:?} has {} phases, not {dims}",
            req.model,
            req.model.dims()
        )));
    }
    let model = build_model(req.model, req.quarter)?;
    let grid = ParameterGrid::new(req.lo, req.hi, req.n, dims)?;
    let data = sample_grid_dataset(model.as_ref(), &grid, req.r, req.seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_dataset(&data, out)?;
    Ok(data)
}

/// Trains a posterior network and writes its weight document; returns the per-epoch losses.
pub fn train_nn(data_path: &Path, config: &TrainConfig, out: &Path) -> CliResult<Vec<f64>> {
    let data = load_dataset(data_path)?;
    let report = train_posterior_network(&data, config)?;
    let doc = report.network.to_document(Some(data.grid()));
    write_file(out, doc.to_json().as_bytes())?;
    Ok(report.epoch_losses)
}

/// Trains a feedback policy with CEM on the environment described by `config`.
pub fn train_policy(
    config: &ExperimentConfig,
    cem: &CemConfig,
    episodes: usize,
    seed: u64,
    out: &Path,
    log: Option<&Path>,
) -> CliResult<CemReport> {
    let setup = setup(config)?;
    let spec = curve_spec(config, &setup.provider);
    spec.validate()?;
    let mut env = EstimationEnv::new(setup.source, setup.provider, config.n_probes, 0.0)?;
    env.truth_lo = spec.truth_lo + spec.margin;
    env.truth_hi = spec.truth_hi - spec.margin;
    let state = CemState::new(env.param_count(), cem)?;
    let report = cem_train(&env, state, cem, episodes, seed)?;
    let policy = env.policy(&report.weights)?;
    write_file(out, policy.to_document().to_json().as_bytes())?;
    if let Some(path) = log {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "elite_mean_reward", "population_mean_reward"])?;
        for (i, (e, p)) in report
            .elite_mean_rewards
            .iter()
            .zip(&report.population_mean_rewards)
            .enumerate()
        {
            w.write_record([i.to_string(), e.to_string(), p.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        write_file(path, &bytes)?;
    }
    Ok(report)
}

pub fn qcrb_report<W: Write>(quarter: QuarterKind, input: (usize, usize), step: f64, out: W) -> CliResult<f64> {
    let report = qcrb_bound(quarter, input, step)?;
    let fisher: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| report.fisher[(i, j)]).collect()).collect();
    let doc = json!({
        "quarter": quarter,
        "input_modes": [input.0, input.1],
        "step": step,
        "fisher": fisher,
        "coefficient": report.coefficient,
    });
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(report.coefficient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn config(dir: &Path, body: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(body).unwrap();
        c.resolve_paths(dir);
        c
    }

    #[test]
    fn smoke_run_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            r#"{"model": "mz", "provider": "exact", "strategy": "none",
                "grid": {"lo": 0.0, "hi": 3.141592653589793, "n": 20},
                "n_probes": 1, "n_truths": 1, "n_reps": 1}"#,
        );
        let out = run_experiment(&c).unwrap();
        let text = std::fs::read_to_string(&out.curve_path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("N,qloss,dispersion\n1,"));
        let summary: Value = serde_json::from_str(&std::fs::read_to_string(&out.summary_path).unwrap()).unwrap();
        assert_eq!(summary["bounds"]["snl"], json!(1.0));
        assert_eq!(summary["artifacts"]["curve"]["sha256"], json!(sha256_file(&out.curve_path).unwrap()));
    }

    #[test]
    fn frequency_provider_from_generated_data() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            r#"{"model": "mz", "provider": "freq", "strategy": "random",
                "grid": {"lo": 0.0, "hi": 6.283185307179586, "n": 41}, "r": 50,
                "n_probes": 20, "n_truths": 3, "n_reps": 2, "aggregation": "median"}"#,
        );
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.curve.qloss.len(), 20);
        let summary: Value = serde_json::from_str(&std::fs::read_to_string(&out.summary_path).unwrap()).unwrap();
        assert_eq!(summary["truths"]["margin"], json!(0.3));
    }

    #[test]
    fn fourarm_bound_is_reported() {
        assert!((qcrb_coefficient(ModelKind::Fourarm, QuarterKind::FourCoupler).unwrap() - 2.5).abs() < 1e-6);
        assert_eq!(qcrb_coefficient(ModelKind::Mz, QuarterKind::FourCoupler).unwrap(), 1.0);
    }

    #[test]
    fn dataset_dimensions_must_match_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("mz.txt");
        let req = GridRequest {
            model: ModelKind::Mz,
            quarter: QuarterKind::FourCoupler,
            lo: 0.0,
            hi: 1.0,
            n: 5,
            dims: None,
            r: 3,
            seed: 1,
        };
        generate_grid(&req, &data).unwrap();
        let mut c = config(
            dir.path(),
            r#"{"model": "fourarm", "provider": "freq", "strategy": "none",
                "n_probes": 2, "n_truths": 1, "n_reps": 1}"#,
        );
        c.artifacts.dataset = Some(data);
        assert!(matches!(setup(&c), Err(CliError::Config(_))));
    }
}
