use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tailfl::dp::rho_for_epsilon;
use tailfl::eval::write_errors_csv;
use tailfl::fed::{self, Algorithm, FedConfig, SplitReport, TrainReport};
use tailfl::quantile::bench::{self, BenchRow};
use tailfl::quantile::calibrate_sigma2;
use tailfl::synth::{self, FederatedDataset};

use crate::spec::ExperimentSpec;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} +/- {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub mean_error: MeanStd,
    pub p90_error: MeanStd,
    pub sq90_error: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub algorithm: Algorithm,
    pub theta: f64,
    pub seeds: Vec<u64>,
    pub train_mean_loss: MeanStd,
    pub train_superquantile_loss: MeanStd,
    pub val: Option<SplitSummary>,
    pub test: Option<SplitSummary>,
    pub epsilon: Option<MeanStd>,
    pub fallback_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub algorithm: Algorithm,
    pub theta: f64,
    /// Target budget of private rows.
    pub epsilon: Option<f64>,
    /// Budget reported by the ledger, averaged over seeds.
    pub spent_epsilon: Option<f64>,
    pub mean_error: MeanStd,
    pub p90_error: MeanStd,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    seed_offset: u64,
    config: &'a ExperimentSpec,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Records the fully defaulted config next to the outputs.
fn write_resolved(out: &Path, command: &str, seed_offset: u64, spec: &ExperimentSpec) -> Result<(), CliError> {
    write_json(&out.join("resolved_config.json"), &Resolved { command, seed_offset, config: spec })
}

fn load_dataset(dir: &Path) -> Result<FederatedDataset, CliError> {
    if !dir.join("meta.json").is_file() {
        return Err(CliError::Config(format!("{} is not a dataset directory", dir.display())));
    }
    Ok(synth::load(dir)?)
}

/// `spec` is expected to carry the seed offset already.
pub fn cmd_generate(spec: &ExperimentSpec, seed_offset: u64, out: &Path) -> Result<FederatedDataset, CliError> {
    let dataset = synth::generate(&spec.data)?;
    create_dir(out)?;
    synth::save(&dataset, out)?;
    write_resolved(out, "generate", seed_offset, spec)?;
    Ok(dataset)
}

fn split_summary(reports: &[&TrainReport], pick: fn(&TrainReport) -> Option<&SplitReport>) -> Option<SplitSummary> {
    let splits: Vec<&SplitReport> = reports.iter().filter_map(|r| pick(r)).collect();
    if splits.len() != reports.len() {
        return None;
    }
    let stat = |f: fn(&SplitReport) -> f64| MeanStd::of(&splits.iter().map(|s| f(s)).collect::<Vec<_>>());
    Some(SplitSummary {
        mean_error: stat(|s| s.stats.mean),
        p90_error: stat(|s| s.stats.p90),
        sq90_error: stat(|s| s.stats.sq90),
    })
}

fn summarize_runs(cfg: &FedConfig, seeds: &[u64], reports: &[&TrainReport]) -> TrainSummary {
    let collect = |f: fn(&TrainReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    let eps: Vec<f64> = reports.iter().filter_map(|r| r.epsilon).collect();
    TrainSummary {
        algorithm: cfg.algorithm,
        theta: cfg.theta,
        seeds: seeds.to_vec(),
        train_mean_loss: collect(|r| r.train_mean_loss),
        train_superquantile_loss: collect(|r| r.train_superquantile_loss),
        val: split_summary(reports, |r| r.val.as_ref()),
        test: split_summary(reports, |r| r.test.as_ref()),
        epsilon: (!eps.is_empty()).then(|| MeanStd::of(&eps)),
        fallback_rounds: reports.iter().map(|r| r.fallback_rounds).sum(),
    }
}

/// Trains once per sweep seed; each run gets its own `seed_<s>` directory.
pub fn cmd_train(spec: &ExperimentSpec, seed_offset: u64, data: &Path, out: &Path) -> Result<TrainSummary, CliError> {
    let dataset = load_dataset(data)?;
    spec.train.validate(dataset.train.len())?;
    create_dir(out)?;
    write_resolved(out, "train", seed_offset, spec)?;
    let seeds = &spec.sweep.seeds;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = FedConfig { seed, ..spec.train.clone() };
            fed::train(&cfg, &dataset).map_err(CliError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (seed, (state, report)) in seeds.iter().zip(&runs) {
        let dir = out.join(format!("seed_{seed}"));
        create_dir(&dir)?;
        write_json(&dir.join("report.json"), report)?;
        let mut history = BufWriter::new(File::create(dir.join("history.jsonl"))?);
        fed::write_history(&state.history, &mut history)?;
        history.flush()?;
        for split in [&report.val, &report.test].into_iter().flatten() {
            let path = dir.join(format!("errors_{}.csv", split.errors.split));
            let mut csv = BufWriter::new(File::create(path)?);
            write_errors_csv(&split.errors, &mut csv)?;
            csv.flush()?;
        }
    }
    let reports: Vec<&TrainReport> = runs.iter().map(|(_, r)| r).collect();
    let summary = summarize_runs(&spec.train, seeds, &reports);
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn cmd_quantile_bench(spec: &ExperimentSpec, seed_offset: u64, out: &Path) -> Result<Vec<BenchRow>, CliError> {
    let rows = bench::run(&spec.quantile_bench).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(out)?;
    write_resolved(out, "quantile-bench", seed_offset, spec)?;
    let mut csv = BufWriter::new(File::create(out.join("quantile_bench.csv"))?);
    bench::write_csv(&rows, &mut csv)?;
    csv.flush()?;
    write_json(&out.join("quantile_bench.json"), &rows)?;
    Ok(rows)
}

/// Noise levels spending the total budget `epsilon` evenly over the rounds.
///
/// Tail-risk rounds give `quantile_share` of each round's zCDP to the
/// quantile and the rest to the model update; FedAvg rounds spend it all on
/// the update.
fn calibrate_private(cfg: &mut FedConfig, epsilon: f64, spec: &ExperimentSpec) -> Result<(), CliError> {
    if cfg.rounds == 0 {
        return Err(CliError::Config("private runs need at least one round".into()));
    }
    let c = &spec.compare;
    let rho_total = rho_for_epsilon(epsilon, cfg.quantile.delta).map_err(|e| CliError::Config(e.to_string()))?;
    let rho_round = rho_total / cfg.rounds as f64;
    let mut rho_update = rho_round;
    if cfg.algorithm == Algorithm::DeltaFlDp {
        let q = &mut cfg.quantile;
        q.sigma2 = calibrate_sigma2(c.quantile_share * rho_round, q.scale, cfg.clients_per_round, q.bins)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let spent = tailfl::quantile::privacy_epsilon(q.sigma2, q.scale, cfg.clients_per_round, q.bins)
            .map_err(|e| CliError::Config(e.to_string()))?
            .rho;
        rho_update = rho_round - spent;
        if !(rho_update > 0.0) {
            return Err(CliError::Config(format!(
                "epsilon {epsilon} is too small: the quantile alone costs more than the per-round budget"
            )));
        }
    }
    cfg.clip_norm = Some(c.clip_norm);
    cfg.noise_sigma_w = c.clip_norm / (2.0 * rho_update).sqrt();
    Ok(())
}

fn compare_runs(spec: &ExperimentSpec) -> Result<Vec<(String, FedConfig, Option<f64>)>, CliError> {
    let base = &spec.train;
    let tail_algorithm = match base.algorithm {
        a @ (Algorithm::DeltaFl | Algorithm::DeltaFlDual | Algorithm::DeltaFlSmoothed) => a,
        _ => Algorithm::DeltaFl,
    };
    let mut runs =
        vec![("fedavg".to_string(), FedConfig { algorithm: Algorithm::FedAvg, theta: 1.0, ..base.clone() }, None)];
    for &theta in &spec.sweep.thetas {
        runs.push((
            format!("delta_fl theta={theta}"),
            FedConfig { algorithm: tail_algorithm, theta, ..base.clone() },
            None,
        ));
    }
    runs.push((
        format!("tilted_erm tilt={}", spec.compare.tilt),
        FedConfig { algorithm: Algorithm::TiltedErm, nu: spec.compare.tilt, theta: 1.0, ..base.clone() },
        None,
    ));
    if spec.compare.private {
        for &eps in &spec.sweep.epsilons {
            let mut cfg = FedConfig { algorithm: Algorithm::FedAvgDp, theta: 1.0, ..base.clone() };
            calibrate_private(&mut cfg, eps, spec)?;
            runs.push((format!("fedavg_dp eps={eps}"), cfg, Some(eps)));
            for &theta in &spec.sweep.thetas {
                let mut cfg = FedConfig { algorithm: Algorithm::DeltaFlDp, theta, ..base.clone() };
                calibrate_private(&mut cfg, eps, spec)?;
                runs.push((format!("delta_fl_dp theta={theta} eps={eps}"), cfg, Some(eps)));
            }
        }
    }
    Ok(runs)
}

/// Runs the baselines and every tail level on the same seeds and reports
/// test error.
pub fn cmd_compare(
    spec: &ExperimentSpec,
    seed_offset: u64,
    data: &Path,
    out: &Path,
) -> Result<Vec<CompareRow>, CliError> {
    let dataset = load_dataset(data)?;
    if dataset.test.is_empty() {
        return Err(CliError::Config("compare needs test clients".into()));
    }
    let runs = compare_runs(spec)?;
    for (_, cfg, _) in &runs {
        cfg.validate(dataset.train.len())?;
    }
    create_dir(out)?;
    write_resolved(out, "compare", seed_offset, spec)?;

    let seeds = &spec.sweep.seeds;
    let jobs: Vec<(usize, u64)> = (0..runs.len()).flat_map(|k| seeds.iter().map(move |&s| (k, s))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let cfg = FedConfig { seed, ..runs[k].1.clone() };
            fed::train(&cfg, &dataset).map(|(_, r)| r).map_err(CliError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<CompareRow> = runs
        .iter()
        .enumerate()
        .map(|(k, (method, cfg, epsilon))| {
            let group: Vec<&TrainReport> = reports[k * seeds.len()..(k + 1) * seeds.len()].iter().collect();
            let test = split_summary(&group, |r| r.test.as_ref()).expect("test split is non-empty");
            let spent: Vec<f64> = group.iter().filter_map(|r| r.epsilon).collect();
            CompareRow {
                method: method.clone(),
                algorithm: cfg.algorithm,
                theta: cfg.theta,
                epsilon: *epsilon,
                spent_epsilon: (!spent.is_empty()).then(|| spent.iter().sum::<f64>() / spent.len() as f64),
                mean_error: test.mean_error,
                p90_error: test.p90_error,
            }
        })
        .collect();

    let mut csv = BufWriter::new(File::create(out.join("compare.csv"))?);
    writeln!(csv, "method,algorithm,theta,epsilon,spent_epsilon,mean_error,mean_error_std,p90_error,p90_error_std")?;
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let algorithm = serde_json::to_value(r.algorithm).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            algorithm.as_str().unwrap_or_default(),
            r.theta,
            opt(r.epsilon),
            opt(r.spent_epsilon),
            r.mean_error.mean,
            r.mean_error.std,
            r.p90_error.mean,
            r.p90_error.std
        )?;
    }
    csv.flush()?;
    write_json(&out.join("compare.json"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_single_and_pair() {
        assert_eq!(MeanStd::of(&[3.0]), MeanStd { mean: 3.0, std: 0.0 });
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn private_calibration_spends_the_budget() {
        let mut spec = ExperimentSpec::default();
        spec.train.rounds = 40;
        spec.train.clients_per_round = 20;
        for algorithm in [Algorithm::FedAvgDp, Algorithm::DeltaFlDp] {
            let mut cfg = FedConfig { algorithm, ..spec.train.clone() };
            calibrate_private(&mut cfg, 5.0, &spec).unwrap();
            let mut rho = tailfl::dp::gaussian_update_rho(1.0, cfg.noise_sigma_w).unwrap();
            if algorithm == Algorithm::DeltaFlDp {
                let q = &cfg.quantile;
                rho += tailfl::quantile::privacy_epsilon(q.sigma2, q.scale, 20, q.bins).unwrap().rho;
            }
            let total = rho * 40.0;
            let target = rho_for_epsilon(5.0, cfg.quantile.delta).unwrap();
            assert!((total - target).abs() < 1e-9 * target, "{algorithm:?}: {total} vs {target}");
        }
    }

    #[test]
    fn compare_rows_cover_every_method() {
        let spec = ExperimentSpec::from_json(r#"{"sweep": {"thetas": [0.2, 0.5], "epsilons": [2, 8]}}"#).unwrap();
        let names: Vec<String> = compare_runs(&spec).unwrap().into_iter().map(|r| r.0).collect();
        assert_eq!(
            names,
            [
                "fedavg",
                "delta_fl theta=0.2",
                "delta_fl theta=0.5",
                "tilted_erm tilt=1",
                "fedavg_dp eps=2",
                "delta_fl_dp theta=0.2 eps=2",
                "delta_fl_dp theta=0.5 eps=2",
                "fedavg_dp eps=8",
                "delta_fl_dp theta=0.2 eps=8",
                "delta_fl_dp theta=0.5 eps=8",
            ]
        );
    }
}
