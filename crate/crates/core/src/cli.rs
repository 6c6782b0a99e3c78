//! Batch command-line surface: `fit`, `simulate`, `evaluate` and `diag`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graphs::DecomposableGraph;
use crate::inference::{summarize, BetaType, PosteriorSummary};
use crate::io::{
    format_value, load_dataset, parse_index_block, parse_key_values, read_mrf_edges, read_run_config, read_table,
    write_dataset, write_mrf_edges, write_table, DataSource,
};
use crate::model::{validate_spec, Dataset, Indicators, ValidatedSpec};
use crate::sampler::{resolve_threads, run_with, McmcOutput, RunOptions};
use crate::simulate::{build_mrf_graph, simulate_eqtl, simulate_quickstart, SimulatedData, SimulationRecipe};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "sur-ess", version, about = "Bayesian sparse SUR with evolutionary stochastic search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model described by a configuration file.
    Fit(FitArgs),
    /// Generate a synthetic dataset with its truth files.
    Simulate(SimulateArgs),
    /// Score a fit against simulation truth.
    Evaluate(EvaluateArgs),
    /// Write trace, window-density and graph files for a finished run.
    Diag(DiagArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BetaTypeArg {
    Marginal,
    Conditional,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides outFilePath).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Combined data file (overrides the config's data source).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response columns (with --data) or response file.
    #[arg(long)]
    pub y: Option<String>,
    /// Predictor columns (with --data) or predictor file.
    #[arg(long)]
    pub x: Option<String>,
    /// Fixed-predictor columns (with --data) or file.
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mPIP threshold for the selected set.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = BetaTypeArg::Marginal)]
    pub beta_type: BetaTypeArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `quickstart` or `eqtl`.
    pub kind: String,
    /// key = value recipe (eqtl: scale, n, seed, beta_sd, noise_sd, maf_low,
    /// maf_high, delta, scale_offdiag, target_snr; quickstart: seed).
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory with gamma_true.csv and optionally G_true.csv, B_true.csv.
    #[arg(long)]
    pub truth: PathBuf,
    /// Fit output directory.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Fit output directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Destination (default: `<run>/diag`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&a.truth, &a.fit, a.threshold)?;
            let text = report.to_text();
            print!("{text}");
            if let Some(p) = &a.out {
                write_text(p, &text)?;
            }
            Ok(())
        }
        Command::Diag(a) => {
            let out = a.out.clone().unwrap_or_else(|| a.run.join("diag"));
            cmd_diag(&a.run, &out).map(|_| ())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("cannot create {}", path.display()), e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Content hash of a dataset: dimensions followed by every value, column-major,
/// as little-endian doubles.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for d in [data.n(), data.s(), data.p(), data.p0()] {
        h.update((d as u64).to_le_bytes());
    }
    for m in [data.y(), data.x(), data.x0()] {
        for v in m.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEcho {
    pub model: String,
    pub covariance_prior: String,
    pub gamma_prior: String,
    pub gamma_sampler: String,
    pub gamma_init: String,
    pub n_iter: usize,
    pub burnin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub mrf_edges: Option<usize>,
    pub hyperparameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub n: usize,
    pub s: usize,
    pub p: usize,
    pub p0: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `running` while sampling, `complete` once every output is written.
    pub status: String,
    pub version: String,
    pub spec: SpecEcho,
    pub threads: usize,
    pub dataset: DatasetFingerprint,
    pub wall_clock_seconds: Option<f64>,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    fn new(v: &ValidatedSpec, data: &Dataset, threads: usize) -> Self {
        let sp = &v.spec;
        Self {
            status: "running".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            spec: SpecEcho {
                model: sp.identity(),
                covariance_prior: sp.covariance_prior.to_string(),
                gamma_prior: sp.gamma_prior.to_string(),
                gamma_sampler: sp.gamma_sampler.to_string(),
                gamma_init: sp.gamma_init.to_string(),
                n_iter: sp.n_iter,
                burnin: sp.burnin,
                n_chains: sp.n_chains,
                seed: sp.seed,
                mrf_edges: sp.mrf_edges.as_ref().map(Vec::len),
                hyperparameters: v.hyper.entries().into_iter().map(|(k, x)| (k.to_owned(), x)).collect(),
            },
            threads,
            dataset: DatasetFingerprint {
                n: data.n(),
                s: data.s(),
                p: data.p(),
                p0: data.p0(),
                sha256: dataset_hash(data),
            },
            wall_clock_seconds: None,
            outputs: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialise manifest: {e}")))?;
        write_text(&dir.join(MANIFEST), &(text + "\n"))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("missing run artifact {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            message: e.to_string(),
        })
    }
}

fn response_header(data: &Dataset) -> Vec<String> {
    data.y_names().to_vec()
}

fn column_table(name: &str, values: impl Iterator<Item = f64>) -> (Vec<String>, DMatrix<f64>) {
    let v: Vec<f64> = values.collect();
    (vec![name.to_owned()], DMatrix::from_column_slice(v.len(), 1, &v))
}

/// Writes every summary file of a fit into `dir` and returns their names.
pub fn write_fit_outputs(dir: &Path, data: &Dataset, output: &McmcOutput, summary: &PosteriorSummary) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut put = |name: &str, header: &[String], m: &DMatrix<f64>| -> Result<()> {
        write_table(&dir.join(name), header, m)?;
        files.push(name.to_owned());
        Ok(())
    };
    let resp = response_header(data);
    put("gamma_hat.csv", &resp, &summary.gamma_hat)?;
    put("beta_hat.csv", &resp, &summary.beta_hat)?;
    put("beta_hat_conditional.csv", &resp, &summary.beta_hat_conditional)?;
    if data.p0() > 0 {
        put("beta0_hat.csv", &resp, &summary.beta0_hat)?;
    }
    if !output.spec.covariance_prior.eq(&crate::model::CovariancePrior::Ig) {
        put("G_hat.csv", &resp, &summary.g_hat)?;
    }
    put("cpo.csv", &resp, &summary.cpo)?;
    let (h, m) = column_table("logP", output.log_posterior.iter().copied());
    put("logP.csv", &h, &m)?;
    let (h, m) = column_table("model_size", output.model_size.iter().map(|&v| v as f64));
    put("model_size.csv", &h, &m)?;
    let (h, m) = column_table("temperature", output.temperature_trace.iter().copied());
    put("temperature.csv", &h, &m)?;
    let e = &summary.elpd;
    let rate = |a: u64, n: u64| if n > 0 { a as f64 / n as f64 } else { 0.0 };
    let text = format!(
        "elpd_loo = {}\nelpd_waic = {}\nlpd = {}\nunstable_weights = {}\nexchange_acceptance = {}\ncrossover_acceptance = {}\ngamma_acceptance = {}\n",
        format_value(e.loo),
        format_value(e.waic),
        format_value(e.lpd),
        e.unstable_weights,
        format_value(rate(output.exchange_accepts, output.exchange_attempts)),
        format_value(rate(output.crossover_accepts, output.crossover_attempts)),
        format_value(rate(output.gamma_accepts, output.gamma_attempts)),
    );
    write_text(&dir.join("elpd.txt"), &text)?;
    files.push("elpd.txt".into());
    Ok(files)
}

/// Result of a fit command, for callers that want more than the files.
pub struct FitResult {
    pub out_dir: PathBuf,
    pub output: McmcOutput,
    pub summary: PosteriorSummary,
    pub manifest: RunManifest,
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitResult> {
    let mut cfg = read_run_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.spec.seed = seed;
    }
    let source = match (&args.data, &args.y, &args.x) {
        (Some(path), Some(y), x) => Some(DataSource::Combined {
            path: path.clone(),
            y: parse_index_block(y)?,
            x: x.as_deref().map(parse_index_block).transpose()?,
            x0: args.x0.as_deref().map(parse_index_block).transpose()?,
        }),
        (Some(_), None, _) => return Err(Error::Config("--data requires --y".into())),
        (None, Some(y), Some(x)) => Some(DataSource::Separate {
            y: y.into(),
            x: x.into(),
            x0: args.x0.as_ref().map(PathBuf::from),
        }),
        (None, None, None) => None,
        _ => return Err(Error::Config("--y and --x must be given together".into())),
    };
    let source = source
        .or(cfg.data.clone())
        .ok_or_else(|| Error::Config("no data source: set 'data' and 'Y' in the config or pass --data".into()))?;
    let out_dir = args
        .out
        .clone()
        .or(cfg.out_path.clone())
        .ok_or_else(|| Error::Config("no output directory: set outFilePath or pass --out".into()))?;
    let data = load_dataset(&source)?;
    if let Some(p) = &cfg.mrf_path {
        cfg.spec.mrf_edges = Some(read_mrf_edges(p)?);
    }
    let validated = validate_spec(&cfg.spec, &data)?;
    let threads = resolve_threads(args.threads.or(cfg.max_threads));

    create_dir(&out_dir)?;
    let mut manifest = RunManifest::new(&validated, &data, threads);
    manifest.write(&out_dir)?;

    let start = Instant::now();
    let opts = RunOptions {
        threads: Some(threads),
        progress_interval: cfg.progress_interval,
        keep_draws: false,
    };
    let output = run_with(&validated, &data, &opts)?;
    let beta_type = match args.beta_type {
        BetaTypeArg::Marginal => BetaType::Marginal,
        BetaTypeArg::Conditional => BetaType::Conditional,
    };
    let summary = summarize(&output, args.threshold, beta_type)?;
    let files = write_fit_outputs(&out_dir, &data, &output, &summary)?;

    manifest.outputs = files
        .iter()
        .map(|f| {
            Ok(OutputEntry {
                file: f.clone(),
                sha256: sha256_file(&out_dir.join(f))?,
            })
        })
        .collect::<Result<_>>()?;
    manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    manifest.status = "complete".into();
    manifest.write(&out_dir)?;
    Ok(FitResult {
        out_dir,
        output,
        summary,
        manifest,
    })
}

fn parse_field<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("recipe {key}: cannot parse '{v}'")))
}

fn eqtl_recipe(kv: &BTreeMap<String, String>, seed: Option<u64>) -> Result<SimulationRecipe> {
    let seed = match seed {
        Some(s) => s,
        None => kv.get("seed").map(|v| parse_field("seed", v)).transpose()?.unwrap_or(0),
    };
    let mut r = match kv.get("scale").map(String::as_str) {
        None | Some("paper") => SimulationRecipe::paper_scale(seed),
        Some("desk") => SimulationRecipe::desk(seed),
        Some(other) => return Err(Error::Config(format!("recipe scale must be 'desk' or 'paper', got '{other}'"))),
    };
    let (mut lo, mut hi) = r.maf_range;
    for (k, v) in kv {
        match k.as_str() {
            "scale" | "seed" => {}
            "n" => r.n = parse_field(k, v)?,
            "beta_sd" => r.beta_sd = parse_field(k, v)?,
            "noise_sd" => r.noise_sd = parse_field(k, v)?,
            "maf_low" => lo = parse_field(k, v)?,
            "maf_high" => hi = parse_field(k, v)?,
            "delta" => r.delta = parse_field(k, v)?,
            "scale_offdiag" => r.scale_offdiag = parse_field(k, v)?,
            "target_snr" if v == "none" => r.target_snr = None,
            "target_snr" => r.target_snr = Some(parse_field(k, v)?),
            other => return Err(Error::Config(format!("unknown recipe key '{other}'"))),
        }
    }
    if !(0.0 < lo && lo < hi && hi <= 1.0) {
        return Err(Error::Config(format!("allele frequency range ({lo}, {hi}) must satisfy 0 < low < high ≤ 1")));
    }
    if r.n == 0 || !(r.delta > 0.0) || !(r.noise_sd > 0.0) || !(r.beta_sd >= 0.0) || r.target_snr.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::Config("recipe needs n > 0, delta > 0, noise_sd > 0, beta_sd ≥ 0, target_snr > 0".into()));
    }
    r.maf_range = (lo, hi);
    Ok(r)
}

/// Predictor groups sharing the same set of true responses, as MRF groups.
fn truth_groups(gamma: &Indicators) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for j in 0..gamma.p() {
        let resp: Vec<usize> = (0..gamma.s()).filter(|&k| gamma.get(j, k)).collect();
        if !resp.is_empty() {
            groups.entry(resp).or_default().push(j);
        }
    }
    groups.into_iter().map(|(r, p)| (p, r)).collect()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Writes a simulated dataset and its truth into `dir`.
pub fn write_simulation(dir: &Path, sim: &SimulatedData, n_iter: usize, seed: u64) -> Result<()> {
    create_dir(dir)?;
    let d = &sim.dataset;
    let (s, p) = (d.s(), d.p());
    write_dataset(&dir.join("data.csv"), d)?;
    let resp = d.y_names().to_vec();
    write_table(&dir.join("B_true.csv"), &resp, &sim.b_true)?;
    write_table(&dir.join("gamma_true.csv"), &resp, &sim.gamma_true.to_matrix())?;
    write_table(&dir.join("G_true.csv"), &resp, &sim.graph_true.adjacency().to_matrix())?;
    write_table(&dir.join("P_true.csv"), &resp, &sim.precision)?;
    let edges = build_mrf_graph(&truth_groups(&sim.gamma_true), p, s)?;
    write_mrf_edges(&dir.join("mrf_edges.txt"), &edges)?;
    write_text(&dir.join("truth.txt"), &format!("snr = {}\n", format_value(sim.snr)))?;
    let cfg = format!(
        "data = data.csv\nY = 1:{s}\nX = {}:{}\ncovariancePrior = HIW\ngammaPrior = hotspot\n# mrfG = mrf_edges.txt\nnIter = {n_iter}\nburnin = {}\nnChains = 2\nseed = {seed}\noutFilePath = fit\n",
        s + 1,
        s + p,
        n_iter / 2
    );
    write_text(&dir.join("run.cfg"), &cfg)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let kv = match &args.recipe {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(format!("cannot read {}", p.display()), e))?;
            parse_key_values(&text, p)?
        }
        None => BTreeMap::new(),
    };
    match args.kind.as_str() {
        "quickstart" => {
            if let Some(k) = kv.keys().find(|k| k.as_str() != "seed") {
                return Err(Error::Config(format!("unknown quickstart recipe key '{k}'")));
            }
            let seed = match args.seed {
                Some(s) => s,
                None => kv.get("seed").map(|v| parse_field("seed", v)).transpose()?.unwrap_or(0),
            };
            write_simulation(&args.out, &simulate_quickstart(seed), 10_000, seed)
        }
        "eqtl" => {
            let recipe = eqtl_recipe(&kv, args.seed)?;
            let sim = simulate_eqtl(&recipe)?;
            let sim = SimulatedData {
                dataset: Dataset::with_names(
                    sim.dataset.y().clone(),
                    sim.dataset.x().clone(),
                    sim.dataset.x0().clone(),
                    names("y", recipe.s()),
                    names("snp", recipe.p()),
                    Vec::new(),
                )?,
                ..sim
            };
            write_simulation(&args.out, &sim, 50_000, recipe.seed)
        }
        other => Err(Error::Config(format!("unknown simulation kind '{other}' (expected quickstart or eqtl)"))),
    }
}

/// Area under the ROC curve of `scores` against binary `labels`, by the
/// Mann–Whitney rank statistic with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&m| labels[idx[m]]).count() as f64 * avg;
        i = j + 1;
    }
    let (pf, nf) = (pos as f64, neg as f64);
    Some((rank_sum - pf * (pf + 1.0) / 2.0) / (pf * nf))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub auc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// Fraction of true edges with edge posterior above the threshold.
    pub edge_recall: Option<f64>,
    /// Fraction of true non-edges at or below the threshold.
    pub non_edge_accuracy: Option<f64>,
    pub rmse_on_support: Option<f64>,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), format_value);
        format!(
            "auc = {}\ntpr = {}\nfpr = {}\nedge_recall = {}\nnon_edge_accuracy = {}\nrmse_on_support = {}\n",
            f(self.auc),
            f(self.tpr),
            f(self.fpr),
            f(self.edge_recall),
            f(self.non_edge_accuracy),
            f(self.rmse_on_support)
        )
    }
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_table(path)?.values)
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{what}: truth is {:?}, fit is {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

pub fn evaluate_matrices(
    gamma_true: &DMatrix<f64>,
    gamma_hat: &DMatrix<f64>,
    graphs: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    coefficients: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    threshold: f64,
) -> Result<Evaluation> {
    same_shape(gamma_true, gamma_hat, "gamma")?;
    let labels: Vec<bool> = gamma_true.iter().map(|&v| v != 0.0).collect();
    let scores: Vec<f64> = gamma_hat.iter().copied().collect();
    let pos = labels.iter().filter(|&&l| l).count();
    let tp = labels.iter().zip(&scores).filter(|(&l, &s)| l && s > threshold).count();
    let fp = labels.iter().zip(&scores).filter(|(&l, &s)| !l && s > threshold).count();
    let mut eval = Evaluation {
        auc: auc(&scores, &labels),
        tpr: fraction(tp, pos),
        fpr: fraction(fp, labels.len() - pos),
        edge_recall: None,
        non_edge_accuracy: None,
        rmse_on_support: None,
    };
    if let Some((g_true, g_hat)) = graphs {
        same_shape(g_true, g_hat, "graph")?;
        let s = g_true.nrows();
        let (mut e, mut e_hit, mut ne, mut ne_hit) = (0, 0, 0, 0);
        for i in 0..s {
            for j in i + 1..s {
                if g_true[(i, j)] != 0.0 {
                    e += 1;
                    e_hit += (g_hat[(i, j)] > threshold) as usize;
                } else {
                    ne += 1;
                    ne_hit += (g_hat[(i, j)] <= threshold) as usize;
                }
            }
        }
        eval.edge_recall = fraction(e_hit, e);
        eval.non_edge_accuracy = fraction(ne_hit, ne);
    }
    if let Some((b_true, b_hat)) = coefficients {
        same_shape(b_true, b_hat, "coefficients")?;
        let sq: Vec<f64> = labels
            .iter()
            .zip(b_true.iter().zip(b_hat.iter()))
            .filter(|(&l, _)| l)
            .map(|(_, (t, h))| (t - h).powi(2))
            .collect();
        eval.rmse_on_support = (!sq.is_empty()).then(|| (sq.iter().sum::<f64>() / sq.len() as f64).sqrt());
    }
    Ok(eval)
}

pub fn cmd_evaluate(truth: &Path, fit: &Path, threshold: f64) -> Result<Evaluation> {
    let optional = |dir: &Path, name: &str| -> Result<Option<DMatrix<f64>>> {
        let p = dir.join(name);
        if p.exists() {
            read_matrix(&p).map(Some)
        } else {
            Ok(None)
        }
    };
    let gamma_true = read_matrix(&truth.join("gamma_true.csv"))?;
    let gamma_hat = read_matrix(&fit.join("gamma_hat.csv"))?;
    let g = (optional(truth, "G_true.csv")?, optional(fit, "G_hat.csv")?);
    let b = (optional(truth, "B_true.csv")?, optional(fit, "beta_hat.csv")?);
    evaluate_matrices(
        &gamma_true,
        &gamma_hat,
        match &g {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        },
        match &b {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        },
        threshold,
    )
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

const DENSITY_BINS: usize = 30;

/// Histogram densities of each quarter of a trace on a shared grid:
/// rows `(window, lower, upper, density)`.
pub fn window_densities(trace: &[f64]) -> DMatrix<f64> {
    let n = trace.len();
    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let width = if hi > lo { (hi - lo) / DENSITY_BINS as f64 } else { 1.0 };
    let mut rows = Vec::new();
    for w in 0..4 {
        let part = &trace[w * n / 4..(w + 1) * n / 4];
        let mut counts = [0usize; DENSITY_BINS];
        for &v in part {
            let b = (((v - lo) / width) as usize).min(DENSITY_BINS - 1);
            counts[b] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            let dens = if part.is_empty() { 0.0 } else { c as f64 / (part.len() as f64 * width) };
            rows.extend([(w + 1) as f64, lo + b as f64 * width, lo + (b + 1) as f64 * width, dens]);
        }
    }
    DMatrix::from_row_slice(rows.len() / 4, 4, &rows)
}

/// Response graph in DOT format; edges with posterior above 0.5.
pub fn graph_dot(names: &[String], g_hat: Option<&DMatrix<f64>>) -> String {
    let mut out = String::from("graph responses {\n");
    for n in names {
        out.push_str(&format!("  \"{n}\";\n"));
    }
    if let Some(g) = g_hat {
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                if g[(i, j)] > 0.5 {
                    out.push_str(&format!("  \"{}\" -- \"{}\" [weight={:.4}];\n", names[i], names[j], g[(i, j)]));
                }
            }
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub trace_len: usize,
    pub ks_third_vs_last_half: f64,
    pub ks_third_vs_fourth: f64,
    pub dot_nodes: usize,
}

pub fn cmd_diag(run: &Path, out: &Path) -> Result<Diagnostics> {
    let manifest = RunManifest::read(run)?;
    if manifest.status != "complete" {
        return Err(Error::Config(format!("run in {} did not complete", run.display())));
    }
    for entry in &manifest.outputs {
        let p = run.join(&entry.file);
        if !p.exists() {
            return Err(Error::io(
                format!("missing run artifact {} listed in {MANIFEST}", entry.file),
                std::io::Error::from(std::io::ErrorKind::NotFound),
            ));
        }
    }
    let log_p: Vec<f64> = read_matrix(&run.join("logP.csv"))?.iter().copied().collect();
    let size: Vec<f64> = read_matrix(&run.join("model_size.csv"))?.iter().copied().collect();
    create_dir(out)?;
    let iters = |v: &[f64]| DMatrix::from_fn(v.len(), 2, |i, c| if c == 0 { (i + 1) as f64 } else { v[i] });
    write_table(&out.join("trace_logP.csv"), &["iteration".into(), "logP".into()], &iters(&log_p))?;
    write_table(&out.join("trace_model_size.csv"), &["iteration".into(), "model_size".into()], &iters(&size))?;
    let header: Vec<String> = ["window", "lower", "upper", "density"].iter().map(|s| s.to_string()).collect();
    write_table(&out.join("window_density_logP.csv"), &header, &window_densities(&log_p))?;
    write_table(&out.join("window_density_model_size.csv"), &header, &window_densities(&size))?;

    let n = log_p.len();
    let third = &log_p[n / 2..3 * n / 4];
    let ks_half = ks_statistic(third, &log_p[n / 2..]);
    let ks_fourth = ks_statistic(third, &log_p[3 * n / 4..]);
    write_text(
        &out.join("ks.txt"),
        &format!(
            "ks_third_quarter_vs_last_half = {}\nks_third_vs_fourth_quarter = {}\n",
            format_value(ks_half),
            format_value(ks_fourth)
        ),
    )?;

    let s = manifest.dataset.s;
    let g_path = run.join("G_hat.csv");
    let (names, g) = if g_path.exists() {
        let t = read_table(&g_path)?;
        (t.header, Some(t.values))
    } else {
        let gamma = read_table(&run.join("gamma_hat.csv"))?;
        (gamma.header, None)
    };
    if names.len() != s {
        return Err(Error::Dimension(format!("manifest lists {s} responses, outputs have {}", names.len())));
    }
    write_text(&out.join("graph.dot"), &graph_dot(&names, g.as_ref()))?;
    Ok(Diagnostics {
        trace_len: n,
        ks_third_vs_last_half: ks_half,
        ks_third_vs_fourth: ks_fourth,
        dot_nodes: s,
    })
}

/// The decomposable graph of a thresholded edge-posterior matrix, when it is
/// decomposable.
pub fn threshold_graph(g_hat: &DMatrix<f64>, threshold: f64) -> Result<DecomposableGraph> {
    let s = g_hat.nrows();
    let mut edges = Vec::new();
    for i in 0..s {
        for j in i + 1..s {
            if g_hat[(i, j)] > threshold {
                edges.push((i, j));
            }
        }
    }
    DecomposableGraph::from_edges(s, &edges)
}
