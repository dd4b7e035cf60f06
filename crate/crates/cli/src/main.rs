use anyhow::{anyhow, bail, Context, Result};
use bcp_core::bcp::{bcp_run, BcpError, MetricMode, RunOptions};
use bcp_core::evolve::{jc_to_cfn_reduce, random_delta_bm_tree, simulate, Alphabet, CharacterMatrix, DeltaBmSpec, ModelSpec};
use bcp_core::harness::{fit_log, minimal_k, oracle_enumerate_small, run_trials, Aggregate, KSearch, MinimalK, Regime, TrialRecord};
use bcp_core::params::{derive_params, AlgoParams, ParamOverrides, ParamsError};
use bcp_core::rng::derive_seed;
use bcp_core::treekit::{newick_parse, newick_write, rf_distance, PhyloTree, Validation};
use clap::{Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_INVALID_REGIME: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_NON_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "bcp", version, about = "Simulate, reconstruct and benchmark binary phylogenies by blindfolded cherry picking")]
struct Cli {
    /// Worker threads (defaults to the number of cores).  Results do not
    /// depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cfn,
    Jc,
}

#[derive(clap::Args, Clone, Copy)]
struct RegimeArgs {
    #[arg(long, default_value_t = 0.02)]
    f: f64,
    #[arg(long, default_value_t = 0.12)]
    g: f64,
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    /// Failure budget δ.
    #[arg(long, default_value_t = 0.1)]
    failure: f64,
}

impl RegimeArgs {
    fn regime(&self) -> Regime {
        Regime { f: self.f, g: self.g, delta: self.delta, failure: self.failure }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random Δ-branch-model tree and simulate characters on it.
    Simulate {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        regime: RegimeArgs,
        #[arg(long, value_enum, default_value = "cfn")]
        model: Model,
        /// Number of sites; defaults to the calibrated or theoretical value.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_tree: PathBuf,
        #[arg(long)]
        out_chars: PathBuf,
    },
    /// Reconstruct a tree from a character matrix.
    Reconstruct {
        #[arg(long)]
        chars: PathBuf,
        #[command(flatten)]
        regime: RegimeArgs,
        /// Use only the first `k` sites of the matrix.
        #[arg(long)]
        k_override: Option<usize>,
        /// Replace every estimate by true distances in `--true-tree`.
        #[arg(long, requires = "true_tree")]
        perfect: bool,
        /// Check the forest invariants against `--true-tree` every iteration.
        #[arg(long, requires = "true_tree")]
        audit: bool,
        #[arg(long)]
        true_tree: Option<PathBuf>,
        /// Seed of the majority tie bits.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimal k reaching a target success rate, for each n, with a fit of
    /// k against ln n.
    ExperimentScaling {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        ns: Vec<usize>,
        #[command(flatten)]
        regime: RegimeArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 4000)]
        k_start: usize,
        /// Searches that need more sites than this are reported as over
        /// budget.
        #[arg(long, default_value_t = 16_000_000)]
        k_max: usize,
        #[arg(long, default_value_t = 1.25)]
        ratio: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success rate over a sweep of k at one n, and the smallest k that
    /// meets the target.
    Calibrate {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[command(flatten)]
        regime: RegimeArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare simulated site patterns with the exact leaf distribution of a
    /// small tree.
    OracleCheck {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum, default_value = "cfn")]
        model: Model,
        #[arg(long, default_value_t = 100_000)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with a dedicated exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn regime_error(e: ParamsError) -> anyhow::Error {
    Exit(EXIT_INVALID_REGIME, e.to_string()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let start = Instant::now();
    let result = match cli.command {
        Command::Simulate { n, regime, model, k, seed, out_tree, out_chars } => {
            cmd_simulate(n, regime, model, k, seed, &out_tree, &out_chars)
        }
        Command::Reconstruct { chars, regime, k_override, perfect, audit, true_tree, seed, out } => {
            cmd_reconstruct(&chars, regime, k_override, perfect, audit, true_tree.as_deref(), seed, &out)
        }
        Command::ExperimentScaling { ns, regime, trials, target, k_start, k_max, ratio, seed, out } => {
            let search = KSearch { trials, target, k_start, k_max, ratio };
            cmd_scaling(&ns, regime, search, seed, &out)
        }
        Command::Calibrate { n, ks, regime, trials, target, seed, out } => {
            cmd_calibrate(n, &ks, regime, trials, target, seed, &out)
        }
        Command::OracleCheck { tree, model, k, seed, out } => cmd_oracle(&tree, model, k, seed, out.as_deref()),
    };
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::FAILURE,
            }
        }
    }
}

fn model_spec(model: Model) -> ModelSpec {
    match model {
        Model::Cfn => ModelSpec::CFN,
        Model::Jc => ModelSpec::JC,
    }
}

/// Constants for data under `alphabet`.  JC data is analysed through its
/// purine/pyrimidine classes, a CFN process on the same tree with every
/// length doubled.
fn params_for(alphabet: Alphabet, r: RegimeArgs, n: usize, k: Option<usize>) -> Result<AlgoParams> {
    let scale = match alphabet {
        Alphabet::Cfn => 1.0,
        Alphabet::Jc => 2.0,
    };
    let overrides = ParamOverrides { k, ..Default::default() };
    derive_params(scale * r.f, scale * r.g, scale * r.delta, n, r.failure, overrides).map_err(regime_error)
}

/// Multiplies every length by `factor`, dropping digits below 10⁻¹² so that
/// halved grid values print as the grid values they are.
fn scale_tree(tree: &PhyloTree, factor: f64) -> Result<PhyloTree> {
    let edges: Vec<_> = tree.edges().into_iter().map(|(a, b, l)| (a, b, (l * factor * 1e12).round() / 1e12)).collect();
    let labels: Vec<_> = tree.leaves().iter().map(|&x| (x, tree.label(x).expect("leaves are labelled"))).collect();
    let validation = Validation { allow_multifurcation: false, allow_zero_length: true };
    Ok(PhyloTree::from_edges(tree.n_nodes(), &edges, &labels, tree.root(), validation)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_simulate(n: usize, r: RegimeArgs, model: Model, k: Option<usize>, seed: u64, out_tree: &Path, out_chars: &Path) -> Result<()> {
    let alphabet = match model {
        Model::Cfn => Alphabet::Cfn,
        Model::Jc => Alphabet::Jc,
    };
    let params = params_for(alphabet, r, n, k)?;
    let spec = DeltaBmSpec { n, f: r.f, g: r.g, delta: r.delta };
    let tree = random_delta_bm_tree(&spec, derive_seed(seed, 1)).map_err(|e| Exit(EXIT_INVALID_REGIME, e.to_string()))?;
    let chars = simulate(&tree, model_spec(model), params.k, derive_seed(seed, 2))?;
    write(out_tree, &format!("{}\n", newick_write(&tree)))?;
    write(out_chars, &chars.to_text())?;
    println!("seed={seed}");
    println!("n={n} k={} model={}", params.k, if matches!(model, Model::Cfn) { "cfn" } else { "jc" });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct(
    chars_path: &Path,
    r: RegimeArgs,
    k_override: Option<usize>,
    perfect: bool,
    audit: bool,
    true_tree: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut chars = CharacterMatrix::from_text(&read(chars_path)?)?;
    if let Some(k) = k_override {
        chars = truncate(&chars, k)?;
    }
    let alphabet = chars.alphabet();
    let params = params_for(alphabet, r, chars.n(), Some(chars.k()))?;
    let scale = if alphabet == Alphabet::Jc { 2.0 } else { 1.0 };
    let truth = true_tree.map(|p| -> Result<PhyloTree> { Ok(newick_parse(read(p)?.trim())?) }).transpose()?;
    let truth_cfn = truth.as_ref().map(|t| scale_tree(t, scale)).transpose()?;
    let cfn = if alphabet == Alphabet::Jc { jc_to_cfn_reduce(&chars)? } else { chars };

    println!("seed={seed}");
    println!("n={} k={} alphabet={} mode={}", cfn.n(), cfn.k(), alphabet_name(alphabet), if perfect { "perfect" } else { "statistical" });
    if alphabet == Alphabet::Jc {
        println!("lengths below are for the class process (twice the JC lengths)");
    }
    print!("{}", params_report(&params));
    let mode = match (&truth_cfn, perfect) {
        (Some(t), true) => MetricMode::Perfect(t.clone()),
        _ => MetricMode::Statistical { seed },
    };
    let options = RunOptions { audit: if audit { truth_cfn.clone() } else { None }, max_iterations: None };
    let t0 = Instant::now();
    let run = bcp_run(&cfn, &params, mode, &options);
    eprintln!("bcp_run: {:.3}s", t0.elapsed().as_secs_f64());
    let output = match run {
        Ok(o) => o,
        Err(e @ (BcpError::NonConvergence { .. } | BcpError::IterationLimit { .. })) => {
            if let BcpError::NonConvergence { partial, .. } | BcpError::IterationLimit { partial, .. } = &e {
                print_trace(&partial.trace)?;
                if let Some(a) = &partial.audit {
                    for v in &a.violations {
                        println!("audit violation: {v}");
                    }
                }
            }
            return Err(Exit(EXIT_NON_CONVERGENCE, e.to_string()).into());
        }
        Err(e) => return Err(e.into()),
    };
    print_trace(&output.trace)?;
    println!("iterations={}", output.iterations);
    let tree = scale_tree(&output.tree, 1.0 / scale)?;
    write(out, &format!("{}\n", newick_write(&tree)))?;
    if let Some(t) = &truth {
        println!("rf_distance={}", rf_distance(&tree, t)?);
    }
    if let Some(a) = &output.audit {
        println!("audit: {} removals checked, fixed subforest sizes {:?}", a.removals_checked, a.fixed_sizes);
        if !a.is_clean() {
            for v in &a.violations {
                println!("audit violation: {v}");
            }
            let claims: std::collections::BTreeSet<String> = a.violations.iter().map(|v| v.claim.to_string()).collect();
            let names: Vec<String> = claims.into_iter().collect();
            return Err(Exit(EXIT_AUDIT, format!("audit failed: {}", names.join("; "))).into());
        }
        println!("audit: clean");
    }
    Ok(())
}

fn alphabet_name(a: Alphabet) -> &'static str {
    match a {
        Alphabet::Cfn => "CFN",
        Alphabet::Jc => "JC",
    }
}

fn params_report(p: &AlgoParams) -> String {
    format!(
        "parameters: f={} g={} g'={:.6} delta={} eps={:.6e} R_col={:.6} M={:.6} R_acc={:.6} levels={} beta={:.6} B={:.6} k={}\ncertificate:\n{}",
        p.f,
        p.g,
        p.g_prime,
        p.delta,
        p.eps,
        p.r_col,
        p.m,
        p.r_acc,
        p.majority.levels,
        p.majority.beta,
        p.b_bound,
        p.k,
        p.certificate()
    )
}

fn print_trace(trace: &[bcp_core::bcp::TraceRecord]) -> Result<()> {
    println!("trace:");
    for rec in trace {
        println!("{}", serde_json::to_string(rec)?);
    }
    Ok(())
}

fn truncate(chars: &CharacterMatrix, k: usize) -> Result<CharacterMatrix> {
    if k == 0 || k > chars.k() {
        bail!("--k-override {k} must lie in 1..={}", chars.k());
    }
    // the text form is the simplest exact way to cut every row
    let text = chars.to_text();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty matrix"))?;
    let mut out = header.replacen(&format!("k={}", chars.k()), &format!("k={k}"), 1);
    out.push('\n');
    for line in lines {
        let (label, seq) = line.split_once('\t').ok_or_else(|| anyhow!("malformed row"))?;
        out.push_str(label);
        out.push('\t');
        out.push_str(&seq[..k]);
        out.push('\n');
    }
    Ok(CharacterMatrix::from_text(&out)?)
}

#[derive(serde::Serialize)]
struct ScalingRow {
    #[serde(flatten)]
    result: MinimalK,
    budget_exceeded: bool,
}

#[derive(serde::Serialize)]
struct ScalingReport {
    regime: Regime,
    search: KSearch,
    base_seed: u64,
    rows: Vec<ScalingRow>,
    /// `k ≈ a + b ln n` over the sizes that met the target.
    fit: Option<(f64, f64)>,
    /// `k*(largest n) / k*(smallest n)` and `ln(largest n) / ln(smallest n)`.
    ratio: Option<(f64, f64)>,
}

fn cmd_scaling(ns: &[usize], r: RegimeArgs, search: KSearch, seed: u64, out: &Path) -> Result<()> {
    let regime = r.regime();
    let mut rows = Vec::new();
    for &n in ns {
        let t0 = Instant::now();
        let result = minimal_k(&regime, n, &search, seed).map_err(regime_error)?;
        eprintln!("n={n}: {:.1}s", t0.elapsed().as_secs_f64());
        let budget_exceeded = result.k_star.is_none();
        println!(
            "n={n} k*={} evaluations={}",
            result.k_star.map_or("over budget".to_string(), |k| k.to_string()),
            result.evaluations.iter().map(|a| format!("{}:{}/{}", a.k, a.successes, a.trials)).collect::<Vec<_>>().join(" ")
        );
        rows.push(ScalingRow { result, budget_exceeded });
    }
    let points: Vec<(usize, usize)> = rows.iter().filter_map(|r| r.result.k_star.map(|k| (r.result.n, k))).collect();
    let fit = fit_log(&points);
    let ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 => match (a.result.k_star, b.result.k_star) {
            (Some(ka), Some(kb)) => Some((kb as f64 / ka as f64, (b.result.n as f64).ln() / (a.result.n as f64).ln())),
            _ => None,
        },
        _ => None,
    };
    if let Some((a, b)) = fit {
        println!("fit: k = {a:.1} + {b:.1} ln n");
    }
    if let Some((measured, logs)) = ratio {
        println!("ratio: k* {measured:.3} vs ln n {logs:.3}");
    }
    if rows.iter().any(|r| r.budget_exceeded) {
        println!("partial: some sizes exceeded k_max = {}", search.k_max);
    }
    let report = ScalingReport { regime, search, base_seed: seed, rows, fit, ratio };
    write(out, &serde_json::to_string_pretty(&report)?)
}

#[derive(serde::Serialize)]
struct CalibrationReport {
    regime: Regime,
    n: usize,
    target: f64,
    base_seed: u64,
    sweep: Vec<Aggregate>,
    /// Smallest swept `k` whose success rate met the target.
    k_star: Option<usize>,
    records: Vec<TrialRecord>,
}

fn cmd_calibrate(n: usize, ks: &[usize], r: RegimeArgs, trials: usize, target: f64, seed: u64, out: &Path) -> Result<()> {
    let regime = r.regime();
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut sweep = Vec::new();
    let mut records = Vec::new();
    for &k in &ks {
        let t0 = Instant::now();
        let recs = run_trials(&regime, n, k, trials, seed).map_err(regime_error)?;
        eprintln!("k={k}: {:.1}s", t0.elapsed().as_secs_f64());
        let agg = Aggregate::of(&recs);
        println!("n={n} k={k} success={}/{}", agg.successes, agg.trials);
        sweep.push(agg);
        records.extend(recs);
    }
    let k_star = sweep.iter().find(|a| a.rate() >= target).map(|a| a.k);
    println!("k*={}", k_star.map_or("none".to_string(), |k| k.to_string()));
    let report = CalibrationReport { regime, n, target, base_seed: seed, sweep, k_star, records };
    write(out, &serde_json::to_string_pretty(&report)?)
}

#[derive(serde::Serialize)]
struct OracleReport {
    model: &'static str,
    k: usize,
    seed: u64,
    patterns: usize,
    chi_square: f64,
    degrees_of_freedom: usize,
    /// Exact probability and observed count of each leaf pattern.
    table: BTreeMap<String, (f64, usize)>,
}

fn cmd_oracle(tree_path: &Path, model: Model, k: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let tree = newick_parse(read(tree_path)?.trim())?;
    let spec = model_spec(model);
    let exact = oracle_enumerate_small(&tree, spec)?;
    let chars = simulate(&tree, spec, k, seed)?;
    let n = chars.n();
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    let text = chars.to_text();
    let rows: Vec<Vec<u8>> = text
        .lines()
        .skip(1)
        .map(|l| {
            let seq = l.split_once('\t').map_or("", |(_, s)| s);
            seq.bytes().map(state_index).collect()
        })
        .collect();
    for site in 0..k {
        let pat: Vec<u8> = (0..n).map(|i| rows[i][site]).collect();
        *counts.entry(pat).or_insert(0) += 1;
    }
    let mut chi = 0.0;
    let mut table = BTreeMap::new();
    for (pat, &p) in &exact.probs {
        let e = p * k as f64;
        let o = counts.get(pat).copied().unwrap_or(0);
        if e > 0.0 {
            chi += (o as f64 - e).powi(2) / e;
        }
        table.insert(pattern_name(pat, model), (p, o));
    }
    let dof = exact.probs.len() - 1;
    println!("seed={seed}");
    println!("patterns={} k={k} chi_square={chi:.3} dof={dof}", exact.probs.len());
    if let Model::Cfn = model {
        let dist = tree.distance_matrix();
        for (i, &a) in exact.labels.iter().enumerate() {
            for &b in &exact.labels[i + 1..] {
                let c = exact.correlation(a, b).expect("labels exist");
                let d = dist.get(tree.leaf(a).unwrap(), tree.leaf(b).unwrap());
                println!("corr({a},{b}) exact={c:.12} exp(-2d)={:.12}", (-2.0 * d).exp());
            }
        }
    }
    if let Some(path) = out {
        let name = if matches!(model, Model::Cfn) { "cfn" } else { "jc" };
        let report = OracleReport { model: name, k, seed, patterns: exact.probs.len(), chi_square: chi, degrees_of_freedom: dof, table };
        write(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn state_index(c: u8) -> u8 {
    match c {
        b'+' | b'A' => 0,
        b'-' | b'C' => 1,
        b'G' => 2,
        _ => 3,
    }
}

fn pattern_name(pat: &[u8], model: Model) -> String {
    let symbols: &[char] = match model {
        Model::Cfn => &['+', '-'],
        Model::Jc => &['A', 'C', 'G', 'T'],
    };
    pat.iter().map(|&s| symbols[s as usize]).collect()
}
