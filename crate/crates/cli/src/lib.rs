//! Command-line front end for `llekit`.
//!
//! `run` parses arguments, dispatches, and maps outcomes to exit codes:
//! 0 on success, 1 for runtime failures, 2 for usage errors and violated preconditions.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use llekit::dataset::{csv_text, load_csv, load_labeled_csv, s_curve, swiss_roll, write_atomic, DataMatrix};
use llekit::error::LleError;
use llekit::lle_core::DEFAULT_EPS_SCALE;
use llekit::model_select::{lns, select_k, Criterion, KSearchSpec};
use llekit::neighbors::{component_count, knn_graph, pairwise_euclidean};
use llekit::oos::{oos_eigenfunctions, oos_kernel_mapping, oos_reconstruct, TrainedModel};
use llekit::Result;
use nalgebra::DMatrix;

pub mod plot;
pub mod registry;

#[cfg(test)]
mod command_tests;

pub use plot::render_scatter;
pub use registry::{run_method, Inputs, KernelKind, Method, Params};

#[derive(Debug, Parser)]
#[command(name = "llekit", version, about = "Locally linear embedding and its variants")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic manifold to CSV.
    Generate(GenerateArgs),
    /// Embed a CSV data set with one of the registry methods.
    Embed(EmbedArgs),
    /// Map new points into a trained LLE embedding.
    Oos(OosArgs),
    /// Choose the neighborhood size.
    SelectK(SelectKArgs),
    /// Render a two-column CSV as an SVG scatter plot.
    Plot(PlotArgs),
    /// Describe a data set, or list the registry methods.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Swiss,
    SCurve,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "swiss")]
    pub shape: Shape,
    #[arg(long, default_value_t = 800)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Append a class label column: the manifold parameter t cut into this many equal bins.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Also write the intrinsic coordinates (t, h).
    #[arg(long)]
    pub intrinsic: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV, one point per row.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// The input has a header row.
    #[arg(long)]
    pub header: bool,
    /// The last input column holds integer class labels (blank = unlabeled).
    #[arg(long)]
    pub labeled: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighborhood size.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Gram regularization: eps = eps_scale * trace / k.
    #[arg(long, default_value_t = DEFAULT_EPS_SCALE)]
    pub eps_scale: f64,
    /// Supervision strength (slle, eslle, plle, semi-lle, glle) or l2/l1 mix (rlle-enet).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ridge of the SLLEP projection.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Penalty weight of rlle-l2 and rlle-enet.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Kernel shift of landmark-nystrom.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Supervised weight adjustment for lle with --labeled.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of landmarks.
    #[arg(long)]
    pub m: Option<usize>,
    /// Weight vectors per point for mlle.
    #[arg(long)]
    pub s: Option<usize>,
    /// Seed of random landmark selection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer iterations (iterative-lle) or IRLS iterations (rlle).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    /// Gaussian kernel bandwidth; the median pairwise distance when omitted.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Second point set: test points (sllep, plle) or the new batch (incremental).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// One occurrence probability per input row (wlle-prob).
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Also write an SVG scatter plot, coloured by label when labels are present.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mapping {
    Reconstruct,
    Eigenfunctions,
    KernelMap,
}

#[derive(Debug, Args)]
pub struct OosArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value = "reconstruct")]
    pub mapping: Mapping,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = DEFAULT_EPS_SCALE)]
    pub eps_scale: f64,
    /// Kernel shift for eigenfunctions; 1e6 * lambda_max(M) when omitted.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Bandwidth factor of the kernel mapping.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Residual,
    Procrustes,
    Pne,
    /// Per-point neighborhood sizes.
    Lns,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "residual")]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = 4)]
    pub kmin: usize,
    #[arg(long, default_value_t = 30)]
    pub kmax: usize,
    /// Score only the local minima of the reconstruction error.
    #[arg(long)]
    pub hierarchical: bool,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = DEFAULT_EPS_SCALE)]
    pub eps_scale: f64,
    /// Score table (k,score) or, for lns, one k per point.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV with at least one column; the first two are plotted.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// One colour value per row.
    #[arg(long)]
    pub color: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub labeled: bool,
    /// Report kNN graph connectivity at this k.
    #[arg(long)]
    pub k: Option<usize>,
    /// List the registry methods.
    #[arg(long)]
    pub methods: bool,
}

fn load_input(a: &InputArgs) -> Result<(DataMatrix, Option<Vec<Option<usize>>>)> {
    if a.labeled {
        let ds = load_labeled_csv(&a.input, a.header)?;
        Ok((ds.data, Some(ds.labels)))
    } else {
        Ok((load_csv(&a.input, a.header)?, None))
    }
}

fn load_column(path: &Path, header: bool, n: usize, what: &str) -> Result<Vec<f64>> {
    let m = load_csv(path, header)?;
    if m.dim() != 1 || m.len() != n {
        return Err(LleError::ShapeMismatch(format!("{what} file must hold one value per row for {n} rows, got {} x {}", m.len(), m.dim())));
    }
    Ok(m.matrix().row(0).iter().copied().collect())
}

fn label_colors(labels: &Option<Vec<Option<usize>>>) -> Option<Vec<f64>> {
    labels.as_ref().map(|l| l.iter().map(|v| v.map_or(f64::NAN, |c| c as f64)).collect())
}

fn generate(a: &GenerateArgs) -> Result<String> {
    let m = match a.shape {
        Shape::Swiss => swiss_roll(a.n, a.noise, a.seed)?,
        Shape::SCurve => s_curve(a.n, a.noise, a.seed)?,
    };
    let mut rows = m.data.to_rows();
    if let Some(c) = a.classes {
        if c < 1 {
            return Err(LleError::InvalidArgument("--classes must be at least 1".into()));
        }
        let (lo, hi) = m.t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |r, &t| (r.0.min(t), r.1.max(t)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let labels: Vec<f64> = m.t.iter().map(|&t| (((t - lo) / span * c as f64).floor() as usize).min(c - 1) as f64).collect();
        let width = rows.ncols();
        rows = rows.insert_column(width, 0.0);
        let last = rows.ncols() - 1;
        for (i, l) in labels.iter().enumerate() {
            rows[(i, last)] = *l;
        }
    }
    let mut text = csv_text(&rows, None);
    if a.classes.is_some() {
        // labels are written as integers
        text = text.lines().map(|l| l.strip_suffix(".0").unwrap_or(l).to_string() + "\n").collect();
    }
    write_atomic(&a.out, text.as_bytes())?;
    if let Some(p) = &a.intrinsic {
        write_atomic(p, csv_text(&m.intrinsic().to_rows(), None).as_bytes())?;
    }
    Ok(format!("wrote {} points to {}", a.n, a.out.display()))
}

fn embed(a: &EmbedArgs) -> Result<String> {
    let (x, labels) = load_input(&a.input)?;
    let labels = match (a.method.labels(), labels) {
        (registry::LabelUse::Ignored, Some(_)) => {
            log::info!("method {} ignores labels", a.method.key());
            None
        }
        (_, l) => l,
    };
    let test = match &a.test {
        Some(p) => Some(load_csv(p, a.input.header)?),
        None => {
            if a.method.uses_test() && a.method != Method::Sllep {
                return Err(LleError::InvalidArgument(format!("method {} needs --test", a.method.key())));
            }
            None
        }
    };
    if test.is_some() && !a.method.uses_test() {
        log::warn!("method {} ignores --test", a.method.key());
    }
    let probs = a.probs.as_deref().map(|p| load_column(p, a.input.header, x.len(), "probability")).transpose()?;
    let params = Params {
        k: a.k,
        p: a.p,
        eps_scale: a.eps_scale,
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma,
        mu: a.mu,
        delta: a.delta,
        m: a.m,
        s: a.s,
        seed: a.seed,
        iterations: a.iterations,
        kernel: a.kernel,
        sigma: a.sigma,
    };
    let inputs = Inputs { x: &x, labels: labels.as_deref(), test: test.as_ref(), probs: probs.as_deref() };
    let y = run_method(a.method, &inputs, &params)?;
    write_atomic(&a.out, csv_text(&y, None).as_bytes())?;
    if let Some(path) = &a.plot {
        let colors = label_colors(&labels).filter(|c| c.len() == y.nrows());
        render_scatter(&y, colors.as_deref(), path)?;
    }
    Ok(format!("{}: wrote {} x {} embedding to {}", a.method.key(), y.nrows(), y.ncols(), a.out.display()))
}

fn oos(a: &OosArgs) -> Result<String> {
    let (x, _) = load_input(&a.input)?;
    let xt = load_csv(&a.test, a.input.header)?;
    let model = TrainedModel::train(x, a.k, a.p, a.eps_scale)?;
    let y = match a.mapping {
        Mapping::Reconstruct => oos_reconstruct(&model, &xt)?.y,
        Mapping::Eigenfunctions => {
            let mu = match a.mu {
                Some(mu) => mu,
                None => 1e6 * llekit::numlin::lambda_max(&model.fit.m.m)?,
            };
            oos_eigenfunctions(&model, &xt, mu)?.y
        }
        Mapping::KernelMap => oos_kernel_mapping(&model, &xt, a.gamma)?.y,
    };
    write_atomic(&a.out, csv_text(&y, None).as_bytes())?;
    if let Some(path) = &a.plot {
        render_scatter(&y, None, path)?;
    }
    Ok(format!("wrote {} out-of-sample points to {}", y.nrows(), a.out.display()))
}

fn select(a: &SelectKArgs) -> Result<String> {
    let (x, _) = load_input(&a.input)?;
    if a.criterion == CriterionArg::Lns {
        let r = lns(&x, Some(a.kmax))?;
        let col = DMatrix::from_iterator(r.k_per_point.len(), 1, r.k_per_point.iter().map(|&k| k as f64));
        let text: String = csv_text(&col, Some(&["k".to_string()])).lines().map(|l| l.strip_suffix(".0").unwrap_or(l).to_string() + "\n").collect();
        write_atomic(&a.out, text.as_bytes())?;
        return Ok(format!("lns: k_min {} k_max {}; per-point k written to {}", r.k_min, r.k_max, a.out.display()));
    }
    let criterion = match a.criterion {
        CriterionArg::Residual => Criterion::ResidualVariance,
        CriterionArg::Procrustes => Criterion::Procrustes,
        _ => Criterion::Pne,
    };
    let spec = KSearchSpec { k_min: a.kmin, k_max: a.kmax, hierarchical: a.hierarchical, p: a.p, eps_scale: a.eps_scale };
    let sel = select_k(&x, &spec, criterion)?;
    write_atomic(&a.out, sel.csv().as_bytes())?;
    Ok(format!("selected k = {}", sel.k))
}

fn plot_cmd(a: &PlotArgs) -> Result<String> {
    let pts = load_csv(&a.input, a.header)?.to_rows();
    let colors = a.color.as_deref().map(|p| load_column(p, a.header, pts.nrows(), "colour")).transpose()?;
    render_scatter(&pts, colors.as_deref(), &a.out)?;
    Ok(format!("wrote {} points to {}", pts.nrows(), a.out.display()))
}

fn info(a: &InfoArgs) -> Result<String> {
    let mut out = String::new();
    if a.methods {
        for m in Method::all() {
            out.push_str(&format!("{:<18}{}\n", m.key(), m.summary()));
        }
    }
    if let Some(path) = &a.input {
        let (x, labels) = load_input(&InputArgs { input: path.clone(), header: a.header, labeled: a.labeled })?;
        out.push_str(&format!("points: {}\ndimension: {}\n", x.len(), x.dim()));
        for r in 0..x.dim() {
            let row = x.matrix().row(r);
            out.push_str(&format!("column {r}: min {:.6} max {:.6} mean {:.6}\n", row.min(), row.max(), row.mean()));
        }
        if let Some(l) = labels {
            let classes = l.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
            let unlabeled = l.iter().filter(|v| v.is_none()).count();
            out.push_str(&format!("classes: {classes}\nunlabeled: {unlabeled}\n"));
        }
        if let Some(k) = a.k {
            let comps = component_count(&knn_graph(&pairwise_euclidean(&x), k)?);
            out.push_str(&format!("kNN graph at k = {k}: {comps} component(s)\n"));
        }
    } else if !a.methods {
        return Err(LleError::InvalidArgument("info needs --in or --methods".into()));
    }
    Ok(out.trim_end().to_string())
}

/// Execute one command; messages go to stdout, errors to stderr.
pub fn dispatch(cfg: &RunConfig) -> Result<String> {
    match &cfg.command {
        Command::Generate(a) => generate(a),
        Command::Embed(a) => embed(a),
        Command::Oos(a) => oos(a),
        Command::SelectK(a) => select(a),
        Command::Plot(a) => plot_cmd(a),
        Command::Info(a) => info(a),
    }
}

pub fn exit_code(e: &LleError) -> i32 {
    if e.is_usage() {
        2
    } else {
        1
    }
}

/// Parse `argv` (program name first) and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cfg) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
