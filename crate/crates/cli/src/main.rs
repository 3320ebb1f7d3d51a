mod args;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use forest_gtr::experiments::{
    denoise, derive_seed, ssl_table, sweep_alpha, synthesize_signal, DenoiseSettings, SignalSpec,
    SweepSettings,
};
use forest_gtr::io::{self, fmt_opt, to_json, OutputFormat, SCHEMA_VERSION};
use forest_gtr::linalg::solve_exact;
use forest_gtr::ssl::AccuracySettings;
use forest_gtr::{
    run_monte_carlo, ssl_exact, ssl_forest, ClassificationResult, Error, Graph, GraphModel,
    NodePositions, SmoothingProblem, SslProblem,
};

use args::{parse_alpha, Cli, Command, Common, Format, GenSpec, GraphSource, Grid, SignalSource, SmoothInput};

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

// stream index reserved for synthetic signals, away from forest substreams
const SIGNAL_STREAM: u64 = u64::MAX;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 4 } else { 3 })
        }
    }
}

fn format_of(f: Format) -> OutputFormat {
    match f {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    }
}

fn emit(common: &Common, text: &str) -> CliResult<()> {
    match &common.out {
        Some(path) => io::write_text(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Core(Error::Io { path: "<stdout>".into(), source: e }))?;
        }
    }
    Ok(())
}

fn model_of(spec: &GenSpec, coords: Option<&std::path::Path>) -> CliResult<GraphModel> {
    Ok(match *spec {
        GenSpec::Regular(n, degree) => GraphModel::Regular { n, degree },
        GenSpec::Ba(n, k) => GraphModel::BarabasiAlbert { n, k },
        GenSpec::Grid(rows, cols) => GraphModel::Grid { rows, cols },
        GenSpec::Cliques(cliques, size) => GraphModel::CliqueChain { cliques, size },
        GenSpec::Knn(n, k) => match coords {
            None => GraphModel::RandomKnn { n, k },
            Some(path) => {
                let positions = NodePositions::load(path)?;
                if positions.len() != n {
                    return Err(Failure::Core(Error::LengthMismatch { expected: n, actual: positions.len() }));
                }
                GraphModel::Knn { k, positions }
            }
        },
    })
}

fn load_graph(src: &GraphSource, seed: u64) -> CliResult<Graph> {
    match (&src.choice.graph, &src.choice.gen) {
        (Some(path), None) => Ok(Graph::load(path)?),
        (None, Some(spec)) => Ok(forest_gtr::graph::gen_graph(&model_of(spec, src.coords.as_deref())?, seed)?),
        _ => Err(Failure::Usage("give exactly one of --graph and --gen".into())),
    }
}

fn load_signal(src: &SignalSource, graph: &Graph, seed: u64, default: Option<SignalSpec>) -> CliResult<Vec<f64>> {
    if let Some(path) = &src.signal {
        return Ok(io::load_signal(path, graph.n())?);
    }
    let spec = src
        .signal_gen
        .or(default)
        .ok_or_else(|| Failure::Usage("give --signal or --signal-gen".into()))?;
    Ok(synthesize_signal(graph, spec, derive_seed(seed, SIGNAL_STREAM))?)
}

fn problem<'g>(input: &SmoothInput, graph: &'g Graph, y: Vec<f64>) -> CliResult<SmoothingProblem<'g>> {
    match (input.q, input.mu) {
        (Some(q), None) => Ok(SmoothingProblem::uniform(graph, y, q)?),
        (None, Some(mu)) => Ok(SmoothingProblem::degree_scaled(graph, y, mu)?),
        (None, None) => Ok(SmoothingProblem::uniform(graph, y, 1.0)?),
        (Some(_), Some(_)) => Err(Failure::Usage("--q and --mu are exclusive".into())),
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenGraph { gen, common } => {
            let graph = forest_gtr::graph::gen_graph(&model_of(&gen, None)?, common.seed)?;
            emit(&common, &graph.to_edge_list())
        }
        Command::Exact { input, common } => {
            let graph = load_graph(&input.graph, common.seed)?;
            let y = load_signal(&input.signal, &graph, common.seed, None)?;
            let p = problem(&input, &graph, y)?;
            let x = solve_exact(&p)?;
            emit(&common, &io::render_exact(&x, format_of(common.format)))
        }
        Command::Smooth { input, n_samples, alpha, common } => {
            let graph = load_graph(&input.graph, common.seed)?;
            let y = load_signal(&input.signal, &graph, common.seed, None)?;
            let p = problem(&input, &graph, y)?;
            let result = run_monte_carlo(&p, n_samples, alpha, common.seed)?;
            emit(&common, &io::render_estimate(&result, format_of(common.format)))
        }
        Command::SweepAlpha { input, n_samples, realizations, alpha_grid, common } => {
            let graph = load_graph(&input.graph, common.seed)?;
            let y = load_signal(&input.signal, &graph, common.seed, Some(SignalSpec::Normal))?;
            let p = problem(&input, &graph, y)?;
            let settings = SweepSettings {
                n_samples,
                realizations,
                alphas: alpha_grid.map(|g| g.0),
                seed: common.seed,
            };
            let report = sweep_alpha(&p, &settings)?;
            emit(&common, &report.render(format_of(common.format)))
        }
        Command::Denoise { graph, signal, q_grid, noise_std, n_samples, realizations, common } => {
            let graph = load_graph(&graph, common.seed)?;
            let default = SignalSpec::Smooth { modes: 3.min(graph.n().saturating_sub(1)).max(1), amplitude: 100.0 };
            let clean = load_signal(&signal, &graph, common.seed, Some(default))?;
            let settings = DenoiseSettings {
                q_grid: q_grid.unwrap_or_else(Grid::default_q).0,
                noise_std,
                n_samples,
                realizations,
                seed: common.seed,
            };
            let report = denoise(&graph, &clean, &settings)?;
            emit(&common, &report.render(format_of(common.format)))
        }
        Command::Ssl {
            graph,
            labels,
            labeled,
            labels_per_class,
            mu,
            sigma,
            n_samples,
            repeats,
            alpha,
            common,
        } => {
            let g = load_graph(&graph, common.seed)?;
            let truth = match (&labels, &graph.choice.gen) {
                (Some(path), _) => io::load_labels(path, g.n())?,
                (None, Some(GenSpec::Cliques(_, size))) => (0..g.n()).map(|v| v / size).collect(),
                (None, _) => return Err(Failure::Usage("--labels is required for this graph".into())),
            };
            let format = format_of(common.format);
            match labeled {
                Some(path) => {
                    let vertices = io::load_vertex_list(path, g.n())?;
                    let pairs: Vec<(usize, usize)> = vertices.iter().map(|&v| (v, truth[v])).collect();
                    let classes = truth.iter().max().map_or(0, |c| c + 1);
                    let p = SslProblem::new(&g, classes, pairs.clone(), mu, sigma)?;
                    let (method, result) = if alpha == "exact" {
                        ("exact", ssl_exact(&p)?)
                    } else {
                        let strategy = parse_alpha(&alpha).map_err(Failure::Usage)?;
                        ("forest", ssl_forest(&p, n_samples, strategy, common.seed)?)
                    };
                    let accuracy = result.accuracy(&truth, &pairs);
                    emit(&common, &render_classification(method, &result, accuracy, format))
                }
                None => {
                    let settings = AccuracySettings { mu, sigma, n_samples, repeats, seed: common.seed };
                    let table = ssl_table(&g, &truth, &labels_per_class, &settings)?;
                    emit(&common, &table.render(format))
                }
            }
        }
    }
}

#[derive(serde::Serialize)]
struct ClassificationDocument<'a> {
    schema: &'static str,
    method: &'a str,
    accuracy: Option<f64>,
    predicted: &'a [usize],
    scores: &'a [Vec<f64>],
    alphas: &'a [f64],
}

fn render_classification(
    method: &str,
    result: &ClassificationResult,
    accuracy: Option<f64>,
    format: OutputFormat,
) -> String {
    use std::fmt::Write as _;
    match format {
        OutputFormat::Json => to_json(&ClassificationDocument {
            schema: SCHEMA_VERSION,
            method,
            accuracy,
            predicted: &result.predicted,
            scores: &result.scores,
            alphas: &result.alphas,
        }),
        OutputFormat::Csv => {
            let mut out = format!("# method={method} accuracy={}\nnode,predicted", fmt_opt(accuracy));
            for c in 0..result.scores.len() {
                write!(out, ",score_{c}").unwrap();
            }
            out.push('\n');
            for (v, pred) in result.predicted.iter().enumerate() {
                write!(out, "{v},{pred}").unwrap();
                for col in &result.scores {
                    write!(out, ",{:?}", col[v]).unwrap();
                }
                out.push('\n');
            }
            out
        }
    }
}
