use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forest_gtr::experiments::{default_q_grid, log_grid, SignalSpec};
use forest_gtr::AlphaStrategy;

#[derive(Parser, Debug)]
#[command(name = "forest-gtr", version, about = "Graph Tikhonov smoothing with random spanning forests")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a graph and write it as an edge list.
    GenGraph {
        #[arg(long, value_parser = parse_gen)]
        gen: GenSpec,
        #[command(flatten)]
        common: Common,
    },
    /// Exact solution x̂ = K y.
    Exact {
        #[command(flatten)]
        input: SmoothInput,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimate from random forests, with one gradient step.
    Smooth {
        #[command(flatten)]
        input: SmoothInput,
        #[arg(long, default_value_t = 100)]
        n_samples: u64,
        /// safe, empirical, oracle or a number.
        #[arg(long, default_value = "safe", value_parser = parse_alpha)]
        alpha: AlphaStrategy,
        #[command(flatten)]
        common: Common,
    },
    /// Squared error of x̄ and z̄ over a grid of step sizes.
    SweepAlpha {
        #[command(flatten)]
        input: SmoothInput,
        #[arg(long, default_value_t = 10)]
        n_samples: u64,
        #[arg(long, default_value_t = 200)]
        realizations: usize,
        /// Comma list or `lin:LO:HI:COUNT` (default: 25 points on [0, 2·max(α_safe, α̂)]).
        #[arg(long, value_parser = parse_grid)]
        alpha_grid: Option<Grid>,
        #[command(flatten)]
        common: Common,
    },
    /// PSNR of noisy, exact and forest estimates over a grid of q.
    Denoise {
        #[command(flatten)]
        graph: GraphSource,
        #[command(flatten)]
        signal: SignalSource,
        /// Comma list, `log:LO:HI:COUNT` or `lin:LO:HI:COUNT`.
        #[arg(long, value_parser = parse_grid)]
        q_grid: Option<Grid>,
        #[arg(long, default_value_t = 5.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 2)]
        n_samples: u64,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Semi-supervised classification.
    Ssl {
        #[command(flatten)]
        graph: GraphSource,
        /// `node,class_id` per line. Optional for `cliques:` graphs.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Labeled vertices, one per line: classify once and write scores.
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// Accuracy table over these labeled-per-class counts.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        labels_per_class: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 50)]
        n_samples: u64,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Step for the single run with `--labeled`; `exact` uses the solver.
        #[arg(long, default_value = "safe")]
        alpha: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct GraphSourceChoice {
    /// Edge list `u v [w]`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// regular:N:D, ba:N:K, grid:R:C, knn:N:K, cliques:C:S.
    #[arg(long, value_parser = parse_gen)]
    pub gen: Option<GenSpec>,
}

#[derive(Args, Debug)]
pub struct GraphSource {
    #[command(flatten)]
    pub choice: GraphSourceChoice,
    /// `x,y` positions for knn graphs.
    #[arg(long)]
    pub coords: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SignalSource {
    /// One value per line or `node,value` lines.
    #[arg(long, conflicts_with = "signal_gen")]
    pub signal: Option<PathBuf>,
    /// normal, smooth:K[:AMP] or constant:C.
    #[arg(long, value_parser = parse_signal_gen)]
    pub signal_gen: Option<SignalSpec>,
}

#[derive(Args, Debug)]
pub struct SmoothInput {
    #[command(flatten)]
    pub graph: GraphSource,
    #[command(flatten)]
    pub signal: SignalSource,
    /// Uniform fidelity weight q.
    #[arg(long, conflicts_with = "mu")]
    pub q: Option<f64>,
    /// Degree-scaled fidelity q_i = μ d_i / 2.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    Regular(usize, usize),
    Ba(usize, usize),
    Grid(usize, usize),
    Knn(usize, usize),
    Cliques(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn default_q() -> Grid {
        Grid(default_q_grid())
    }
}

fn two_ints(rest: &[&str], what: &str) -> Result<(usize, usize), String> {
    match rest {
        [a, b] => Ok((
            a.parse().map_err(|_| format!("{what}: bad integer `{a}`"))?,
            b.parse().map_err(|_| format!("{what}: bad integer `{b}`"))?,
        )),
        _ => Err(format!("{what} expects two integer parameters")),
    }
}

pub fn parse_gen(s: &str) -> Result<GenSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let (kind, rest) = parts.split_first().ok_or("empty generator spec")?;
    let (a, b) = two_ints(rest, kind)?;
    Ok(match *kind {
        "regular" => GenSpec::Regular(a, b),
        "ba" => GenSpec::Ba(a, b),
        "grid" => GenSpec::Grid(a, b),
        "knn" => GenSpec::Knn(a, b),
        "cliques" => GenSpec::Cliques(a, b),
        other => return Err(format!("unknown generator `{other}`")),
    })
}

pub fn parse_alpha(s: &str) -> Result<AlphaStrategy, String> {
    Ok(match s {
        "safe" => AlphaStrategy::SafeConstant,
        "empirical" => AlphaStrategy::Empirical,
        "oracle" => AlphaStrategy::OracleOptimal,
        v => {
            let a: f64 = v
                .parse()
                .map_err(|_| format!("expected safe, empirical, oracle or a number, got `{v}`"))?;
            if !a.is_finite() {
                return Err("step size must be finite".into());
            }
            AlphaStrategy::Fixed(a)
        }
    })
}

pub fn parse_signal_gen(s: &str) -> Result<SignalSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad number `{t}`"));
    match parts.as_slice() {
        ["normal"] => Ok(SignalSpec::Normal),
        ["constant", c] => Ok(SignalSpec::Constant(num(c)?)),
        ["smooth", k] | ["smooth", k, _] => {
            let modes = k.parse().map_err(|_| format!("bad mode count `{k}`"))?;
            let amplitude = if parts.len() == 3 { num(parts[2])? } else { 1.0 };
            Ok(SignalSpec::Smooth { modes, amplitude })
        }
        _ => Err(format!("unknown signal spec `{s}`")),
    }
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let values = if let Some((kind, rest)) = s.split_once(':') {
        let p: Vec<&str> = rest.split(':').collect();
        let [lo, hi, count] = p.as_slice() else {
            return Err(format!("expected {kind}:LO:HI:COUNT"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad number `{lo}`"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad number `{hi}`"))?;
        let count: usize = count.parse().map_err(|_| format!("bad count `{count}`"))?;
        if count == 0 {
            return Err("grid needs at least one point".into());
        }
        match kind {
            "log" if lo > 0.0 && hi > 0.0 => log_grid(lo, hi, count),
            "log" => return Err("log grid bounds must be positive".into()),
            "lin" if count == 1 => vec![lo],
            "lin" => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
            other => return Err(format!("unknown grid kind `{other}`")),
        }
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err("grid must be nonempty and finite".into());
    }
    Ok(Grid(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_specs() {
        assert_eq!(parse_gen("regular:1000:20"), Ok(GenSpec::Regular(1000, 20)));
        assert_eq!(parse_gen("cliques:2:20"), Ok(GenSpec::Cliques(2, 20)));
        assert!(parse_gen("ba:10").is_err());
        assert!(parse_gen("torus:3:3").is_err());
    }

    #[test]
    fn alpha_and_grids() {
        assert_eq!(parse_alpha("0.25"), Ok(AlphaStrategy::Fixed(0.25)));
        assert_eq!(parse_alpha("oracle"), Ok(AlphaStrategy::OracleOptimal));
        assert!(parse_alpha("big").is_err());
        assert_eq!(parse_grid("0.1,0.2").unwrap().0, vec![0.1, 0.2]);
        assert_eq!(parse_grid("lin:0:1:3").unwrap().0, vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("log:0.01:10:16").unwrap().0.len(), 16);
        assert!(parse_grid("log:0:1:3").is_err());
        assert_eq!(parse_signal_gen("smooth:3:2"), Ok(SignalSpec::Smooth { modes: 3, amplitude: 2.0 }));
    }
}
