use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use transiogram::empirical::{self, CurveLag, EmpiricalTransiogram};
use transiogram::fitting::{self, KernelFamily, KernelSpec, Neighborhood, NonparametricModel};
use transiogram::grfsim::{
    truncate, CorrelogramFamily, CorrelogramSpec, GrfSimulator, SimMethod, ThresholdSet,
};
use transiogram::models::{Family, ParametricModel};
use transiogram::shape::{self, TransitionRate};
use transiogram::validity::{self, SearchParams};
use transiogram::{CategoricalGrid, Error, LagVector};

use crate::manifest::{self, RunManifest};

/// Where one run sends its primary output and its manifest.
pub struct Sink {
    pub output: Option<PathBuf>,
}

impl Sink {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    /// Text that belongs beside the output: a sidecar file, or stderr when
    /// writing to stdout.
    fn side_text(&self, suffix: &str, text: &str) -> Result<Option<PathBuf>> {
        match &self.output {
            Some(p) => {
                let path = manifest::sidecar(p, suffix);
                std::fs::write(&path, text)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                Ok(Some(path))
            }
            None => {
                eprint!("{text}");
                Ok(None)
            }
        }
    }

    pub fn finish(&self, mut m: RunManifest) -> Result<()> {
        if let Some(p) = &self.output {
            m.outputs.insert(0, p.clone());
        }
        m.finish();
        let text = serde_json::to_string_pretty(&m)? + "\n";
        match &self.output {
            Some(p) => {
                let path = manifest::manifest_path(p);
                std::fs::write(&path, text)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            None => eprint!("{text}"),
        }
        Ok(())
    }
}

fn load_grid(path: &Path) -> Result<CategoricalGrid> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    CategoricalGrid::load(BufReader::new(f))
        .with_context(|| format!("cannot read grid {}", path.display()))
}

fn load_curve(path: &Path) -> Result<EmpiricalTransiogram> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    EmpiricalTransiogram::read_csv(BufReader::new(f))
        .with_context(|| format!("cannot read curve {}", path.display()))
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    /// Grid file.
    #[arg(long)]
    pub grid: PathBuf,
    /// Unit step (drow dcol); lags are its multiples 1..=maxlag.
    #[arg(long, num_args = 2, value_names = ["DROW", "DCOL"], allow_negative_numbers = true)]
    pub direction: Option<Vec<i64>>,
    #[arg(long, default_value_t = 10)]
    pub maxlag: usize,
    /// Omnidirectional bin edges in map units, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "direction")]
    pub omni: Option<Vec<f64>>,
    /// A single lag offset (drow dcol).
    #[arg(
        long,
        num_args = 2,
        value_names = ["DROW", "DCOL"],
        allow_negative_numbers = true,
        conflicts_with_all = ["direction", "omni"]
    )]
    pub lag: Option<Vec<i64>>,
}

pub fn scan(args: &ScanArgs, sink: &Sink, mut m: RunManifest) -> Result<()> {
    let grid = load_grid(&args.grid)?;
    let curve = if let Some(l) = &args.lag {
        let lag = LagVector::new(l[0], l[1], grid.cellsize());
        let samples = empirical::scan_lag(&grid, lag);
        EmpiricalTransiogram::new(grid.nclasses(), vec![CurveLag::Vector(lag)], vec![samples])?
    } else if let Some(edges) = &args.omni {
        empirical::omnidirectional_curve(&grid, edges)?
    } else if let Some(d) = &args.direction {
        empirical::directional_curve(&grid, (d[0], d[1]), args.maxlag)?
    } else {
        bail!(Error::InvalidArgument(
            "one of --direction, --omni or --lag is required".into()
        ));
    };
    let mut w = sink.writer()?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    m.inputs.push(args.grid.clone());
    m.schema = manifest::CURVE_SCHEMA;
    m.derive("nlags", curve.nlags());
    m.derive("nclasses", curve.nclasses());
    sink.finish(m)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborhoodArg {
    All,
    Bracketing,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Empirical curve CSV.
    #[arg(long)]
    pub curve: PathBuf,
    /// epanechnikov, gaussian, biweight or triangular.
    #[arg(long)]
    pub kernel: String,
    #[arg(long, conflicts_with = "lscv")]
    pub bandwidth: Option<f64>,
    /// Candidate bandwidths for least-squares cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub lscv: Option<Vec<f64>>,
    /// Output lags, comma separated. Defaults to the curve's own lags.
    #[arg(long, value_delimiter = ',', conflicts_with = "linspace")]
    pub at: Option<Vec<f64>>,
    /// Evenly spaced output lags: START STOP COUNT.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "COUNT"])]
    pub linspace: Option<Vec<f64>>,
    /// Weight samples by their pair counts.
    #[arg(long)]
    pub pair_weights: bool,
    #[arg(long, value_enum, default_value_t = NeighborhoodArg::All)]
    pub neighborhood: NeighborhoodArg,
}

fn output_lags(args: &FitArgs, model: &NonparametricModel) -> Result<Vec<f64>> {
    if let Some(at) = &args.at {
        return Ok(at.clone());
    }
    if let Some(l) = &args.linspace {
        let (a, b, n) = (l[0], l[1], l[2]);
        if !(n >= 1.0 && n.fract() == 0.0) {
            bail!(Error::InvalidArgument(format!("linspace count must be a positive integer, got {n}")));
        }
        let n = n as usize;
        if n == 1 {
            return Ok(vec![a]);
        }
        return Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect());
    }
    Ok(model.distances().to_vec())
}

pub fn fit(args: &FitArgs, sink: &Sink, mut m: RunManifest) -> Result<()> {
    let family: KernelFamily = args.kernel.parse()?;
    if let Some(r) = args.bandwidth {
        KernelSpec::new(family, r)?;
    }
    let curve = load_curve(&args.curve)?;
    let bandwidth = match (&args.lscv, args.bandwidth) {
        (Some(grid), _) => {
            let res = fitting::select_bandwidth_lscv(&curve, family, grid)?;
            m.derive("lscv_scores", &res.scores);
            res.bandwidth
        }
        (None, Some(r)) => r,
        (None, None) => bail!(Error::InvalidArgument(
            "either --bandwidth or --lscv is required".into()
        )),
    };
    let kernel = KernelSpec::new(family, bandwidth)?;
    let neighborhood = match args.neighborhood {
        NeighborhoodArg::All => Neighborhood::All,
        NeighborhoodArg::Bracketing => Neighborhood::Bracketing,
    };
    let model = NonparametricModel::new(&curve, kernel)?
        .with_pair_weights(args.pair_weights)
        .with_neighborhood(neighborhood);
    let lags = output_lags(args, &model)?;
    let mut w = sink.writer()?;
    fitting::write_fitted_csv(&model, &lags, &mut w)?;
    w.flush()?;
    m.inputs.push(args.curve.clone());
    m.schema = manifest::FITTED_SCHEMA;
    m.derive("bandwidth", bandwidth);
    sink.finish(m)
}

/// Model description accepted by `validate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    family: Family,
    range: f64,
    proportion: f64,
    #[serde(default = "one")]
    class: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// JSON model config: {"family": .., "range": .., "proportion": ..}.
    #[arg(long, conflicts_with_all = ["family", "range", "proportion"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub proportion: Option<f64>,
    /// Largest random configuration (points).
    #[arg(long, default_value_t = 8)]
    pub max_points: usize,
    /// Largest collinear lattice (points).
    #[arg(long, default_value_t = 10)]
    pub lattice_max_points: usize,
    #[arg(long, default_value_t = 1000)]
    pub random_configs: usize,
    /// Sampled sign vectors per configuration above 8 points.
    #[arg(long, default_value_t = 2000)]
    pub random_epsilons: usize,
}

fn model_from_args(args: &ValidateArgs) -> Result<ParametricModel> {
    let cfg = if let Some(path) = &args.model {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        serde_json::from_str::<ModelConfig>(&text)
            .map_err(|e| Error::InvalidArgument(format!("malformed model config: {e}")))?
    } else {
        match (&args.family, args.range, args.proportion) {
            (Some(f), Some(range), Some(proportion)) => ModelConfig {
                family: f.parse()?,
                range,
                proportion,
                class: 1,
            },
            _ => bail!(Error::InvalidArgument(
                "give --model or all of --family, --range and --proportion".into()
            )),
        }
    };
    let model = ParametricModel::new(cfg.family, cfg.range, cfg.proportion)?.with_class(cfg.class);
    model.validate()?;
    Ok(model)
}

pub fn validate(args: &ValidateArgs, sink: &Sink, mut m: RunManifest) -> Result<()> {
    let model = model_from_args(args)?;
    let params = SearchParams {
        max_points: args.max_points,
        lattice_max_points: args.lattice_max_points,
        random_configs: args.random_configs,
        random_epsilons: args.random_epsilons,
        seed: m.seed,
        ..SearchParams::default()
    };
    let report = validity::audit(&model, &params)?;
    let body = json!({
        "passed": report.passed(),
        "report": &report,
        "search": &params,
    });
    let mut w = sink.writer()?;
    serde_json::to_writer_pretty(&mut w, &body)?;
    writeln!(w)?;
    w.flush()?;
    drop(w);
    let table = report.table();
    match &sink.output {
        Some(_) => print!("{table}"),
        None => eprint!("{table}"),
    }
    if let Some(p) = &args.model {
        m.inputs.push(p.clone());
    }
    m.schema = manifest::REPORT_SCHEMA;
    m.derive("passed", report.passed());
    sink.finish(m)
}

#[derive(Debug, Args, Serialize)]
pub struct ShapeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub class: usize,
    /// Unit steps `drow,dcol`; repeat for several. Defaults to E, S, SE, SW.
    #[arg(long = "direction", value_parser = parse_step, allow_hyphen_values = true)]
    pub directions: Vec<(i64, i64)>,
    /// Lags used in the anchored slope fit.
    #[arg(long, default_value_t = 1)]
    pub nlags: usize,
    /// Count map-boundary edges in the raster perimeter.
    #[arg(long)]
    pub include_boundary: bool,
}

fn parse_step(s: &str) -> std::result::Result<(i64, i64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `drow,dcol`, got `{s}`"))?;
    let dr = a.trim().parse().map_err(|_| format!("bad drow in `{s}`"))?;
    let dc = b.trim().parse().map_err(|_| format!("bad dcol in `{s}`"))?;
    if (dr, dc) == (0, 0) {
        return Err("direction step must be nonzero".into());
    }
    Ok((dr, dc))
}

const DEFAULT_STEPS: [(i64, i64); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

pub fn shape(args: &ShapeArgs, sink: &Sink, mut m: RunManifest) -> Result<()> {
    let grid = load_grid(&args.grid)?;
    let counts = grid.class_counts();
    if args.class == 0 || args.class > grid.nclasses() {
        bail!(Error::ClassOutOfRange {
            class: args.class,
            nclasses: grid.nclasses(),
        });
    }
    if counts[args.class - 1] == 0 {
        bail!(Error::AbsentClass(args.class));
    }
    let steps: Vec<(i64, i64)> = if args.directions.is_empty() {
        DEFAULT_STEPS.to_vec()
    } else {
        args.directions.clone()
    };
    let mut rates: Vec<((i64, i64), TransitionRate)> = Vec::with_capacity(steps.len());
    for &step in &steps {
        let curve = empirical::directional_curve(&grid, step, args.nlags)?;
        rates.push((step, shape::transition_rate(&curve, args.class, args.nlags)?));
    }
    let only: Vec<TransitionRate> = rates.iter().map(|r| r.1).collect();
    let metric = if only.len() == 1 {
        shape::psi_isotropic(&only[0])?
    } else {
        shape::psi_directional(&only)?
    };
    let oracle = shape::raster_perimeter_area(&grid, args.class, args.include_boundary)?;
    let area = grid.area();

    let mut w = csv::Writer::from_writer(sink.writer()?);
    w.write_record([
        "record", "class", "drow", "dcol", "direction", "rate", "stderr", "psi", "psi_unit_area",
    ])?;
    let blank = String::new;
    for ((dr, dc), r) in &rates {
        w.write_record([
            "rate".to_string(),
            r.class.to_string(),
            dr.to_string(),
            dc.to_string(),
            r.direction.map(|d| d.to_string()).unwrap_or_default(),
            r.rate.to_string(),
            r.stderr.to_string(),
            blank(),
            blank(),
        ])?;
    }
    let method = serde_json::to_value(metric.method)?;
    for (label, psi) in [
        (method.as_str().unwrap_or("psi"), metric.psi),
        ("raster-oracle", oracle.metric.psi),
    ] {
        w.write_record([
            label.to_string(),
            args.class.to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            psi.to_string(),
            (psi * area.sqrt()).to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    m.inputs.push(args.grid.clone());
    m.schema = manifest::SHAPE_SCHEMA;
    m.derive("psi", metric.psi);
    m.derive("oracle_psi", oracle.metric.psi);
    m.derive("perimeter", oracle.perimeter);
    m.derive("area", oracle.area);
    sink.finish(m)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Auto,
    Dense,
    Circulant,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub nrows: usize,
    #[arg(long)]
    pub ncols: usize,
    #[arg(long, default_value_t = 1.0)]
    pub cellsize: f64,
    /// exponential, gaussian or spherical.
    #[arg(long)]
    pub correlogram: String,
    /// Correlogram range in map units.
    #[arg(long)]
    pub range: f64,
    /// Increasing cut-offs on the latent field.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "proportions")]
    pub thresholds: Option<Vec<f64>>,
    /// Target class proportions (sum to 1).
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    /// Place cut-offs at the realised field's quantiles instead of the
    /// Gaussian ones, so proportions are met up to rounding.
    #[arg(long, requires = "proportions")]
    pub exact_proportions: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

pub fn simulate(args: &SimulateArgs, sink: &Sink, mut m: RunManifest) -> Result<()> {
    let family: CorrelogramFamily = args.correlogram.parse()?;
    let spec = CorrelogramSpec::new(family, args.range)?;
    let method = match args.method {
        MethodArg::Auto => SimMethod::Auto,
        MethodArg::Dense => SimMethod::Dense,
        MethodArg::Circulant => SimMethod::Circulant,
    };
    let sim = GrfSimulator::new(args.nrows, args.ncols, args.cellsize, spec, method)?;
    let field = sim.sample(m.seed);
    let thresholds = match (&args.thresholds, &args.proportions) {
        (Some(z), _) => ThresholdSet::new(z.clone())?,
        (None, Some(p)) if args.exact_proportions => ThresholdSet::from_field_quantiles(&field, p)?,
        (None, Some(p)) => ThresholdSet::from_proportions(p)?,
        (None, None) => bail!(Error::InvalidArgument(
            "either --thresholds or --proportions is required".into()
        )),
    };
    let grid = truncate(&field, &thresholds)?;
    let mut w = sink.writer()?;
    grid.save(&mut w)?;
    w.flush()?;
    drop(w);

    let used = serde_json::to_value(sim.method())?;
    let used = used.as_str().unwrap_or("");
    let mut meta = String::new();
    meta.push_str(&format!("nrows = {}\nncols = {}\n", args.nrows, args.ncols));
    meta.push_str(&format!("cellsize = {:?}\n", args.cellsize));
    meta.push_str(&format!("correlogram = {}\nrange = {:?}\n", family, args.range));
    meta.push_str(&format!("method = {used}\n"));
    if let Some((er, ec)) = sim.embedding() {
        meta.push_str(&format!("embedding = {er}x{ec}\n"));
    }
    meta.push_str(&format!("seed = {}\n", m.seed));
    meta.push_str(&format!("thresholds = {}\n", join(thresholds.cutoffs())));
    meta.push_str(&format!("target_proportions = {}\n", join(&thresholds.proportions())));
    meta.push_str(&format!("realised_proportions = {}\n", join(&grid.proportions())));
    if let Some(p) = sink.side_text("meta", &meta)? {
        m.outputs.push(p);
    }
    m.schema = manifest::GRID_SCHEMA;
    m.derive("method", used);
    m.derive("thresholds", thresholds.cutoffs());
    m.derive("realised_proportions", grid.proportions());
    sink.finish(m)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}
