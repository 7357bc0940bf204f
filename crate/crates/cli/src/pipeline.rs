//! The `run`, `sweep` and `eval` commands.
//!
//! Stages of `run`: draw the experiment design, solve one OPF per design
//! point, fit one surrogate per method and response, evaluate them on an
//! independent validation set (with OPF truth when Monte Carlo is enabled),
//! then summarize. Each stage writes its artifacts before the next starts,
//! so a failure leaves everything produced so far plus a `FAILED` marker.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use asse_core::analytics::{compare_methods, summarize, validation_error, Method, ResponseReport, SurrogateReport};
use asse_core::grid::{apply_uncertainty, solve_ac_opf, InputRole, OpfSolution, PowerSystemCase, ResModel};
use asse_core::sse::{fit_asse, fit_global_pce, SseTree};
use asse_core::uncertainty::{sample_qmc, to_physical, RandomVector, SampleMatrix, Space};
use log::info;
use rayon::prelude::*;

use crate::config::{parse_responses, ExperimentConfig, Response};
use crate::document::SurrogateDocument;

pub const FAILED_MARKER: &str = "FAILED";
pub const MANIFEST: &str = "manifest.toml";
pub const BASELINE_ABSENT: &str = "baseline_absent";

/// A failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub methods: Option<Vec<Method>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<PathBuf> {
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .context("no output directory: pass --out or set output_dir")
    }
}

struct Recorder {
    out: PathBuf,
    command: &'static str,
    start: Instant,
    stages: Vec<(&'static str, f64)>,
    counts: Vec<(&'static str, usize)>,
}

impl Recorder {
    fn new(out: &Path, command: &'static str) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        for stale in [FAILED_MARKER, MANIFEST] {
            let p = out.join(stale);
            if p.exists() {
                fs::remove_file(&p)?;
            }
        }
        Ok(Self {
            out: out.to_path_buf(),
            command,
            start: Instant::now(),
            stages: Vec::new(),
            counts: Vec::new(),
        })
    }

    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T, StageError> {
        info!("stage {name}");
        let t = Instant::now();
        let result = f();
        self.stages.push((name, t.elapsed().as_secs_f64()));
        result.map_err(|source| {
            let err = StageError { stage: name, source };
            let _ = fs::write(self.out.join(FAILED_MARKER), format!("stage = \"{name}\"\nerror = {:?}\n", format!("{:#}", err.source)));
            let _ = self.write_manifest("failed");
            err
        })
    }

    fn count(&mut self, name: &'static str, value: usize) {
        self.counts.push((name, value));
    }

    fn write_manifest(&self, status: &str) -> Result<()> {
        let mut s = format!(
            "command = \"{}\"\nstatus = \"{status}\"\ntotal_s = {}\n\n[stages]\n",
            self.command,
            self.start.elapsed().as_secs_f64()
        );
        for (name, secs) in &self.stages {
            s += &format!("{name} = {secs}\n");
        }
        s += "\n[counts]\n";
        for (name, v) in &self.counts {
            s += &format!("{name} = {v}\n");
        }
        fs::write(self.out.join(MANIFEST), s)?;
        Ok(())
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One OPF per row of `x`, solved in parallel and returned in row order.
pub fn solve_batch(
    case: &PowerSystemCase,
    res: &ResModel,
    roles: &[InputRole],
    x: &SampleMatrix,
) -> Result<(Vec<OpfSolution>, usize)> {
    let solved: Vec<Result<(OpfSolution, usize)>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let (modified, diag) = apply_uncertainty(case, res, roles, x.row(i))?;
            Ok((solve_ac_opf(&modified)?, diag.clamped_loads))
        })
        .collect();
    let mut out = Vec::with_capacity(solved.len());
    let mut clamped = 0;
    for (i, r) in solved.into_iter().enumerate() {
        let (sol, c) = r.with_context(|| format!("sample {}", i + 1))?;
        out.push(sol);
        clamped += c;
    }
    Ok((out, clamped))
}

pub fn extract(r: Response, s: &OpfSolution) -> f64 {
    match r {
        Response::Pg(k) => s.pg[k],
        Response::Qg(k) => s.qg[k],
        Response::Vm(b) => s.vm[b],
        Response::Va(b) => s.va[b],
        Response::Objective => s.objective,
    }
}

fn status_str(s: &OpfSolution) -> &'static str {
    if s.converged() {
        "converged"
    } else {
        "infeasible_or_max_iter"
    }
}

fn write_design(path: &Path, case: &PowerSystemCase, x: &SampleMatrix, sols: &[OpfSolution]) -> Result<()> {
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=x.dim()).map(|j| format!("zeta_{j}")));
    header.push("status".into());
    let ng = case.generators.len();
    header.extend((1..=ng).map(|k| format!("Pg_{k}")));
    header.extend((1..=ng).map(|k| format!("Qg_{k}")));
    header.extend(case.buses.iter().map(|b| format!("V_{}", b.id)));
    header.extend(case.buses.iter().map(|b| format!("theta_{}", b.id)));
    header.push("objective".into());
    let rows: Vec<Vec<String>> = sols
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(x.row(i).iter().map(|&v| fmt_f64(v)));
            row.push(status_str(s).into());
            for v in s.pg.iter().chain(&s.qg).chain(&s.vm).chain(&s.va) {
                row.push(fmt_f64(*v));
            }
            row.push(fmt_f64(s.objective));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn fit(method: Method, u: &SampleMatrix, z: &[f64], cfg: &ExperimentConfig, rv: &RandomVector) -> Result<SseTree> {
    let tree = match method {
        Method::Asse => fit_asse(u, z, &cfg.sse_config())?,
        Method::Spce => fit_global_pce(u, z, &cfg.fit_options())?,
        Method::MonteCarlo => bail!("Monte Carlo has no surrogate"),
    };
    Ok(tree.with_random_vector(rv.clone())?)
}

fn surrogate_methods(methods: &[Method]) -> Vec<Method> {
    [Method::Asse, Method::Spce]
        .into_iter()
        .filter(|m| methods.contains(m))
        .collect()
}

/// Validation truth restricted to converged samples.
struct Truth {
    keep: Vec<usize>,
    values: Vec<Vec<f64>>,
}

fn truth(sols: &[OpfSolution], responses: &[(String, Response)]) -> Truth {
    let keep: Vec<usize> = (0..sols.len()).filter(|&i| sols[i].converged()).collect();
    let values = responses
        .iter()
        .map(|(_, r)| keep.iter().map(|&i| extract(*r, &sols[i])).collect())
        .collect();
    Truth { keep, values }
}

fn e_val_on(truth: &Truth, k: usize, pred: &[f64]) -> Result<f64> {
    let p: Vec<f64> = truth.keep.iter().map(|&i| pred[i]).collect();
    Ok(validation_error(&truth.values[k], &p)?)
}

struct Prepared {
    case: PowerSystemCase,
    responses: Vec<(String, Response)>,
    rv: RandomVector,
    roles: Vec<InputRole>,
}

fn prepare(cfg: &ExperimentConfig, responses: &[String]) -> Result<Prepared> {
    let (case, _) = cfg.validate()?;
    let responses = parse_responses(responses, &case)?;
    Ok(Prepared {
        rv: cfg.random_vector()?,
        roles: cfg.roles(),
        case,
        responses,
    })
}

/// Runs the full experiment and writes its artifacts into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    with_pool(cfg.workers, || run_inner(cfg, out))?
}

fn run_inner(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut rec = Recorder::new(out, "run")?;
    let p = rec.stage("config", || prepare(cfg, &cfg.responses))?;
    let dim = p.rv.dim();
    let methods = surrogate_methods(&cfg.methods);
    let with_mc = cfg.methods.contains(&Method::MonteCarlo);

    let (u, x) = rec.stage("design", || {
        let u = sample_qmc(cfg.n_ed, dim, cfg.qmc_skip)?;
        let x = to_physical(&u, &p.rv)?;
        Ok((u, x))
    })?;

    let (design, clamped) = rec.stage("opf_batch", || {
        let (sols, clamped) = solve_batch(&p.case, &cfg.res, &p.roles, &x)?;
        write_design(&out.join("design.csv"), &p.case, &x, &sols)?;
        Ok((sols, clamped))
    })?;
    let kept: Vec<usize> = (0..design.len()).filter(|&i| design[i].converged()).collect();
    rec.count("opf_solves_design", design.len());
    rec.count("design_excluded", design.len() - kept.len());
    rec.count("design_clamped_loads", clamped);
    info!("{} of {} design samples converged", kept.len(), design.len());

    let mut fit_times = vec![0.0; methods.len()];
    let trees = rec.stage("fit", || {
        if kept.len() < 2 && !methods.is_empty() {
            bail!("only {} design samples converged", kept.len());
        }
        let u_kept = u.select(&kept);
        let dir = out.join("surrogates");
        fs::create_dir_all(&dir)?;
        let mut trees = Vec::new();
        for (mi, &m) in methods.iter().enumerate() {
            let t = Instant::now();
            let mut per_response = Vec::new();
            for (name, r) in &p.responses {
                let z: Vec<f64> = kept.iter().map(|&i| extract(*r, &design[i])).collect();
                let tree = fit(m, &u_kept, &z, cfg, &p.rv).with_context(|| format!("{m} {name}"))?;
                let names = cfg.inputs.iter().map(|i| i.name.clone()).collect();
                SurrogateDocument::new(m, name, names, cfg.n_ed, tree.clone())
                    .write(&dir.join(format!("{m}_{name}.json")))?;
                per_response.push(tree);
            }
            fit_times[mi] = t.elapsed().as_secs_f64();
            trees.push(per_response);
        }
        Ok(trees)
    })?;

    let mut mc_time = 0.0;
    let mut eval_times = vec![0.0; methods.len()];
    let (x_val, mc, predictions) = rec.stage("validation", || {
        let u_val = sample_qmc(cfg.n_val, dim, cfg.validation_skip)?;
        let x_val = to_physical(&u_val, &p.rv)?;
        let mc = if with_mc {
            let t = Instant::now();
            let (sols, _) = solve_batch(&p.case, &cfg.res, &p.roles, &x_val)?;
            mc_time = t.elapsed().as_secs_f64();
            Some(sols)
        } else {
            None
        };
        let mut predictions = Vec::new();
        for (mi, per_response) in trees.iter().enumerate() {
            let t = Instant::now();
            let preds = per_response
                .iter()
                .map(|tree| Ok(tree.evaluate(&u_val)?.0))
                .collect::<Result<Vec<_>>>()?;
            eval_times[mi] = t.elapsed().as_secs_f64();
            predictions.push(preds);
        }
        write_validation(&out.join("validation.csv"), &x_val, mc.as_deref(), &p.responses, &methods, &predictions)?;
        Ok((x_val, mc, predictions))
    })?;
    if let Some(sols) = &mc {
        rec.count("opf_solves_validation", sols.len());
        rec.count("validation_excluded", sols.iter().filter(|s| !s.converged()).count());
    }

    rec.stage("report", || {
        let truth = mc.as_ref().map(|s| truth(s, &p.responses));
        let mut reports = Vec::new();
        if let Some(t) = &truth {
            let responses = p
                .responses
                .iter()
                .enumerate()
                .map(|(k, (name, _))| {
                    Ok(ResponseReport {
                        response: name.clone(),
                        summary: summarize(&t.values[k], &cfg.quantiles)?,
                        e_val: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            reports.push(SurrogateReport {
                method: Method::MonteCarlo,
                n_ed: None,
                n_val: t.keep.len(),
                wall_time_s: mc_time,
                responses,
            });
        }
        for (mi, &m) in methods.iter().enumerate() {
            let responses = p
                .responses
                .iter()
                .enumerate()
                .map(|(k, (name, _))| {
                    let pred = &predictions[mi][k];
                    Ok(ResponseReport {
                        response: name.clone(),
                        summary: summarize(pred, &cfg.quantiles)?,
                        e_val: truth.as_ref().map(|t| e_val_on(t, k, pred)).transpose()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            reports.push(SurrogateReport {
                method: m,
                n_ed: Some(kept.len()),
                n_val: x_val.nrows(),
                wall_time_s: fit_times[mi] + eval_times[mi],
                responses,
            });
        }
        write_reports(out, cfg, &reports, with_mc)
    })?;
    rec.write_manifest("ok")?;
    Ok(())
}

fn write_validation(
    path: &Path,
    x_val: &SampleMatrix,
    mc: Option<&[OpfSolution]>,
    responses: &[(String, Response)],
    methods: &[Method],
    predictions: &[Vec<Vec<f64>>],
) -> Result<()> {
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=x_val.dim()).map(|j| format!("zeta_{j}")));
    if mc.is_some() {
        header.push("status".into());
        header.extend(responses.iter().map(|(n, _)| format!("MC_{n}")));
    }
    for m in methods {
        header.extend(responses.iter().map(|(n, _)| format!("{m}_{n}")));
    }
    let rows: Vec<Vec<String>> = (0..x_val.nrows())
        .map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(x_val.row(i).iter().map(|&v| fmt_f64(v)));
            if let Some(sols) = mc {
                row.push(status_str(&sols[i]).into());
                row.extend(responses.iter().map(|(_, r)| fmt_f64(extract(*r, &sols[i]))));
            }
            for per_method in predictions {
                row.extend(per_method.iter().map(|pred| fmt_f64(pred[i])));
            }
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn write_reports(out: &Path, cfg: &ExperimentConfig, reports: &[SurrogateReport], with_mc: bool) -> Result<()> {
    let qcols: Vec<String> = cfg.quantiles.iter().map(|p| format!("q_{p}")).collect();

    let mut header: Vec<String> = ["method", "response", "n_ed", "n_val", "mean", "variance"]
        .map(String::from)
        .to_vec();
    header.extend(qcols.iter().cloned());
    header.push("e_val".into());
    if !cfg.deterministic {
        header.push("wall_time_s".into());
    }
    let mut rows = Vec::new();
    let (mut cdf_rows, mut pdf_rows) = (Vec::new(), Vec::new());
    for rep in reports {
        for r in &rep.responses {
            let s = &r.summary;
            let mut row = vec![
                rep.method.to_string(),
                r.response.clone(),
                rep.n_ed.map(|n| n.to_string()).unwrap_or_default(),
                rep.n_val.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.variance),
            ];
            row.extend(s.quantiles.iter().map(|(_, q)| fmt_f64(*q)));
            row.push(match (rep.method, r.e_val) {
                (Method::MonteCarlo, _) => "reference".into(),
                (_, Some(e)) => fmt_f64(e),
                (_, None) => BASELINE_ABSENT.into(),
            });
            if !cfg.deterministic {
                row.push(fmt_f64(rep.wall_time_s));
            }
            rows.push(row);
            for (x, f) in &s.cdf {
                cdf_rows.push(vec![rep.method.to_string(), r.response.clone(), fmt_f64(*x), fmt_f64(*f)]);
            }
            for (w, d) in s.pdf.edges.windows(2).zip(&s.pdf.density) {
                pdf_rows.push(vec![
                    rep.method.to_string(),
                    r.response.clone(),
                    fmt_f64(w[0]),
                    fmt_f64(w[1]),
                    fmt_f64(*d),
                ]);
            }
        }
    }
    write_csv(&out.join("summary.csv"), &header, &rows)?;
    write_csv(&out.join("cdf.csv"), &["method", "response", "x", "cdf"].map(String::from), &cdf_rows)?;
    write_csv(
        &out.join("pdf.csv"),
        &["method", "response", "bin_lower", "bin_upper", "density"].map(String::from),
        &pdf_rows,
    )?;

    if with_mc {
        let baseline = reports.iter().find(|r| r.method == Method::MonteCarlo);
        let table = compare_methods(reports, baseline)?;
        let mut header: Vec<String> = ["method", "response", "mean", "e_mean_pct"].map(String::from).to_vec();
        for q in &qcols {
            header.push(q.clone());
            header.push(format!("e_{q}_pct"));
        }
        let rows: Vec<Vec<String>> = table
            .iter()
            .map(|c| {
                let mut row = vec![c.method.to_string(), c.response.clone(), fmt_f64(c.mean), fmt_f64(c.e_mean_pct)];
                for (_, q, e) in &c.quantiles {
                    row.push(fmt_f64(*q));
                    row.push(fmt_f64(*e));
                }
                row
            })
            .collect();
        write_csv(&out.join("comparison.csv"), &header, &rows)?;
    }
    Ok(())
}

/// Fits every method at every `N_ED` of the sweep against one shared
/// validation set and writes `sweep.csv`.
///
/// Designs are prefixes of one Sobol' sequence, so the OPF batch is solved
/// once for the largest size.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    with_pool(cfg.workers, || sweep_inner(cfg, out))?
}

fn sweep_inner(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut rec = Recorder::new(out, "sweep")?;
    let (p, sizes) = rec.stage("config", || {
        let p = prepare(cfg, &cfg.sweep_responses())?;
        Ok((p, cfg.sweep_values()?))
    })?;
    let dim = p.rv.dim();
    let methods = surrogate_methods(&cfg.methods);
    let max_ed = sizes.iter().copied().max().unwrap_or(0);

    let (u, x) = rec.stage("design", || {
        let u = sample_qmc(max_ed, dim, cfg.qmc_skip)?;
        let x = to_physical(&u, &p.rv)?;
        Ok((u, x))
    })?;
    let design = rec.stage("opf_batch", || {
        let (sols, _) = solve_batch(&p.case, &cfg.res, &p.roles, &x)?;
        write_design(&out.join("design.csv"), &p.case, &x, &sols)?;
        Ok(sols)
    })?;
    rec.count("opf_solves_design", design.len());

    let (u_val, truth) = rec.stage("validation", || {
        let u_val = sample_qmc(cfg.n_val, dim, cfg.validation_skip)?;
        let x_val = to_physical(&u_val, &p.rv)?;
        let (sols, _) = solve_batch(&p.case, &cfg.res, &p.roles, &x_val)?;
        Ok((u_val, truth(&sols, &p.responses)))
    })?;
    rec.count("opf_solves_validation", cfg.n_val);
    rec.count("validation_excluded", cfg.n_val - truth.keep.len());

    let rows = rec.stage("fit", || {
        let jobs: Vec<(Method, usize)> = methods
            .iter()
            .flat_map(|&m| sizes.iter().map(move |&n| (m, n)))
            .collect();
        jobs.par_iter()
            .map(|&(m, n)| {
                let kept: Vec<usize> = (0..n).filter(|&i| design[i].converged()).collect();
                let u_kept = u.select(&kept);
                let mut row = vec![m.to_string(), n.to_string()];
                for (k, (name, r)) in p.responses.iter().enumerate() {
                    let z: Vec<f64> = kept.iter().map(|&i| extract(*r, &design[i])).collect();
                    let tree = fit(m, &u_kept, &z, cfg, &p.rv).with_context(|| format!("{m} {name} at N_ED {n}"))?;
                    let pred = tree.evaluate(&u_val)?.0;
                    row.push(fmt_f64(e_val_on(&truth, k, &pred)?));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    rec.stage("report", || {
        let mut header: Vec<String> = vec!["method".into(), "n_ed".into()];
        header.extend(p.responses.iter().map(|(n, _)| format!("e_val_{n}")));
        write_csv(&out.join("sweep.csv"), &header, &rows)
    })?;
    rec.write_manifest("ok")?;
    Ok(())
}

/// Reads a points CSV with one header row and one column per input. An
/// empty file yields no rows.
pub fn read_points(path: &Path, dim: usize, space: Space) -> Result<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header_len = reader.headers()?.len();
    if header_len != 0 && header_len != dim {
        bail!("line 1: header has {header_len} columns, surrogate expects {dim}");
    }
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.context("malformed points file")?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim {
            bail!("line {line}: expected {dim} values, found {}", record.len());
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| anyhow::anyhow!("line {line}: `{field}` is not a number"))?;
            if !v.is_finite() {
                bail!("line {line}: `{field}` is not finite");
            }
            data.push(v);
        }
    }
    Ok(SampleMatrix::new(dim, data, space)?)
}

/// Evaluates a stored surrogate on a points file. Writes `row,<response>`
/// CSV to `out`, or to stdout when `out` is `None`.
pub fn cmd_eval(surrogate: &Path, points: &Path, space: Space, out: Option<&Path>) -> Result<usize> {
    let doc = SurrogateDocument::read(surrogate)?;
    let pts = read_points(points, doc.tree.dim, space)?;
    let values = if pts.nrows() == 0 {
        Vec::new()
    } else {
        let (v, diag) = doc.tree.evaluate(&pts)?;
        if diag.clamped > 0 {
            log::warn!("{} coordinates outside the unit cube were clamped", diag.clamped);
        }
        v
    };
    let mut w = match out {
        Some(path) => csv::Writer::from_writer(Box::new(fs::File::create(path)?) as Box<dyn std::io::Write>),
        None => csv::Writer::from_writer(Box::new(std::io::stdout()) as Box<dyn std::io::Write>),
    };
    w.write_record(["row", doc.response.as_str()])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(values.len())
}
