//! Deterministic experiment runs: load the model and run files, execute one
//! experiment, write its tables and a manifest into the output directory.
//!
//! Every table row and JSON result carries the run id, a digest of the
//! model file, run file, seed, experiment and tool version. The thread count
//! is not part of it: results do not depend on it.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Experiment, RunConfig};
use super::model_spec::ModelSpec;
use super::output::{fmt_float, sha256_hex, to_json_bytes, write_bytes, Table};
use crate::error::{Error, Result};
use crate::experiments::{
    clustering_sweep, commutator_profile, envelope_is_monotone, fit_lightcone, m_recursion_check, ClusteringInputs,
    LightconeTable,
};
use crate::lattice::Region;
use crate::lindblad::{Picture, DENSE_MAX};
use crate::models::Model;
use crate::operator::{random_matrix, vec_matrix, SuperKet};
use crate::propagate::{contraction_check, dense_apply, krylov_apply, state_check};
use crate::rng::{cell_id, cell_rng};
use crate::spectral::{
    conditioning_estimate, convergence_bound_check, sparse_gap, spectral_gap, spectral_report, stationary_residual,
    stationary_state, SparseGapOptions,
};

pub const TOOL: &str = "simulate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub experiment: Experiment,
    pub model: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the seed in the run file.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    pub explanation: &'static str,
}

impl ErrorRecord {
    pub fn new(e: &Error) -> Self {
        Self {
            error: e.kind(),
            message: e.to_string(),
            exit_code: e.exit_code(),
            explanation: explain(e),
        }
    }
}

fn explain(e: &Error) -> &'static str {
    match e {
        Error::NonUniqueFixedPoint { .. } => {
            "the generator has more than one stationary state (for example pure dephasing fixes every diagonal \
             state), so the stationary state, spectral gap and relaxation time are undefined"
        }
        Error::GapBelowTolerance { .. } => "no eigenvalue has a negative real part beyond tolerance: the dynamics does not relax",
        Error::DefectivePencil { .. } => "the eigenvector matrix is numerically singular, so the conditioning is unbounded",
        Error::Parse { .. } | Error::Validation { .. } => "the model or run file is malformed; fix the named field",
        Error::Io(_) => "an input file could not be read or an output file could not be written",
        Error::ConvergenceFailure { .. } | Error::NoConvergence { .. } => {
            "an iterative method did not reach its tolerance; try a smaller system or a different grid"
        }
        Error::InsufficientData { .. } | Error::DegenerateFit(_) => {
            "the table does not support a light-cone or decay fit; widen the time grid or placements"
        }
        Error::InvariantFailed(_) | Error::BoundViolated { .. } | Error::ContractionViolated { .. } => {
            "a numerical invariant failed; see the result files for the failing quantity"
        }
        Error::FactorizationViolated { .. } => "expectations did not factorize under the decoupled generator",
        _ => "the computation rejected its inputs",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub seed: u64,
    pub threads: usize,
    pub model: String,
    pub model_name: String,
    pub model_sha256: String,
    pub config_sha256: String,
    pub run_id: String,
    pub outputs: Vec<OutputRecord>,
    pub status: &'static str,
    pub error: Option<ErrorRecord>,
    pub wall_time_seconds: f64,
}

struct Ctx {
    spec: ModelSpec,
    cfg: RunConfig,
    seed: u64,
    run_id: String,
    out: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(format!("{}{name}", self.cfg.output.prefix))
    }

    fn write_table(&mut self, name: &str, table: &Table) -> Result<()> {
        let mut tagged = table.clone();
        tagged.add_column("run", &self.run_id);
        let bytes = tagged.to_bytes()?;
        write_bytes(&self.path(name), &bytes)?;
        self.outputs.push(OutputRecord {
            file: format!("{}{name}", self.cfg.output.prefix),
            sha256: sha256_hex(&bytes),
            rows: Some(table.len()),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        if let Value::Object(map) = &mut v {
            map.insert("run".into(), Value::String(self.run_id.clone()));
        }
        let bytes = to_json_bytes(&v)?;
        write_bytes(&self.path(name), &bytes)?;
        self.outputs.push(OutputRecord {
            file: format!("{}{name}", self.cfg.output.prefix),
            sha256: sha256_hex(&bytes),
            rows: None,
        });
        Ok(())
    }

    fn model(&self) -> Result<Model> {
        self.spec.instantiate()
    }

    /// The model on a chain of `n` sites (grids are used as they are).
    fn resized(&self, n: usize) -> Result<Model> {
        match self.spec.lattice {
            super::model_spec::LatticeSpec::Chain { .. } => self.spec.with_chain_length(n)?.instantiate(),
            _ => self.spec.instantiate(),
        }
    }
}

/// Run one experiment. On failure `error.json` and a manifest with status
/// `failed` are still written when the output directory is usable.
pub fn run(opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;

    let model_bytes = std::fs::read(&opts.model);
    let config_bytes = std::fs::read(&opts.config);
    let mut manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        experiment: opts.experiment,
        seed: opts.seed.unwrap_or(0),
        threads,
        model: opts.model.display().to_string(),
        model_name: String::new(),
        model_sha256: model_bytes.as_ref().map(|b| sha256_hex(b)).unwrap_or_default(),
        config_sha256: config_bytes.as_ref().map(|b| sha256_hex(b)).unwrap_or_default(),
        run_id: String::new(),
        outputs: Vec::new(),
        status: "ok",
        error: None,
        wall_time_seconds: 0.0,
    };

    let result = (|| -> Result<Vec<OutputRecord>> {
        let model_bytes = model_bytes.map_err(Error::Io)?;
        let config_bytes = config_bytes.map_err(Error::Io)?;
        let text = |b: Vec<u8>| String::from_utf8(b).map_err(|e| Error::Io(std::io::Error::other(e)));
        let mut spec = super::model_spec::parse_model(&text(model_bytes)?)?;
        if spec.name.is_empty() {
            spec.name = opts.model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        let cfg = super::config::parse_config(&text(config_bytes)?)?;
        if let Some(e) = cfg.experiment.filter(|&e| e != opts.experiment) {
            return Err(Error::Validation {
                field: "experiment".into(),
                line: None,
                reason: format!("run file is for `{e}`, command is `{}`", opts.experiment),
            });
        }
        let spec = match cfg.sites {
            Some(n) => spec.with_chain_length(n)?,
            None => spec,
        };
        let seed = opts.seed.unwrap_or(cfg.seed);
        manifest.seed = seed;
        manifest.model_name = spec.name.clone();
        manifest.run_id = sha256_hex(
            format!(
                "{}\n{}\n{seed}\n{}\n{VERSION}",
                manifest.model_sha256, manifest.config_sha256, opts.experiment
            )
            .as_bytes(),
        )[..16]
            .to_string();
        std::fs::create_dir_all(&opts.out)?;
        let mut ctx = Ctx {
            spec,
            cfg,
            seed,
            run_id: manifest.run_id.clone(),
            out: opts.out.clone(),
            outputs: Vec::new(),
        };
        let outcome = pool.install(|| match opts.experiment {
            Experiment::Validate => run_validate(&mut ctx),
            Experiment::Lightcone => run_lightcone(&mut ctx),
            Experiment::Spectrum => run_spectrum(&mut ctx),
            Experiment::Clustering => run_clustering(&mut ctx),
            Experiment::Mvalue => run_mvalue(&mut ctx),
        });
        manifest.outputs = std::mem::take(&mut ctx.outputs);
        outcome.map(|_| manifest.outputs.clone())
    })();

    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(outputs) => {
            manifest.outputs = outputs;
            write_bytes(&opts.out.join("manifest.json"), &to_json_bytes(&manifest)?)?;
            Ok(manifest)
        }
        Err(e) => {
            log::debug!("run failed: {e:?}");
            let record = ErrorRecord::new(&e);
            if std::fs::create_dir_all(&opts.out).is_ok() {
                let _ = write_bytes(&opts.out.join("error.json"), &to_json_bytes(&record).unwrap_or_default());
                manifest.status = "failed";
                manifest.error = Some(record);
                let _ = write_bytes(&opts.out.join("manifest.json"), &to_json_bytes(&manifest).unwrap_or_default());
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn run_validate(ctx: &mut Ctx) -> Result<()> {
    let tol = ctx.cfg.tolerances.clone();
    let v = ctx.cfg.validate.clone();
    let model = ctx.model()?;
    let mut checks = Vec::new();
    checks.push(check("lattice_metric", model.lattice.check_metric().map_or(1.0, |_| 0.0), 0.0));
    checks.push(check(
        "unitality",
        model.generator(Picture::Heisenberg)?.unitality_residual(),
        tol.unitality,
    ));

    let small = ctx.resized(v.sites.unwrap_or(model.len().min(4)))?;
    let heis = small.generator(Picture::Heisenberg)?;
    let schr = small.generator(Picture::Schroedinger)?;
    let states = state_check(&schr, v.samples, &v.times, ctx.seed)?;
    checks.push(check("trace_preservation", states.max_trace_error, tol.trace));
    checks.push(check("hermiticity", states.max_hermiticity_error, tol.hermiticity));
    checks.push(check("positivity", (-states.min_eigenvalue).max(0.0), tol.positivity));

    let ratio = match contraction_check(&heis, v.contraction_samples, &v.contraction_times, ctx.seed) {
        Ok(r) => r.max_ratio,
        Err(Error::ContractionViolated { ratio, .. }) => ratio,
        Err(e) => return Err(e),
    };
    checks.push(check("norm_contraction", ratio - 1.0, 1e-8));

    if heis.dim() <= DENSE_MAX {
        let mut worst = 0.0f64;
        for s in 0..v.krylov_samples {
            let mut rng = cell_rng(ctx.seed, cell_id(1, s as u64));
            let m = random_matrix(&mut rng, heis.hilbert_dim());
            let mut x = vec_matrix(&m);
            let n = crate::operator::norm2(&x);
            x.mapv_inplace(|z| z / n);
            let sk = SuperKet::new(heis.sites().clone(), heis.dims().to_vec(), x)?;
            let a = krylov_apply(&heis, &sk, 1.0)?;
            let b = dense_apply(&heis, &sk, 1.0)?;
            worst = worst.max(crate::operator::norm2(&(a.vector() - b.vector())));
        }
        checks.push(check("krylov_vs_dense", worst, tol.krylov));
    }

    let all_pass = checks.iter().all(|c| c.pass);
    ctx.write_json(
        "validate.json",
        &json!({
            "model": model.name,
            "sites": model.len(),
            "check_sites": small.len(),
            "checks": checks,
            "all_pass": all_pass,
        }),
    )?;
    if !all_pass {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        return Err(Error::InvariantFailed(failed.join(", ")));
    }
    Ok(())
}

fn lightcone_table(table: &LightconeTable) -> Table {
    let mut t = Table::new(&["d_ab", "t", "norm", "norm_oa", "norm_ob", "volume"]);
    for r in &table.rows {
        t.push(vec![
            fmt_float(r.d_ab),
            fmt_float(r.t),
            fmt_float(r.norm),
            fmt_float(r.norm_oa),
            fmt_float(r.norm_ob),
            fmt_float(r.volume),
        ]);
    }
    t
}

fn profile(ctx: &Ctx, model: &Model) -> Result<LightconeTable> {
    let gen = model.generator(Picture::Heisenberg)?;
    let o_a = ctx.cfg.observable("a", &model.lattice)?;
    let o_b = ctx.cfg.observable("b", &model.lattice)?;
    let placements = ctx.cfg.placement_regions(&model.lattice)?;
    commutator_profile(&gen, &o_a, &o_b, &placements, ctx.cfg.require_times()?)
}

fn run_lightcone(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.model()?;
    let table = profile(ctx, &model)?;
    ctx.write_table("lightcone.csv", &lightcone_table(&table))?;
    if ctx.cfg.lightcone.fit {
        let fit = fit_lightcone(&table)?;
        let monotone = envelope_is_monotone(&table, fit.v, 1e-10);
        ctx.write_json("lightcone_fit.json", &json!({ "fit": fit, "monotone_envelope": monotone }))?;
    }
    Ok(())
}

fn run_spectrum(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.model()?;
    let gen = model.generator(Picture::Schroedinger)?;
    let report = spectral_report(&gen)?;
    let mut convergence = None;
    if ctx.cfg.spectrum.convergence {
        let conv = convergence_bound_check(&gen, ctx.cfg.require_times()?)?;
        let mut t = Table::new(&["t", "lhs", "rhs"]);
        for k in 0..conv.times.len() {
            t.push(vec![fmt_float(conv.times[k]), fmt_float(conv.lhs[k]), fmt_float(conv.rhs[k])]);
        }
        ctx.write_table("convergence.csv", &t)?;
        convergence = Some(json!({ "measured_rate": conv.measured_rate, "conditioning": conv.conditioning }));
    }
    ctx.write_json(
        "spectrum.json",
        &json!({ "model": model.name, "sites": model.len(), "report": report, "convergence": convergence }),
    )
}

fn run_clustering(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.model()?;
    let n = model.len();
    let o_a = ctx.cfg.observable("a", &model.lattice)?;
    let o_b = ctx.cfg.observable("b", &model.lattice)?;
    let placements = ctx.cfg.placement_regions(&model.lattice)?;

    // v and ξ from a light-cone fit on a chain of fit_sites
    let fit_n = ctx.cfg.clustering.fit_sites.unwrap_or(n.min(8));
    let fit_model = ctx.resized(fit_n)?;
    let fit_placements: Vec<Region> = placements
        .iter()
        .filter(|r| r.sites().iter().all(|&x| x < fit_model.len()))
        .cloned()
        .collect();
    let fit_gen = fit_model.generator(Picture::Heisenberg)?;
    let fit_a = ctx.cfg.observable("a", &fit_model.lattice)?;
    let fit_b = ctx.cfg.observable("b", &fit_model.lattice)?;
    let table = commutator_profile(&fit_gen, &fit_a, &fit_b, &fit_placements, ctx.cfg.require_times()?)?;
    ctx.write_table("clustering_lightcone.csv", &lightcone_table(&table))?;
    let lr = fit_lightcone(&table)?;

    // Δ (and conditioning when dense) on a chain of gap_sites
    let gap_n = ctx.cfg.clustering.gap_sites.unwrap_or(n.min(5));
    let gap_gen = ctx.resized(gap_n)?.generator(Picture::Schroedinger)?;
    let (gap, conditioning) = if gap_gen.dim() <= DENSE_MAX {
        let kappa = conditioning_estimate(&gap_gen)
            .map_err(|e| log::warn!("conditioning unavailable: {e}"))
            .ok();
        (spectral_gap(&gap_gen)?, kappa)
    } else {
        let opts = SparseGapOptions {
            seed: ctx.seed,
            ..SparseGapOptions::default()
        };
        (sparse_gap(&gap_gen, &opts)?, None)
    };

    let gen = model.generator(Picture::Schroedinger)?;
    let pi = stationary_state(&gen)?;
    let residual = stationary_residual(&gen, pi.matrix());
    let inputs = ClusteringInputs { lr, gap, conditioning };
    let (rows, fit) = clustering_sweep(&model, &pi, &o_a, &o_b, &placements, &inputs)?;
    let mut t = Table::new(&["d_ab", "joint", "product", "connected"]);
    for r in &rows {
        t.push(vec![fmt_float(r.d_ab), fmt_float(r.joint), fmt_float(r.product), fmt_float(r.connected)]);
    }
    ctx.write_table("clustering.csv", &t)?;
    ctx.write_json(
        "clustering_fit.json",
        &json!({
            "fit": fit,
            "lightcone_fit": lr,
            "fit_sites": fit_n,
            "gap_sites": gap_n,
            "stationary_residual": residual,
        }),
    )?;
    if !fit.within_bound {
        return Err(Error::InvariantFailed(format!(
            "correlation length {:?} exceeds 2μ·1.25 = {}",
            fit.correlation_length,
            2.5 * fit.mu
        )));
    }
    Ok(())
}

fn run_mvalue(ctx: &mut Ctx) -> Result<()> {
    let model = ctx.model()?;
    let gen = model.generator(Picture::Heisenberg)?;
    let op = ctx.cfg.observable("a", &model.lattice)?;
    let regions: Vec<Region> = if ctx.cfg.mvalue.regions.is_empty() {
        (0..model.len()).map(Region::single).collect()
    } else {
        ctx.cfg
            .mvalue
            .regions
            .iter()
            .map(|r| model.lattice.region(r.iter().copied()))
            .collect::<Result<_>>()?
    };
    let m = ctx.cfg.mvalue.clone();
    let report = m_recursion_check(&gen, &op, &regions, ctx.cfg.require_times()?, m.samples, ctx.seed, m.slack)?;
    let mut t = Table::new(&["x", "t", "lhs", "rhs", "margin"]);
    for e in &report.entries {
        let x: Vec<String> = e.x.iter().map(|s| s.to_string()).collect();
        t.push(vec![x.join(";"), fmt_float(e.t), fmt_float(e.lhs), fmt_float(e.rhs), fmt_float(e.margin)]);
    }
    ctx.write_table("mvalue.csv", &t)?;
    let holds = report.holds(1e-9);
    if !holds {
        log::warn!("sampled recursion has negative margin {:.3e} (advisory)", report.min_margin);
    }
    ctx.write_json(
        "mvalue.json",
        &json!({ "slack": report.slack, "samples": m.samples, "min_margin": report.min_margin, "holds": holds }),
    )
}

/// Exit code for a finished run.
pub fn exit_code(result: &Result<RunManifest>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) => e.exit_code(),
    }
}
