use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gcnn_core::charting::{all_charts, patch_operator, PatchOperator, PatchParams};
use gcnn_core::eval::{cmc, precision_recall, princeton, roc, Curve};
use gcnn_core::learn::{train as run_training, TrainData, TrainShape};
use gcnn_core::mesh::{geodesic_diameter, load_mesh, Mesh, MeshFormat};
use gcnn_core::net::layers::ftm_max_frequencies;
use gcnn_core::net::{LayerKind, Model, ModelBuilder, Preset, ShapeContext};
use gcnn_core::spectral::{geometry_vectors, mesh_eigensystem, spline_basis, Eigensystem};
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cache;
use crate::config::{ExperimentConfig, LayerConfig};
use crate::error::CliError;

/// Diameter sampling does not depend on the experiment seed, so caches are
/// shared between runs that differ only in seed.
const DIAMETER_SEED: u64 = 0;

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub hash: String,
    pub vertices: usize,
    pub k: usize,
    pub diameter: f64,
    pub rho0: f64,
}

pub type Meta = BTreeMap<String, ShapeMeta>;

#[derive(Debug, Clone, Copy)]
pub enum CacheFile {
    Eigensystem,
    GeometryVectors,
    Patches,
}

impl CacheFile {
    pub const ALL: [CacheFile; 3] = [CacheFile::Eigensystem, CacheFile::GeometryVectors, CacheFile::Patches];

    fn extension(self) -> &'static str {
        match self {
            CacheFile::Eigensystem => "eig",
            CacheFile::GeometryVectors => "geovec",
            CacheFile::Patches => "patch",
        }
    }
}

pub fn cache_path(cfg: &ExperimentConfig, shape: &str, file: CacheFile) -> PathBuf {
    cfg.cache_dir().join(format!("{shape}.{}", file.extension()))
}

/// Advisory lock on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Locked(path.display().to_string())),
            Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn read_meta(cfg: &ExperimentConfig) -> Result<Meta, CliError> {
    let path = cfg.cache_dir().join(META_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(Meta::new()),
        Err(e) => Err(io_err(&path)(e)),
    }
}

fn write_meta(cfg: &ExperimentConfig, meta: &Meta) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    Ok(cache::write_atomic(&cfg.cache_dir().join(META_FILE), text.as_bytes())?)
}

/// Content hash of everything a shape's caches depend on.
fn shape_hash(cfg: &ExperimentConfig, mesh_bytes: &[u8]) -> String {
    let params = json!({ "spectral": cfg.spectral, "charts": cfg.charts, "format": cache::VERSION });
    let mut h = Sha256::new();
    h.update(mesh_bytes);
    h.update([0u8]);
    h.update(params.to_string().as_bytes());
    hex::encode(h.finalize())
}

fn read_mesh(path: &Path) -> Result<(Mesh, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| CliError::Usage(format!("{}: expected an .off or .obj mesh", path.display())))?;
    Ok((load_mesh(path, format)?, bytes))
}

pub fn patch_params(cfg: &ExperimentConfig, rho0: f64) -> PatchParams {
    let c = &cfg.charts;
    let mut p = PatchParams::with_defaults(rho0, c.n_rho, c.n_theta);
    p.sigma_rho *= c.sigma_rho_bins;
    p.sigma_theta *= c.sigma_theta_bins;
    p
}

struct Precomputed {
    eig: Eigensystem,
    geovec: Array2<f64>,
    patches: PatchOperator,
    diameter: f64,
    rho0: f64,
}

fn compute_shape(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<Precomputed, CliError> {
    let n = mesh.vertex_count();
    let k = cfg.spectral.k.min(n);
    if k < cfg.spectral.k {
        log::warn!("only {n} vertices, computing {k} eigenpairs instead of {}", cfg.spectral.k);
    }
    let eig = mesh_eigensystem(mesh, k)?;
    let basis = spline_basis(&eig, cfg.spectral.m)?;
    let geovec = geometry_vectors(&eig, &basis).values;
    let diameter = geodesic_diameter(mesh, cfg.charts.diameter_samples, DIAMETER_SEED)?;
    let rho0 = cfg.charts.rho0_fraction * diameter;
    let charts = all_charts(mesh, rho0)?;
    let patches = patch_operator(&charts, &eig.mass, &patch_params(cfg, rho0))?;
    if !patches.degenerate_vertices().is_empty() {
        log::warn!("{} vertices have degenerate charts at rho0 = {rho0}", patches.degenerate_vertices().len());
    }
    Ok(Precomputed {
        eig,
        geovec,
        patches,
        diameter,
        rho0,
    })
}

/// Computes eigensystem, geometry vectors and patch operator for every shape
/// whose cache is missing or out of date.
pub fn precompute(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let mut meta = read_meta(cfg)?;
    let (mut computed, mut skipped, mut failures) = (Vec::new(), Vec::new(), Vec::new());
    for entry in &cfg.shapes {
        let name = entry.name.clone();
        let started = Instant::now();
        let result = (|| -> Result<bool, CliError> {
            let (mesh, bytes) = read_mesh(&entry.mesh)?;
            let hash = shape_hash(cfg, &bytes);
            let fresh = meta.get(&name).is_some_and(|m| m.hash == hash)
                && CacheFile::ALL.iter().all(|&f| cache_path(cfg, &name, f).is_file());
            if fresh {
                return Ok(false);
            }
            let p = compute_shape(cfg, &mesh)?;
            cache::write_atomic(&cache_path(cfg, &name, CacheFile::Eigensystem), &cache::encode_eigensystem(&p.eig))?;
            cache::write_atomic(&cache_path(cfg, &name, CacheFile::GeometryVectors), &cache::encode_dense(&p.geovec))?;
            cache::write_atomic(&cache_path(cfg, &name, CacheFile::Patches), &cache::encode_patch_operator(&p.patches))?;
            meta.insert(
                name.clone(),
                ShapeMeta {
                    hash,
                    vertices: mesh.vertex_count(),
                    k: p.eig.k(),
                    diameter: p.diameter,
                    rho0: p.rho0,
                },
            );
            write_meta(cfg, &meta)?;
            Ok(true)
        })();
        match result {
            Ok(true) => {
                log::info!("{name}: precomputed in {:.2} s", started.elapsed().as_secs_f64());
                computed.push(name);
            }
            Ok(false) => {
                log::info!("{name}: up to date");
                skipped.push(name);
            }
            Err(e) => {
                log::error!("{name}: {e}");
                failures.push((name, e.to_string()));
            }
        }
    }
    if !failures.is_empty() {
        return Err(CliError::PartialFailure {
            failures,
            total: cfg.shapes.len(),
        });
    }
    Ok(json!({ "computed": computed, "skipped": skipped }))
}

/// Reads a ground-truth file: one 0-based reference index per line.
pub fn read_indices(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{}:{}: expected a vertex index, found {l:?}", path.display(), i + 1)))
        })
        .collect()
}

pub struct LoadedShape {
    pub name: String,
    pub mesh: Mesh,
    pub eig: Eigensystem,
    pub geovec: Array2<f64>,
    pub patches: PatchOperator,
    pub meta: ShapeMeta,
    pub ground_truth: Option<Vec<usize>>,
    pub label: Option<usize>,
}

impl LoadedShape {
    pub fn train_shape(&self) -> TrainShape<'_> {
        TrainShape {
            features: self.geovec.view(),
            ctx: self.ctx(),
            mesh: &self.mesh,
            ground_truth: self.ground_truth.as_deref(),
            label: self.label,
        }
    }

    pub fn ctx(&self) -> ShapeContext<'_> {
        ShapeContext::new(&self.patches, &self.eig.mass.areas)
    }
}

fn load_record<T>(cfg: &ExperimentConfig, name: &str, file: CacheFile, decode: fn(&[u8]) -> Result<T, cache::CacheError>) -> Result<T, CliError> {
    let path = cache_path(cfg, name, file);
    if !path.is_file() {
        return Err(CliError::MissingCache {
            shape: name.into(),
            path: path.display().to_string(),
        });
    }
    Ok(decode(&cache::read(&path)?)?)
}

pub fn load_shape(cfg: &ExperimentConfig, meta: &Meta, name: &str) -> Result<LoadedShape, CliError> {
    let entry = cfg.shape(name)?;
    let m = meta.get(name).ok_or_else(|| CliError::MissingCache {
        shape: name.into(),
        path: cfg.cache_dir().join(META_FILE).display().to_string(),
    })?;
    let (mesh, bytes) = read_mesh(&entry.mesh)?;
    if shape_hash(cfg, &bytes) != m.hash {
        return Err(CliError::StaleCache(name.into()));
    }
    let eig = load_record(cfg, name, CacheFile::Eigensystem, cache::decode_eigensystem)?;
    let geovec = load_record(cfg, name, CacheFile::GeometryVectors, cache::decode_dense)?;
    let patches = load_record(cfg, name, CacheFile::Patches, cache::decode_patch_operator)?;
    let n = mesh.vertex_count();
    if eig.n() != n || geovec.nrows() != n || patches.n_vertices() != n {
        return Err(CliError::StaleCache(name.into()));
    }
    let ground_truth = match &entry.ground_truth {
        Some(p) => {
            let gt = read_indices(p)?;
            if gt.len() != n {
                return Err(CliError::Usage(format!("{}: {} entries for {n} vertices", p.display(), gt.len())));
            }
            Some(gt)
        }
        None if cfg.reference.as_deref() == Some(name) => Some((0..n).collect()),
        None => None,
    };
    Ok(LoadedShape {
        name: name.into(),
        mesh,
        eig,
        geovec,
        patches,
        meta: m.clone(),
        ground_truth,
        label: entry.label,
    })
}

fn reference_size(cfg: &ExperimentConfig, meta: &Meta) -> Result<usize, CliError> {
    match &cfg.reference {
        Some(r) => meta.get(r).map(|m| m.vertices).ok_or_else(|| CliError::MissingCache {
            shape: r.clone(),
            path: cfg.cache_dir().join(META_FILE).display().to_string(),
        }),
        None => Ok(0),
    }
}

/// The configured model, freshly initialized from `seed`. `classes` sizes a
/// correspondence head.
pub fn build_model(cfg: &ExperimentConfig, input_dim: usize, classes: usize, seed: u64) -> Result<Model, CliError> {
    let (n_rho, n_theta) = (cfg.charts.n_rho, cfg.charts.n_theta);
    let need_classes = || {
        if classes == 0 {
            Err(CliError::Config("a correspondence head needs `reference`".into()))
        } else {
            Ok(classes)
        }
    };
    let builder = match &cfg.model.layers {
        Some(layers) => {
            let mut b = ModelBuilder::new(input_dim);
            for l in layers {
                b = match *l {
                    LayerConfig::Lin { width, bias } => b.lin(width.map_or_else(need_classes, Ok)?, bias),
                    LayerConfig::Relu => b.relu(),
                    LayerConfig::Gc { width } => b.gc(width, n_rho, n_theta),
                    LayerConfig::Amp => b.amp(),
                    LayerConfig::Ftm { kept } => b.ftm(n_rho, n_theta, kept.unwrap_or(ftm_max_frequencies(n_theta))),
                    LayerConfig::Cov => b.cov(),
                    LayerConfig::Softmax => b.softmax(),
                };
            }
            b
        }
        None => {
            let name = cfg.model.preset.as_deref().unwrap_or("gcnn1");
            let preset = Preset::from_name(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
            let classes = if preset == Preset::Gcnn3 { need_classes()? } else { classes };
            preset.builder(input_dim, n_rho, n_theta, classes)
        }
    };
    Ok(builder.build(seed)?)
}

pub const INITIAL_CHECKPOINT: &str = "model_init.gcnn";
pub const CHECKPOINT: &str = "model.gcnn";
pub const LOSS_CSV: &str = "loss.csv";

pub fn loss_csv(history: &[gcnn_core::learn::LossRecord], with_validation: bool) -> String {
    let mut s = String::from(if with_validation { "step,loss,val_loss\n" } else { "step,loss\n" });
    for r in history {
        write!(s, "{},{}", r.step, r.loss).expect("write to string");
        if with_validation {
            s.push(',');
            if let Some(v) = r.val_loss {
                write!(s, "{v}").expect("write to string");
            }
        }
        s.push('\n');
    }
    s
}

/// Trains the configured model; writes the initial and final checkpoints, the
/// loss history and run metadata to the output directory.
pub fn train(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let meta = read_meta(cfg)?;
    let train_names = cfg.training_names();
    if train_names.is_empty() {
        return Err(CliError::Config("no training shapes".into()));
    }
    let load = |names: &[String]| names.iter().map(|n| load_shape(cfg, &meta, n)).collect::<Result<Vec<_>, _>>();
    let train_shapes = load(&train_names)?;
    let val_shapes = load(&cfg.validation_shapes)?;
    let input_dim = train_shapes[0].geovec.ncols();
    let model = build_model(cfg, input_dim, reference_size(cfg, &meta)?, cfg.seed)?;
    cache::write_atomic(&cfg.output_dir.join(INITIAL_CHECKPOINT), &cache::encode_model(&model))?;

    // Negatives are rejected within twice the largest training disc radius.
    let rho0 = train_shapes.iter().map(|s| s.meta.rho0).fold(0.0, f64::max);
    let data = TrainData {
        train: train_shapes.iter().map(LoadedShape::train_shape).collect(),
        validation: val_shapes.iter().map(LoadedShape::train_shape).collect(),
        rho0,
    };
    let tc = cfg.train.to_train_config(cfg.seed);
    let started = Instant::now();
    let result = run_training(&model, cfg.task.into(), &data, &tc)?;
    log::info!("trained {} updates in {:.2} s", tc.max_updates, started.elapsed().as_secs_f64());

    cache::write_atomic(&cfg.output_dir.join(CHECKPOINT), &cache::encode_model(&result.model))?;
    cache::write_atomic(&cfg.output_dir.join(LOSS_CSV), loss_csv(&result.history, !val_shapes.is_empty()).as_bytes())?;
    let run = json!({
        "task": cfg.task,
        "seed": cfg.seed,
        "train": cfg.train,
        "train_shapes": train_names,
        "validation_shapes": cfg.validation_shapes,
        "rho0": rho0,
        "parameters": model.parameter_count(),
        "best_step": result.best_step,
        "final_loss": result.history.last().map(|r| r.loss),
    });
    let text = serde_json::to_string_pretty(&run).expect("run metadata serializes");
    cache::write_atomic(&cfg.output_dir.join("train_meta.json"), text.as_bytes())?;
    Ok(run)
}

/// Index of the largest entry of each row, lowest index on ties.
fn row_argmax(row: ArrayView1<f64>) -> (usize, f64) {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
}

/// Runs a checkpoint (or the freshly initialized configured model) on one
/// shape's geometry vectors. Softmax heads produce a correspondence CSV,
/// anything else a DENSE descriptor record.
pub fn apply(cfg: &ExperimentConfig, shape: &str, checkpoint: Option<&Path>, output: Option<&Path>) -> Result<Value, CliError> {
    let meta = read_meta(cfg)?;
    let s = load_shape(cfg, &meta, shape)?;
    let model = match checkpoint {
        Some(p) => cache::decode_model(&cache::read(p)?)?,
        None => build_model(cfg, s.geovec.ncols(), reference_size(cfg, &meta)?, cfg.seed)?,
    };
    let (out, _) = model.forward(s.geovec.view(), &s.ctx())?;
    let soft = model.layers().last().is_some_and(|l| l.kind == LayerKind::Softmax);
    let (path, bytes) = if soft {
        let mut csv = String::from("vertex,reference,probability\n");
        for (v, row) in out.rows().into_iter().enumerate() {
            let (j, p) = row_argmax(row);
            writeln!(csv, "{v},{j},{p}").expect("write to string");
        }
        let default = cfg.output_dir.join("apply").join(format!("{shape}.csv"));
        (output.map_or(default, Path::to_path_buf), csv.into_bytes())
    } else {
        let default = cfg.output_dir.join("apply").join(format!("{shape}.desc"));
        (output.map_or(default, Path::to_path_buf), cache::encode_dense(&out))
    };
    cache::write_atomic(&path, &bytes)?;
    Ok(json!({ "output": path, "rows": out.nrows(), "cols": out.ncols(), "correspondence": soft }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Cmc,
    Roc,
    Princeton,
    Pr,
}

impl EvalKind {
    fn name(self) -> &'static str {
        match self {
            EvalKind::Cmc => "cmc",
            EvalKind::Roc => "roc",
            EvalKind::Princeton => "princeton",
            EvalKind::Pr => "pr",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub query: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Correspondence CSV from `apply`, or one predicted index per line.
    pub prediction: Option<PathBuf>,
    pub reference_shape: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, kind: EvalKind) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Usage(format!("eval {} needs --{flag}", kind.name())))
}

fn read_dense(path: &Path) -> Result<Array2<f64>, CliError> {
    Ok(cache::decode_dense(&cache::read(path)?)?)
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest reference row, lowest index on ties.
fn nearest(query: ArrayView1<f64>, refs: &Array2<f64>) -> usize {
    refs.rows()
        .into_iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (j, row)| {
            let d = distance(query, row);
            if d < best.1 { (j, d) } else { best }
        })
        .0
}

fn read_prediction(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if !text.starts_with("vertex,") {
        return read_indices(path);
    }
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| CliError::Usage(format!("{}: malformed line {l:?}", path.display())))
        })
        .collect()
}

fn descriptor_pair(inputs: &EvalInputs, kind: EvalKind) -> Result<(Array2<f64>, Array2<f64>, Vec<usize>), CliError> {
    let q = read_dense(required(&inputs.query, "query", kind)?)?;
    let r = read_dense(required(&inputs.reference, "reference", kind)?)?;
    let gt = read_indices(required(&inputs.ground_truth, "ground-truth", kind)?)?;
    if q.ncols() != r.ncols() {
        return Err(CliError::Usage(format!("descriptor widths differ: {} vs {}", q.ncols(), r.ncols())));
    }
    Ok((q, r, gt))
}

/// Computes one evaluation curve and writes it as CSV.
pub fn eval(cfg: Option<&ExperimentConfig>, seed: u64, kind: EvalKind, inputs: &EvalInputs) -> Result<Value, CliError> {
    let settings = cfg.map(|c| c.eval.clone()).unwrap_or_default();
    let curve: Curve = match kind {
        EvalKind::Cmc => {
            let (q, r, gt) = descriptor_pair(inputs, kind)?;
            let k_max = settings.k_max.unwrap_or(r.nrows()).min(r.nrows());
            cmc(q.view(), r.view(), &gt, k_max)?
        }
        EvalKind::Roc => {
            let (q, r, gt) = descriptor_pair(inputs, kind)?;
            if gt.len() != q.nrows() || gt.iter().any(|&j| j >= r.nrows()) || r.nrows() < 2 {
                return Err(CliError::Usage("ground truth does not match the descriptors".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pos = Vec::with_capacity(q.nrows());
            let mut neg = Vec::with_capacity(q.nrows() * settings.roc_negatives);
            for (i, &j) in gt.iter().enumerate() {
                pos.push(distance(q.row(i), r.row(j)));
                for _ in 0..settings.roc_negatives {
                    let mut other = rng.gen_range(0..r.nrows() - 1);
                    if other >= j {
                        other += 1;
                    }
                    neg.push(distance(q.row(i), r.row(other)));
                }
            }
            roc(&pos, &neg, None)?
        }
        EvalKind::Princeton => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("eval princeton needs --config".into()))?;
            let name = inputs
                .reference_shape
                .as_ref()
                .or(cfg.reference.as_ref())
                .ok_or_else(|| CliError::Usage("eval princeton needs --reference-shape or a configured reference".into()))?;
            let meta = read_meta(cfg)?;
            let reference = load_shape(cfg, &meta, name)?;
            let gt = read_indices(required(&inputs.ground_truth, "ground-truth", kind)?)?;
            let pred = match &inputs.prediction {
                Some(p) => read_prediction(p)?,
                None => {
                    let (q, r, _) = descriptor_pair(inputs, kind)?;
                    q.rows().into_iter().map(|row| nearest(row, &r)).collect()
                }
            };
            princeton(&pred, &gt, &reference.mesh, reference.meta.diameter, settings.r_max, settings.princeton_steps)?
        }
        EvalKind::Pr => {
            if inputs.inputs.is_empty() {
                return Err(CliError::Usage("eval pr needs --inputs".into()));
            }
            let labels = read_indices(required(&inputs.labels, "labels", kind)?)?;
            let descs = inputs
                .inputs
                .iter()
                .map(|p| read_dense(p).map(|a| a.iter().copied().collect::<Vec<f64>>()))
                .collect::<Result<Vec<_>, _>>()?;
            if descs.iter().any(|d| d.len() != descs[0].len()) {
                return Err(CliError::Usage("retrieval descriptors differ in size".into()));
            }
            let rankings: Vec<Vec<usize>> = descs
                .iter()
                .map(|q| {
                    let d: Vec<f64> = descs
                        .iter()
                        .map(|g| distance(ArrayView1::from(q), ArrayView1::from(g)))
                        .collect();
                    let mut order: Vec<usize> = (0..descs.len()).collect();
                    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
                    order
                })
                .collect();
            precision_recall(&rankings, &labels, settings.pr_levels)?
        }
    };
    let path = match (&inputs.output, cfg) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => c.output_dir.join("eval").join(format!("{}.csv", kind.name())),
        (None, None) => return Err(CliError::Usage("eval needs --output when no config is given".into())),
    };
    cache::write_atomic(&path, curve.to_csv().as_bytes())?;
    Ok(json!({ "output": path, "kind": kind.name(), "samples": curve.samples, "points": curve.points.len() }))
}
