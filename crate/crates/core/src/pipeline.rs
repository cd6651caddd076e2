//! End-to-end runs (structure embedding → pretraining → refinement →
//! fine-tuning → evaluation), ablation variants, parameter sweeps and their
//! reports.
//!
//! A [`Pipeline`] owns one dataset and caches the structural view and the
//! pretrained model per `(config, seed)`, so variants and sweep points that
//! only differ downstream of pretraining reuse it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::info;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetSection, RunConfig};
use crate::data::{generate_sbm, load_dataset, resolve_manifest, to_f32, to_f64, LabeledSplit};
use crate::deepwalk::{deepwalk, DeepWalkConfig, SkipGramReport};
use crate::error::{Error, Result, StageExt};
use crate::features::NodeFeatures;
use crate::finetune::{evaluate, finetune, init_finetune, InitMode};
use crate::graph::{apply_refinement, homophily_ratio, Graph, GraphContext, RefinementPlan};
use crate::nn::GcnParams;
use crate::pretrain::{init_pretrain, run_pretraining, EpochLoss, PretrainedModel, ViewBundle};
use crate::refine::{embed_all_nodes, score_pairs, select_refinement, RefineConfig, ViewEmbeddings};

/// A loaded or generated dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub ctx: GraphContext,
    pub features: Arc<NodeFeatures>,
    pub split: LabeledSplit,
    /// Injected noise edges of a generated SBM.
    pub planted_noise: Option<Vec<(usize, usize)>>,
    pub blocks: Option<Vec<usize>>,
    id: String,
}

impl PreparedData {
    pub fn from_parts(name: impl Into<String>, graph: Graph, features: NodeFeatures, split: LabeledSplit) -> Self {
        let name = name.into();
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        for &(u, v) in graph.edges() {
            h.update((u as u64).to_le_bytes());
            h.update((v as u64).to_le_bytes());
        }
        Self {
            id: hex::encode(h.finalize()),
            name,
            ctx: GraphContext::new(graph),
            features: Arc::new(features),
            split,
            planted_noise: None,
            blocks: None,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.ctx.graph
    }
}

pub fn prepare_dataset(section: &DatasetSection) -> Result<PreparedData> {
    match (&section.source, &section.sbm) {
        (Some(src), None) => {
            let path = resolve_manifest(src)?;
            let ds = load_dataset(&path)?;
            Ok(PreparedData::from_parts(ds.name, ds.graph, ds.features, ds.split))
        }
        (None, Some(sbm)) => {
            let d = generate_sbm(sbm)?;
            let mut p = PreparedData::from_parts(d.dataset.name, d.dataset.graph, d.dataset.features, d.dataset.split);
            p.planted_noise = Some(d.noise_edges);
            p.blocks = Some(d.blocks);
            Ok(p)
        }
        (None, None) => Err(Error::InvalidConfig(
            "no dataset: set dataset.source (or --dataset) or dataset.sbm".into(),
        )),
        (Some(_), Some(_)) => Err(Error::InvalidConfig(
            "dataset.source and dataset.sbm are mutually exclusive".into(),
        )),
    }
}

/// Structural embedding, rounded through the f32 on-disk precision so that
/// library and file-based runs agree.
#[derive(Debug, Clone)]
pub struct StructureView {
    pub embedding: Array2<f64>,
    pub report: SkipGramReport,
}

pub fn structure_view(g: &Graph, cfg: &DeepWalkConfig, seed: u64) -> Result<StructureView> {
    let (emb, report) = deepwalk(g, cfg, seed)?;
    Ok(StructureView {
        embedding: to_f64(&to_f32(&emb.0)),
        report,
    })
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub views: ViewBundle,
    pub model: PretrainedModel,
    pub history: Vec<EpochLoss>,
    pub embeddings: ViewEmbeddings,
    pub state_fingerprint: String,
}

fn key_of(parts: &[&dyn erased::Keyed]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.key_bytes());
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

mod erased {
    pub trait Keyed {
        fn key_bytes(&self) -> Vec<u8>;
    }

    impl<T: serde::Serialize> Keyed for T {
        fn key_bytes(&self) -> Vec<u8> {
            serde_json::to_vec(self).expect("serializable key")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain GCN: original graph, random initialization.
    Gcn,
    Full,
    NoInter,
    RandomInit,
    OrigGraph,
    FeatGraph,
    StructGraph,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Gcn,
        Variant::Full,
        Variant::NoInter,
        Variant::RandomInit,
        Variant::OrigGraph,
        Variant::FeatGraph,
        Variant::StructGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::Full => "full",
            Variant::NoInter => "no-inter",
            Variant::RandomInit => "random-init",
            Variant::OrigGraph => "orig-graph",
            Variant::FeatGraph => "feat-graph",
            Variant::StructGraph => "struct-graph",
        }
    }

    /// The configuration this variant runs with.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Variant::Gcn => {
                c.refine.m_plus = Some(0);
                c.refine.m_minus = Some(0);
                c.finetune.init = InitMode::Random;
            }
            Variant::Full => {}
            Variant::NoInter => c.pretrain.alpha = 1.0,
            Variant::RandomInit => c.finetune.init = InitMode::Random,
            Variant::OrigGraph => {
                c.refine.m_plus = Some(0);
                c.refine.m_minus = Some(0);
                c.finetune.init = InitMode::Transfer;
            }
            Variant::FeatGraph => c.refine.beta_f = 1.0,
            Variant::StructGraph => c.refine.beta_f = 0.0,
        }
        c
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown variant {s:?}; expected one of {}",
                    Variant::ALL.map(Variant::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    MPlus,
    MMinus,
    Alpha,
    BetaF,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MPlus => "m_plus",
            SweepAxis::MMinus => "m_minus",
            SweepAxis::Alpha => "alpha",
            SweepAxis::BetaF => "beta_f",
        }
    }

    /// Whether each grid point needs its own pretraining.
    pub fn repretrains(self) -> bool {
        matches!(self, SweepAxis::Alpha)
    }

    pub fn check(self, x: f64, num_edges: usize) -> Result<()> {
        let e = num_edges as f64;
        let (ok, range) = match self {
            SweepAxis::MPlus => (x.fract() == 0.0 && (0.0..=e).contains(&x), format!("integers in [0, {num_edges}]")),
            SweepAxis::MMinus => (
                x.fract() == 0.0 && (0.0..=0.5 * e).contains(&x),
                format!("integers in [0, {}]", num_edges / 2),
            ),
            SweepAxis::Alpha | SweepAxis::BetaF => ((0.0..=1.0).contains(&x), "[0, 1]".to_string()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{} = {x} outside {range}", self.name())))
        }
    }

    pub fn apply(self, base: &RunConfig, x: f64) -> RunConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::MPlus => c.refine.m_plus = Some(x as usize),
            SweepAxis::MMinus => c.refine.m_minus = Some(x as usize),
            SweepAxis::Alpha => c.pretrain.alpha = x,
            SweepAxis::BetaF => c.refine.beta_f = x,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "m_plus" => Ok(SweepAxis::MPlus),
            "m_minus" => Ok(SweepAxis::MMinus),
            "alpha" => Ok(SweepAxis::Alpha),
            "beta_f" | "beta" => Ok(SweepAxis::BetaF),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {s:?}; expected m_plus, m_minus, alpha or beta_f"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: usize,
    pub homophily_before: f64,
    pub homophily_after: f64,
    pub m_plus: usize,
    pub m_minus: usize,
    pub plan_digest: String,
    pub pretrain_fingerprint: Option<String>,
    pub final_pretrain_loss: Option<EpochLoss>,
    pub skipgram_heldout_loss: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub dataset: String,
    pub config_fingerprint: String,
    pub config: RunConfig,
    pub mean_acc: f64,
    /// Population standard deviation over seeds.
    pub std_acc: f64,
    pub runs: Vec<SeedRun>,
    pub homophily_before: f64,
    pub homophily_after_mean: f64,
    pub pretrained_per_point: bool,
    pub fingerprint: String,
    /// Wall time; not part of the fingerprint.
    pub elapsed_secs: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn plan_digest(plan: &RefinementPlan) -> String {
    let mut h = Sha256::new();
    for (tag, list) in [(b'+', &plan.add), (b'-', &plan.remove)] {
        for p in list {
            h.update([tag]);
            h.update((p.u as u64).to_le_bytes());
            h.update((p.v as u64).to_le_bytes());
            h.update(p.score.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl ExperimentReport {
    fn seal(mut self) -> Self {
        let mut v = serde_json::to_value(&self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("fingerprint");
            o.remove("elapsed_secs");
            if let Some(c) = o.get_mut("config").and_then(|c| c.as_object_mut()) {
                c.remove("out_dir");
                c.remove("jobs");
            }
        }
        self.fingerprint = hex::encode(Sha256::digest(v.to_string().as_bytes()));
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_acc).collect()
    }

    /// One aligned text line per seed plus a summary line.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} on {} (config {})",
            self.label,
            self.dataset,
            &self.config_fingerprint[..12]
        );
        let _ = writeln!(s, "{:>6} {:>8} {:>8} {:>6} {:>9} {:>9} {:>7} {:>7}", "seed", "test", "val", "epoch", "h_before", "h_after", "m+", "m-");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:>6} {:>8.4} {:>8.4} {:>6} {:>9.4} {:>9.4} {:>7} {:>7}",
                r.seed, r.test_acc, r.val_acc, r.best_epoch, r.homophily_before, r.homophily_after, r.m_plus, r.m_minus
            );
        }
        let _ = writeln!(
            s,
            "mean {:.2} ± {:.2} %  homophily {:.4} -> {:.4}  ({:.1}s)",
            100.0 * self.mean_acc,
            100.0 * self.std_acc,
            self.homophily_before,
            self.homophily_after_mean,
            self.elapsed_secs
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `x  mean  std  homophily_after` rows, ready to plot.
    pub fn series(&self) -> String {
        let mut s = format!("{}\tmean_acc\tstd_acc\thomophily_after\n", self.axis.name());
        for p in &self.points {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}",
                p.x, p.report.mean_acc, p.report.std_acc, p.report.homophily_after_mean
            );
        }
        s
    }

    pub fn num_rows(&self) -> usize {
        self.points.iter().map(|p| p.report.runs.len()).sum()
    }
}

type Cache<T> = Mutex<HashMap<String, Arc<T>>>;

pub struct Pipeline {
    pub data: PreparedData,
    structure: Cache<StructureView>,
    pretrained: Cache<Pretrained>,
}

fn cached<T>(cache: &Cache<T>, key: String, make: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return Ok(v.clone());
    }
    let v = Arc::new(make()?);
    Ok(cache.lock().expect("cache lock").entry(key).or_insert(v).clone())
}

impl Pipeline {
    pub fn new(data: PreparedData) -> Self {
        Self {
            data,
            structure: Mutex::default(),
            pretrained: Mutex::default(),
        }
    }

    pub fn structure_view(&self, cfg: &DeepWalkConfig, seed: u64) -> Result<Arc<StructureView>> {
        let key = key_of(&[&self.data.id, cfg, &seed]);
        cached(&self.structure, key, || {
            let t = Instant::now();
            let v = structure_view(self.data.graph(), cfg, seed).stage("embed")?;
            info!(
                "seed {seed}: structural embedding in {:.1}s (held-out loss {:.4} -> {:.4})",
                t.elapsed().as_secs_f64(),
                v.report.heldout_loss_initial,
                v.report.heldout_loss_final
            );
            Ok(v)
        })
    }

    pub fn views(&self, cfg: &DeepWalkConfig, seed: u64) -> Result<ViewBundle> {
        let s = self.structure_view(cfg, seed)?;
        ViewBundle::feature_structure((*self.data.features).clone(), s.embedding.clone())
    }

    pub fn pretrained(&self, cfg: &RunConfig, seed: u64) -> Result<Arc<Pretrained>> {
        let key = key_of(&[&self.data.id, &cfg.deepwalk, &cfg.pretrain, &seed]);
        cached(&self.pretrained, key, || {
            let views = self.views(&cfg.deepwalk, seed)?;
            let t = Instant::now();
            let mut state = init_pretrain(&cfg.pretrain, &self.data.ctx, &views, seed).stage("pretrain")?;
            let history = run_pretraining(&mut state, &self.data.ctx, &views, cfg.pretrain.epochs).stage("pretrain")?;
            info!("seed {seed}: pretraining in {:.1}s", t.elapsed().as_secs_f64());
            let embeddings = embed_all_nodes(&state.model, &self.data.ctx, &views).stage("refine")?;
            Ok(Pretrained {
                state_fingerprint: state.fingerprint(),
                views,
                model: state.model,
                history,
                embeddings,
            })
        })
    }

    pub fn plan(&self, pre: &Pretrained, refine: &RefineConfig) -> Result<RefinementPlan> {
        let g = self.data.graph();
        let scores = score_pairs(&pre.embeddings, refine, g)?;
        select_refinement(&scores, g, refine.m_plus, refine.m_minus)
    }

    fn body_template(&self, cfg: &RunConfig) -> GcnParams {
        let (d, h, o) = (self.data.features.cols(), cfg.pretrain.hidden_dim, cfg.pretrain.out_dim);
        let b = cfg.pretrain.bias;
        GcnParams {
            w1: Array2::zeros((d, h)),
            b1: b.then(|| Array2::zeros((1, h))),
            w2: Array2::zeros((h, o)),
            b2: b.then(|| Array2::zeros((1, o))),
        }
    }

    pub fn run_seed(&self, cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
        let g = self.data.graph();
        let refine = cfg.refine.resolve(g.num_edges());
        let needs_pretraining =
            cfg.finetune.init == InitMode::Transfer || refine.m_plus > 0 || refine.m_minus > 0;
        let pre = if needs_pretraining { Some(self.pretrained(cfg, seed)?) } else { None };
        let plan = match &pre {
            Some(p) if refine.m_plus > 0 || refine.m_minus > 0 => self.plan(p, &refine).stage("refine")?,
            _ => RefinementPlan::default(),
        };
        self.finetune_seed(cfg, seed, pre, &plan)
    }

    /// Fine-tunes on the graph edited by an externally supplied plan.
    pub fn run_seed_with_plan(&self, cfg: &RunConfig, seed: u64, plan: &RefinementPlan) -> Result<SeedRun> {
        plan.validate(self.data.graph()).stage("refine")?;
        let pre = match cfg.finetune.init {
            InitMode::Transfer => Some(self.pretrained(cfg, seed)?),
            InitMode::Random => None,
        };
        self.finetune_seed(cfg, seed, pre, plan)
    }

    fn finetune_seed(
        &self,
        cfg: &RunConfig,
        seed: u64,
        pre: Option<Arc<Pretrained>>,
        plan: &RefinementPlan,
    ) -> Result<SeedRun> {
        let g = self.data.graph();
        let refined = apply_refinement(g, plan).stage("refine")?;
        let labels = &self.data.split.labels;
        let h_before = homophily_ratio(g, labels)?.ratio;
        let h_after = homophily_ratio(&refined, labels)?.ratio;

        let template = match &pre {
            Some(p) => p.model.query[p.model.view_index("F")?].clone(),
            None => self.body_template(cfg),
        };
        let model = init_finetune(&template, self.data.split.num_classes, seed, cfg.finetune.init).stage("finetune")?;
        let ctx = GraphContext::new(refined);
        let t = Instant::now();
        let out = finetune(
            model,
            &ctx.adjacency,
            &self.data.features,
            &self.data.split,
            &cfg.finetune.training(),
            seed,
        )
        .stage("finetune")?;
        let test_acc = evaluate(&out.model, &ctx.adjacency, &self.data.features, labels, &self.data.split.test)
            .stage("evaluate")?;
        let val_acc = out.history.get(out.best_epoch).map_or(f64::NAN, |e| e.val_acc);
        info!(
            "seed {seed}: test {:.4} (best epoch {}, {:.1}s), homophily {:.4} -> {:.4}",
            test_acc,
            out.best_epoch,
            t.elapsed().as_secs_f64(),
            h_before,
            h_after
        );
        let structure = match &pre {
            Some(_) => Some(self.structure_view(&cfg.deepwalk, seed)?),
            None => None,
        };
        Ok(SeedRun {
            seed,
            test_acc,
            val_acc,
            best_epoch: out.best_epoch,
            homophily_before: h_before,
            homophily_after: h_after,
            m_plus: plan.add.len(),
            m_minus: plan.remove.len(),
            plan_digest: plan_digest(plan),
            pretrain_fingerprint: pre.as_ref().map(|p| p.state_fingerprint.clone()),
            final_pretrain_loss: pre.as_ref().and_then(|p| p.history.last().copied()),
            skipgram_heldout_loss: structure.map(|s| (s.report.heldout_loss_initial, s.report.heldout_loss_final)),
        })
    }

    fn in_pool<T: Send>(&self, jobs: usize, f: impl FnOnce() -> T + Send) -> T {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }

    /// Every configured seed, aggregated.
    pub fn run(&self, cfg: &RunConfig, label: &str) -> Result<ExperimentReport> {
        cfg.validate()?;
        let t = Instant::now();
        let runs = self.in_pool(cfg.jobs, || {
            cfg.seeds
                .par_iter()
                .map(|&s| self.run_seed(cfg, s))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(self.report(cfg, label, runs, false, t.elapsed().as_secs_f64()))
    }

    /// Aggregates runs computed outside [`Pipeline::run`].
    pub fn report_of(&self, cfg: &RunConfig, label: &str, runs: Vec<SeedRun>) -> ExperimentReport {
        self.report(cfg, label, runs, false, 0.0)
    }

    fn report(&self, cfg: &RunConfig, label: &str, runs: Vec<SeedRun>, per_point: bool, secs: f64) -> ExperimentReport {
        let accs: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
        let (mean_acc, std_acc) = mean_std(&accs);
        let h_after: Vec<f64> = runs.iter().map(|r| r.homophily_after).collect();
        ExperimentReport {
            label: label.to_string(),
            dataset: self.data.name.clone(),
            config_fingerprint: cfg.fingerprint(),
            config: cfg.clone(),
            mean_acc,
            std_acc,
            homophily_before: runs.first().map_or(f64::NAN, |r| r.homophily_before),
            homophily_after_mean: mean_std(&h_after).0,
            runs,
            pretrained_per_point: per_point,
            fingerprint: String::new(),
            elapsed_secs: secs,
        }
        .seal()
    }

    pub fn run_ablation(&self, base: &RunConfig, variant: Variant) -> Result<ExperimentReport> {
        self.run(&variant.apply(base), variant.name())
    }

    pub fn run_sweep(&self, base: &RunConfig, axis: SweepAxis, grid: &[f64]) -> Result<SweepResult> {
        base.validate()?;
        let e = self.data.graph().num_edges();
        for &x in grid {
            axis.check(x, e)?;
        }
        let mut points = Vec::with_capacity(grid.len());
        for &x in grid {
            let cfg = axis.apply(base, x);
            let mut report = self.run(&cfg, &format!("{}={x}", axis.name()))?;
            report.pretrained_per_point = axis.repretrains();
            points.push(SweepPoint { x, report: report.seal() });
        }
        Ok(SweepResult { axis, points })
    }
}

/// Writes `<label>.txt` (table) and appends one JSON record per run to
/// `runs.jsonl` in `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let safe: String = report
        .label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    let table = dir.join(format!("{safe}.txt"));
    std::fs::write(&table, report.to_table()).map_err(|e| Error::io(&table, e))?;
    let jsonl = dir.join("runs.jsonl");
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&jsonl)
        .map_err(|e| Error::io(&jsonl, e))?;
    for r in &report.runs {
        let rec = serde_json::json!({
            "label": report.label,
            "dataset": report.dataset,
            "config_fingerprint": report.config_fingerprint,
            "report_fingerprint": report.fingerprint,
            "run": r,
        });
        writeln!(f, "{rec}").map_err(|e| Error::io(&jsonl, e))?;
    }
    let full = dir.join(format!("{safe}.json"));
    std::fs::write(&full, report.to_json())
        .map_err(|e| Error::io(&full, e))?;
    Ok(full)
}

pub fn write_sweep(dir: &Path, sweep: &SweepResult) -> Result<PathBuf> {
    for p in &sweep.points {
        write_report(dir, &p.report)?;
    }
    let path = dir.join(format!("sweep_{}.tsv", sweep.axis.name()));
    std::fs::write(&path, sweep.series()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("gsr-plus".parse::<Variant>().is_err());
    }

    #[test]
    fn variants_set_their_knobs() {
        let base = RunConfig::default();
        assert_eq!(Variant::NoInter.apply(&base).pretrain.alpha, 1.0);
        assert_eq!(Variant::FeatGraph.apply(&base).refine.beta_f, 1.0);
        assert_eq!(Variant::StructGraph.apply(&base).refine.beta_f, 0.0);
        assert_eq!(Variant::OrigGraph.apply(&base).refine.counts(100), (0, 0));
        assert_eq!(Variant::RandomInit.apply(&base).finetune.init, InitMode::Random);
    }

    #[test]
    fn sweep_ranges() {
        assert!(SweepAxis::MPlus.check(10.0, 10).is_ok());
        assert!(SweepAxis::MPlus.check(11.0, 10).is_err());
        assert!(SweepAxis::MMinus.check(6.0, 10).is_err());
        assert!(SweepAxis::Alpha.check(1.5, 10).is_err());
        assert!(SweepAxis::MPlus.check(0.5, 10).is_err());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
