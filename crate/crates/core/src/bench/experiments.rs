use std::path::PathBuf;

use crate::bench::config::{Arm, CeilingConfig, ExperimentConfig, ExperimentKind};
use crate::bench::metrics::{domain_key, MetricsRecord, MetricsSink, RecordContext, SummaryTable};
use crate::datagen::{
    build_federation, make_subspace_domain, sample_domain, split_by_class, FederatedDataset, LabeledSet, ServerSource,
};
use crate::error::{Error, Result};
use crate::federation::{sample_clients, DomainAccuracy, DomainOracle, RoundReport, Simulation, Strategy, Weighting};
use crate::neural::{accuracy, features, fit_classifier, MlpArch, MlpParams, Optimizer};
use crate::numerics::{argmax, cosine, mean_std, Matrix, Rng};
use crate::subspace::{affinity, projection_from_features, ProjectionMatrix};

const TAG_CEILING: u64 = 0xCE11;
const TAG_PROBE: u64 = 0x9_0BE;

/// Where results go and how chatty the run is.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Parent directory; results land in `<out_dir>/<experiment name>/`.
    pub out_dir: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub records: Vec<MetricsRecord>,
    pub summary: SummaryTable,
}

impl Outcome {
    /// Final-round records of `arm`, one per seed in config order.
    pub fn finals(&self, arm: &str) -> Vec<&MetricsRecord> {
        let mut out: Vec<&MetricsRecord> = Vec::new();
        for r in self.records.iter().filter(|r| r.arm == arm) {
            match out.iter_mut().find(|o| o.seed == r.seed) {
                Some(o) if o.round < r.round => *o = r,
                Some(_) => {}
                None => out.push(r),
            }
        }
        out
    }

    /// Per-round mean accuracy of `arm` for `seed`.
    pub fn curve(&self, arm: &str, seed: u64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.arm == arm && r.seed == seed)
            .map(|r| r.mean_accuracy)
            .collect()
    }
}

/// First 1-based round at which `curve` reaches `target`.
pub fn rounds_to_reach(curve: &[f64], target: f64) -> Option<usize> {
    curve.iter().position(|&a| a >= target).map(|i| i + 1)
}

/// Projection payload relative to the model size: `d_f² / total_params`.
pub fn overhead_ratio(feature_dim: usize, total_params: u64) -> f64 {
    (feature_dim * feature_dim) as f64 / total_params as f64
}

fn context(cfg: &ExperimentConfig) -> RecordContext {
    RecordContext {
        experiment: cfg.experiment.name.clone(),
        kind: cfg.experiment.kind.name().into(),
        config_hash: cfg.hash(),
        dataset_hash: cfg.section_hashes()["dataset"].clone(),
    }
}

fn sink(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MetricsSink> {
    match &opts.out_dir {
        Some(dir) => MetricsSink::to_dir(dir.join(&cfg.experiment.name)),
        None => Ok(MetricsSink::memory()),
    }
}

fn say(opts: &RunOptions, msg: impl AsRef<str>) {
    if !opts.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Runs the experiment its config declares.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    cfg.validate()?;
    let ctx = format!("experiment `{}` ({})", cfg.experiment.name, cfg.experiment.kind.name());
    let out = match cfg.experiment.kind {
        ExperimentKind::Run => run_arms(cfg, opts),
        ExperimentKind::Ablate => weighting_ablation(cfg, opts),
        ExperimentKind::ProbeDomains => domain_classification_probe(cfg, opts),
        ExperimentKind::ProbeOverlap => server_overlap_probe(cfg, opts),
        ExperimentKind::Comm => comm_report(cfg, opts),
    };
    out.map_err(|e| e.context(ctx))
}

fn simulation(cfg: &ExperimentConfig, arm: Arm, data: &FederatedDataset, seed: u64) -> Result<Simulation> {
    let sim = Simulation::new(data.clone(), cfg.settings_for(arm), seed)?;
    if arm.strategy == Strategy::FedD3a && arm.weighting == Weighting::Ceiling {
        let (oracle, _) = ceiling_oracle(data, &cfg.ceiling, cfg.optim.batch_size, seed)?;
        return Ok(sim.with_oracle(oracle));
    }
    Ok(sim)
}

fn domain_columns(domains: &[usize]) -> Vec<String> {
    domains.iter().map(|&d| domain_key(d)).collect()
}

fn accuracy_row(acc: &[DomainAccuracy], mean: f64) -> Vec<f64> {
    acc.iter().map(|a| a.accuracy).chain([mean]).collect()
}

/// Trains every arm for every seed; one record per round.
pub fn run_arms(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let ctx = context(cfg);
    let mut sink = sink(cfg, opts)?;
    let arms = cfg.arms();
    let mut table: Option<SummaryTable> = None;
    let mut finals: Vec<Vec<Vec<f64>>> = vec![Vec::new(); arms.len()];
    for &seed in &cfg.experiment.seeds {
        let data = build_federation(&cfg.dataset, seed).map_err(|e| e.context(format!("seed {seed}")))?;
        let table = table.get_or_insert_with(|| {
            let mut cols = domain_columns(&data.eval_domains);
            cols.push("mean".into());
            SummaryTable::new(cols)
        });
        for (a, &arm) in arms.iter().enumerate() {
            let label = arm.label();
            let mut sim = simulation(cfg, arm, &data, seed).map_err(|e| e.context(format!("arm {label}")))?;
            let total = cfg.federation.rounds;
            let mut last: Option<RoundReport> = None;
            while sim.server.rounds_done < total {
                let r = sim
                    .run_round()
                    .map_err(|e| e.context(format!("arm {label}, seed {seed}")))?;
                say(
                    opts,
                    format!(
                        "[{}] seed {seed} {label} round {}/{total} acc {:.4}",
                        cfg.experiment.name, r.round, r.mean_accuracy
                    ),
                );
                sink.push(MetricsRecord::from_round(&ctx, &label, seed, &r))?;
                last = Some(r);
            }
            let r = last.expect("at least one round");
            let row = accuracy_row(&r.domain_accuracy, r.mean_accuracy);
            table.push(format!("{label}/seed{seed}"), row.clone());
            finals[a].push(row);
        }
    }
    let mut table = table.unwrap_or_default();
    for (arm, rows) in arms.iter().zip(&finals) {
        table.push(format!("{}/mean", arm.label()), column_means(rows));
    }
    say(opts, table.render());
    let records = sink.finish(&table)?;
    Ok(Outcome {
        records,
        summary: table,
    })
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows.first().map_or(0, Vec::len))
        .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect()
}

/// Domain classifier trained on pooled client data (all of it: this is a
/// simulator-only diagnostic that no real server could build). Returns the
/// oracle and its domain accuracy on the held-out evaluation sets.
pub fn ceiling_oracle(
    data: &FederatedDataset,
    cfg: &CeilingConfig,
    batch_size: usize,
    seed: u64,
) -> Result<(DomainOracle, Vec<DomainAccuracy>)> {
    let domains = &data.eval_domains;
    let index_of = |d: usize| {
        domains
            .iter()
            .position(|&x| x == d)
            .expect("client domain is an eval domain")
    };
    let parts: Vec<&LabeledSet> = data.clients.iter().collect();
    let pooled = LabeledSet::concat(&parts)?;
    let labels: Vec<usize> = pooled.domain_ids.iter().map(|&d| index_of(d)).collect();
    let arch = MlpArch::new(pooled.input_dim(), cfg.hidden_dims.clone(), domains.len().max(2))?;
    let mut rng = Rng::derive(seed, TAG_CEILING);
    let mut params = MlpParams::init(&arch, &mut rng);
    let mut opt = Optimizer::new(cfg.learning_rate, 0.9);
    fit_classifier(
        &arch,
        &mut params,
        &pooled.features,
        &labels,
        cfg.epochs,
        batch_size,
        &mut opt,
        &mut rng,
    )?;
    let oracle = DomainOracle {
        arch,
        params,
        domains: domains.clone(),
    };
    let acc = data
        .server_eval
        .iter()
        .zip(&data.eval_domains)
        .map(|(set, &d)| {
            let probs = oracle.posterior(&set.features)?;
            let target = vec![index_of(d); set.len()];
            Ok(DomainAccuracy {
                domain: d,
                accuracy: accuracy(&probs, &target),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((oracle, acc))
}

const ABLATION_ARMS: [Weighting; 5] = [
    Weighting::Ceiling,
    Weighting::Avg,
    Weighting::Random,
    Weighting::Onehot,
    Weighting::Soft,
];

/// Clients train once from the initial global model; every weighting then
/// distills the same uploads, so the arms are paired.
pub fn weighting_ablation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let arms: Vec<Arm> = if cfg.experiment.arms.is_empty() {
        ABLATION_ARMS.iter().map(|&w| Arm::new(Strategy::FedD3a, w)).collect()
    } else {
        cfg.experiment.arms.clone()
    };
    if let Some(bad) = arms.iter().find(|a| a.strategy != Strategy::FedD3a) {
        return Err(Error::Config(format!(
            "ablation arms must be fedd3a weightings, got {bad}"
        )));
    }
    let ctx = context(cfg);
    let mut sink = sink(cfg, opts)?;
    let mut table: Option<SummaryTable> = None;
    let mut per_arm: Vec<Vec<Vec<f64>>> = vec![Vec::new(); arms.len()];
    for &seed in &cfg.experiment.seeds {
        let data = build_federation(&cfg.dataset, seed).map_err(|e| e.context(format!("seed {seed}")))?;
        let table = table.get_or_insert_with(|| {
            let mut cols = domain_columns(&data.eval_domains);
            cols.push("avg".into());
            SummaryTable::new(cols)
        });
        let needs_oracle = arms.iter().any(|a| a.weighting == Weighting::Ceiling);
        let mut base = Simulation::new(
            data.clone(),
            cfg.settings_for(Arm::new(Strategy::FedD3a, Weighting::Soft)),
            seed,
        )?;
        if needs_oracle {
            let (oracle, dom_acc) = ceiling_oracle(&data, &cfg.ceiling, cfg.optim.batch_size, seed)?;
            let mut rec = MetricsRecord::blank(&ctx, "domain_classifier", seed, 0);
            rec.mean_accuracy = base.weighted_accuracy(&dom_acc);
            rec.domain_accuracy = dom_acc.iter().map(|d| (domain_key(d.domain), d.accuracy)).collect();
            sink.push(rec)?;
            base = base.with_oracle(oracle);
        }
        let selected = sample_clients(
            base.clients.len(),
            cfg.federation.clients_per_round,
            &mut base.server.rng,
        )?;
        let updates = base.train_clients(&selected)?;
        for (a, arm) in arms.iter().enumerate() {
            let start = std::time::Instant::now();
            let mut sim = base.clone();
            let (global, stats) = sim.aggregate(&updates, arm.weighting)?;
            let acc = sim.evaluate(&global)?;
            let mean = sim.weighted_accuracy(&acc);
            let report = RoundReport {
                round: 1,
                learning_rate: cfg.optim.lr0,
                selected: selected.clone(),
                mean_accuracy: mean,
                distill: stats,
                bytes_up: updates.iter().map(|u| u.bytes_uploaded).sum(),
                bytes_down: 0,
                projection_bytes: 0,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                domain_accuracy: acc,
            };
            let label = arm.weighting.name();
            say(
                opts,
                format!("[{}] seed {seed} {label} acc {mean:.4}", cfg.experiment.name),
            );
            sink.push(MetricsRecord::from_round(&ctx, label, seed, &report))?;
            let row = accuracy_row(&report.domain_accuracy, mean);
            table.push(format!("{label}/seed{seed}"), row.clone());
            per_arm[a].push(row);
        }
    }
    let mut table = table.unwrap_or_default();
    for (arm, rows) in arms.iter().zip(&per_arm) {
        table.push(arm.weighting.name(), column_means(rows));
    }
    say(opts, table.render());
    let records = sink.finish(&table)?;
    Ok(Outcome {
        records,
        summary: table,
    })
}

/// Accuracies of the two domain scorers on one seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub projection: f64,
    pub prototype: f64,
}

/// One-class-per-client probe: which client does a held-out sample belong
/// to, judged by subspace affinity versus cosine to the client's mean
/// feature?
pub fn probe_once(cfg: &ExperimentConfig, seed: u64) -> Result<ProbeResult> {
    let p = &cfg.probe;
    let spec = make_subspace_domain(
        seed,
        p.num_clients,
        p.input_dim,
        p.subspace_dim,
        p.mean_scale,
        p.spread,
        p.noise_std,
    )?;
    let mut rng = Rng::derive(seed, TAG_PROBE);
    let train = sample_domain(&spec, p.train_n * p.num_clients, &mut rng)?;
    let test = sample_domain(&spec, p.test_n * p.num_clients, &mut rng)?;
    let arch = MlpArch::new(p.input_dim, p.hidden_dims.clone(), p.num_clients.max(2))?;
    let backbone = MlpParams::init(&arch, &mut rng);
    let sub = &cfg.subspace;
    let mut projections: Vec<ProjectionMatrix> = Vec::new();
    let mut prototypes: Vec<Vec<f64>> = Vec::new();
    for client in split_by_class(&train) {
        let z = features(&arch, &backbone, &client.features)?;
        projections.push(projection_from_features(
            &z,
            sub.ridge_alpha,
            sub.accumulation(),
            sub.projection_variant,
        )?);
        prototypes.push(column_mean(&z));
    }
    let z = features(&arch, &backbone, &test.features)?;
    let (mut hit_proj, mut hit_proto) = (0usize, 0usize);
    for i in 0..z.rows() {
        let f = z.row(i);
        let r = projections
            .iter()
            .map(|pm| affinity(pm, f))
            .collect::<Result<Vec<_>>>()?;
        let c = prototypes.iter().map(|m| cosine(f, m)).collect::<Result<Vec<_>>>()?;
        hit_proj += usize::from(argmax(&r) == test.labels[i]);
        hit_proto += usize::from(argmax(&c) == test.labels[i]);
    }
    let n = z.rows() as f64;
    Ok(ProbeResult {
        projection: hit_proj as f64 / n,
        prototype: hit_proto as f64 / n,
    })
}

fn column_mean(z: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; z.cols()];
    for r in 0..z.rows() {
        for (acc, v) in m.iter_mut().zip(z.row(r)) {
            *acc += v;
        }
    }
    let n = z.rows().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

pub fn domain_classification_probe(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let ctx = context(cfg);
    let mut sink = sink(cfg, opts)?;
    let (mut proj, mut proto) = (Vec::new(), Vec::new());
    for &seed in &cfg.experiment.seeds {
        let start = std::time::Instant::now();
        let r = probe_once(cfg, seed).map_err(|e| e.context(format!("seed {seed}")))?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        say(
            opts,
            format!(
                "[{}] seed {seed} projection {:.4} prototype {:.4}",
                cfg.experiment.name, r.projection, r.prototype
            ),
        );
        for (arm, acc) in [("projection", r.projection), ("prototype", r.prototype)] {
            let mut rec = MetricsRecord::blank(&ctx, arm, seed, 0);
            rec.mean_accuracy = acc;
            rec.wall_time_ms = ms;
            sink.push(rec)?;
        }
        proj.push(r.projection);
        proto.push(r.prototype);
    }
    let mut cols = vec!["mean".to_string(), "std".to_string()];
    cols.extend(cfg.experiment.seeds.iter().map(|s| format!("seed{s}")));
    let mut table = SummaryTable::new(cols);
    for (label, v) in [("prototype", &proto), ("projection", &proj)] {
        let (m, s) = mean_std(v);
        let mut row = vec![m, s];
        row.extend(v.iter().copied());
        table.push(label, row);
    }
    say(opts, table.render());
    let records = sink.finish(&table)?;
    Ok(Outcome {
        records,
        summary: table,
    })
}

/// The overlap variant of `cfg`: server data drawn purely from the first
/// client's domain. Only the dataset section changes.
pub fn overlap_variant(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut o = cfg.clone();
    o.dataset.server_source = ServerSource::FirstClient;
    o.dataset.server_mixture = 0.0;
    o
}

pub fn server_overlap_probe(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    if cfg.dataset.mode != crate::datagen::FederationMode::CrossSilo {
        return Err(Error::Config("the overlap probe needs a cross-silo dataset".into()));
    }
    let arms: Vec<Arm> = if cfg.experiment.arms.is_empty() {
        vec![
            Arm::new(Strategy::FedDf, Weighting::Avg),
            Arm::new(Strategy::FedD3a, Weighting::Soft),
        ]
    } else {
        cfg.experiment.arms.clone()
    };
    let overlap = overlap_variant(cfg);
    let variants = [
        ("baseline", cfg, context(cfg)),
        ("overlap", &overlap, context(&overlap)),
    ];
    let mut sink = sink(cfg, opts)?;
    let mut table: Option<SummaryTable> = None;
    let mut per_arm: Vec<Vec<Vec<f64>>> = vec![Vec::new(); arms.len()];
    for &seed in &cfg.experiment.seeds {
        let mut finals: Vec<Vec<RoundReport>> = vec![Vec::new(); arms.len()];
        for (vname, vcfg, vctx) in &variants {
            let data = build_federation(&vcfg.dataset, seed)?;
            for (a, &arm) in arms.iter().enumerate() {
                let label = format!("{}@{vname}", arm.label());
                let mut sim = simulation(vcfg, arm, &data, seed)?;
                let reports = sim.run(|r| {
                    say(
                        opts,
                        format!(
                            "[{}] seed {seed} {label} round {} acc {:.4}",
                            cfg.experiment.name, r.round, r.mean_accuracy
                        ),
                    )
                })?;
                for r in &reports {
                    sink.push(MetricsRecord::from_round(vctx, &label, seed, r))?;
                }
                finals[a].push(reports.last().expect("rounds >= 1").clone());
            }
        }
        let table = table.get_or_insert_with(|| {
            let mut cols: Vec<String> = finals[0][0]
                .domain_accuracy
                .iter()
                .map(|d| format!("delta_{}", domain_key(d.domain)))
                .collect();
            cols.extend(["All_before".to_string(), "All_after".to_string()]);
            SummaryTable::new(cols)
        });
        for (a, arm) in arms.iter().enumerate() {
            let (before, after) = (&finals[a][0], &finals[a][1]);
            let mut row: Vec<f64> = before
                .domain_accuracy
                .iter()
                .zip(&after.domain_accuracy)
                .map(|(b, x)| x.accuracy - b.accuracy)
                .collect();
            row.extend([before.mean_accuracy, after.mean_accuracy]);
            table.push(format!("{}/seed{seed}", arm.label()), row.clone());
            per_arm[a].push(row);
        }
    }
    let mut table = table.unwrap_or_default();
    for (arm, rows) in arms.iter().zip(&per_arm) {
        table.push(format!("{}/mean", arm.label()), column_means(rows));
    }
    say(opts, table.render());
    let records = sink.finish(&table)?;
    Ok(Outcome {
        records,
        summary: table,
    })
}

/// Measured per-round traffic for each strategy, plus the projection
/// overhead ratio of the desk model and of the configured reference model.
pub fn comm_report(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let arms: Vec<Arm> = if cfg.experiment.arms.is_empty() {
        [Strategy::FedAvg, Strategy::FedProx, Strategy::FedDf, Strategy::FedD3a]
            .into_iter()
            .map(|s| Arm::new(s, Weighting::Soft))
            .collect()
    } else {
        cfg.experiment.arms.clone()
    };
    let ctx = context(cfg);
    let mut sink = sink(cfg, opts)?;
    let mut table = SummaryTable::new(
        [
            "bytes_up_per_round",
            "bytes_down_per_round",
            "projection_bytes_per_round",
            "overhead_ratio",
        ]
        .map(String::from)
        .to_vec(),
    );
    let seed = cfg.experiment.seeds[0];
    let data = build_federation(&cfg.dataset, seed)?;
    for &arm in &arms {
        let label = arm.label();
        let mut sim = simulation(cfg, arm, &data, seed)?;
        let arch = sim.server.global_arch.clone();
        let ratio = if arm.strategy.uploads_projection() {
            overhead_ratio(arch.feature_dim(), arch.num_params() as u64)
        } else {
            0.0
        };
        let reports = sim.run(|_| {})?;
        let n = reports.len() as f64;
        let mut sums = [0.0; 3];
        for r in &reports {
            let mut rec = MetricsRecord::from_round(&ctx, &label, seed, r);
            rec.extra.insert("overhead_ratio".into(), ratio);
            rec.extra.insert("feature_dim".into(), arch.feature_dim() as f64);
            rec.extra.insert("total_params".into(), arch.num_params() as f64);
            sink.push(rec)?;
            sums[0] += r.bytes_up as f64;
            sums[1] += r.bytes_down as f64;
            sums[2] += r.projection_bytes as f64;
        }
        say(
            opts,
            format!("[{}] {label}: {:.0} B up / round", cfg.experiment.name, sums[0] / n),
        );
        table.push(label, vec![sums[0] / n, sums[1] / n, sums[2] / n, ratio]);
    }
    let c = &cfg.comm;
    let reference = overhead_ratio(c.reference_feature_dim, c.reference_total_params);
    let mut rec = MetricsRecord::blank(&ctx, "reference", seed, 0);
    rec.extra.insert("overhead_ratio".into(), reference);
    rec.extra.insert("feature_dim".into(), c.reference_feature_dim as f64);
    rec.extra.insert("total_params".into(), c.reference_total_params as f64);
    sink.push(rec)?;
    table.push("reference", vec![f64::NAN, f64::NAN, f64::NAN, reference]);
    say(opts, table.render());
    let records = sink.finish(&table)?;
    Ok(Outcome {
        records,
        summary: table,
    })
}
