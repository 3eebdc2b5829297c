//! Round orchestration for modality-aware FL and federated distillation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_stage1, aggregate_stage2, ClientUpdate};
use super::channel::ChannelAudit;
use super::client::{build_clients, sample_round_clients, ClientSpec, Phase, RoundSample};
use super::config::{RunConfig, Stage2Divisor, Stage2Init};
use super::local::{distill_with_teacher, train_audio_on_shard, train_fusion_on_shard, RoundCtx};
use super::params::{init_block, init_params, Block, ParamSet};
use crate::datagen::{assign_modalities, dirichlet_partition, Modality, MultimodalDataset, Partition};
use crate::error::{Error, Result};
use crate::metrics::{argmax, class_f1, topk_accuracy, ClassReport, RoundMetrics};
use crate::nnkit::{Model, MultimodalModel, Topology, UnimodalModel};
use crate::rng::{derive_seed, stream};

/// Salt for cold-start student initialization, distinct from the stage-1 init.
const COLD_START_SALT: u64 = 100;

/// A run config bound to its dataset and client population.
#[derive(Debug, Clone)]
pub struct Federation<'a> {
    pub cfg: RunConfig,
    pub data: &'a MultimodalDataset,
    pub topology: Topology,
    pub clients: Vec<ClientSpec>,
}

impl<'a> Federation<'a> {
    /// Partitions the training split and assigns modalities from the master seed.
    pub fn new(cfg: &RunConfig, data: &'a MultimodalDataset) -> Result<Self> {
        check_config(cfg)?;
        let partition = dirichlet_partition(
            &data.train_labels(),
            cfg.n_clients,
            cfg.dirichlet_alpha,
            derive_seed(cfg.seed, &[stream::PARTITION]),
        )?;
        let modalities = assign_modalities(cfg.n_clients, cfg.missing_rate, derive_seed(cfg.seed, &[stream::MODALITY]))?;
        Self::from_parts(cfg, data, &partition, &modalities)
    }

    /// Uses a caller-provided partition and modality assignment.
    pub fn from_parts(
        cfg: &RunConfig,
        data: &'a MultimodalDataset,
        partition: &Partition,
        modalities: &[Modality],
    ) -> Result<Self> {
        check_config(cfg)?;
        let topology = cfg.topology();
        topology.validate()?;
        let spec = &data.spec;
        if spec.audio_dim != topology.audio_dim
            || spec.visual_dim != topology.visual_dim
            || spec.num_classes != topology.num_classes
        {
            return Err(Error::invalid("dataset dimensions disagree with the configured topology"));
        }
        if partition.n_clients() != cfg.n_clients {
            return Err(Error::invalid(format!(
                "partition has {} shards for {} clients",
                partition.n_clients(),
                cfg.n_clients
            )));
        }
        let clients = build_clients(partition, modalities)?;
        Ok(Self {
            cfg: cfg.clone(),
            data,
            topology,
            clients,
        })
    }

    pub fn client(&self, id: usize) -> &ClientSpec {
        &self.clients[id]
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.clients.iter().filter(|c| c.modality == modality).count()
    }

    pub fn init_params(&self) -> Result<ParamSet> {
        init_params(&self.topology, self.cfg.seed)
    }

    fn ctx(phase: Phase, round: usize) -> RoundCtx {
        RoundCtx { phase, round }
    }
}

fn check_config(cfg: &RunConfig) -> Result<()> {
    let errs = cfg.check_runnable();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Runs `train` for each client concurrently and returns results in input order.
pub(crate) fn train_all<T, F>(jobs: &[(&ClientSpec, ParamSet)], train: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ClientSpec, &ParamSet) -> Result<T> + Sync,
{
    jobs.par_iter().map(|(c, p)| train(c, p)).collect()
}

pub(crate) fn mean_loss(updates: &[ClientUpdate]) -> Option<f64> {
    if updates.is_empty() {
        return None;
    }
    Some(updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64)
}

/// Audio top-1 and top-k on the test split.
pub fn evaluate_audio(model: &UnimodalModel, data: &MultimodalDataset, k: usize) -> Result<(f64, f64)> {
    let logits = data
        .test
        .iter()
        .map(|s| model.logits(&s.audio))
        .collect::<Result<Vec<_>>>()?;
    let labels = data.test_labels();
    Ok((topk_accuracy(&logits, &labels, 1)?, topk_accuracy(&logits, &labels, k)?))
}

/// Late-fusion top-1 on the test split.
pub fn evaluate_multimodal(model: &MultimodalModel, data: &MultimodalDataset) -> Result<f64> {
    let logits = data
        .test
        .iter()
        .map(|s| model.forward_pair(&s.audio, &s.visual).map(|(z, _)| z))
        .collect::<Result<Vec<_>>>()?;
    topk_accuracy(&logits, &data.test_labels(), 1)
}

/// Per-class scores of an audio model on the test split.
pub fn audio_class_report(model: &UnimodalModel, data: &MultimodalDataset) -> Result<ClassReport> {
    let preds = data
        .test
        .iter()
        .map(|s| model.logits(&s.audio).map(|z| argmax(&z)))
        .collect::<Result<Vec<_>>>()?;
    class_f1(&preds, &data.test_labels(), data.spec.num_classes)
}

pub(crate) fn round_metrics(
    fed: &Federation,
    round: usize,
    stage: u8,
    audio: &UnimodalModel,
    fusion: Option<&MultimodalModel>,
    train_loss: Option<f64>,
) -> Result<RoundMetrics> {
    let (audio_top1, audio_topk) = evaluate_audio(audio, fed.data, fed.cfg.topk)?;
    let multimodal_top1 = fusion.map(|m| evaluate_multimodal(m, fed.data)).transpose()?;
    Ok(RoundMetrics {
        round,
        stage,
        audio_top1,
        audio_topk,
        multimodal_top1,
        train_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Output {
    pub global: ParamSet,
    pub history: Vec<RoundMetrics>,
    pub audit: ChannelAudit,
}

/// Modality-aware FL. Audio-only clients receive and train the audio blocks;
/// multimodal clients train both encoders and the fusion head.
pub fn run_stage1(fed: &Federation, init: ParamSet) -> Result<Stage1Output> {
    init.check_shapes(&fed.topology)?;
    let cfg = &fed.cfg;
    let mut global = init;
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut audit = ChannelAudit::default();
    for round in 0..cfg.rounds {
        let sample = sample_round_clients(round, &fed.clients, cfg.clients_per_round, cfg.seed, Phase::ModalityAware)?;
        let jobs = stage1_payloads(fed, &global, &sample, &mut audit);
        let ctx = Federation::ctx(Phase::ModalityAware, round);
        let updates = train_all(&jobs, |c, p| match c.modality {
            Modality::AudioOnly => train_audio_on_shard(p, c, fed.data, cfg, &fed.topology, ctx),
            Modality::Multimodal => train_fusion_on_shard(p, c, fed.data, cfg, &fed.topology, ctx, false),
        })?;
        audit.receive(updates.len());
        for u in &updates {
            audit.credit_audio_model(u.modality, 1);
        }
        global = aggregate_stage1(&global, &updates, cfg.weighting)?;
        history.push(round_metrics(
            fed,
            round,
            1,
            &global.audio_model(&fed.topology)?,
            Some(&global.multimodal_model(&fed.topology)?),
            mean_loss(&updates),
        )?);
    }
    Ok(Stage1Output { global, history, audit })
}

fn stage1_payloads<'f>(
    fed: &'f Federation,
    global: &ParamSet,
    sample: &RoundSample,
    audit: &mut ChannelAudit,
) -> Vec<(&'f ClientSpec, ParamSet)> {
    let mut ids: Vec<usize> = sample.audio_only.iter().chain(&sample.multimodal).copied().collect();
    ids.sort_unstable();
    ids.into_iter()
        .map(|id| {
            let c = fed.client(id);
            let payload = match c.modality {
                Modality::AudioOnly => global.audio_view(),
                Modality::Multimodal => global.clone(),
            };
            (c, audit.deliver(c, payload))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Output {
    /// Audio encoder and audio head only.
    pub student: ParamSet,
    pub history: Vec<RoundMetrics>,
    pub audit: ChannelAudit,
}

/// Federated distillation from a frozen multimodal teacher into the audio
/// student. Each round draws from the full population and trains only its
/// multimodal members. Rounds that draw no multimodal client leave the
/// student unchanged.
pub fn run_stage2(fed: &Federation, teacher: &ParamSet, student_init: ParamSet) -> Result<Stage2Output> {
    let cfg = &fed.cfg;
    let topology = &fed.topology;
    if cfg.rounds > 0 && fed.count(Modality::Multimodal) == 0 {
        return Err(Error::Strategy(
            "distillation needs at least one multimodal client, but the missing rate leaves none".into(),
        ));
    }
    let teacher_model = teacher.multimodal_model(topology)?;
    let mut student = student_init.audio_view();
    student.audio_model(topology)?;
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut audit = ChannelAudit::default();
    for round in 0..cfg.rounds {
        let sample = sample_round_clients(round, &fed.clients, cfg.clients_per_round, cfg.seed, Phase::Distillation)?;
        let jobs: Vec<(&ClientSpec, ParamSet)> = sample
            .multimodal
            .iter()
            .map(|&id| {
                let c = fed.client(id);
                (c, audit.deliver(c, student.clone()))
            })
            .collect();
        let ctx = Federation::ctx(Phase::Distillation, round);
        let updates = train_all(&jobs, |c, p| {
            distill_with_teacher(p, &teacher_model, c, fed.data, cfg, topology, ctx)
        })?;
        audit.receive(updates.len());
        if !updates.is_empty() {
            let divisor = match cfg.stage2_divisor {
                Stage2Divisor::Contributors => None,
                Stage2Divisor::AudioCohort => {
                    if sample.audio_only.is_empty() {
                        return Err(Error::Strategy(format!(
                            "round {round} drew no audio-only client, so the audio-cohort divisor is zero"
                        )));
                    }
                    Some(sample.audio_only.len())
                }
            };
            audit.credit_audio_model(Modality::Multimodal, updates.len());
            student = aggregate_stage2(&student, &updates, cfg.weighting, divisor)?;
        }
        history.push(round_metrics(
            fed,
            round,
            2,
            &student.audio_model(topology)?,
            Some(&teacher_model),
            mean_loss(&updates),
        )?);
    }
    Ok(Stage2Output { student, history, audit })
}

/// Starting point of the distillation student.
pub fn stage2_init(fed: &Federation, stage1: &ParamSet) -> Result<ParamSet> {
    match fed.cfg.stage2_init {
        Stage2Init::Warm => Ok(stage1.audio_view()),
        Stage2Init::Cold => {
            let mut p = ParamSet::default();
            for block in [Block::AudioEncoder, Block::AudioHead] {
                *p.slot(block) = Some(init_block(&fed.topology, block, fed.cfg.seed, COLD_START_SALT)?);
            }
            Ok(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorOutput {
    /// Distilled audio encoder and head.
    pub audio_model: ParamSet,
    /// Frozen stage-1 global model.
    pub teacher: ParamSet,
    /// Stage-1 rounds followed by stage-2 rounds.
    pub history: Vec<RoundMetrics>,
    pub stage1_audit: ChannelAudit,
    pub stage2_audit: ChannelAudit,
}

/// Full two-stage run: modality-aware FL, then distillation into the audio model.
pub fn run_modality_mirror(fed: &Federation) -> Result<MirrorOutput> {
    let s1 = run_stage1(fed, fed.init_params()?)?;
    let teacher = s1.global;
    let s2 = run_stage2(fed, &teacher, stage2_init(fed, &teacher)?)?;
    let mut history = s1.history;
    history.extend(s2.history);
    Ok(MirrorOutput {
        audio_model: s2.student,
        teacher,
        history,
        stage1_audit: s1.audit,
        stage2_audit: s2.audit,
    })
}
