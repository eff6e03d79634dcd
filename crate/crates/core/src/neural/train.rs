use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::Shape;
use super::net::{cross_entropy, InceptionNet, Mode, NetConfig, SeqBatch};
use crate::container::{read_container, write_container};
use crate::data::{to_fixed_length, ScanpathSample};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::numeric::{argmax, softmax_in_place, RngState};

const MAGIC: &[u8; 8] = b"GZAUGITC";

/// Per-channel standardisation fitted on training fixations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(samples: &[ScanpathSample]) -> Self {
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for c in 0..4 {
            let v: Vec<f64> = samples.iter().flat_map(|s| s.channel(c)).collect();
            let m = crate::numeric::mean(&v);
            let sd = crate::numeric::std_pop(&v);
            mean.push(if m.is_finite() { m } else { 0.0 });
            std.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { mean, std }
    }
}

/// Nearest-rank 95th percentile of the sequence lengths (at least 1).
pub fn seq_len_p95(samples: &[ScanpathSample]) -> usize {
    let mut l: Vec<usize> = samples.iter().map(ScanpathSample::len).collect();
    if l.is_empty() {
        return 1;
    }
    l.sort_unstable();
    let rank = ((0.95 * l.len() as f64).ceil() as usize).clamp(1, l.len());
    l[rank - 1].max(1)
}

/// Standardised fixed-length sequences, one `4 × t` block per sample.
#[derive(Debug, Clone)]
pub struct SeqSet {
    pub t: usize,
    pub values: Vec<Vec<f64>>,
    pub masks: Vec<Vec<f64>>,
}

impl SeqSet {
    pub fn from_samples(samples: &[ScanpathSample], t: usize, st: &Standardizer) -> Self {
        let (mut values, mut masks) = (Vec::new(), Vec::new());
        for s in samples {
            let mut f = to_fixed_length(s, t);
            for c in 0..4 {
                for p in 0..t {
                    if f.mask[p] != 0.0 {
                        let v = &mut f.values[c * t + p];
                        *v = (*v - st.mean[c]) / st.std[c];
                    }
                }
            }
            values.push(f.values);
            masks.push(f.mask);
        }
        SeqSet { t, values, masks }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Gathers rows `idx` into network layout.
    pub fn batch(&self, idx: &[usize]) -> SeqBatch {
        let t = self.t;
        let b = idx.len();
        let n = b * t;
        let mut values = vec![0.0; 4 * n];
        let mut mask = Vec::with_capacity(n);
        for (j, &i) in idx.iter().enumerate() {
            for c in 0..4 {
                values[c * n + j * t..c * n + (j + 1) * t].copy_from_slice(&self.values[i][c * t..(c + 1) * t]);
            }
            mask.extend_from_slice(&self.masks[i]);
        }
        SeqBatch {
            shape: Shape { b, t },
            channels: 4,
            values,
            mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "epochs, batch size and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Mini-batch Adam on mean cross-entropy; the epoch order is a fresh
/// shuffle from `rng`. Returns the per-epoch mean loss.
pub fn train(
    net: &mut InceptionNet,
    data: &SeqSet,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() || data.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} sequences for {} labels",
            data.len(),
            labels.len()
        )));
    }
    let k = net.config.n_classes;
    let mut opt = Adam::new(net.param_count(), cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = net.forward(&batch, Mode::Train)?;
            let (loss, dlogits) = cross_entropy(&logits, &y, k);
            if !loss.is_finite() {
                return Err(Error::NumericalDivergence {
                    epoch,
                    what: "cross-entropy",
                });
            }
            let grads = net.backward(&batch, &cache, &dlogits);
            opt.step(&mut net.params, &grads);
            net.update_running(&cache, &batch);
            total += loss * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        log::debug!("cnn epoch {epoch}: loss {mean:.4}");
        trace.push(mean);
    }
    Ok(trace)
}

/// Class probabilities in evaluation mode.
pub fn predict_proba(net: &InceptionNet, data: &SeqSet) -> Result<Vec<Vec<f64>>> {
    let k = net.config.n_classes;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(64) {
        let (logits, _) = net.forward(&data.batch(chunk), Mode::Eval)?;
        for row in logits.chunks(k) {
            let mut p = row.to_vec();
            softmax_in_place(&mut p);
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub net: NetConfig,
    pub train: TrainConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 5,
            net: NetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InceptionEnsemble {
    pub config: EnsembleConfig,
    pub standardizer: Standardizer,
    pub seq_len: usize,
    pub members: Vec<InceptionNet>,
    /// Per member, per epoch training loss.
    pub loss_traces: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    config: EnsembleConfig,
    standardizer: Standardizer,
    seq_len: usize,
    bn_channels: Vec<usize>,
    loss_traces: Vec<Vec<f64>>,
}

/// Trains `config.members` networks; member `m` is initialised and
/// shuffled by `rng.split(m)`. Members train in parallel.
pub fn fit_ensemble(
    samples: &[ScanpathSample],
    labels: &[usize],
    config: &EnsembleConfig,
    rng: &RngState,
) -> Result<InceptionEnsemble> {
    if config.members == 0 {
        return Err(Error::InvalidConfig("an ensemble needs at least one member".into()));
    }
    config.net.validate()?;
    config.train.validate()?;
    let standardizer = Standardizer::fit(samples);
    let seq_len = seq_len_p95(samples);
    let data = SeqSet::from_samples(samples, seq_len, &standardizer);
    let fitted: Vec<(InceptionNet, Vec<f64>)> = (0..config.members)
        .into_par_iter()
        .map(|m| {
            let mut r = rng.split(m as u64);
            let mut net = InceptionNet::new(config.net.clone(), &mut r)?;
            let trace = train(&mut net, &data, labels, &config.train, &mut r)?;
            Ok((net, trace))
        })
        .collect::<Result<_>>()?;
    let (members, loss_traces) = fitted.into_iter().unzip();
    Ok(InceptionEnsemble {
        config: config.clone(),
        standardizer,
        seq_len,
        members,
        loss_traces,
    })
}

impl InceptionEnsemble {
    pub fn prepare(&self, samples: &[ScanpathSample]) -> SeqSet {
        SeqSet::from_samples(samples, self.seq_len, &self.standardizer)
    }

    /// Mean of the members' softmax outputs.
    pub fn predict_proba(&self, samples: &[ScanpathSample]) -> Result<Vec<Vec<f64>>> {
        let data = self.prepare(samples);
        let mut acc: Option<Vec<Vec<f64>>> = None;
        for net in &self.members {
            let p = predict_proba(net, &data)?;
            match &mut acc {
                None => acc = Some(p),
                Some(a) => a
                    .iter_mut()
                    .flatten()
                    .zip(p.iter().flatten())
                    .for_each(|(x, y)| *x += y),
            }
        }
        let m = self.members.len() as f64;
        let mut out = acc.unwrap_or_default();
        out.iter_mut().flatten().for_each(|v| *v /= m);
        Ok(out)
    }

    pub fn predict(&self, samples: &[ScanpathSample]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(samples)?.iter().map(|p| argmax(p)).collect())
    }

    /// Binary weight file: JSON header, then per member its parameters,
    /// running means and running variances as `f64` blobs.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let meta = EnsembleMeta {
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
            seq_len: self.seq_len,
            bn_channels: self.members[0].bn_channels().to_vec(),
            loss_traces: self.loss_traces.clone(),
        };
        let flat: Vec<(Vec<f64>, Vec<f64>)> = self
            .members
            .iter()
            .map(|n| (n.running_mean.concat(), n.running_var.concat()))
            .collect();
        let mut blobs: Vec<&[f64]> = Vec::new();
        for (n, (rm, rv)) in self.members.iter().zip(&flat) {
            blobs.extend([n.params.as_slice(), rm.as_slice(), rv.as_slice()]);
        }
        write_container(w, MAGIC, &meta, &blobs)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (meta, blobs): (EnsembleMeta, _) = read_container(r, MAGIC)?;
        if blobs.len() != 3 * meta.config.members {
            return Err(Error::Format(format!(
                "{} weight blobs for {} members",
                blobs.len(),
                meta.config.members
            )));
        }
        let unflatten = |v: &[f64]| -> Result<Vec<Vec<f64>>> {
            if v.len() != meta.bn_channels.iter().sum::<usize>() {
                return Err(Error::Format("running statistics have the wrong length".into()));
            }
            let mut out = Vec::new();
            let mut at = 0;
            for &c in &meta.bn_channels {
                out.push(v[at..at + c].to_vec());
                at += c;
            }
            Ok(out)
        };
        let mut members = Vec::new();
        for m in blobs.chunks(3) {
            members.push(
                InceptionNet::from_parts(meta.config.net.clone(), m[0].clone(), unflatten(&m[1])?, unflatten(&m[2])?)
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        Ok(InceptionEnsemble {
            config: meta.config,
            standardizer: meta.standardizer,
            seq_len: meta.seq_len,
            members,
            loss_traces: meta.loss_traces,
        })
    }

    /// `member,epoch,loss` rows.
    pub fn write_loss_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["member", "epoch", "loss"])?;
        for (m, trace) in self.loss_traces.iter().enumerate() {
            for (e, l) in trace.iter().enumerate() {
                out.write_record([m.to_string(), e.to_string(), l.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
