//! Resumable training state.
//!
//! A checkpoint directory holds `params/` (the current parameters in the
//! numerics archive format, f32), `state.bin` (exact f64 parameters, Adam
//! moments, best-so-far parameters and loop counters) and `history.csv`.
//! The archive is for inspection and evaluation; resuming reads `state.bin`
//! so a resumed run continues bit-for-bit.

use std::fs;
use std::path::Path;

use eventcast_numerics::{archive, ParameterSet, Tensor};
use serde::{Deserialize, Serialize};

use super::history::{read_history, write_history, HistoryRow};
use super::optimizer::Adam;
use crate::error::{CoreError, Result};

pub const STATE_MAGIC: &[u8; 8] = b"EVSTATE1";
pub const STATE_FILE: &str = "state.bin";
pub const PARAMS_DIR: &str = "params";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParameterSet,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    pub best: Option<Best>,
    /// Validation checks since the last improvement.
    pub bad_checks: usize,
    pub finished: bool,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub val_loss: f64,
    pub epoch: usize,
    pub params: ParameterSet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    epoch: usize,
    step: usize,
    adam_t: u64,
    bad_checks: usize,
    finished: bool,
    best_val: Option<f64>,
    best_epoch: Option<usize>,
    entries: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

fn push_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode(state: &TrainState) -> Result<Vec<u8>> {
    let header = Header {
        epoch: state.epoch,
        step: state.step,
        adam_t: state.adam.t,
        bad_checks: state.bad_checks,
        finished: state.finished,
        best_val: state.best.as_ref().map(|b| b.val_loss),
        best_epoch: state.best.as_ref().map(|b| b.epoch),
        entries: state
            .params
            .iter()
            .map(|(n, t, tr)| Entry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
                trainable: tr,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(STATE_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (name, t, _) in state.params.iter() {
        push_f64s(&mut buf, t.data());
        let zeros = vec![0.0; t.len()];
        push_f64s(&mut buf, state.adam.m.get(name).unwrap_or(&zeros));
        push_f64s(&mut buf, state.adam.v.get(name).unwrap_or(&zeros));
        if let Some(best) = &state.best {
            push_f64s(&mut buf, best.params.get(name)?.data());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CoreError::Format("truncated training state".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn decode(buf: &[u8], history: Vec<HistoryRow>) -> Result<TrainState> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != STATE_MAGIC {
        return Err(CoreError::Format("bad training-state magic".into()));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)?;
    let mut params = ParameterSet::new();
    let mut best_params = ParameterSet::new();
    let mut adam = Adam {
        t: header.adam_t,
        ..Adam::default()
    };
    for e in &header.entries {
        let n: usize = e.shape.iter().product();
        params.insert(e.name.clone(), Tensor::new(e.shape.clone(), r.f64s(n)?)?, e.trainable)?;
        adam.m.insert(e.name.clone(), r.f64s(n)?);
        adam.v.insert(e.name.clone(), r.f64s(n)?);
        if header.best_val.is_some() {
            best_params.insert(e.name.clone(), Tensor::new(e.shape.clone(), r.f64s(n)?)?, e.trainable)?;
        }
    }
    if r.pos != buf.len() {
        return Err(CoreError::Format("trailing bytes in training state".into()));
    }
    let best = match (header.best_val, header.best_epoch) {
        (Some(val_loss), Some(epoch)) => Some(Best {
            val_loss,
            epoch,
            params: best_params,
        }),
        _ => None,
    };
    let history: Vec<HistoryRow> = history.into_iter().filter(|h| h.step <= header.step).collect();
    Ok(TrainState {
        params,
        adam,
        epoch: header.epoch,
        step: header.step,
        best,
        bad_checks: header.bad_checks,
        finished: header.finished,
        history,
    })
}

pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    archive::save(&state.params, &dir.join(PARAMS_DIR))?;
    let path = dir.join(STATE_FILE);
    fs::write(&path, encode(state)?).map_err(|e| CoreError::io(&path, e))?;
    write_history(&dir.join(HISTORY_FILE), &state.history)
}

/// Loads a checkpoint directory. History rows past the checkpoint's step
/// are dropped.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let path = dir.join(STATE_FILE);
    let hist = dir.join(HISTORY_FILE);
    crate::io::require(&path)?;
    crate::io::require(&hist)?;
    let buf = fs::read(&path).map_err(|e| CoreError::io(&path, e))?;
    let history = read_history(&hist)?;
    decode(&buf, history)
}
