//! Negative sets for the causal loss: rewrites of the event itself plus the
//! nearest-dated real event of every other type.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::generate::CounterfactualRecord;
use crate::corpus::{EventScript, EventType};
use crate::error::{CoreError, Result};

pub const DEFAULT_IDENTICAL: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiverseRef {
    pub event_id: String,
    pub event_type: EventType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub event_id: String,
    pub identical: Vec<CounterfactualRecord>,
    pub diverse: Vec<DiverseRef>,
}

impl CounterfactualSet {
    pub fn len(&self) -> usize {
        self.identical.len() + self.diverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-type events sorted by release time, for nearest-date lookups.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    by_type: BTreeMap<EventType, Vec<EventScript>>,
    by_id: BTreeMap<String, EventScript>,
}

impl Registry {
    pub fn new(events: &[EventScript]) -> Self {
        let mut r = Registry::default();
        for e in events {
            r.by_type.entry(e.event_type).or_default().push(e.clone());
            r.by_id.insert(e.id.clone(), e.clone());
        }
        for list in r.by_type.values_mut() {
            list.sort_by(|a, b| (a.release_timestamp, &a.id).cmp(&(b.release_timestamp, &b.id)));
        }
        r
    }

    pub fn get(&self, id: &str) -> Option<&EventScript> {
        self.by_id.get(id)
    }

    pub fn events_of(&self, t: EventType) -> &[EventScript] {
        self.by_type.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Event of type `t` closest in time to `parent`; ties go to the earlier
    /// event.
    pub fn nearest(&self, parent: &EventScript, t: EventType) -> Option<&EventScript> {
        let list = self.events_of(t);
        let ts = parent.release_timestamp;
        let split = list.partition_point(|e| e.release_timestamp < ts);
        // Candidates: last event strictly before, and the first at-or-after.
        let before = split.checked_sub(1).map(|i| &list[i]);
        let after = list.get(split);
        match (before, after) {
            (Some(b), Some(a)) => {
                let db = ts - b.release_timestamp;
                let da = a.release_timestamp - ts;
                Some(if db <= da { first_at(list, b) } else { a })
            }
            (Some(b), None) => Some(first_at(list, b)),
            (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }
}

/// Earliest-listed event sharing `e`'s timestamp (stable tie order).
fn first_at<'a>(list: &'a [EventScript], e: &'a EventScript) -> &'a EventScript {
    let i = list.partition_point(|x| x.release_timestamp < e.release_timestamp);
    &list[i]
}

pub fn sample_counterfactuals(
    event: &EventScript,
    registry: &Registry,
    store: &[CounterfactualRecord],
    n_identical: usize,
) -> Result<CounterfactualSet> {
    let mut own: Vec<&CounterfactualRecord> = store
        .iter()
        .filter(|r| r.parent_event_id == event.id)
        .collect();
    if own.len() < n_identical {
        return Err(CoreError::Sampling(format!(
            "event `{}` has {} counterfactuals, need {n_identical}",
            event.id,
            own.len()
        )));
    }
    own.sort_by_key(|r| r.target_sentiment);
    let identical = own.into_iter().take(n_identical).cloned().collect();

    let mut diverse = Vec::with_capacity(EventType::ALL.len() - 1);
    for t in EventType::ALL.into_iter().filter(|&t| t != event.event_type) {
        let e = registry.nearest(event, t).ok_or_else(|| {
            CoreError::Sampling(format!("registry has no {} event", t.as_str()))
        })?;
        diverse.push(DiverseRef {
            event_id: e.id.clone(),
            event_type: t,
        });
    }
    Ok(CounterfactualSet {
        event_id: event.id.clone(),
        identical,
        diverse,
    })
}
