//! Call scripts: the sequence of procedure calls a process makes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CallKind {
    Poll,
    Signal,
    Wait,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScriptItem {
    /// Call Poll until one returns true, at most `max` times.
    Poll {
        max: Option<u32>,
    },
    Signal,
    Wait,
}

impl ScriptItem {
    pub fn kind(self) -> CallKind {
        match self {
            ScriptItem::Poll { .. } => CallKind::Poll,
            ScriptItem::Signal => CallKind::Signal,
            ScriptItem::Wait => CallKind::Wait,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Script(pub Vec<ScriptItem>);

impl Script {
    pub fn idle() -> Self {
        Script(Vec::new())
    }

    pub fn signal() -> Self {
        Script(vec![ScriptItem::Signal])
    }

    pub fn wait() -> Self {
        Script(vec![ScriptItem::Wait])
    }

    pub fn poll_until_true() -> Self {
        Script(vec![ScriptItem::Poll { max: None }])
    }

    pub fn polls(max: u32) -> Self {
        Script(vec![ScriptItem::Poll { max: Some(max) }])
    }

    pub fn then(mut self, item: ScriptItem) -> Self {
        self.0.push(item);
        self
    }

    pub fn items(&self) -> &[ScriptItem] {
        &self.0
    }

    pub fn is_idle(&self) -> bool {
        self.0.is_empty()
    }

    pub fn calls(&self, kind: CallKind) -> bool {
        self.0.iter().any(|i| i.kind() == kind)
    }

    /// The same script with every Wait replaced by an unbounded Poll loop.
    pub fn waits_as_polls(&self) -> Self {
        Script(
            self.0
                .iter()
                .map(|&i| match i {
                    ScriptItem::Wait => ScriptItem::Poll { max: None },
                    other => other,
                })
                .collect(),
        )
    }
}
