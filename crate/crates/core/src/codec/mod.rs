//! Codebooks, framing and decoders.
//!
//! Messages are indexed from 0, so the fallback message is message 0.

pub(crate) mod codebook;
mod decoder;
mod explain;
mod frame;
mod identify;
pub(crate) mod joint;
pub(crate) mod mmi;

pub use codebook::{
    generate_codebook, realizable_counts, verify_nice_code, Codebook, NiceBound, NiceCodeReport,
};
pub use decoder::{combine_frame_outcomes, Decoder, IdentifyDecoder, JointDecoder, MmiDecoder};
pub use explain::{state_explanation_search, Explanation, SearchMode, StateSelector, DEFAULT_SEARCH_BUDGET};
pub use frame::{frame_decode, frame_encode, training_length, training_sequence, TransmissionFrame};
pub use identify::{hull_deviation, identify_state, IdentifyReport};
pub use joint::{decode_and, decode_com, decode_or, JointDecodeReport, JointOptions, DEFAULT_ETA};
pub use mmi::{empirical_mutual_information, mmi_decode, mmi_statistics, MmiReport};

use crate::channel::Family;
use crate::error::{CavcError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Com,
    And,
    Or,
    Identify,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Com => "com",
            Task::And => "and",
            Task::Or => "or",
            Task::Identify => "identify",
        })
    }
}

impl FromStr for Task {
    type Err = CavcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "com" => Ok(Task::Com),
            "and" => Ok(Task::And),
            "or" => Ok(Task::Or),
            "identify" => Ok(Task::Identify),
            other => Err(CavcError::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Decoder output, shaped by the task's output set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Message { message: usize },
    MessageState { message: usize, state: Family },
    State { state: Family },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictFlag {
    /// More than one candidate satisfied the decoding rule.
    Ambiguous,
    /// No candidate satisfied the decoding rule.
    NoCandidate,
    /// Or-task configuration the decoding rule leaves undefined.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub task: Task,
    pub payload: Payload,
    /// True when the payload is the default rather than a decoded value.
    pub fallback: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<VerdictFlag>,
}

impl Verdict {
    pub fn message(task: Task, message: usize) -> Self {
        Verdict {
            task,
            payload: Payload::Message { message },
            fallback: false,
            flags: Vec::new(),
        }
    }

    pub fn message_state(message: usize, state: Family) -> Self {
        Verdict {
            task: Task::And,
            payload: Payload::MessageState { message, state },
            fallback: false,
            flags: Vec::new(),
        }
    }

    pub fn state(task: Task, state: Family) -> Self {
        Verdict {
            task,
            payload: Payload::State { state },
            fallback: false,
            flags: Vec::new(),
        }
    }

    /// The task's default payload, marked as a fallback with `flag`.
    pub fn fallback(task: Task, flag: VerdictFlag) -> Self {
        let payload = match task {
            Task::Com => Payload::Message { message: 0 },
            Task::And => Payload::MessageState {
                message: 0,
                state: Family::One,
            },
            Task::Or | Task::Identify => Payload::State { state: Family::One },
        };
        Verdict {
            task,
            payload,
            fallback: true,
            flags: vec![flag],
        }
    }

    pub fn decoded_message(&self) -> Option<usize> {
        match self.payload {
            Payload::Message { message } | Payload::MessageState { message, .. } => Some(message),
            Payload::State { .. } => None,
        }
    }

    pub fn decoded_state(&self) -> Option<Family> {
        match self.payload {
            Payload::MessageState { state, .. } | Payload::State { state } => Some(state),
            Payload::Message { .. } => None,
        }
    }

    /// Whether this output lies in the task's error set for message `sent`
    /// under compound state `active`.
    pub fn is_error(&self, sent: usize, active: Family) -> bool {
        match self.task {
            Task::Com => self.decoded_message() != Some(sent),
            Task::And => self.payload
                != Payload::MessageState {
                    message: sent,
                    state: active,
                },
            Task::Or => !(self.decoded_message() == Some(sent) || self.decoded_state() == Some(active)),
            Task::Identify => self.decoded_state() != Some(active),
        }
    }

    /// Whether the output names a message other than `sent`.
    pub fn is_wrong_message(&self, sent: usize) -> bool {
        matches!(self.decoded_message(), Some(m) if m != sent)
    }
}
