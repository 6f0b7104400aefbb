//! Reading yes/no completions as availability verdicts.
//!
//! The prompt asks whether the part is available, so a leading `yes` means
//! available and a leading `no` means obsolete. Anything else is an
//! abstention, tagged with why.

use serde::{Deserialize, Serialize};

use crate::gateway::RawResponse;
use crate::label::{PartState, RowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Available,
    Obsolete,
    Abstain,
}

impl Prediction {
    pub fn state(self) -> Option<PartState> {
        match self {
            Prediction::Available => Some(PartState::Available),
            Prediction::Obsolete => Some(PartState::Obsolete),
            Prediction::Abstain => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    MatchedYes,
    MatchedNo,
    NoMatch,
    TransportFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub row_id: RowId,
    pub state: Prediction,
    pub raw: String,
    pub reason: VerdictReason,
}

impl Verdict {
    pub fn is_abstention(&self) -> bool {
        self.state == Prediction::Abstain
    }
}

fn is_leading_noise(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '‘' | '’' | '“' | '”' | '«' | '»')
}

/// Splits off the leading run of letters.
fn first_token(text: &str) -> (&str, &str) {
    let end = text.find(|c: char| !c.is_alphabetic()).unwrap_or(text.len());
    text.split_at(end)
}

fn other_cue(cue: &str) -> &'static str {
    if cue == "yes" {
        "no"
    } else {
        "yes"
    }
}

/// True for openings like `yes/no` or `no or yes`.
fn offers_both_cues(cue: &str, rest: &str) -> bool {
    let rest = rest.trim_start();
    let after_sep = if let Some(r) = rest.strip_prefix('/') {
        r
    } else {
        match first_token(rest) {
            ("or", r) => r,
            _ => return false,
        }
    };
    first_token(after_sep.trim_start()).0 == other_cue(cue)
}

fn classify_text(text: &str) -> VerdictReason {
    let lowered = text.to_lowercase();
    let (token, rest) = first_token(lowered.trim_start_matches(is_leading_noise));
    match token {
        "yes" | "no" if offers_both_cues(token, rest) => VerdictReason::NoMatch,
        "yes" => VerdictReason::MatchedYes,
        "no" => VerdictReason::MatchedNo,
        _ => VerdictReason::NoMatch,
    }
}

pub fn parse_response(response: &RawResponse) -> Verdict {
    let reason = if response.transport_status.is_ok() {
        classify_text(&response.completion_text)
    } else {
        VerdictReason::TransportFailure
    };
    let state = match reason {
        VerdictReason::MatchedYes => Prediction::Available,
        VerdictReason::MatchedNo => Prediction::Obsolete,
        VerdictReason::NoMatch | VerdictReason::TransportFailure => Prediction::Abstain,
    };
    Verdict { row_id: response.row_id.clone(), state, raw: response.completion_text.clone(), reason }
}
