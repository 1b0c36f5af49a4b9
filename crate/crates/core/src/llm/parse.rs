//! Parsers for model replies. None of them panic on arbitrary input.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::clamp_score;

static TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<\s*(count|choice|reason|score)\s*>(.*?)<\s*/\s*(count|choice|reason|score)\s*>")
        .expect("valid regex")
});

static ENTITY_SCORE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)score\s*[:=：]\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)").expect("valid regex")
});

static ANSWER_LEAD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the\s+(?:possible\s+)?answers?\s+(?:is|are)\s*:?").expect("valid regex"));

static PATH_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<PATH>(.*?)</PATH>").expect("valid regex"));

static PLAN_SEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<SEP>|->|→|,").expect("valid regex"));

static SCORE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<\s*score\s*>(.*?)<\s*/\s*score\s*>").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedEntry {
    pub choice: String,
    pub reason: Option<String>,
    pub score: f64,
    pub remaining_count: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaggedScoreReply {
    pub entries: Vec<TaggedEntry>,
}

#[derive(Default)]
struct Pending {
    count: Option<i64>,
    choice: String,
    reason: Option<String>,
    score: Option<Option<f64>>,
}

/// Reads the `<count>/<choice>/<reason>/<score>` grammar.
///
/// Entries without a numeric score are dropped, `<reason>` is optional,
/// scores are clamped into `[0, 1]`, counts are forced to strictly decrease
/// from `budget`, and parsing stops once the count would reach 0.
pub fn parse_tagged_scores(reply: &str, budget: usize) -> Result<TaggedScoreReply> {
    let budget = i64::try_from(budget).unwrap_or(i64::MAX);
    let mut entries: Vec<TaggedEntry> = Vec::new();
    let mut pending_count: Option<i64> = None;
    let mut current: Option<Pending> = None;
    let mut stopped = false;

    let finish = |p: Pending, entries: &mut Vec<TaggedEntry>, stopped: &mut bool| {
        if *stopped {
            return;
        }
        let Some(Some(score)) = p.score else { return };
        if p.choice.is_empty() {
            return;
        }
        let ceiling = entries.last().map_or(budget, |e| e.remaining_count - 1);
        let count = match p.count {
            Some(c) if c <= ceiling => c,
            _ => ceiling,
        };
        if count <= 0 {
            *stopped = true;
            return;
        }
        entries.push(TaggedEntry {
            choice: p.choice,
            reason: p.reason,
            score: clamp_score(score),
            remaining_count: count,
        });
    };

    for cap in TAG.captures_iter(reply) {
        let open = cap[1].to_ascii_lowercase();
        if open != cap[3].to_ascii_lowercase() {
            continue;
        }
        let body = cap[2].trim();
        match open.as_str() {
            "count" => {
                if let Some(p) = current.take() {
                    finish(p, &mut entries, &mut stopped);
                }
                pending_count = body.parse::<i64>().ok();
            }
            "choice" => {
                if let Some(p) = current.take() {
                    finish(p, &mut entries, &mut stopped);
                }
                current = Some(Pending {
                    count: pending_count.take(),
                    choice: body.to_string(),
                    ..Pending::default()
                });
            }
            "reason" => {
                if let Some(p) = current.as_mut() {
                    p.reason.get_or_insert_with(|| body.to_string());
                }
            }
            _ => {
                if let Some(p) = current.as_mut() {
                    if p.score.is_none() {
                        p.score = Some(body.parse::<f64>().ok().filter(|s| s.is_finite()));
                    }
                }
            }
        }
        if stopped {
            break;
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut entries, &mut stopped);
    }
    entries.truncate(usize::try_from(budget).unwrap_or(usize::MAX));
    if entries.is_empty() {
        return Err(Error::Reply("no <choice>/<score> entries found".into()));
    }
    Ok(TaggedScoreReply { entries })
}

/// Extracts the `Score:` field of an entity-scoring reply, clamped.
pub fn parse_entity_score(reply: &str) -> Result<f64> {
    let cap = ENTITY_SCORE
        .captures(reply)
        .ok_or_else(|| Error::Reply("no Score field".into()))?;
    let value: f64 = cap[1]
        .parse()
        .map_err(|_| Error::Reply(format!("bad score `{}`", &cap[1])))?;
    Ok(clamp_score(value))
}

/// Splits an answer-prediction reply into answer strings, in order.
///
/// Accepts an optional "The answer is" lead, bracketed lists, and comma,
/// semicolon, newline or "and" separators.
pub fn parse_answer_list(reply: &str) -> Vec<String> {
    let body = match ANSWER_LEAD.find(reply) {
        Some(m) => reply[m.end()..].lines().next().unwrap_or(""),
        None => reply,
    };
    let mut out: Vec<String> = Vec::new();
    for line in body.lines() {
        for piece in line.split([',', ';']) {
            for part in piece.split(" and ") {
                let item = clean_item(part);
                if !item.is_empty() && !out.iter().any(|o| o == &item) {
                    out.push(item);
                }
            }
        }
    }
    out
}

fn clean_item(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let before = s;
        s = s.trim_start_matches(['-', '*', '•', '[', '(']).trim();
        s = s.trim_end_matches([']', ')', '.']).trim();
        s = s.trim_matches(['"', '\'', '`']).trim();
        if let Some((num, rest)) = s.split_once(". ") {
            if !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()) {
                s = rest.trim();
            }
        }
        if s == before {
            break;
        }
    }
    s.to_string()
}

/// One plan read from a plan-generation reply.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPlan {
    pub relations: Vec<String>,
    /// Per-relation scores, where the reply gave one.
    pub scores: Vec<Option<f64>>,
}

/// Reads `<PATH> r1 <SEP> r2 </PATH>` blocks, or one plan per line when no
/// blocks are present. Relations may carry a trailing `<score>x</score>`.
pub fn parse_plan_reply(reply: &str) -> Vec<RawPlan> {
    let blocks: Vec<&str> = if PATH_BLOCK.is_match(reply) {
        PATH_BLOCK
            .captures_iter(reply)
            .map(|c| c.get(1).map_or("", |m| m.as_str()))
            .collect()
    } else {
        reply.lines().collect()
    };
    let mut out = Vec::new();
    for block in blocks {
        let mut relations = Vec::new();
        let mut scores = Vec::new();
        for piece in PLAN_SEP.split(block) {
            let score = SCORE_TAG
                .captures(piece)
                .and_then(|c| c[1].trim().parse::<f64>().ok())
                .filter(|s| s.is_finite())
                .map(clamp_score);
            let label = SCORE_TAG.replace_all(piece, "");
            let label = clean_item(&label);
            if label.is_empty() || label.contains(char::is_whitespace) {
                continue;
            }
            relations.push(label);
            scores.push(score);
        }
        if !relations.is_empty() {
            out.push(RawPlan { relations, scores });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_entry_example() {
        let reply = "<count>2</count><choice>r1</choice><score>0.9</score>\
                     <count>1</count><choice>r2</choice><score>0.4</score>";
        let got = parse_tagged_scores(reply, 2).unwrap();
        let pairs: Vec<(&str, f64, i64)> = got
            .entries
            .iter()
            .map(|e| (e.choice.as_str(), e.score, e.remaining_count))
            .collect();
        assert_eq!(pairs, vec![("r1", 0.9, 2), ("r2", 0.4, 1)]);
    }

    #[test]
    fn truncates_at_budget_and_clamps() {
        let reply = "<count>3</count><choice>a</choice><score>1.7</score>\
                     <count>2</count><choice>b</choice><score>0.5</score>\
                     <count>1</count><choice>c</choice><score>0.1</score>";
        let got = parse_tagged_scores(reply, 2).unwrap();
        assert_eq!(got.entries.len(), 2);
        assert_eq!(got.entries[0].score, 1.0);
    }

    #[test]
    fn entity_score_formats() {
        assert_eq!(
            parse_entity_score("{Candidate Entity:m.0g9lr08,Score:0.93}").unwrap(),
            0.93
        );
        assert_eq!(parse_entity_score("Score: 0").unwrap(), 0.0);
        assert!(parse_entity_score("no idea").is_err());
    }

    #[test]
    fn answer_lists() {
        assert_eq!(parse_answer_list("The answer is B"), ["B"]);
        assert_eq!(
            parse_answer_list("The answers are Brussels, Evere."),
            ["Brussels", "Evere"]
        );
        assert_eq!(parse_answer_list("[\"A\", \"B\"]"), ["A", "B"]);
        assert_eq!(parse_answer_list("1. Oslo\n2. Bergen"), ["Oslo", "Bergen"]);
        assert!(parse_answer_list("   ").is_empty());
    }

    #[test]
    fn plan_replies() {
        let got = parse_plan_reply(
            "<PATH> organization.headquarters <score>0.9</score> <SEP> mailing_address.citytown </PATH>\n\
             <PATH>organizations_founded</PATH>",
        );
        assert_eq!(got.len(), 2);
        assert_eq!(
            got[0].relations,
            ["organization.headquarters", "mailing_address.citytown"]
        );
        assert_eq!(got[0].scores, [Some(0.9), None]);
        let lines = parse_plan_reply("a.b -> c.d\n\nsome prose here\n");
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].relations, ["a.b", "c.d"]);
    }
}
