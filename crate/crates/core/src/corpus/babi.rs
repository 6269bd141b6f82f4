use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{normalize_answer, tokenize, StoryQA};
use crate::{Error, Result};

/// Parse bAbI text: numbered lines, where a number that does not increase
/// starts a new story. Question lines carry tab-separated question, answer
/// (comma-separated when several) and supporting line ids.
pub fn parse_babi<R: BufRead>(reader: R) -> Result<Vec<StoryQA>> {
    let mut out = Vec::new();
    let mut story = 0usize;
    let mut last_num = 0usize;
    // statements of the current story, with their line numbers
    let mut context: Vec<Vec<String>> = Vec::new();
    let mut line_to_ctx: HashMap<usize, usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let (num, rest) = line
            .trim_start()
            .split_once(' ')
            .ok_or_else(|| parse_err(lineno, "expected `<number> <text>`"))?;
        let num: usize = num
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad line number `{num}`")))?;
        if num == 0 {
            return Err(parse_err(lineno, "line numbers start at 1"));
        }
        if num <= last_num {
            story += 1;
            context.clear();
            line_to_ctx.clear();
        }
        last_num = num;

        if !rest.contains('\t') {
            line_to_ctx.insert(num, context.len());
            context.push(tokenize(rest));
            continue;
        }
        let mut fields = rest.split('\t');
        let question = tokenize(fields.next().unwrap_or_default());
        let answers: Vec<String> = fields
            .next()
            .unwrap_or_default()
            .split(',')
            .map(normalize_answer)
            .filter(|a| !a.is_empty())
            .collect();
        if answers.is_empty() {
            return Err(parse_err(lineno, "question line without an answer field"));
        }
        let mut supporting = Vec::new();
        if let Some(ids) = fields.next() {
            for id in ids.split_whitespace() {
                let id: usize = id
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad supporting id `{id}`")))?;
                let idx = line_to_ctx.get(&id).ok_or_else(|| {
                    parse_err(lineno, format!("supporting id {id} is not an earlier statement"))
                })?;
                supporting.push(*idx);
            }
        }
        out.push(StoryQA {
            id: format!("babi:{story}:{num}"),
            context: context.clone(),
            question,
            answers,
            supporting,
            answer_class: None,
            evidence: Vec::new(),
        });
    }
    Ok(out)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Write items back in bAbI format. Consecutive items from the same story
/// whose contexts extend each other are merged into one numbered story.
pub fn write_babi<W: Write>(items: &[StoryQA], mut w: W) -> Result<()> {
    let mut prev: Option<&StoryQA> = None;
    let mut num = 0usize;
    let mut ctx_lines: Vec<usize> = Vec::new();
    for item in items {
        let continues = prev.is_some_and(|p| {
            story_key(&p.id) == story_key(&item.id)
                && item.context.len() >= p.context.len()
                && item.context[..p.context.len()] == p.context[..]
        });
        let start = if continues {
            prev.map_or(0, |p| p.context.len())
        } else {
            num = 0;
            ctx_lines.clear();
            0
        };
        for s in &item.context[start..] {
            num += 1;
            ctx_lines.push(num);
            writeln!(w, "{num} {}.", s.join(" "))?;
        }
        num += 1;
        let support: Vec<String> = item.supporting.iter().map(|&i| ctx_lines[i].to_string()).collect();
        writeln!(
            w,
            "{num} {}?\t{}\t{}",
            item.question.join(" "),
            item.answers.join(","),
            support.join(" ")
        )?;
        prev = Some(item);
    }
    Ok(())
}

fn story_key(id: &str) -> &str {
    id.rsplit_once(':').map_or(id, |(k, _)| k)
}
