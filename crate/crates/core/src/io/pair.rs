//! View-selection lists: a view count, then per view its id, the number of
//! ranked sources and `(id score)` pairs, kept in file order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub reference: usize,
    pub sources: Vec<(usize, f64)>,
}

pub type PairList = Vec<PairEntry>;

pub fn parse_pair(text: &str, path: &str) -> Result<PairList> {
    let mut tokens = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let last_line = text.lines().count().max(1);
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| Error::parse(path, last_line, format!("unexpected end of file, expected {what}")))
    };
    let int = |(line, t): (usize, &str), what: &str| {
        t.parse::<usize>()
            .map_err(|_| Error::parse(path, line, format!("bad {what} {t:?}")))
    };
    let count = int(next("view count")?, "view count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let reference = int(next("view id")?, "view id")?;
        let n = int(next("source count")?, "source count")?;
        let mut sources = Vec::with_capacity(n);
        for _ in 0..n {
            let id = int(next("source id")?, "source id")?;
            let (line, t) = next("score")?;
            let score = t
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad score {t:?}")))?;
            sources.push((id, score));
        }
        out.push(PairEntry { reference, sources });
    }
    if let Some((line, t)) = tokens.next() {
        return Err(Error::parse(
            path,
            line,
            format!("more entries than the declared count, at {t:?}"),
        ));
    }
    Ok(out)
}

pub fn format_pair(list: &PairList) -> String {
    let mut s = format!("{}\n", list.len());
    for e in list {
        s += &format!("{}\n{}", e.reference, e.sources.len());
        for (id, score) in &e.sources {
            s += &format!(" {id} {score}");
        }
        s.push('\n');
    }
    s
}

pub fn read_pair(path: &Path) -> Result<PairList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pair(&text, &path.display().to_string())
}

pub fn write_pair(path: &Path, list: &PairList) -> Result<()> {
    fs::write(path, format_pair(list)).map_err(|e| Error::io(path, e))
}

/// Every other view, ranked by distance between camera centres (nearest
/// first, ties by id); score is the inverse distance.
pub fn nearest_pairs(centers: &[[f64; 3]]) -> PairList {
    (0..centers.len())
        .map(|r| {
            let mut s: Vec<(usize, f64)> = (0..centers.len())
                .filter(|&i| i != r)
                .map(|i| {
                    let d = (0..3)
                        .map(|k| (centers[i][k] - centers[r][k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (i, d)
                })
                .collect();
            s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            PairEntry {
                reference: r,
                sources: s
                    .into_iter()
                    .map(|(i, d)| (i, if d > 0.0 { 1.0 / d } else { 0.0 }))
                    .collect(),
            }
        })
        .collect()
}
