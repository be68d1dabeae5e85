use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;

use super::{Interactions, NoisyInteractions, SplitPair};
use crate::error::{Error, Result};

/// On-disk interaction formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    /// `<user> <item> <item> ...`, one user per line.
    #[default]
    AdjacencyList,
    /// `<user>\t<item>`, one pair per line.
    PairList,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" | "adjacency-list" | "adj" => Ok(Format::AdjacencyList),
            "pair" | "pair-list" | "pairs" => Ok(Format::PairList),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// Raw-id to dense-index mapping, assigned in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    users: HashMap<u64, usize>,
    items: HashMap<u64, usize>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl IdMap {
    fn user(&mut self, raw: u64) -> usize {
        *self.users.entry(raw).or_insert_with(|| {
            self.user_ids.push(raw);
            self.user_ids.len() - 1
        })
    }

    fn item(&mut self, raw: u64) -> usize {
        *self.items.entry(raw).or_insert_with(|| {
            self.item_ids.push(raw);
            self.item_ids.len() - 1
        })
    }

    pub fn n(&self) -> usize {
        self.user_ids.len()
    }

    pub fn m(&self) -> usize {
        self.item_ids.len()
    }

    /// Original id of dense user `u`.
    pub fn raw_user(&self, u: usize) -> u64 {
        self.user_ids[u]
    }

    pub fn raw_item(&self, i: usize) -> u64 {
        self.item_ids[i]
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub data: Interactions,
    pub duplicates: usize,
}

pub fn parse_interactions(path: impl AsRef<Path>, format: Format) -> Result<Parsed> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut ids = IdMap::default();
    let pairs = parse_pairs(&text, format, path, &mut ids)?;
    finish(pairs, &ids, path)
}

/// Parses from memory; `origin` is only used in error messages.
pub fn parse_interactions_str(text: &str, format: Format, origin: &str) -> Result<Parsed> {
    let mut ids = IdMap::default();
    let path = PathBuf::from(origin);
    let pairs = parse_pairs(text, format, &path, &mut ids)?;
    finish(pairs, &ids, &path)
}

/// Loads a train/test pair through one shared id map so both sides index the
/// same users and items.
pub fn load_split(train: impl AsRef<Path>, test: impl AsRef<Path>, format: Format) -> Result<SplitPair> {
    let (train, test) = (train.as_ref(), test.as_ref());
    let mut ids = IdMap::default();
    let train_pairs = parse_pairs(&fs::read_to_string(train)?, format, train, &mut ids)?;
    let test_pairs = parse_pairs(&fs::read_to_string(test)?, format, test, &mut ids)?;
    if train_pairs.is_empty() {
        return Err(Error::EmptyInput(train.display().to_string()));
    }
    let (n, m) = (ids.n(), ids.m());
    let (train_data, d1) = Interactions::from_pairs(n, m, train_pairs)?;
    let (test_data, d2) = Interactions::from_pairs(n, m, test_pairs)?;
    if d1 + d2 > 0 {
        warn!("dropped {} duplicate pairs while loading the split", d1 + d2);
    }
    let overlap = test_data.pairs().iter().filter(|&&(u, i)| train_data.contains(u, i)).count();
    if overlap > 0 {
        warn!("{overlap} test pairs also appear in train");
    }
    SplitPair::new(train_data, test_data)
}

fn finish(pairs: Vec<(usize, usize)>, ids: &IdMap, path: &Path) -> Result<Parsed> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let (data, duplicates) = Interactions::from_pairs(ids.n(), ids.m(), pairs)?;
    if duplicates > 0 {
        warn!("{}: dropped {duplicates} duplicate pairs", path.display());
    }
    Ok(Parsed { data, duplicates })
}

fn parse_pairs(text: &str, format: Format, path: &Path, ids: &mut IdMap) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let mut fields = line.split_whitespace().map(|tok| {
            tok.parse::<u64>()
                .map_err(|_| err(format!("expected a non-negative integer id, found {tok:?}")))
        });
        let user = ids.user(fields.next().expect("non-empty line")?);
        match format {
            Format::AdjacencyList => {
                for item in fields {
                    pairs.push((user, ids.item(item?)));
                }
            }
            Format::PairList => {
                let item = fields
                    .next()
                    .ok_or_else(|| err("expected `<user>\\t<item>`".into()))??;
                if fields.next().is_some() {
                    return Err(err("expected exactly two fields".into()));
                }
                pairs.push((user, ids.item(item)));
            }
        }
    }
    Ok(pairs)
}

/// Writes dense ids in adjacency-list form; users without items are omitted.
pub fn write_adjacency_list(path: impl AsRef<Path>, data: &Interactions) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_rows(&mut out, data.n(), |u| data.user_items(u))?;
    out.flush()?;
    Ok(())
}

/// Writes `<stem>.txt` with all pairs and `<stem>.fake.txt` with only the
/// injected ones, both as adjacency lists.
pub fn write_noisy_dataset(dir: impl AsRef<Path>, stem: &str, noisy: &NoisyInteractions) -> Result<()> {
    let dir = dir.as_ref();
    write_adjacency_list(dir.join(format!("{stem}.txt")), &noisy.data)?;
    let mut per_user = vec![Vec::new(); noisy.data.n()];
    for &(u, i) in &noisy.fake {
        per_user[u].push(i);
    }
    for row in &mut per_user {
        row.sort_unstable();
    }
    let mut out = BufWriter::new(fs::File::create(dir.join(format!("{stem}.fake.txt")))?);
    write_rows(&mut out, per_user.len(), |u| &per_user[u])?;
    out.flush()?;
    Ok(())
}

fn write_rows<'a>(out: &mut impl Write, n: usize, row: impl Fn(usize) -> &'a [usize]) -> Result<()> {
    for u in 0..n {
        let items = row(u);
        if items.is_empty() {
            continue;
        }
        write!(out, "{u}")?;
        for i in items {
            write!(out, " {i}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_remaps_in_first_appearance_order() {
        let parsed = parse_interactions_str("0 5 7\n1 5\n", Format::AdjacencyList, "mem").unwrap();
        let data = parsed.data;
        assert_eq!((data.n(), data.m()), (2, 2));
        assert_eq!(data.pairs(), &[(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn pair_list_drops_duplicates() {
        let parsed = parse_interactions_str("0\t3\n0\t3\n", Format::PairList, "mem").unwrap();
        assert_eq!(parsed.data.len(), 1);
        assert_eq!(parsed.duplicates, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions_str("0 1\n2 x\n", Format::AdjacencyList, "mem").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_interactions_str("0 1 2\n", Format::PairList, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_interactions_str("-1 2\n", Format::PairList, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_interactions_str("\n\n", Format::PairList, "mem"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn write_then_load_split_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (train, _) = Interactions::from_pairs(3, 4, [(0, 0), (0, 1), (1, 2), (2, 3)]).unwrap();
        let (test, _) = Interactions::from_pairs(3, 4, [(0, 2), (2, 0)]).unwrap();
        write_adjacency_list(dir.path().join("train.txt"), &train).unwrap();
        write_adjacency_list(dir.path().join("test.txt"), &test).unwrap();
        let split = load_split(
            dir.path().join("train.txt"),
            dir.path().join("test.txt"),
            Format::AdjacencyList,
        )
        .unwrap();
        assert_eq!(split.train, train);
        assert_eq!(split.test, test);
    }
}
