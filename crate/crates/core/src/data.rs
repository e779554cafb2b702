//! Categorical datasets and configuration counting.
//!
//! Values are stored column-major as 0-based category indices. Counting is
//! sparse: only blanket configurations that occur in the data are tallied.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{parse_err, Error, Result};

/// An immutable `n × d` matrix of category indices with per-variable cardinalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    n: usize,
    cards: Vec<usize>,
    columns: Vec<Vec<u32>>,
}

impl Dataset {
    /// Builds a dataset from row-major observations.
    pub fn from_rows(cards: Vec<usize>, rows: &[Vec<u32>]) -> Result<Self> {
        let d = cards.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (k, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {k} has {} values, expected {d}",
                    row.len()
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::from_columns(cards, columns)
    }

    /// Builds a dataset from column-major observations.
    pub fn from_columns(cards: Vec<usize>, columns: Vec<Vec<u32>>) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one variable".into(),
            ));
        }
        if columns.len() != cards.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns for {} cardinalities",
                columns.len(),
                cards.len()
            )));
        }
        if let Some(j) = cards.iter().position(|&r| r == 0 || r > u32::MAX as usize) {
            return Err(Error::InvalidArgument(format!(
                "variable {j} has invalid cardinality {}",
                cards[j]
            )));
        }
        let n = columns[0].len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(k) = col.iter().position(|&v| v as usize >= cards[j]) {
                return Err(Error::InvalidArgument(format!(
                    "value {} at row {k}, variable {j} is out of range for cardinality {}",
                    col[k], cards[j]
                )));
            }
        }
        Ok(Self { n, cards, columns })
    }

    /// A dataset with no observations.
    pub fn empty(cards: Vec<usize>) -> Result<Self> {
        let d = cards.len();
        Self::from_columns(cards, vec![Vec::new(); d])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn card(&self, j: usize) -> usize {
        self.cards[j]
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, j: usize) -> u32 {
        self.columns[j][row]
    }

    pub fn row(&self, row: usize) -> Vec<u32> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Returns a copy with rows reordered so that new row `k` is old row `perm[k]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} rows",
                perm.len(),
                self.n
            )));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| perm.iter().map(|&k| c[k]).collect())
            .collect();
        Self::from_columns(self.cards.clone(), columns)
    }

    /// Keeps only the first `n` rows.
    pub fn truncate(&self, n: usize) -> Self {
        let n = n.min(self.n);
        Self {
            n,
            cards: self.cards.clone(),
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }

    /// Writes the header line of cardinalities followed by one row per observation.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        let header: Vec<String> = self.cards.iter().map(|r| r.to_string()).collect();
        writeln!(sink, "{}", header.join(" "))?;
        let mut line = String::new();
        for k in 0..self.n {
            line.clear();
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&col[k].to_string());
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }
}

/// How the first non-comment line of a data file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// The first line holds cardinalities.
    Present,
    /// Every line is an observation.
    Absent,
    /// The first line is taken as a header when every entry is at least 1 and
    /// all following rows fit the cardinalities it declares.
    #[default]
    Auto,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<u64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u64>().map_err(|_| {
                parse_err(
                    lineno,
                    format!("expected a non-negative integer, found `{t}`"),
                )
            })
        })
        .collect()
}

/// Reads a whitespace- or comma-separated integer matrix.
///
/// `declared_cards` overrides any header and disables inference. Without
/// either, each cardinality is inferred as the column maximum plus one.
pub fn load_dataset<R: BufRead>(
    source: R,
    declared_cards: Option<&[usize]>,
    header: HeaderMode,
) -> Result<Dataset> {
    let mut lines: Vec<(usize, Vec<u64>)> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((idx + 1, tokenize(trimmed, idx + 1)?));
    }

    let header_present = match header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => match lines.first() {
            Some((_, first)) => {
                first.iter().all(|&r| r >= 1)
                    && lines.len() > 1
                    && lines[1..].iter().all(|(_, row)| {
                        row.len() == first.len() && row.iter().zip(first).all(|(v, r)| v < r)
                    })
            }
            None => false,
        },
    };

    let mut header_cards: Option<Vec<usize>> = None;
    let mut rows = &lines[..];
    if header_present {
        let (lineno, first) = lines
            .first()
            .ok_or_else(|| parse_err(0, "empty file has no header"))?;
        if first.is_empty() || first.contains(&0) {
            return Err(parse_err(*lineno, "cardinalities must be positive"));
        }
        header_cards = Some(first.iter().map(|&r| r as usize).collect());
        rows = &lines[1..];
    }

    let cards_given: Option<Vec<usize>> = declared_cards.map(|c| c.to_vec()).or(header_cards);
    let d = match (&cards_given, rows.first()) {
        (Some(c), _) => c.len(),
        (None, Some((_, row))) => row.len(),
        (None, None) => {
            return Err(parse_err(0, "empty file with no header"));
        }
    };
    if d == 0 {
        return Err(parse_err(rows.first().map_or(0, |r| r.0), "no variables"));
    }

    let mut columns = vec![Vec::with_capacity(rows.len()); d];
    for (lineno, row) in rows {
        if row.len() != d {
            return Err(parse_err(
                *lineno,
                format!("ragged row: {} values, expected {d}", row.len()),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            if let Some(c) = &cards_given {
                if v >= c[j] as u64 {
                    return Err(parse_err(
                        *lineno,
                        format!(
                            "value {v} out of range for variable {j} with cardinality {}",
                            c[j]
                        ),
                    ));
                }
            }
            let v = u32::try_from(v)
                .map_err(|_| parse_err(*lineno, format!("value {v} is too large")))?;
            columns[j].push(v);
        }
    }

    let cards = cards_given.unwrap_or_else(|| {
        columns
            .iter()
            .map(|c| c.iter().max().map_or(1, |&m| m as usize + 1))
            .collect()
    });
    Dataset::from_columns(cards, columns)
}

/// Sparse counts `n_ijl` of a target variable for each observed blanket configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    pub target: usize,
    /// Sorted blanket members.
    pub blanket: Vec<usize>,
    /// Blanket configuration (in `blanket` order) to per-category counts.
    pub entries: BTreeMap<Vec<u32>, Vec<u64>>,
}

impl CountTable {
    /// Total number of observations tallied.
    pub fn total(&self) -> u64 {
        self.entries.values().flatten().sum()
    }
}

pub(crate) fn check_blanket(d: usize, j: usize, mb: &[usize]) -> Result<()> {
    if j >= d {
        return Err(Error::NodeOutOfRange { node: j, d });
    }
    for &i in mb {
        if i >= d {
            return Err(Error::NodeOutOfRange { node: i, d });
        }
        if i == j {
            return Err(Error::NodeInBlanket { node: j });
        }
    }
    Ok(())
}

pub(crate) fn sorted_unique(mb: &[usize]) -> Vec<usize> {
    let mut v = mb.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Tallies `n_ijl` for target `j` and blanket `mb`.
pub fn count_configurations(data: &Dataset, j: usize, mb: &[usize]) -> Result<CountTable> {
    check_blanket(data.d(), j, mb)?;
    let blanket = sorted_unique(mb);
    let mut entries: BTreeMap<Vec<u32>, Vec<u64>> = BTreeMap::new();
    let r = data.card(j);
    for k in 0..data.n() {
        let config: Vec<u32> = blanket.iter().map(|&i| data.value(k, i)).collect();
        entries.entry(config).or_insert_with(|| vec![0; r])[data.value(k, j) as usize] += 1;
    }
    Ok(CountTable {
        target: j,
        blanket,
        entries,
    })
}

/// Flat per-configuration counts used by the scoring hot path.
///
/// Configurations appear in ascending lexicographic order of their blanket
/// values, so the layout is a function of the data alone.
pub(crate) struct FlatCounts {
    pub r: usize,
    /// `configs × r` counts, row-major.
    pub counts: Vec<u32>,
}

impl FlatCounts {
    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks_exact(self.r.max(1))
    }
}

/// Mixed-radix configuration keys per row, first blanket member most significant.
/// When the key range would overflow, keys are compressed to ranks, which keeps
/// their order.
fn configuration_keys(data: &Dataset, mb: &[usize]) -> (Vec<u64>, u64) {
    let n = data.n();
    let mut keys = vec![0u64; n];
    let mut range: u64 = 1;
    for &i in mb {
        let r = data.card(i) as u64;
        if range.checked_mul(r).is_none() {
            let mut uniq = keys.clone();
            uniq.sort_unstable();
            uniq.dedup();
            for key in keys.iter_mut() {
                *key = uniq.binary_search(key).expect("key present") as u64;
            }
            range = uniq.len().max(1) as u64;
        }
        let col = data.column(i);
        for (key, &v) in keys.iter_mut().zip(col) {
            *key = *key * r + v as u64;
        }
        range *= r;
    }
    (keys, range)
}

pub(crate) fn flat_counts(data: &Dataset, j: usize, mb: &[usize]) -> FlatCounts {
    let r = data.card(j);
    let n = data.n();
    let target = data.column(j);
    if n == 0 {
        return FlatCounts {
            r,
            counts: Vec::new(),
        };
    }
    let (keys, range) = configuration_keys(data, mb);
    let dense_limit = (4 * n).max(4096) as u64;
    if range.saturating_mul(r as u64) <= dense_limit {
        let range = range as usize;
        let mut dense = vec![0u32; range * r];
        for (&key, &v) in keys.iter().zip(target) {
            dense[key as usize * r + v as usize] += 1;
        }
        let mut counts = Vec::new();
        for row in dense.chunks_exact(r) {
            if row.iter().any(|&c| c > 0) {
                counts.extend_from_slice(row);
            }
        }
        FlatCounts { r, counts }
    } else {
        let mut slots: HashMap<u64, usize> = HashMap::new();
        let mut seen: Vec<u64> = Vec::new();
        let mut unsorted: Vec<u32> = Vec::new();
        for (&key, &v) in keys.iter().zip(target) {
            let slot = *slots.entry(key).or_insert_with(|| {
                seen.push(key);
                unsorted.extend(std::iter::repeat_n(0, r));
                seen.len() - 1
            });
            unsorted[slot * r + v as usize] += 1;
        }
        let mut order: Vec<usize> = (0..seen.len()).collect();
        order.sort_unstable_by_key(|&s| seen[s]);
        let mut counts = Vec::with_capacity(unsorted.len());
        for s in order {
            counts.extend_from_slice(&unsorted[s * r..(s + 1) * r]);
        }
        FlatCounts { r, counts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, mode: HeaderMode) -> Result<Dataset> {
        load_dataset(text.as_bytes(), None, mode)
    }

    #[test]
    fn header_declares_cards() {
        let ds = load("2 2\n0 1\n1 1\n", HeaderMode::Present).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.cards(), &[2, 2]);
        let auto = load("2 2\n0 1\n1 1\n", HeaderMode::Auto).unwrap();
        assert_eq!(auto, ds);
    }

    #[test]
    fn infers_cards_without_header() {
        let ds = load("0\n2\n1\n", HeaderMode::Auto).unwrap();
        assert_eq!(ds.cards(), &[3]);
        assert_eq!(ds.n(), 3);
    }

    #[test]
    fn header_value_out_of_range() {
        let err = load("2\n2\n", HeaderMode::Present).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn comments_commas_and_declared_cards() {
        let text = "# comment\n0,1\n\n1, 0\n";
        let ds = load_dataset(text.as_bytes(), Some(&[3, 4]), HeaderMode::Absent).unwrap();
        assert_eq!(ds.cards(), &[3, 4]);
        assert_eq!(ds.row(1), vec![1, 0]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            load("0 1\n1\n", HeaderMode::Absent),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load("0 x\n", HeaderMode::Absent),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(load("", HeaderMode::Auto).is_err());
        assert!(load("# only comments\n", HeaderMode::Absent).is_err());
        // header with no rows is a valid empty dataset
        let ds = load("2 3\n", HeaderMode::Present).unwrap();
        assert_eq!((ds.n(), ds.cards()), (0, &[2usize, 3][..]));
    }

    #[test]
    fn write_then_load() {
        let ds = Dataset::from_rows(vec![2, 3], &[vec![1, 2], vec![0, 0]]).unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = load_dataset(&buf[..], None, HeaderMode::Present).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn marginal_tally() {
        let ds = Dataset::from_rows(vec![2], &[vec![0], vec![0], vec![1]]).unwrap();
        let t = count_configurations(&ds, 0, &[]).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[&vec![]], vec![2, 1]);
    }

    #[test]
    fn empty_data_has_no_entries() {
        let ds = Dataset::empty(vec![2, 2]).unwrap();
        let t = count_configurations(&ds, 0, &[1]).unwrap();
        assert!(t.entries.is_empty());
    }

    #[test]
    fn conditional_tally_matches_brute_force() {
        let rows = [vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 1]];
        let ds = Dataset::from_rows(vec![2, 2], &rows).unwrap();
        let t = count_configurations(&ds, 0, &[1]).unwrap();
        // brute force: scan the rows for each (config, category) pair
        for config in 0..2u32 {
            let expect: Vec<u64> = (0..2u32)
                .map(|c| rows.iter().filter(|r| r[1] == config && r[0] == c).count() as u64)
                .collect();
            assert_eq!(t.entries[&vec![config]], expect);
        }
        assert_eq!(t.entries[&vec![1]], vec![1, 2]);
        assert_eq!(t.entries[&vec![0]], vec![1, 0]);
    }

    #[test]
    fn target_in_blanket_rejected() {
        let ds = Dataset::empty(vec![2, 2]).unwrap();
        assert!(matches!(
            count_configurations(&ds, 1, &[1]),
            Err(Error::NodeInBlanket { node: 1 })
        ));
    }

    #[test]
    fn flat_counts_agree_with_table_on_both_paths() {
        // 12 ternary variables forces the sparse path, 1 variable the dense one
        let cards = vec![3; 13];
        let rows: Vec<Vec<u32>> = (0..50u32)
            .map(|k| {
                (0..13u32)
                    .map(|j| (k * 7 + j * j * 3 + k / 3) % 3)
                    .collect()
            })
            .collect();
        let ds = Dataset::from_rows(cards, &rows).unwrap();
        for mb in [vec![1], (1..13).collect::<Vec<_>>()] {
            let table = count_configurations(&ds, 0, &mb).unwrap();
            let flat = flat_counts(&ds, 0, &mb);
            let expect: Vec<u32> = table
                .entries
                .values()
                .flatten()
                .map(|&c| c as u32)
                .collect();
            assert_eq!(flat.counts, expect);
        }
    }
}
