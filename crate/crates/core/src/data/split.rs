use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::{Error, Result};

use super::attr::AttributeTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    /// Code used by CelebA's partition list.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "0" => Some(SplitTag::Train),
            "1" => Some(SplitTag::Val),
            "2" => Some(SplitTag::Test),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (train|val|test)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Seeded shuffle, then the first `round(n * train)` rows go to train,
    /// the next `round(n * val)` to val, the rest to test.
    Ratios { train: f64, val: f64, test: f64, seed: u64 },
    /// One tag per table row, taken verbatim.
    Explicit(Vec<SplitTag>),
}

/// Row indices per split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitViews {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitViews {
    pub fn get(&self, tag: SplitTag) -> &[usize] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    fn from_tags(tags: &[SplitTag]) -> Self {
        let mut v = SplitViews::default();
        for (i, t) in tags.iter().enumerate() {
            match t {
                SplitTag::Train => v.train.push(i),
                SplitTag::Val => v.val.push(i),
                SplitTag::Test => v.test.push(i),
            }
        }
        v
    }
}

/// Assigns every row of `table` to a split and returns the views.
pub fn split_dataset(table: &mut AttributeTable, spec: &SplitSpec) -> Result<SplitViews> {
    let n = table.len();
    if n == 0 {
        return Err(Error::Empty("attribute table"));
    }
    let tags = match spec {
        SplitSpec::Explicit(tags) => {
            if tags.len() != n {
                return Err(Error::shape("explicit split", n, tags.len()));
            }
            tags.clone()
        }
        &SplitSpec::Ratios { train, val, test, seed } => {
            let ratios = [train, val, test];
            if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
            }
            let n_train = ((n as f64) * train).round() as usize;
            let n_val = (((n as f64) * val).round() as usize).min(n - n_train.min(n));
            let n_train = n_train.min(n);
            let counts = [n_train, n_val, n - n_train - n_val];
            for (tag, (&r, &c)) in SplitTag::ALL.iter().zip(ratios.iter().zip(&counts)) {
                if r > 0.0 && c == 0 {
                    return Err(Error::Config(format!("split `{}` would be empty", tag.name())));
                }
            }
            let mut order: Vec<usize> = (0..n).collect();
            SeededRng::new(seed).shuffle(&mut order);
            let mut tags = vec![SplitTag::Test; n];
            for (pos, &row) in order.iter().enumerate() {
                tags[row] = if pos < n_train {
                    SplitTag::Train
                } else if pos < n_train + n_val {
                    SplitTag::Val
                } else {
                    SplitTag::Test
                };
            }
            tags
        }
    };
    table.splits = tags;
    Ok(SplitViews::from_tags(&table.splits))
}

/// Parses `<id> <0|1|2>` lines into one tag per table row.
pub fn parse_partition_file(text: &str, table: &AttributeTable) -> Result<Vec<SplitTag>> {
    let index: std::collections::HashMap<&str, usize> =
        table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut tags: Vec<Option<SplitTag>> = vec![None; table.len()];
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let [id, code] = toks[..] else {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected `<id> <split>`".into(),
            });
        };
        let tag = SplitTag::from_code(code).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("split code `{code}` is not 0, 1 or 2"),
        })?;
        let row = *index.get(id).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("unknown image id `{id}`"),
        })?;
        if tags[row].replace(tag).is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("image id `{id}` listed twice"),
            });
        }
    }
    tags.into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| Error::Format(format!("image `{}` has no split", table.ids[i]))))
        .collect()
}

pub fn render_partition_file(table: &AttributeTable) -> String {
    table
        .ids
        .iter()
        .zip(&table.splits)
        .map(|(id, t)| format!("{id} {}\n", t.code()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> AttributeTable {
        AttributeTable::new(vec!["a".into()], (0..n).map(|i| format!("{i:03}")).collect(), vec![0; n]).unwrap()
    }

    #[test]
    fn all_train() {
        let mut t = table(10);
        let v = split_dataset(&mut t, &SplitSpec::Ratios { train: 1.0, val: 0.0, test: 0.0, seed: 0 }).unwrap();
        assert_eq!(v.train, (0..10).collect::<Vec<_>>());
        assert!(v.val.is_empty() && v.test.is_empty());
    }

    #[test]
    fn ratios_are_disjoint_exhaustive_and_seeded() {
        let spec = SplitSpec::Ratios { train: 0.8, val: 0.1, test: 0.1, seed: 5 };
        let mut a = table(100);
        let mut b = table(100);
        let va = split_dataset(&mut a, &spec).unwrap();
        assert_eq!(va, split_dataset(&mut b, &spec).unwrap());
        assert_eq!((va.train.len(), va.val.len(), va.test.len()), (80, 10, 10));
        let mut all: Vec<usize> = [va.train.clone(), va.val.clone(), va.test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let other = split_dataset(&mut b, &SplitSpec::Ratios { train: 0.8, val: 0.1, test: 0.1, seed: 6 }).unwrap();
        assert_ne!(other, va);
    }

    #[test]
    fn empty_split_errors() {
        let mut t = table(3);
        assert!(split_dataset(&mut t, &SplitSpec::Ratios { train: 0.9, val: 0.05, test: 0.05, seed: 0 }).is_err());
        assert!(split_dataset(&mut table(0), &SplitSpec::Explicit(vec![])).is_err());
        assert!(split_dataset(&mut t, &SplitSpec::Ratios { train: 0.5, val: 0.2, test: 0.2, seed: 0 }).is_err());
    }

    #[test]
    fn explicit_partition_file_is_honored() {
        let mut t = table(4);
        let tags = parse_partition_file("000 0\n001 2\n002 1\n003 0\n", &t).unwrap();
        let v = split_dataset(&mut t, &SplitSpec::Explicit(tags)).unwrap();
        assert_eq!(v.train, vec![0, 3]);
        assert_eq!(v.val, vec![2]);
        assert_eq!(v.test, vec![1]);
        assert_eq!(render_partition_file(&t), "000 0\n001 2\n002 1\n003 0\n");
        assert!(parse_partition_file("000 0\n", &t).is_err());
        assert!(parse_partition_file("000 0\n000 1\n001 0\n002 0\n003 0\n", &t).is_err());
        assert!(parse_partition_file("zzz 0\n", &t).is_err());
        assert!(parse_partition_file("000 4\n", &t).is_err());
    }
}
