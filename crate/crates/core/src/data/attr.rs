//! CelebA-style attribute lists:
//!
//! ```text
//! <image count>
//! <name_1> ... <name_L>
//! <image id> <v_1> ... <v_L>      (values in {-1, 1})
//! ```

use crate::{Error, Result};

use super::split::SplitTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    /// Row-major `ids.len() x names.len()`, each 0 or 1.
    labels: Vec<u8>,
    /// Split per row; everything starts in `Train`.
    pub splits: Vec<SplitTag>,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, ids: Vec<String>, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != ids.len() * names.len() {
            return Err(Error::shape("attribute labels", ids.len() * names.len(), labels.len()));
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(Error::Format("labels must be 0 or 1".into()));
        }
        let splits = vec![SplitTag::Train; ids.len()];
        Ok(Self {
            names,
            ids,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn attribute_count(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let l = self.names.len();
        &self.labels[i * l..(i + 1) * l]
    }
}

pub fn parse_attr_file(text: &str) -> Result<AttributeTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, count_line) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing image count".into(),
    })?;
    let count: usize = count_line.trim().parse().map_err(|_| Error::Parse {
        line: 1,
        msg: format!("bad image count `{}`", count_line.trim()),
    })?;
    let (names_idx, names_line) = lines.next().ok_or(Error::Parse {
        line: 2,
        msg: "missing attribute names".into(),
    })?;
    let names: Vec<String> = names_line.split_whitespace().map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Parse {
            line: names_idx + 1,
            msg: "no attribute names".into(),
        });
    }
    let l = names.len();
    let mut ids = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count * l);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut tokens = line.split_whitespace();
        let id = tokens.next().expect("non-blank line has a token");
        let values: Vec<&str> = tokens.collect();
        if values.len() != l {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {l} attribute values, found {}", values.len()),
            });
        }
        for v in values {
            labels.push(match v {
                "1" | "+1" => 1,
                "-1" => 0,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("attribute value `{other}` is not -1 or 1"),
                    })
                }
            });
        }
        ids.push(id.to_string());
    }
    if ids.len() != count {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header declares {count} images, file has {}", ids.len()),
        });
    }
    AttributeTable::new(names, ids, labels)
}

pub fn render_attr_file(table: &AttributeTable) -> String {
    let mut out = format!("{}\n{}\n", table.len(), table.names.join(" "));
    for (i, id) in table.ids.iter().enumerate() {
        out.push_str(id);
        for &v in table.row(i) {
            out.push_str(if v == 1 { "  1" } else { " -1" });
        }
        out.push('\n');
    }
    out
}
