use std::collections::HashSet;

use crate::model::{Encoder, FeatureMask};
use crate::{Error, Result, Scalar};

use super::attr::AttributeTable;
use super::bank::FeatureBank;
use super::split::SplitTag;

/// One feature kind's values for the rows of a split, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    pub kind: String,
    pub dim: usize,
    data: Vec<T>,
    present: Vec<bool>,
}

impl<T: Scalar> Column<T> {
    pub fn get(&self, row: usize) -> Option<&[T]> {
        self.present[row].then(|| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn missing_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.present.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub tag: SplitTag,
    pub ids: Vec<String>,
    attributes: usize,
    labels: Vec<T>,
    pub columns: Vec<Column<T>>,
}

impl<T: Scalar> Split<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labels(&self, row: usize) -> &[T] {
        &self.labels[row * self.attributes..(row + 1) * self.attributes]
    }

    /// Column `a` of the label matrix as booleans.
    pub fn label_column(&self, a: usize) -> Vec<bool> {
        (0..self.len()).map(|i| self.labels(i)[a] > T::lit(0.5)).collect()
    }

    /// Matches the encoder's kinds to columns by name. Kinds without a bank
    /// map to `None`; a bank of the wrong width is an error.
    pub fn column_map(&self, encoder: &Encoder<T>) -> Result<ColumnMap> {
        let mut cols = Vec::new();
        let mut names = Vec::new();
        for k in encoder.kinds() {
            let col = self.columns.iter().position(|c| c.kind == k.name);
            if let Some(c) = col {
                if self.columns[c].dim != k.input_dim {
                    return Err(Error::Format(format!(
                        "bank `{}` has dim {}, the model's branch expects {}",
                        k.name, self.columns[c].dim, k.input_dim
                    )));
                }
            }
            cols.push(col);
            names.push(k.name.clone());
        }
        Ok(ColumnMap(cols, names))
    }

    /// Features for `row` laid out by the net's kind ids.
    pub fn features<'a>(&'a self, map: &ColumnMap, row: usize, out: &mut Vec<Option<&'a [T]>>) {
        out.clear();
        out.extend(map.0.iter().map(|c| c.and_then(|c| self.columns[c].get(row))));
    }

    /// Errors with the first example that lacks a feature the mask needs.
    pub fn require(&self, map: &ColumnMap, mask: FeatureMask) -> Result<()> {
        for k in mask.iter() {
            let col = map.column(k)?;
            let c = &self.columns[col];
            if let Some(row) = c.missing_rows().next() {
                return Err(Error::MissingFeatures {
                    kind: c.kind.clone(),
                    id: self.ids[row].clone(),
                });
            }
        }
        Ok(())
    }
}

/// Dataset column per net kind id; `None` where the dataset has no bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap(Vec<Option<usize>>, Vec<String>);

impl ColumnMap {
    pub fn column(&self, kind: usize) -> Result<usize> {
        self.0
            .get(kind)
            .copied()
            .flatten()
            .ok_or_else(|| Error::MissingBank(self.1.get(kind).cloned().unwrap_or_else(|| format!("#{kind}"))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub attributes: Vec<String>,
    pub kinds: Vec<(String, usize)>,
    pub train: Split<T>,
    pub val: Split<T>,
    pub test: Split<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Joins labels, split tags and feature banks by image id. Ids absent
    /// from a bank are kept and marked missing for that kind.
    pub fn assemble(table: &AttributeTable, banks: &[FeatureBank]) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Empty("attribute table"));
        }
        let mut seen = HashSet::new();
        for b in banks {
            if !seen.insert(b.kind()) {
                return Err(Error::Config(format!("two banks for kind `{}`", b.kind())));
            }
        }
        let build = |tag: SplitTag| -> Split<T> {
            let rows: Vec<usize> = (0..table.len()).filter(|&i| table.splits[i] == tag).collect();
            let ids: Vec<String> = rows.iter().map(|&i| table.ids[i].clone()).collect();
            let labels = rows
                .iter()
                .flat_map(|&i| table.row(i).iter().map(|&v| T::lit(f64::from(v))))
                .collect();
            let columns = banks
                .iter()
                .map(|b| {
                    let mut data = Vec::with_capacity(ids.len() * b.dim());
                    let mut present = Vec::with_capacity(ids.len());
                    for id in &ids {
                        match b.get(id) {
                            Some(v) => {
                                data.extend(v.iter().map(|&x| T::of_f32(x)));
                                present.push(true);
                            }
                            None => {
                                data.extend(std::iter::repeat(T::zero()).take(b.dim()));
                                present.push(false);
                            }
                        }
                    }
                    Column {
                        kind: b.kind().to_string(),
                        dim: b.dim(),
                        data,
                        present,
                    }
                })
                .collect();
            Split {
                tag,
                ids,
                attributes: table.attribute_count(),
                labels,
                columns,
            }
        };
        Ok(Self {
            attributes: table.names.clone(),
            kinds: banks.iter().map(|b| (b.kind().to_string(), b.dim())).collect(),
            train: build(SplitTag::Train),
            val: build(SplitTag::Val),
            test: build(SplitTag::Test),
        })
    }

    pub fn split(&self, tag: SplitTag) -> &Split<T> {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    /// See [`Split::column_map`].
    pub fn column_map(&self, encoder: &Encoder<T>) -> Result<ColumnMap> {
        self.train.column_map(encoder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HybridNet, Profile};

    fn toy() -> (AttributeTable, Vec<FeatureBank>) {
        let mut t = AttributeTable::new(
            vec!["a".into(), "b".into()],
            vec!["1".into(), "2".into(), "3".into()],
            vec![1, 0, 0, 1, 1, 1],
        )
        .unwrap();
        t.splits = vec![SplitTag::Train, SplitTag::Train, SplitTag::Test];
        let mut fv = FeatureBank::new("fv", 2);
        fv.insert("1", &[1.0, 2.0]).unwrap();
        fv.insert("2", &[3.0, 4.0]).unwrap();
        fv.insert("3", &[5.0, 6.0]).unwrap();
        let mut lbp = FeatureBank::new("lbp", 1);
        lbp.insert("1", &[0.5]).unwrap();
        (t, vec![fv, lbp])
    }

    #[test]
    fn joins_by_id() {
        let (t, banks) = toy();
        let d = Dataset::<f64>::assemble(&t, &banks).unwrap();
        assert_eq!(d.train.len(), 2);
        assert_eq!(d.test.ids, vec!["3"]);
        assert!(d.val.is_empty());
        assert_eq!(d.train.labels(1), &[0.0, 1.0]);
        assert_eq!(d.train.columns[0].get(1), Some(&[3.0, 4.0][..]));
        assert_eq!(d.train.columns[1].get(1), None);
        assert_eq!(d.test.label_column(0), vec![true]);
    }

    #[test]
    fn missing_features_reported_with_id() {
        let (t, banks) = toy();
        let d = Dataset::<f64>::assemble(&t, &banks).unwrap();
        let arch = Profile::Desk.architecture(2);
        let kinds = [("fv".to_string(), 2), ("lbp".to_string(), 1), ("cnn".to_string(), 4)];
        let net = HybridNet::<f64>::new("desk", arch, &kinds, vec!["a".into(), "b".into()], 0).unwrap();
        let map = d.column_map(&net.encoder).unwrap();
        d.train.require(&map, FeatureMask::single(0)).unwrap();
        match d.train.require(&map, FeatureMask::single(1)) {
            Err(Error::MissingFeatures { kind, id }) => assert_eq!((kind.as_str(), id.as_str()), ("lbp", "2")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(d.train.require(&map, FeatureMask::single(2)), Err(Error::MissingBank(k)) if k == "cnn"));
        let mut buf = Vec::new();
        d.train.features(&map, 0, &mut buf);
        assert_eq!(buf, vec![Some(&[1.0, 2.0][..]), Some(&[0.5][..]), None]);
    }

    #[test]
    fn wrong_width_rejected() {
        let (t, banks) = toy();
        let d = Dataset::<f64>::assemble(&t, &banks).unwrap();
        let net = HybridNet::<f64>::new("desk", Profile::Desk.architecture(2), &[("fv".into(), 3)], vec!["a".into(), "b".into()], 0).unwrap();
        assert!(d.column_map(&net.encoder).is_err());
    }
}
