use nalgebra::{DMatrix, DVector};
use sigfuse::data::{synth_generate, SplitTag, SyntheticSpec};
use sigfuse::eval::average_precision;

// With no view noise each attribute is a halfspace of an invertible linear
// view, so a least-squares probe on one view alone should rank almost perfectly.
#[test]
fn zero_noise_views_are_linearly_separable() {
    let mut spec = SyntheticSpec {
        counts: [3000, 0, 1000],
        ..Default::default()
    };
    for v in &mut spec.views {
        v.noise = 0.0;
    }
    let (table, banks) = synth_generate(&spec).unwrap();
    let rows = |tag: SplitTag| -> Vec<usize> { (0..table.len()).filter(|&i| table.splits[i] == tag).collect() };
    let (train, test) = (rows(SplitTag::Train), rows(SplitTag::Test));
    for bank in &banks {
        let design = |idx: &[usize]| {
            DMatrix::from_fn(idx.len(), bank.dim() + 1, |r, c| {
                if c == bank.dim() {
                    1.0
                } else {
                    bank.get(&table.ids[idx[r]]).unwrap()[c] as f64
                }
            })
        };
        let (xtr, xte) = (design(&train), design(&test));
        for a in 0..table.attribute_count() {
            let y = DVector::from_fn(train.len(), |r, _| if table.row(train[r])[a] == 1 { 1.0 } else { -1.0 });
            let w = xtr.clone().svd(true, true).solve(&y, 1e-12).unwrap();
            let scores: Vec<f64> = (&xte * &w).iter().copied().collect();
            let labels: Vec<bool> = test.iter().map(|&i| table.row(i)[a] == 1).collect();
            let ap = average_precision(&scores, &labels).unwrap();
            assert!(ap > 0.99, "view {} attribute {a}: AP {ap}", bank.kind());
        }
    }
}

#[test]
fn noisier_views_are_harder() {
    let spec = SyntheticSpec {
        counts: [2000, 0, 0],
        ..Default::default()
    };
    let (table, banks) = synth_generate(&spec).unwrap();
    // Residual of the best linear reconstruction of view 0 from each view.
    let x = |k: usize| {
        DMatrix::from_fn(table.len(), banks[k].dim(), |r, c| banks[k].get(&table.ids[r]).unwrap()[c] as f64)
    };
    let target = x(0);
    let residual = |k: usize| {
        let xk = x(k);
        let w = xk.clone().svd(true, true).solve(&target, 1e-12).unwrap();
        (&xk * w - &target).norm()
    };
    assert!(residual(1) < residual(2));
}
