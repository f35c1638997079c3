use crate::error::{Error, Result};

/// 1-based ranks; tied values share the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("series lengths differ"));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("rank correlation needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in correlation input"));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("rank correlation is undefined for a constant series"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation between datastore sizes and a quality metric.
pub fn size_quality_correlation(points: &[(f64, f64)]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    spearman(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monotone_series() {
        let up = [(1.0, 2.0), (2.0, 3.0), (5.0, 10.0), (9.0, 11.0)];
        assert!((size_quality_correlation(&up).unwrap() - 1.0).abs() < 1e-12);
        let down = [(1.0, 2.0), (2.0, 1.0), (5.0, 0.0)];
        assert!((size_quality_correlation(&down).unwrap() + 1.0).abs() < 1e-12);
        assert!(size_quality_correlation(&up[..2]).is_err());
        assert!(size_quality_correlation(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn one_tie_by_hand() {
        // x ranks: 1, 2.5, 2.5, 4; y ranks: 1, 3, 2, 4.
        // deviations from 2.5: x (-1.5, 0, 0, 1.5), y (-1.5, 0.5, -0.5, 1.5)
        // sxy = 4.5, sxx = 4.5, syy = 5 → rho = 4.5 / sqrt(22.5)
        let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 30.0, 20.0, 40.0]).unwrap();
        assert!((rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 5.0]), vec![3.0, 1.0, 3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn rank_invariance(
            pts in prop::collection::vec((1.0f64..1e6, -10.0f64..10.0), 3..30),
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            prop_assume!(xs.iter().any(|x| *x != xs[0]) && ys.iter().any(|y| *y != ys[0]));
            let a = spearman(&xs, &ys).unwrap();
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let b = spearman(&logs, &ys).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
        }
    }
}
