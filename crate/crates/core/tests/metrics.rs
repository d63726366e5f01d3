use proptest::prelude::*;
use texcal_core::metrics::{derive_predictions, summarize, BinningConfig};

/// Straight from the definitions: bin b holds confidences in [b/m, (b+1)/m),
/// the last bin also takes 1.0.
struct Oracle {
    ece: f64,
    mce: f64,
    ace: f64,
    accuracy: f64,
    avg_confidence: f64,
}

fn oracle(rows: &[Vec<f64>], labels: &[usize], m: usize) -> Oracle {
    let n = rows.len() as f64;
    let mut conf = Vec::new();
    let mut hit = Vec::new();
    for (row, &y) in rows.iter().zip(labels) {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        conf.push(row[best]);
        hit.push(best == y);
    }
    let (mut ece, mut mce, mut ace_sum, mut nonempty) = (0.0, 0.0f64, 0.0, 0);
    for b in 0..m {
        let lo = b as f64 / m as f64;
        let hi = (b + 1) as f64 / m as f64;
        let members: Vec<usize> = (0..conf.len())
            .filter(|&i| conf[i] >= lo && (conf[i] < hi || b == m - 1))
            .collect();
        if members.is_empty() {
            continue;
        }
        let size = members.len() as f64;
        let acc = members.iter().filter(|&&i| hit[i]).count() as f64 / size;
        let c = members.iter().map(|&i| conf[i]).sum::<f64>() / size;
        let gap = (acc - c).abs();
        ece += size / n * gap;
        mce = mce.max(gap);
        ace_sum += gap;
        nonempty += 1;
    }
    Oracle {
        ece,
        mce,
        ace: ace_sum / nonempty as f64,
        accuracy: hit.iter().filter(|&&h| h).count() as f64 / n,
        avg_confidence: conf.iter().sum::<f64>() / n,
    }
}

fn prediction_set() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, usize)> {
    (1usize..=64, 2usize..=8, prop::sample::select(vec![1usize, 5, 10, 15])).prop_flat_map(|(n, k, m)| {
        (
            prop::collection::vec(prop::collection::vec(0.001f64..1.0, k), n),
            prop::collection::vec(0..k, n),
            Just(m),
        )
            .prop_map(|(raw, labels, m)| {
                let rows = raw
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|v| v / s).collect()
                    })
                    .collect();
                (rows, labels, m)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn summary_matches_oracle((rows, labels, m) in prediction_set()) {
        let preds = derive_predictions(&rows, &labels).unwrap();
        let r = summarize(&preds, BinningConfig::new(m).unwrap()).unwrap();
        let o = oracle(&rows, &labels, m);
        prop_assert!((r.ece - o.ece).abs() <= 1e-12);
        prop_assert!((r.mce - o.mce).abs() <= 1e-12);
        prop_assert!((r.ace - o.ace).abs() <= 1e-12);
        prop_assert!((r.accuracy - o.accuracy).abs() <= 1e-12);
        prop_assert!((r.avg_confidence - o.avg_confidence).abs() <= 1e-12);
        prop_assert_eq!(r.bins.len(), m);
        prop_assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), rows.len());
        prop_assert!(r.mce >= r.ece - 1e-12);
    }
}

#[test]
fn four_sample_two_bin_example() {
    // confidences 0.85, 0.9, 0.95 (one correct) share a bin; 0.6 (correct) sits alone
    let rows = vec![vec![0.85, 0.15], vec![0.9, 0.1], vec![0.95, 0.05], vec![0.6, 0.4]];
    let preds = derive_predictions(&rows, &[0, 1, 1, 0]).unwrap();
    let r = summarize(&preds, BinningConfig::new(5).unwrap()).unwrap();
    assert_eq!(r.nonempty_bins, 2);
    assert!((r.ece - 0.525).abs() < 1e-4, "{}", r.ece);
    assert!((r.mce - 0.5667).abs() < 1e-4, "{}", r.mce);
    assert!((r.ace - 0.4833).abs() < 1e-4, "{}", r.ace);
    assert!((r.accuracy - 0.5).abs() < 1e-12);
    assert!((r.avg_confidence - 0.825).abs() < 1e-12);
}

#[test]
fn perfectly_calibrated_bins_give_zero_error() {
    // 10 predictions at 0.7 with exactly 7 correct
    let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.7, 0.3]).collect();
    let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 7)).collect();
    let preds = derive_predictions(&rows, &labels).unwrap();
    let r = summarize(&preds, BinningConfig::new(10).unwrap()).unwrap();
    assert!(r.ece.abs() < 1e-12 && r.mce.abs() < 1e-12 && r.ace.abs() < 1e-12);
    assert_eq!(r.nonempty_bins, 1);
}

#[test]
fn confidence_one_lands_in_last_bin() {
    let preds = derive_predictions(&[vec![1.0, 0.0]], &[0]).unwrap();
    let r = summarize(&preds, BinningConfig::new(15).unwrap()).unwrap();
    assert_eq!(r.bins[14].count, 1);
}
