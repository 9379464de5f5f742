use forexsum::corpus::{Category, Minute, Region};
use forexsum::eval::{attribution, category_influence, macro_f1, mcc, region_influence};
use forexsum::grouping::GroupSubject;
use forexsum::model::{AnalysisRecord, GroupRecord, NewsRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Metrics straight from a 2×2 table `m[label][prediction]`.
fn oracle(pred: &[u8], labels: &[u8]) -> (f64, f64) {
    let mut m = [[0u64; 2]; 2];
    for (&p, &y) in pred.iter().zip(labels) {
        m[y as usize][p as usize] += 1;
    }
    let class_f1 = |c: usize| {
        let row: u64 = m[c].iter().sum();
        let col: u64 = m[0][c] + m[1][c];
        if row + col == 0 {
            0.0
        } else {
            2.0 * m[c][c] as f64 / (row + col) as f64
        }
    };
    let f1 = 0.5 * (class_f1(1) + class_f1(0));
    let (tp, tn, fp, fn_) = (
        m[1][1] as f64,
        m[0][0] as f64,
        m[0][1] as f64,
        m[1][0] as f64,
    );
    let marg = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if marg == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / marg.sqrt()
    };
    (f1, mcc)
}

fn pearson(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n;
    let cov: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - ma) * (y as f64 - mb))
        .sum();
    let va: f64 = a.iter().map(|&x| (x as f64 - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|&y| (y as f64 - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<u8>) {
    let n = rng.gen_range(1..60);
    let bias_p = rng.gen_range(0.0..1.0);
    let bias_y = rng.gen_range(0.0..1.0);
    let p = (0..n).map(|_| u8::from(rng.gen_bool(bias_p))).collect();
    let y = (0..n).map(|_| u8::from(rng.gen_bool(bias_y))).collect();
    (p, y)
}

#[test]
fn metrics_match_table_oracle_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (p, y) = random_case(&mut rng);
        let (f1, m) = oracle(&p, &y);
        assert_eq!(macro_f1(&p, &y).unwrap(), f1);
        assert_eq!(mcc(&p, &y).unwrap(), m);
        let r = pearson(&p, &y);
        if r.is_finite() {
            assert!((r - m).abs() < 1e-12);
        }
    }
}

#[test]
fn worked_matrix() {
    let mut p = Vec::new();
    let mut y = Vec::new();
    for (n, pv, yv) in [(3, 1, 1), (1, 1, 0), (2, 0, 1), (4, 0, 0)] {
        p.extend(std::iter::repeat_n(pv, n));
        y.extend(std::iter::repeat_n(yv, n));
    }
    assert_eq!(format!("{:.4}", macro_f1(&p, &y).unwrap()), "0.6970");
    assert_eq!(format!("{:.4}", mcc(&p, &y).unwrap()), "0.4082");
}

#[test]
fn swapping_classes_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let (p, y) = random_case(&mut rng);
        let ps: Vec<u8> = p.iter().map(|v| 1 - v).collect();
        let ys: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert!((macro_f1(&p, &y).unwrap() - macro_f1(&ps, &ys).unwrap()).abs() < 1e-15);
        assert!((mcc(&p, &y).unwrap() - mcc(&ps, &ys).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn degenerate_inputs() {
    assert!(macro_f1(&[], &[]).is_err());
    assert!(mcc(&[1, 0], &[1]).is_err());
    assert_eq!(mcc(&[1, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
    assert_eq!(macro_f1(&[1, 0, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.0);
}

fn news(region: Region, weight: f64) -> NewsRecord {
    NewsRecord {
        id: "n".into(),
        timestamp: Minute(0),
        category: Category::Politics,
        region,
        score: Some(0.5),
        weight,
    }
}

fn group(category: Category, attention: f64, news: Vec<NewsRecord>) -> GroupRecord {
    GroupRecord {
        subject: GroupSubject::Category { category },
        attention,
        news,
    }
}

fn record(groups: Vec<GroupRecord>) -> AnalysisRecord {
    AnalysisRecord {
        window_start: Minute(0),
        label: 1,
        predicted: 1,
        probs: [0.3, 0.7],
        groups,
    }
}

fn share<T: PartialEq>(items: &[(T, f64)], key: T) -> f64 {
    items.iter().find(|(k, _)| *k == key).unwrap().1
}

#[test]
fn attribution_examples() {
    let one = record(vec![
        group(
            Category::Politics,
            0.7,
            vec![news(Region::A, 0.6), news(Region::B, 0.4)],
        ),
        group(Category::BusinessGeneral, 0.3, vec![news(Region::AB, 1.0)]),
    ]);
    let cats = category_influence(std::slice::from_ref(&one)).unwrap();
    assert!((share(&cats, Category::Politics) - 0.7).abs() < 1e-12);
    assert!((share(&cats, Category::BusinessGeneral) - 0.3).abs() < 1e-12);
    assert_eq!(
        category_influence(&[one.clone(), one.clone()]).unwrap(),
        cats
    );

    let regions = region_influence(&[one]).unwrap();
    assert!((share(&regions, Region::A) - 0.42).abs() < 1e-12);
    assert!((share(&regions, Region::B) - 0.28).abs() < 1e-12);
    assert!((share(&regions, Region::AB) - 0.3).abs() < 1e-12);

    let single = record(vec![group(
        Category::Politics,
        1.0,
        vec![news(Region::A, 0.6), news(Region::B, 0.4)],
    )]);
    let r = region_influence(&[single]).unwrap();
    assert_eq!(
        (
            share(&r, Region::A),
            share(&r, Region::B),
            share(&r, Region::AB)
        ),
        (0.6, 0.4, 0.0)
    );

    let ab = record(vec![group(
        Category::Politics,
        1.0,
        vec![news(Region::AB, 1.0)],
    )]);
    assert_eq!(share(&region_influence(&[ab]).unwrap(), Region::AB), 1.0);
    assert!(attribution(&[]).is_err());
}

#[test]
fn attribution_ignores_sample_order_and_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut records: Vec<AnalysisRecord> = (0..40)
        .map(|_| {
            let k = rng.gen_range(1..4);
            let att: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = att.iter().sum();
            let groups = att
                .iter()
                .map(|a| {
                    let c = Category::ALL[rng.gen_range(0..9)];
                    let w: f64 = rng.gen_range(0.0..1.0);
                    let news = vec![
                        news(Region::ALL[rng.gen_range(0..3)], w),
                        news(Region::ALL[rng.gen_range(0..3)], 1.0 - w),
                    ];
                    group(c, a / z, news)
                })
                .collect();
            record(groups)
        })
        .collect();
    let base = attribution(&records).unwrap();
    fn total<T>(v: &[(T, f64)]) -> f64 {
        v.iter().map(|x| x.1).sum()
    }
    assert!((total(&base.categories) - 1.0).abs() < 1e-12);
    assert!((total(&base.regions) - 1.0).abs() < 1e-12);
    for _ in 0..5 {
        records.shuffle(&mut rng);
        let again = attribution(&records).unwrap();
        for (a, b) in base.categories.iter().zip(&again.categories) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
        for (a, b) in base.regions.iter().zip(&again.regions) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }
}
