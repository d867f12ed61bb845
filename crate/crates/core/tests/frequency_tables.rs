//! Frequency columns of the published N_bit = 12/16/20 tables.

use std::collections::BTreeMap;

use sfma::metrics::{frequency_table, Better, FrequencyMetric, Rate};

const ALGS: [&str; 5] = ["S-SFMA", "S-FMA", "NS-SFMA", "NS-FMA", "RS"];

fn table<T: Copy>(rows: [[Option<T>; 10]; 5]) -> BTreeMap<String, BTreeMap<String, Option<T>>> {
    (0..10)
        .map(|i| {
            let column = ALGS.iter().zip(&rows).map(|(a, row)| (a.to_string(), row[i])).collect();
            (format!("W{i}"), column)
        })
        .collect()
}

fn rates(nums: [usize; 10]) -> [Option<Rate>; 10] {
    nums.map(|n| Some(Rate::new(n, 30)))
}

fn assert_freq<T: FrequencyMetric>(
    t: &BTreeMap<String, BTreeMap<String, Option<T>>>,
    better: Better,
    expected: [f64; 5],
) {
    let freq = frequency_table(t, better);
    for (alg, want) in ALGS.iter().zip(expected) {
        assert_eq!(freq[*alg], want, "{alg}");
    }
}

const N: Option<usize> = None;

#[test]
fn n_conv_n12() {
    let t = table([
        [Some(35), Some(133), Some(178), Some(92), Some(41), Some(179), Some(18), Some(40), Some(37), Some(66)],
        [Some(31), N, N, N, N, N, Some(2), N, N, N],
        [N; 10],
        [N; 10],
        [N, N, Some(285), Some(283), Some(259), Some(183), Some(288), N, N, N],
    ]);
    assert_freq(&t, Better::Smaller, [8.0, 2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn n_conv_n16_and_n20() {
    let t16 = table([
        [Some(116), Some(236), N, Some(122), Some(69), N, Some(290), N, Some(161), Some(158)],
        [N; 10],
        [N; 10],
        [N; 10],
        [N; 10],
    ]);
    assert_freq(&t16, Better::Smaller, [7.0, 0.0, 0.0, 0.0, 0.0]);
    let t20 = table([
        [Some(396), N, Some(393), Some(732), N, N, Some(274), Some(380), Some(321), N],
        [N; 10],
        [N; 10],
        [N; 10],
        [N; 10],
    ]);
    assert_freq(&t20, Better::Smaller, [6.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn final_rate_n12() {
    let t = table([
        rates([30, 27, 22, 30, 30, 20, 30, 25, 30, 28]),
        rates([17, 11, 11, 11, 9, 8, 28, 0, 1, 10]),
        rates([10, 9, 8, 2, 8, 7, 8, 6, 8, 5]),
        rates([3, 5, 4, 4, 3, 6, 1, 4, 4, 2]),
        rates([9, 12, 15, 16, 15, 18, 15, 14, 13, 12]),
    ]);
    assert_freq(&t, Better::Larger, [10.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn final_rate_n20_zero_rates_never_win() {
    let t = table([
        rates([24, 4, 23, 15, 7, 4, 25, 17, 24, 1]),
        rates([5, 0, 0, 0, 0, 2, 1, 3, 0, 0]),
        rates([0; 10]),
        rates([0; 10]),
        rates([0, 0, 0, 1, 1, 0, 0, 0, 0, 0]),
    ]);
    assert_freq(&t, Better::Larger, [10.0, 0.0, 0.0, 0.0, 0.0]);

    let mut all_zero = t.clone();
    for row in all_zero.values_mut() {
        for v in row.values_mut() {
            *v = Some(Rate::new(0, 30));
        }
    }
    assert_freq(&all_zero, Better::Larger, [0.0; 5]);
}

#[test]
fn ties_split_the_point() {
    let mut t = table([rates([30; 10]), rates([30; 10]), rates([0; 10]), rates([0; 10]), rates([15; 10])]);
    assert_freq(&t, Better::Larger, [5.0, 5.0, 0.0, 0.0, 0.0]);
    t.get_mut("W0").unwrap().insert("RS".into(), Some(Rate::new(30, 30)));
    let freq = frequency_table(&t, Better::Larger);
    assert!((freq["S-SFMA"] - (4.5 + 1.0 / 3.0)).abs() < 1e-12);
    assert!((freq["RS"] - 1.0 / 3.0).abs() < 1e-12);
}
