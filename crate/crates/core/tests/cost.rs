use proptest::prelude::*;

use zc_core::cost::{
    crossover_month, cumulative_cost, ram_required, series_csv, CostParams, CostPoint, Deployment,
    DEDICATED_BASE_USD,
};

#[test]
fn ram_ladder_and_base_price() {
    // 8 GB baseline for one app, then the 16, 32 and 64 GB tiers
    assert_eq!(ram_required(1), 8.0);
    assert_eq!(ram_required(3), 16.0);
    assert_eq!(ram_required(7), 32.0);
    assert_eq!(ram_required(15), 64.0);
    assert_eq!(DEDICATED_BASE_USD, 780.0);
    let p = CostParams::with_prices(3.0, 10.0);
    for months in [0, 1, 12, 120] {
        assert_eq!(cumulative_cost(Deployment::Dedicated, 1, months, &p), 780.0);
    }
}

#[test]
fn worked_examples() {
    let p = CostParams::with_prices(3.0, 0.0);
    assert_eq!(cumulative_cost(Deployment::Cloud, 1, 0, &p), 0.0);
    // 12 months * 8 GB * $3
    assert_eq!(cumulative_cost(Deployment::Cloud, 1, 12, &p), 288.0);
    // ceil(780 / 24)
    assert_eq!(crossover_month(1, &p), Some(33));
    assert_eq!(crossover_month(1, &CostParams::with_prices(0.0, 5.0)), None);
}

#[test]
fn dedicated_upgrade_price() {
    let p = CostParams::with_prices(1.0, 10.0);
    // 32 GB tier: 24 GB over the base
    assert_eq!(cumulative_cost(Deployment::Dedicated, 5, 7, &p), 780.0 + 240.0);
}

#[test]
fn series_csv_has_both_columns() {
    let p = CostParams::with_prices(2.0, 5.0);
    let s = p.series(3, 2);
    assert_eq!(s.len(), 3);
    let text = series_csv(&s);
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rd.headers().unwrap(), vec!["month", "cloud_usd", "dedicated_usd"]);
    let back: Vec<CostPoint> = rd.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, s);
}

/// Brute-force crossover: scan months one by one.
fn scan_crossover(n: u32, p: &CostParams) -> Option<u64> {
    (0..1_000_000u32)
        .find(|&m| cumulative_cost(Deployment::Cloud, n, m, p) >= cumulative_cost(Deployment::Dedicated, n, m, p))
        .map(u64::from)
}

proptest! {
    #[test]
    fn ram_is_monotone_power_of_two(n in 1u32..1000) {
        let r = ram_required(n);
        prop_assert!(r >= 4.0 * n as f64 + 4.0);
        prop_assert!(r / 2.0 < 4.0 * n as f64 + 4.0);
        prop_assert_eq!(r.log2().fract(), 0.0);
        prop_assert!(ram_required(n + 1) >= r);
    }

    #[test]
    fn crossover_exists_and_matches_scan(n in 1u32..40, price in 0.01f64..50.0, extra in 0.0f64..50.0) {
        let p = CostParams::with_prices(price, extra);
        let m = crossover_month(n, &p);
        prop_assert!(m.is_some());
        prop_assert_eq!(m, scan_crossover(n, &p));
    }

    #[test]
    fn crossover_non_increasing_in_price(n in 1u32..40, a in 0.01f64..50.0, b in 0.01f64..50.0, extra in 0.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m_lo = crossover_month(n, &CostParams::with_prices(lo, extra)).unwrap();
        let m_hi = crossover_month(n, &CostParams::with_prices(hi, extra)).unwrap();
        prop_assert!(m_hi <= m_lo);
    }

    #[test]
    fn cloud_linear_dedicated_flat(n in 1u32..40, price in 0.0f64..50.0, extra in 0.0f64..50.0, m in 0u32..500) {
        let p = CostParams::with_prices(price, extra);
        let c = |m| cumulative_cost(Deployment::Cloud, n, m, &p);
        prop_assert!((c(m + 1) - c(m) - (c(1) - c(0))).abs() <= 1e-9 * c(m + 1).max(1.0));
        prop_assert_eq!(
            cumulative_cost(Deployment::Dedicated, n, m, &p),
            cumulative_cost(Deployment::Dedicated, n, 0, &p)
        );
    }
}
