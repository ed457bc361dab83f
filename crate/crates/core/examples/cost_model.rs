//! Compare cloud and dedicated hosting for a range of app counts.
//!
//! ```bash
//! cargo run -p zc-core --example cost_model -- 0.5 10
//! ```
//! The two optional arguments are the cloud price per GB-month and the
//! dedicated price per extra GB.

use zc_core::cost::{series_markdown, CostParams};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("price"));
    let cloud = args.next().unwrap_or(5.0);
    let extra = args.next().unwrap_or(10.0);
    let params = CostParams::with_prices(cloud, extra);
    if let Err(e) = params.validate() {
        eprintln!("{e}");
        std::process::exit(2);
    }

    println!("| Apps | RAM (GB) | Cloud / month | Crossover month |");
    println!("|---|---|---|---|");
    for n in [1, 2, 3, 5, 8, 16] {
        let m = params.crossover_month(n).map_or("never".into(), |m| m.to_string());
        println!("| {n} | {} | {:.2} | {m} |", params.ram_required(n), params.cloud_monthly(n));
    }
    println!();
    print!("{}", series_markdown(&params.series(3, 12)));
}
