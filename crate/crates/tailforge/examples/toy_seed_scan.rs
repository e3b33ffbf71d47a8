//! Scans seeds for the default toy configuration and prints which
//! demonstration gates each seed clears: extreme-selection rebalancing,
//! angular independence of latent extremes, barcode constancy, decoder fit,
//! and the two-head versus single-head tail loss ordering.
//!
//! Usage: cargo run --example toy_seed_scan [first_seed] [last_seed]

use tailforge::experiments::{run_augmentation, run_comparison, run_toy_experiment, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let first: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let last: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(first + 19);

    println!("seed | bal(in->lat)  rv_p  ctrl_p | bc_lat bc_raw bc_erm | nll/unif pres d1/d2 | l1 l2 hyb<=max");
    for seed in first..=last {
        let cfg = ExperimentConfig::toy(seed);
        let toy = match run_toy_experiment(&cfg) {
            Ok(r) => r,
            Err(e) => {
                println!("{seed:4} | toy failed: {e}");
                continue;
            }
        };
        let s = &toy.scalars;
        let fi = s["minority_fraction_input"];
        let fl = s["minority_fraction_latent"];
        let rv = s.get("rv_median_pvalue").copied().unwrap_or(f64::NAN);
        let ctrl = s.get("control_rv_median_pvalue").copied().unwrap_or(f64::NAN);
        let bc = s["barcode_constant_fraction_latent"];
        let bcr = s["barcode_constant_fraction_raw"];
        let bce = s["barcode_constant_fraction_tail_erm"];

        let (aug, _) = match run_augmentation(&cfg) {
            Ok(r) => r,
            Err(e) => {
                println!("{seed:4} | aug failed: {e}");
                continue;
            }
        };
        let a = &aug.scalars;
        let nll_ratio = a["decoder_extreme_nll"] / a["uniform_baseline_nll"];
        let pres = a["preservation_fraction"];
        let d1 = a["distinct_1"];
        let d2 = a["distinct_2"];

        let cmp = match run_comparison(&cfg) {
            Ok(r) => r,
            Err(e) => {
                println!("{seed:4} | cmp failed: {e}");
                continue;
            }
        };
        let c = &cmp.scalars;
        let l1 = c["lhtr1_extreme_loss"];
        let l2 = c["lhtr_extreme_loss"];
        let hyb = c["hybrid_overall_loss"];
        let worst = c["nn_overall_loss"].max(c["extreme_only_overall_loss"]);

        let g_bal = fl > fi;
        let g_rv = rv >= 0.1 && ctrl <= 0.01;
        let g_bc = bc >= 0.95 && bcr < bc && bce == 1.0;
        let g_dec = nll_ratio < 0.1 && pres >= 0.95 && d1 > 0.0 && d1 <= 1.0 && d2 > 0.0;
        let g_ord = l2 <= l1;
        let g_hyb = hyb <= worst;
        let all = g_bal && g_rv && g_bc && g_dec && g_ord && g_hyb;
        println!(
            "{seed:4} | {fi:.3}->{fl:.3} {} {rv:.2} {ctrl:.3} {} | {bc:.2} {bcr:.2} {bce:.2} {} | {nll_ratio:.3} {pres:.2} {d1:.3}/{d2:.3} {} | {l1:.3} {l2:.3} {} {}{}",
            flag(g_bal),
            flag(g_rv),
            flag(g_bc),
            flag(g_dec),
            flag(g_ord),
            flag(g_hyb),
            if all { "  <== ALL" } else { "" }
        );
    }
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "+"
    } else {
        "-"
    }
}
