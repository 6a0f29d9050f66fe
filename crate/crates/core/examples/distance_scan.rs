//! A distance sweep through the same configuration path the CLI uses,
//! written as CSV to stdout.

use cvqkd::scan::{run_scan, write_csv, RunConfig};

fn main() -> cvqkd::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{
            "protocol": "qpsk",
            "v_a_snu": 0.49,
            "cutoff": 4,
            "n_total": 1e9,
            "fw_max_iters": 10,
            "sweep": { "distance_km": [0.0, 4.0, 8.0, 12.0, 16.0, 20.0] }
        }"#,
    )?;
    let records = run_scan(&cfg)?;
    write_csv(&cfg, &records, std::io::stdout())
}
