//! The command-line front end driven in-process on the bundled demo campaign.
//! Equivalent to `stochtest gate --config examples/campaign/demo.yaml ...`.

use std::path::Path;

fn main() {
    let campaign = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/campaign/demo.yaml");
    let work = std::env::temp_dir().join(format!("stochtest-cli-{}", std::process::id()));
    let store = work.join("traces.jsonl");
    let reports = work.join("reports");

    for sub in ["calibrate", "gate", "replay", "coverage"] {
        println!("$ stochtest {sub} --config {} --seed 7", campaign.display());
        let code = stochtest::cli::run_from([
            "stochtest".as_ref(),
            sub.as_ref(),
            "--config".as_ref(),
            campaign.as_os_str(),
            "--store".as_ref(),
            store.as_os_str(),
            "--report-dir".as_ref(),
            reports.as_os_str(),
            "--seed".as_ref(),
            "7".as_ref(),
        ] as [&std::ffi::OsStr; 10]);
        println!("exit code {code}\n");
    }
    let mut names: Vec<_> = std::fs::read_dir(&reports).into_iter().flatten().flatten().map(|e| e.file_name()).collect();
    names.sort();
    println!("reports: {names:?}");
    std::fs::remove_dir_all(&work).ok();
}
