// Drive the command-line interface in-process: generate, train, evaluate.

use kafnet::cli::run;

pub fn run_example() -> kafnet::Result<()> {
    let dir = std::env::temp_dir().join(format!("kafnet-cli-{}", std::process::id()));
    let d = dir.to_str().expect("utf-8 temp dir");
    let code = run([
        "kafnet",
        "gen",
        "--preset",
        "trend-c",
        "--samples",
        "20",
        "--variates",
        "2",
        "--out",
        d,
    ]);
    assert_eq!(code, 0);
    let manifest = format!("{d}/manifest.json");
    let run_dir = format!("{d}/run");
    let code = run([
        "kafnet",
        "train",
        "--data",
        &manifest,
        "--out",
        &run_dir,
        "--hidden",
        "8",
        "--heads",
        "2",
        "--rff-dim",
        "8",
        "--epochs",
        "2",
        "--batch-size",
        "4",
    ]);
    assert_eq!(code, 0);
    let ckpt = format!("{run_dir}/checkpoint.json");
    assert_eq!(
        run([
            "kafnet",
            "eval",
            "--checkpoint",
            &ckpt,
            "--data",
            &manifest,
            "--out",
            &run_dir
        ]),
        0
    );
    // missing checkpoint: validation error
    assert_eq!(
        run([
            "kafnet",
            "eval",
            "--checkpoint",
            "/nonexistent",
            "--data",
            &manifest,
            "--out",
            &run_dir
        ]),
        2
    );
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
