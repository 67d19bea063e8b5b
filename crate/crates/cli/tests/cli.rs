use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn ifm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifm")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ifm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small Frappe-layout log table with a deterministic pattern.
fn frappe_csv(dir: &Path, rows: usize) -> std::path::PathBuf {
    let mut s = String::from("user\titem\tcnt\tdaytime\tweekday\tisweekend\thomework\tcost\tweather\tcountry\tcity\n");
    for r in 0..rows {
        let user = r % 13;
        let item = (r * 7 + user) % 17;
        writeln!(
            s,
            "{user}\t{item}\t1\t{}\t{}\t{}\thome\t{}\t{}\tUS\t{}",
            ["morning", "evening", "night"][r % 3],
            ["monday", "sunday"][r % 2],
            ["workday", "weekend"][r % 2],
            ["free", "paid"][item % 2],
            ["sunny", "cloudy", "rainy"][(r / 3) % 3],
            user % 4
        )
        .unwrap();
    }
    let path = dir.join("frappe.csv");
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = frappe_csv(d, 200);
    let conv = d.join("conv");
    let out = ok(&["convert-frappe", "--input", p(&csv), "--out", p(&conv)]);
    assert!(out.contains("logs\t200"), "{out}");
    assert!(out.contains("records\t600"), "{out}");
    assert!(out.contains("fields\t10"), "{out}");
    let data = conv.join("data.txt");
    let schema = conv.join("schema.tsv");

    let split = d.join("split");
    let out = ok(&["split", "--data", p(&data), "--schema", p(&schema), "--out", p(&split)]);
    assert_eq!(out, "train\t420\nprobe\t120\ntest\t60\n");

    let pre = d.join("pre");
    ok(&["pretrain", "--split-dir", p(&split), "--schema", p(&schema), "--k", "4", "--epochs", "3", "--out", p(&pre)]);
    let run = d.join("run");
    let report = ok(&[
        "train",
        "--split-dir",
        p(&split),
        "--schema",
        p(&schema),
        "--mode",
        "ifm-sampling",
        "--k",
        "4",
        "--kf",
        "2",
        "--ka",
        "4",
        "--tau",
        "5",
        "--keep-prob",
        "0.8",
        "--lambda-f",
        "0.01",
        "--batch-size",
        "32",
        "--lr",
        "0.05",
        "--optimizer",
        "adam",
        "--epochs",
        "3",
        "--patience",
        "2",
        "--seed",
        "7",
        "--same-field-pairs",
        "drop",
        "--pretrain-from",
        p(&pre.join("model.bin")),
        "--out",
        p(&run),
        "--auc",
    ]);
    assert!(report.starts_with("# ifm-report v1"), "{report}");
    for f in ["model.bin", "checkpoint.bin", "train.log", "report.txt", "config.toml"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let cfg = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(cfg.contains("sample_c = 23"), "{cfg}");

    let eval = ok(&[
        "evaluate",
        "--model",
        p(&run.join("model.bin")),
        "--data",
        p(&split.join("test.txt")),
        "--schema",
        p(&schema),
        "--seed",
        "7",
    ]);
    let rmse = |text: &str| text.lines().find(|l| l.starts_with("test_rmse")).unwrap().to_owned();
    assert_eq!(rmse(&eval), rmse(&report));

    let table = ok(&["report-field-importance", "--model", p(&run.join("model.bin")), "--schema", p(&schema)]);
    assert_eq!(table.lines().count(), 1 + 45);
    let total: f64 = table.lines().skip(1).map(|l| l.split('\t').nth(3).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-3);
}

#[test]
fn sweep_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = frappe_csv(d, 120);
    let conv = d.join("conv");
    ok(&["convert-frappe", "--input", p(&csv), "--out", p(&conv)]);
    let exp = d.join("exp.toml");
    std::fs::write(
        &exp,
        "data = \"conv/data.txt\"\nschema = \"conv/schema.tsv\"\nout = \"sweep\"\nseeds = [1, 2]\n\n\
         [train]\nmode = \"ifm\"\nk = 4\nk_f = 2\nk_a = 4\nmax_epochs = 2\n\n\
         [[sweep]]\nparam = \"keep_prob\"\nvalues = [0.5, 1.0]\n",
    )
    .unwrap();
    let summary = ok(&["sweep", "--config", p(&exp)]);
    assert_eq!(summary.lines().count(), 3, "{summary}");
    let reports = std::fs::read_dir(d.join("sweep"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "report"))
        .count();
    assert_eq!(reports, 4);
    assert_eq!(ok(&["sweep", "--config", p(&exp)]), summary);
}

#[test]
fn errors_are_one_line_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (
            vec![
                "convert-frappe".into(),
                "--input".into(),
                p(&d.join("missing.csv")).into(),
                "--out".into(),
                p(d).into(),
            ],
            "io",
        ),
        (
            vec![
                "train".into(),
                "--data".into(),
                p(&d.join("x")).into(),
                "--schema".into(),
                p(&d.join("y")).into(),
                "--keep-prob".into(),
                "0".into(),
                "--out".into(),
                p(d).into(),
            ],
            "io",
        ),
    ];
    for (args, category) in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = ifm(&args);
        assert!(!out.status.success());
        let err = String::from_utf8(out.stderr).unwrap();
        let last = err.lines().last().unwrap();
        assert!(last.starts_with(&format!("error[{category}]: ")), "{err}");
    }

    let csv = frappe_csv(d, 30);
    let conv = d.join("conv");
    ok(&["convert-frappe", "--input", p(&csv), "--out", p(&conv)]);
    let out = ifm(&[
        "train",
        "--data",
        p(&conv.join("data.txt")),
        "--schema",
        p(&conv.join("schema.tsv")),
        "--keep-prob",
        "0",
        "--out",
        p(&d.join("r")),
    ]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().last().unwrap().starts_with("error[parameter]: "), "{err}");

    let out = ifm(&[
        "train",
        "--data",
        p(&conv.join("data.txt")),
        "--schema",
        p(&conv.join("schema.tsv")),
        "--mode",
        "fm",
        "--epochs",
        "1",
        "--k",
        "2",
        "--out",
        p(&d.join("fm")),
    ]);
    assert!(out.status.success());
    let out = ifm(&[
        "report-field-importance",
        "--model",
        p(&d.join("fm/model.bin")),
        "--schema",
        p(&conv.join("schema.tsv")),
    ]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().last().unwrap().starts_with("error[contract]: "), "{err}");
}
