use std::path::Path;
use std::process::{Command, Output};

fn sitgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sitgrid"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&sitgrid(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&sitgrid(tmp.path(), &["--version"])), 0);
    assert_eq!(code(&sitgrid(tmp.path(), &[])), 1);
    assert_eq!(code(&sitgrid(tmp.path(), &["bogus"])), 1);
    assert_eq!(code(&sitgrid(tmp.path(), &["synth"])), 1, "missing --out");
    assert_eq!(
        code(&sitgrid(
            tmp.path(),
            &["synth", "--variant", "sideways", "--out", "x.csv"]
        )),
        1
    );
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(
        code(&sitgrid(
            d,
            &["preprocess", "--input", "missing.csv", "--out", "o.csv"]
        )),
        2
    );
    std::fs::write(d.join("bad.csv"), "not,a,dataset\n1,2,3\n").unwrap();
    assert_eq!(
        code(&sitgrid(
            d,
            &["preprocess", "--input", "bad.csv", "--out", "o.csv"]
        )),
        2
    );
    std::fs::write(d.join("model.json"), "{\"format_version\": 1, \"fam").unwrap();
    std::fs::write(
        d.join("f.csv"),
        "participant_id,event,posture,x\np,e,left,1\n",
    )
    .unwrap();
    assert_eq!(
        code(&sitgrid(
            d,
            &[
                "evaluate",
                "--features",
                "f.csv",
                "--model",
                "model.json",
                "--out",
                "r"
            ]
        )),
        2
    );
}

#[test]
fn stage_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("f.csv"),
        "participant_id,event,posture,x\np,e,left,1\np,f,left,2\n",
    )
    .unwrap();
    let out = sitgrid(
        d,
        &[
            "train",
            "--features",
            "f.csv",
            "--family",
            "gnb",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn saved_model_scores_like_the_original() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("g.json"),
        r#"{"n_participants": 3, "snapshots_or_events": 4}"#,
    )
    .unwrap();
    for args in [
        &["synth", "--config", "g.json", "--out", "data.csv"][..],
        &["preprocess", "--input", "data.csv", "--out", "clean.csv"],
        &[
            "featurize",
            "--input",
            "clean.csv",
            "--groups",
            "com,quadrants,edges",
            "--out",
            "f.csv",
        ],
        &[
            "train",
            "--features",
            "f.csv",
            "--family",
            "lr",
            "--out",
            "m.json",
        ],
        &[
            "evaluate",
            "--features",
            "f.csv",
            "--model",
            "m.json",
            "--out",
            "r",
        ],
    ] {
        let out = sitgrid(d, args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let text = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 10);
    assert_eq!(text.lines().count(), 1 + 3 * 6 * 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r/report.json")).unwrap()).unwrap();
    assert_eq!(report["weighted_avg"]["support"], 72);
}

#[test]
fn plot_requires_center_of_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("f.csv"),
        "participant_id,event,posture,x\np,e,left,1\n",
    )
    .unwrap();
    assert_eq!(
        code(&sitgrid(
            d,
            &["plot", "--features", "f.csv", "--out", "p.csv"]
        )),
        2
    );
    std::fs::write(
        d.join("g.csv"),
        "participant_id,event,posture,seat_com_row,seat_com_col\np,e,left,4.5,2\n",
    )
    .unwrap();
    assert_eq!(
        code(&sitgrid(
            d,
            &["plot", "--features", "g.csv", "--out", "p.csv"]
        )),
        0
    );
    assert_eq!(
        std::fs::read_to_string(d.join("p.csv")).unwrap(),
        "class,com_row,com_col\nleft,4.5,2\n"
    );
}

#[test]
fn paper_matrix_specs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper_matrix");
    let specs = sitgrid::experiment::load_matrix_dir(&dir).unwrap();
    assert!(specs.len() >= 20);
    for s in &specs {
        s.validate().unwrap();
    }
}
