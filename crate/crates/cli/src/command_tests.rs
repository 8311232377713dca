use std::path::Path;

use llekit::dataset::load_csv;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["llekit"];
    argv.extend_from_slice(args);
    crate::run(argv)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    for out in [&a, &b] {
        assert_eq!(cli(&["generate", "--shape", "s-curve", "--n", "50", "--seed", "4", "--noise", "0.1", "--out", out]), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = load_csv(&a, false).unwrap();
    assert_eq!((m.dim(), m.len()), (3, 50));
}

#[test]
fn embed_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (p(dir.path(), "d.csv"), p(dir.path(), "y.csv"));
    assert_eq!(cli(&["generate", "--n", "120", "--seed", "1", "--out", &data]), 0);
    assert_eq!(cli(&["embed", "--in", &data, "--method", "lle", "--k", "8", "--out", &out]), 0);
    let y = load_csv(&out, false).unwrap();
    assert_eq!((y.dim(), y.len()), (2, 120));
}

#[test]
fn oos_and_select_k_run() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, out, ks) = (p(dir.path(), "tr.csv"), p(dir.path(), "te.csv"), p(dir.path(), "o.csv"), p(dir.path(), "k.csv"));
    assert_eq!(cli(&["generate", "--n", "150", "--seed", "2", "--out", &train]), 0);
    assert_eq!(cli(&["generate", "--n", "10", "--seed", "3", "--out", &test]), 0);
    for mapping in ["reconstruct", "eigenfunctions", "kernel-map"] {
        assert_eq!(cli(&["oos", "--in", &train, "--test", &test, "--mapping", mapping, "--out", &out]), 0, "{mapping}");
        assert_eq!(load_csv(&out, false).unwrap().len(), 10);
    }
    assert_eq!(cli(&["select-k", "--in", &train, "--kmin", "5", "--kmax", "7", "--out", &ks]), 0);
    assert_eq!(cli(&["select-k", "--in", &train, "--criterion", "lns", "--kmax", "12", "--out", &ks]), 0);
    let text = std::fs::read_to_string(&ks).unwrap();
    assert_eq!(text.lines().next(), Some("k"));
    assert_eq!(text.lines().count(), 151);
}

#[test]
fn plot_draws_one_circle_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let (pts, svg) = (p(dir.path(), "p.csv"), p(dir.path(), "p.svg"));
    std::fs::write(&pts, "0,0\n1,2\n3,1\n").unwrap();
    assert_eq!(cli(&["plot", "--in", &pts, "--out", &svg]), 0);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<circle").count(), 3);
    assert!(text.starts_with("<svg"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "missing.csv");
    assert_eq!(cli(&["embed", "--in", &missing, "--method", "lle", "--out", &p(dir.path(), "y.csv")]), 1);
    assert_eq!(cli(&["embed", "--method", "no-such-method"]), 2);
    assert_eq!(cli(&["--help"]), 0);

    let data = p(dir.path(), "d.csv");
    assert_eq!(cli(&["generate", "--n", "40", "--out", &data]), 0);
    // labels required but not given
    assert_eq!(cli(&["embed", "--in", &data, "--method", "slle", "--out", &p(dir.path(), "y.csv")]), 2);
}
