use maser_core::cli::run_with;
use maser_core::CouplingHistogram;

fn data(name: &str) -> String {
    format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("maser").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn temp_path(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("maser-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn bin_writes_normalised_histogram() {
    let path = temp_path("hist.csv");
    let (code, out, err) =
        run(&["bin", "--fieldmap", &data("fieldmap.csv"), "--n-total", "2.7e15", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("10 bins"), "{out}");
    let hist = CouplingHistogram::load(&path).unwrap();
    assert_eq!(hist.bins(), 10);
    assert!((hist.total_population() / 2.7e15 - 1.0).abs() < 1e-9);
    // The shipped histogram was produced by this command.
    let shipped = CouplingHistogram::load(data("fieldmap10bin.csv")).unwrap();
    for ((g, n), (gs, ns)) in hist.iter().zip(shipped.iter()) {
        assert!((g / gs - 1.0).abs() < 1e-12 && (n / ns - 1.0).abs() < 1e-12);
    }
}

#[test]
fn simulate_reports_steady_state() {
    let path = temp_path("transient.csv");
    let (code, out, err) = run(&["simulate", "--config", &data("pentacene10bin.cfg"), "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("steady-state power 9.10"), "{out}");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t_s,photon_number,power_W"));
    assert_eq!(text.lines().count(), 2002);
}

#[test]
fn unknown_config_key_is_named() {
    let path = temp_path("bad.cfg");
    std::fs::write(&path, "[cavity]\nkapa_mhz = 2.5\n[coupling]\ngaussian_mean_per_s = 0.18\nn_total = 1e15\n").unwrap();
    let (code, _, err) = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("kapa_mhz"), "{err}");
}

#[test]
fn missing_input_file_is_an_io_error() {
    let (code, _, err) = run(&["bin", "--fieldmap", "/nonexistent/fieldmap.csv", "--n-total", "1e15"]);
    assert_ne!(code, 0);
    assert!(!err.is_empty());
}

#[test]
fn usage_errors_exit_64() {
    let (code, _, _) = run(&["simulate"]);
    assert_eq!(code, 64);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 64);
}

#[test]
fn oracle_check_vacuum_rabi() {
    let (code, out, err) = run(&["oracle-check", "--preset", "vacuum-rabi"]);
    assert_eq!(code, 0, "{err}");
    let first = out.lines().next().unwrap();
    let deviation: f64 = first.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(deviation < 1e-6, "{first}");
    assert!(out.contains("gt = 1: oracle n = 0.708073418"), "{out}");
}

#[test]
fn sweep_writes_one_curve_per_width() {
    let path = temp_path("sweep.csv");
    let (code, out, err) = run(&["sweep", "--config", &data("gaussian_sweep.cfg"), "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 5, "{out}");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 10);
}
