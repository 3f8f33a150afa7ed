use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crflow"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn run_default_config_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--output"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    assert!(dir.path().join("energy_ledger.csv").exists());
    assert!(dir.path().join("mass_history.csv").exists());
    assert!(dir.path().join("snapshot_0000.vtk").exists());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[time]\ndt = -0.01\nt_final = 0.1\n");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
}

#[test]
fn too_few_levels_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-inequalities", "--levels", "1", "--output"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
}

#[test]
fn degenerate_mesh_exits_3() {
    // needle triangles: theta far below the rejection threshold
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("needle.txt");
    write(&mesh, "4\n0 0\n1 0\n1 0.01\n0 0.01\n2\n0 1 2\n0 2 3\n");
    let cfg = dir.path().join("cfg.toml");
    write(
        &cfg,
        &format!(
            "[mesh]\nkind = \"file\"\npath = \"{}\"\n[time]\ndt = 0.01\nt_final = 0.05\n",
            mesh.display()
        ),
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--output"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{:?}", out);
}

#[test]
fn verify_inequalities_deterministic_csv() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = bin()
            .args(["verify-inequalities", "--levels", "4", "--seed", "7", "--output"])
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{:?}", out);
    }
    for name in [
        "sobolev_vh.csv",
        "jump_bound.csv",
        "norm_equivalence.csv",
        "poincare.csv",
        "projection_stability.csv",
    ] {
        let a = fs::read(d1.path().join(name)).unwrap();
        let b = fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(std::str::from_utf8(&a)
            .unwrap()
            .starts_with("level,h,theta,max_ratio\n"));
    }
}
