use std::path::Path;
use std::process::Command;

use vsp_cli::io::{decode_vspm, encode_vspm, parse_csv, parse_pgm, read_vector, Dtype};
use vsp_cli::settings::Settings;
use vsp_cli::spec_file::{parse_spec, preset_spec};
use vsp_core::{ComplexMatrix, C64};

fn vsp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vsp"));
    cmd.env_remove("VSP_THREADS");
    cmd
}

fn gen_fixture(dir: &Path, seed: u64) {
    let status = vsp()
        .args(["gen", "--n", "40", "--m", "20", "--nonzeros", "6", "--l", "2", "--snr-db", "25"])
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(dir)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn vspm_round_trip() {
    let m = ComplexMatrix::from_fn(3, 4, |i, j| C64::new(i as f64 - 0.5, j as f64 * 1e-300));
    let bytes = encode_vspm(&m, Dtype::Complex128).unwrap();
    assert_eq!(&bytes[..4], b"VSPM");
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 1);
    assert_eq!(decode_vspm(&bytes).unwrap(), m);

    let real = m.map(|z| C64::new(z.re, 0.0));
    let bytes = encode_vspm(&real, Dtype::Float64).unwrap();
    assert_eq!(bytes.len(), 24 + 12 * 8);
    assert_eq!(decode_vspm(&bytes).unwrap(), real);
    assert!(encode_vspm(&m, Dtype::Float64).is_err());
    assert!(decode_vspm(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_vspm(b"NOPE").is_err());
}

#[test]
fn csv_import() {
    let m = parse_csv("1, 2-1i\n# comment\n-3.5, 0+4i\n").unwrap();
    assert_eq!(m.shape(), (2, 2));
    assert_eq!(m[(0, 1)], C64::new(2.0, -1.0));
    assert_eq!(m[(1, 1)], C64::new(0.0, 4.0));
    assert!(parse_csv("1,2\n3\n").is_err());
    assert!(parse_csv("1,x\n").is_err());
}

#[test]
fn pgm_import() {
    let ascii = parse_pgm(b"P2\n# c\n3 2\n4\n0 1 2\n3 4 0\n").unwrap();
    assert_eq!(ascii.shape(), (2, 3));
    assert_eq!(ascii[(1, 1)], C64::new(1.0, 0.0));
    let mut binary = b"P5 2 2 255\n".to_vec();
    binary.extend_from_slice(&[0, 255, 51, 102]);
    let img = parse_pgm(&binary).unwrap();
    assert_eq!(img[(1, 0)], C64::new(0.2, 0.0));
    assert!(parse_pgm(b"P5 2 2 255\n\x00").is_err());
}

#[test]
fn settings_text_round_trip() {
    let mut s = Settings::default();
    s.apply_text("alpha = -0.25\nsolver = gd\ntopology = grid:4x5\nk = 7 # comment\nsigma2 = 0.123456789012345\ninit = 2.5\nsnr_convention = per-component\n", "inline")
        .unwrap();
    let mut back = Settings::default();
    back.apply_text(&s.to_text(), "round trip").unwrap();
    assert_eq!(back, s);
    assert!(Settings::default().apply_text("bogus = 1", "x").is_err());
    assert!(Settings::default().apply_text("alpha 1", "x").is_err());
}

#[test]
fn spec_file_parsing() {
    let (spec, settings) = parse_spec(
        "id = \"t\"\nn = 50\nk = 8\nl = 2\nm = 25\nsnr_db = [10, 20.5]\nmatrix_kind = \"real_normal\"\ntrials = 3\n[solver]\nt_in = 12\nsolver = \"gd\"\n",
        "inline",
    )
    .unwrap();
    assert_eq!(spec.m_grid, vec![25]);
    assert_eq!(spec.snr_grid, vec![10.0, 20.5]);
    assert_eq!(settings.vsp.t_in, 12);
    assert!(parse_spec("id = \"t\"\nn = 5\n", "x").is_err());
    let err = parse_spec("id=\"t\"\nn=5\nk=1\nl=1\nm=2\nsnr_db=1\nmatrix_kind=\"gauss\"\n", "x").unwrap_err();
    assert!(err.to_string().contains("concat_exp_gauss"));
    assert!(preset_spec("fig6a").is_ok());
    assert!(preset_spec("fig9").is_err());
}

#[test]
fn gen_is_byte_stable_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_fixture(&a, 11);
    gen_fixture(&b, 11);
    for f in ["A.vspm", "x.vspm", "y.vspm", "w.vspm", "vsp.conf", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let x = read_vector(&a.join("x.vspm")).unwrap();
    let nonzeros = x.iter().filter(|z| z.norm_sqr() > 0.0).count();
    assert_eq!(manifest["k"].as_u64().unwrap() as usize, nonzeros);

    let mat = vsp_cli::io::read_matrix(&a.join("A.vspm")).unwrap();
    let y = read_vector(&a.join("y.vspm")).unwrap();
    let w = read_vector(&a.join("w.vspm")).unwrap();
    assert_eq!(y, &mat * &x + &w);
}

#[test]
fn recover_reproduces_manifest_nmse() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    gen_fixture(&fx, 7);
    let out = vsp()
        .arg("recover")
        .arg("--matrix")
        .arg(fx.join("A.vspm"))
        .arg("--measurements")
        .arg(fx.join("y.vspm"))
        .arg("--truth")
        .arg(fx.join("x.vspm"))
        .arg("--config")
        .arg(fx.join("vsp.conf"))
        .arg("--output")
        .arg(tmp.path().join("rec"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(fx.join("manifest.json")).unwrap()).unwrap();
    let expected = manifest["vsp_nmse"].as_f64().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("nmse "))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(printed.to_bits(), expected.to_bits());
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("rec/diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["rounds"].as_array().unwrap().len(), 2);
    assert!(diag["rounds"][0]["kappa"].as_f64().unwrap() > 0.0);
}

#[test]
fn recover_with_exact_truth_prints_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    gen_fixture(&fx, 3);
    // First recover, then feed the estimate back as the truth.
    let rec = tmp.path().join("rec");
    let base = |truth: &Path| {
        vsp()
            .arg("recover")
            .arg("--matrix")
            .arg(fx.join("A.vspm"))
            .arg("--measurements")
            .arg(fx.join("y.vspm"))
            .arg("--config")
            .arg(fx.join("vsp.conf"))
            .arg("--truth")
            .arg(truth)
            .arg("--output")
            .arg(&rec)
            .output()
            .unwrap()
    };
    assert!(base(&fx.join("x.vspm")).status.success());
    let again = base(&rec.join("x_hat.vspm"));
    assert!(again.status.success());
    assert!(String::from_utf8(again.stdout).unwrap().contains("nmse 0 "));
}

#[test]
fn usage_errors_exit_two() {
    let out = vsp().args(["recover", "--measurements", "y.vspm", "--output", "o"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--matrix"));

    let out = vsp().args(["bench", "--preset", "fig6a", "--matrix-kind", "gaussian"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    for kind in ["scg", "cropped_hermitian", "concat_exp_gauss", "concat_exp", "real_normal"] {
        assert!(err.contains(kind), "{err}");
    }

    let out = vsp().args(["bench", "--preset", "fig6a", "--t-in", "0", "--trials", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("trials") && err.contains("t_in"), "{err}");

    let out = vsp().args(["bench", "--preset", "fig6a", "--vartheta", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recover_rejects_mismatched_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    gen_fixture(&fx, 5);
    let out = vsp()
        .arg("recover")
        .arg("--matrix")
        .arg(fx.join("A.vspm"))
        .arg("--measurements")
        .arg(fx.join("x.vspm"))
        .arg("--output")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--measurements"));

    let out = vsp()
        .arg("recover")
        .arg("--matrix")
        .arg(tmp.path().join("missing.vspm"))
        .arg("--measurements")
        .arg(fx.join("y.vspm"))
        .arg("--output")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--matrix"));
}

#[test]
fn fig6a_preset_aggregate_has_six_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vsp()
        .args(["bench", "--preset", "fig6a", "--trials", "1", "--jobs", "1", "--t-in", "3", "--out-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = std::fs::read_to_string(tmp.path().join("fig6a_aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 6);
    assert!(agg.lines().skip(1).all(|l| l.starts_with("fig6a,cropped_hermitian,")));
    assert!(tmp.path().join("fig6a.gp").exists());
}

#[test]
fn threads_env_caps_the_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vsp()
        .env("VSP_THREADS", "zero")
        .args(["bench", "--preset", "fig6a", "--trials", "1"])
        .arg("--out-dir")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VSP_THREADS"));
}
