#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use relume::detail::PatchDictionary;
use relume::eval::synth_object;
use relume::io;

/// Four centred gradient atoms on 6×6 patches.
pub fn gradient_dictionary() -> PatchDictionary {
    let mut atoms = Vec::new();
    for (gx, gy) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)] {
        let mut a: Vec<f64> = (0..36).map(|k| gx * (k % 6) as f64 + gy * (k / 6) as f64).collect();
        let m = a.iter().sum::<f64>() / 36.0;
        a.iter_mut().for_each(|v| *v -= m);
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.iter_mut().for_each(|v| *v /= n);
        atoms.extend(a);
    }
    PatchDictionary::new(6, 3, 0.05, atoms).unwrap()
}

/// Inputs on disk plus one model built from them by the binary.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub dict: PathBuf,
    pub model: PathBuf,
}

pub fn relume(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relume"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let object = synth_object(3, 64).unwrap();
        let image = root.join("fragment.pfm");
        io::save_pfm(&object.render(&object.capture_light()).unwrap(), &image).unwrap();
        let mask = root.join("matte.png");
        io::save_mask(&object.mask, &mask).unwrap();
        let dict = root.join("dict.pfm");
        gradient_dictionary().save(&dict).unwrap();
        let model = root.join("model");
        let out = relume(&["build", "--image", p(&image), "--mask", p(&mask), "--dict", p(&dict), "--out", p(&model)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Fixture {
            _dir: dir,
            root,
            image,
            mask,
            dict,
            model,
        }
    })
}
