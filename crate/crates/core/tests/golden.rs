//! The bundled theta sweep must reproduce the committed CSV files byte for byte.
//! Set `UPDATE_GOLDEN=1` to rewrite them.

use std::fs;
use std::path::{Path, PathBuf};

use switchcredit::report::to_csv;
use switchcredit::scenario::{bundled, evaluate, series_file_name};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn theta_sweep_matches_golden_files() {
    let scenario = bundled("theta_sweep").unwrap();
    let eval = evaluate(&scenario, Path::new("."), false, &|_| {}).unwrap();
    assert_eq!(eval.numerical_failures(), 0);
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    if update {
        fs::create_dir_all(golden_dir()).unwrap();
    }
    for series in &eval.series {
        let file = golden_dir().join(series_file_name(&scenario.name, series));
        let csv = to_csv(series);
        if update {
            fs::write(&file, &csv).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&file).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
        if csv != expected {
            let first = csv.lines().zip(expected.lines()).position(|(a, b)| a != b);
            panic!("{} differs from the golden file (first differing line {:?})", file.display(), first.map(|i| i + 1));
        }
    }
}
