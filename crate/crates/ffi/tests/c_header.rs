use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "bulbnet.h"

int main(void) {
    double ref[3][4] = {{1, 0, 2, 0}, {0, 3, 0, 1}, {2, 2, 0, 0}};
    BulbnetModel *m = NULL;
    if (bulbnet_model_new(NULL, &ref[0][0], 3, 4, 7, &m) != BULBNET_STATUS_OK) return 1;
    const char *names[3] = {"a", "b", "c"};
    for (int i = 0; i < 3; i++)
        if (bulbnet_model_train(m, ref[i], 4, names[i]) != BULBNET_STATUS_OK) return 2;
    char *label = NULL;
    double sim = -1;
    if (bulbnet_model_predict(m, ref[1], 4, &label, &sim) != BULBNET_STATUS_OK) return 3;
    printf("%s %zu\n", label, bulbnet_model_class_count(m));
    bulbnet_string_free(label);
    if (bulbnet_model_train(m, ref[0], 3, "d") != BULBNET_STATUS_DATA) return 4;
    if (bulbnet_last_error() == NULL || strlen(bulbnet_last_error()) == 0) return 5;
    bulbnet_model_free(m);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let lib = target_dir().join("libbulbnet_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    let bin = tmp.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut words = text.split_whitespace();
    assert!(["a", "b", "c", "none_of_the_above"].contains(&words.next().unwrap()));
    assert_eq!(words.next(), Some("3"));
}
