use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clir"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Source word khela and five targets at fixed cosines from it.
fn khela_fixture(dir: &Path, method: &str, extra: &str) -> String {
    let targets = [
        ("cricket", 0.64f64),
        ("football", 0.69),
        ("game", 0.8),
        ("laptop", 0.32),
        ("computer", 0.25),
    ];
    let mut tgt = format!("{} 2\n", targets.len());
    for (w, s) in targets {
        tgt.push_str(&format!("{w} {} {}\n", s as f32, (1.0 - s * s).sqrt() as f32));
    }
    fs::write(dir.join("target.vec"), tgt).unwrap();
    fs::write(dir.join("source.vec"), "2 2\nkhela 1 0\nkhana 0 1\n").unwrap();
    fs::write(dir.join("projection.txt"), "2 2 0 1\n1 0\n0 1\n").unwrap();
    fs::write(dir.join("topics.tsv"), "q1\tkhela\nq2\tkhela khana\nq3\tGuwahati\n").unwrap();
    fs::write(dir.join("dictionary.tsv"), "khela\tgame\n").unwrap();
    let config = dir.join("khela.toml");
    fs::write(
        &config,
        format!(
            "method = \"{method}\"\nk = 3\nout_dir = \"out\"\n\n[paths]\nsource_embeddings = \"source.vec\"\n\
             target_embeddings = \"target.vec\"\nprojection = \"projection.txt\"\ntopics = \"topics.tsv\"\n\
             dictionary = \"dictionary.tsv\"\n{extra}"
        ),
    )
    .unwrap();
    config.to_string_lossy().into_owned()
}

fn query_line(dir: &Path, qid: &str) -> String {
    let text = fs::read_to_string(dir.join("out/queries.tsv")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{qid}\t")).map(str::to_string))
        .unwrap_or_else(|| panic!("{qid} missing from {text}"))
}

#[test]
fn generated_testbed_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tb");
    let gen = clir(&[
        "generate-testbed",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--tokens",
        "20000",
    ]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let config = String::from_utf8(gen.stdout).unwrap().trim().to_string();
    assert!(config.ends_with("pipeline.toml"), "{config}");

    let run = clir(&["pipeline", "-c", &config]);
    assert!(run.status.success(), "{}", stderr(&run));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(
        stdout.contains("indexed ") && stdout.contains("translated 25 queries"),
        "{stdout}"
    );
    assert!(stdout.contains("map\tall\t"), "{stdout}");
    for file in [
        "index.clir",
        "projection.txt",
        "queries.tsv",
        "run.txt",
        "metrics.txt",
        "manifest.toml",
    ] {
        assert!(out.join("out").join(file).is_file(), "{file}");
    }
    let header = fs::read_to_string(out.join("out/queries.tsv")).unwrap();
    assert!(header.starts_with("# method=we seed=9"), "{header}");

    // A method override on the command line reaches the translation stage.
    let dict = clir(&[
        "translate",
        "-c",
        &config,
        "--method",
        "dict",
        "--out-dir",
        out.join("dict").to_str().unwrap(),
    ]);
    assert!(dict.status.success(), "{}", stderr(&dict));
    let header = fs::read_to_string(out.join("dict/queries.tsv")).unwrap();
    assert!(header.starts_with("# method=dict"), "{header}");
}

#[test]
fn khela_translation_and_named_entities() {
    let dir = tempfile::tempdir().unwrap();
    let config = khela_fixture(dir.path(), "simvec-max", "");
    let out = clir(&["translate", "-c", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let q1 = query_line(dir.path(), "q1");
    let terms: Vec<(&str, f64)> = q1
        .split_whitespace()
        .map(|t| {
            let (w, v) = t.split_once('^').unwrap();
            (w, v.parse().unwrap())
        })
        .collect();
    let expected = [("game", 0.37559), ("football", 0.32394), ("cricket", 0.30047)];
    assert_eq!(terms.len(), 3, "{q1}");
    for ((w, v), (ew, ev)) in terms.iter().zip(expected) {
        assert_eq!(*w, ew);
        assert!((v - ev).abs() < 1e-5, "{q1}");
    }
    // An out-of-vocabulary name passes through on its own.
    assert_eq!(query_line(dir.path(), "q3"), "Guwahati^1");
}

#[test]
fn dictionary_method_warns_about_missing_terms() {
    let dir = tempfile::tempdir().unwrap();
    let config = khela_fixture(dir.path(), "dict", "");
    let out = clir(&["translate", "-c", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("no dictionary translation for \"khana\""),
        "{}",
        stderr(&out)
    );
    assert_eq!(query_line(dir.path(), "q2"), "game^1");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let config = khela_fixture(dir.path(), "we", "");
    let bad_k = clir(&["translate", "-c", &config, "-k", "0"]);
    assert_eq!(bad_k.status.code(), Some(1), "{}", stderr(&bad_k));

    let missing = khela_fixture(dir.path(), "we", "corpus = \"nowhere.sgml\"\n");
    let out = clir(&["index", "-c", &missing]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nowhere.sgml"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());

    fs::write(
        dir.path().join("dup.sgml"),
        "<DOC><DOCNO>en.7</DOCNO><TEXT>one</TEXT></DOC>\n<DOC><DOCNO>en.7</DOCNO><TEXT>two</TEXT></DOC>\n",
    )
    .unwrap();
    let dup = khela_fixture(dir.path(), "we", "corpus = \"dup.sgml\"\n");
    let out = clir(&["index", "-c", &dup]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("en.7"), "{}", stderr(&out));

    let no_config = clir(&["index", "-c", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(no_config.status.code(), Some(1));
}
