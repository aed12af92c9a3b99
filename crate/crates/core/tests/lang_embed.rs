mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use qlabel::corpus::{write_vectors, ClassLabel, EmbeddedRecord};
use qlabel::embed::{
    attach_external_vectors, build_idf, embed_hashed, fnv1a64, hashed_embed, EmbeddingProvider, ProviderKind,
};
use qlabel::lang::{detect_language, length_gate, tokenize, TokenGate, TokenizedDoc};
use rand::seq::SliceRandom;

use ClassLabel::{NotQuestion as NQ, Question as Q};

// ---------- tokenizer ----------

#[test]
fn tokenizer_matches_treebank_reference() {
    let text = std::fs::read_to_string(common::fixture("tokens/treebank.tsv")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let (sentence, expected) = line.split_once('\t').unwrap();
        let expected: Vec<&str> = expected.split(' ').filter(|t| !t.is_empty()).collect();
        assert_eq!(tokenize(sentence), expected, "{sentence}");
        n += 1;
    }
    assert!(n >= 30);
}

#[test]
fn tokenizer_examples() {
    assert_eq!(tokenize("Can't open file."), ["Ca", "n't", "open", "file", "."]);
    assert_eq!(tokenize("hello world"), ["hello", "world"]);
    assert!(tokenize("").is_empty());
    assert!(tokenize(" \n\t ").is_empty());
    assert_eq!(tokenize("wait... what?!"), ["wait", ".", ".", ".", "what", "?", "!"]);
}

proptest! {
    #[test]
    fn tokens_preserve_alphanumerics(text in "[a-zA-Z0-9 .,;!?'\n-]{0,80}") {
        let tokens = tokenize(&text);
        for t in &tokens {
            prop_assert!(!t.is_empty() && !t.chars().any(char::is_whitespace));
        }
        let count = |s: &str| s.chars().filter(|c| c.is_alphanumeric()).count();
        prop_assert_eq!(tokens.iter().map(|t| count(t)).sum::<usize>(), count(&text));
        let joined: String = tokens.concat();
        let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(joined, squeezed);
    }
}

// ---------- token gate ----------

#[test]
fn token_gate_exhaustive() {
    let gate = TokenGate::default();
    let accepted: BTreeSet<usize> = (0..=250).filter(|&n| gate.accepts(n)).collect();
    assert_eq!(accepted, (6..=199).collect());
    for n in 0..=250 {
        let tokens = vec!["w".to_string(); n];
        assert_eq!(length_gate(&tokens), (6..=199).contains(&n), "{n}");
    }
    assert!(TokenGate::new(10, 3).is_err());
    let doc = TokenizedDoc::new(1, Q, "one two three four five", gate);
    assert!(!doc.eligible);
    let doc = TokenizedDoc::new(1, Q, "one two three four five six", gate);
    assert!(doc.eligible);
}

// ---------- language detection ----------

const ENGLISH: [&str; 6] = [
    "How do I configure the proxy settings for this client?",
    "The application crashes whenever I try to open a large project from the recent files menu.",
    "Is there any documentation on how to write a custom plugin for the build system?",
    "After updating to the latest version the sidebar no longer shows my bookmarks.",
    "Could you explain the difference between these two configuration options?",
    "I would like to contribute a translation but I am not sure where the strings live.",
];

const FOREIGN: [(&str, &str); 6] = [
    ("es", "¿Cómo puedo configurar esto correctamente en mi proyecto?"),
    ("fr", "Je ne comprends pas pourquoi la compilation échoue avec cette version du paquet."),
    ("de", "Nach dem Update startet die Anwendung nicht mehr und zeigt keine Fehlermeldung an."),
    ("pt", "Não consigo encontrar a opção para alterar o idioma da interface do programa."),
    ("ru", "После обновления приложение перестало запускаться, что можно сделать в этой ситуации?"),
    ("zh", "更新到最新版本之后，应用程序无法启动，也没有显示任何错误信息，请问应该如何解决这个问题？"),
];

#[test]
fn english_detected() {
    for text in ENGLISH {
        let v = detect_language(text);
        assert!(v.is_english, "{text}: {v:?}");
        assert_eq!(v.lang, "en");
        assert!((0.0..=1.0).contains(&v.confidence));
    }
}

#[test]
fn other_languages_rejected() {
    for (code, text) in FOREIGN {
        let v = detect_language(text);
        assert!(!v.is_english, "{text}: {v:?}");
        assert_eq!(v.lang, code, "{text}: {v:?}");
    }
}

#[test]
fn short_or_empty_text_undeterminable() {
    for text in ["", "ok", "fix typo", "   \n  "] {
        let v = detect_language(text);
        assert!(!v.is_english);
        assert_eq!(v.confidence, 0.0);
    }
}

#[test]
fn detection_is_deterministic() {
    for text in ENGLISH.iter().chain(FOREIGN.iter().map(|(_, t)| t)) {
        assert_eq!(detect_language(text), detect_language(text));
    }
}

// ---------- hashed embedding ----------

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn fnv_reference_values() {
    // Published FNV-1a 64-bit test vectors.
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
}

/// Direct feature hashing with the published FNV-1a constants.
fn hashed_oracle(tokens: &[String], dim: usize) -> Vec<f64> {
    let mut v = vec![0f64; dim];
    for t in tokens {
        let mut h: u64 = 14695981039346656037;
        for b in t.to_lowercase().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        let sign = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[test]
fn hashed_matches_direct_computation() {
    let tokens = toks("How do I enable dark mode in settings ?");
    for dim in [8, 64, 512] {
        let got = hashed_embed(&tokens, dim, None).unwrap();
        let want = hashed_oracle(&tokens, dim);
        assert_eq!(got.len(), dim);
        for (g, w) in got.iter().zip(&want) {
            assert!((f64::from(*g) - w).abs() < 1e-7);
        }
    }
}

#[test]
fn hashed_examples() {
    let a = hashed_embed(&toks("a"), 512, None).unwrap();
    let aa = hashed_embed(&toks("a a"), 512, None).unwrap();
    assert_eq!(a, aa);
    let t = toks("the quick brown fox");
    assert_eq!(hashed_embed(&t, 512, None).unwrap(), hashed_embed(&t, 512, None).unwrap());
    assert!(hashed_embed(&[], 512, None).is_err());
    assert!(hashed_embed(&t, 0, None).is_err());
}

proptest! {
    #[test]
    fn hashed_unit_norm_and_bag_semantics(words in prop::collection::vec("[a-z]{1,8}", 1..40), seed: u64, dim in 1usize..600) {
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let Ok(v) = hashed_embed(&words, dim, None) else {
            // Only possible when signed counts cancel exactly.
            return Ok(());
        };
        prop_assert_eq!(v.len(), dim);
        let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-6);
        prop_assert!(v.iter().all(|x| x.is_finite()));
        prop_assert_eq!(hashed_embed(&shuffled, dim, None).unwrap(), v);
    }
}

fn doc(id: u64, class: ClassLabel, text: &str) -> TokenizedDoc {
    TokenizedDoc::new(id, class, text, TokenGate::new(1, 199).unwrap())
}

#[test]
fn idf_examples() {
    let docs = vec![doc(1, Q, "alpha beta"), doc(2, NQ, "alpha gamma"), doc(3, Q, "alpha delta delta")];
    let idf = build_idf(&docs).unwrap();
    assert_eq!(idf.weight("alpha"), 1.0);
    assert!((idf.weight("beta") - (2f64.ln() + 1.0)).abs() < 1e-12);
    assert!((idf.weight("delta") - 1.6931).abs() < 1e-4);
    let one = build_idf(&[doc(1, Q, "solo")]).unwrap();
    assert_eq!(one.weight("solo"), 1.0);
    let ineligible = TokenizedDoc::new(9, Q, "too short", TokenGate::default());
    assert!(build_idf(&[ineligible]).is_err());

    let weighted = hashed_embed(&toks("alpha beta"), 512, Some(&idf)).unwrap();
    assert_ne!(weighted, hashed_embed(&toks("alpha beta"), 512, None).unwrap());
}

#[test]
fn embed_skips_ineligible_docs() {
    let gate = TokenGate::default();
    let docs = vec![
        TokenizedDoc::new(1, Q, "how do i change the default port", gate),
        TokenizedDoc::new(2, NQ, "too short", gate),
        TokenizedDoc::new(3, NQ, "the server crashes on startup with an error", gate),
    ];
    let recs = embed_hashed(&docs, 32, None).unwrap();
    assert_eq!(recs.iter().map(|r| r.id).collect::<Vec<_>>(), [1, 3]);
}

// ---------- external vectors ----------

fn external_file(dir: &tempfile::TempDir, recs: &[EmbeddedRecord], dim: usize) -> std::path::PathBuf {
    let p = dir.path().join(format!("ext{dim}.csv"));
    write_vectors(recs, &p, dim).unwrap();
    p
}

#[test]
fn external_vectors_joined_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(4);
    let recs = common::random_records(5, 512, &mut rng);
    let p = external_file(&dir, &recs, 512);
    let use_provider = EmbeddingProvider::new(ProviderKind::Use, None).unwrap();
    let docs: Vec<TokenizedDoc> = [3usize, 0, 4]
        .iter()
        .map(|&i| doc(recs[i].id, recs[i].class, "some eligible words here"))
        .collect();
    let out = attach_external_vectors(&docs, &p, &use_provider, true).unwrap();
    assert_eq!(out.iter().map(|r| r.id).collect::<Vec<_>>(), [recs[3].id, recs[0].id, recs[4].id]);
    let reread = qlabel::corpus::read_all_vectors(&p).unwrap().1;
    for r in &out {
        let src = reread.iter().find(|s| s.id == r.id).unwrap();
        assert_eq!(
            r.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            src.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    let missing = vec![doc(999_999, Q, "absent from the file")];
    let err = attach_external_vectors(&missing, &p, &use_provider, false).unwrap_err();
    assert!(err.to_string().contains("999999"), "{err}");
}

#[test]
fn external_dimension_must_match_provider() {
    let dir = tempfile::tempdir().unwrap();
    let recs = common::random_records(3, 1024, &mut common::rng(5));
    let p = external_file(&dir, &recs, 1024);
    let docs = vec![doc(recs[0].id, recs[0].class, "words words words")];
    let use_provider = EmbeddingProvider::new(ProviderKind::Use, None).unwrap();
    assert!(attach_external_vectors(&docs, &p, &use_provider, false).is_err());
    let sbert = EmbeddingProvider::new(ProviderKind::Sbert, None).unwrap();
    assert_eq!(sbert.dim, 1024);
    assert_eq!(attach_external_vectors(&docs, &p, &sbert, false).unwrap().len(), 1);
    assert!(EmbeddingProvider::new(ProviderKind::Sbert, Some(512)).is_err());
    assert_eq!(EmbeddingProvider::new(ProviderKind::Hashed, None).unwrap().dim, 512);
    assert!(EmbeddingProvider::new(ProviderKind::Hashed, Some(0)).is_err());
}
