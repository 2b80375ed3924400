use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tipping_core::dsl::{
    ask, evaluate_translations, generate_corpus, interpret, levenshtein, normalized_levenshtein,
    normalized_levenshtein_str, parse, parse_question, program_to_question, question_to_program, read_corpus_jsonl,
    token_accuracy, write_corpus_jsonl, CorpusEntry, DeterministicTranslator, DslError, Normalization, ParamName,
    ProgramAst, SetTo, Warning,
};
use tipping_core::fourbox::{collapse_verdict, detect_collapse, integrate, BoxState, ModelParams};

const ONE_PARAM: &str = "ChangeSign(box_model(SetTo(M_ek,28496768)),M_n)";
const TWO_PARAM: &str = "ChangeSign(box_model(SetTo(Fwn,638758),SetTo(D_low0,288)),M_n)";

/// Textbook full-table edit distance.
fn dp_oracle(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

#[test]
fn example_programs_parse_and_print_exactly() {
    let one = parse(ONE_PARAM).unwrap();
    assert_eq!(one.settings(), &[SetTo { param: ParamName::MEk, value: 28496768.0 }]);
    assert_eq!(one.to_string(), ONE_PARAM);

    let two = parse(TWO_PARAM).unwrap();
    assert_eq!(
        two.settings(),
        &[SetTo { param: ParamName::Fwn, value: 638758.0 }, SetTo { param: ParamName::DLow0, value: 288.0 }]
    );
    assert_eq!(two.to_string(), TWO_PARAM);
}

#[test]
fn two_parameter_program_matches_direct_run() {
    let defaults = ModelParams::default();
    let r = interpret(&parse(TWO_PARAM).unwrap(), None, &defaults).unwrap();
    let mut p = defaults;
    p.fw_n = 0.638758;
    p.d_low0 = 288.0;
    let direct = detect_collapse(&integrate(&p, &BoxState::initial(288.0), 3000.0, 0.05).unwrap()).unwrap();
    assert_eq!(r.report, direct);
    assert!(r.warnings.is_empty());

    let r = interpret(&parse(ONE_PARAM).unwrap(), Some(3000.0), &defaults).unwrap();
    assert!((r.params.m_ek - 28.496768).abs() < 1e-12);
}

#[test]
fn freshwater_extremes() {
    let d = ModelParams::default();
    let weak = parse("ChangeSign(box_model(SetTo(Fwn,50000)),M_n)").unwrap();
    assert!(!interpret(&weak, None, &d).unwrap().report.collapsed);
    let strong = parse("ChangeSign(box_model(SetTo(M_ek,15000000),SetTo(Fwn,1550000),SetTo(D_low0,100)),M_n)").unwrap();
    assert!(interpret(&strong, None, &d).unwrap().report.collapsed);
}

#[test]
fn out_of_bounds_is_a_warning_not_an_error() {
    let ast = parse("ChangeSign(box_model(SetTo(Fwn,1800000)),M_n)").unwrap();
    let r = interpret(&ast, Some(500.0), &ModelParams::default()).unwrap();
    assert!(matches!(r.warnings.as_slice(), [Warning::OutOfBounds { param: ParamName::Fwn, .. }]));
}

#[test]
fn parse_errors() {
    assert!(matches!(parse("ChangeSign(box_model()"), Err(DslError::ParseError { position: 22, .. })));
    assert!(matches!(
        parse("ChangeSign(box_model(SetTo(Fwn,1),SetTo(Fwn,2)),M_n)"),
        Err(DslError::DuplicateParameter { position: 40, .. })
    ));
    assert!(matches!(parse("ChangeSign(box_model(SetTo(Wind,5)),M_n)"), Err(DslError::UnknownParameter { .. })));
    match parse("ChangeSign(box_model(SetTo(Fwn,1)) M_n)") {
        Err(DslError::ParseError { position, expected, .. }) => {
            assert_eq!(position, 35);
            assert_eq!(expected, vec!["\",\""]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn within_extension_round_trips_and_sets_horizon() {
    let text = "ChangeSign(box_model(SetTo(Fwn,1500000)),M_n,Within(40))";
    let ast = parse(text).unwrap();
    assert_eq!(ast.within_years, Some(40.0));
    assert_eq!(ast.to_string(), text);
    // Forty years is shorter than the persistence window, so nothing can count as a collapse.
    let r = interpret(&ast, Some(3000.0), &ModelParams::default()).unwrap();
    assert_eq!(r.horizon_years, 40.0);
    assert!(!r.report.collapsed);
}

#[test]
fn whitespace_is_ignored_and_printing_canonicalizes() {
    let ast = parse(" ChangeSign ( box_model( SetTo( Fwn , 638758.000 ) ,\n SetTo(D_low0, 2.88e2) ) , M_n ) ").unwrap();
    assert_eq!(ast.to_string(), TWO_PARAM);
    assert_eq!(parse(&ast.to_string()).unwrap().to_string(), TWO_PARAM);
}

#[test]
fn example_question_pairs_with_one_parameter_program() {
    let q = "If M_ek is set to value 28496768, does the AMOC collapse within 3000 years?";
    let parsed = parse_question(q).unwrap();
    let ast = question_to_program(&parsed);
    assert_eq!(ast.to_string(), ONE_PARAM);
    assert_eq!(program_to_question(&ast, 3000.0).to_string(), q);

    match parse_question("If Wind is set to value 5, does the AMOC collapse within 3000 years?") {
        Err(DslError::UnknownParameter { name, .. }) => assert_eq!(name, "Wind"),
        other => panic!("{other:?}"),
    }
    match parse_question("Will the AMOC collapse?") {
        Err(DslError::UnrecognizedTemplate { nearest, .. }) => assert!(nearest.starts_with("If <parameter>")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ask_echoes_program_and_answer() {
    let q = "If Fwn is set to value 638758, does the AMOC collapse within 3000 years?";
    let a = ask(q, &ModelParams::default()).unwrap();
    assert_eq!(a.program, "ChangeSign(box_model(SetTo(Fwn,638758)),M_n)");
    let direct = collapse_verdict(&ModelParams::default().with_perturbation(25.0, 0.638758, 400.0), 3000.0).unwrap();
    assert_eq!((a.collapsed, a.time_of_collapse), (direct.collapsed, direct.time_of_collapse));
    assert_eq!(a.trace.first().unwrap().t_years, 0.0);
    assert_eq!(a.trace.last().unwrap().t_years, 3000.0);
}

#[test]
fn corpus_of_1066_round_trips_and_runs() {
    let corpus = generate_corpus(1066, 42).unwrap();
    assert_eq!(corpus.len(), 1066);
    let mut qs: Vec<&str> = corpus.iter().map(|e| e.question.as_str()).collect();
    qs.sort_unstable();
    qs.dedup();
    assert_eq!(qs.len(), 1066);
    assert_eq!(generate_corpus(1066, 42).unwrap(), corpus);

    let d = ModelParams::default();
    for e in &corpus {
        let q = parse_question(&e.question).unwrap();
        let p = question_to_program(&q);
        assert_eq!(p.to_string(), e.program);
        assert_eq!(program_to_question(&p, e.horizon_years).to_string(), e.question);
        let r = interpret(&parse(&e.program).unwrap(), Some(e.horizon_years), &d).unwrap();
        assert!(r.warnings.is_empty(), "{}", e.program);
    }

    let report = evaluate_translations(&DeterministicTranslator, &corpus, Normalization::MaxLength);
    for dir in [&report.question_to_program, &report.program_to_question] {
        assert_eq!(dir.exact_match, 1.0);
        assert_eq!(dir.token_accuracy, 1.0);
        assert_eq!(dir.normalized_levenshtein, 0.0);
        assert_eq!(dir.cdf.last().unwrap().cumulative_fraction, 1.0);
    }
}

#[test]
fn corrupted_references_are_flagged_per_row() {
    let mut corpus = generate_corpus(60, 5).unwrap();
    let corrupted = [3usize, 17, 41];
    for &i in &corrupted {
        corpus[i].program = corpus[i].program.replacen("SetTo", "SetT0", 1);
        corpus[i].question = corpus[i].question.replacen("value", "valve", 1);
    }
    // Corruption fools the translator's input too, so score only the reference side:
    // keep the untouched question for q->p and the untouched program for p->q.
    let clean = generate_corpus(60, 5).unwrap();
    let mixed_q2p: Vec<CorpusEntry> = clean
        .iter()
        .zip(&corpus)
        .map(|(c, k)| CorpusEntry { question: c.question.clone(), program: k.program.clone(), horizon_years: c.horizon_years })
        .collect();
    let mixed_p2q: Vec<CorpusEntry> = clean
        .iter()
        .zip(&corpus)
        .map(|(c, k)| CorpusEntry { question: k.question.clone(), program: c.program.clone(), horizon_years: c.horizon_years })
        .collect();
    let r1 = evaluate_translations(&DeterministicTranslator, &mixed_q2p, Normalization::MaxLength);
    let r2 = evaluate_translations(&DeterministicTranslator, &mixed_p2q, Normalization::MaxLength);
    for (rows, which) in [(&r1.question_to_program.rows, "q2p"), (&r2.program_to_question.rows, "p2q")] {
        for row in rows {
            let bad = corrupted.contains(&row.index);
            assert_eq!(row.token_accuracy < 1.0, bad, "{which} row {}", row.index);
            assert_eq!(row.normalized_levenshtein > 0.0, bad, "{which} row {}", row.index);
        }
    }
    let cdf = &r1.question_to_program.cdf;
    assert!(cdf.windows(2).all(|w| w[0].distance < w[1].distance && w[0].cumulative_fraction <= w[1].cumulative_fraction));
    assert_eq!(cdf.last().unwrap().cumulative_fraction, 1.0);
    let csv = r1.cdf_csv();
    assert!(csv.starts_with("direction,distance,cumulative_fraction\n"));
}

#[test]
fn corpus_jsonl_round_trip() {
    let corpus = generate_corpus(25, 1).unwrap();
    let mut buf = Vec::new();
    write_corpus_jsonl(&corpus, &mut buf).unwrap();
    assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 25);
    assert_eq!(read_corpus_jsonl(&buf[..]).unwrap(), corpus);
}

#[test]
fn levenshtein_matches_dp_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let alphabet: Vec<char> = "abcde".chars().collect();
    for _ in 0..1000 {
        let a: Vec<char> = (0..rng.gen_range(0..14)).map(|_| alphabet[rng.gen_range(0..5)]).collect();
        let b: Vec<char> = (0..rng.gen_range(0..14)).map(|_| alphabet[rng.gen_range(0..5)]).collect();
        let d = dp_oracle(&a, &b);
        assert_eq!(levenshtein(&a, &b), d);
        let expect = if a.is_empty() && b.is_empty() { 0.0 } else { d as f64 / a.len().max(b.len()) as f64 };
        assert_eq!(normalized_levenshtein(&a, &b, Normalization::MaxLength), expect);
    }
}

#[test]
fn metric_reference_values() {
    assert_eq!(normalized_levenshtein_str("kitten", "sitting", Normalization::MaxLength), 3.0 / 7.0);
    assert_eq!(normalized_levenshtein_str("abc", "abc", Normalization::MaxLength), 0.0);
    assert_eq!(normalized_levenshtein_str("", "x", Normalization::MaxLength), 1.0);
    assert_eq!(token_accuracy(&["a", "b", "c"], &["a", "x", "c", "d"]), 0.5);
    // 2·3 / (6 + 7 + 3)
    assert_eq!(normalized_levenshtein_str("kitten", "sitting", Normalization::YujianBo), 6.0 / 16.0);
}

fn arb_ast() -> impl Strategy<Value = ProgramAst> {
    let setting = (0usize..4, 0u64..100_000_000, proptest::bool::ANY).prop_map(|(i, v, frac)| SetTo {
        param: ParamName::ALL[i],
        value: if frac { v as f64 / 1000.0 } else { v as f64 },
    });
    (proptest::collection::vec(setting, 1..5), proptest::option::of(1u32..5000)).prop_map(|(mut s, w)| {
        let mut seen = Vec::new();
        s.retain(|x| {
            let fresh = !seen.contains(&x.param);
            seen.push(x.param);
            fresh
        });
        let mut ast = ProgramAst::new(s);
        ast.within_years = w.map(f64::from);
        ast
    })
}

proptest! {
    #[test]
    fn parse_print_identity(ast in arb_ast()) {
        let text = ast.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &ast);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn question_program_inverse(ast in arb_ast(), h in 1u32..10000) {
        let mut ast = ast;
        ast.within_years = None;
        let q = program_to_question(&ast, f64::from(h));
        let reparsed = parse_question(&q.to_string()).unwrap();
        prop_assert_eq!(&reparsed, &q);
        prop_assert_eq!(question_to_program(&reparsed), ast);
    }

    #[test]
    fn levenshtein_is_a_normalized_symmetric_distance(a in "[a-c]{0,10}", b in "[a-c]{0,10}") {
        for norm in [Normalization::MaxLength, Normalization::YujianBo] {
            let d = normalized_levenshtein_str(&a, &b, norm);
            prop_assert_eq!(d, normalized_levenshtein_str(&b, &a, norm));
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d == 0.0, a == b);
        }
    }
}

#[test]
fn interpret_equals_direct_run_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let defaults = ModelParams::default();
    for _ in 0..100 {
        let mut settings = vec![
            SetTo { param: ParamName::MEk, value: rng.gen_range(15e6..35e6f64).round() },
            SetTo { param: ParamName::Fwn, value: rng.gen_range(0.05e6..1.55e6f64).round() },
            SetTo { param: ParamName::DLow0, value: rng.gen_range(100.0..400.0f64).round() },
        ];
        if rng.gen_bool(0.3) {
            settings.push(SetTo { param: ParamName::Fws, value: rng.gen_range(0.3e6..0.7e6f64).round() });
        }
        let k = rng.gen_range(1..=settings.len());
        settings.truncate(k);
        let ast = ProgramAst::new(settings.clone());
        let horizon = [500.0, 1500.0, 3000.0][rng.gen_range(0..3)];
        let r = interpret(&ast, Some(horizon), &defaults).unwrap();

        let mut p = defaults;
        for s in &settings {
            match s.param {
                ParamName::MEk => p.m_ek = s.value / 1e6,
                ParamName::Fwn => p.fw_n = s.value / 1e6,
                ParamName::Fws => p.fw_s = s.value / 1e6,
                ParamName::DLow0 => p.d_low0 = s.value,
            }
        }
        let direct = detect_collapse(&integrate(&p, &BoxState::initial(p.d_low0), horizon, 0.05).unwrap()).unwrap();
        assert_eq!(r.report, direct, "{ast}");
    }
}
