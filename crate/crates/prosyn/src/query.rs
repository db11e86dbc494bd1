//! The comparison query language and token selection.
//!
//! Two comparison shapes exist: a direct comparison `a~b` contrasts words
//! whose dependency label is `a` against words labeled `b`; an attachment
//! comparison `c->(a~b)` contrasts words labeled `c` whose head is labeled
//! `a` against those whose head is labeled `b`. An optional suffix
//! `[pos=T1|T2]` restricts the selection to the listed POS tags. `->` is
//! the shell-safe spelling of the attachment arrow.

use std::collections::BTreeSet;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Comparison shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonKind {
    Direct,
    Attached,
}

/// A parsed comparison query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonSpec {
    pub kind: ComparisonKind,
    /// First head/context label; selected tokens get flag 0.
    pub label_a: String,
    /// Second head/context label; selected tokens get flag 1.
    pub label_b: String,
    /// Label of the measured child word (`Attached` only).
    pub child_label: Option<String>,
    pub pos_whitelist: Option<BTreeSet<String>>,
    /// Canonical rendering, usable as a display name and re-parseable.
    pub name: String,
}

impl ComparisonSpec {
    pub fn direct(label_a: &str, label_b: &str) -> Result<Self> {
        Self::build(ComparisonKind::Direct, label_a, label_b, None, None)
    }

    pub fn attached(child: &str, label_a: &str, label_b: &str) -> Result<Self> {
        Self::build(ComparisonKind::Attached, label_a, label_b, Some(child), None)
    }

    pub fn with_pos_whitelist(mut self, tags: impl IntoIterator<Item = String>) -> Self {
        self.pos_whitelist = Some(tags.into_iter().collect());
        self.name = self.render();
        self
    }

    fn build(
        kind: ComparisonKind,
        label_a: &str,
        label_b: &str,
        child: Option<&str>,
        pos: Option<BTreeSet<String>>,
    ) -> Result<Self> {
        if label_a.is_empty() || label_b.is_empty() || child.map_or(false, str::is_empty) {
            return Err(Error::Invalid("comparison labels must be non-empty".into()));
        }
        if label_a == label_b {
            return Err(Error::Invalid(format!(
                "comparison labels must differ, both are {label_a:?}"
            )));
        }
        let mut spec = ComparisonSpec {
            kind,
            label_a: label_a.to_string(),
            label_b: label_b.to_string(),
            child_label: child.map(str::to_string),
            pos_whitelist: pos,
            name: String::new(),
        };
        spec.name = spec.render();
        Ok(spec)
    }

    /// Canonical text form; `parse_comparison(render())` is the identity.
    pub fn render(&self) -> String {
        let mut out = match (&self.kind, &self.child_label) {
            (ComparisonKind::Direct, _) => format!("{}~{}", self.label_a, self.label_b),
            (ComparisonKind::Attached, Some(child)) => {
                format!("{}->({}~{})", child, self.label_a, self.label_b)
            }
            (ComparisonKind::Attached, None) => unreachable!("attached spec without child label"),
        };
        if let Some(tags) = &self.pos_whitelist {
            let joined: Vec<&str> = tags.iter().map(String::as_str).collect();
            out.push_str(&format!("[pos={}]", joined.join("|")));
        }
        out
    }

    /// The same comparison with the two context labels swapped. Every
    /// selection flag inverts; reported effects negate.
    pub fn swapped(&self) -> Self {
        let mut spec = self.clone();
        std::mem::swap(&mut spec.label_a, &mut spec.label_b);
        spec.name = spec.render();
        spec
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    query: &'a str,
}

impl<'a> Parser<'a> {
    fn new(query: &'a str) -> Self {
        Parser {
            chars: query.chars().collect(),
            pos: 0,
            query,
        }
    }

    /// 1-based column of the next unread character.
    fn column(&self) -> usize {
        self.pos + 1
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::QueryParse {
            column: self.column(),
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, expected: char) -> Result<()> {
        if self.peek() == Some(expected) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {expected:?}")))
        }
    }

    fn label(&mut self) -> Result<(String, usize)> {
        self.skip_ws();
        let start_col = self.column();
        let begin = self.pos;
        while self
            .peek()
            .map_or(false, |c| c.is_ascii_lowercase())
        {
            self.pos += 1;
        }
        if self.pos == begin {
            return Err(self.error("expected dependency label ([a-z]+)"));
        }
        Ok((self.chars[begin..self.pos].iter().collect(), start_col))
    }

    fn pos_tag(&mut self) -> Result<String> {
        self.skip_ws();
        let begin = self.pos;
        while self
            .peek()
            .map_or(false, |c| c.is_ascii_alphanumeric() || c == '$' || c == ',' || c == '.')
        {
            self.pos += 1;
        }
        if self.pos == begin {
            return Err(self.error("expected POS tag"));
        }
        Ok(self.chars[begin..self.pos].iter().collect())
    }

    fn parse(&mut self) -> Result<ComparisonSpec> {
        let (first, _) = self.label()?;
        self.skip_ws();
        let (kind, label_a, label_b, child, second_col) = match self.peek() {
            Some('~') => {
                self.eat('~')?;
                let (b, col) = self.label()?;
                (ComparisonKind::Direct, first, b, None, col)
            }
            Some('-') => {
                self.eat('-')?;
                self.eat('>')?;
                self.skip_ws();
                self.eat('(')?;
                let (a, _) = self.label()?;
                self.skip_ws();
                self.eat('~')?;
                let (b, col) = self.label()?;
                self.skip_ws();
                self.eat(')')?;
                (ComparisonKind::Attached, a, b, Some(first), col)
            }
            _ => return Err(self.error("expected '~' or '->'")),
        };
        if label_a == label_b {
            return Err(Error::QueryParse {
                column: second_col,
                message: format!("identical labels {label_a:?} on both sides"),
            });
        }

        self.skip_ws();
        let mut pos_whitelist = None;
        if self.peek() == Some('[') {
            self.eat('[')?;
            self.skip_ws();
            for c in "pos".chars() {
                self.eat(c)?;
            }
            self.skip_ws();
            self.eat('=')?;
            let mut tags = BTreeSet::new();
            tags.insert(self.pos_tag()?);
            loop {
                self.skip_ws();
                match self.peek() {
                    Some('|') => {
                        self.eat('|')?;
                        tags.insert(self.pos_tag()?);
                    }
                    Some(']') => {
                        self.eat(']')?;
                        break;
                    }
                    _ => return Err(self.error("expected '|' or ']'")),
                }
            }
            pos_whitelist = Some(tags);
        }
        self.skip_ws();
        if self.pos < self.chars.len() {
            return Err(self.error(format!(
                "trailing input {:?}",
                &self.query[self.query.len().min(byte_offset(self.query, self.pos))..]
            )));
        }

        ComparisonSpec::build(kind, &label_a, &label_b, child.as_deref(), pos_whitelist)
    }
}

fn byte_offset(s: &str, char_pos: usize) -> usize {
    s.char_indices()
        .nth(char_pos)
        .map(|(i, _)| i)
        .unwrap_or(s.len())
}

/// Parses a comparison query; errors carry the 1-based column position.
pub fn parse_comparison(query: &str) -> Result<ComparisonSpec> {
    Parser::new(query).parse()
}

/// POS tags treated as nominal for the default subject/object whitelist:
/// common, proper and pronominal forms that can fill both roles.
pub fn nominal_pos_tags() -> Vec<String> {
    ["NN", "NE", "PPER"].iter().map(|s| s.to_string()).collect()
}

/// The built-in experiment grid: nine comparisons over noun and verb
/// functions. The direct subject/object contrast carries the nominal POS
/// whitelist so only forms that can fill both roles are compared.
pub fn table1_presets() -> Vec<ComparisonSpec> {
    let subj_obja = ComparisonSpec::direct("subj", "obja")
        .unwrap()
        .with_pos_whitelist(nominal_pos_tags());
    vec![
        subj_obja,
        ComparisonSpec::attached("det", "subj", "obja").unwrap(),
        ComparisonSpec::attached("attr", "subj", "obja").unwrap(),
        ComparisonSpec::direct("s", "neb").unwrap(),
        ComparisonSpec::direct("s", "rel").unwrap(),
        ComparisonSpec::direct("s", "aux").unwrap(),
        ComparisonSpec::attached("aux", "s", "neb").unwrap(),
        ComparisonSpec::attached("aux", "s", "rel").unwrap(),
        ComparisonSpec::attached("aux", "s", "aux").unwrap(),
    ]
}

/// A selected token, addressed by indices into the corpus it was selected
/// from. Flag 0 marks the first (label_a) group, flag 1 the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectedToken {
    pub recording: usize,
    pub sentence: usize,
    pub token: usize,
    pub flag: u8,
}

/// Result of applying a comparison to a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub rows: Vec<SelectedToken>,
    /// Jaccard overlap of the two groups' lowercased surface forms, when
    /// both groups are populated.
    pub surface_overlap: Option<f64>,
    /// Set when the groups share almost no surface forms, which makes the
    /// contrast hard to interpret (systematic lexical differences would be
    /// picked up as a syntax effect).
    pub low_overlap_warning: Option<String>,
}

/// Threshold under which `select_pairs` warns about disjoint filler sets.
pub const LOW_OVERLAP_THRESHOLD: f64 = 0.01;

/// Selects the tokens a comparison contrasts. Only fully aligned sentences
/// participate. Each token appears at most once; the flags partition the
/// selection.
pub fn select_pairs(spec: &ComparisonSpec, corpus: &Corpus) -> Selection {
    let mut rows = Vec::new();
    let mut surfaces: [BTreeSet<String>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for (ri, recording) in corpus.recordings.iter().enumerate() {
        for (si, sentence) in recording.sentences.iter().enumerate() {
            if !sentence.fully_aligned {
                continue;
            }
            for (ti, token) in sentence.tokens.iter().enumerate() {
                let flag = match spec.kind {
                    ComparisonKind::Direct => {
                        if token.deprel == spec.label_a {
                            0
                        } else if token.deprel == spec.label_b {
                            1
                        } else {
                            continue;
                        }
                    }
                    ComparisonKind::Attached => {
                        let child = spec.child_label.as_deref().unwrap_or_default();
                        if token.deprel != child || token.head == 0 {
                            continue;
                        }
                        let head = &sentence.tokens[token.head - 1];
                        if head.deprel == spec.label_a {
                            0
                        } else if head.deprel == spec.label_b {
                            1
                        } else {
                            continue;
                        }
                    }
                };
                if let Some(whitelist) = &spec.pos_whitelist {
                    if !whitelist.contains(&token.pos_tag) {
                        continue;
                    }
                }
                surfaces[flag as usize].insert(token.surface.to_lowercase());
                rows.push(SelectedToken {
                    recording: ri,
                    sentence: si,
                    token: ti,
                    flag,
                });
            }
        }
    }

    let surface_overlap = if surfaces[0].is_empty() || surfaces[1].is_empty() {
        None
    } else {
        let intersection = surfaces[0].intersection(&surfaces[1]).count();
        let union = surfaces[0].union(&surfaces[1]).count();
        Some(intersection as f64 / union as f64)
    };
    let low_overlap_warning = surface_overlap
        .filter(|o| *o < LOW_OVERLAP_THRESHOLD)
        .map(|o| {
            format!(
                "groups of {} share {:.2}% of surface forms; disjoint filler sets \
                 make the contrast reflect lexical rather than syntactic differences",
                spec.name,
                o * 100.0
            )
        });
    Selection {
        rows,
        surface_overlap,
        low_overlap_warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Recording, Sentence, Token};
    use proptest::prelude::*;

    #[test]
    fn parses_direct_comparison() {
        let spec = parse_comparison("subj~obja").unwrap();
        assert_eq!(spec.kind, ComparisonKind::Direct);
        assert_eq!(spec.label_a, "subj");
        assert_eq!(spec.label_b, "obja");
        assert_eq!(spec.child_label, None);
        assert_eq!(spec.name, "subj~obja");
    }

    #[test]
    fn parses_attached_comparison() {
        let spec = parse_comparison("det->(subj~obja)").unwrap();
        assert_eq!(spec.kind, ComparisonKind::Attached);
        assert_eq!(spec.child_label.as_deref(), Some("det"));
        assert_eq!(spec.label_a, "subj");
        assert_eq!(spec.label_b, "obja");
    }

    #[test]
    fn reports_column_of_malformed_input() {
        let err = parse_comparison("det->(subj~").unwrap_err();
        match err {
            Error::QueryParse { column, .. } => assert_eq!(column, 12),
            other => panic!("unexpected error {other}"),
        }
        assert!(matches!(
            parse_comparison("subj~obja)"),
            Err(Error::QueryParse { column: 10, .. })
        ));
        assert!(matches!(
            parse_comparison("subj~subj"),
            Err(Error::QueryParse { column: 6, .. })
        ));
        assert!(matches!(parse_comparison(""), Err(Error::QueryParse { column: 1, .. })));
        assert!(matches!(
            parse_comparison("det->(subj~obja"),
            Err(Error::QueryParse { .. })
        ));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let spec = parse_comparison("  det ->  ( subj ~ obja )  [ pos = NN | NE ]").unwrap();
        assert_eq!(spec.name, "det->(subj~obja)[pos=NE|NN]");
        assert_eq!(
            spec.pos_whitelist.unwrap().into_iter().collect::<Vec<_>>(),
            vec!["NE".to_string(), "NN".to_string()]
        );
    }

    /// A sentence shaped like "the black cat chases the quick dog":
    /// determiners and attributes attach to both nouns, subj/obja attach to
    /// the verb root.
    fn example_sentence() -> Sentence {
        let tok = |i: usize, surface: &str, pos: &str, head: usize, deprel: &str| Token {
            index_in_sentence: i,
            surface: surface.into(),
            pos_tag: pos.into(),
            head,
            deprel: deprel.into(),
            start_ms: Some(i as f64 * 300.0),
            end_ms: Some(i as f64 * 300.0 + 250.0),
        };
        Sentence::new(
            "s1".into(),
            vec![
                tok(1, "the", "ART", 3, "det"),
                tok(2, "black", "ADJA", 3, "attr"),
                tok(3, "cat", "NN", 4, "subj"),
                tok(4, "chases", "VVFIN", 0, "s"),
                tok(5, "the", "ART", 7, "det"),
                tok(6, "quick", "ADJA", 7, "attr"),
                tok(7, "dog", "NN", 4, "obja"),
            ],
        )
    }

    fn example_corpus() -> Corpus {
        Corpus {
            recordings: vec![Recording {
                recording_id: "r1".into(),
                speaker_id: "spk".into(),
                sentences: vec![example_sentence()],
                audio_path: None,
                sample_rate_hz: None,
            }],
        }
    }

    #[test]
    fn direct_selection_flags_nouns_by_role() {
        let corpus = example_corpus();
        let spec = parse_comparison("subj~obja").unwrap();
        let selection = select_pairs(&spec, &corpus);
        let picks: Vec<(usize, u8)> = selection.rows.iter().map(|r| (r.token, r.flag)).collect();
        assert_eq!(picks, vec![(2, 0), (6, 1)]); // cat -> 0, dog -> 1
    }

    #[test]
    fn attached_selection_flags_determiners_by_head_role() {
        let corpus = example_corpus();
        let spec = parse_comparison("det->(subj~obja)").unwrap();
        let selection = select_pairs(&spec, &corpus);
        let picks: Vec<(usize, u8)> = selection.rows.iter().map(|r| (r.token, r.flag)).collect();
        // Both "the" tokens, flagged by their heads' roles.
        assert_eq!(picks, vec![(0, 0), (4, 1)]);
        for row in &selection.rows {
            let sentence = &corpus.recordings[row.recording].sentences[row.sentence];
            assert_eq!(sentence.tokens[row.token].surface, "the");
        }
    }

    #[test]
    fn missing_group_yields_one_sided_selection() {
        let mut corpus = example_corpus();
        // Remove the subject by relabeling it.
        corpus.recordings[0].sentences[0].tokens[2].deprel = "obja2".into();
        let spec = parse_comparison("subj~obja").unwrap();
        let selection = select_pairs(&spec, &corpus);
        assert!(selection.rows.iter().all(|r| r.flag == 1));
        assert_eq!(selection.rows.len(), 1);
        assert_eq!(selection.surface_overlap, None);
    }

    #[test]
    fn pos_whitelist_excludes_tokens() {
        let corpus = example_corpus();
        let spec = parse_comparison("subj~obja[pos=NE]").unwrap();
        let selection = select_pairs(&spec, &corpus);
        assert!(selection.rows.is_empty());
    }

    #[test]
    fn unaligned_sentences_are_ignored() {
        let mut corpus = example_corpus();
        corpus.recordings[0].sentences[0].tokens[0].end_ms = None;
        let refreshed = Sentence::new(
            "s1".into(),
            corpus.recordings[0].sentences[0].tokens.clone(),
        );
        corpus.recordings[0].sentences[0] = refreshed;
        let spec = parse_comparison("subj~obja").unwrap();
        assert!(select_pairs(&spec, &corpus).rows.is_empty());
    }

    #[test]
    fn disjoint_surface_sets_warn() {
        let corpus = example_corpus(); // cat vs dog share nothing
        let spec = parse_comparison("subj~obja").unwrap();
        let selection = select_pairs(&spec, &corpus);
        assert_eq!(selection.surface_overlap, Some(0.0));
        assert!(selection.low_overlap_warning.is_some());

        // det->: both groups are "the", full overlap, no warning.
        let spec = parse_comparison("det->(subj~obja)").unwrap();
        let selection = select_pairs(&spec, &corpus);
        assert_eq!(selection.surface_overlap, Some(1.0));
        assert!(selection.low_overlap_warning.is_none());
    }

    #[test]
    fn preset_grid_has_nine_entries() {
        let presets = table1_presets();
        assert_eq!(presets.len(), 9);
        assert_eq!(presets[0].name, "subj~obja[pos=NE|NN|PPER]");
        assert!(presets.iter().skip(1).all(|p| p.pos_whitelist.is_none()));
        // All names re-parse to the same spec.
        for preset in &presets {
            assert_eq!(&parse_comparison(&preset.name).unwrap(), preset);
        }
    }

    fn arb_spec() -> impl Strategy<Value = ComparisonSpec> {
        let label = "[a-z]{1,6}";
        let pos = proptest::option::of(proptest::collection::btree_set("[A-Z]{1,4}", 1..4));
        (label, label, proptest::option::of(label), pos).prop_filter_map(
            "labels must differ",
            |(a, b, child, pos)| {
                if a == b {
                    return None;
                }
                let spec = match child {
                    Some(c) => ComparisonSpec::attached(&c, &a, &b).ok()?,
                    None => ComparisonSpec::direct(&a, &b).ok()?,
                };
                Some(match pos {
                    Some(tags) => spec.with_pos_whitelist(tags),
                    None => spec,
                })
            },
        )
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(spec in arb_spec()) {
            let parsed = parse_comparison(&spec.render()).unwrap();
            prop_assert_eq!(parsed, spec);
        }

        #[test]
        fn swapping_labels_inverts_every_flag(seed in 0u64..100) {
            let mut corpus = example_corpus();
            // Shuffle deprels a bit so selections vary.
            if seed % 2 == 0 {
                corpus.recordings[0].sentences[0].tokens[2].deprel = "obja".into();
                corpus.recordings[0].sentences[0].tokens[6].deprel = "subj".into();
            }
            let spec = parse_comparison("subj~obja").unwrap();
            let forward = select_pairs(&spec, &corpus);
            let backward = select_pairs(&spec.swapped(), &corpus);
            prop_assert_eq!(forward.rows.len(), backward.rows.len());
            for (f, b) in forward.rows.iter().zip(&backward.rows) {
                prop_assert_eq!((f.recording, f.sentence, f.token), (b.recording, b.sentence, b.token));
                prop_assert_eq!(f.flag, 1 - b.flag);
            }
        }

        #[test]
        fn selection_is_a_partition(spec in arb_spec()) {
            let corpus = example_corpus();
            let selection = select_pairs(&spec, &corpus);
            let mut seen = std::collections::BTreeSet::new();
            for row in &selection.rows {
                prop_assert!(seen.insert((row.recording, row.sentence, row.token)));
                prop_assert!(row.flag == 0 || row.flag == 1);
            }
        }
    }
}
