//! Turns free-text model answers into structured values.
//!
//! Each parser returns `None` when the answer does not have the expected
//! shape; the caller decides whether to re-ask.

use indexmap::IndexMap;

/// Most causes kept from a numbered list.
pub const MAX_CAUSES: usize = 10;

/// Items of a `1. foo` / `2) bar` list, at most [`MAX_CAUSES`].
pub fn parse_numbered_list(text: &str) -> Option<Vec<String>> {
    let items: Vec<String> = text
        .lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let digits = line.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = &line[digits..];
            let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
            if !rest.starts_with(char::is_whitespace) {
                return None;
            }
            let item = rest.trim();
            (!item.is_empty()).then(|| item.to_string())
        })
        .take(MAX_CAUSES)
        .collect();
    (!items.is_empty()).then_some(items)
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Whether `needle` occurs in `haystack` with no identifier characters
/// directly around it. Both are expected lowercase.
fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        !before.is_some_and(is_ident_char) && !after.is_some_and(is_ident_char)
    })
}

/// Strips wrapping quotes, backticks, emphasis and a trailing period.
pub fn clean_answer(text: &str) -> &str {
    let mut s = text.trim();
    loop {
        let before = s;
        s = s.trim_matches(|c| matches!(c, '`' | '"' | '\'' | '*')).trim();
        s = s.strip_suffix('.').unwrap_or(s).trim();
        if s == before {
            return s;
        }
    }
}

/// Drops leading list decoration such as `- `, `* `, `3. ` or `2) `.
pub fn strip_bullet(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return rest.trim();
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    line
}

/// Resolves a free-text answer to one of `candidates`.
///
/// Tried in order: exact match of the cleaned answer; a unique candidate
/// contained in the answer (case-insensitive, ignoring candidates that are
/// substrings of another contained candidate); a unique short name (as
/// given by `short`) appearing as a whole word; a unique candidate that
/// contains the cleaned answer.
pub fn resolve<F>(answer: &str, candidates: &[String], short: F) -> Option<usize>
where
    F: Fn(&str) -> &str,
{
    let cleaned = clean_answer(answer);
    if let Some(i) = candidates.iter().position(|c| c == cleaned) {
        return Some(i);
    }
    let lower = answer.to_lowercase();
    let lowered: Vec<String> = candidates.iter().map(|c| c.to_lowercase()).collect();

    let contained: Vec<usize> = (0..candidates.len())
        .filter(|&i| lower.contains(lowered[i].as_str()))
        .collect();
    let maximal: Vec<usize> = contained
        .iter()
        .copied()
        .filter(|&i| {
            !contained
                .iter()
                .any(|&j| j != i && lowered[j].len() > lowered[i].len() && lowered[j].contains(lowered[i].as_str()))
        })
        .collect();
    if let [only] = maximal.as_slice() {
        return Some(*only);
    }
    if maximal.len() > 1 {
        return None;
    }

    let by_word: Vec<usize> = (0..candidates.len())
        .filter(|&i| contains_word(&lower, &short(&candidates[i]).to_lowercase()))
        .collect();
    if let [only] = by_word.as_slice() {
        return Some(*only);
    }
    if by_word.len() > 1 {
        return None;
    }

    let needle = cleaned.to_lowercase();
    if needle.is_empty() {
        return None;
    }
    let containing: Vec<usize> = (0..candidates.len())
        .filter(|&i| lowered[i].contains(needle.as_str()))
        .collect();
    match containing.as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}

/// Parsed `signature: comment` lines keyed by the resolved signature.
pub fn parse_doc_lines(text: &str, signatures: &[String]) -> Option<IndexMap<String, String>> {
    let mut docs = IndexMap::new();
    for line in text.lines() {
        let line = strip_bullet(line);
        let search_from = line.find(')').unwrap_or(0);
        let Some(colon) = line[search_from..].find(':').map(|c| c + search_from) else {
            continue;
        };
        let (left, comment) = (&line[..colon], line[colon + 1..].trim());
        if comment.is_empty() {
            continue;
        }
        if let Some(i) = resolve(left, signatures, crate::index::method_name) {
            docs.entry(signatures[i].clone()).or_insert_with(|| comment.to_string());
        }
    }
    (!docs.is_empty()).then_some(docs)
}

/// Outcome of parsing a list of method signatures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodList {
    pub methods: Vec<String>,
    pub unresolved: Vec<String>,
}

fn is_none_answer(text: &str) -> bool {
    let cleaned = clean_answer(text).to_ascii_lowercase();
    matches!(cleaned.as_str(), "" | "none" | "[]" | "n/a" | "no related methods")
}

/// One signature per line. `None` when lines were given but none resolved.
pub fn parse_method_list(text: &str, signatures: &[String]) -> Option<MethodList> {
    if is_none_answer(text) {
        return Some(MethodList::default());
    }
    let mut list = MethodList::default();
    for line in text.lines() {
        let item = clean_answer(strip_bullet(line));
        if item.is_empty() {
            continue;
        }
        match resolve(item, signatures, crate::index::method_name) {
            Some(i) => {
                if !list.methods.contains(&signatures[i]) {
                    list.methods.push(signatures[i].clone());
                }
            }
            None => list.unresolved.push(item.to_string()),
        }
    }
    (!list.methods.is_empty()).then_some(list)
}

/// A method review answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub buggy: bool,
    pub reason: Option<String>,
}

/// Leading `TRUE`/`FALSE` (any case) decides; for `TRUE` the rest of the
/// answer is the reason.
pub fn parse_verdict(text: &str) -> Option<Verdict> {
    let start = text.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '`' | '"' | '\'' | '#' | '_'));
    let word_len = start
        .char_indices()
        .find(|(_, c)| !c.is_ascii_alphabetic())
        .map_or(start.len(), |(i, _)| i);
    let word = &start[..word_len];
    let buggy = if word.eq_ignore_ascii_case("true") {
        true
    } else if word.eq_ignore_ascii_case("false") {
        false
    } else {
        return None;
    };
    let rest = start[word_len..]
        .trim_start_matches(|c: char| {
            c.is_whitespace()
                || matches!(
                    c,
                    '.' | ',' | ':' | ';' | '!' | '-' | '*' | '`' | '"' | '\'' | '_' | '–' | '—'
                )
        })
        .trim_end();
    let reason = (buggy && !rest.is_empty()).then(|| rest.to_string());
    Some(Verdict { buggy, reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{method_name, simple_name};

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn numbered_list() {
        assert_eq!(
            parse_numbered_list("1. Null registry\n2. Wrong escape").unwrap(),
            vec!["Null registry", "Wrong escape"]
        );
        assert_eq!(
            parse_numbered_list("Causes:\n 1) a\n2.b\n3.  c ").unwrap(),
            vec!["a", "c"]
        );
        assert!(parse_numbered_list("no causes").is_none());
        assert!(parse_numbered_list("2024 was a year").is_none());
        let many: String = (1..=14).map(|i| format!("{i}. cause {i}\n")).collect();
        assert_eq!(parse_numbered_list(&many).unwrap().len(), MAX_CAUSES);
    }

    #[test]
    fn class_resolution() {
        let classes = strings(&["pkg.ToStringStyle", "pkg.ToStringBuilder", "pkg.Util"]);
        assert_eq!(resolve("pkg.ToStringStyle", &classes, simple_name), Some(0));
        assert_eq!(resolve("`pkg.Util`.", &classes, simple_name), Some(2));
        assert_eq!(
            resolve("the class ToStringStyle handles registry", &classes, simple_name),
            Some(0)
        );
        assert_eq!(
            resolve("I think it is PKG.TOSTRINGBUILDER", &classes, simple_name),
            Some(1)
        );
        assert_eq!(resolve("pkg.Missing", &classes, simple_name), None);
        // Ambiguous prefix matches both ToString classes.
        assert_eq!(resolve("ToString", &classes, simple_name), None);
    }

    #[test]
    fn nested_names_prefer_the_longer_candidate() {
        let classes = strings(&["pkg.Style", "pkg.StyleTest"]);
        assert_eq!(resolve("It is pkg.StyleTest", &classes, simple_name), Some(1));
        assert_eq!(resolve("It is pkg.Style", &classes, simple_name), Some(0));
    }

    #[test]
    fn signature_resolution() {
        let sigs = strings(&["register(Object) void", "unregister(Object) void", "getRegistry() Map"]);
        assert_eq!(resolve("unregister(Object) void", &sigs, method_name), Some(1));
        // `register` occurs inside `unregister` only as a non-word match.
        assert_eq!(resolve("The bug is in unregister", &sigs, method_name), Some(1));
        assert_eq!(resolve("register", &sigs, method_name), Some(0));
    }

    #[test]
    fn doc_lines() {
        let sigs = strings(&["isRemovableVar(Var) boolean", "process(Node,Node) void"]);
        let docs = parse_doc_lines(
            "- `isRemovableVar(Var)`: Checks whether a variable can be removed.\n\
             process(Node,Node) void: Calls removeUnreferencedFunctionArgs(): strips args.\n\
             junk line",
            &sigs,
        )
        .unwrap();
        assert_eq!(
            docs["isRemovableVar(Var) boolean"],
            "Checks whether a variable can be removed."
        );
        assert_eq!(
            docs["process(Node,Node) void"],
            "Calls removeUnreferencedFunctionArgs(): strips args."
        );
        assert!(parse_doc_lines("nothing useful", &sigs).is_none());
    }

    #[test]
    fn method_lists() {
        let sigs = strings(&["a() void", "b(int) int", "c() void"]);
        let list = parse_method_list("1. b(int) int\n2. zzz()", &sigs).unwrap();
        assert_eq!(list.methods, vec!["b(int) int"]);
        assert_eq!(list.unresolved, vec!["zzz()"]);
        assert_eq!(parse_method_list("NONE", &sigs).unwrap(), MethodList::default());
        assert_eq!(parse_method_list("", &sigs).unwrap(), MethodList::default());
        assert!(parse_method_list("qqq\nrrr", &sigs).is_none());
        let ordered = parse_method_list("c() void\na() void\nc() void", &sigs).unwrap();
        assert_eq!(ordered.methods, vec!["c() void", "a() void"]);
    }

    #[test]
    fn verdicts() {
        assert_eq!(
            parse_verdict("TRUE. The registry is never cleared.").unwrap(),
            Verdict {
                buggy: true,
                reason: Some("The registry is never cleared.".into())
            }
        );
        assert_eq!(
            parse_verdict("FALSE").unwrap(),
            Verdict {
                buggy: false,
                reason: None
            }
        );
        assert!(parse_verdict("**true**: off by one").unwrap().buggy);
        assert_eq!(
            parse_verdict("**true**: off by one").unwrap().reason.as_deref(),
            Some("off by one")
        );
        assert!(parse_verdict("It might be.").is_none());
        assert!(parse_verdict("TRUEISH").is_none());
    }
}
