//! LIKE pattern syntax: `%`, `_`, `[...]`, `[^...]` and an optional escape
//! character.

use super::SqlError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternAtom {
    Char(char),
    AnyOne,
    /// Character set, ranges expanded.
    Class { chars: Vec<char>, negated: bool },
}

/// A pattern split at its unescaped `%` signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LikePattern {
    /// Runs of atoms between `%` signs; empty runs are dropped.
    pub segments: Vec<Vec<PatternAtom>>,
    pub leading_percent: bool,
    pub trailing_percent: bool,
    /// The pattern contains no `%` at all.
    pub anchored_both: bool,
}

impl LikePattern {
    pub fn min_len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

const MAX_CLASS_SPAN: u32 = 4096;

fn bad(pattern: &str, msg: &str) -> SqlError {
    SqlError::Type(format!("LIKE pattern {pattern:?}: {msg}"))
}

pub fn parse_like_pattern(pattern: &str, escape: Option<char>) -> Result<LikePattern, SqlError> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut runs: Vec<Vec<PatternAtom>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if Some(c) == escape {
            let next = *chars.get(i + 1).ok_or_else(|| bad(pattern, "dangling escape character"))?;
            runs.last_mut().expect("non-empty").push(PatternAtom::Char(next));
            i += 2;
            continue;
        }
        match c {
            '%' => runs.push(Vec::new()),
            '_' => runs.last_mut().expect("non-empty").push(PatternAtom::AnyOne),
            '[' => {
                let close = chars[i + 1..]
                    .iter()
                    .enumerate()
                    .skip(1)
                    .find(|(_, &ch)| ch == ']')
                    .map(|(k, _)| i + 1 + k)
                    .ok_or_else(|| bad(pattern, "unterminated character class"))?;
                let mut body = &chars[i + 1..close];
                let negated = body.first() == Some(&'^');
                if negated {
                    body = &body[1..];
                }
                if body.is_empty() {
                    return Err(bad(pattern, "empty character class"));
                }
                let mut set = Vec::new();
                let mut k = 0;
                while k < body.len() {
                    if k + 2 < body.len() && body[k + 1] == '-' {
                        let (lo, hi) = (u32::from(body[k]), u32::from(body[k + 2]));
                        if lo > hi {
                            return Err(bad(pattern, "reversed range in character class"));
                        }
                        if hi - lo > MAX_CLASS_SPAN {
                            return Err(bad(pattern, "character range too wide"));
                        }
                        set.extend((lo..=hi).filter_map(char::from_u32));
                        k += 3;
                    } else {
                        set.push(body[k]);
                        k += 1;
                    }
                }
                set.sort_unstable();
                set.dedup();
                runs.last_mut().expect("non-empty").push(PatternAtom::Class { chars: set, negated });
                i = close + 1;
                continue;
            }
            _ => runs.last_mut().expect("non-empty").push(PatternAtom::Char(c)),
        }
        i += 1;
    }
    let anchored_both = runs.len() == 1;
    let leading_percent = !anchored_both && runs.first().is_some_and(Vec::is_empty);
    let trailing_percent = !anchored_both && runs.last().is_some_and(Vec::is_empty);
    let segments = if anchored_both { runs } else { runs.into_iter().filter(|r| !r.is_empty()).collect() };
    Ok(LikePattern { segments, leading_percent, trailing_percent, anchored_both })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> Vec<PatternAtom> {
        s.chars().map(PatternAtom::Char).collect()
    }

    #[test]
    fn splits_on_percent() {
        let p = parse_like_pattern("aa%bb%yy", None).unwrap();
        assert_eq!(p.segments, vec![lit("aa"), lit("bb"), lit("yy")]);
        assert!(!p.leading_percent && !p.trailing_percent && !p.anchored_both);
        assert_eq!(p.min_len(), 6);
        let p = parse_like_pattern("%abc%", None).unwrap();
        assert_eq!(p.segments, vec![lit("abc")]);
        assert!(p.leading_percent && p.trailing_percent);
    }

    #[test]
    fn escape_and_classes() {
        let p = parse_like_pattern("a!%c", Some('!')).unwrap();
        assert!(p.anchored_both);
        assert_eq!(p.segments, vec![lit("a%c")]);
        let p = parse_like_pattern("[a-c]_[^xy]", None).unwrap();
        assert_eq!(p.segments[0], vec![
            PatternAtom::Class { chars: vec!['a', 'b', 'c'], negated: false },
            PatternAtom::AnyOne,
            PatternAtom::Class { chars: vec!['x', 'y'], negated: true },
        ]);
        assert!(parse_like_pattern("ab!", Some('!')).is_err());
        assert!(parse_like_pattern("a[bc", None).is_err());
        assert!(parse_like_pattern("a[]", None).is_err());
        assert!(parse_like_pattern("[z-a]", None).is_err());
        assert_eq!(parse_like_pattern("[]]", None).unwrap().segments[0], vec![PatternAtom::Class { chars: vec![']'], negated: false }]);
    }

    #[test]
    fn percent_only_and_empty() {
        let p = parse_like_pattern("%", None).unwrap();
        assert!(p.segments.is_empty());
        let p = parse_like_pattern("", None).unwrap();
        assert!(p.anchored_both);
        assert_eq!(p.segments, vec![Vec::<PatternAtom>::new()]);
    }
}
