use cipherdb_cloud::{CipherCell, MatchAtom, MatchProgram, MatchSegment, SegmentAnchor};
use rand::RngCore;

use crate::codec::{is_codable, ColumnSpec, MAX_CHAR_CODE};
use crate::opea::{self, DomainKey, OpeaError};
use crate::sql::{LikePattern, PatternAtom};

fn encrypt_char(c: char, limit: u64, key: &DomainKey, rng: &mut impl RngCore) -> Result<Option<CipherCell>, OpeaError> {
    if !is_codable(c, limit) {
        return Ok(None);
    }
    let code = u64::from(u32::from(c));
    Ok(Some(CipherCell::Int(opea::encrypt(key, code, rng)?)))
}

/// Builds the ciphertext matcher for a LIKE pattern over a fuzzy column.
/// Pattern characters that cannot occur in stored codes match nothing.
pub fn compile_like(
    pattern: &LikePattern,
    spec: &ColumnSpec,
    key: &DomainKey,
    rng: &mut impl RngCore,
) -> Result<MatchProgram, OpeaError> {
    let limit = spec.max_code.min(MAX_CHAR_CODE);
    let last = pattern.segments.len().saturating_sub(1);
    let mut segments = Vec::with_capacity(pattern.segments.len());
    for (i, run) in pattern.segments.iter().enumerate() {
        let anchor = if pattern.anchored_both {
            SegmentAnchor::Whole
        } else if i == 0 && !pattern.leading_percent {
            SegmentAnchor::Start
        } else if i == last && !pattern.trailing_percent {
            SegmentAnchor::End
        } else {
            SegmentAnchor::Floating
        };
        let mut atoms = Vec::with_capacity(run.len());
        for atom in run {
            atoms.push(match atom {
                PatternAtom::Char(c) => {
                    MatchAtom::Literal { cipher: encrypt_char(*c, limit, key, rng)?, blank: *c == ' ' }
                }
                PatternAtom::AnyOne => MatchAtom::AnyOne,
                PatternAtom::Class { chars, negated } => {
                    let mut members = Vec::with_capacity(chars.len());
                    for &c in chars {
                        if let Some(cell) = encrypt_char(c, limit, key, rng)? {
                            members.push(cell);
                        }
                    }
                    MatchAtom::Class { members, negated: *negated, blank: chars.contains(&' ') }
                }
            });
        }
        segments.push(MatchSegment { anchor, atoms });
    }
    Ok(MatchProgram { segments, min_len: pattern.min_len() })
}
