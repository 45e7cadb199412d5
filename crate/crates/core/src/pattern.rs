//! Presence-pattern strings like "VAT", "V-T", "--T". Position 1 is visual,
//! position 2 audio, position 3 text; `-` marks an absent channel.

use crate::error::{Error, Result};

/// Parse a three-character pattern into (visual, audio, text) presence flags.
/// All-absent patterns are rejected: at least one channel must survive.
pub fn parse_pattern(s: &str) -> Result<[bool; 3]> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != 3 {
        return Err(Error::Config(format!(
            "presence pattern must have exactly 3 characters, got {s:?}"
        )));
    }
    let expected = ['V', 'A', 'T'];
    let mut presence = [false; 3];
    for (i, &ch) in chars.iter().enumerate() {
        presence[i] = match ch {
            c if c == expected[i] => true,
            '-' => false,
            other => {
                return Err(Error::Config(format!(
                    "position {} of pattern {s:?} must be '{}' or '-', got {other:?}",
                    i + 1,
                    expected[i]
                )))
            }
        };
    }
    if presence == [false; 3] {
        return Err(Error::Config(
            "pattern \"---\" leaves no channel present".into(),
        ));
    }
    Ok(presence)
}

/// Render presence flags back into the canonical pattern string.
pub fn format_pattern(presence: [bool; 3]) -> String {
    let chars = ['V', 'A', 'T'];
    presence
        .iter()
        .enumerate()
        .map(|(i, &p)| if p { chars[i] } else { '-' })
        .collect()
}
