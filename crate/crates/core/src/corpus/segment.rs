//! Rule-based sentence segmentation.
//!
//! Clinical notes rarely survive general-purpose segmenters: line breaks act
//! as de facto sentence boundaries and abbreviations are endemic. The rules
//! here are deliberately simple and fully deterministic, because downstream
//! cross-sentence distances must be reproducible across runs and machines.

use super::SentenceSpan;

/// Segmentation rules. `Default` splits after `.`, `!`, `?` followed by
/// whitespace and treats a hard newline as a boundary.
#[derive(Debug, Clone)]
pub struct SegmenterConfig {
    /// Treat `\n` as a sentence boundary.
    pub newline_is_boundary: bool,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            newline_is_boundary: true,
        }
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Segment with the default configuration.
pub fn segment_sentences(text: &str) -> Vec<SentenceSpan> {
    segment_sentences_with(text, &SegmenterConfig::default())
}

/// Split `text` into sentence spans over character offsets.
///
/// Spans cover every non-whitespace character; the gaps between spans are
/// whitespace only. A sentence ends after a run of terminator characters
/// followed by whitespace (or end of text), or before a newline when
/// `newline_is_boundary` is set. Text without any boundary yields a single
/// span.
pub fn segment_sentences_with(text: &str, config: &SegmenterConfig) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut i = 0;

    while i < n {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= n {
            break;
        }
        let start = i;
        let mut last_content = i;
        let mut end = None;

        while i < n {
            let c = chars[i];
            if c == '\n' && config.newline_is_boundary {
                end = Some(last_content + 1);
                break;
            }
            if is_terminator(c) {
                // Absorb a run like "..." or "?!" as a single boundary.
                let mut j = i;
                while j + 1 < n && is_terminator(chars[j + 1]) {
                    j += 1;
                }
                if j + 1 >= n || chars[j + 1].is_whitespace() {
                    end = Some(j + 1);
                    i = j + 1;
                    break;
                }
                // Terminator inside a token, e.g. "3.5" or "q.i.d" — content.
                last_content = j;
                i = j + 1;
                continue;
            }
            if !c.is_whitespace() {
                last_content = i;
            }
            i += 1;
        }

        let end = end.unwrap_or(last_content + 1);
        spans.push(SentenceSpan {
            index: spans.len(),
            start,
            end,
        });
    }
    spans
}
