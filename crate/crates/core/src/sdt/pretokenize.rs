//! Splits raw strings into the chunks BPE merges operate within.
//!
//! Text mode follows the familiar byte-level layout: runs of letters, digits
//! or punctuation, each optionally carrying one leading space, with leftover
//! whitespace kept as its own chunk. Formula mode additionally keeps LaTeX
//! control sequences (`\frac`, `\{`, `\\`) together so they can be learned as
//! whole tokens.

use super::Modality;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Letter,
    Digit,
    Command,
    Other,
}

fn classify(c: char, formula: bool) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Digit
    } else if formula && c == '\\' {
        Class::Command
    } else {
        Class::Other
    }
}

/// Splits `input` into contiguous chunks whose concatenation is `input`.
pub fn pretokenize(input: &str, modality: Modality) -> Vec<&str> {
    let formula = modality == Modality::Formula;
    let chars: Vec<(usize, char)> = input.char_indices().collect();
    let offset = |i: usize| chars.get(i).map_or(input.len(), |&(o, _)| o);
    let class_at = |i: usize| classify(chars[i].1, formula);

    let mut chunks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut start = i;
        if class_at(i) == Class::Space {
            let mut j = i;
            while j < chars.len() && class_at(j) == Class::Space {
                j += 1;
            }
            // A trailing ' ' before a non-space char is given to the next chunk.
            if j < chars.len() && chars[j - 1].1 == ' ' {
                if j - 1 > i {
                    chunks.push(&input[offset(i)..offset(j - 1)]);
                }
                start = j - 1;
                i = j;
            } else {
                chunks.push(&input[offset(i)..offset(j)]);
                i = j;
                continue;
            }
        }
        let class = class_at(i);
        match class {
            Class::Command => {
                i += 1;
                if i < chars.len() && chars[i].1.is_ascii_alphabetic() {
                    while i < chars.len() && chars[i].1.is_ascii_alphabetic() {
                        i += 1;
                    }
                } else if i < chars.len() && class_at(i) != Class::Space {
                    i += 1;
                }
            }
            _ => {
                while i < chars.len() && class_at(i) == class {
                    i += 1;
                }
            }
        }
        chunks.push(&input[offset(start)..offset(i)]);
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_chunks_carry_leading_space() {
        assert_eq!(
            pretokenize("the sum is 42!", Modality::Text),
            vec!["the", " sum", " is", " 42", "!"]
        );
    }

    #[test]
    fn extra_whitespace_stands_alone() {
        assert_eq!(pretokenize("a   b\n", Modality::Text), vec!["a", "  ", " b", "\n"]);
    }

    #[test]
    fn formula_keeps_commands_whole() {
        assert_eq!(
            pretokenize(r"\frac{a}{b}+\sum_{i} \\ \{", Modality::Formula),
            vec![r"\frac", "{", "a", "}{", "b", "}+", r"\sum", "_{", "i", "}", r" \\", r" \{"]
        );
        // Text mode treats the backslash as punctuation.
        assert_eq!(pretokenize(r"\sum", Modality::Text), vec![r"\", "sum"]);
    }

    #[test]
    fn cjk_runs_are_letters() {
        assert_eq!(pretokenize("中文 abc", Modality::Text), vec!["中文", " abc"]);
    }

    #[test]
    fn chunks_concatenate_back() {
        for s in ["", " ", "  x  ", "a\\", "\\", "$x^2$ \t\n y", "é\u{300}z"] {
            for m in [Modality::Text, Modality::Formula] {
                assert_eq!(pretokenize(s, m).concat(), s);
            }
        }
    }
}
