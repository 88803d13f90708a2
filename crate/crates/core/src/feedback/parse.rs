use std::fmt;

use super::{truncate_chars, Sections, MAX_BULLET_CHARS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    MissingSection(&'static str),
    OutOfOrder,
    EmptySection(&'static str),
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::MissingSection(s) => write!(f, "missing section `{s}`"),
            ParseFailure::OutOfOrder => f.write_str("sections out of order"),
            ParseFailure::EmptySection(s) => write!(f, "empty section `{s}`"),
        }
    }
}

impl std::error::Error for ParseFailure {}

const NAMES: [&str; 3] = [
    "mastery analysis",
    "recommendation evaluation",
    "learning suggestions",
];

/// Heading lines may carry markdown decoration (`#`, `**`, numbering,
/// trailing colon) and any letter case.
fn heading(line: &str) -> Option<usize> {
    let core = line
        .trim()
        .trim_start_matches(|c: char| c == '#' || c == '*' || c.is_whitespace())
        .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')')
        .trim()
        .trim_end_matches(|c: char| c == '*' || c == ':' || c.is_whitespace())
        .to_lowercase();
    let core = core.strip_prefix("personalized ").unwrap_or(&core);
    NAMES.iter().position(|n| *n == core)
}

fn bullet_body(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for m in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(m) {
            return Some(rest);
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r);
        }
    }
    None
}

fn split_bullets(body: &str) -> Vec<String> {
    let mut bullets: Vec<String> = Vec::new();
    let mut saw_marker = false;
    for line in body.lines() {
        if let Some(b) = bullet_body(line) {
            saw_marker = true;
            bullets.push(b.trim().to_owned());
        } else if !line.trim().is_empty() {
            match bullets.last_mut() {
                Some(last) if saw_marker => {
                    last.push(' ');
                    last.push_str(line.trim());
                }
                _ => bullets.push(line.trim().to_owned()),
            }
        }
    }
    if !saw_marker && !bullets.is_empty() {
        bullets = vec![bullets.join(" ")];
    }
    bullets
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|b| truncate_chars(&b, MAX_BULLET_CHARS))
        .collect()
}

/// Splits a response into its three sections. Headings are matched case
/// insensitively and must appear in order; text before the first heading is
/// ignored. Over-long suggestion bullets are shortened.
pub fn parse_feedback(text: &str) -> Result<Sections, ParseFailure> {
    let lines: Vec<&str> = text.lines().collect();
    let mut at: [Option<usize>; 3] = [None; 3];
    for (i, line) in lines.iter().enumerate() {
        if let Some(s) = heading(line) {
            at[s].get_or_insert(i);
        }
    }
    let mut pos = [0usize; 3];
    for (s, p) in at.iter().enumerate() {
        pos[s] = p.ok_or(ParseFailure::MissingSection(NAMES[s]))?;
    }
    if !(pos[0] < pos[1] && pos[1] < pos[2]) {
        return Err(ParseFailure::OutOfOrder);
    }
    let body = |from: usize, to: usize| lines[from + 1..to].join("\n").trim().to_owned();
    let mastery_analysis = body(pos[0], pos[1]);
    let recommendation_evaluation = body(pos[1], pos[2]);
    let learning_suggestions = split_bullets(&body(pos[2], lines.len()));
    if mastery_analysis.is_empty() {
        return Err(ParseFailure::EmptySection(NAMES[0]));
    }
    if recommendation_evaluation.is_empty() {
        return Err(ParseFailure::EmptySection(NAMES[1]));
    }
    if learning_suggestions.is_empty() {
        return Err(ParseFailure::EmptySection(NAMES[2]));
    }
    Ok(Sections {
        mastery_analysis,
        recommendation_evaluation,
        learning_suggestions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = "## Mastery Analysis\n\
        - Fractions is weak (0.20).\n\
        - Addition is solid (0.90).\n\
        \n\
        ## Recommendation Evaluation\n\
        Both items target Fractions.\n\
        \n\
        ## Learning Suggestions\n\
        - Review equivalent fractions.\n\
        - Practise item p10,\n  then item p12.\n\
        1. Revisit decimals.\n";

    #[test]
    fn canonical_text() {
        let s = parse_feedback(CANONICAL).unwrap();
        assert_eq!(
            s.mastery_analysis,
            "- Fractions is weak (0.20).\n- Addition is solid (0.90)."
        );
        assert_eq!(s.recommendation_evaluation, "Both items target Fractions.");
        assert_eq!(
            s.learning_suggestions,
            vec![
                "Review equivalent fractions.",
                "Practise item p10, then item p12.",
                "Revisit decimals."
            ]
        );
    }

    #[test]
    fn decorated_headings() {
        let text = "Sure!\n**MASTERY ANALYSIS:**\nok\n### 2. recommendation evaluation\nfine\nPersonalized Learning Suggestions:\nJust practise.\n";
        let s = parse_feedback(text).unwrap();
        assert_eq!(s.mastery_analysis, "ok");
        assert_eq!(s.learning_suggestions, vec!["Just practise."]);
    }

    #[test]
    fn out_of_order() {
        let text = "## Recommendation Evaluation\na\n## Mastery Analysis\nb\n## Learning Suggestions\n- c\n";
        assert_eq!(parse_feedback(text), Err(ParseFailure::OutOfOrder));
    }

    #[test]
    fn degenerate() {
        assert_eq!(
            parse_feedback(""),
            Err(ParseFailure::MissingSection("mastery analysis"))
        );
        let text = "## Mastery Analysis\n\n## Recommendation Evaluation\nx\n## Learning Suggestions\n- y\n";
        assert_eq!(
            parse_feedback(text),
            Err(ParseFailure::EmptySection("mastery analysis"))
        );
        let text = "## Mastery Analysis\na\n## Recommendation Evaluation\nx\n## Learning Suggestions\n  \n";
        assert_eq!(
            parse_feedback(text),
            Err(ParseFailure::EmptySection("learning suggestions"))
        );
    }

    #[test]
    fn long_bullets_are_capped() {
        let text = format!(
            "## Mastery Analysis\na\n## Recommendation Evaluation\nb\n## Learning Suggestions\n- {}\n",
            "x".repeat(900)
        );
        let s = parse_feedback(&text).unwrap();
        assert_eq!(s.learning_suggestions[0].chars().count(), MAX_BULLET_CHARS);
    }

    #[test]
    fn render_round_trip() {
        let s = parse_feedback(CANONICAL).unwrap();
        assert_eq!(parse_feedback(&s.render()).unwrap(), s);
    }
}
