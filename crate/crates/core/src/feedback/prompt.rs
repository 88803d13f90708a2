use serde::{Deserialize, Serialize};

use super::{Evidence, EVALUATION_MARKER, MASTERY_MARKER, MAX_BULLET_CHARS, SUGGESTIONS_MARKER};
use crate::error::{Error, Result};

pub const DEFAULT_PROMPT_CAP: usize = 8000;

const TRUNCATED: &str = " [truncated]";
const OMITTED: &str = "[text omitted]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub fixed_part: String,
    pub dynamic_part: String,
    pub rendered: String,
}

fn fixed_part() -> String {
    format!(
        "You are an educational assessment expert and teaching assistant.\n\
         \n\
         Tasks:\n\
         1. Analyze the student's mastery of each knowledge point.\n\
         2. Evaluate whether the recommended items suit the student's weak points.\n\
         3. Provide personalized, actionable learning suggestions.\n\
         \n\
         Output rules:\n\
         - Answer with exactly three sections, in this order, each introduced by its heading on its own line:\n\
         {MASTERY_MARKER}\n\
         {EVALUATION_MARKER}\n\
         {SUGGESTIONS_MARKER}\n\
         - Use short structured bullet points.\n\
         - Keep the first two sections under 120 words each.\n\
         - Under {SUGGESTIONS_MARKER}, give 1 to 5 bullets starting with \"- \", each at most {MAX_BULLET_CHARS} characters.\n\
         - Refer only to knowledge points and items listed below."
    )
}

fn dynamic_part(ev: &Evidence<'_>, texts: &[String]) -> Result<String> {
    let mut out = String::from("Student mastery (knowledge point: mastery):\n");
    for (k, m) in ev.mastery.iter().enumerate() {
        let name = ev.knowledge_name(k).ok_or(Error::MissingKnowledgeName(k))?;
        out.push_str(&format!("{name}: {m:.2}\n"));
    }
    out.push_str("\nRecommended items:\n");
    if ev.recommended.is_empty() {
        out.push_str(
            "None. No items recommended; state in the recommendation evaluation that no items were recommended.\n",
        );
    }
    for (rank, (&item, text)) in ev.recommended.iter().zip(texts).enumerate() {
        let knowledge = ev
            .item_knowledge(item)
            .iter()
            .map(|&k| ev.knowledge_name(k).ok_or(Error::MissingKnowledgeName(k)))
            .collect::<Result<Vec<_>>>()?;
        out.push_str(&format!(
            "{}. Item {} (knowledge points: {})\n   Text: {}\n",
            rank + 1,
            ev.item_label(item),
            knowledge.join(", "),
            text
        ));
    }
    Ok(out)
}

fn assemble(fixed: &str, dynamic: &str) -> String {
    format!("{fixed}\n\n{dynamic}")
}

/// Renders the prompt. When it would exceed `cap` characters, item texts
/// are shortened starting from the least relevant (last recommended) item.
/// Mastery lines are never shortened; if they alone overflow the cap the
/// prompt is rejected.
pub fn build_prompt(ev: &Evidence<'_>, cap: usize) -> Result<PromptBundle> {
    let mut texts = ev
        .recommended
        .iter()
        .map(|&item| {
            ev.item_texts
                .get(item)
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
                .ok_or(Error::MissingItemText(item))
        })
        .collect::<Result<Vec<_>>>()?;
    let fixed = fixed_part();
    let mut dynamic = dynamic_part(ev, &texts)?;
    let len = |d: &str| assemble(&fixed, d).chars().count();

    for idx in (0..texts.len()).rev() {
        let current = len(&dynamic);
        if current <= cap {
            break;
        }
        let over = current - cap;
        let t = texts[idx].chars().count();
        let keep = t.saturating_sub(over + TRUNCATED.len());
        let shorter = if keep > 0 {
            let mut s: String = texts[idx].chars().take(keep).collect();
            s.push_str(TRUNCATED);
            s
        } else {
            OMITTED.to_owned()
        };
        if shorter.chars().count() < t {
            texts[idx] = shorter;
            dynamic = dynamic_part(ev, &texts)?;
        }
    }
    let rendered = assemble(&fixed, &dynamic);
    if rendered.chars().count() > cap {
        return Err(Error::InvalidConfig(format!(
            "prompt cap {cap} is too small for the mastery lines ({} characters needed)",
            rendered.chars().count()
        )));
    }
    Ok(PromptBundle {
        fixed_part: fixed,
        dynamic_part: dynamic,
        rendered,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixture;
    use super::*;

    #[test]
    fn mastery_lines_and_items() {
        let f = fixture::small();
        let b = build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP).unwrap();
        let lines: Vec<&str> = b.rendered.lines().collect();
        for line in [
            "Fractions: 0.20",
            "Addition: 0.90",
            "Decimals: 0.55",
            "Ratios: 0.41",
        ] {
            assert_eq!(lines.iter().filter(|l| **l == line).count(), 1, "{line}");
        }
        assert!(b
            .rendered
            .contains("educational assessment expert and teaching assistant"));
        assert!(b
            .rendered
            .contains("Item p12 (knowledge points: Fractions, Decimals)"));
        assert!(b.rendered.contains("Write 0.4 as a fraction."));
        assert_eq!(
            b.rendered,
            format!("{}\n\n{}", b.fixed_part, b.dynamic_part)
        );
        for m in [MASTERY_MARKER, EVALUATION_MARKER, SUGGESTIONS_MARKER] {
            assert!(b.fixed_part.contains(m));
        }
    }

    #[test]
    fn single_knowledge_point_line() {
        let mut f = fixture::small();
        f.mastery = vec![0.32];
        f.names = vec!["Fractions".into()];
        f.q = crate::data::QMatrix::from_rows(vec![vec![0]], 1).unwrap();
        f.recommended = vec![0];
        let b = build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP).unwrap();
        assert!(b.rendered.lines().any(|l| l == "Fractions: 0.32"));
    }

    #[test]
    fn no_recommendations() {
        let mut f = fixture::small();
        f.recommended.clear();
        let b = build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP).unwrap();
        assert!(b.dynamic_part.contains("No items recommended"));
    }

    #[test]
    fn oversized_texts_are_cut_least_relevant_first() {
        let mut f = fixture::small();
        f.texts = vec!["a".repeat(5000), "b".repeat(5000), "c".repeat(5000)];
        let b = build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP).unwrap();
        assert!(b.rendered.chars().count() <= DEFAULT_PROMPT_CAP);
        for line in [
            "Fractions: 0.20",
            "Addition: 0.90",
            "Decimals: 0.55",
            "Ratios: 0.41",
        ] {
            assert!(b.rendered.lines().any(|l| l == line));
        }
        let texts: Vec<usize> = b
            .rendered
            .lines()
            .filter_map(|l| l.strip_prefix("   Text: "))
            .map(|t| t.chars().count())
            .collect();
        assert_eq!(texts.len(), 2);
        assert!(texts[0] > texts[1], "{texts:?}");
    }

    #[test]
    fn cap_too_small_for_mastery_lines() {
        let f = fixture::small();
        assert!(build_prompt(&f.evidence(), 100).is_err());
    }

    #[test]
    fn missing_inputs() {
        let mut f = fixture::small();
        f.texts[2] = String::new();
        assert!(matches!(
            build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP),
            Err(Error::MissingItemText(2))
        ));
        let mut f = fixture::small();
        f.names.pop();
        assert!(matches!(
            build_prompt(&f.evidence(), DEFAULT_PROMPT_CAP),
            Err(Error::MissingKnowledgeName(3))
        ));
    }
}
