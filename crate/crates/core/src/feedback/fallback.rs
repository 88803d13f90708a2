use std::collections::BTreeSet;

use super::{truncate_chars, Evidence, FeedbackReport, Provider, Sections, MAX_BULLET_CHARS};

/// Knowledge points at or above this mastery are never called weak.
pub const CONSOLIDATION_CEILING: f64 = 0.9;
pub const MAX_WEAK_POINTS: usize = 3;

fn name(ev: &Evidence<'_>, k: usize) -> String {
    ev.knowledge_name(k)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("knowledge point {k}"))
}

fn weakest(ev: &Evidence<'_>) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..ev.mastery.len())
        .filter(|&k| ev.mastery[k] < CONSOLIDATION_CEILING)
        .collect();
    ks.sort_by(|&a, &b| ev.mastery[a].total_cmp(&ev.mastery[b]).then(a.cmp(&b)));
    ks.truncate(MAX_WEAK_POINTS);
    ks
}

fn covering(ev: &Evidence<'_>, k: usize) -> Vec<String> {
    ev.recommended
        .iter()
        .filter(|&&i| ev.item_knowledge(i).contains(&k))
        .map(|&i| ev.item_label(i))
        .collect()
}

/// Rule-based report built only from the given evidence. Identical inputs
/// give byte-identical output.
pub fn fallback_feedback(ev: &Evidence<'_>) -> FeedbackReport {
    let weak = weakest(ev);
    let n = ev.mastery.len();
    let mean = if n == 0 {
        0.0
    } else {
        ev.mastery.iter().sum::<f64>() / n as f64
    };

    let mastery_analysis = if weak.is_empty() {
        format!(
            "No weak points: all {n} knowledge points are at or above {CONSOLIDATION_CEILING:.2} mastery (mean {mean:.2})."
        )
    } else {
        let listed: Vec<String> = weak
            .iter()
            .map(|&k| format!("{} ({:.2})", name(ev, k), ev.mastery[k]))
            .collect();
        format!(
            "Weakest knowledge points: {}.\nMean mastery across {n} knowledge points: {mean:.2}.",
            listed.join(", ")
        )
    };

    let recommendation_evaluation = if ev.recommended.is_empty() {
        "No items recommended.".to_owned()
    } else {
        let labels: Vec<String> = ev.recommended.iter().map(|&i| ev.item_label(i)).collect();
        let touched: BTreeSet<usize> = ev
            .recommended
            .iter()
            .flat_map(|&i| ev.item_knowledge(i).iter().copied())
            .collect();
        let (hit, miss): (Vec<usize>, Vec<usize>) = weak.iter().partition(|k| touched.contains(k));
        let names = |ks: &[usize]| {
            ks.iter()
                .map(|&k| name(ev, k))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut s = format!("Recommended items: {}.", labels.join(", "));
        if weak.is_empty() {
            s.push_str("\nThey serve as consolidation practice.");
        } else {
            if hit.is_empty() {
                s.push_str("\nThey cover none of the weak points.");
            } else {
                s.push_str(&format!("\nThey cover the weak points {}.", names(&hit)));
            }
            if !miss.is_empty() {
                s.push_str(&format!("\nNot covered: {}.", names(&miss)));
            }
        }
        s
    };

    let learning_suggestions = if weak.is_empty() {
        vec![
            "Consolidate with mixed review across all knowledge points and try harder items."
                .to_owned(),
        ]
    } else {
        weak.iter()
            .map(|&k| {
                let items = covering(ev, k);
                let text = if items.is_empty() {
                    format!(
                        "Review {} (mastery {:.2}) with additional basic practice.",
                        name(ev, k),
                        ev.mastery[k]
                    )
                } else {
                    format!(
                        "Review {} (mastery {:.2}) and work through item {}.",
                        name(ev, k),
                        ev.mastery[k],
                        items.join(", ")
                    )
                };
                truncate_chars(&text, MAX_BULLET_CHARS)
            })
            .collect()
    };

    let sections = Sections {
        mastery_analysis,
        recommendation_evaluation,
        learning_suggestions,
    };
    FeedbackReport {
        provider: Provider::Fallback,
        raw_response: sections.render(),
        sections,
        fallback_reason: None,
    }
}
