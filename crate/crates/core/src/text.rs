//! Tokenization and the laboratory vocabulary shared by the metrics, the
//! planner's grounding check and the memory profile extractor.

/// Lowercase, split on anything that is not alphanumeric, drop empties.
/// No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Equipment the system recognises as object names. Multi-word terms are
/// matched as contiguous token runs.
pub const EQUIPMENT_TERMS: &[&str] = &[
    "alcohol lamp",
    "balance",
    "beaker",
    "bottle",
    "burette",
    "conical flask",
    "crucible",
    "cylinder",
    "dropper",
    "erlenmeyer",
    "evaporating dish",
    "flask",
    "funnel",
    "glass rod",
    "graduated cylinder",
    "lid",
    "pipette",
    "reagent bottle",
    "spatula",
    "stirring rod",
    "test tube",
    "test tube rack",
    "thermometer",
    "tongs",
    "tray",
    "tube",
    "vial",
    "water bath",
    "watch glass",
    "weighing paper",
];

/// Substances; these live inside containers rather than on the bench.
pub const REAGENT_TERMS: &[&str] =
    &["acid", "alcohol", "ethanol", "hcl", "naoh", "phenolphthalein", "powder", "salt", "sodium chloride", "solution", "water"];

/// Returns every lexicon term present in `text`, longest match first, each
/// term reported once. Tokens consumed by a longer term are not reported
/// again as a shorter one ("test tube rack" does not also yield "tube").
pub fn lab_terms_in(text: &str) -> Vec<&'static str> {
    let tokens = tokenize(text);
    let mut terms: Vec<(&'static str, Vec<String>)> =
        EQUIPMENT_TERMS.iter().chain(REAGENT_TERMS).map(|t| (*t, tokenize(t))).collect();
    terms.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

    let mut used = vec![false; tokens.len()];
    let mut found = Vec::new();
    for (term, parts) in &terms {
        let n = parts.len();
        if n == 0 || n > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - n {
            if used[start..start + n].iter().any(|u| *u) {
                continue;
            }
            if tokens[start..start + n] == parts[..] {
                used[start..start + n].iter_mut().for_each(|u| *u = true);
                if !found.contains(term) {
                    found.push(*term);
                }
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits_on_punctuation() {
        assert_eq!(tokenize("Add 5 mL HCl, then-stir!"), vec!["add", "5", "ml", "hcl", "then", "stir"]);
        assert!(tokenize("  ,;  ").is_empty());
    }

    #[test]
    fn longest_term_wins() {
        let found = lab_terms_in("place the test tube rack next to the beaker");
        assert_eq!(found, vec!["test tube rack", "beaker"]);
        assert_eq!(lab_terms_in("light the alcohol lamp"), vec!["alcohol lamp"]);
    }
}
