/// Directional words removed from the query before crop refinement.
pub const DEFAULT_DIRECTIONAL_KEYWORDS: [&str; 8] = [
    "left", "right", "top", "bottom", "upper", "lower", "leftmost", "rightmost",
];

pub fn default_keywords() -> Vec<String> {
    DEFAULT_DIRECTIONAL_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

/// Case-insensitive whole-word removal of `keywords`, then whitespace runs
/// collapsed. Punctuation stays where it was.
pub fn strip_directional_keywords(query: &str, keywords: &[String]) -> String {
    let lowered: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    let chars: Vec<char> = query.chars().collect();
    let mut drop = vec![false; chars.len()];

    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_alphanumeric() {
            i += 1;
        }
        let word: String = chars[start..i].iter().collect::<String>().to_lowercase();
        if lowered.iter().any(|k| *k == word) {
            drop[start..i].iter_mut().for_each(|d| *d = true);
            // take one neighbouring space with the word so no gap is left behind
            if start > 0 && chars[start - 1].is_whitespace() && !drop[start - 1] {
                drop[start - 1] = true;
            } else if i < chars.len() && chars[i].is_whitespace() {
                drop[i] = true;
            }
        }
    }

    let kept: String = chars
        .iter()
        .zip(&drop)
        .filter(|(_, d)| !**d)
        .map(|(c, _)| *c)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}
