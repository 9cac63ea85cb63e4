//! Transcript and city-name normalization.

/// Lowercases `text`, strips punctuation and splits on whitespace.
///
/// Punctuation is deleted rather than replaced, so `"hop-count"` becomes
/// `"hopcount"`.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|word| !word.is_empty())
        .collect()
}

/// Canonical city key: normalized tokens joined by single spaces.
pub fn normalize_city(city: &str) -> String {
    normalize(city).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_transcripts() {
        assert_eq!(normalize("Launch VIVoNet!"), ["launch", "vivonet"]);
        assert_eq!(
            normalize("Setup a LEAST latency path"),
            ["setup", "a", "least", "latency", "path"]
        );
        assert!(normalize("").is_empty());
        assert!(normalize("  ?! ").is_empty());
        assert_eq!(normalize("least hop-count"), ["least", "hopcount"]);
    }

    #[test]
    fn city_keys() {
        assert_eq!(normalize_city("  New   York "), "new york");
        assert_eq!(normalize_city("St. Louis"), "st louis");
    }
}
