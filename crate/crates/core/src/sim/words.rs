use rand::seq::IndexedRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "the", "storm", "lantern", "harbor", "letter", "quietly", "beneath", "window", "ferry",
    "stranger", "rope", "salt", "morning", "whispered", "gull", "cliff", "door", "map", "tide",
    "old", "keeper", "signal", "north", "silver", "island", "boat", "returned", "dark", "light",
    "promise", "forgotten", "ink", "shadow", "stairs", "bell", "fog", "answer", "waited", "coat",
    "distant", "and", "then", "because", "while", "her", "his", "their", "a", "of", "into",
];

/// A sentence of `words` seeded words, capitalised and ending in a period.
pub fn sentence(rng: &mut impl Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words.max(1) {
        let w = WORDS.choose(rng).expect("non-empty word list");
        if i == 0 {
            let mut c = w.chars();
            if let Some(first) = c.next() {
                out.extend(first.to_uppercase());
                out.push_str(c.as_str());
            }
        } else {
            out.push(' ');
            out.push_str(w);
        }
    }
    out.push('.');
    out
}
