//! Bundled emoji lexicon.
//!
//! A static emoji → single-word tag table, ordered roughly by real-world
//! popularity, plus a deterministic pseudo-word generator that gives every
//! other emoji a stable vocabulary of cue words. The offline tag adapter and
//! the synthetic corpus generator both read from here, so a tag produced by
//! the adapter is always a word the corpus uses for that emoji.

/// Emoji and their one-word descriptions, most popular first.
pub const STATIC_TAGS: &[(&str, &[&str])] = &[
    ("😂", &["laughing", "lol"]),
    ("❤️", &["love", "heart"]),
    ("🤣", &["rofl", "hilarious"]),
    ("👍", &["ok", "approve"]),
    ("😭", &["crying", "sobbing"]),
    ("🙏", &["please", "thanks"]),
    ("😘", &["kiss", "mwah"]),
    ("🥰", &["adore", "smitten"]),
    ("😍", &["gorgeous", "crush"]),
    ("😊", &["happy", "smile"]),
    ("🎉", &["party", "congrats"]),
    ("😁", &["grin", "cheesy"]),
    ("💕", &["sweetheart", "affection"]),
    ("🥺", &["pleading", "puppyeyes"]),
    ("😅", &["awkward", "phew"]),
    ("🔥", &["fire", "lit"]),
    ("☺️", &["content", "blush"]),
    ("🤦", &["facepalm", "ugh"]),
    ("♥️", &["hearts", "cards"]),
    ("🤷", &["shrug", "whatever"]),
    ("🙄", &["eyeroll", "annoyed"]),
    ("😆", &["giggle", "haha"]),
    ("🤗", &["hug", "welcome"]),
    ("😉", &["wink", "flirt"]),
    ("🎂", &["birthday", "cake"]),
    ("🤔", &["thinking", "hmm"]),
    ("👏", &["applause", "clap"]),
    ("🙂", &["fine", "polite"]),
    ("😳", &["flushed", "embarrassed"]),
    ("🥳", &["celebrate", "woohoo"]),
    ("😎", &["cool", "shades"]),
    ("👌", &["perfect", "okay"]),
    ("💜", &["purple", "bts"]),
    ("😔", &["pensive", "sad"]),
    ("💪", &["strong", "gym"]),
    ("✨", &["sparkle", "magic"]),
    ("💖", &["sparkling", "precious"]),
    ("👀", &["eyes", "watching"]),
    ("😋", &["yummy", "delicious"]),
    ("😏", &["smirk", "smug"]),
    ("😢", &["tear", "upset"]),
    ("👉", &["point", "look"]),
    ("💗", &["growing", "tender"]),
    ("😩", &["weary", "exhausted"]),
    ("💯", &["hundred", "totally"]),
    ("🌹", &["rose", "romantic"]),
    ("💞", &["revolving", "soulmate"]),
    ("🎈", &["balloon", "festive"]),
    ("💙", &["blue", "loyal"]),
    ("😃", &["excited", "yay"]),
    ("😡", &["angry", "furious"]),
    ("💐", &["bouquet", "flowers"]),
    ("😜", &["silly", "joking"]),
    ("🙈", &["oops", "shy"]),
    ("🤞", &["fingerscrossed", "hopefully"]),
    ("😄", &["cheerful", "glad"]),
    ("🤤", &["drooling", "craving"]),
    ("🙌", &["hooray", "praise"]),
    ("🤪", &["crazy", "wacky"]),
    ("❣️", &["exclamation", "devotion"]),
    ("😀", &["beaming", "grinning"]),
    ("💋", &["lips", "smooch"]),
    ("💀", &["dead", "skull"]),
    ("👇", &["below", "down"]),
    ("💔", &["heartbroken", "breakup"]),
    ("😌", &["relieved", "calm"]),
    ("💓", &["beating", "heartbeat"]),
    ("🤩", &["starstruck", "amazing"]),
    ("🙃", &["upsidedown", "ironic"]),
    ("😬", &["grimace", "yikes"]),
    ("😱", &["scream", "shocked"]),
    ("😴", &["sleepy", "sleeping"]),
    ("🤭", &["tease", "giggling"]),
    ("😐", &["neutral", "meh"]),
    ("🌞", &["sunshine", "sunny"]),
    ("😒", &["unamused", "unimpressed"]),
    ("😇", &["angel", "innocent"]),
    ("🌸", &["blossom", "spring"]),
    ("😈", &["devil", "naughty"]),
    ("🎶", &["music", "song"]),
    ("✌️", &["peace", "victory"]),
    ("🎊", &["confetti", "celebration"]),
    ("🥵", &["hot", "sweating"]),
    ("😞", &["disappointed", "letdown"]),
    ("💚", &["green", "nature"]),
    ("☀️", &["sun", "bright"]),
    ("🖤", &["black", "goth"]),
    ("💰", &["money", "cash"]),
    ("😚", &["peck", "affectionate"]),
    ("👑", &["crown", "queen"]),
    ("🎁", &["gift", "present"]),
    ("💥", &["boom", "explosion"]),
    ("🙋", &["raisedhand", "volunteer"]),
    ("☹️", &["frown", "unhappy"]),
    ("😑", &["expressionless", "blank"]),
    ("🥴", &["woozy", "tipsy"]),
    ("👈", &["left", "backthere"]),
    ("💩", &["poop", "crap"]),
    ("✅", &["done", "check"]),
    ("👋", &["hello", "bye"]),
    ("🤢", &["nauseated", "gross"]),
    ("🍕", &["pizza"]),
    ("🍔", &["burger", "hamburger"]),
    ("🍟", &["fries", "chips"]),
    ("🌮", &["taco", "tacos"]),
    ("🍣", &["sushi"]),
    ("🍜", &["ramen", "noodles"]),
    ("🍩", &["donut", "doughnut"]),
    ("🍪", &["cookie", "cookies"]),
    ("🍫", &["chocolate"]),
    ("🍦", &["icecream", "softserve"]),
    ("🍺", &["beer", "pint"]),
    ("🍷", &["wine", "merlot"]),
    ("☕", &["coffee", "espresso"]),
    ("🍵", &["tea", "matcha"]),
    ("🍎", &["apple", "fruit"]),
    ("🍌", &["banana"]),
    ("🍓", &["strawberry", "berries"]),
    ("🥑", &["avocado", "guacamole"]),
    ("🍿", &["popcorn", "movie"]),
    ("🥂", &["cheers", "toast"]),
    ("🐶", &["dog", "puppy"]),
    ("🐱", &["cat", "kitty"]),
    ("🐻", &["bear", "teddy"]),
    ("🐼", &["panda"]),
    ("🦄", &["unicorn", "mythical"]),
    ("🐸", &["frog", "toad"]),
    ("🐍", &["snake", "python"]),
    ("🐢", &["turtle", "slow"]),
    ("🐝", &["bee", "honey"]),
    ("🦋", &["butterfly", "flutter"]),
    ("🌈", &["rainbow", "pride"]),
    ("⚡", &["lightning", "electric"]),
    ("❄️", &["snow", "snowflake"]),
    ("🌊", &["wave", "ocean"]),
    ("🌙", &["moon", "night"]),
    ("⭐", &["star", "starry"]),
    ("☔", &["rain", "umbrella"]),
    ("🏖️", &["beach", "vacation"]),
    ("🏔️", &["mountain", "hiking"]),
    ("🚗", &["car", "drive"]),
    ("✈️", &["airplane", "flight"]),
    ("🚀", &["rocket", "launch"]),
    ("🚲", &["bike", "cycling"]),
    ("🏠", &["home", "house"]),
    ("🏥", &["hospital", "doctor"]),
    ("🏫", &["school", "class"]),
    ("⚽", &["soccer", "football"]),
    ("🏀", &["basketball", "hoops"]),
    ("🎾", &["tennis"]),
    ("🏈", &["touchdown", "nfl"]),
    ("🎮", &["gaming", "videogame"]),
    ("🎸", &["guitar", "rock"]),
    ("🎤", &["microphone", "karaoke"]),
    ("🎧", &["headphones", "podcast"]),
    ("📚", &["books", "study"]),
    ("✏️", &["pencil", "homework"]),
    ("💻", &["laptop", "computer"]),
    ("📱", &["phone", "mobile"]),
    ("📷", &["camera", "photo"]),
    ("⏰", &["alarm", "late"]),
    ("💡", &["idea", "lightbulb"]),
    ("🔑", &["key", "keys"]),
    ("💊", &["pill", "medicine"]),
    ("💉", &["vaccine", "shot"]),
    ("🧠", &["brain", "smart"]),
    ("🦷", &["tooth", "dentist"]),
    ("👶", &["baby", "newborn"]),
    ("👻", &["ghost", "spooky"]),
    ("🎃", &["pumpkin", "halloween"]),
    ("🎄", &["christmas", "xmas"]),
    ("🎅", &["santa"]),
    ("🐰", &["bunny", "easter"]),
    ("🍀", &["lucky", "clover"]),
    ("🇺🇸", &["usa", "america"]),
    ("🇬🇧", &["uk", "britain"]),
    ("🏳️‍🌈", &["lgbt", "rainbowflag"]),
    ("👨‍👩‍👧", &["family", "parents"]),
    ("👍🏽", &["thumbsup", "agreed"]),
    ("🧘", &["yoga", "meditate"]),
    ("🏃", &["running", "jog"]),
    ("🛒", &["shopping", "groceries"]),
    ("💸", &["expensive", "spent"]),
    ("📈", &["stocks", "growth"]),
    ("🗳️", &["vote", "election"]),
    ("⚖️", &["justice", "law"]),
    ("🔧", &["fix", "wrench"]),
    ("🧹", &["cleaning", "broom"]),
    ("🧺", &["laundry", "picnic"]),
    ("🛁", &["bath", "bubbles"]),
    ("🛏️", &["bed", "nap"]),
    ("🕯️", &["candle", "mourning"]),
    ("🪴", &["plant", "houseplant"]),
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kl", "pr",
    "st", "tr",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ei"];

/// 64-bit FNV-1a. Shared with the featurizer so hashing is defined in one place.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Deterministic four-syllable pseudo-word for `(emoji, salt)`.
pub fn pseudo_word(emoji: &str, salt: u32) -> String {
    let mut key = emoji.as_bytes().to_vec();
    key.extend_from_slice(&salt.to_le_bytes());
    let mut h = fnv1a64(&key);
    let mut word = String::new();
    for _ in 0..4 {
        word.push_str(ONSETS[(h % ONSETS.len() as u64) as usize]);
        h /= ONSETS.len() as u64;
        word.push_str(NUCLEI[(h % NUCLEI.len() as u64) as usize]);
        h /= NUCLEI.len() as u64;
    }
    word
}

/// Tags from the static table, if the emoji is listed.
pub fn static_tags(emoji: &str) -> Option<&'static [&'static str]> {
    STATIC_TAGS.iter().find(|(e, _)| *e == emoji).map(|(_, tags)| *tags)
}

/// Tags for any emoji: the static table entry, else a single pseudo-word.
pub fn tags_for(emoji: &str) -> Vec<String> {
    match static_tags(emoji) {
        Some(tags) => tags.iter().map(|t| t.to_string()).collect(),
        None => vec![pseudo_word(emoji, 0)],
    }
}

/// Contextual cue words a synthetic corpus uses for an emoji. Always starts
/// with the emoji's tags, followed by `extra` pseudo-words.
pub fn cue_words(emoji: &str, extra: u32) -> Vec<String> {
    let mut cues = tags_for(emoji);
    cues.extend((1..=extra).map(|salt| pseudo_word(emoji, salt)));
    cues
}

/// Ordered emoji inventory of `n` classes: the static table first, then
/// single-codepoint pictographs from the Unicode symbol blocks not already
/// listed.
pub fn emoji_inventory(n: usize) -> Vec<String> {
    let mut out: Vec<String> = STATIC_TAGS.iter().take(n).map(|(e, _)| e.to_string()).collect();
    let blocks = [0x1F600..=0x1F64F, 0x1F300..=0x1F5FF, 0x1F680..=0x1F6FF, 0x1F900..=0x1F9FF];
    let mut extra = blocks
        .into_iter()
        .flatten()
        .filter_map(char::from_u32)
        .map(String::from)
        .filter(|e| static_tags(e).is_none());
    while out.len() < n {
        match extra.next() {
            Some(e) => out.push(e),
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn static_table_is_well_formed() {
        let mut seen = HashSet::new();
        for (emoji, tags) in STATIC_TAGS {
            assert!(seen.insert(*emoji), "duplicate {emoji}");
            assert!(!tags.is_empty());
            for tag in *tags {
                assert!(tag.chars().all(|c| c.is_lowercase() || c.is_ascii_digit()), "{tag}");
            }
        }
    }

    #[test]
    fn inventory_is_unique_and_sized() {
        let inv = emoji_inventory(1200);
        assert_eq!(inv.len(), 1200);
        let set: HashSet<_> = inv.iter().collect();
        assert_eq!(set.len(), 1200);
        assert_eq!(inv[0], "😂");
    }

    #[test]
    fn pseudo_words_are_stable() {
        assert_eq!(pseudo_word("🦖", 3), pseudo_word("🦖", 3));
        assert_ne!(pseudo_word("🦖", 3), pseudo_word("🦖", 4));
        assert_eq!(tags_for("🍕"), vec!["pizza".to_string()]);
    }
}
