//! Seeded generators for corpora in the bAbI and WikiMovies file formats.
//!
//! The original datasets are not redistributed with this crate. These
//! generators write text that the regular parsers read, so experiments and
//! tests can run end to end on a fresh checkout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PEOPLE: &[&str] = &["Mary", "John", "Daniel", "Sandra"];
const LOCATIONS: &[&str] = &["bathroom", "bedroom", "garden", "hallway", "kitchen", "office"];
const MOVES: &[&str] = &["moved to", "went to", "journeyed to", "travelled to", "went back to"];

/// Single-supporting-fact world: people move between rooms and the teacher
/// asks where someone is.
///
/// Each story has `statements` statements with a question after every
/// second one, like the original task.
pub fn generate_babi(stories: usize, statements: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..stories {
        let mut where_is: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        let mut line = 0usize;
        for s in 0..statements {
            let who = *PEOPLE.choose(&mut rng).unwrap();
            let to = *LOCATIONS.choose(&mut rng).unwrap();
            let verb = *MOVES.choose(&mut rng).unwrap();
            line += 1;
            let _ = writeln!(out, "{line} {who} {verb} the {to}.");
            where_is.insert(who, (to, line));
            if s % 2 == 1 {
                let known: Vec<&str> = where_is.keys().copied().collect();
                let who = *known.choose(&mut rng).unwrap();
                let (loc, sup) = where_is[who];
                line += 1;
                let _ = writeln!(out, "{line} Where is {who}? \t{loc}\t{sup}");
            }
        }
    }
    out
}

const FIRST: &[&str] = &[
    "adam", "bella", "carl", "dora", "emil", "fiona", "gus", "hana", "ivan", "june", "karl", "lena",
    "marco", "nina", "otto", "petra", "quinn", "rosa", "sven", "tara", "ugo", "vera", "walt", "xena",
];
const LAST: &[&str] = &[
    "abbott", "baker", "castro", "dalton", "engel", "fischer", "garcia", "holm", "ito", "jensen",
    "kowal", "lund", "moreau", "novak", "olsen", "price", "quiroga", "rossi", "stein", "tanaka",
];
const TITLE_A: &[&str] = &[
    "silent", "crimson", "last", "hidden", "broken", "golden", "lost", "wild", "frozen", "iron",
    "midnight", "paper", "electric", "distant", "velvet", "savage",
];
const TITLE_B: &[&str] = &[
    "river", "empire", "garden", "letter", "voyage", "harbor", "witness", "frontier", "orchard",
    "signal", "mirror", "summer", "kingdom", "station", "shadow", "promise",
];
const GENRES: &[&str] = &["drama", "comedy", "thriller", "horror", "western", "romance", "documentary", "animation"];
const LANGUAGES: &[&str] = &["english", "french", "german", "spanish", "japanese", "italian"];
const TAGS: &[&str] = &[
    "hawaii", "boxing", "pirates", "submarine", "circus", "heist", "chess", "volcano", "vampires",
    "robots", "jazz", "wedding",
];

struct Movie {
    title: String,
    director: String,
    writers: Vec<String>,
    actors: Vec<String>,
    year: u32,
    genre: &'static str,
    language: &'static str,
    tags: Vec<&'static str>,
}

/// A movie KB and templated questions over it.
#[derive(Debug, Clone)]
pub struct SynthMovies {
    pub kb: String,
    pub qa: String,
}

/// Generate `movies` movies and `questions` questions (`question\tans|ans`).
pub fn generate_wikimovies(movies: usize, questions: usize, seed: u64) -> SynthMovies {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut titles = BTreeSet::new();
    let mut all_titles = Vec::new();
    for a in TITLE_A {
        for b in TITLE_B {
            all_titles.push(format!("The {} {}", cap(a), cap(b)));
        }
    }
    all_titles.shuffle(&mut rng);
    let mut people = Vec::new();
    for f in FIRST {
        for l in LAST {
            people.push(format!("{} {}", cap(f), cap(l)));
        }
    }
    people.shuffle(&mut rng);
    let people = &people[..people.len().min(movies * 2 + 10)];

    let mut catalog = Vec::new();
    for title in all_titles.into_iter().take(movies) {
        titles.insert(title.clone());
        let mut pick = |n: usize| -> Vec<String> {
            let mut v: Vec<String> = people.choose_multiple(&mut rng, n).cloned().collect();
            v.sort();
            v
        };
        let director = pick(1).remove(0);
        let writers = pick(1);
        let actors = pick(2);
        let year = rng.random_range(1950..2016);
        let genre = GENRES.choose(&mut rng).unwrap();
        let language = LANGUAGES.choose(&mut rng).unwrap();
        let mut tags: Vec<&'static str> = TAGS.choose_multiple(&mut rng, 1).copied().collect();
        tags.sort();
        catalog.push(Movie { title, director, writers, actors, year, genre, language, tags });
    }

    let mut kb = String::new();
    for m in &catalog {
        let lines = [
            format!("{} directed_by {}", m.title, m.director),
            format!("{} written_by {}", m.title, m.writers.join(", ")),
            format!("{} starred_actors {}", m.title, m.actors.join(", ")),
            format!("{} release_year {}", m.title, m.year),
            format!("{} has_genre {}", m.title, cap(m.genre)),
            format!("{} in_language {}", m.title, cap(m.language)),
            format!("{} has_tags {}", m.title, m.tags.join(", ")),
        ];
        for (i, l) in lines.iter().enumerate() {
            let _ = writeln!(kb, "{} {l}", i + 1);
        }
        kb.push('\n');
    }

    // reverse indices for person/tag questions
    let mut directed: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut starred: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut about: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for m in &catalog {
        directed.entry(&m.director).or_default().push(&m.title);
        for a in &m.actors {
            starred.entry(a).or_default().push(&m.title);
        }
        for t in &m.tags {
            about.entry(t).or_default().push(&m.title);
        }
    }
    let directors: Vec<&&str> = directed.keys().collect();
    let actors: Vec<&&str> = starred.keys().collect();
    let tags: Vec<&&str> = about.keys().collect();

    let mut qa = String::new();
    for n in 0..questions {
        let m = catalog.choose(&mut rng).unwrap();
        let (q, a): (String, Vec<String>) = match rng.random_range(0..9) {
            0 => (format!("Who directed {}?", m.title), vec![m.director.clone()]),
            1 => (format!("Who wrote {}?", m.title), m.writers.clone()),
            2 => (format!("Who acted in {}?", m.title), m.actors.clone()),
            3 => (format!("What year was {} released?", m.title), vec![m.year.to_string()]),
            4 => (format!("What genre is {} in?", m.title), vec![cap(m.genre)]),
            5 => (format!("What language is {} in?", m.title), vec![cap(m.language)]),
            6 => {
                let d = directors.choose(&mut rng).unwrap();
                (format!("What films did {d} direct?"), to_strings(&directed[**d]))
            }
            7 => {
                let t = tags.choose(&mut rng).unwrap();
                (format!("What films are about {t}?"), to_strings(&about[**t]))
            }
            _ => {
                let a = actors.choose(&mut rng).unwrap();
                (format!("What movies did {a} star in?"), to_strings(&starred[**a]))
            }
        };
        let _ = writeln!(qa, "{} {q}\t{}", n + 1, a.join("|"));
    }
    SynthMovies { kb, qa }
}

fn to_strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_babi, parse_wikimovies, WikiMoviesLimits};

    #[test]
    fn babi_text_parses_and_answers_are_supported() {
        let text = generate_babi(20, 10, 7);
        let items = parse_babi(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 100);
        for it in &items {
            let fact = it.supporting_fact().unwrap();
            assert_eq!(fact.last().unwrap(), &it.answers[0]);
            assert!(fact.contains(&it.question[2]));
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(generate_babi(5, 10, 1), generate_babi(5, 10, 1));
        assert_ne!(generate_babi(5, 10, 1), generate_babi(5, 10, 2));
        assert_eq!(generate_wikimovies(20, 50, 3).qa, generate_wikimovies(20, 50, 3).qa);
    }

    #[test]
    fn movies_parse_with_evidence() {
        let s = generate_wikimovies(30, 200, 11);
        let (kb, items) =
            parse_wikimovies(s.kb.as_bytes(), s.qa.as_bytes(), WikiMoviesLimits::default()).unwrap();
        assert_eq!(kb.len(), 30 * 7);
        assert_eq!(items.len(), 200);
        let with_class = items.iter().filter(|i| i.answer_class.is_some()).count();
        assert_eq!(with_class, items.len());
        assert!(items.iter().all(|i| !i.evidence.is_empty()));
    }
}
