//! Deterministic synthetic focused sessions for offline evaluation.
//!
//! Each topic has its own vocabulary. Screens show a fixed title region (the
//! segment's subject) and a body region that changes every sample. Screen
//! words are either topic nouns or neutral filler, and no screen of one topic
//! contains an intention or expansion word of another. Under the mock scorer
//! this gives predictable behavior:
//!
//! * core segments share at most two words with the bare intention but at
//!   least three once the ten expansions are added, so clarification turns
//!   them from off-task into on-task calls;
//! * indirect segments (the `FalsePositiveSeeded` variant only) share exactly
//!   one word even with expansions, so they are false positives that a
//!   raise-alignment note on their title corrects;
//! * no on-task title is a subset of any other topic's screen, so notes never
//!   leak onto off-task ticks.

use base64::Engine as _;

use super::{relabel, segment, synth_corpus, BenchError};
use crate::domain::{
    ActivitySample, Clarification, FocusedSession, MixedSession, QaPair, ScreenshotRef, TextRegion,
};
use crate::gateway::redact::blank_png;

/// Seed used for the shipped mixed-session corpus.
pub const FIXTURE_SEED: u64 = 7;
/// Number of mixed sessions in the shipped corpus.
pub const FIXTURE_COUNT: usize = 24;
/// Spacing of raw focused-session samples (downsampled to 2000 ms ticks).
pub const RAW_SPACING_MS: i64 = 1000;
const EPOCH_MS: i64 = 1_700_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureVariant {
    Base,
    /// Adds indirect segments that the mock flags as off-task despite the label.
    FalsePositiveSeeded,
}

pub struct SegSpec {
    pub app: &'static str,
    pub url: Option<&'static str>,
    pub title: &'static str,
}

pub struct Topic {
    pub key: &'static str,
    pub instruction: &'static str,
    pub qa: [(&'static str, &'static str); 2],
    pub expansions: [&'static str; 10],
    pub core: [SegSpec; 5],
    pub indirect: [SegSpec; 2],
    /// Topic nouns for the changing body region.
    pub body: [&'static str; 8],
}

/// Neutral words shown on every topic's screens.
pub const FILLER: [&str; 16] = [
    "page", "menu", "tab", "window", "home", "settings", "account", "loading", "sidebar", "footer",
    "header", "button", "toolbar", "status", "updated", "help",
];

const fn seg(app: &'static str, url: Option<&'static str>, title: &'static str) -> SegSpec {
    SegSpec { app, url, title }
}

pub const TOPICS: [Topic; 8] = [
    Topic {
        key: "books",
        instruction: "Order kids' books online",
        qa: [
            (
                "What kind of books are you looking for, such as picture books?",
                "Picture books for children",
            ),
            (
                "Which online stores will you use, such as a bookstore site?",
                "An online bookstore",
            ),
        ],
        expansions: [
            "Shopping for books",
            "Online book shopping",
            "Browse a bookstore",
            "Buy picture books for children",
            "Order paperback books online",
            "Choose hardcover editions of children books",
            "Compare bookstore prices for picture books",
            "Check bestseller lists for children",
            "Add paperback books to the bookstore cart",
            "Pick bestseller picture books online",
        ],
        core: [
            seg(
                "Chrome",
                Some("https://bookstore.example/results?q=picture"),
                "Bookstore results: picture books for children",
            ),
            seg(
                "Chrome",
                Some("https://bookstore.example/item/2041"),
                "Paperback picture books, bestseller shelf",
            ),
            seg("Notes", None, "Notes: books to buy for children"),
            seg(
                "Chrome",
                Some("https://ratings.example/books"),
                "Hardcover children books ratings",
            ),
            seg(
                "Chrome",
                Some("https://bookstore.example/cart"),
                "Bookstore cart: 3 paperback books",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://storytime.example/interviews"),
                "Storytime illustrator interview for children",
            ),
            seg("Messages", None, "Messages: library renewal for children"),
        ],
        body: [
            "isbn",
            "author",
            "publisher",
            "shipping",
            "stock",
            "pages",
            "series",
            "reviews",
        ],
    },
    Topic {
        key: "restaurants",
        instruction: "Find a local restaurant",
        qa: [
            (
                "Which area are you searching in, such as downtown or near home?",
                "Downtown near the office",
            ),
            (
                "Which apps will you use, such as maps or review sites?",
                "Maps and a reviews site",
            ),
        ],
        expansions: [
            "Find a place to eat",
            "Dining options nearby",
            "Explore local restaurants",
            "Search for restaurants downtown",
            "Look up downtown restaurants near the office",
            "Search dining spots downtown",
            "Check restaurants on maps",
            "Compare bistro prices",
            "Reserve a table downtown",
            "Check opening hours of a bistro",
        ],
        core: [
            seg(
                "Maps",
                Some("https://maps.example/place?q=downtown"),
                "Maps: restaurants downtown",
            ),
            seg(
                "Chrome",
                Some("https://dine.example/search"),
                "Search: bistro tables downtown",
            ),
            seg(
                "Chrome",
                Some("https://dine.example/bistro/12"),
                "Bistro opening hours and dining room",
            ),
            seg(
                "Messages",
                None,
                "Messages: restaurants near the office downtown",
            ),
            seg(
                "Chrome",
                Some("https://dine.example/reserve"),
                "Reserve a table: bistro downtown",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://weather.example/city"),
                "City weather tonight downtown",
            ),
            seg("Calendar", None, "Calendar: dinner with team at office"),
        ],
        body: [
            "sushi", "tapas", "brunch", "parking", "terrace", "vegan", "noodles", "pizza",
        ],
    },
    Topic {
        key: "hiking",
        instruction: "Find local hiking spots",
        qa: [
            (
                "Where do you plan to hike, such as a nearby mountain?",
                "A trail on Mount Rainier",
            ),
            (
                "What gear will you check, such as boots or backpacks?",
                "Boots and a backpack",
            ),
        ],
        expansions: [
            "Outdoor trip planning",
            "Get ready for a hike",
            "Prepare for hiking",
            "Look up hiking trails",
            "Check the mountain trail conditions",
            "Pick hiking boots and a backpack",
            "Check trail elevation for Rainier",
            "Pack a backpack for the trail",
            "Gather trail snacks and water",
            "Check the forecast for Rainier",
        ],
        core: [
            seg(
                "Chrome",
                Some("https://trails.example/rainier"),
                "Rainier trail conditions: hiking",
            ),
            seg(
                "Chrome",
                Some("https://gear.example/boots"),
                "Hiking boots and backpack gear",
            ),
            seg("Notes", None, "Notes: prepare backpack, water, snacks"),
            seg(
                "Chrome",
                Some("https://forecast.example/rainier"),
                "Mountain forecast for Rainier",
            ),
            seg(
                "Chrome",
                Some("https://trails.example/elevation"),
                "Trail elevation profile: hiking route",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://photos.example/album"),
                "Photo album: summit sunrise at Rainier",
            ),
            seg(
                "Messages",
                None,
                "Messages: carpool to the mountain with Dana",
            ),
        ],
        body: [
            "lake", "ridge", "moss", "pine", "campsite", "parking", "ranger", "bridge",
        ],
    },
    Topic {
        key: "biology",
        instruction: "Go over biology topics",
        qa: [
            (
                "Which biology topic will you study, such as genetics or cells?",
                "Cell division and genetics",
            ),
            (
                "What resources will you use, such as textbooks or lecture videos?",
                "A textbook and lecture slides",
            ),
        ],
        expansions: [
            "Learning science",
            "Biology coursework",
            "Study biology topics",
            "Study cell division",
            "Review genetics chapters in the textbook",
            "Work through biology lecture slides",
            "Summarize mitosis steps",
            "Solve genetics practice problems",
            "Replay a lecture on cell division",
            "Quiz yourself on meiosis",
        ],
        core: [
            seg(
                "Chrome",
                Some("https://textbook.example/ch5"),
                "Textbook chapter 5: cell division",
            ),
            seg("Preview", None, "Biology lecture slides: mitosis"),
            seg(
                "Chrome",
                Some("https://quiz.example/genetics"),
                "Genetics quiz: study meiosis",
            ),
            seg("Notes", None, "Notes: biology genetics practice problems"),
            seg(
                "Chrome",
                Some("https://textbook.example/ch6"),
                "Textbook chapter 6: genetics and cell",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://wiki.example/darwin"),
                "Darwin biography: voyage and science",
            ),
            seg("Messages", None, "Messages: study group room booking"),
        ],
        body: [
            "diagram",
            "membrane",
            "enzyme",
            "figure",
            "glossary",
            "highlight",
            "index",
            "protein",
        ],
    },
    Topic {
        key: "news",
        instruction: "Read economics news articles",
        qa: [
            (
                "Which economic topics interest you, such as inflation or markets?",
                "Inflation and interest rates",
            ),
            (
                "Which news sources will you use, such as newspapers or apps?",
                "A financial newspaper site",
            ),
        ],
        expansions: [
            "Following current affairs",
            "Economy updates",
            "Read economic news",
            "Read about inflation",
            "Catch up on interest rates coverage",
            "Skim financial newspaper headlines",
            "Open a financial newspaper article",
            "Track central bank rate decisions",
            "Scan market charts in the newspaper",
            "Read analysis of inflation data",
        ],
        core: [
            seg(
                "Chrome",
                Some("https://ledger.example/economy"),
                "Economic news: inflation rises",
            ),
            seg(
                "Chrome",
                Some("https://ledger.example/article/884"),
                "Central bank holds interest rates",
            ),
            seg(
                "Chrome",
                Some("https://ledger.example/markets"),
                "Market charts: financial headlines",
            ),
            seg("Notes", None, "Notes: inflation data and rate decisions"),
            seg(
                "Chrome",
                Some("https://ledger.example/analysis"),
                "Analysis: economic outlook and inflation",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://podcast.example/ep12"),
                "Podcast episode: bank history",
            ),
            seg(
                "Sheets",
                None,
                "Budget sheet: household spending and inflation",
            ),
        ],
        body: [
            "opinion",
            "subscribe",
            "byline",
            "graph",
            "quarter",
            "percent",
            "column",
            "edition",
        ],
    },
    Topic {
        key: "documents",
        instruction: "Write a business report in a document",
        qa: [
            (
                "What document are you writing, such as a report or proposal?",
                "A quarterly business report",
            ),
            (
                "Which tools will you use, such as Word or Google Docs?",
                "Google Docs and a spreadsheet",
            ),
        ],
        expansions: [
            "Desk work",
            "Writing a report",
            "Write documents",
            "Draft a quarterly business report",
            "Edit the business report in Docs",
            "Outline report sections",
            "Format headings in the report",
            "Copy figures from a spreadsheet",
            "Proofread the report draft",
            "Share the draft with colleagues",
        ],
        core: [
            seg(
                "Docs",
                Some("https://docs.example/d/report"),
                "Docs: quarterly business report draft",
            ),
            seg(
                "Docs",
                Some("https://docs.example/d/outline"),
                "Report outline: sections and headings",
            ),
            seg(
                "Sheets",
                Some("https://sheets.example/q3"),
                "Spreadsheet: quarterly figures",
            ),
            seg("Finder", None, "Finder: documents folder, business report"),
            seg(
                "Docs",
                Some("https://docs.example/d/report?mode=suggest"),
                "Proofread: report draft comments",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://thesaurus.example/word"),
                "Thesaurus: synonyms for business",
            ),
            seg("Mail", None, "Mail: colleagues lunch poll"),
        ],
        body: [
            "paragraph",
            "cursor",
            "font",
            "margin",
            "bold",
            "comment",
            "revision",
            "indent",
        ],
    },
    Topic {
        key: "youtube",
        instruction: "Chill by watching YouTube shorts",
        qa: [
            (
                "What kind of videos will you watch, such as shorts or vlogs?",
                "Comedy shorts",
            ),
            (
                "Which channels do you follow, such as creators or music?",
                "Sketch creators",
            ),
        ],
        expansions: [
            "Online entertainment",
            "Video streaming",
            "Watch YouTube",
            "Watch YouTube shorts",
            "Swipe through comedy shorts",
            "Browse sketch creators on YouTube",
            "Open trending shorts",
            "Follow a comedy channel",
            "Like a funny clip",
            "Queue another vlog",
        ],
        core: [
            seg(
                "Chrome",
                Some("https://youtube.example/shorts"),
                "YouTube shorts: comedy clip",
            ),
            seg(
                "Chrome",
                Some("https://youtube.example/feed/trending"),
                "Trending: sketch creators",
            ),
            seg(
                "Chrome",
                Some("https://youtube.example/channel/laughs"),
                "Comedy channel: funny vlog",
            ),
            seg(
                "Chrome",
                Some("https://youtube.example/watch?v=k3"),
                "Watch: sketch comedy clip",
            ),
            seg(
                "Chrome",
                Some("https://youtube.example/shorts/queue"),
                "YouTube shorts queue: funny clip",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://blog.example/comedians"),
                "Blog: comedy writers interview",
            ),
            seg("Messages", None, "Messages: link to a funny cat photo"),
        ],
        body: [
            "views",
            "autoplay",
            "playlist",
            "thumbnail",
            "captions",
            "replies",
            "remix",
            "loop",
        ],
    },
    Topic {
        key: "games",
        instruction: "Play a strategy game",
        qa: [
            (
                "Which games will you play, such as strategy or puzzle games?",
                "A strategy game",
            ),
            (
                "Which platform will you use, such as Steam or a browser?",
                "Steam on the laptop",
            ),
        ],
        expansions: [
            "Gaming session",
            "Leisure gaming",
            "Play games",
            "Play a strategy game",
            "Launch a strategy game on Steam",
            "Continue a saved campaign",
            "Check the Steam store",
            "Join a multiplayer match",
            "Consult a strategy guide",
            "Upgrade units in the campaign",
        ],
        core: [
            seg("Steam", None, "Steam library: strategy games"),
            seg("Empire", None, "Empire campaign: upgrade units"),
            seg(
                "Chrome",
                Some("https://steam.example/store"),
                "Steam store: strategy game sale",
            ),
            seg("Empire", None, "Multiplayer match: play turn 12"),
            seg(
                "Chrome",
                Some("https://guides.example/strategy"),
                "Strategy guide: campaign openings",
            ),
        ],
        indirect: [
            seg(
                "Chrome",
                Some("https://forum.example/history"),
                "Forum: strategy genre history",
            ),
            seg("Discord", None, "Discord: multiplayer squad voice chat"),
        ],
        body: [
            "gold", "wood", "army", "tavern", "quest", "level", "victory", "loot",
        ],
    },
];

/// Raw-sample lengths of the core segments, in order.
const CORE_LENGTHS: [usize; 5] = [30, 34, 28, 36, 32];
/// Raw-sample length of each indirect segment.
const INDIRECT_LENGTH: usize = 24;

fn tiny_png_base64() -> String {
    base64::engine::general_purpose::STANDARD.encode(blank_png(4, 4, [240, 240, 240]))
}

fn region(y: u32, text: String) -> TextRegion {
    TextRegion {
        x: 0,
        y,
        width: 4,
        height: 2,
        text,
        redacted: false,
    }
}

/// Segment plan for a topic: core segments, with indirect ones interleaved
/// in the seeded variant.
fn plan(topic: &Topic, variant: FixtureVariant) -> Vec<(&SegSpec, usize)> {
    let core: Vec<(&SegSpec, usize)> = topic.core.iter().zip(CORE_LENGTHS).collect();
    match variant {
        FixtureVariant::Base => core,
        FixtureVariant::FalsePositiveSeeded => vec![
            core[0],
            (&topic.indirect[0], INDIRECT_LENGTH),
            core[1],
            core[2],
            (&topic.indirect[1], INDIRECT_LENGTH),
            core[3],
            core[4],
        ],
    }
}

pub fn focused_session(index: usize, topic: &Topic, variant: FixtureVariant) -> FocusedSession {
    let image = tiny_png_base64();
    let start = EPOCH_MS + index as i64 * 3_600_000;
    let mut samples = Vec::new();
    for (part, len) in plan(topic, variant) {
        for _ in 0..len {
            let k = samples.len();
            let body = format!(
                "{} {} {}",
                FILLER[k % FILLER.len()],
                topic.body[(k * 3) % topic.body.len()],
                FILLER[(k * 7 + 3) % FILLER.len()]
            );
            // Query churn that segmentation must ignore.
            let url = part.url.map(|u| {
                let sep = if u.contains('?') { '&' } else { '?' };
                format!("{u}{sep}t={k}")
            });
            samples.push(ActivitySample {
                timestamp: start + k as i64 * RAW_SPACING_MS,
                screenshot_ref: ScreenshotRef::Inline {
                    inline: image.clone(),
                },
                app_title: part.app.into(),
                url,
                screen_text: vec![region(0, part.title.into()), region(2, body)],
            });
        }
    }
    let suffix = match variant {
        FixtureVariant::Base => "",
        FixtureVariant::FalsePositiveSeeded => "-fp",
    };
    segment(&FocusedSession {
        id: format!("focused-{index:02}-{}{suffix}", topic.key),
        instruction: topic.instruction.into(),
        relabeled_intention: relabel(topic.instruction),
        clarification: Some(Clarification {
            qa_pairs: topic
                .qa
                .iter()
                .map(|(q, a)| QaPair {
                    question: q.to_string(),
                    answer: a.to_string(),
                })
                .collect(),
            expanded_activities: topic.expansions.iter().map(|s| s.to_string()).collect(),
        }),
        samples,
        segments: Vec::new(),
    })
}

pub fn focused_corpus(variant: FixtureVariant) -> Vec<FocusedSession> {
    TOPICS
        .iter()
        .enumerate()
        .map(|(i, t)| focused_session(i, t, variant))
        .collect()
}

pub fn mixed_corpus(variant: FixtureVariant) -> Result<Vec<MixedSession>, BenchError> {
    synth_corpus(&focused_corpus(variant), FIXTURE_COUNT, FIXTURE_SEED)
}

/// Annotated text regions for redaction checks: `(text, contains_pii)`.
pub fn redaction_corpus() -> Vec<(String, bool)> {
    let pii = [
        "john@example.com",
        "Contact: maria.lopez@mail.example.org",
        "reply-to: support+tickets@help.example.net",
        "Email a.b-c@sub.domain.example.co",
        "From: dana_k@example.io",
        "Call (555) 123-4567",
        "Phone: 555-987-6543",
        "+1 415 555 0199",
        "mobile 555.222.3333",
        "Tel +1 206 555 0142",
        "Card 4111 1111 1111 1111",
        "Visa 4012888888881881",
        "MC 5500-0000-0000-0004",
        "Amex 3782 822463 10005",
        "card no. 6011000990139424",
        "ending 4242424242424242",
        "Reach me at kim@example.com or 555-010-9999",
        "Billing: 3530111333300000 exp 09/27",
        "Diners 3056 9309 0259 04",
        "Long card 6304 0000 0000 0000 018",
        "owner@startup.example",
        "Fax: (212) 555-0147",
        "ssn-like but phone 202 555 0173",
        "user.name@university.example.edu",
        "forward to ops@example.com today",
        "call +1-800-555-0100 now",
    ];
    let clean = [
        "hello world",
        "Quarterly report draft",
        "Order 12345 shipped",
        "Version 1.2.3 released",
        "Meeting at 10:30 on 2024-05-01",
        "Chapter 5: cell division",
        "Score 98 of 100",
        "Room 1204, building 7",
        "Invoice total $1,250.00",
        "Turn 12 of the campaign",
        "@handle mentioned you",
        "Zip code 94107",
        "ISBN 978-3-16",
        "Temperature 21 C",
        "Page 3 of 10",
        "Tracking id AB1234CD",
        "Sale ends in 3 days",
        "Flight UA 123 at gate 4",
        "Rating 4.5 stars",
        "Year 2023 summary",
        "Build 20240501",
        "Step 1 of 4",
        "Elevation 4392 m",
        "Population 8 million",
        "Ticket #88231",
        "Call me maybe",
    ];
    pii.iter()
        .map(|s| (s.to_string(), true))
        .chain(clean.iter().map(|s| (s.to_string(), false)))
        .collect()
}
