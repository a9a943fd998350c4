//! Templated business-call utterances with gazetteer fillers.
//!
//! Names follow a Zipf-like frequency curve, so a corpus contains a few very
//! common organizations and products alongside a long tail that shows up
//! once or twice. Some names are both a company and a product; only the
//! context tells them apart. Text is lowercased now and then and sprinkled
//! with fillers to look like ASR output.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{render_spans, Corpus, CorpusError, EntitySpan, Split, TagSet, Utterance};

const FIRST_NAMES: &[&str] = &[
    "John", "Maria", "David", "Sarah", "Michael", "Priya", "James", "Linda", "Wei", "Carlos", "Emma", "Ahmed", "Olivia",
    "Daniel", "Sofia", "Kevin", "Aisha", "Robert", "Yuki", "Laura", "Thomas", "Fatima", "Brian", "Elena", "Mark",
];

const LAST_NAMES: &[&str] = &[
    "Smith", "Garcia", "Chen", "Johnson", "Patel", "Brown", "Nguyen", "Miller", "Kim", "Lopez", "Wilson", "Khan",
    "Davis", "Martin", "Silva", "Taylor", "Anderson", "Rossi", "Murphy", "Schmidt",
];

const ORGS: &[&str] = &[
    "Acme Corp", "Globex", "Initech", "Bank of America", "Wells Fargo", "Verizon", "Comcast", "Delta Airlines",
    "Hilton", "Walmart", "Target", "FedEx", "Pfizer", "Deloitte", "Accenture", "Goldman Sachs", "Morgan Stanley",
    "Chase", "Citibank", "Allstate", "Geico", "Kaiser Permanente", "Home Depot", "Costco", "Starbucks",
    "Northwind Traders", "Contoso", "Fabrikam", "Umbrella Corporation", "Stark Industries", "Wayne Enterprises",
    "Vandelay Industries", "Hooli", "Pied Piper", "Dunder Mifflin", "Soylent", "Cyberdyne Systems", "Tyrell Corporation",
    "Massive Dynamic", "Oscorp", "Aperture Science", "Black Mesa", "Gringotts", "Monarch Solutions", "Bluth Company",
    "Prestige Worldwide", "Sterling Cooper", "Wonka Industries", "Zorg Industries", "Blue Sun", "Weyland Yutani",
    "Nakatomi Trading", "Virtucon", "Gekko and Co", "Duff Brewing", "Krusty Krab", "Los Pollos Hermanos",
    "Rich Industries", "Sirius Cybernetics", "Spacely Sprockets", "Cogswell Cogs", "Omni Consumer Products",
    "Yoyodyne", "Praxis Labs", "Tessier Ashpool", "Ellingson Mineral", "Halcyon Bank", "Lumon Industries",
    "Dharma Initiative", "Rekall", "InGen", "Biffco", "Gannon Freight", "Mooby Foods", "Kramerica", "Pendant Publishing",
    "Vance Refrigeration", "Sabre Group", "Bluebird Logistics", "Redwood Capital", "Harbor Freight Partners",
    "Summit Health", "Crescent Energy", "Atlas Insurance", "Pinnacle Foods", "Keystone Mutual", "Beacon Credit Union",
    "Meridian Telecom", "Horizon Airways", "Silverline Bank", "Granite Construction", "Evergreen Realty",
    // names that are also products
    "Zoom", "Slack", "Salesforce", "Dropbox", "Oracle", "Shopify",
];

const PRODS: &[&str] = &[
    "iPhone", "Galaxy", "Outlook", "Excel", "Teams", "Photoshop", "Kindle", "Alexa", "Chromebook", "Pixel",
    "PlayStation", "Xbox", "QuickBooks", "TurboTax", "Windows", "Gmail", "WhatsApp", "AutoCAD", "Tableau", "Jira",
    "Confluence", "Surface Pro", "MacBook Air", "Apple Watch", "Fire Stick", "Echo Dot", "Office 365", "Google Drive",
    "Acrobat Reader", "Norton Antivirus", "Roku Ultra", "Nest Thermostat", "Ring Doorbell", "Fitbit Charge",
    "Webex", "Trello", "Notion", "Asana", "Zendesk", "HubSpot", "Mailchimp", "Canva", "Figma", "Skype", "Venmo",
    "PayPal Here", "Square Reader", "Instant Pot", "Roomba", "Peloton Bike",
    "Zoom", "Slack", "Salesforce", "Dropbox", "Oracle", "Shopify",
];

const GPES: &[&str] = &[
    "Texas", "California", "New York", "Chicago", "London", "Toronto", "Seattle", "Boston", "Ohio", "Florida", "Denver",
    "Atlanta", "Mumbai", "Berlin", "Paris", "Tokyo", "Sydney", "Mexico City", "Dallas", "Phoenix", "Miami",
    "San Francisco", "Canada", "Germany", "India", "Brazil", "Ireland", "Vancouver", "Madrid", "Singapore",
];

const FILLERS: &[&str] = &["um", "uh", "like", "so", "okay"];

/// Slot markers in templates.
const SLOTS: &[(&str, &str)] = &[("{PER}", "PER"), ("{PROD}", "PROD"), ("{ORG}", "ORG"), ("{GPE}", "GPE")];

/// (template, weight). `{X}` slots are filled from the matching gazetteer.
const TEMPLATES: &[(&str, u32)] = &[
    // organization contexts
    ("hi this is {PER} calling from {ORG}", 6),
    ("i work for {ORG} in {GPE}", 5),
    ("{ORG} sent me an invoice last week", 4),
    ("my account with {ORG} was closed without notice", 4),
    ("can you transfer me to the billing team at {ORG}", 3),
    ("we are a long time customer of {ORG}", 4),
    ("the contract between us and {ORG} expires next month", 3),
    ("i got a call from someone at {ORG} about my payment", 3),
    ("{PER} at {ORG} told me to call this number", 4),
    ("our company just merged with {ORG}", 3),
    ("i am the office manager at {ORG}", 3),
    ("is {ORG} one of your partners", 2),
    ("yes i have an appointment with {ORG} in {GPE}", 2),
    ("they said {ORG} would refund the charge", 3),
    // product contexts
    ("the {PROD} app keeps crashing", 3),
    ("i installed {PROD} on my laptop yesterday", 2),
    ("how do i reset my {PROD} password", 2),
    ("is {PROD} compatible with my phone", 2),
    ("i upgraded to the latest version of {PROD}", 2),
    ("my {PROD} stopped syncing this morning", 2),
    ("can i get a refund for the {PROD} subscription", 2),
    // mixed
    ("{PER} from {ORG} asked about {PROD}", 3),
    ("does {ORG} still support {PROD}", 3),
    ("we bought {PROD} licenses for our team at {ORG}", 3),
    ("{ORG} uses {PROD} for all their meetings", 3),
    ("we ship from {GPE} through {ORG}", 2),
    // type-neutral contexts
    ("i have a question about {ORG}", 2),
    ("i have a question about {PROD}", 1),
    ("what is going on with {ORG} today", 2),
    ("what is going on with {PROD} today", 1),
    // no entities or people and places only
    ("thanks for calling how can i help you today", 4),
    ("can you hear me now", 3),
    ("let me check that for you", 3),
    ("okay let me pull up your account", 3),
    ("could you spell that for me", 2),
    ("sure i can hold", 2),
    ("what is the best number to reach you", 2),
    ("i am calling about my last order", 3),
    ("my name is {PER} and i live in {GPE}", 4),
    ("please ask {PER} to call me back", 3),
    ("is {PER} available right now", 3),
    ("we moved our office to {GPE} last year", 3),
    ("this is {PER} speaking", 3),
    ("the weather in {GPE} delayed the shipment", 2),
];

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_utterances: usize,
    pub seed: u64,
    /// Ids are `{id_prefix}{n}`, 1-based.
    pub id_prefix: String,
    /// Chance that an utterance is fully lowercased.
    pub lowercase_prob: f64,
    /// Chance of a filler word before each template word.
    pub filler_prob: f64,
    /// Zipf exponent for product and place frequencies.
    pub zipf_exponent: f64,
    /// Invented company names added to the organization list.
    pub invented_orgs: usize,
    /// Zipf exponent for organization frequencies.
    pub org_zipf_exponent: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_utterances: 2000,
            seed: 0,
            id_prefix: "syn-".into(),
            lowercase_prob: 0.3,
            filler_prob: 0.04,
            zipf_exponent: 1.2,
            invented_orgs: 300,
            org_zipf_exponent: 0.0,
        }
    }
}

struct Gazetteer {
    names: Vec<Vec<String>>,
    dist: WeightedIndex<f64>,
}

impl Gazetteer {
    /// Frequency ranks are shuffled by a fixed seed so list order carries no
    /// signal; the same rank order is shared by every generated corpus.
    fn new(list: impl IntoIterator<Item = String>, exponent: f64, rank_seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut names: Vec<Vec<String>> = list.into_iter().map(|n| n.split(' ').map(str::to_string).collect()).collect();
        names.shuffle(&mut ChaCha8Rng::seed_from_u64(rank_seed));
        let weights: Vec<f64> = (1..=names.len()).map(|r| 1.0 / (r as f64).powf(exponent)).collect();
        Gazetteer { names, dist: WeightedIndex::new(weights).expect("non-empty gazetteer") }
    }

    fn from_static(list: &[&str], exponent: f64, rank_seed: u64) -> Self {
        Self::new(list.iter().map(|s| s.to_string()), exponent, rank_seed)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &[String] {
        &self.names[self.dist.sample(rng)]
    }
}

const ONSETS: &[&str] = &["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "tr", "qu", "st"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ay", "io"];
const ENDINGS: &[&str] = &["x", "n", "ra", "tek", "lia", "vo", "rix", "nova", "dyne", "ly"];

/// Invented single-word company names, fixed across corpora.
fn brand_names(count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut name = String::new();
        for _ in 0..rng.random_range(1..=2) {
            name.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            name.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
        }
        name.push_str(ENDINGS[rng.random_range(0..ENDINGS.len())]);
        let mut chars = name.chars();
        let name: String = chars.next().map(|c| c.to_ascii_uppercase()).into_iter().chain(chars).collect();
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

fn person(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let first = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
    if rng.random_bool(0.5) {
        vec![first, LAST_NAMES[rng.random_range(0..LAST_NAMES.len())]]
    } else {
        vec![first]
    }
}

/// Requires a tag set containing PER, PROD, ORG and GPE.
pub fn generate(config: &SynthConfig, tag_set: &TagSet) -> Result<Corpus, CorpusError> {
    for (_, ty) in SLOTS {
        if tag_set.type_index(ty).is_none() {
            return Err(CorpusError::InvalidTagSet(format!("synthetic corpora need entity type {ty}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let org_names = ORGS.iter().map(|s| s.to_string()).chain(brand_names(config.invented_orgs));
    let orgs = Gazetteer::new(org_names, config.org_zipf_exponent, 11);
    let prods = Gazetteer::from_static(PRODS, config.zipf_exponent, 12);
    let gpes = Gazetteer::from_static(GPES, config.zipf_exponent, 13);
    let template_dist = WeightedIndex::new(TEMPLATES.iter().map(|t| t.1)).expect("templates");

    let mut utterances = Vec::with_capacity(config.num_utterances);
    for n in 1..=config.num_utterances {
        let template = TEMPLATES[template_dist.sample(&mut rng)].0;
        let lower = rng.random_bool(config.lowercase_prob);
        let mut words: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for piece in template.split(' ') {
            if rng.random_bool(config.filler_prob) {
                words.push(FILLERS[rng.random_range(0..FILLERS.len())].to_string());
            }
            let slot = SLOTS.iter().find(|(marker, _)| *marker == piece).map(|s| s.1);
            let filler: Vec<&str> = match slot {
                Some("PER") => person(&mut rng),
                Some("ORG") => orgs.draw(&mut rng).iter().map(String::as_str).collect(),
                Some("PROD") => prods.draw(&mut rng).iter().map(String::as_str).collect(),
                Some(_) => gpes.draw(&mut rng).iter().map(String::as_str).collect(),
                None => vec![piece],
            };
            let start = words.len();
            words.extend(filler.iter().map(|w| if lower { w.to_lowercase() } else { w.to_string() }));
            if let Some(ty) = slot {
                spans.push(EntitySpan { entity_type: ty.to_string(), start, end: words.len() });
            }
        }
        let tags = render_spans(&spans, words.len(), tag_set);
        utterances.push(Utterance::new(format!("{}{n}", config.id_prefix), words, tags)?);
    }
    Corpus::new(tag_set.clone(), utterances, Split::Train)
}
