//! Seeded generator of labeled synthetic chat corpora with a planted
//! propaganda network, used as ground truth in tests and demos.
//!
//! Users post original messages and reply to each other; propaganda
//! accounts live briefly, spread over several channels, and only reply to
//! user messages on political topics, reusing texts from a shared pool.
//! Moderators delete a fixed share of each cohort's messages, which shows
//! up as messages present in the realtime feed but missing from the
//! historical export.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{diff_deleted, merge, Corpus, Message, Source};
use crate::error::{Error, Result};
use crate::labeling::{Label, LabelEntry, LabelSet, Provenance};
use crate::text;
use crate::topics::{TopicAssignment, TopicProvenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicKind {
    /// Everyday talk; propaganda never engages.
    Chatter,
    /// Persistent political topic.
    Political,
    /// Persistent topic where propaganda replies are as short as user messages.
    Short,
    /// Political topic that starts the day after `day` and lasts `duration` days.
    Event { day: u32, duration: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub id: String,
    pub label: String,
    pub kind: TopicKind,
    /// Words users write about the topic.
    pub words: Vec<String>,
    /// Extra words for propaganda texts on short topics.
    #[serde(default)]
    pub propaganda_words: Vec<String>,
}

impl TopicSpec {
    fn new(id: &str, label: &str, kind: TopicKind, words: &[&str]) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            kind,
            words: words.iter().map(|w| w.to_string()).collect(),
            propaganda_words: Vec::new(),
        }
    }

    /// First and last active day (inclusive); `None` means always active.
    pub fn window(&self) -> Option<(u32, u32)> {
        match self.kind {
            TopicKind::Event { day, duration } => Some((day + 1, day + duration.max(1))),
            _ => None,
        }
    }

    fn engages_propaganda(&self) -> bool {
        !matches!(self.kind, TopicKind::Chatter)
    }
}

/// Which propaganda network the generator imitates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    #[default]
    ProRussian,
    /// Different vocabulary, hidden usernames, fictional nicknames.
    ProUkrainian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub days: u32,
    /// Day on which the train/test cutoff falls.
    pub cutoff_day: u32,
    pub channels: usize,
    pub users: usize,
    pub propaganda: usize,
    /// Independent coordination networks the propaganda accounts split into.
    pub components: usize,
    /// Long texts per topic in each network's pool.
    pub pool_size: usize,
    /// Character range of long propaganda texts.
    pub propaganda_length: (usize, usize),
    /// Character range of texts on short topics.
    pub short_length: (usize, usize),
    pub propaganda_messages: (usize, usize),
    pub propaganda_lifespan_median_hours: f64,
    pub propaganda_channels: (usize, usize),
    pub user_lifespan_median_days: f64,
    pub user_messages_median: f64,
    /// Share of user posts that are long.
    pub user_long_share: f64,
    /// Replies among users, relative to the number of original posts.
    pub user_reply_share: f64,
    /// Target replies received per propaganda message.
    pub reply_rate_propaganda: f64,
    /// Target replies received per user message.
    pub reply_rate_user: f64,
    pub deletion_propaganda: f64,
    pub deletion_user: f64,
    /// Probability that a propaganda word comes from the propaganda vocabulary.
    pub separability: f64,
    /// Texts shared verbatim by a few users.
    pub memes: usize,
    pub style: Style,
    pub topics: Vec<TopicSpec>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            start: Utc.with_ymd_and_hms(2023, 8, 16, 0, 0, 0).unwrap(),
            days: 60,
            cutoff_day: 33,
            channels: 6,
            users: 500,
            propaganda: 200,
            components: 1,
            pool_size: 16,
            propaganda_length: (40, 400),
            short_length: (12, 30),
            propaganda_messages: (4, 12),
            propaganda_lifespan_median_hours: 6.0,
            propaganda_channels: (2, 4),
            user_lifespan_median_days: 8.0,
            user_messages_median: 6.0,
            user_long_share: 0.2,
            user_reply_share: 0.2,
            reply_rate_propaganda: 0.42,
            reply_rate_user: 0.43,
            deletion_propaganda: 0.8,
            deletion_user: 0.1,
            separability: 0.7,
            memes: 5,
            style: Style::ProRussian,
            topics: default_topics(),
        }
    }
}

impl GenConfig {
    /// A smaller corpus (well under 5 000 messages) for repeated runs.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            days: 30,
            cutoff_day: 16,
            channels: 4,
            users: 150,
            propaganda: 30,
            topics: default_topics()
                .into_iter()
                .map(|mut t| {
                    if let TopicKind::Event { day, duration } = t.kind {
                        t.kind = TopicKind::Event {
                            day: day / 2,
                            duration: (duration / 2).max(2),
                        };
                    }
                    t
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn cutoff(&self) -> DateTime<Utc> {
        self.start + Duration::days(self.cutoff_day as i64)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("infeasible generator config: {m}")));
        let rates = [
            self.user_long_share,
            self.user_reply_share,
            self.deletion_propaganda,
            self.deletion_user,
            self.separability,
            self.reply_rate_propaganda,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("rates must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.reply_rate_user) {
            return bad("user reply rate must lie in [0, 1)");
        }
        if self.days < 2 || self.cutoff_day == 0 || self.cutoff_day >= self.days {
            return bad("cutoff must fall strictly inside the period");
        }
        if self.channels == 0 {
            return bad("at least one channel");
        }
        if self.users == 0 && (self.propaganda > 0 || self.reply_rate_propaganda > 0.0) {
            return bad("propaganda accounts and replies need users to reply to");
        }
        if self.propaganda > 0 {
            if self.channels < 2 || self.propaganda_channels.0 < 2 {
                return bad("propaganda accounts need at least two channels");
            }
            if self.components == 0 || self.components > self.propaganda {
                return bad("components must be between 1 and the propaganda count");
            }
            if self.pool_size == 0 {
                return bad("text pool must not be empty");
            }
        }
        let (lo, hi) = self.propaganda_length;
        if lo <= text_len_floor() || lo > hi {
            return bad("propaganda length range must be valid and above 30 characters");
        }
        let (slo, shi) = self.short_length;
        if slo <= 10 || slo > shi {
            return bad("short length range must be valid and above 10 characters");
        }
        let (mlo, mhi) = self.propaganda_messages;
        if mlo < 2 || mlo > mhi {
            return bad("propaganda accounts post at least two messages");
        }
        if self.propaganda_channels.0 > self.propaganda_channels.1 {
            return bad("propaganda channel range is reversed");
        }
        if self.propaganda_lifespan_median_hours <= 0.0
            || self.user_lifespan_median_days <= 0.0
            || self.user_messages_median <= 0.0
        {
            return bad("medians must be positive");
        }
        if !self.topics.iter().any(|t| t.kind == TopicKind::Chatter) {
            return bad("need at least one chatter topic");
        }
        if self.propaganda > 0
            && !self
                .topics
                .iter()
                .any(|t| matches!(t.kind, TopicKind::Political | TopicKind::Event { .. }))
        {
            return bad("propaganda needs a political topic");
        }
        let mut ids = HashSet::new();
        for t in &self.topics {
            if t.words.is_empty() || !ids.insert(&t.id) {
                return bad("topic ids must be unique and have words");
            }
            if t.kind == TopicKind::Short && t.propaganda_words.is_empty() {
                return bad("short topics need propaganda words");
            }
            if let Some((_, last)) = t.window() {
                if last >= self.days {
                    return bad("event topic runs past the end of the period");
                }
            }
        }
        Ok(())
    }
}

fn text_len_floor() -> usize {
    crate::labeling::DEFAULT_MIN_LEN
}

/// Per-topic realized activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicSpan {
    pub first_day: u32,
    pub last_day: u32,
    pub messages: usize,
}

/// The generator's own bookkeeping of what it produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedStats {
    pub propaganda_accounts: usize,
    pub user_accounts: usize,
    pub propaganda_messages: usize,
    pub user_messages: usize,
    pub owner_messages: usize,
    pub propaganda_lifespan_median_hours: f64,
    pub user_lifespan_median_hours: f64,
    pub propaganda_channels_mean: f64,
    /// Share of propaganda messages whose text occurs more than once among
    /// propaganda messages.
    pub reuse_rate: f64,
    pub effectiveness_propaganda: f64,
    pub effectiveness_user: f64,
    pub deleted_propaganda: usize,
    pub deleted_user: usize,
    pub deletion_rate_propaganda: f64,
    pub deletion_rate_user: f64,
    /// Account ids of each coordination network.
    pub components: Vec<BTreeSet<String>>,
    pub topic_spans: BTreeMap<String, TopicSpan>,
    /// Topics with messages only on or after the cutoff.
    pub unseen_topics: BTreeSet<String>,
    pub short_topics: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub config: GenConfig,
    pub historical: Vec<Message>,
    pub realtime: Vec<Message>,
    /// Both feeds merged, deletions already recovered.
    pub corpus: Corpus,
    pub labels: LabelSet,
    pub topics: TopicAssignment,
    pub planted: PlantedStats,
}

impl Synthetic {
    pub fn cutoff(&self) -> DateTime<Utc> {
        self.config.cutoff()
    }

    pub fn propaganda_accounts(&self) -> BTreeSet<String> {
        self.labels.accounts_with(Label::Propaganda)
    }

    pub fn user_accounts(&self) -> BTreeSet<String> {
        self.labels.accounts_with(Label::User)
    }
}

// ---------------------------------------------------------------------------
// Vocabulary

const USER_FILLER: &[&str] = &[
    "ну", "короче", "вообще", "кстати", "честно", "думаю", "кажется", "люди", "ребята", "сегодня",
    "вчера", "опять", "тоже", "очень", "просто", "реально", "слушайте", "наверное", "может", "всё",
    "как", "так", "это", "вот", "там", "тут", "уже", "ещё", "зачем", "почему", "когда", "где",
    "мне", "у нас", "видел", "читал", "говорят", "интересно", "странно", "нормально", "согласен",
    "не знаю", "по-моему", "соседи", "дома", "работа", "мама", "друг",
];

const TINY: &[&str] = &[
    "да", "ага", "жесть", "ахаха", "ну да", "спасибо", "+", "👍", "норм", "ого", "капец", "лол",
    "да ладно", "верно", ")))",
];

const STYLE_PRO_RUSSIAN: &[&str] = &[
    "киевский режим", "бандеровцы", "хунта", "укронацисты", "западные кураторы", "госдеп",
    "марионетки", "русофобия", "англосаксы", "нато", "провокация", "фейки", "предатели",
    "неонацисты", "денацификация", "русский мир", "наши победят", "кукловоды", "обречены", "позор",
    "террористы", "нацистская клика", "продажные", "пропаганда запада", "истинные патриоты",
    "враги россии", "клоун", "вашингтон", "брюссель", "сатанисты",
];

const STYLE_PRO_UKRAINIAN: &[&str] = &[
    "орки", "рашисты", "путинский режим", "кремль врёт", "оккупанты", "бункерный дед",
    "слава всу", "болото", "ватники", "зомбоящик", "мясные штурмы", "сдавайтесь", "бавовна",
    "рабы", "ордынцы", "хаймарс", "русня", "мобики", "скрепы", "кацапы",
];

const EMOJI: &[&str] = &["😀", "😂", "🔥", "👍", "😡", "🤔", "💪", "😢"];

const RU_FIRST: &[&str] = &[
    "Лира", "Алина", "Ольга", "Марина", "Светлана", "Ирина", "Наталья", "Геша", "Олег", "Игорь",
    "Дмитрий", "Сергей", "Андрей", "Виктор", "Павел", "Елена", "Татьяна", "Юлия", "Никита", "Артём",
];

const RU_LAST: &[&str] = &[
    "Капустина", "Иванова", "Смирнова", "Кузнецов", "Попов", "Соколов", "Лебедев", "Козлов",
    "Новиков", "Морозов", "Петрова", "Волкова", "Соловьёв", "Васильев", "Зайцева", "Павлова",
    "Семенов", "Голубев", "Виноградова", "Богданов",
];

const NICKNAMES: &[&str] = &[
    "Кот", "Шаман", "Lena", "Max", "Тимур", "Саня", "Док", "Alex", "Vova", "Бублик", "Atlanta",
    "Az Air", "Nord", "Мистер Х", "Кира",
];

const USERNAME_WORDS: &[&str] = &[
    "wolf", "dark", "sunny", "kotik", "moroz", "bear", "tiger", "ivan", "masha", "lisa", "sky",
    "river", "forest", "storm", "angel", "dragon", "lucky", "happy", "kitty", "moon", "star",
    "north", "snow", "fox",
];

const WESTERN_FIRST: &[&str] = &[
    "John", "Emily", "Michael", "Sarah", "David", "Jessica", "James", "Ashley", "Robert", "Amanda",
];

const WESTERN_LAST: &[&str] = &[
    "Smith", "Johnson", "Brown", "Miller", "Davis", "Wilson", "Taylor", "Clark", "Walker", "Young",
];

pub fn default_topics() -> Vec<TopicSpec> {
    use TopicKind::*;
    let mut crypto = TopicSpec::new(
        "crypto",
        "Криптовалюта",
        Short,
        &["биток", "эфир", "курс", "биржа", "токен", "майнинг", "кошелёк", "usdt", "альты", "памп"],
    );
    crypto.propaganda_words = ["скам", "пирамида", "развод", "обнал", "лохотрон", "схема", "жулики", "хохлобиржа", "укрокрипта", "фантики"]
        .iter()
        .map(|w| w.to_string())
        .collect();
    vec![
        TopicSpec::new("weather", "Погода", Chatter, &["погода", "дождь", "жара", "снег", "холодно", "ветер", "прогноз", "солнце", "осень", "зонт"]),
        TopicSpec::new("food", "Еда", Chatter, &["рецепт", "борщ", "пельмени", "кофе", "ужин", "шашлык", "пирог", "магазин", "сыр", "овощи"]),
        TopicSpec::new("cars", "Машины", Chatter, &["машина", "пробки", "резина", "масло", "двигатель", "техосмотр", "парковка", "дорога", "гаишники", "заправка"]),
        TopicSpec::new("football", "Футбол", Chatter, &["матч", "гол", "спартак", "зенит", "тренер", "судья", "сборная", "счёт", "форвард", "стадион"]),
        TopicSpec::new("war", "Боевые действия", Political, &["фронт", "обстрел", "наступление", "артиллерия", "дроны", "окопы", "бахмут", "авдеевка", "потери", "снаряды"]),
        TopicSpec::new("economy", "Санкции и цены", Political, &["санкции", "рубль", "доллар", "цены", "инфляция", "импорт", "бензин", "зарплата", "ключевая ставка", "банк"]),
        TopicSpec::new("zelensky", "Зеленский", Political, &["зеленский", "зеля", "офис президента", "киев", "коррупция", "украинская власть", "кулеба", "подоляк", "верховная рада", "ермак"]),
        TopicSpec::new("mobilization", "Мобилизация", Political, &["мобилизация", "повестка", "военкомат", "призыв", "отсрочка", "контракт", "срочники", "граница", "уехать", "релоканты"]),
        crypto,
        TopicSpec::new("wagner", "Гибель Пригожина", Event { day: 7, duration: 5 }, &["пригожин", "вагнер", "самолёт", "крушение", "уткин", "тверская область", "катастрофа", "чвк"]),
        TopicSpec::new("crimea", "Удары по Крыму", Event { day: 20, duration: 4 }, &["крым", "севастополь", "штаб флота", "ракеты", "storm shadow", "удар", "черноморский флот", "пво"]),
        TopicSpec::new("korea", "Визит Ким Чен Ына", Event { day: 27, duration: 4 }, &["ким чен ын", "кндр", "корея", "восточный", "бронепоезд", "боеприпасы", "космодром", "визит"]),
        TopicSpec::new("karabakh", "Карабах", Event { day: 34, duration: 5 }, &["карабах", "азербайджан", "армения", "пашинян", "алиев", "степанакерт", "беженцы", "миротворцы"]),
        TopicSpec::new("f16", "Истребители F-16", Event { day: 44, duration: 4 }, &["f-16", "истребители", "пилоты", "дания", "нидерланды", "авиабаза", "норвегия", "обучение пилотов"]),
        TopicSpec::new("israel", "Война в Израиле", Event { day: 52, duration: 6 }, &["израиль", "хамас", "газа", "палестина", "нетаньяху", "сектор газа", "ближний восток", "заложники"]),
    ]
}

// ---------------------------------------------------------------------------
// Generator state

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Author {
    Owner,
    User(usize),
    Prop(usize),
}

#[derive(Debug, Clone)]
struct Draft {
    channel: usize,
    author: Author,
    ts: i64,
    text: String,
    reply_to: Option<usize>,
    topic: Option<usize>,
}

struct Person {
    id: String,
    first_name: Option<String>,
    last_name: Option<String>,
    username: Option<String>,
    channels: Vec<usize>,
    start: i64,
    end: i64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Tiny,
    Short,
    Long,
}

struct Gen<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
    drafts: Vec<Draft>,
    /// Texts longer than 10 characters already used by users or pools.
    used: HashSet<String>,
    users: Vec<Person>,
    props: Vec<Person>,
    latency: LogNormal<f64>,
    t_min: i64,
    t_max: i64,
    pools: HashMap<(usize, usize), Vec<String>>,
    account_ids: HashSet<String>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl<'c> Gen<'c> {
    fn new(cfg: &'c GenConfig) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            drafts: Vec::new(),
            used: HashSet::new(),
            users: Vec::new(),
            props: Vec::new(),
            // median 15 minutes
            latency: LogNormal::new((900f64).ln(), 1.0).expect("valid parameters"),
            t_min: 120,
            t_max: cfg.days as i64 * 86_400 - 120,
            pools: HashMap::new(),
            account_ids: HashSet::new(),
        }
    }

    fn day_of(ts: i64) -> u32 {
        (ts / 86_400) as u32
    }

    fn topic_active(&self, topic: usize, ts: i64) -> bool {
        match self.cfg.topics[topic].window() {
            None => true,
            Some((a, b)) => (a..=b).contains(&Self::day_of(ts)),
        }
    }

    fn sample_latency(&mut self) -> i64 {
        (self.latency.sample(&mut self.rng) as i64).clamp(5, 6 * 3600)
    }

    fn lognormal(&mut self, median: f64, sigma: f64) -> f64 {
        LogNormal::new(median.ln(), sigma)
            .expect("valid parameters")
            .sample(&mut self.rng)
    }

    fn fresh_account_id(&mut self) -> String {
        loop {
            let id = self.rng.random_range(1_000_000_000u64..7_000_000_000).to_string();
            if self.account_ids.insert(id.clone()) {
                return id;
            }
        }
    }

    fn decorate(&mut self, base: String) -> String {
        let mut s = capitalize(&base);
        let r: f64 = self.rng.random();
        if r < 0.15 {
            s.push('!');
        } else if r < 0.35 {
            s.push('?');
        } else if r < 0.45 {
            s.push_str("...");
        }
        if self.rng.random_bool(0.1) {
            s.push(' ');
            s.push_str(EMOJI.choose(&mut self.rng).expect("non-empty"));
        }
        if self.rng.random_bool(0.03) {
            let n = self.rng.random_range(100..100_000);
            if self.rng.random_bool(0.5) {
                s.push_str(&format!(" https://t.me/c/{n}"));
            } else {
                s.push_str(&format!(" www.news{n}.ru"));
            }
        }
        s
    }

    /// Words joined until at least `min_chars`; `None` if that overshoots `max_chars`.
    fn words_to_length(
        &mut self,
        min_chars: usize,
        max_chars: usize,
        mut pick: impl FnMut(&mut ChaCha8Rng) -> String,
    ) -> Option<String> {
        let mut s = String::new();
        while text::char_len(&s) < min_chars {
            let w = pick(&mut self.rng);
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(&w);
        }
        (text::char_len(&s) <= max_chars).then_some(s)
    }

    /// Registers `s` as used if it is long enough to matter for reuse;
    /// returns false when it was already taken.
    fn claim(&mut self, s: &str) -> bool {
        match text::long_canonical(s, 10) {
            Some(c) => self.used.insert(c),
            None => true,
        }
    }

    fn user_text(&mut self, topic: usize, mode: Mode) -> String {
        let spec = &self.cfg.topics[topic];
        let words: Vec<String> = spec.words.clone();
        let short_topic = spec.kind == TopicKind::Short;
        let p_topic = 0.5;
        if mode == Mode::Tiny {
            return TINY.choose(&mut self.rng).expect("non-empty").to_string();
        }
        for attempt in 0.. {
            let base = if short_topic {
                let (lo, hi) = self.cfg.short_length;
                let w = words.clone();
                self.words_to_length(lo, hi, |r| pick_mixed(r, &w, USER_FILLER, 0.5))
            } else {
                let n = match mode {
                    Mode::Long => self.rng.random_range(10..=25),
                    _ => self.rng.random_range(2..=5),
                };
                let w = words.clone();
                Some(
                    (0..n)
                        .map(|_| pick_mixed(&mut self.rng, &w, USER_FILLER, p_topic))
                        .collect::<Vec<_>>()
                        .join(" "),
                )
            };
            let Some(mut base) = base else { continue };
            if attempt > 20 {
                base.push_str(&format!(" {}", self.rng.random_range(10..10_000)));
            }
            let s = self.decorate(base);
            if self.claim(&s) {
                return s;
            }
        }
        unreachable!()
    }

    fn style_words(&self) -> &'static [&'static str] {
        match self.cfg.style {
            Style::ProRussian => STYLE_PRO_RUSSIAN,
            Style::ProUkrainian => STYLE_PRO_UKRAINIAN,
        }
    }

    fn propaganda_text(&mut self, topic: usize) -> String {
        let spec = self.cfg.topics[topic].clone();
        let style = self.style_words();
        let sep = self.cfg.separability;
        loop {
            let base = if spec.kind == TopicKind::Short {
                let (lo, hi) = self.cfg.short_length;
                let own: Vec<&str> = spec.propaganda_words.iter().map(String::as_str).collect();
                let theirs: Vec<&str> = spec.words.iter().map(String::as_str).collect();
                self.words_to_length(lo, hi, |r| {
                    if r.random_bool(sep) {
                        own.choose(r).expect("non-empty").to_string()
                    } else {
                        theirs.choose(r).expect("non-empty").to_string()
                    }
                })
            } else {
                let (lo, hi) = self.cfg.propaganda_length;
                let target = (self.lognormal(110.0, 0.6) as usize).clamp(lo + 1, hi);
                let topic_words: Vec<&str> = spec.words.iter().map(String::as_str).collect();
                self.words_to_length(target, hi, |r| {
                    if r.random_bool(sep) {
                        style.choose(r).expect("non-empty").to_string()
                    } else {
                        pick_mixed(r, &topic_words, USER_FILLER, 0.5)
                    }
                })
            };
            let Some(base) = base else { continue };
            let s = self.decorate(base);
            let (lo, hi) = if spec.kind == TopicKind::Short {
                (self.cfg.short_length.0, usize::MAX)
            } else {
                (self.cfg.propaganda_length.0, usize::MAX)
            };
            let n = text::char_len(&s);
            if n >= lo && n <= hi && self.claim(&s) {
                return s;
            }
        }
    }

    /// Long texts come from the network's shared pool; short ones are
    /// written fresh since they are too short to count as reuse anyway.
    fn pool_text(&mut self, component: usize, topic: usize) -> String {
        if self.cfg.topics[topic].kind == TopicKind::Short {
            return self.propaganda_text(topic);
        }
        if !self.pools.contains_key(&(component, topic)) {
            let texts: Vec<String> = (0..self.cfg.pool_size).map(|_| self.propaganda_text(topic)).collect();
            self.pools.insert((component, topic), texts);
        }
        self.pools[&(component, topic)]
            .choose(&mut self.rng)
            .expect("non-empty pool")
            .clone()
    }

    fn pick_topic(&mut self, ts: i64) -> usize {
        let weights: Vec<f64> = self
            .cfg
            .topics
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if !self.topic_active(i, ts) {
                    return 0.0;
                }
                match t.kind {
                    TopicKind::Chatter => 1.0,
                    TopicKind::Political => 0.6,
                    TopicKind::Short => 0.6,
                    TopicKind::Event { .. } => 2.5,
                }
            })
            .collect();
        WeightedIndex::new(&weights)
            .expect("a chatter topic is always active")
            .sample(&mut self.rng)
    }

    fn user_mode(&mut self, topic: usize, reply: bool) -> Mode {
        let chatter = self.cfg.topics[topic].kind == TopicKind::Chatter;
        let r: f64 = self.rng.random();
        if chatter && r < if reply { 0.3 } else { 0.1 } {
            Mode::Tiny
        } else if self.rng.random_bool(self.cfg.user_long_share) {
            Mode::Long
        } else {
            Mode::Short
        }
    }

    fn make_users(&mut self) {
        let span = self.t_max - self.t_min;
        for _ in 0..self.cfg.users {
            let start = self.t_min + self.rng.random_range(0..span);
            let life = (self.lognormal(self.cfg.user_lifespan_median_days, 1.2) * 86_400.0) as i64;
            let end = (start + life.max(3_600)).min(self.t_max);
            let home = self.rng.random_range(0..self.cfg.channels);
            let mut channels = vec![home];
            if self.cfg.channels > 1 && self.rng.random_bool(0.3) {
                let other = (home + self.rng.random_range(1..self.cfg.channels)) % self.cfg.channels;
                channels.push(other);
            }
            let (first_name, last_name) = if self.rng.random_bool(0.5) {
                (
                    Some(RU_FIRST.choose(&mut self.rng).expect("non-empty").to_string()),
                    self.rng
                        .random_bool(0.6)
                        .then(|| RU_LAST.choose(&mut self.rng).expect("non-empty").to_string()),
                )
            } else {
                (Some(NICKNAMES.choose(&mut self.rng).expect("non-empty").to_string()), None)
            };
            let username = (!self.rng.random_bool(0.28)).then(|| {
                let mut u = USERNAME_WORDS.choose(&mut self.rng).expect("non-empty").to_string();
                if self.rng.random_bool(0.4) {
                    u.push('_');
                    u.push_str(USERNAME_WORDS.choose(&mut self.rng).expect("non-empty"));
                }
                if self.rng.random_bool(0.3) {
                    u.push_str(&self.rng.random_range(1..100).to_string());
                }
                u
            });
            let id = self.fresh_account_id();
            self.users.push(Person {
                id,
                first_name,
                last_name,
                username,
                channels,
                start,
                end,
            });
        }
    }

    fn random_syllables(&mut self) -> String {
        const C: &[u8] = b"bdfghklmnprstvz";
        const V: &[u8] = b"aeiou";
        let n = self.rng.random_range(3..=5);
        let mut s = String::new();
        for _ in 0..n {
            s.push(*C.choose(&mut self.rng).expect("non-empty") as char);
            s.push(*V.choose(&mut self.rng).expect("non-empty") as char);
        }
        if self.rng.random_bool(0.3) {
            s.push(*C.choose(&mut self.rng).expect("non-empty") as char);
        }
        s
    }

    fn push(&mut self, d: Draft) -> usize {
        self.drafts.push(d);
        self.drafts.len() - 1
    }

    fn user_posts(&mut self) {
        let memes: Vec<String> = (0..self.cfg.memes)
            .map(|_| {
                let chatter = self.chatter_topic();
                self.user_text(chatter, Mode::Long)
            })
            .collect();
        for u in 0..self.users.len() {
            let n = 1 + (self.lognormal(self.cfg.user_messages_median, 1.0) as usize).min(200);
            for _ in 0..n {
                let (start, end) = (self.users[u].start, self.users[u].end);
                let ts = self.rng.random_range(start..=end);
                let channel = *self.users[u].channels.choose(&mut self.rng).expect("non-empty");
                let topic = self.pick_topic(ts);
                let mode = self.user_mode(topic, false);
                let text = self.user_text(topic, mode);
                self.push(Draft {
                    channel,
                    author: Author::User(u),
                    ts,
                    text,
                    reply_to: None,
                    topic: Some(topic),
                });
            }
        }
        // shared texts: a handful of users each
        for meme in memes {
            let k = self.rng.random_range(2..=4).min(self.users.len());
            let chosen: Vec<usize> = (0..self.users.len()).collect::<Vec<_>>().choose_multiple(&mut self.rng, k).copied().collect();
            let topic = self.chatter_topic();
            for u in chosen {
                let ts = self.rng.random_range(self.users[u].start..=self.users[u].end);
                let channel = *self.users[u].channels.choose(&mut self.rng).expect("non-empty");
                self.push(Draft {
                    channel,
                    author: Author::User(u),
                    ts,
                    text: meme.clone(),
                    reply_to: None,
                    topic: Some(topic),
                });
            }
        }
        // every event starts with a post on its onset day
        for t in 0..self.cfg.topics.len() {
            let Some((first, _)) = self.cfg.topics[t].window() else { continue };
            if self.users.is_empty() {
                break;
            }
            let u = self.rng.random_range(0..self.users.len());
            let day0 = first as i64 * 86_400;
            let ts = (day0 + self.rng.random_range(0..86_400)).clamp(self.t_min, self.t_max);
            let channel = *self.users[u].channels.choose(&mut self.rng).expect("non-empty");
            let text = self.user_text(t, Mode::Short);
            self.push(Draft {
                channel,
                author: Author::User(u),
                ts,
                text,
                reply_to: None,
                topic: Some(t),
            });
        }
    }

    fn chatter_topic(&mut self) -> usize {
        let chatter: Vec<usize> = (0..self.cfg.topics.len())
            .filter(|&i| self.cfg.topics[i].kind == TopicKind::Chatter)
            .collect();
        *chatter.choose(&mut self.rng).expect("validated")
    }

    /// A user who reads `channel` and is around at `ts`, if possible.
    fn responder(&mut self, channel: usize, ts: i64) -> usize {
        let active: Vec<usize> = (0..self.users.len())
            .filter(|&u| {
                let p = &self.users[u];
                p.channels.contains(&channel) && p.start <= ts && ts <= p.end + 86_400
            })
            .collect();
        if let Some(&u) = active.choose(&mut self.rng) {
            return u;
        }
        let members: Vec<usize> = (0..self.users.len())
            .filter(|&u| self.users[u].channels.contains(&channel))
            .collect();
        match members.choose(&mut self.rng) {
            Some(&u) => u,
            None => self.rng.random_range(0..self.users.len()),
        }
    }

    /// Adds a user reply to draft `target`; false if it would fall past the end.
    fn user_reply(&mut self, target: usize) -> bool {
        let (channel, ts0, topic) = {
            let t = &self.drafts[target];
            (t.channel, t.ts, t.topic.expect("account messages carry a topic"))
        };
        let ts = ts0 + self.sample_latency();
        if ts > self.t_max {
            return false;
        }
        let u = self.responder(channel, ts);
        let mode = self.user_mode(topic, true);
        let text = self.user_text(topic, mode);
        self.push(Draft {
            channel,
            author: Author::User(u),
            ts,
            text,
            reply_to: Some(target),
            topic: Some(topic),
        });
        true
    }

    fn user_replies(&mut self) {
        let base: Vec<usize> = (0..self.drafts.len()).collect();
        if base.is_empty() {
            return;
        }
        let weights: Vec<f64> = base
            .iter()
            .map(|&i| match self.cfg.topics[self.drafts[i].topic.expect("user post")].kind {
                TopicKind::Chatter => 1.0,
                TopicKind::Event { .. } => 1.0,
                TopicKind::Short => 1.5,
                TopicKind::Political => 0.2,
            })
            .collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        let n = (self.cfg.user_reply_share * base.len() as f64).round() as usize;
        let mut made = 0;
        let mut attempts = 0;
        while made < n && attempts < 20 * n + 100 {
            attempts += 1;
            let target = base[dist.sample(&mut self.rng)];
            if self.user_reply(target) {
                made += 1;
            }
        }
    }

    fn make_propaganda(&mut self) -> Result<()> {
        let cfg = self.cfg;
        // eligible triggers per channel, sorted by time
        let mut eligible: Vec<Vec<(i64, usize)>> = vec![Vec::new(); cfg.channels];
        for (i, d) in self.drafts.iter().enumerate() {
            if let (Author::User(_), Some(t)) = (d.author, d.topic) {
                if cfg.topics[t].engages_propaganda() {
                    eligible[d.channel].push((d.ts, i));
                }
            }
        }
        for e in &mut eligible {
            e.sort();
        }

        for p in 0..cfg.propaganda {
            let component = p % cfg.components;
            let lo = cfg.propaganda_channels.0.min(cfg.channels);
            let hi = cfg.propaganda_channels.1.clamp(lo, cfg.channels);
            let k = self.rng.random_range(cfg.propaganda_messages.0..=cfg.propaganda_messages.1);
            let mut picked: Vec<usize> = Vec::new();
            for _attempt in 0..60 {
                let m = self.rng.random_range(lo..=hi);
                let mut chans: Vec<usize> = (0..cfg.channels).collect();
                chans.shuffle(&mut self.rng);
                chans.truncate(m);
                let birth = self.rng.random_range(self.t_min..self.t_max - 3_600);
                let mut life = (self.lognormal(cfg.propaganda_lifespan_median_hours, 0.8) * 3_600.0)
                    .clamp(1_800.0, 72.0 * 3_600.0) as i64;
                let mut cands: Vec<usize> = Vec::new();
                while life <= 10 * 86_400 {
                    cands = chans
                        .iter()
                        .flat_map(|&c| {
                            let e = &eligible[c];
                            let a = e.partition_point(|&(t, _)| t < birth);
                            let b = e.partition_point(|&(t, _)| t <= birth + life);
                            e[a..b].iter().map(|&(_, i)| i)
                        })
                        .collect();
                    let distinct: BTreeSet<usize> = cands.iter().map(|&i| self.drafts[i].channel).collect();
                    let long = cands
                        .iter()
                        .any(|&i| cfg.topics[self.drafts[i].topic.expect("topic")].kind != TopicKind::Short);
                    if distinct.len() >= 2 && cands.len() >= 2 && long {
                        break;
                    }
                    life = life * 3 / 2;
                    cands.clear();
                }
                if cands.is_empty() {
                    continue;
                }
                cands.sort_unstable();
                picked = self.pick_triggers(&cands, k);
                if !picked.is_empty() {
                    break;
                }
            }
            if picked.is_empty() {
                return Err(Error::InvalidInput(
                    "infeasible generator config: too few user messages for propaganda to reply to".into(),
                ));
            }

            let western = cfg.style == Style::ProRussian
                && self.drafts[picked[0]].ts < cfg.cutoff_day as i64 * 86_400
                && self.rng.random_bool(0.1);
            let username = match cfg.style {
                Style::ProUkrainian => None,
                Style::ProRussian if western => Some(format!(
                    "{}_{}{}",
                    WESTERN_FIRST.choose(&mut self.rng).expect("non-empty"),
                    WESTERN_LAST.choose(&mut self.rng).expect("non-empty"),
                    self.rng.random_range(1..100)
                )),
                Style::ProRussian => Some(self.random_syllables()),
            };
            let (first_name, last_name) = match cfg.style {
                Style::ProRussian => (
                    Some(RU_FIRST.choose(&mut self.rng).expect("non-empty").to_string()),
                    Some(RU_LAST.choose(&mut self.rng).expect("non-empty").to_string()),
                ),
                Style::ProUkrainian => (Some(NICKNAMES.choose(&mut self.rng).expect("non-empty").to_string()), None),
            };
            let id = self.fresh_account_id();
            let mut channels = BTreeSet::new();
            let (mut start, mut end) = (i64::MAX, i64::MIN);
            for trig in picked {
                let (channel, ts0, topic) = {
                    let d = &self.drafts[trig];
                    (d.channel, d.ts, d.topic.expect("topic"))
                };
                let ts = (ts0 + self.sample_latency()).min(self.t_max);
                let text = self.pool_text(component, topic);
                channels.insert(channel);
                start = start.min(ts);
                end = end.max(ts);
                self.push(Draft {
                    channel,
                    author: Author::Prop(p),
                    ts,
                    text,
                    reply_to: Some(trig),
                    topic: Some(topic),
                });
            }
            self.props.push(Person {
                id,
                first_name,
                last_name,
                username,
                channels: channels.into_iter().collect(),
                start,
                end,
            });
        }
        self.connect_components();
        Ok(())
    }

    /// Up to `k` distinct triggers: the first on a long-text topic, the
    /// second in another channel, the rest weighted toward events.
    fn pick_triggers(&mut self, cands: &[usize], k: usize) -> Vec<usize> {
        let topics = &self.cfg.topics;
        let kind = |i: usize| topics[self.drafts[i].topic.expect("topic")].kind;
        let long: Vec<usize> = cands.iter().copied().filter(|&i| kind(i) != TopicKind::Short).collect();
        let Some(&first) = long.choose(&mut self.rng) else {
            return Vec::new();
        };
        let mut out = vec![first];
        let other: Vec<usize> = cands
            .iter()
            .copied()
            .filter(|&i| self.drafts[i].channel != self.drafts[first].channel)
            .collect();
        let Some(&second) = other.choose(&mut self.rng) else {
            return Vec::new();
        };
        out.push(second);
        let rest: Vec<usize> = cands.iter().copied().filter(|i| !out.contains(i)).collect();
        let weights: Vec<f64> = rest
            .iter()
            .map(|&i| match kind(i) {
                TopicKind::Event { .. } => 5.0,
                TopicKind::Short => 0.8,
                _ => 1.0,
            })
            .collect();
        let take = k.saturating_sub(2).min(rest.len());
        if take > 0 {
            let chosen = rand::seq::index::sample_weighted(&mut self.rng, rest.len(), |i| weights[i], take)
                .expect("positive weights");
            out.extend(chosen.iter().map(|i| rest[i]));
        }
        out
    }

    /// Makes every planted network connected under long-text reuse by
    /// swapping in an already used text where needed.
    fn connect_components(&mut self) {
        let cfg = self.cfg;
        let min = text_len_floor();
        for c in 0..cfg.components {
            loop {
                let members: Vec<usize> = (0..self.props.len()).filter(|p| p % cfg.components == c).collect();
                if members.len() < 2 {
                    break;
                }
                let mut parent: HashMap<usize, usize> = members.iter().map(|&p| (p, p)).collect();
                fn find(parent: &mut HashMap<usize, usize>, x: usize) -> usize {
                    let mut r = x;
                    while parent[&r] != r {
                        r = parent[&r];
                    }
                    parent.insert(x, r);
                    r
                }
                let mut writer: HashMap<String, usize> = HashMap::new();
                for d in &self.drafts {
                    let Author::Prop(p) = d.author else { continue };
                    if p % cfg.components != c {
                        continue;
                    }
                    let Some(t) = text::long_canonical(&d.text, min) else { continue };
                    match writer.get(&t) {
                        Some(&q) => {
                            let (a, b) = (find(&mut parent, p), find(&mut parent, q));
                            parent.insert(a, b);
                        }
                        None => {
                            writer.insert(t, p);
                        }
                    }
                }
                let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &p in &members {
                    let r = find(&mut parent, p);
                    groups.entry(r).or_default().push(p);
                }
                if groups.len() == 1 {
                    break;
                }
                let main = groups.values().max_by_key(|g| (g.len(), std::cmp::Reverse(g[0]))).expect("non-empty").clone();
                let stray = groups.values().find(|g| g[0] != main[0]).expect("more than one group").clone();
                let main_set: HashSet<usize> = main.iter().copied().collect();
                let main_texts: Vec<(usize, String)> = self
                    .drafts
                    .iter()
                    .filter_map(|d| match d.author {
                        Author::Prop(p) if main_set.contains(&p) && text::char_len(&d.text) > min => {
                            Some((d.topic.expect("topic"), d.text.clone()))
                        }
                        _ => None,
                    })
                    .collect();
                let target = self
                    .drafts
                    .iter()
                    .position(|d| matches!(d.author, Author::Prop(p) if p == stray[0]) && text::char_len(&d.text) > min)
                    .expect("every account has a long message");
                let topic = self.drafts[target].topic;
                let same: Vec<&String> = main_texts.iter().filter(|(t, _)| Some(*t) == topic).map(|(_, s)| s).collect();
                let replacement = match same.choose(&mut self.rng) {
                    Some(s) => (*s).clone(),
                    None => main_texts.choose(&mut self.rng).expect("main group has long texts").1.clone(),
                };
                self.drafts[target].text = replacement;
            }
        }
    }

    fn top_up_replies(&mut self) {
        let cfg = self.cfg;
        if self.users.is_empty() {
            return;
        }
        let prop: Vec<usize> = (0..self.drafts.len())
            .filter(|&i| matches!(self.drafts[i].author, Author::Prop(_)))
            .collect();
        let mut received = vec![0usize; self.drafts.len()];
        for d in &self.drafts {
            if let Some(t) = d.reply_to {
                received[t] += 1;
            }
        }
        let have: usize = prop.iter().map(|&i| received[i]).sum();
        let want = (cfg.reply_rate_propaganda * prop.len() as f64).round() as usize;
        let mut made = have;
        let mut attempts = 0;
        while made < want && attempts < 50 * want + 100 {
            attempts += 1;
            let &t = prop.choose(&mut self.rng).expect("non-empty when want > 0");
            if self.user_reply(t) {
                made += 1;
            }
        }

        let user: Vec<usize> = (0..self.drafts.len())
            .filter(|&i| matches!(self.drafts[i].author, Author::User(_)))
            .collect();
        let mut received = vec![0usize; self.drafts.len()];
        for d in &self.drafts {
            if let Some(t) = d.reply_to {
                received[t] += 1;
            }
        }
        let n_u = user.len() as f64;
        let r_u: usize = user.iter().map(|&i| received[i]).sum();
        let rho = cfg.reply_rate_user;
        let k = ((rho * n_u - r_u as f64) / (1.0 - rho)).round();
        if k < 0.0 {
            log::warn!("user reply rate already above target; leaving it");
            return;
        }
        let k = k as usize;
        let mut made = 0;
        let mut attempts = 0;
        while made < k && attempts < 50 * k + 100 {
            attempts += 1;
            let &t = user.choose(&mut self.rng).expect("users posted");
            if self.user_reply(t) {
                made += 1;
            }
        }
    }

    fn owner_posts(&mut self) {
        for c in 0..self.cfg.channels {
            for (ts, text) in [
                (60, format!("Канал {}: открываем обсуждение", c + 1)),
                (self.cfg.days as i64 * 86_400 - 60, format!("Канал {}: итоги недели", c + 1)),
            ] {
                self.push(Draft {
                    channel: c,
                    author: Author::Owner,
                    ts,
                    text,
                    reply_to: None,
                    topic: None,
                });
            }
        }
    }
}

fn pick_mixed<S: AsRef<str>>(rng: &mut ChaCha8Rng, topic: &[S], filler: &[&str], p_topic: f64) -> String {
    if rng.random_bool(p_topic) {
        topic.choose(rng).expect("non-empty").as_ref().to_string()
    } else {
        filler.choose(rng).expect("non-empty").to_string()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn channel_name(c: usize) -> String {
    format!("channel_{}", c + 1)
}

/// Generates a corpus, its ground-truth labels and topics, and the
/// generator's bookkeeping. Identical configs give identical output.
pub fn generate(cfg: &GenConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut g = Gen::new(cfg);
    g.make_users();
    g.user_posts();
    g.user_replies();
    g.make_propaganda()?;
    g.top_up_replies();
    g.owner_posts();

    let n = g.drafts.len();
    let is_prop = |d: &Draft| matches!(d.author, Author::Prop(_));
    let is_user = |d: &Draft| matches!(d.author, Author::User(_));
    let prop_idx: Vec<usize> = (0..n).filter(|&i| is_prop(&g.drafts[i])).collect();
    let user_idx: Vec<usize> = (0..n).filter(|&i| is_user(&g.drafts[i])).collect();

    // moderation
    let mut deleted = vec![false; n];
    let d_p = (cfg.deletion_propaganda * prop_idx.len() as f64).round() as usize;
    let d_u = (cfg.deletion_user * user_idx.len() as f64).round() as usize;
    for (idx, k) in [(&prop_idx, d_p), (&user_idx, d_u)] {
        for &i in idx.choose_multiple(&mut g.rng, k) {
            deleted[i] = true;
        }
    }

    // message ids follow time within each channel
    let mut ids = vec![0i64; n];
    for c in 0..cfg.channels {
        let mut order: Vec<usize> = (0..n).filter(|&i| g.drafts[i].channel == c).collect();
        order.sort_by_key(|&i| (g.drafts[i].ts, i));
        for (k, &i) in order.iter().enumerate() {
            ids[i] = k as i64 + 1;
        }
    }

    let mut historical = Vec::new();
    let mut realtime = Vec::new();
    let mut topics = TopicAssignment::new();
    for t in &cfg.topics {
        topics.labels.insert(t.id.clone(), t.label.clone());
    }
    let mut labels = LabelSet::new();
    let external = |label| LabelEntry {
        label,
        provenance: Provenance::External,
        iteration: 0,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (g.drafts[i].channel, ids[i]));
    for i in order {
        let d = &g.drafts[i];
        let person = match d.author {
            Author::Owner => None,
            Author::User(u) => Some(&g.users[u]),
            Author::Prop(p) => Some(&g.props[p]),
        };
        let m = Message {
            channel_id: channel_name(d.channel),
            message_id: ids[i],
            account_id: person.map(|p| p.id.clone()),
            timestamp: cfg.start + Duration::seconds(d.ts),
            text: d.text.clone(),
            reply_to: d.reply_to.map(|t| ids[t]),
            first_name: person.and_then(|p| p.first_name.clone()),
            last_name: person.and_then(|p| p.last_name.clone()),
            username: person.and_then(|p| p.username.clone()),
            deleted: false,
            source: Source::Realtime,
        };
        if let Some(t) = d.topic {
            topics.set(m.key(), Some(cfg.topics[t].id.clone()), TopicProvenance::Planted);
        }
        if !deleted[i] {
            historical.push(Message {
                source: Source::Historical,
                ..m.clone()
            });
        }
        realtime.push(m);
    }
    let mut posted: BTreeSet<(usize, bool)> = BTreeSet::new();
    for d in &g.drafts {
        match d.author {
            Author::User(u) => posted.insert((u, false)),
            Author::Prop(p) => posted.insert((p, true)),
            Author::Owner => false,
        };
    }
    for (i, prop) in posted {
        let (id, label) = if prop {
            (&g.props[i].id, Label::Propaganda)
        } else {
            (&g.users[i].id, Label::User)
        };
        labels.insert(id.clone(), external(label))?;
    }

    let mut corpus = merge([historical.clone(), realtime.clone()]);
    let report = diff_deleted(&mut corpus)?;
    if report.total_deleted != d_p + d_u {
        return Err(Error::Data(format!(
            "recovered {} deletions, planted {}",
            report.total_deleted,
            d_p + d_u
        )));
    }

    // bookkeeping
    let mut spans: HashMap<Author, (i64, i64, BTreeSet<usize>)> = HashMap::new();
    for d in &g.drafts {
        if d.author == Author::Owner {
            continue;
        }
        let e = spans.entry(d.author).or_insert((i64::MAX, i64::MIN, BTreeSet::new()));
        e.0 = e.0.min(d.ts);
        e.1 = e.1.max(d.ts);
        e.2.insert(d.channel);
    }
    let hours = |want_prop: bool| -> Vec<f64> {
        spans
            .iter()
            .filter(|(a, _)| matches!(a, Author::Prop(_)) == want_prop)
            .map(|(_, (s, e, _))| (e - s) as f64 / 3600.0)
            .collect()
    };
    let prop_spans: Vec<&BTreeSet<usize>> = spans
        .iter()
        .filter(|(a, _)| matches!(a, Author::Prop(_)))
        .map(|(_, s)| &s.2)
        .collect();
    let mut text_count: HashMap<&str, usize> = HashMap::new();
    for &i in &prop_idx {
        *text_count.entry(g.drafts[i].text.as_str()).or_default() += 1;
    }
    let reused = prop_idx.iter().filter(|&&i| text_count[g.drafts[i].text.as_str()] > 1).count();
    let mut received = vec![0usize; n];
    for d in &g.drafts {
        if let Some(t) = d.reply_to {
            received[t] += 1;
        }
    }
    let rate = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            0.0
        } else {
            idx.iter().map(|&i| received[i]).sum::<usize>() as f64 / idx.len() as f64
        }
    };
    let mut topic_spans: BTreeMap<String, TopicSpan> = BTreeMap::new();
    for d in &g.drafts {
        let Some(t) = d.topic else { continue };
        let day = Gen::day_of(d.ts);
        let e = topic_spans.entry(cfg.topics[t].id.clone()).or_insert(TopicSpan {
            first_day: day,
            last_day: day,
            messages: 0,
        });
        e.first_day = e.first_day.min(day);
        e.last_day = e.last_day.max(day);
        e.messages += 1;
    }
    let unseen_topics = topic_spans
        .iter()
        .filter(|(_, s)| s.first_day >= cfg.cutoff_day)
        .map(|(t, _)| t.clone())
        .collect();
    let mut components = vec![BTreeSet::new(); if cfg.propaganda > 0 { cfg.components } else { 0 }];
    for (p, person) in g.props.iter().enumerate() {
        components[p % cfg.components].insert(person.id.clone());
    }
    let planted = PlantedStats {
        propaganda_accounts: g.props.len(),
        user_accounts: spans.keys().filter(|a| matches!(a, Author::User(_))).count(),
        propaganda_messages: prop_idx.len(),
        user_messages: user_idx.len(),
        owner_messages: n - prop_idx.len() - user_idx.len(),
        propaganda_lifespan_median_hours: median(hours(true)),
        user_lifespan_median_hours: median(hours(false)),
        propaganda_channels_mean: if prop_spans.is_empty() {
            0.0
        } else {
            prop_spans.iter().map(|s| s.len()).sum::<usize>() as f64 / prop_spans.len() as f64
        },
        reuse_rate: if prop_idx.is_empty() {
            0.0
        } else {
            reused as f64 / prop_idx.len() as f64
        },
        effectiveness_propaganda: rate(&prop_idx),
        effectiveness_user: rate(&user_idx),
        deleted_propaganda: d_p,
        deleted_user: d_u,
        deletion_rate_propaganda: if prop_idx.is_empty() { 0.0 } else { d_p as f64 / prop_idx.len() as f64 },
        deletion_rate_user: if user_idx.is_empty() { 0.0 } else { d_u as f64 / user_idx.len() as f64 },
        components,
        topic_spans,
        unseen_topics,
        short_topics: cfg
            .topics
            .iter()
            .filter(|t| t.kind == TopicKind::Short)
            .map(|t| t.id.clone())
            .collect(),
    };

    Ok(Synthetic {
        config: cfg.clone(),
        historical,
        realtime,
        corpus,
        labels,
        topics,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> GenConfig {
        GenConfig {
            users: 60,
            propaganda: 8,
            channels: 3,
            ..GenConfig::small(seed)
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&tiny(3)).unwrap();
        let b = generate(&tiny(3)).unwrap();
        assert_eq!(a.realtime, b.realtime);
        assert_eq!(a.historical, b.historical);
        assert_eq!(a.planted, b.planted);
        let c = generate(&tiny(4)).unwrap();
        assert_ne!(a.realtime, c.realtime);
    }

    #[test]
    fn no_propaganda_means_all_users() {
        let s = generate(&GenConfig {
            propaganda: 0,
            ..tiny(1)
        })
        .unwrap();
        assert!(s.propaganda_accounts().is_empty());
        assert!(!s.labels.is_empty());
        assert!(s.labels.iter().all(|(_, e)| e.label == Label::User));
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        assert!(generate(&GenConfig { users: 0, ..tiny(1) }).is_err());
        assert!(generate(&GenConfig { deletion_user: 1.5, ..tiny(1) }).is_err());
        assert!(generate(&GenConfig { channels: 1, ..tiny(1) }).is_err());
        assert!(generate(&GenConfig { propaganda_length: (20, 400), ..tiny(1) }).is_err());
    }

    #[test]
    fn propaganda_replies_resolve_to_matching_user_topics() {
        let s = generate(&tiny(5)).unwrap();
        let props = s.propaganda_accounts();
        for m in s.corpus.messages() {
            let Some(a) = &m.account_id else { continue };
            if !props.contains(a) {
                continue;
            }
            let t = s.corpus.trigger_of(m).expect("resolvable trigger");
            assert!(t.timestamp <= m.timestamp);
            assert!(!props.contains(t.account_id.as_ref().unwrap()));
            assert_eq!(s.topics.topic_of(&m.key()), s.topics.topic_of(&t.key()));
        }
    }

    #[test]
    fn deletions_are_exact() {
        let s = generate(&tiny(6)).unwrap();
        let p = &s.planted;
        assert_eq!(p.deleted_propaganda, (0.8 * p.propaganda_messages as f64).round() as usize);
        assert_eq!(p.deleted_user, (0.1 * p.user_messages as f64).round() as usize);
        let deleted = s.corpus.messages().filter(|m| m.deleted).count();
        assert_eq!(deleted, p.deleted_propaganda + p.deleted_user);
        assert_eq!(s.realtime.len() - s.historical.len(), deleted);
    }

    #[test]
    fn long_user_texts_are_unique_apart_from_memes() {
        let s = generate(&GenConfig { memes: 0, ..tiny(7) }).unwrap();
        let users = s.user_accounts();
        let mut seen = HashSet::new();
        for m in s.corpus.messages() {
            if m.account_id.as_ref().is_some_and(|a| users.contains(a)) {
                if let Some(t) = text::long_canonical(&m.text, 10) {
                    assert!(seen.insert(t), "repeated user text {:?}", m.text);
                }
            }
        }
    }

    #[test]
    fn events_start_the_day_after() {
        let s = generate(&GenConfig::small(2)).unwrap();
        for t in &s.config.topics {
            if let Some((first, last)) = t.window() {
                let span = &s.planted.topic_spans[&t.id];
                assert_eq!(span.first_day, first, "{}", t.id);
                assert!(span.last_day <= last + 1);
            }
        }
    }
}
