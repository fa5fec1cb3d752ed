//! Template-driven synthetic dialog generators.
//!
//! Four kinds are available:
//!
//! - `open_close`: two-turn dialogs with only an opening and a closing exchange,
//! - `task`: short password-reset support flows, including partial dialogs,
//! - `task_plus`: `task` dialogs spliced with opening/closing exchanges,
//! - `hh_like`: long, noisy agent-style dialogs with identity collection and
//!   off-task turns. This is a stand-in for real human-human transcripts.
//!
//! Every generator is a pure function of its [`CorpusSpec`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{splice_plus, Dialog, Turn};
use crate::rng::{stream, Rng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    OpenClose,
    Task,
    TaskPlus,
    HhLike,
}

impl GeneratorKind {
    pub fn default_count(self) -> usize {
        match self {
            GeneratorKind::OpenClose => 10,
            GeneratorKind::Task => 520,
            GeneratorKind::TaskPlus => 184,
            GeneratorKind::HhLike => 746,
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            GeneratorKind::OpenClose => "oc",
            GeneratorKind::Task | GeneratorKind::TaskPlus => "task",
            GeneratorKind::HhLike => "hh",
        }
    }
}

/// A user turn (any of several surface variants) and its fixed system reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub user: Vec<String>,
    pub system: String,
}

/// One support problem: how users phrase it, the reset offer and the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub phrasings: Vec<String>,
    pub offer: String,
    /// May contain `{url}`.
    pub solution: String,
    /// Relative frequency among the problems.
    #[serde(default = "one")]
    pub weight: usize,
}

fn one() -> usize {
    1
}

/// Optional replacements for the built-in template pools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolOverrides {
    pub greetings: Option<Vec<Exchange>>,
    pub closings: Option<Vec<Exchange>>,
    pub problems: Option<Vec<Problem>>,
    pub accepts: Option<Vec<String>>,
    pub rejects: Option<Vec<String>>,
    pub complications: Option<Vec<String>>,
    pub urls: Option<Vec<String>>,
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub kind: GeneratorKind,
    pub seed: u64,
    /// Number of dialogs; defaults per kind.
    #[serde(default)]
    pub count: Option<usize>,
    /// Fraction of `task` dialogs truncated to a shorter prefix.
    #[serde(default)]
    pub partial_rate: Option<f64>,
    /// Size of the `open_close` corpus sampled by `task_plus`.
    #[serde(default)]
    pub open_close_count: Option<usize>,
    #[serde(default)]
    pub id_prefix: Option<String>,
    #[serde(default)]
    pub pools: PoolOverrides,
}

impl CorpusSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        CorpusSpec {
            kind,
            seed,
            count: None,
            partial_rate: None,
            open_close_count: None,
            id_prefix: None,
            pools: PoolOverrides::default(),
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    pub fn with_prefix(mut self, prefix: &str) -> Self {
        self.id_prefix = Some(prefix.into());
        self
    }

    pub fn count(&self) -> usize {
        self.count.unwrap_or(self.kind.default_count())
    }

    fn prefix(&self) -> String {
        self.id_prefix.clone().unwrap_or_else(|| self.kind.id_prefix().into())
    }

    fn id(&self, i: usize) -> String {
        format!("{}-{:04}", self.prefix(), i + 1)
    }

    fn rng(&self) -> Rng {
        stream(self.seed, Stream::Generation, self.kind as u64)
    }

    fn expect_kind(&self, want: GeneratorKind) -> Result<()> {
        if self.kind != want {
            return Err(Error::Config(format!("spec kind {:?} given to the {want:?} generator", self.kind)));
        }
        Ok(())
    }
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<Dialog>> {
    match spec.kind {
        GeneratorKind::OpenClose => generate_open_close(spec),
        GeneratorKind::Task => generate_task(spec),
        GeneratorKind::TaskPlus => generate_task_plus(spec),
        GeneratorKind::HhLike => generate_hh_like(spec),
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn exchange(users: &[&str], system: &str) -> Exchange {
    Exchange {
        user: strings(users),
        system: system.into(),
    }
}

fn default_greetings() -> Vec<Exchange> {
    vec![
        exchange(&["Hello.", "Hello", "hello!"], "Hello. What can I help you?"),
        exchange(&["Hi.", "Hi", "hi there"], "Hi. What can I help you?"),
        exchange(&["Good morning.", "good morning", "Morning!"], "Good morning. How can I help you today?"),
        exchange(&["Good afternoon.", "good afternoon"], "Good afternoon. How may I help you?"),
        exchange(&["Hey there.", "Hey", "hey!"], "Hey! What can I do for you?"),
        exchange(&["Good evening.", "good evening"], "Good evening. What brings you here today?"),
    ]
}

fn default_closings() -> Vec<Exchange> {
    vec![
        exchange(&["Okay. Thank you.", "Okay thank you.", "ok thanks"], "Sure thing! Have a great day."),
        exchange(&["Thanks a lot.", "thanks a lot!"], "You're welcome! Have a nice day."),
        exchange(&["Bye.", "bye", "Bye bye."], "Goodbye! Take care."),
        exchange(&["That's all, thanks.", "that is all"], "Glad I could help. Bye!"),
        exchange(&["Thank you so much.", "thank you so much!"], "My pleasure! Have a wonderful day."),
        exchange(&["Great, thanks!", "great thanks"], "Anytime! See you."),
    ]
}

fn default_problems() -> Vec<Problem> {
    let p = |phrasings: &[&str], offer: &str, solution: &str| Problem {
        phrasings: strings(phrasings),
        offer: offer.into(),
        solution: solution.into(),
        weight: 1,
    };
    let mut problems = vec![
        p(
            &[
                "I forgot my password",
                "forgot password",
                "i can't remember my password",
                "I forgot my password and now I have locked my account for 30 days",
                "need to reset my password",
            ],
            "Okay, you don't need to remember your password, we can reset it. Would you like to try that?",
            "SOLUTION: To reset your password, go to {url}. Was that helpful?",
        ),
        p(
            &[
                "my account is locked",
                "I got locked out of my account",
                "account locked after too many attempts",
                "it says my account has been blocked",
            ],
            "Your account may be locked for security reasons. Would you like to unlock it now?",
            "SOLUTION: To unlock your account, go to {url} and verify your identity. Was that helpful?",
        ),
        p(
            &[
                "my windows hello pin is not working",
                "forgot my pin",
                "can't sign in with my pin",
                "pin reset",
            ],
            "You can reset your PIN from the sign-in screen. Would you like instructions?",
            "SOLUTION: On the sign-in screen, select I forgot my PIN and follow the steps. Was that helpful?",
        ),
        p(
            &[
                "I changed my phone number and can't get the security code",
                "I don't get the verification code",
                "my security info is out of date",
                "the number on my account is no longer active",
            ],
            "We can help you update your security info. Would you like to try that?",
            "SOLUTION: To update your security info, go to {url} and add a new phone number. Was that helpful?",
        ),
        p(
            &[
                "I think someone hacked my account",
                "my account was compromised",
                "someone changed my password",
                "there are emails sent from my account that I didn't write",
            ],
            "It sounds like your account may be compromised. Would you like to recover it?",
            "SOLUTION: To recover your account, go to {url} and fill out the recovery form. Was that helpful?",
        ),
    ];
    // Password resets dominate; the other problems keep the action
    // inventory large enough for nine distractors.
    problems[0].weight = 6;
    problems
}

const ESCALATE_AFTER_OFFER: &str = "Let's connect you to a person who can help you.";
const ESCALATE_AFTER_SOLUTION: &str = "I'm sorry that didn't work. Let's connect you to a person who can help you.";

fn default_accepts() -> Vec<String> {
    strings(&["Yes please", "yes", "sure", "ok let's try", "yeah", "yes, please help"])
}

fn default_rejects() -> Vec<String> {
    strings(&[
        "already tried that",
        "no",
        "no that doesn't work",
        "I want to talk to a person",
        "that won't help",
    ])
}

fn default_complications() -> Vec<String> {
    strings(&[
        "it won't let me reset my password",
        "I don't have access to my email either",
        "it says my account doesn't exist",
        "the link is not working",
        "I never received the code",
    ])
}

fn nonempty<T: Clone>(name: &str, over: &Option<Vec<T>>, default: impl FnOnce() -> Vec<T>) -> Result<Vec<T>> {
    let pool = over.clone().unwrap_or_else(default);
    if pool.is_empty() {
        return Err(Error::Config(format!("template pool {name:?} is empty")));
    }
    Ok(pool)
}

fn check_exchanges(name: &str, pool: &[Exchange]) -> Result<()> {
    if pool.iter().any(|e| e.user.is_empty() || e.system.trim().is_empty()) {
        return Err(Error::Config(format!("template pool {name:?} has an exchange without variants")));
    }
    Ok(())
}

/// Cycles through a pool in shuffled order so that every entry is used
/// before any repeats.
struct Deck {
    order: Vec<usize>,
    next: usize,
}

impl Deck {
    fn new(len: usize) -> Self {
        Deck {
            order: (0..len).collect(),
            next: len,
        }
    }

    fn draw(&mut self, rng: &mut Rng) -> usize {
        if self.next == self.order.len() {
            self.order.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.order[self.next - 1]
    }
}

fn pick<'a>(pool: &'a [String], rng: &mut Rng) -> &'a str {
    &pool[rng.random_range(0..pool.len())]
}

fn fill(template: &str, slot: &str, value: &str) -> String {
    template.replace(slot, value)
}

/// Two turns per dialog: a greeting exchange then a closing exchange.
pub fn generate_open_close(spec: &CorpusSpec) -> Result<Vec<Dialog>> {
    spec.expect_kind(GeneratorKind::OpenClose)?;
    open_close_dialogs(spec, spec.count(), &mut spec.rng())
}

fn open_close_dialogs(spec: &CorpusSpec, count: usize, rng: &mut Rng) -> Result<Vec<Dialog>> {
    let greetings = nonempty("greetings", &spec.pools.greetings, default_greetings)?;
    let closings = nonempty("closings", &spec.pools.closings, default_closings)?;
    check_exchanges("greetings", &greetings)?;
    check_exchanges("closings", &closings)?;
    let (mut gd, mut cd) = (Deck::new(greetings.len()), Deck::new(closings.len()));
    let prefix = spec.id_prefix.clone().unwrap_or_else(|| "oc".into());
    Ok((0..count)
        .map(|i| {
            let g = &greetings[gd.draw(rng)];
            let c = &closings[cd.draw(rng)];
            Dialog {
                id: format!("{prefix}-{:04}", i + 1),
                turns: vec![
                    Turn::new(pick(&g.user, rng), g.system.clone()),
                    Turn::new(pick(&c.user, rng), c.system.clone()),
                ],
                source: "open_close".into(),
            }
        })
        .collect())
}

/// Support flows: problem → offer, then accept → solution (optionally
/// followed by a complication → escalation) or reject → escalation. A
/// fraction of dialogs is truncated to a shorter prefix; those carry the
/// source tag `task:partial`.
pub fn generate_task(spec: &CorpusSpec) -> Result<Vec<Dialog>> {
    spec.expect_kind(GeneratorKind::Task)?;
    task_dialogs(spec, &mut spec.rng())
}

fn task_dialogs(spec: &CorpusSpec, rng: &mut Rng) -> Result<Vec<Dialog>> {
    let o = &spec.pools;
    let problems = nonempty("problems", &o.problems, default_problems)?;
    if problems.iter().any(|p| p.phrasings.is_empty() || p.weight == 0) {
        return Err(Error::Config("template pool \"problems\" has a problem without phrasings or weight".into()));
    }
    let weighted: Vec<&Problem> = problems.iter().flat_map(|p| core::iter::repeat_n(p, p.weight)).collect();
    let accepts = nonempty("accepts", &o.accepts, default_accepts)?;
    let rejects = nonempty("rejects", &o.rejects, default_rejects)?;
    let complications = nonempty("complications", &o.complications, default_complications)?;
    let urls = nonempty("urls", &o.urls, || strings(&["xx_url_xx"]))?;
    let partial_rate = spec.partial_rate.unwrap_or(0.25);
    if !(0.0..=1.0).contains(&partial_rate) {
        return Err(Error::Config(format!("partial_rate {partial_rate} outside [0, 1]")));
    }

    let mut deck = Deck::new(weighted.len());
    let mut out = Vec::with_capacity(spec.count());
    for i in 0..spec.count() {
        let p = weighted[deck.draw(rng)];
        let mut turns = vec![Turn::new(pick(&p.phrasings, rng), p.offer.clone())];
        if rng.random_bool(0.7) {
            let solution = fill(&p.solution, "{url}", pick(&urls, rng));
            turns.push(Turn::new(pick(&accepts, rng), solution));
            if rng.random_bool(0.3) {
                turns.push(Turn::new(pick(&complications, rng), ESCALATE_AFTER_SOLUTION));
            }
        } else {
            turns.push(Turn::new(pick(&rejects, rng), ESCALATE_AFTER_OFFER));
        }
        let mut source = "task";
        if rng.random_bool(partial_rate) {
            let keep = rng.random_range(1..turns.len());
            turns.truncate(keep);
            source = "task:partial";
        }
        out.push(Dialog {
            id: spec.id(i),
            turns,
            source: source.into(),
        });
    }
    Ok(out)
}

/// `task` dialogs extended with an opening and a closing exchange sampled
/// from a freshly generated `open_close` corpus.
pub fn generate_task_plus(spec: &CorpusSpec) -> Result<Vec<Dialog>> {
    spec.expect_kind(GeneratorKind::TaskPlus)?;
    let mut rng = spec.rng();
    let task = task_dialogs(spec, &mut rng)?;
    let oc_spec = CorpusSpec {
        kind: GeneratorKind::OpenClose,
        id_prefix: None,
        ..spec.clone()
    };
    let oc = open_close_dialogs(&oc_spec, spec.open_close_count.unwrap_or(10), &mut rng)?;
    splice_plus(&task, &oc, &mut rng)
}

/// Long agent-led support dialogs: greeting, identity collection, system
/// details, troubleshooting questions, a resolution, randomly interleaved
/// off-task chatter and sometimes an extra wrap-up exchange.
pub fn generate_hh_like(spec: &CorpusSpec) -> Result<Vec<Dialog>> {
    spec.expect_kind(GeneratorKind::HhLike)?;
    let names = nonempty("names", &spec.pools.names, || strings(&["xx_firstname_xx"]))?;
    let urls = nonempty("urls", &spec.pools.urls, || strings(&["xx_url_xx"]))?;
    let mut rng = spec.rng();
    let rng = &mut rng;

    let hellos = strings(&["hi", "hello", "hi there", "hello i need help"]);
    let problems = strings(&[
        "hello i am having trouble accessing my laptop i forgot the password",
        "i forgot the password i changed the pw on my account, but the computer is still not able to be accessed",
        "i can't log into my account, it keeps saying the password is wrong",
        "my account got locked and i can't reset the password from the website",
        "i changed my phone number and now i can't get the security code to sign in",
    ]);
    let oses = strings(&["windows 10", "windows 11", "windows 8.1", "i think windows 10 home"]);
    let errors = strings(&[
        "the password is not working i forgot the pw, i tried to reset the pw from the account",
        "it says the password is incorrect",
        "it says your account has been locked",
        "there is no error it just goes back to the sign in screen",
    ]);
    let account_types = strings(&[
        "i am not sure i thought it was a microsoft account but the pw didnt change",
        "microsoft account",
        "local account i think",
        "no idea, how do i check?",
    ]);
    let small_talk = [
        ("are you a real person?", "yes, i'm a real person and i'm here to help you with your concern."),
        ("sorry my internet is slow", "no worries, take your time."),
        ("how long will this take?", "it should only take a few minutes, thank you for your patience."),
        ("thanks for being patient with me", "you're welcome, i'm happy to help."),
        ("hold on, let me get my phone", "sure, i'll wait."),
        ("is it raining where you are?", "haha, it's sunny here today! let's get your account fixed."),
    ];

    let mut out = Vec::with_capacity(spec.count());
    for i in 0..spec.count() {
        let name = pick(&names, rng).to_string();
        let url = pick(&urls, rng).to_string();
        let mut core = vec![
            Turn::new(
                pick(&hellos, rng),
                format!("hi, thanks for visiting answer desk! i'm {name} q. how may i help you today?"),
            ),
            Turn::new(
                pick(&problems, rng),
                "oh that's bad, that might be very important to you but no worries i will help you out with your issue. to start with may i have your complete name please?",
            ),
            Turn::new(
                format!("my name is {name} {name}"),
                format!("that's okay {name}. may i also know your email address and phone number please?"),
            ),
            Turn::new(
                "my email, xx_email_xx, xx_phonenumber_xx",
                format!("thank you for the information. {name} what is your current operating system?"),
            ),
            Turn::new(
                pick(&oses, rng),
                "may i know what is the error message you received upon trying to unlock your computer?",
            ),
            Turn::new(pick(&errors, rng), "is it a local account or microsoft account?"),
            Turn::new(
                pick(&account_types, rng),
                "can you send me the email so that i can check if it is microsoft account?",
            ),
        ];
        if rng.random_bool(0.5) {
            core.push(Turn::new(
                "xx_email_xx though i think i may have created one by accident",
                "since we're unable to know what exactly happening to your computer. i will provide you our technical phone support so that you will be well instructed on what you are going to do to get your computer work again. would that be okay with you?",
            ));
        } else {
            core.push(Turn::new(
                "xx_email_xx",
                format!("thank you. you can reset the password of your microsoft account at {url}, then sign in to your computer with the new password. would you like to try that now?"),
            ));
        }
        core.push(Turn::new(pick(&strings(&["fine", "okay", "sure", "yes"]), rng), "one moment please."));

        let chatter = rng.random_range(0..=5);
        for _ in 0..chatter {
            let (u, s) = small_talk[rng.random_range(0..small_talk.len())];
            // never before the opening exchange
            let at = rng.random_range(1..=core.len());
            core.insert(at, Turn::new(u, s));
        }
        if rng.random_bool(0.3) {
            core.push(Turn::new(
                "ok",
                "is there anything else i can help you with today?",
            ));
        }
        core.push(Turn::new(
            pick(&strings(&["no that's all thank you", "thank you", "thanks bye"]), rng),
            "thank you for contacting answer desk, have a great day!",
        ));
        out.push(Dialog {
            id: spec.id(i),
            turns: core,
            source: "hh_like".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{action_inventory, compute_stats};
    use alloc::collections::BTreeSet;

    #[test]
    fn open_close_shape() {
        let ds = generate(&CorpusSpec::new(GeneratorKind::OpenClose, 1)).unwrap();
        assert_eq!(ds.len(), 10);
        assert!(ds.iter().all(|d| d.turns.len() == 2));
        let s = compute_stats(&ds).unwrap();
        assert_eq!(s.avg_dialog_len, 2.0);
        // the deck guarantees enough distinct actions for 9 distractors
        assert!(action_inventory(&ds).len() >= 10);
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [
            GeneratorKind::OpenClose,
            GeneratorKind::Task,
            GeneratorKind::TaskPlus,
            GeneratorKind::HhLike,
        ] {
            let spec = CorpusSpec::new(kind, 9).with_count(30);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            let other = CorpusSpec::new(kind, 10).with_count(30);
            assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
        }
    }

    #[test]
    fn task_length_and_contract() {
        let ds = generate(&CorpusSpec::new(GeneratorKind::Task, 3).with_count(2000)).unwrap();
        let s = compute_stats(&ds).unwrap();
        assert!((s.avg_dialog_len - 1.93).abs() < 0.3, "avg {}", s.avg_dialog_len);
        let problems = default_problems();
        let solutions: BTreeSet<String> = problems
            .iter()
            .map(|p| fill(&p.solution, "{url}", "xx_url_xx"))
            .collect();
        for d in ds.iter().filter(|d| d.source == "task") {
            let last = &d.turns.last().unwrap().system;
            assert!(
                solutions.contains(last) || last == ESCALATE_AFTER_OFFER || last == ESCALATE_AFTER_SOLUTION,
                "{last}"
            );
        }
        assert!(ds.iter().any(|d| d.source == "task:partial"));
        // no general conversation
        let oc: BTreeSet<String> = default_greetings()
            .into_iter()
            .chain(default_closings())
            .map(|e| e.system)
            .collect();
        assert!(ds.iter().flat_map(|d| &d.turns).all(|t| !oc.contains(&t.system)));
        assert!(action_inventory(&ds).len() >= 10);
    }

    #[test]
    fn task_plus_adds_two_turns_and_starts_with_greeting() {
        let plain = CorpusSpec::new(GeneratorKind::Task, 5).with_count(200);
        let plus = CorpusSpec {
            kind: GeneratorKind::TaskPlus,
            ..plain.clone()
        };
        let p = generate(&plus).unwrap();
        let greetings: BTreeSet<String> = default_greetings().into_iter().flat_map(|e| e.user).collect();
        assert!(p.iter().all(|d| greetings.contains(&d.turns[0].user)));
        let base = task_dialogs(&plain, &mut plus.rng()).unwrap();
        let a = compute_stats(&base).unwrap().avg_dialog_len;
        let b = compute_stats(&p).unwrap().avg_dialog_len;
        assert!((b - a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hh_like_is_long() {
        let ds = generate(&CorpusSpec::new(GeneratorKind::HhLike, 2).with_count(1000)).unwrap();
        let s = compute_stats(&ds).unwrap();
        assert!((s.avg_dialog_len - 12.8).abs() < 0.5, "avg {}", s.avg_dialog_len);
        assert!(s.avg_system_len > s.avg_user_len);
    }

    #[test]
    fn empty_pool_is_config_error() {
        let mut spec = CorpusSpec::new(GeneratorKind::OpenClose, 1);
        spec.pools.greetings = Some(vec![]);
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
        let mut t = CorpusSpec::new(GeneratorKind::Task, 1);
        t.pools.accepts = Some(vec![]);
        assert!(matches!(generate(&t), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let spec = CorpusSpec::new(GeneratorKind::Task, 1);
        assert!(generate_open_close(&spec).is_err());
    }

    #[test]
    fn spec_parses_from_json() {
        let s: CorpusSpec = serde_json::from_str(r#"{"kind":"task_plus","seed":4,"count":12}"#).unwrap();
        assert_eq!(s.kind, GeneratorKind::TaskPlus);
        assert_eq!(s.count(), 12);
    }
}
