//! Synthetic cascade corpora with planted structure.
//!
//! Every pool user carries a latent vulnerability drawn from a bimodal
//! distribution. Rumor events recruit high-vulnerability users and grow
//! with their mean vulnerability; non-rumor events recruit
//! low-vulnerability users and shrink with it. The coupling strength is the
//! `correlation` knob ρ: at ρ=0 event size is independent of the recruited
//! crowd, at ρ=1 the within-class correlation between mean planted
//! vulnerability and log-virality is strong and signed by class.
//!
//! Cascades open with a short discussion among a fixed core of users, then
//! spread: each later post comes from a previously unseen user with a
//! class-dependent probability, high for rumors and low for non-rumors,
//! collapsing to even odds at ρ=0. Post count and distinct-user count
//! therefore decouple, and the spread width of a truncated cascade is a
//! genuine forecast rather than a function of its observed length.
//!
//! Emitted labels are recomputed from the generated cascades by the
//! `derive_*` operations, never copied from the planted latents, so the
//! label-derivation path is exercised end to end. A configurable fraction
//! of events is built from freshly minted users that appear nowhere else,
//! guaranteeing enough non-overlapping events for leakage-free splits.

use super::{parse_event, Label, LabelSet, PropagationEvent, RawEventRecord, RawPost};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub events: usize,
    /// Size of the shared user pool that overlapping events draw from.
    pub user_pool: usize,
    /// Fraction of events labeled rumor.
    pub rumor_fraction: f64,
    /// Mean post count per event before the vulnerability coupling.
    pub mean_cascade: f64,
    /// ρ: strength of the vulnerability-virality coupling, in [0,1].
    pub correlation: f64,
    /// Fraction of events built from exclusive (single-event) users.
    pub nonoverlap_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            events: 64,
            user_pool: 300,
            rumor_fraction: 0.5,
            mean_cascade: 12.0,
            correlation: 1.0,
            nonoverlap_fraction: 0.3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.events == 0 {
            return Err(SynthError::ConfigInvalid("events must be >= 1".into()));
        }
        if self.user_pool < 8 {
            return Err(SynthError::ConfigInvalid("user_pool must be >= 8".into()));
        }
        if !(0.0..=1.0).contains(&self.rumor_fraction) {
            return Err(SynthError::ConfigInvalid(
                "rumor_fraction must lie in [0,1]".into(),
            ));
        }
        if self.mean_cascade < 2.0 {
            return Err(SynthError::ConfigInvalid(
                "mean_cascade must be >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(SynthError::ConfigInvalid(
                "correlation must lie in [0,1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.nonoverlap_fraction) {
            return Err(SynthError::ConfigInvalid(
                "nonoverlap_fraction must lie in [0,1]".into(),
            ));
        }
        Ok(())
    }
}

const RUMOR_TOKENS: &[&str] = &[
    "breaking", "shocking", "exposed", "hidden", "truth", "leak", "urgent", "share", "cover",
    "conspiracy",
];
const NONRUMOR_TOKENS: &[&str] = &[
    "report", "official", "update", "study", "confirmed", "statement", "source", "data", "review",
    "announced",
];
const HIGH_VULN_TOKENS: &[&str] = &["must", "believe", "wake", "everyone", "spread", "now"];
const LOW_VULN_TOKENS: &[&str] = &["verify", "evidence", "check", "skeptical", "citation", "method"];
const NEUTRAL_TOKENS: &[&str] = &[
    "the", "a", "post", "thread", "today", "people", "news", "story", "link", "comment",
];

struct EventPlan {
    label: Label,
    exclusive: bool,
}

/// Generates a corpus and its derived labels. Deterministic given
/// (config, seed); per-event randomness runs on independent ChaCha streams
/// keyed by event index, so generation order never matters.
pub fn generate_synthetic_corpus(
    config: &SynthConfig,
    seed: u64,
) -> Result<(Vec<PropagationEvent>, LabelSet), SynthError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);

    // Latent vulnerability per pool user: bimodal, half low, half high.
    let low = Uniform::new(0.05, 0.35);
    let high = Uniform::new(0.65, 0.95);
    let pool: Vec<(String, f64)> = (0..config.user_pool)
        .map(|i| {
            let v = if master.gen_bool(0.5) {
                low.sample(&mut master)
            } else {
                high.sample(&mut master)
            };
            (format!("u{i:05}"), v)
        })
        .collect();

    let mut plans: Vec<EventPlan> = (0..config.events)
        .map(|_| EventPlan {
            label: if master.gen_bool(config.rumor_fraction) {
                Label::Rumor
            } else {
                Label::NonRumor
            },
            exclusive: false,
        })
        .collect();
    let n_exclusive = ((config.events as f64) * config.nonoverlap_fraction).ceil() as usize;
    let mut order: Vec<usize> = (0..config.events).collect();
    order.shuffle(&mut master);
    for &i in order.iter().take(n_exclusive) {
        plans[i].exclusive = true;
    }

    let events: Vec<PropagationEvent> = plans
        .iter()
        .enumerate()
        .map(|(idx, plan)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64 + 1);
            build_event(config, idx, plan, &pool, &mut rng)
        })
        .collect();

    let labels = LabelSet::derive(&events);
    Ok((events, labels))
}

fn build_event(
    config: &SynthConfig,
    idx: usize,
    plan: &EventPlan,
    pool: &[(String, f64)],
    rng: &mut ChaCha8Rng,
) -> PropagationEvent {
    // Event-level vulnerability center: rumors recruit high, non-rumors low.
    let c: f64 = match plan.label {
        Label::Rumor => rng.gen_range(0.55..0.95),
        Label::NonRumor => rng.gen_range(0.05..0.45),
    };

    // Size coupling: delta in [-1,1] measures how extreme the crowd is;
    // rumors grow with it, non-rumors shrink with it, scaled by rho.
    let delta = ((c - 0.5) / 0.45).clamp(-1.0, 1.0);
    let dir = match plan.label {
        Label::Rumor => 1.0,
        Label::NonRumor => -1.0,
    };
    let factor = 1.0 + config.correlation * 0.85 * delta * dir;
    let noise: f64 = Normal::new(0.0, 0.10).unwrap().sample(rng);
    let noise = noise.exp();
    let n_posts = ((config.mean_cascade * factor * noise).round() as usize).max(2);

    // Recruitment probability: the chance a post past the opening
    // discussion comes from a user unseen in this cascade. Rumors spread
    // wide, non-rumors churn within a narrow crowd, even odds at rho 0;
    // within a class, extreme crowds recruit harder.
    let ext = delta * dir;
    let p_new =
        (0.5 + config.correlation * (0.32 * dir + 0.10 * ext)).clamp(0.05, 0.95);

    // Candidate authors, recruited in order; at most one per post.
    let candidates: Vec<(String, f64)> = if plan.exclusive {
        let jitter: Normal<f64> = Normal::new(0.0, 0.08).unwrap();
        (0..n_posts)
            .map(|i| {
                let v = (c + jitter.sample(rng)).clamp(0.01, 0.99);
                (format!("x{idx:04}u{i}"), v)
            })
            .collect()
    } else {
        sample_pool_users(pool, n_posts, c, rng)
    };

    // Cascade tree: uniform random recursive tree with strictly increasing
    // timestamps. The opening posts assemble a core that keeps reposting;
    // afterwards a recruit quota of p_new times the remaining posts, spread
    // over random positions, brings in unseen users. The core scales with
    // the cascade so spread width keeps tracking crowd extremity within a
    // class.
    let core_users = ((n_posts as f64 * 0.18).round() as usize).clamp(2, n_posts);
    let core_posts = ((n_posts as f64 * rng.gen_range(0.25..0.40)).round() as usize)
        .clamp(core_users, n_posts);
    let late = n_posts - core_posts;
    let quota = ((p_new * late as f64 + rng.gen_range(-1.0..1.0)).round() as isize)
        .clamp(0, late as isize) as usize;
    let mut recruit_late: Vec<bool> = (0..late).map(|i| i < quota).collect();
    recruit_late.shuffle(rng);
    let mut active: Vec<usize> = Vec::with_capacity(n_posts);
    let mut posts: Vec<RawPost> = Vec::with_capacity(n_posts);
    let mut t = 0.0;
    for i in 0..n_posts {
        let recruit = i == 0
            || (i < core_posts && active.len() < core_users)
            || (i >= core_posts
                && recruit_late[i - core_posts]
                && active.len() < candidates.len());
        let author = if recruit {
            active.push(active.len());
            *active.last().unwrap()
        } else {
            active[rng.gen_range(0..active.len())]
        };
        let parent = if i == 0 { None } else { Some(rng.gen_range(0..i)) };
        let (user_id, v) = &candidates[author];
        let text = compose_text(plan.label, *v, rng);
        posts.push(RawPost {
            post_id: format!("e{idx:04}p{i}"),
            parent_id: parent.map(|p| format!("e{idx:04}p{p}")),
            user_id: user_id.clone(),
            ts: t,
            text,
        });
        t += rng.gen_range(5.0..60.0);
    }

    let record = RawEventRecord {
        event_id: format!("e{idx:04}"),
        label: plan.label,
        posts,
    };
    // Generated records go through the same validator as ingested ones.
    parse_event(record).expect("generated cascade is structurally valid")
}

/// Weighted sampling without replacement: weight falls off with distance of
/// the user's latent vulnerability from the event center.
fn sample_pool_users(
    pool: &[(String, f64)],
    count: usize,
    center: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, f64)> {
    let count = count.min(pool.len());
    let mut weights: Vec<f64> = pool
        .iter()
        .map(|(_, v)| (-18.0 * (v - center) * (v - center)).exp())
        .collect();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = weights.iter().sum();
        let mut target = rng.gen_range(0.0..total);
        let mut pick = 0;
        for (i, w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 && *w > 0.0 {
                pick = i;
                break;
            }
        }
        chosen.push(pool[pick].clone());
        weights[pick] = 0.0;
    }
    chosen
}

fn compose_text(label: Label, author_v: f64, rng: &mut ChaCha8Rng) -> String {
    let class_pool = match label {
        Label::Rumor => RUMOR_TOKENS,
        Label::NonRumor => NONRUMOR_TOKENS,
    };
    let vuln_pool = if author_v > 0.5 {
        HIGH_VULN_TOKENS
    } else {
        LOW_VULN_TOKENS
    };
    let n_tokens = rng.gen_range(6..=12);
    let mut words = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        let roll: f64 = rng.gen();
        let pool = if roll < 0.45 {
            class_pool
        } else if roll < 0.70 {
            vuln_pool
        } else {
            NEUTRAL_TOKENS
        };
        words.push(pool[rng.gen_range(0..pool.len())]);
    }
    words.join(" ")
}
