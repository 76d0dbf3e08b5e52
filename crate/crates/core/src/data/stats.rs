//! Per-class corpus statistics.

use super::{Label, LabelSet, PropagationEvent};
use serde::Serialize;
use std::collections::HashSet;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassStats {
    pub class: Label,
    pub instances: usize,
    pub avg_posts: Option<f64>,
    pub avg_users: Option<f64>,
    /// Mean vulnerability label over (event, labeled participant) pairs of
    /// the class; absent when no participant of the class is labeled.
    pub avg_vulnerability: Option<f64>,
    /// Mean unique-user count (raw, not log).
    pub avg_virality: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StatsTable {
    pub rows: Vec<ClassStats>,
}

pub fn corpus_stats(corpus: &[PropagationEvent], labels: &LabelSet) -> StatsTable {
    let rows = [Label::Rumor, Label::NonRumor]
        .into_iter()
        .map(|class| {
            let events: Vec<&PropagationEvent> =
                corpus.iter().filter(|e| e.label == class).collect();
            let instances = events.len();
            if instances == 0 {
                return ClassStats {
                    class,
                    instances,
                    avg_posts: None,
                    avg_users: None,
                    avg_vulnerability: None,
                    avg_virality: None,
                };
            }
            let n = instances as f64;
            let avg_posts = events.iter().map(|e| e.posts.len() as f64).sum::<f64>() / n;
            let user_counts: Vec<f64> = events
                .iter()
                .map(|e| e.unique_user_count() as f64)
                .collect();
            let avg_users = user_counts.iter().sum::<f64>() / n;
            let avg_virality = avg_users;

            let mut vuln_sum = 0.0;
            let mut vuln_n = 0usize;
            for event in &events {
                let users: HashSet<&str> =
                    event.posts.iter().map(|p| p.user_id.as_str()).collect();
                for user in users {
                    if let Some(v) = labels.vulnerability.get(user) {
                        vuln_sum += v;
                        vuln_n += 1;
                    }
                }
            }
            ClassStats {
                class,
                instances,
                avg_posts: Some(avg_posts),
                avg_users: Some(avg_users),
                avg_vulnerability: (vuln_n > 0).then(|| vuln_sum / vuln_n as f64),
                avg_virality: Some(avg_virality),
            }
        })
        .collect();
    StatsTable { rows }
}

impl StatsTable {
    /// Plain text table, one row per class.
    pub fn render(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
        }
        let mut out = String::from(
            "class      instances  avg_posts  avg_users  avg_vulnerability  avg_virality\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<10} {:<10} {:<10} {:<18} {}\n",
                row.class.as_str(),
                row.instances,
                cell(row.avg_posts),
                cell(row.avg_users),
                cell(row.avg_vulnerability),
                cell(row.avg_virality),
            ));
        }
        out
    }
}
