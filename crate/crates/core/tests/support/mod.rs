//! Independent oracles and random generators shared by property tests and the
//! acceptance runner. Nothing here calls into the code under test except to
//! build inputs and read outputs.
#![allow(dead_code)]

use maod_core::component::{Component, ComponentId, ComponentType, DecomposedResponse, Link, Profile, Relation};
use maod_core::composer::{self, ManipulationEvent};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Brute force: a cycle exists iff some node can reach itself along a
/// non-empty path. Explores every simple path from every start node.
pub fn dfs_has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    fn walk(start: usize, at: usize, edges: &[(usize, usize)], visited: &mut Vec<bool>) -> bool {
        for &(s, t) in edges {
            if s != at {
                continue;
            }
            if t == start {
                return true;
            }
            if !visited[t] {
                visited[t] = true;
                if walk(start, t, edges, visited) {
                    return true;
                }
                visited[t] = false;
            }
        }
        false
    }
    (0..n).any(|start| {
        let mut visited = vec![false; n];
        visited[start] = true;
        walk(start, start, edges, &mut visited)
    })
}

pub fn oracle_has_empty(contents: &[String]) -> bool {
    contents.iter().any(|c| c.chars().all(char::is_whitespace))
}

/// Enumerates permutations in lexicographic order and returns the first in
/// which every edge target precedes its source.
pub fn permutation_topo_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    fn rec(n: usize, edges: &[(usize, usize)], cur: &mut Vec<usize>, used: &mut Vec<bool>) -> Option<Vec<usize>> {
        if cur.len() == n {
            let pos = |x: usize| cur.iter().position(|&y| y == x).unwrap();
            let ok = edges.iter().all(|&(s, t)| s == t || pos(t) < pos(s));
            return ok.then(|| cur.clone());
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                if let Some(found) = rec(n, edges, cur, used) {
                    return Some(found);
                }
                cur.pop();
                used[i] = false;
            }
        }
        None
    }
    rec(n, edges, &mut Vec::new(), &mut vec![false; n])
}

pub struct RandomGraph {
    pub response: DecomposedResponse,
    pub edges: Vec<(usize, usize)>,
    pub contents: Vec<String>,
}

/// A response of `1..=max_nodes` paragraphs with random links and some
/// blank contents.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> RandomGraph {
    let n = rng.random_range(1..=max_nodes);
    let density = rng.random_range(0.0..0.35);
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if rng.random_bool(density / (1.0 + (s == t) as u8 as f64 * 4.0)) {
                edges.push((s, t));
            }
        }
    }
    let contents: Vec<String> = (0..n)
        .map(|i| match rng.random_range(0..20) {
            0 => String::new(),
            1 => " \n\t".to_owned(),
            _ => format!("node {i}"),
        })
        .collect();
    let components = (0..n)
        .map(|i| {
            let id = ComponentId::from_ordinal(i + 1);
            let mut c = Component::new(id.clone(), ComponentType::new("Paragraph"), contents[i].clone());
            for &(s, t) in edges.iter().filter(|e| e.0 == i) {
                debug_assert_eq!(s, i);
                let relation = if rng.random_bool(0.5) { Relation::BelongsTo } else { Relation::RefersTo };
                c.links.push(Link { source: id.clone(), target: ComponentId::from_ordinal(t + 1), relation });
            }
            c
        })
        .collect();
    let response = DecomposedResponse {
        response_id: "r-graph".into(),
        source_text: String::new(),
        profile: Profile::Document,
        components,
    };
    RandomGraph { response, edges, contents }
}

const WORDS: &[&str] =
    &["alpha", "beta", "gamma", "delta", "résumé", "naïve", "x", "42", "`code`", "*em*", "[1]", "日本"];

fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..8);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Random Markdown-ish text mixing every block kind the parser knows,
/// with varied separators and line endings.
pub fn random_markdown<R: Rng>(rng: &mut R) -> String {
    let blocks = rng.random_range(1..10);
    let eol = if rng.random_bool(0.15) { "\r\n" } else { "\n" };
    let mut out = String::new();
    if rng.random_bool(0.1) {
        out.push_str(eol);
    }
    for b in 0..blocks {
        if b > 0 {
            let sep = rng.random_range(1..4);
            for _ in 0..sep {
                out.push_str(eol);
            }
            if rng.random_bool(0.1) {
                out.push_str("   ");
                out.push_str(eol);
            }
        }
        match rng.random_range(0..7) {
            0 => {
                let level = rng.random_range(1..=6);
                out.push_str(&"#".repeat(level));
                out.push(' ');
                out.push_str(&sentence(rng));
            }
            1 => {
                let items = rng.random_range(1..4);
                for i in 0..items {
                    if i > 0 {
                        out.push_str(eol);
                    }
                    let marker = if rng.random_bool(0.5) { "- ".to_owned() } else { format!("{}. ", i + 1) };
                    out.push_str(&marker);
                    out.push_str(&sentence(rng));
                }
            }
            2 => {
                out.push_str("```rust");
                out.push_str(eol);
                for _ in 0..rng.random_range(0..3) {
                    out.push_str("let x = 1;");
                    out.push_str(eol);
                    if rng.random_bool(0.3) {
                        out.push_str(eol);
                    }
                }
                out.push_str("```");
            }
            3 => {
                out.push_str("> ");
                out.push_str(&sentence(rng));
            }
            4 => {
                out.push_str(&format!("[{}] ", rng.random_range(1..9)));
                out.push_str(&sentence(rng));
            }
            _ => {
                out.push_str(&sentence(rng));
                if rng.random_bool(0.3) {
                    out.push_str(eol);
                    out.push_str(&sentence(rng));
                }
            }
        }
    }
    match rng.random_range(0..3) {
        0 => {}
        1 => out.push_str(eol),
        _ => {
            out.push_str(eol);
            out.push_str(eol);
        }
    }
    out
}

/// Replacement content that may itself look like markup.
pub fn random_edit<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..6) {
        0 => format!("# {}", sentence(rng)),
        1 => format!("- {}\n- {}", sentence(rng), sentence(rng)),
        2 => format!("```\n{}\n", sentence(rng)),
        3 => format!("{}\n\n{}", sentence(rng), sentence(rng)),
        4 => "  padded  ".to_owned(),
        _ => sentence(rng),
    }
}

/// Outcome of one single-event locality trial.
pub enum Trial {
    Held,
    Rejected,
    Violated(String),
}

/// Applies one random edit or toggle to a fresh decomposition and checks the
/// text outside the target is untouched. The expected surroundings are the
/// concatenated renderings of the other components, computed here directly.
pub fn locality_trial<R: Rng>(rng: &mut R, response: &DecomposedResponse) -> Trial {
    let n = response.components.len();
    let k = rng.random_range(0..n);
    let target = &response.components[k];
    let render = |c: &Component| format!("{}{}{}", c.prefix(), c.content, c.suffix());
    let before_text: String = response.components[..k].iter().map(render).collect();
    let after_text: String = response.components[k + 1..].iter().map(render).collect();

    let event = if rng.random_bool(0.5) {
        ManipulationEvent::manual_edit(1, target.id.clone(), random_edit(rng))
    } else {
        ManipulationEvent::toggle(1, target.id.clone(), false)
    };
    let edited = match composer::apply(response, 0, &event) {
        Ok(r) => r,
        Err(_) => return Trial::Rejected,
    };
    let text = composer::recompose(&edited, 1).text;
    let fits = text.len() >= before_text.len() + after_text.len()
        && text.starts_with(&before_text)
        && text.ends_with(&after_text);
    if !fits {
        return Trial::Violated(format!("{:?} on {}: {:?}", event.action, target.id, text));
    }
    let middle = &text[before_text.len()..text.len() - after_text.len()];
    let expected_middle = match &event.action {
        composer::EventAction::ManualEdit { content } => {
            vec![format!("{}{}{}", target.prefix(), content, target.suffix())]
        }
        _ => vec![String::new(), composer::ORPHAN_JOINER.to_owned()],
    };
    if expected_middle.iter().any(|m| m == middle) {
        Trial::Held
    } else {
        Trial::Violated(format!("{:?} on {}: middle {:?}", event.action, target.id, middle))
    }
}

/// Adapter constructor that records every vendor parameter map it is given
/// and every request its adapters receive.
pub mod capture {
    use std::sync::{Arc, Mutex};

    use maod_core::gateway::{
        AdapterConstructor, GatewayError, GenerateRequest, ModelAdapter, VendorMetadata, VendorParams,
    };

    #[derive(Default)]
    pub struct Log {
        pub constructed: Mutex<Vec<VendorParams>>,
        pub requests: Mutex<Vec<VendorParams>>,
    }

    struct Capturing(Arc<Log>);

    impl ModelAdapter for Capturing {
        fn generate(&self, request: GenerateRequest<'_>) -> Result<String, GatewayError> {
            self.0.requests.lock().unwrap().push(request.params.clone());
            Ok(request.prompt.to_owned())
        }
    }

    pub fn constructor(log: Arc<Log>) -> AdapterConstructor {
        Arc::new(move |_meta: &VendorMetadata, params: &VendorParams| {
            log.constructed.lock().unwrap().push(params.clone());
            Ok(Arc::new(Capturing(log.clone())) as Arc<dyn ModelAdapter>)
        })
    }
}
