//! Response bodies with a fixed field order and 6-decimal floats. Every
//! body ends with a newline.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedItem {
    pub title: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedItem {
    pub title: String,
    pub url: String,
    pub score: f64,
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn number(x: f64) -> String {
    // -0.000000 would differ from 0.000000 for equal scores
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

pub fn query_body(generated: &[GeneratedItem], retrieved: &[RetrievedItem]) -> String {
    let mut out = String::from("{\"generated\":[");
    for (i, g) in generated.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"title\":{},\"score\":{}}}", string(&g.title), number(g.score));
    }
    out.push_str("],\"retrieved\":[");
    for (i, r) in retrieved.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"title\":{},\"url\":{},\"score\":{}}}",
            string(&r.title),
            string(&r.url),
            number(r.score)
        );
    }
    out.push_str("]}\n");
    out
}

pub fn error_body(code: &str, message: &str) -> String {
    format!("{{\"error\":{},\"message\":{}}}\n", string(code), string(message))
}

pub fn health_body(status: &str, model_version: &str, corpus_size: usize, uptime_seconds: f64) -> String {
    format!(
        "{{\"status\":{},\"model_version\":{},\"corpus_size\":{corpus_size},\"uptime_seconds\":{}}}\n",
        string(status),
        string(model_version),
        number(uptime_seconds)
    )
}
