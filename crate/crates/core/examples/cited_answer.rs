//! Parses citation marks out of a model answer and renders it for display.

use cosearch::answer::{normalize, parse_citations, render};
use cosearch::model::{Locale, ReferenceCard};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let references: Vec<ReferenceCard> = ["Cast list", "Series wiki"]
        .iter()
        .enumerate()
        .map(|(i, title)| ReferenceCard {
            rank: i + 1,
            title: (*title).into(),
            link: format!("https://example.com/{}", i + 1),
            reference: format!("summary {}", i + 1),
            source_rank: i + 1,
        })
        .collect();

    let raw = "Zhang Ruoyun plays the lead [1] [2][2]. He also starred in season one [5].";
    let parsed = parse_citations(raw, references.len());
    for (i, segment) in parsed.answer.segments.iter().enumerate() {
        println!("segment {i}: {:?} -> {:?}", segment.text, segment.citations);
    }
    for warning in &parsed.warnings {
        println!("warning: {warning}");
    }
    println!("normalized: {}", normalize(raw, references.len()));
    println!();
    println!("{}", render(&parsed.answer, &references, Locale::En)?);
    Ok(())
}
