//! Converts a fetched page to plain text and applies the token cap that
//! bounds what the extraction prompt sees.

use cosearch::page::{count_tokens, html_to_text, truncate_tokens, TokenBudget};

fn main() {
    let body: String = (0..12_000).map(|i| format!("word{i} ")).collect();
    let html = format!(
        "<html><head><title>t</title><script>var x = 1;</script></head>\
         <body><h1>Long page</h1><p>{body}</p></body></html>"
    );

    let text = html_to_text(&html);
    println!("page text: {} tokens", count_tokens(&text));

    let capped = truncate_tokens(&text, TokenBudget::new(5000));
    println!("capped:    {} tokens", count_tokens(&capped));
    let prefix = text.split_whitespace().zip(capped.split_whitespace()).all(|(a, b)| a == b);
    println!("token prefix of the page: {prefix}");
    println!("ends with: {:?}", capped.split_whitespace().last());
}
