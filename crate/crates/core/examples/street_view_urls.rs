//! Source classification and geo metadata extraction from page URLs.
//!
//! cargo run --example street_view_urls

use viewmark::url_metadata::{classify_source, render_gsv_url, UrlParserRule, UrlRegistry};

fn main() {
    let registry = UrlRegistry::with_defaults()
        .register(UrlParserRule::new("mapillary", "mapillary.com", "^/app", "none"))
        .expect("valid rule");

    let urls = [
        "https://www.google.com/maps/@60.1699,24.9384,3a,75y,120.5h,92.3t/data=!3m6!1e1",
        "https://www.google.co.uk/maps/@51.5,-0.12,3a,90y,10h,80t",
        "https://www.google.com/maps/@91.0,24.9,3a,75y,10h,90t",
        "https://map.baidu.com/#panoid=09002200011601091&panotype=street",
        "https://www.flickr.com/photos/someone/5000000001",
        "https://www.mapillary.com/app/?pKey=123",
        "not a url",
    ];
    for url in urls {
        println!("{:<7} {:?}", classify_source(url).to_string(), registry.extract(url));
    }

    let geo = registry.parse_url(urls[0]).unwrap();
    println!("canonical form: {}", render_gsv_url(&geo));
}
