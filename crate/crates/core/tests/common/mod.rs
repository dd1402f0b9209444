//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde_json::json;
use tokio::sync::oneshot;
use viewmark::coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};
use viewmark::geometry::{polygon_area, polygon_bbox};
use viewmark::png_io::synthetic_png;
use viewmark::service::{PayloadAnnotation, Service, SubmissionPayload, Viewport};
use viewmark::storage::StoreOptions;
use viewmark::url_metadata::UrlRegistry;
use viewmark::{CategoryDef, CategorySet, GeoMetadata, Point, Store};

pub const IMG_W: u32 = 64;
pub const IMG_H: u32 = 48;

pub fn categories() -> CategorySet {
    CategorySet::new(vec![
        CategoryDef::new(1, "directed", "camera", "#e6194b").with_shortcut('1'),
        CategoryDef::new(2, "round", "camera", "#4363d8").with_shortcut('2'),
    ])
    .unwrap()
}

pub fn open_store(dir: &Path) -> Store {
    Store::open_with(dir, StoreOptions { sync: false }).unwrap().0
}

pub fn service(dir: &Path) -> Service {
    Service::new(open_store(dir), categories(), UrlRegistry::with_defaults())
}

pub fn png(seed: u64) -> Vec<u8> {
    synthetic_png(IMG_W, IMG_H, seed)
}

pub fn triangle(dx: f64) -> Vec<Point> {
    vec![Point::new(2.0 + dx, 2.0), Point::new(30.0 + dx, 4.0), Point::new(10.0 + dx, 40.0)]
}

pub fn annotation(category: &str, polygon: Vec<Point>) -> PayloadAnnotation {
    PayloadAnnotation { category_name: category.into(), polygon, attributes: BTreeMap::new() }
}

/// A valid 64x48 submission: one directed triangle, image chosen by `seed`.
pub fn payload(annotator: &str, seed: u64, captured_second: u32, page_url: &str) -> SubmissionPayload {
    SubmissionPayload::new(
        annotator,
        &format!("2021-03-01T10:{:02}:{:02}Z", captured_second / 60 % 60, captured_second % 60),
        page_url,
        Viewport { width: f64::from(IMG_W), height: f64::from(IMG_H), device_pixel_ratio: 1.0 },
        &png(seed),
        vec![annotation("directed", triangle(0.0))],
    )
}

pub struct TestServer {
    pub base: String,
    pub client: reqwest::Client,
    _stop: oneshot::Sender<()>,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

/// Serves `svc` on an ephemeral loopback port until the handle is dropped.
pub async fn spawn(svc: Service) -> TestServer {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    let router = svc.router();
    tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
            .unwrap();
    });
    TestServer { base: format!("http://{addr}"), client: reqwest::Client::new(), _stop: tx }
}

/// A loopback port that was free a moment ago.
pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Writes `categories.json` and `server.json` into `dir`; returns the config path.
pub fn write_config(dir: &Path, data: &Path, bind: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("cats.json"), categories().to_canonical_json()).unwrap();
    let cfg = json!({
        "bind": bind,
        "data_dir": data,
        "categories_path": "cats.json",
    });
    let path = dir.join("server.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

/// Number of unit pixels whose centre lies inside `poly` (even-odd rule).
///
/// Independent of the shoelace formula: scans every pixel row, intersects the
/// row's centre line with each edge and counts centres between crossing pairs.
pub fn raster_count(poly: &[Point]) -> u64 {
    let y_min = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y_max = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0u64;
    let mut row = (y_min - 0.5).floor() as i64;
    let mut xs = Vec::new();
    while (row as f64) + 0.5 <= y_max {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            if (a.y <= yc) != (b.y <= yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let first = (pair[0] - 0.5).ceil() as i64;
            let past = (pair[1] - 0.5).ceil() as i64;
            total += (past - first).max(0) as u64;
        }
        row += 1;
    }
    total
}

/// Random star-shaped (hence simple) polygon around `(cx, cy)`.
///
/// One vertex per equal angular sector, jittered inside it, so consecutive
/// vertices are always less than half a turn apart.
pub fn star_polygon(rng: &mut impl Rng, cx: f64, cy: f64, r_max: f64, n: usize) -> Vec<Point> {
    let sector = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|i| {
            let t = (i as f64 + rng.gen_range(0.1..0.9)) * sector;
            let r = rng.gen_range(0.4 * r_max..=r_max);
            Point::new(cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

fn random_geo(rng: &mut impl Rng) -> GeoMetadata {
    GeoMetadata {
        latitude: rng.gen_range(-90.0..=90.0),
        longitude: rng.gen_range(-180.0..=180.0),
        heading: rng.gen_range(0.0..360.0),
        pitch: rng.gen_range(0.0..=180.0),
        fov: rng.gen_range(1.0..=180.0),
        provider: "google_streetview".into(),
    }
}

/// A random dataset that satisfies every invariant.
pub fn random_dataset(rng: &mut impl Rng) -> CocoDataset {
    let n_cats = rng.gen_range(1..=5u64);
    let cat_base = rng.gen_range(1..100u64);
    let categories: Vec<CocoCategory> = (0..n_cats)
        .map(|i| CocoCategory::new(cat_base + i * 3, &format!("class-{i}-{}", rng.gen_range(0..1000)), "thing"))
        .collect();
    let n_images = rng.gen_range(0..=8u64);
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut ann_id = rng.gen_range(1..50u64);
    let mut next_image = rng.gen_range(1..10u64);
    for _ in 0..n_images {
        let width = rng.gen_range(16..=4000u32);
        let height = rng.gen_range(16..=3000u32);
        let id = next_image;
        next_image += rng.gen_range(1..4u64);
        let mut img = CocoImage {
            id,
            file_name: format!("{:064x}.png", rng.gen::<u128>()),
            width,
            height,
            source_url: String::new(),
            captured_at: String::new(),
            annotator_id: String::new(),
            geo: None,
            extra: BTreeMap::new(),
        };
        if rng.gen_bool(0.7) {
            img.source_url = format!("https://example.org/{}", rng.gen::<u32>());
            img.captured_at = "2020-09-14T12:00:00Z".into();
            img.annotator_id = format!("person{}", rng.gen_range(1..9));
        }
        if rng.gen_bool(0.3) {
            img.geo = Some(random_geo(rng));
        }
        for _ in 0..rng.gen_range(0..5) {
            let r = rng.gen_range(3.0..(f64::from(width.min(height)) / 2.0));
            let cx = rng.gen_range(r..f64::from(width) - r);
            let cy = rng.gen_range(r..f64::from(height) - r);
            let n = rng.gen_range(3..12);
            let poly = star_polygon(rng, cx, cy, r, n);
            let mut attributes = BTreeMap::new();
            if rng.gen_bool(0.2) {
                attributes.insert("occluded".to_owned(), "yes".to_owned());
            }
            annotations.push(CocoAnnotation {
                id: ann_id,
                image_id: id,
                category_id: categories[rng.gen_range(0..categories.len())].id,
                segmentation: vec![poly.iter().flat_map(|p| [p.x, p.y]).collect()],
                area: polygon_area(&poly).unwrap(),
                bbox: polygon_bbox(&poly).unwrap(),
                iscrowd: 0,
                attributes,
                extra: BTreeMap::new(),
            });
            ann_id += rng.gen_range(1..3);
        }
        images.push(img);
    }
    let mut info = BTreeMap::new();
    info.insert("description".to_owned(), format!("random dataset {}", rng.gen::<u16>()));
    info.insert("version".to_owned(), "1.0".to_owned());
    CocoDataset {
        info,
        licenses: if rng.gen_bool(0.5) { vec![json!({"id": 1, "name": "CC BY 4.0"})] } else { vec![] },
        images,
        annotations,
        categories,
        extra: BTreeMap::new(),
    }
}

/// One injected invariant break and the violation code it must trigger.
pub struct Mutation {
    pub name: &'static str,
    pub expect: viewmark::ViolationCode,
    pub apply: fn(&mut CocoDataset),
}

/// Invariant breaks applicable to any dataset with at least one image,
/// annotation and category.
pub fn mutation_catalogue() -> Vec<Mutation> {
    use viewmark::ViolationCode as C;
    fn max_cat(ds: &CocoDataset) -> u64 {
        ds.categories.iter().map(|c| c.id).max().unwrap_or(0)
    }
    vec![
        Mutation { name: "zero image id", expect: C::ZeroId, apply: |d| d.images[0].id = 0 },
        Mutation {
            name: "duplicate image id",
            expect: C::DuplicateImageId,
            apply: |d| {
                let mut c = d.images[0].clone();
                c.file_name = "copy.png".into();
                d.images.push(c);
            },
        },
        Mutation {
            name: "duplicate annotation id",
            expect: C::DuplicateAnnotationId,
            apply: |d| {
                let c = d.annotations[0].clone();
                d.annotations.push(c);
            },
        },
        Mutation {
            name: "duplicate category id",
            expect: C::DuplicateCategoryId,
            apply: |d| {
                let mut c = d.categories[0].clone();
                c.name = "another-name".into();
                d.categories.push(c);
            },
        },
        Mutation {
            name: "duplicate category name",
            expect: C::DuplicateCategoryName,
            apply: |d| {
                let mut c = d.categories[0].clone();
                c.id = max_cat(d) + 1;
                d.categories.push(c);
            },
        },
        Mutation { name: "empty category name", expect: C::EmptyCategoryName, apply: |d| d.categories[0].name.clear() },
        Mutation { name: "empty file name", expect: C::EmptyFileName, apply: |d| d.images[0].file_name.clear() },
        Mutation { name: "zero image width", expect: C::InvalidImageDimensions, apply: |d| d.images[0].width = 0 },
        Mutation {
            name: "dangling image id",
            expect: C::DanglingImageId,
            apply: |d| d.annotations[0].image_id = d.images.iter().map(|i| i.id).max().unwrap() + 1000,
        },
        Mutation {
            name: "dangling category id",
            expect: C::DanglingCategoryId,
            apply: |d| d.annotations[0].category_id = max_cat(d) + 1000,
        },
        Mutation {
            name: "empty segmentation",
            expect: C::EmptySegmentation,
            apply: |d| d.annotations[0].segmentation.clear(),
        },
        Mutation {
            name: "polygon shorter than three points",
            expect: C::PolygonTooShort,
            apply: |d| d.annotations[0].segmentation[0].truncate(4),
        },
        Mutation {
            name: "odd-length polygon",
            expect: C::PolygonOddLength,
            apply: |d| d.annotations[0].segmentation[0].push(1.0),
        },
        Mutation { name: "zero area", expect: C::NonPositiveArea, apply: |d| d.annotations[0].area = 0.0 },
        Mutation { name: "negative bbox width", expect: C::InvalidBbox, apply: |d| d.annotations[0].bbox.width = -1.0 },
        Mutation {
            name: "bbox misses segmentation",
            expect: C::BboxDoesNotContainSegmentation,
            apply: |d| {
                let b = &mut d.annotations[0].bbox;
                b.x += b.width + 10.0;
            },
        },
        Mutation { name: "crowd annotation", expect: C::NonZeroIscrowd, apply: |d| d.annotations[0].iscrowd = 1 },
        Mutation {
            name: "non-finite coordinate",
            expect: C::NonFiniteCoordinate,
            apply: |d| d.annotations[0].segmentation[0][0] = f64::NAN,
        },
    ]
}

/// Random valid dataset with at least one annotation.
pub fn random_nonempty_dataset(rng: &mut impl Rng) -> CocoDataset {
    loop {
        let ds = random_dataset(rng);
        if !ds.annotations.is_empty() {
            return ds;
        }
    }
}

/// Random in-range street-view parameters, including the range ends.
pub fn random_in_range_geo(rng: &mut impl Rng) -> GeoMetadata {
    let pick = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64, ends: &[f64]| {
        if rng.gen_bool(0.05) {
            ends[rng.gen_range(0..ends.len())]
        } else {
            rng.gen_range(lo..hi)
        }
    };
    GeoMetadata {
        latitude: pick(rng, -90.0, 90.0, &[-90.0, 90.0, 0.0]),
        longitude: pick(rng, -180.0, 180.0, &[-180.0, 180.0, 0.0]),
        heading: pick(rng, 0.0, 360.0, &[0.0, 359.999_999_9, 359.999_999]),
        pitch: pick(rng, 0.0, 180.0, &[0.0, 180.0, 90.0]),
        fov: pick(rng, f64::MIN_POSITIVE, 180.0, &[180.0, 1e-9, 0.000_001]),
        provider: "google_streetview".into(),
    }
}

/// URLs built to trip up the parsers: out-of-range and non-finite numbers,
/// broken grammar, look-alike hosts, junk bytes.
pub fn adversarial_url(rng: &mut impl Rng) -> String {
    const HOSTS: [&str; 12] = [
        "www.google.com",
        "maps.google.co.uk",
        "google.fi",
        "notgoogle.com",
        "google.evil.example.com",
        "map.baidu.com",
        "www.flickr.com",
        "GOOGLE.COM",
        "xn--ggle-0nda.com",
        "127.0.0.1",
        "[::1]",
        "www.google.com.",
    ];
    const NUMBERS: [&str; 22] = [
        "0", "-0", "90", "90.0000001", "-90.5", "180", "-180.000001", "360", "359.9999999", "400", "-1", "1e3",
        "NaN", "inf", "", "+12.5", "1.", ".5", "0x10", "99999999999999999999999999999999999999999999999", "1,2",
        "--3",
    ];
    let host = HOSTS[rng.gen_range(0..HOSTS.len())];
    let num = |rng: &mut dyn rand::RngCore| -> String {
        if rng.gen_bool(0.5) {
            NUMBERS[rng.gen_range(0..NUMBERS.len())].to_owned()
        } else {
            format!("{:.3}", rng.gen_range(-1000.0..1000.0))
        }
    };
    match rng.gen_range(0..6) {
        0 => {
            let n: Vec<String> = (0..5).map(|_| num(rng)).collect();
            format!("https://{host}/maps/@{},{},3a,{}y,{}h,{}t/data=!3m6", n[0], n[1], n[2], n[3], n[4])
        }
        1 => {
            // valid grammar with one field pushed out of range
            let mut g = random_in_range_geo(rng);
            match rng.gen_range(0..5) {
                0 => g.latitude = 90.0 + rng.gen_range(0.001..1e6),
                1 => g.longitude = -180.0 - rng.gen_range(0.001..1e6),
                2 => g.heading = 360.0 + rng.gen_range(0.0..1e3),
                3 => g.pitch = -rng.gen_range(0.001..90.0),
                _ => g.fov = if rng.gen_bool(0.5) { 0.0 } else { 180.0 + rng.gen_range(0.001..10.0) },
            }
            format!(
                "https://{host}/maps/@{},{},3a,{}y,{}h,{}t",
                g.latitude, g.longitude, g.fov, g.heading, g.pitch
            )
        }
        2 => {
            let len = rng.gen_range(0..80);
            (0..len).map(|_| rng.gen_range(' '..='\u{2fff}')).collect()
        }
        3 => {
            let junk: String = (0..rng.gen_range(0..30)).map(|_| rng.gen_range('!'..='~')).collect();
            format!("https://{host}/maps/{junk}@{}", num(rng))
        }
        4 => format!("https://{host}/maps/@{},{},3a?x={}#@{},{}", num(rng), num(rng), num(rng), num(rng), num(rng)),
        _ => {
            let scheme = ["http", "https", "ftp", "javascript", "data"][rng.gen_range(0..5)];
            format!("{scheme}://{host}/maps/%40{},{},3a,{}y,{}h,{}t", num(rng), num(rng), num(rng), num(rng), num(rng))
        }
    }
}

/// Stores the blob for `seed` and builds a matching record.
pub fn record(store: &Store, seed: u64, annotator: &str) -> viewmark::SubmissionRecord {
    use viewmark::storage::AnnotationDraft;
    use viewmark::Timestamp;
    let image_ref = store.put_blob(&png(seed)).unwrap();
    let drafts = vec![AnnotationDraft {
        category_name: if seed.is_multiple_of(2) { "directed" } else { "round" }.into(),
        polygon: viewmark::Polygon::new(triangle((seed % 20) as f64)).unwrap(),
        attributes: BTreeMap::new(),
    }];
    let t = Timestamp::from_unix_millis(1_614_592_800_000 + seed as i64 * 1000).unwrap();
    viewmark::SubmissionRecord::new(
        annotator,
        t,
        "https://www.flickr.com/photos/x/1",
        image_ref,
        (IMG_W, IMG_H),
        1.0,
        drafts,
        None,
        t,
    )
}

/// Submission ids in log order.
pub fn ids(state: &viewmark::storage::State) -> Vec<String> {
    state.submissions().map(|r| r.submission_id.clone()).collect()
}

/// Copies a data directory (blobs and logs) into `to`.
pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub const BIN: &str = env!("CARGO_BIN_EXE_viewmark");

/// Runs the binary to completion; returns (exit code, stdout, stderr).
pub fn run_bin(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(BIN).args(args).env("NO_COLOR", "1").output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A `serve` child process, killed on drop.
pub struct ServeProcess {
    pub child: std::process::Child,
    pub base: String,
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Starts `viewmark serve` on a fresh port and waits until health answers.
pub async fn serve_process(config_dir: &Path, data: &Path) -> ServeProcess {
    let port = free_port();
    let config = write_config(config_dir, data, &format!("127.0.0.1:{port}"));
    let child = std::process::Command::new(BIN)
        .args(["serve", "--config"])
        .arg(&config)
        .env("NO_COLOR", "1")
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let proc = ServeProcess { child, base: format!("http://127.0.0.1:{port}") };
    let client = reqwest::Client::new();
    for _ in 0..200 {
        if let Ok(r) = client.get(format!("{}/api/v1/health", proc.base)).send().await {
            if r.status().is_success() {
                return proc;
            }
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    panic!("server did not become healthy");
}
