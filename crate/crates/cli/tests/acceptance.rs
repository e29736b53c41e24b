//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rc_core::aggregate::{bin_responses, find_peaks, BinnedSeries};
use rc_core::analytics::{played_students, two_sided_p, usage_table};
use rc_core::store::State;
use rc_core::{
    LoginId, PlaySegment, Preference, RecordKind, Response, ResponseQuery, ResponseType, Role,
    Store, SurveyAnswer, SurveyDatum, UserAccount, Video, VideoId,
};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rc(dir: &Path, args: &[&str]) -> Output {
    rc_stdin(dir, args, "")
}

fn rc_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_rc"))
        .arg("--data-dir")
        .arg(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn rc");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn ok_stdout(out: Output) -> Result<String, String> {
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "rc failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

// Per-player averages, lengths and per-10-minute figures as published for the
// ten course videos.
const PUBLISHED_AVG: [f64; 10] = [3.0, 1.7, 3.8, 4.1, 3.8, 1.9, 2.9, 3.4, 2.1, 3.1];
const PUBLISHED_LENGTH: [&str; 10] = [
    "22:42", "15:27", "11:57", "12:32", "11:07", "06:21", "09:47", "13:49", "07:33", "12:47",
];
const PUBLISHED_PLAYED: [u32; 10] = [42, 42, 42, 41, 42, 42, 41, 42, 34, 35];
const PUBLISHED_SUM: [u32; 10] = [127, 72, 160, 167, 158, 80, 120, 143, 73, 108];

fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    rc_core::reference::populate(&store, 2018).unwrap();
    store.flush().unwrap();
    dir
}

fn stats_csv(dir: &Path) -> Result<(Vec<HashMap<String, String>>, Duration), String> {
    let started = Instant::now();
    let text = ok_stdout(rc(dir, &["stats", "--csv"]))?;
    let elapsed = started.elapsed();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty output")?.split(',').collect();
    let rows = lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(str::to_owned))
                .collect()
        })
        .collect();
    Ok((rows, elapsed))
}

fn num(row: &HashMap<String, String>, col: &str) -> Result<f64, String> {
    row.get(col)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("column {col} missing or empty in {row:?}"))
}

fn table1_reproduction() -> Outcome {
    let dir = fixture_dir();
    let (rows, elapsed) = stats_csv(dir.path())?;
    ensure(rows.len() == 10, || format!("{} rows", rows.len()))?;
    let mut worst = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        let avg = num(row, "avg")?;
        let rounded = (avg * 10.0).round() / 10.0;
        ensure((rounded - PUBLISHED_AVG[i]).abs() <= 0.05, || {
            format!(
                "video #{}: avg {avg:.3} rounds to {rounded}, published {}",
                i + 1,
                PUBLISHED_AVG[i]
            )
        })?;
        worst = worst.max((avg - PUBLISHED_AVG[i]).abs());
    }
    ensure(elapsed < Duration::from_secs(1), || {
        format!("rc stats took {elapsed:?}")
    })?;
    Ok(format!(
        "10/10 averages match after rounding (max raw gap {worst:.3}), rc stats in {} ms",
        elapsed.as_millis()
    ))
}

fn normalization() -> Outcome {
    let dir = fixture_dir();
    let (rows, _) = stats_csv(dir.path())?;
    let norm: Vec<f64> = rows
        .iter()
        .map(|r| num(r, "normalized_per_10min"))
        .collect::<Result<_, _>>()?;
    // Independent recomputation from the published columns.
    for i in 0..10 {
        let (m, s) = PUBLISHED_LENGTH[i].split_once(':').unwrap();
        let minutes = m.parse::<f64>().unwrap() + s.parse::<f64>().unwrap() / 60.0;
        let expected =
            f64::from(PUBLISHED_SUM[i]) / f64::from(PUBLISHED_PLAYED[i]) / (minutes / 10.0);
        ensure((norm[i] - expected).abs() < 1e-9, || {
            format!("video #{}: {} vs {expected}", i + 1, norm[i])
        })?;
    }
    let rc_mean = norm[2..].iter().sum::<f64>() / 8.0;
    for (label, got, want) in [
        ("#1", norm[0], 1.3),
        ("#2", norm[1], 1.1),
        ("mean #3-#10", rc_mean, 3.0),
    ] {
        ensure((got - want).abs() <= 0.1, || {
            format!("{label}: {got:.3} vs {want}")
        })?;
    }
    Ok(format!(
        "#1 {:.3}, #2 {:.3}, mean #3-#10 {rc_mean:.3}",
        norm[0], norm[1]
    ))
}

fn correlation() -> Outcome {
    let dir = fixture_dir();
    let ids: Vec<String> = (3..=10).map(|o| format!("v{o:02}")).collect();
    let out = ok_stdout(rc(
        dir.path(),
        &["stats", "--json", "--correlate", &ids.join(",")],
    ))?;
    let body: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let r2 = body["correlation"]["r_squared"]
        .as_f64()
        .ok_or("no r_squared")?;

    // Pearson r from the published columns, by the textbook formula.
    let pts: Vec<(f64, f64)> = (2..10)
        .map(|i| {
            let (m, s) = PUBLISHED_LENGTH[i].split_once(':').unwrap();
            let x = m.parse::<f64>().unwrap() + s.parse::<f64>().unwrap() / 60.0;
            (
                x,
                f64::from(PUBLISHED_SUM[i]) / f64::from(PUBLISHED_PLAYED[i]),
            )
        })
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = (
        pts.iter().map(|p| p.0).sum::<f64>(),
        pts.iter().map(|p| p.1).sum::<f64>(),
    );
    let sxy = pts.iter().map(|p| p.0 * p.1).sum::<f64>();
    let (sxx, syy) = (
        pts.iter().map(|p| p.0 * p.0).sum::<f64>(),
        pts.iter().map(|p| p.1 * p.1).sum::<f64>(),
    );
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    ensure((r * r - r2).abs() < 1e-9, || {
        format!("rc reports {r2}, oracle {}", r * r)
    })?;
    ensure((0.65..=0.80).contains(&r2), || {
        format!("r² = {r2:.4} outside [0.65, 0.80]")
    })?;
    Ok(format!("r² = {r2:.4} over videos #3-#10"))
}

fn sign_test_oracle() -> Outcome {
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for n in 0u32..=20 {
        // Number of the 2^n equally likely sign assignments with each count
        // of positives.
        let mut by_pos = vec![0u64; n as usize + 1];
        for mask in 0u32..(1 << n) {
            by_pos[mask.count_ones() as usize] += 1;
        }
        for a in 0..=n {
            let b = n - a;
            let observed = (2 * a as i64 - n as i64).abs();
            let extreme: u64 = (0..=n)
                .filter(|&k| (2 * k as i64 - n as i64).abs() >= observed)
                .map(|k| by_pos[k as usize])
                .sum();
            let oracle = extreme as f64 / (1u64 << n) as f64;
            let p = two_sided_p(a as u64, b as u64);
            let gap = (p - oracle).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-12, || {
                format!("p({a},{b}) = {p}, enumeration {oracle}")
            })?;
            let mirrored = two_sided_p(b as u64, a as u64);
            ensure(p.to_bits() == mirrored.to_bits(), || {
                format!("p({a},{b}) = {p} but p({b},{a}) = {mirrored}")
            })?;
            pairs += 1;
        }
    }
    Ok(format!("{pairs} (n_pos, n_neg) pairs with n <= 20 match enumeration (max gap {worst:e}), symmetric"))
}

fn response(i: usize, pos: f64, rtype: ResponseType) -> Response {
    Response {
        response_id: format!("r{i}").into(),
        student_id: format!("s{}", i % 7).into(),
        video_id: "v".into(),
        position_s: pos,
        rtype,
        text: (rtype == ResponseType::Question).then(|| "?".to_owned()),
        created_at: Utc.timestamp_opt(i as i64, 0).unwrap(),
    }
}

/// Positions are multiples of 1/16 s and widths multiples of 1/4 s, so every
/// quantity below is exact in both f64 and integer arithmetic.
fn aggregation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA66);
    let instances = 1000;
    let mut total_responses = 0;
    for inst in 0..instances {
        let m: u64 = rng.random_range(1..=2400); // duration = m/4 s
        let duration = m as f64 / 4.0;
        let j: u64 = rng.random_range(1..=120); // width = j/4 s
        let width = j as f64 / 4.0;
        let n = rng.random_range(0..=50);
        total_responses += n;
        let ticks: Vec<u64> = (0..n).map(|_| rng.random_range(0..=4 * m)).collect(); // position = k/16 s
        let responses: Vec<Response> = ticks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                response(
                    i,
                    k as f64 / 16.0,
                    ResponseType::ALL[rng.random_range(0..4)],
                )
            })
            .collect();
        let vid = VideoId::from("v");
        let ctx = |what: &str| format!("instance {inst} (d={duration}, w={width}, n={n}): {what}");
        let series =
            bin_responses(&vid, &responses, duration, width).map_err(|e| ctx(&e.to_string()))?;

        // Brute force in integers: bin i holds ticks in [4j·i, 4j·(i+1)), the
        // last bin also holds everything up to the end.
        let n_bins = m.div_ceil(j).max(1) as usize;
        ensure(series.n_bins == n_bins, || {
            ctx(&format!("{} bins, expected {n_bins}", series.n_bins))
        })?;
        for t in ResponseType::ALL {
            let mut brute = vec![0u32; n_bins];
            for (r, &k) in responses.iter().zip(&ticks) {
                if r.rtype != t {
                    continue;
                }
                let i = (0..n_bins)
                    .find(|&i| {
                        let lo = 4 * j * i as u64;
                        k >= lo && (k < lo + 4 * j || i == n_bins - 1)
                    })
                    .unwrap();
                brute[i] += 1;
            }
            ensure(series.counts_of(t) == brute.as_slice(), || {
                ctx(&format!("{t:?} differs from brute force"))
            })?;
            let expected = responses.iter().filter(|r| r.rtype == t).count() as u64;
            ensure(series.total(t) == expected, || {
                ctx(&format!("{t:?} lost responses"))
            })?;
        }

        let again = bin_responses(&vid, &responses, duration, width).unwrap();
        let mut shuffled = responses.clone();
        shuffled.shuffle(&mut rng);
        let reordered = bin_responses(&vid, &shuffled, duration, width).unwrap();
        ensure(again == series && reordered == series, || {
            ctx("not deterministic")
        })?;

        let fine = bin_responses(&vid, &responses, duration, width / 2.0).unwrap();
        ensure(
            fine.n_bins == 2 * n_bins || fine.n_bins == 2 * n_bins - 1,
            || ctx("fine bin count"),
        )?;
        for t in ResponseType::ALL {
            let f = fine.counts_of(t);
            for (i, &c) in series.counts_of(t).iter().enumerate() {
                let merged = f[2 * i] + f.get(2 * i + 1).copied().unwrap_or(0);
                ensure(merged == c, || {
                    ctx(&format!("{t:?} bin {i}: {c} vs halves {merged}"))
                })?;
            }
        }

        let k = rng.random_range(1..=6);
        for t in ResponseType::ALL {
            check_peaks(&series, t, k).map_err(|e| ctx(&e))?;
        }
    }
    Ok(format!(
        "{instances} instances, {total_responses} responses: conservation, determinism, refinement, brute force, peaks"
    ))
}

fn check_peaks(series: &BinnedSeries, t: ResponseType, k: usize) -> Result<(), String> {
    let mut oracle: Vec<(usize, u32)> = series
        .counts_of(t)
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect();
    oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    oracle.truncate(k);
    let got: Vec<(usize, u32)> = find_peaks(series, t, k)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|p| {
            assert_eq!(p.bin_start_s, p.bin_index as f64 * series.bin_width_s);
            (p.bin_index, p.count)
        })
        .collect();
    ensure(got == oracle, || {
        format!("{t:?} top-{k}: {got:?}, sort oracle {oracle:?}")
    })
}

fn played_threshold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x91A7);
    let mut cases = 0;
    let mut boundary = 0;
    let fixed: [&[(u32, u32)]; 5] = [
        &[(0, 6), (300, 306)], // 0.6 + 0.6
        &[(0, 5), (10, 14)],   // 0.5 + 0.4
        &[(0, 1), (3, 12)],    // 0.1 + 0.9, rounds below 1.0 in f64
        &[(20, 30)],           // exactly 1.0
        &[(20, 29), (40, 40)], // 0.9 and an empty segment
    ];
    for round in 0..1000 {
        let store = Store::in_memory();
        store
            .add_video(Video {
                video_id: "v".into(),
                title: "v".into(),
                duration_s: 60.0,
                source_uri: "/v".into(),
                lecture_label: String::new(),
                ordinal: 1,
            })
            .unwrap();
        let students = 6;
        let mut sets: Vec<Vec<(u32, u32)>> = (0..students)
            .map(|_| {
                (0..rng.random_range(0..=4))
                    .map(|_| {
                        let start = rng.random_range(0..590);
                        (start, start + rng.random_range(0..=8))
                    })
                    .collect()
            })
            .collect();
        if round == 0 {
            sets.splice(0..fixed.len(), fixed.iter().map(|s| s.to_vec()));
        }
        let mut expected = BTreeSet::new();
        for (i, segs) in sets.iter().enumerate() {
            let id = LoginId::new(format!("s{i}"));
            store
                .add_account(UserAccount {
                    login_id: id.clone(),
                    password_hash: None,
                    role: Role::Student,
                    display_name: id.to_string(),
                })
                .unwrap();
            for &(a, b) in segs {
                store
                    .append_play_segment(PlaySegment {
                        student_id: id.clone(),
                        video_id: "v".into(),
                        start_pos_s: f64::from(a) / 10.0,
                        end_pos_s: f64::from(b) / 10.0,
                        playback_rate: rng.random_range(0.5..2.0),
                        recorded_at: Utc.timestamp_opt(0, 0).unwrap(),
                    })
                    .unwrap();
            }
            // Oracle in tenths of a second.
            let tenths: u32 = segs.iter().map(|(a, b)| b - a).sum();
            boundary += usize::from(tenths == 10);
            if tenths >= 10 {
                expected.insert(id);
            }
            cases += 1;
        }
        let got =
            played_students(&store.snapshot(), &"v".into(), 1.0).map_err(|e| e.to_string())?;
        ensure(got == expected, || {
            format!("round {round}: played {got:?}, oracle {expected:?}")
        })?;
        if round == 0 {
            let first: Vec<String> = got
                .iter()
                .map(|s| s.to_string())
                .filter(|s| s.as_str() < "s5")
                .collect();
            ensure(first == ["s0", "s2", "s3"], || {
                format!("fixed cases: {first:?}")
            })?;
        }
    }
    Ok(format!("{cases} random segment sets ({boundary} exactly at 1.0 s), 0.6 + 0.6 counts, 0.5 + 0.4 does not"))
}

struct Server {
    child: std::process::Child,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn http(
    addr: SocketAddr,
    method: &str,
    path: &str,
    token: Option<&str>,
    body: Option<&Value>,
) -> Result<(u16, Value), String> {
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    let auth = token
        .map(|t| format!("authorization: Bearer {t}\r\n"))
        .unwrap_or_default();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nhost: test\r\n{auth}content-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream
        .write_all(req.as_bytes())
        .map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let (head, payload) = raw.split_once("\r\n\r\n").ok_or("no header terminator")?;
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or("bad status line")?;
    let value = if payload.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(payload).map_err(|e| format!("{e}: {payload}"))?
    };
    Ok((status, value))
}

fn api_round_trip() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    ok_stdout(rc_stdin(dir.path(), &["user", "add", "s1"], "pw-s1\n"))?;
    ok_stdout(rc(
        dir.path(),
        &[
            "video",
            "add",
            "--title",
            "Lecture",
            "--duration",
            "120",
            "--uri",
            "/l.mp4",
            "--ordinal",
            "1",
        ],
    ))?;
    let addr = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let child = Command::new(env!("CARGO_BIN_EXE_rc"))
        .arg("--data-dir")
        .arg(dir.path())
        .args(["serve", "--bind", &addr.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let _server = Server { child };
    while TcpStream::connect(addr).is_err() {
        ensure(started.elapsed() < Duration::from_secs(5), || {
            "server did not start".into()
        })?;
        std::thread::sleep(Duration::from_millis(10));
    }

    let (status, login) = http(
        addr,
        "POST",
        "/api/login",
        None,
        Some(&json!({"login_id": "s1", "password": "pw-s1"})),
    )?;
    ensure(status == 200, || format!("login {status}"))?;
    let token = login["token"].as_str().ok_or("no token")?.to_owned();
    let t = Some(token.as_str());

    let important = json!({"response_id": "r1", "position_s": 12.0, "rtype": "important"});
    let (status, first) = http(
        addr,
        "POST",
        "/api/videos/v01/responses",
        t,
        Some(&important),
    )?;
    ensure(status == 201, || format!("first POST {status}"))?;
    let (_, series) = http(
        addr,
        "GET",
        "/api/videos/v01/aggregate?bin_width_s=5",
        t,
        None,
    )?;
    ensure(series["counts"]["important"][2] == 1, || {
        format!("aggregate after POST: {series}")
    })?;

    let question = json!({"response_id": "q1", "position_s": 40.0, "rtype": "question", "text": "What is a fixture?"});
    let (status, _) = http(
        addr,
        "POST",
        "/api/videos/v01/responses",
        t,
        Some(&question),
    )?;
    ensure(status == 201, || format!("question POST {status}"))?;
    let (_, qs) = http(addr, "GET", "/api/videos/v01/questions", t, None)?;
    ensure(qs["questions"][0]["text"] == "What is a fixture?", || {
        format!("questions: {qs}")
    })?;

    let (status, replay) = http(
        addr,
        "POST",
        "/api/videos/v01/responses",
        t,
        Some(&important),
    )?;
    ensure(status == 200 && replay == first, || {
        format!("replay {status} {replay} vs {first}")
    })?;
    let (_, after) = http(
        addr,
        "GET",
        "/api/videos/v01/aggregate?bin_width_s=5",
        t,
        None,
    )?;
    ensure(
        after["counts"]["important"] == series["counts"]["important"],
        || format!("counts changed: {after}"),
    )?;
    let (_, qs_after) = http(addr, "GET", "/api/videos/v01/questions", t, None)?;
    ensure(qs_after == qs, || "question list changed on replay".into())?;

    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "201 then 200 on replay, visible in aggregate and questions, {} ms end to end",
        elapsed.as_millis()
    ))
}

/// Everything the store can be asked, rendered comparably.
fn observe(s: &State) -> String {
    let mut out = vec![
        format!("{:?}", s.videos()),
        format!("{:?}", s.accounts()),
        format!("{:?}", s.survey().collect::<Vec<_>>()),
        format!("{:?}", usage_table(s).unwrap()),
    ];
    let students: Vec<LoginId> = s.accounts().iter().map(|a| a.login_id.clone()).collect();
    for v in s.videos() {
        out.push(format!("{:?}", s.video_responses(&v.video_id).unwrap()));
        out.push(format!("{:?}", s.video_segments(&v.video_id).unwrap()));
        for st in &students {
            for t in ResponseType::ALL {
                let q = ResponseQuery::video(v.video_id.clone())
                    .student(st.clone())
                    .rtype(t);
                out.push(format!("{:?}", s.query_responses(&q).unwrap()));
            }
        }
    }
    out.join("\n")
}

fn store_round_trip() -> Outcome {
    let src = fixture_dir();
    {
        let store = Store::open(src.path()).unwrap();
        for (i, a) in ["A", "B", "tie", "A"].iter().enumerate() {
            let answer = SurveyAnswer::Preference(match *a {
                "A" => Preference::A,
                "B" => Preference::B,
                _ => Preference::Tie,
            });
            store
                .append_survey(SurveyDatum {
                    question_id: "Q11".into(),
                    respondent_id: format!("s{i:02}"),
                    answer,
                })
                .unwrap();
        }
    }
    let dst = tempfile::tempdir().unwrap();
    let mut records = 0;
    for kind in RecordKind::ALL {
        let exported = ok_stdout(rc(
            src.path(),
            &["export", kind.as_str(), "--include-password-hashes"],
        ))?;
        records += exported.lines().count();
        let file = dst.path().join(format!("{}.in", kind.as_str()));
        fs::write(&file, exported).unwrap();
        ok_stdout(rc(
            dst.path(),
            &["import", kind.as_str(), "--file", file.to_str().unwrap()],
        ))?;
    }
    let a = observe(&Store::open(src.path()).unwrap().snapshot());
    let b = observe(&Store::open(dst.path()).unwrap().snapshot());
    ensure(a == b, || "query results differ after export/import".into())?;

    let bad = dst.path().join("bad.jsonl");
    let good = r#"{"response_id":"new","student_id":"s01","video_id":"v03","position_s":1.0,"rtype":"important","created_at":"2020-01-01T00:00:00Z"}"#;
    fs::write(
        &bad,
        format!(
            "{good}\n{{\"response_id\": \n{}\n{}\n",
            good.replace("new", "n2").replace("1.0", "99999.0"),
            good.replace("new", "n3")
        ),
    )
    .unwrap();
    let out = rc(
        dst.path(),
        &["import", "response", "--file", bad.to_str().unwrap()],
    );
    let err = String::from_utf8_lossy(&out.stderr);
    ensure(out.status.code() == Some(1), || {
        format!("malformed import exited {:?}", out.status.code())
    })?;
    ensure(
        err.contains("line 2")
            && err.contains("line 3")
            && !err.contains("line 1:")
            && !err.contains("line 4"),
        || format!("error report: {err}"),
    )?;
    let after = observe(&Store::open(dst.path()).unwrap().snapshot());
    ensure(after == b, || "a rejected import changed the store".into())?;
    Ok(format!(
        "{records} records across {} logs identical after export/import; bad lines 2 and 3 named",
        RecordKind::ALL.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("table1_reproduction", table1_reproduction),
        ("normalization", normalization),
        ("length_correlation", correlation),
        ("sign_test_oracle", sign_test_oracle),
        ("aggregation_properties", aggregation_properties),
        ("played_threshold", played_threshold),
        ("api_round_trip", api_round_trip),
        ("store_round_trip", store_round_trip),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "{}/{} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
