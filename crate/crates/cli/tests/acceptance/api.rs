use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use complyscan_api::{router, AppState, TOTAL_COUNT_HEADER};
use complyscan_core::ledger::{FileQuery, Ledger, SqliteLedger};
use complyscan_core::scanner::{run_scan, ScanOptions};
use complyscan_core::{FileFormat, FileStatus, MachineId, Timestamp};
use complyscan_testkit::{gzip_of, zip_of, DicomBuilder, NiftiBuilder, Syntax};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use crate::model::T0;
use crate::Outcome;

const NOW: i64 = T0 + 200;

fn macs() -> [MachineId; 3] {
    ["0242ac110002", "0242ac110003", "0242ac110004"].map(|m| m.parse().unwrap())
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs/api")
        .join(name);
    let value: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&value).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn validate(name: &str, body: &Value) -> Result<(), String> {
    let schema = schema(name);
    let messages: Vec<String> = match schema.validate(body) {
        Ok(()) => return Ok(()),
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    Err(format!("{name}: {messages:?}"))
}

/// Two machines scanned through the real pipeline, one registered and
/// never scanned.
fn build_store(root: &Path) -> Result<PathBuf, String> {
    let io = |e: std::io::Error| e.to_string();
    let db = root.join("store/ledger.db");
    let data = root.join("data");
    let srv = root.join("srv");
    fs::create_dir_all(&data).map_err(io)?;
    fs::create_dir_all(&srv).map_err(io)?;

    let dcm = |who: &str| {
        DicomBuilder::new(Syntax::ExplicitLittle)
            .patient(who, who)
            .build()
            .bytes
    };
    let nii = NiftiBuilder::single(false, [2, 2, 2]).build();
    fs::write(data.join("a.dcm"), dcm("A")).map_err(io)?;
    fs::write(data.join("b.jpg"), dcm("B")).map_err(io)?;
    fs::write(data.join("c.nii"), &nii).map_err(io)?;
    fs::write(
        data.join("bundle.zip"),
        zip_of(&[("series/d.dcm", &dcm("D")), ("series/e.nii", &nii)]),
    )
    .map_err(io)?;
    fs::write(srv.join("brain.nii.gz"), gzip_of(&nii)).map_err(io)?;

    let [alice, bob, carol] = macs();
    let mut ledger = SqliteLedger::open(&db).map_err(|e| e.to_string())?;
    let both: std::collections::BTreeSet<FileFormat> = [FileFormat::Dicom, FileFormat::Nifti1].into();
    let e = |e: complyscan_core::Error| e.to_string();
    ledger
        .upsert_machine_config("alice", &alice, std::slice::from_ref(&data), &both, 3600)
        .map_err(e)?;
    ledger
        .upsert_machine_config(
            "bob",
            &bob,
            std::slice::from_ref(&srv),
            &[FileFormat::Nifti1].into(),
            60,
        )
        .map_err(e)?;
    ledger
        .upsert_machine_config("carol", &carol, &[root.join("other")], &both, 600)
        .map_err(e)?;

    let opts = ScanOptions::default();
    let mut scan = |user: &str, mac: &MachineId, at: i64| -> Result<(), String> {
        let r = run_scan(&mut ledger, user, mac, Timestamp::from_unix(at), &opts).map_err(|e| e.to_string())?;
        ensure!(
            r.committed && r.errors.is_empty(),
            "fixture scan failed: {:?}",
            r.errors
        );
        Ok(())
    };
    scan("alice", &alice, T0)?;
    scan("bob", &bob, T0 + 50)?;
    fs::write(data.join("a.dcm"), dcm("A2")).map_err(io)?;
    fs::remove_file(data.join("c.nii")).map_err(io)?;
    scan("alice", &alice, T0 + 100)?;
    Ok(db)
}

/// Every file in the store directory, with contents and mtime.
fn snapshot(dir: &Path) -> BTreeMap<String, (Vec<u8>, std::time::SystemTime)> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let meta = e.metadata().unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                (fs::read(e.path()).unwrap(), meta.modified().unwrap()),
            )
        })
        .collect()
}

struct Reply {
    status: StatusCode,
    content_type: String,
    total: Option<u64>,
    body: Value,
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<&Value>) -> Result<Reply, String> {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app
        .clone()
        .oneshot(req.body(body).unwrap())
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    let content_type = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap_or("").to_string())
        .unwrap_or_default();
    let total = resp
        .headers()
        .get(TOTAL_COUNT_HEADER)
        .and_then(|v| v.to_str().ok()?.parse().ok());
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    Ok(Reply {
        status,
        content_type,
        total,
        body,
    })
}

fn query(pairs: &[(&str, &str)]) -> String {
    form_urlencoded::Serializer::new(String::new())
        .extend_pairs(pairs)
        .finish()
}

async fn contract(db: &Path) -> Outcome {
    let store_dir = db.parent().unwrap();
    let app = router(AppState {
        clock: Some(Timestamp::from_unix(NOW)),
        ..AppState::new(db)
    });
    let ledger = SqliteLedger::open_read_only(db).map_err(|e| e.to_string())?;
    let all = ledger.query_files(&FileQuery::default()).map_err(|e| e.to_string())?;
    let [alice, bob, _] = macs();
    let when = Timestamp::from_unix(T0 + 50).to_string();

    let mut gets: Vec<(String, &str)> = vec![("/api/machines".into(), "machines.schema.json")];
    for q in [vec![("stale", "true")], vec![("stale", "false")]] {
        gets.push((format!("/api/machines?{}", query(&q)), "machines.schema.json"));
    }
    let file_queries: Vec<Vec<(&str, &str)>> = vec![
        vec![],
        vec![("status", "LATEST")],
        vec![("status", "OLD")],
        vec![("status", "DELETED")],
        vec![("format", "DICOM")],
        vec![("format", "NIFTI1")],
        vec![("version", "2")],
        vec![("mac", alice.as_str())],
        vec![("mac", "02:42:ac:11:00:03")],
        vec![("scanned_after", &when)],
        vec![("scanned_before", &when)],
        vec![("stale_only", "true")],
        vec![("limit", "2"), ("offset", "1")],
        vec![("limit", "1000"), ("status", "LATEST"), ("format", "DICOM")],
    ];
    for q in &file_queries {
        gets.push((format!("/api/files?{}", query(q)), "files.schema.json"));
    }
    for r in &all {
        let q = query(&[("mac", r.mac.as_str()), ("path", &r.filepath)]);
        gets.push((format!("/api/files/history?{q}"), "history.schema.json"));
    }
    gets.push(("/api/summary".into(), "summary.schema.json"));

    let errors = [
        "/api/files?limit=1001",
        "/api/files?status=GONE",
        "/api/files?colour=red",
        "/api/files/history?mac=0242ac110002",
        "/api/machines?stale=maybe",
        "/api/nothing-here",
    ];

    let mut checked = 0;
    for (uri, schema_name) in &gets {
        let before = snapshot(store_dir);
        let r = send(&app, "GET", uri, None).await?;
        ensure!(snapshot(store_dir) == before, "GET {uri} changed the store");
        ensure!(r.status == StatusCode::OK, "GET {uri}: {} {}", r.status, r.body);
        validate(schema_name, &r.body).map_err(|e| format!("GET {uri}: {e}"))?;
        checked += 1;
    }
    for uri in errors {
        let before = snapshot(store_dir);
        let r = send(&app, "GET", uri, None).await?;
        ensure!(snapshot(store_dir) == before, "GET {uri} changed the store");
        ensure!(r.status.is_client_error(), "GET {uri}: expected 4xx, got {}", r.status);
        validate("error.schema.json", &r.body).map_err(|e| format!("GET {uri}: {e}"))?;
        checked += 1;
    }

    let r = send(&app, "GET", "/api/files", None).await?;
    ensure!(
        r.total == Some(all.len() as u64),
        "total {:?} for {} rows",
        r.total,
        all.len()
    );
    let r = send(
        &app,
        "GET",
        &format!("/api/files?{}", query(&[("limit", "2"), ("offset", "1")])),
        None,
    )
    .await?;
    ensure!(r.body.as_array().map(Vec::len) == Some(2), "page size");
    ensure!(r.total == Some(all.len() as u64), "total on a page");
    let r = send(&app, "GET", "/api/machines?stale=true", None).await?;
    let stale: Vec<&str> = r
        .body
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|m| m["username"].as_str())
        .collect();
    ensure!(stale == ["bob", "carol"], "stale machines {stale:?}");
    let r = send(&app, "GET", "/api/summary", None).await?;
    let latest = all.iter().filter(|f| f.status == FileStatus::Latest).count();
    let deleted = all.iter().filter(|f| f.status == FileStatus::Deleted).count();
    let want = json!({
        "machines": 3,
        "stale_machines": 2,
        "files_latest": latest,
        "files_deleted": deleted,
        "last_scan_time": Timestamp::from_unix(T0 + 100).to_string(),
    });
    ensure!(r.body == want, "summary {} vs {want}", r.body);

    let request = json!({"username": "bob", "mac": bob.as_str(), "note": "scan overdue"});
    validate("reminder-request.schema.json", &request)?;
    let r = send(&app, "POST", "/api/reminders", Some(&request)).await?;
    ensure!(
        r.status == StatusCode::CREATED,
        "POST /api/reminders: {} {}",
        r.status,
        r.body
    );
    validate("reminder.schema.json", &r.body)?;
    let stored = ledger.list_reminders().map_err(|e| e.to_string())?;
    ensure!(
        stored.iter().any(|s| Some(s.id.as_str()) == r.body["id"].as_str()),
        "reminder not persisted"
    );

    let r = send(&app, "GET", "/", None).await?;
    ensure!(
        r.status == StatusCode::OK && r.content_type.starts_with("text/html"),
        "/ without a UI build: {} {}",
        r.status,
        r.content_type
    );

    Ok(format!(
        "{checked} responses schema-valid, store unchanged around every GET, reminder persisted, / served without a UI build"
    ))
}

pub fn check() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = build_store(dir.path())?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(contract(&db))
}
