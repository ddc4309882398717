mod common;

use common::*;
use serde_json::{json, Value};

#[tokio::test(flavor = "multi_thread")]
async fn health_and_authentication() {
    let dir = tempfile::tempdir().unwrap();
    let srv = TestServer::start(test_config(dir.path(), &spec(2))).await;
    let r = srv.client.get(srv.url("/healthz")).send().await.unwrap();
    assert_eq!(split(r).await, (200, json!({"status": "ok"})));

    let r = srv.client.get(srv.url("/employees")).send().await.unwrap();
    let (s, v) = split(r).await;
    assert_eq!(s, 401);
    assert_eq!(v["code"], "unauthorized");
    assert!(v["message"].is_string());
    assert_eq!(srv.get("/employees", "wrong").await.0, 401);
    assert_eq!(srv.get("/nowhere", ADMIN_TOKEN).await.0, 404);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn employee_crud_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(3);
    let srv = TestServer::start(test_config(dir.path(), &sp)).await;

    let (s, created) = srv.enroll("ana", &enrollment_images(&sp, 0)).await;
    assert_eq!(s, 201, "{created}");
    assert_eq!(created["employee_id"], "ana");
    assert_eq!(created["name"], "Employee ana");
    assert_eq!(created["contact"], "ana@corp.example");
    assert_eq!(created["role"], "employee");
    assert_eq!(created["active"], true);
    assert_eq!(created["enrollment_image_refs"].as_array().unwrap().len(), 3);

    let (s, got) = srv.get("/employees/ana", ADMIN_TOKEN).await;
    assert_eq!((s, &got), (200, &created));

    let (s, v) = srv.enroll("ana", &enrollment_images(&sp, 0)).await;
    assert_eq!((s, v["code"].as_str()), (409, Some("already_exists")));
    let (s, v) = srv.enroll("ben", &[]).await;
    assert_eq!((s, v["code"].as_str()), (400, Some("enrollment_failed")));
    let bad = json!({"employee_id": "cy", "name": "Cy", "contact": "not-an-email", "images": [b64(&probe(&sp, 2, 1))]});
    let (s, v) = srv.post_json("/employees", ADMIN_TOKEN, &bad).await;
    assert_eq!((s, v["code"].as_str()), (400, Some("validation_error")));
    let corrupt = json!({"employee_id": "cy", "name": "Cy", "contact": "cy@x.example", "images": ["AAAA"]});
    assert_eq!(srv.post_json("/employees", ADMIN_TOKEN, &corrupt).await.0, 400);

    // Multipart enrollment.
    let form = reqwest::multipart::Form::new()
        .text("record", r#"{"employee_id":"ben","name":"Ben","contact":"ben@corp.example"}"#)
        .part("image1", reqwest::multipart::Part::bytes(png(&sp_image(&sp, 1, 1))).file_name("1.png"))
        .part("image2", reqwest::multipart::Part::bytes(png(&sp_image(&sp, 1, 2))).file_name("2.png"));
    let r = srv.client.post(srv.url("/employees")).bearer_auth(ADMIN_TOKEN).multipart(form).send().await.unwrap();
    let (s, v) = split(r).await;
    assert_eq!(s, 201, "{v}");
    assert_eq!(v["enrollment_image_refs"].as_array().unwrap().len(), 2);

    let (s, list) = srv.get("/employees", ADMIN_TOKEN).await;
    assert_eq!(s, 200);
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|r| r["employee_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["ana", "ben"]);

    // Rename leaves the gallery untouched.
    let gallery_before = srv.app.attendance.export_gallery(&presenzia_core::Principal::admin()).unwrap();
    let (s, renamed) = srv.put_json("/employees/ana", ADMIN_TOKEN, &json!({"name": "Ana Maria"})).await;
    assert_eq!(s, 200);
    assert_eq!(renamed["name"], "Ana Maria");
    assert_eq!(srv.app.attendance.export_gallery(&presenzia_core::Principal::admin()).unwrap(), gallery_before);
    let (s, v) = srv.put_json("/employees/ana", ADMIN_TOKEN, &json!({"contact": "broken"})).await;
    assert_eq!((s, v["code"].as_str()), (400, Some("validation_error")));
    assert_eq!(srv.get("/employees/ana", ADMIN_TOKEN).await.1["contact"], "ana@corp.example");
    assert_eq!(srv.put_json("/employees/zed", ADMIN_TOKEN, &json!({"name": "Z"})).await.0, 404);
    let (s, _) = srv.put_json("/employees/ana", ADMIN_TOKEN, &json!({"images": [b64(&probe(&sp, 0, 1))]})).await;
    assert_eq!(s, 200);

    // Role rules.
    let ana = srv.token("ana", "employee").await;
    assert_eq!(srv.get("/employees", &ana).await.0, 403);
    assert_eq!(srv.get("/employees/ana", &ana).await.0, 200);
    assert_eq!(srv.get("/employees/ben", &ana).await.0, 403);
    assert_eq!(srv.enroll_as(&ana, "dan", &sp).await.0, 403);
    assert_eq!(srv.delete("/employees/ben", &ana).await.0, 403);
    assert_eq!(srv.post_json("/tokens", &ana, &json!({"principal_id": "x", "role": "admin"})).await.0, 403);
    assert_eq!(srv.post_json("/tokens", ADMIN_TOKEN, &json!({"principal_id": "ghost", "role": "employee"})).await.0, 404);

    let (s, _) = srv.delete("/employees/ben", ADMIN_TOKEN).await;
    assert_eq!(s, 204);
    assert_eq!(srv.get("/employees/ben", ADMIN_TOKEN).await.0, 404);
    assert_eq!(srv.delete("/employees/ben", ADMIN_TOKEN).await.0, 404);
    srv.stop().await;
}

fn sp_image(sp: &presenzia_core::synthetic::SyntheticSpec, id: usize, i: u32) -> presenzia_core::imaging::RgbImage {
    presenzia_core::synthetic::render(sp, id, i)
}

trait EnrollAs {
    async fn enroll_as(&self, token: &str, id: &str, sp: &presenzia_core::synthetic::SyntheticSpec) -> (u16, Value);
}

impl EnrollAs for TestServer {
    async fn enroll_as(&self, token: &str, id: &str, sp: &presenzia_core::synthetic::SyntheticSpec) -> (u16, Value) {
        let body = json!({"employee_id": id, "name": id, "contact": format!("{id}@x.example"), "images": [b64(&probe(sp, 0, 1))]});
        self.post_json("/employees", token, &body).await
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn session_frames_alerts_and_archive() {
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(3);
    let cfg = test_config(dir.path(), &sp);
    let store_path = cfg.store_path();
    let srv = TestServer::start(cfg).await;
    for (i, id) in ["ana", "ben"].iter().enumerate() {
        assert_eq!(srv.enroll(id, &enrollment_images(&sp, i)).await.0, 201);
    }
    let ana = srv.token("ana", "employee").await;
    let ben = srv.token("ben", "employee").await;
    let auditor = srv.token("audit-1", "auditor").await;

    let (s, v) = srv.post_json("/sessions", &ana, &json!({"planned_duration_secs": 3600, "seed": 5})).await;
    assert_eq!(s, 201, "{v}");
    let sid = v["session"]["session_id"].as_str().unwrap().to_string();
    assert_eq!(v["session"]["status"], "active");
    assert_eq!(v["schedule"]["check_times"].as_array().unwrap().len(), 6);
    assert_eq!(srv.post_json("/sessions", &ana, &json!({})).await.0, 409);
    assert_eq!(srv.post_json("/sessions", &ben, &json!({"employee_id": "ana"})).await.0, 403);

    // Own face: present.
    let (s, v) = srv.frame(&sid, &ana, &probe(&sp, 0, 1)).await;
    assert_eq!(s, 200, "{v}");
    assert_eq!(v["outcome"], "present");
    assert!(v["alert_id"].is_null());
    assert_eq!(v["faces"][0]["identification"]["decision"]["person_id"], "ana");
    assert!(v["faces"][0]["detection"]["box"].is_object());

    // Corrupt bytes: 400 and nothing persisted.
    let archive_before = srv.app.store.count("archive").unwrap();
    let (s, v) = srv.post_bytes(&format!("/sessions/{sid}/frames"), &ana, b"not an image".to_vec(), "image/png").await;
    assert_eq!((s, v["code"].as_str()), (400, Some("invalid_image")));
    assert_eq!(srv.app.store.count("archive").unwrap(), archive_before);
    assert_eq!(srv.app.store.count("checks").unwrap(), archive_before);

    // Someone else's session.
    assert_eq!(srv.frame(&sid, &ben, &probe(&sp, 1, 1)).await.0, 403);
    assert_eq!(srv.get(&format!("/sessions/{sid}"), &ben).await.0, 403);
    assert_eq!(srv.get("/sessions/sess-999999", &ana).await.0, 404);

    // Three misses with N = 3: the third response carries the alert.
    let stranger = 2;
    let mut alert_ids = Vec::new();
    for i in 0..3 {
        let img = if i == 1 { probe(&sp, 1, 2) } else { probe(&sp, stranger, i + 1) };
        let (s, v) = srv.frame(&sid, &ana, &img).await;
        assert_eq!(s, 200);
        assert_ne!(v["outcome"], "present");
        if i == 1 {
            assert_eq!(v["outcome"], "wrong_person");
        }
        alert_ids.push(v["alert_id"].clone());
    }
    assert_eq!(alert_ids[..2], [Value::Null, Value::Null]);
    let alert_id = alert_ids[2].as_str().unwrap().to_string();
    let (s, alerts) = srv.get("/alerts", ADMIN_TOKEN).await;
    assert_eq!(s, 200);
    assert_eq!(alerts.as_array().unwrap().len(), 1);
    assert_eq!(alerts[0]["alert_id"], alert_id.as_str());
    assert_eq!(alerts[0]["miss_run_length"], 3);
    assert_eq!(alerts[0]["recipients"], json!(["admin", "employee"]));
    assert_eq!(srv.get("/alerts", &ana).await.1.as_array().unwrap().len(), 1);
    assert_eq!(srv.get("/alerts", &ben).await.1.as_array().unwrap().len(), 0);
    assert_eq!(srv.get("/alerts", &auditor).await.0, 403);
    let log = alert_log_lines(&store_path);
    let recipients: Vec<&str> = log.iter().filter(|l| l["alert_id"] == alert_id.as_str()).map(|l| l["recipient"].as_str().unwrap()).collect();
    assert_eq!(recipients, ["admin", "employee"]);

    // Archive access.
    let (s, v) = srv.get("/archive", ADMIN_TOKEN).await;
    assert_eq!((s, v["code"].as_str()), (403, Some("permission_denied")));
    assert_eq!(srv.get("/archive", &ana).await.0, 403);
    let (s, own) = srv.get("/archive?self=1", &ana).await;
    assert_eq!(s, 200);
    assert_eq!(own.as_array().unwrap().len(), 4);
    assert!(own.as_array().unwrap().iter().all(|r| r["employee"]["employee_id"] == "ana"));
    assert_eq!(srv.get("/archive?self=1", &ben).await.1.as_array().unwrap().len(), 0);
    assert_eq!(srv.get("/archive?self=1&employee_id=ana", &ben).await.0, 403);
    let (s, all) = srv.get("/archive", &auditor).await;
    assert_eq!(s, 200);
    let seqs: Vec<u64> = all.as_array().unwrap().iter().map(|r| r["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, [1, 2, 3, 4]);
    let t2 = all[1]["check"]["at"].as_i64().unwrap();
    let (_, ranged) = srv.get(&format!("/archive?from={t2}"), &auditor).await;
    assert!(ranged.as_array().unwrap().iter().all(|r| r["check"]["at"].as_i64().unwrap() >= t2));
    // Non-present frames are stored, present ones are not.
    assert!(all[0]["check"]["frame_ref"].is_null());
    assert!(all[1]["check"]["frame_ref"].is_string());

    // Multipart frame upload.
    let form = reqwest::multipart::Form::new()
        .part("frame", reqwest::multipart::Part::bytes(png(&probe(&sp, 0, 2))).file_name("f.png").mime_str("image/png").unwrap());
    let r = srv.client.post(srv.url(&format!("/sessions/{sid}/frames"))).bearer_auth(&ana).multipart(form).send().await.unwrap();
    let (s, v) = split(r).await;
    assert_eq!((s, v["outcome"].as_str()), (200, Some("present")));

    // Oversize payload.
    let big = vec![0u8; presenzia_core::imaging::MAX_FRAME_BYTES + 1];
    let (s, v) = srv.post_bytes(&format!("/sessions/{sid}/frames"), &ana, big, "image/png").await;
    assert_eq!((s, v["code"].as_str()), (413, Some("payload_too_large")));

    // Listing and ending.
    assert_eq!(srv.get("/sessions", ADMIN_TOKEN).await.1.as_array().unwrap().len(), 1);
    assert_eq!(srv.get("/sessions", &ben).await.1.as_array().unwrap().len(), 0);
    assert_eq!(srv.post_json(&format!("/sessions/{sid}/end"), &ben, &json!({})).await.0, 403);
    let (s, v) = srv.post_json(&format!("/sessions/{sid}/end"), &ana, &json!({})).await;
    assert_eq!((s, v["status"].as_str()), (200, Some("ended")));
    let (s, v) = srv.frame(&sid, &ana, &probe(&sp, 0, 1)).await;
    assert_eq!((s, v["code"].as_str()), (409, Some("session_not_active")));
    assert_eq!(srv.post_json(&format!("/sessions/{sid}/end"), &ana, &json!({})).await.0, 409);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn delete_with_active_session_ends_it_by_admin() {
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(2);
    let srv = TestServer::start(test_config(dir.path(), &sp)).await;
    srv.enroll("ana", &enrollment_images(&sp, 0)).await;
    let ana = srv.token("ana", "employee").await;
    let auditor = srv.token("aud", "auditor").await;
    let (_, v) = srv.post_json("/sessions", &ana, &json!({})).await;
    let sid = v["session"]["session_id"].as_str().unwrap().to_string();
    srv.frame(&sid, &ana, &probe(&sp, 0, 1)).await;
    assert_eq!(srv.delete("/employees/ana", ADMIN_TOKEN).await.0, 204);
    let (s, v) = srv.get(&format!("/sessions/{sid}"), ADMIN_TOKEN).await;
    assert_eq!(s, 200);
    assert_eq!(v["session"]["status"], "ended_by_admin");
    // Archive survives; the deleted id cannot be reused.
    assert_eq!(srv.get("/archive", &auditor).await.1.as_array().unwrap().len(), 1);
    assert_eq!(srv.enroll("ana", &enrollment_images(&sp, 0)).await.0, 409);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_keeps_committed_state() {
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(3);
    let cfg = test_config(dir.path(), &sp);
    let srv = TestServer::start(cfg.clone()).await;
    srv.enroll("ana", &enrollment_images(&sp, 0)).await;
    srv.enroll("ben", &enrollment_images(&sp, 1)).await;
    let ana = srv.token("ana", "employee").await;
    let auditor = srv.token("aud", "auditor").await;
    let (_, v) = srv.post_json("/sessions", &ana, &json!({"seed": 1})).await;
    let sid = v["session"]["session_id"].as_str().unwrap().to_string();
    for i in 0..3 {
        srv.frame(&sid, &ana, &probe(&sp, 2, i + 1)).await;
    }
    let employees = srv.get("/employees", ADMIN_TOKEN).await.1;
    let session = srv.get(&format!("/sessions/{sid}"), &ana).await.1;
    let alerts = srv.get("/alerts", ADMIN_TOKEN).await.1;
    let archive = srv.get("/archive", &auditor).await.1;
    let log_before = alert_log_lines(&cfg.store_path()).len();
    srv.stop().await;

    let srv = TestServer::start(cfg.clone()).await;
    assert_eq!(srv.get("/employees", ADMIN_TOKEN).await.1, employees);
    assert_eq!(srv.get(&format!("/sessions/{sid}"), &ana).await.1, session);
    assert_eq!(srv.get("/alerts", ADMIN_TOKEN).await.1, alerts);
    assert_eq!(srv.get("/archive", &auditor).await.1, archive);
    // Delivered alerts are not delivered again.
    assert_eq!(alert_log_lines(&cfg.store_path()).len(), log_before);
    // Recognition and numbering continue.
    let (_, v) = srv.frame(&sid, &ana, &probe(&sp, 0, 1)).await;
    assert_eq!(v["outcome"], "present");
    assert_eq!(v["archive_seq"], 4);
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn sweeper_records_missed_checks() {
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(2);
    let mut cfg = test_config(dir.path(), &sp);
    cfg.tracking.grace_secs = 0;
    cfg.tracking.n_miss = 2;
    cfg.sweep_interval_secs = 1;
    let srv = TestServer::start(cfg).await;
    srv.enroll("ana", &enrollment_images(&sp, 0)).await;
    let ana = srv.token("ana", "employee").await;
    let (_, v) = srv.post_json("/sessions", &ana, &json!({"planned_duration_secs": 1})).await;
    let sid = v["session"]["session_id"].as_str().unwrap().to_string();
    let mut recorded = 0;
    for _ in 0..50 {
        tokio::time::sleep(std::time::Duration::from_millis(100)).await;
        recorded = srv.get(&format!("/sessions/{sid}"), &ana).await.1["session"]["checks_done"].as_u64().unwrap();
        if recorded == 6 {
            break;
        }
    }
    assert_eq!(recorded, 6);
    let (_, v) = srv.get(&format!("/sessions/{sid}"), &ana).await;
    assert_eq!(v["last_check"]["outcome"], "no_face");
    // The alert fires once, when the run first reaches N.
    assert_eq!(srv.get("/alerts", ADMIN_TOKEN).await.1.as_array().unwrap().len(), 1);
    srv.stop().await;
}

fn alert_positions(present: &[bool], n: u32) -> usize {
    let mut run = 0;
    let mut count = 0;
    for &p in present {
        run = if p { 0 } else { run + 1 };
        if run == n {
            count += 1;
        }
    }
    count
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_clients_keep_archive_and_alerts_consistent() {
    const EMPLOYEES: usize = 8;
    const CLIENTS_PER_SESSION: usize = 4;
    const FRAMES_PER_CLIENT: u32 = 6;
    let dir = tempfile::tempdir().unwrap();
    let sp = spec(EMPLOYEES);
    let cfg = test_config(dir.path(), &sp);
    let store_path = cfg.store_path();
    let srv = std::sync::Arc::new(TestServer::start(cfg).await);
    let mut sessions = Vec::new();
    for e in 0..EMPLOYEES {
        let id = format!("e{e}");
        assert_eq!(srv.enroll(&id, &enrollment_images(&sp, e)).await.0, 201);
        let tok = srv.token(&id, "employee").await;
        let (s, v) = srv.post_json("/sessions", &tok, &json!({})).await;
        assert_eq!(s, 201);
        sessions.push((e, tok, v["session"]["session_id"].as_str().unwrap().to_string()));
    }
    let stranger = EMPLOYEES + 1;

    let mut tasks = Vec::new();
    for (e, tok, sid) in &sessions {
        for c in 0..CLIENTS_PER_SESSION {
            let (srv, tok, sid, sp, e) = (srv.clone(), tok.clone(), sid.clone(), sp.clone(), *e);
            tasks.push(tokio::spawn(async move {
                for f in 0..FRAMES_PER_CLIENT {
                    // Clients of a session mostly send strangers so that alerts race.
                    let own = (c as u32 + f) % 3 == 0;
                    let img = if own { probe(&sp, e, 1 + f % 3) } else { probe(&sp, stranger, 1 + f % 4) };
                    let (s, v) = srv.frame(&sid, &tok, &img).await;
                    assert_eq!(s, 200, "{v}");
                    assert_eq!(v["outcome"] == "present", own, "{v}");
                }
            }));
        }
    }
    for t in tasks {
        t.await.unwrap();
    }

    let auditor = srv.token("aud", "auditor").await;
    let (_, archive) = srv.get("/archive", &auditor).await;
    let archive = archive.as_array().unwrap().clone();
    let total = EMPLOYEES * CLIENTS_PER_SESSION * FRAMES_PER_CLIENT as usize;
    assert_eq!(archive.len(), total);
    let seqs: Vec<u64> = archive.iter().map(|r| r["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=total as u64).collect::<Vec<_>>());
    let check_ids: std::collections::HashSet<u64> = archive.iter().map(|r| r["check"]["check_id"].as_u64().unwrap()).collect();
    assert_eq!(check_ids.len(), total);

    let (_, alerts) = srv.get("/alerts", ADMIN_TOKEN).await;
    let alerts = alerts.as_array().unwrap();
    let ids: std::collections::HashSet<&str> = alerts.iter().map(|a| a["alert_id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), alerts.len());
    for (_, _, sid) in &sessions {
        // The archive order is the commit order, so the run-length oracle applies to it.
        let present: Vec<bool> = archive
            .iter()
            .filter(|r| r["check"]["session_id"] == sid.as_str())
            .map(|r| r["check"]["outcome"] == "present")
            .collect();
        let expected = alert_positions(&present, 3);
        let got = alerts.iter().filter(|a| a["session_id"] == sid.as_str()).count();
        assert_eq!(got, expected, "session {sid}");
        let (_, rec) = srv.get(&format!("/sessions/{sid}"), ADMIN_TOKEN).await;
        assert_eq!(rec["session"]["checks_done"], present.len());
    }
    let log = alert_log_lines(&store_path);
    assert_eq!(log.len(), 2 * alerts.len());
    std::sync::Arc::into_inner(srv).unwrap().stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn every_documented_route_is_mounted() {
    let dir = tempfile::tempdir().unwrap();
    let srv = TestServer::start(test_config(dir.path(), &spec(2))).await;
    for (method, path) in presenzia_service::openapi::ROUTES {
        let url = srv.url(&path.replace("{id}", "nobody"));
        let req = match *method {
            "get" => srv.client.get(url),
            "post" => srv.client.post(url),
            "put" => srv.client.put(url),
            "delete" => srv.client.delete(url),
            m => panic!("unexpected method {m}"),
        };
        let (s, v) = split(req.bearer_auth(ADMIN_TOKEN).send().await.unwrap()).await;
        assert_ne!(s, 405, "{method} {path}");
        assert_ne!(v["message"], "no such route", "{method} {path}");
    }
    srv.stop().await;
}
