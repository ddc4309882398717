//! OpenAPI 3.1 description of the REST surface, written to `docs/openapi.json`
//! by `presenzia openapi`.

use serde_json::{json, Map, Value};

/// Every mounted `(method, path)` pair, in router order.
pub const ROUTES: &[(&str, &str)] = &[
    ("get", "/healthz"),
    ("post", "/tokens"),
    ("post", "/employees"),
    ("get", "/employees"),
    ("get", "/employees/{id}"),
    ("put", "/employees/{id}"),
    ("delete", "/employees/{id}"),
    ("post", "/sessions"),
    ("get", "/sessions"),
    ("get", "/sessions/{id}"),
    ("post", "/sessions/{id}/frames"),
    ("post", "/sessions/{id}/end"),
    ("get", "/alerts"),
    ("get", "/archive"),
];

fn schema(name: &str) -> Value {
    json!({ "$ref": format!("#/components/schemas/{name}") })
}

fn array_of(name: &str) -> Value {
    json!({ "type": "array", "items": schema(name) })
}

fn json_content(s: Value) -> Value {
    json!({ "application/json": { "schema": s } })
}

fn ok(status: &str, description: &str, body: Option<Value>) -> (String, Value) {
    let mut r = json!({ "description": description });
    if let Some(b) = body {
        r["content"] = json_content(b);
    }
    (status.to_string(), r)
}

fn errors(codes: &[&str]) -> Vec<(String, Value)> {
    codes
        .iter()
        .map(|c| {
            let description = match *c {
                "400" => "Invalid request, image or enrollment",
                "401" => "Missing or unknown bearer token",
                "403" => "Role not allowed",
                "404" => "Unknown id",
                "409" => "Conflicting state",
                "413" => "Payload too large",
                "503" => "Recognition backend unavailable",
                _ => "Error",
            };
            (c.to_string(), json!({ "description": description, "content": json_content(schema("Error")) }))
        })
        .collect()
}

fn id_param() -> Value {
    json!({ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } })
}

fn operation(summary: &str, params: Vec<Value>, body: Option<Value>, responses: Vec<(String, Value)>, secured: bool) -> Value {
    let mut op = json!({ "summary": summary });
    if !params.is_empty() {
        op["parameters"] = Value::Array(params);
    }
    if let Some(b) = body {
        op["requestBody"] = b;
    }
    op["responses"] = Value::Object(responses.into_iter().collect::<Map<_, _>>());
    if !secured {
        op["security"] = json!([]);
    }
    op
}

fn with(mut base: Vec<(String, Value)>, codes: &[&str]) -> Vec<(String, Value)> {
    base.extend(errors(codes));
    base
}

fn paths() -> Value {
    let image_body = json!({
        "required": true,
        "content": {
            "image/jpeg": { "schema": { "type": "string", "format": "binary" } },
            "image/png": { "schema": { "type": "string", "format": "binary" } },
            "multipart/form-data": {
                "schema": { "type": "object", "properties": { "frame": { "type": "string", "format": "binary" } } }
            }
        }
    });
    let enroll_body = json!({
        "required": true,
        "content": {
            "application/json": { "schema": schema("NewEmployee") },
            "multipart/form-data": {
                "schema": {
                    "type": "object",
                    "required": ["record"],
                    "properties": {
                        "record": schema("EmployeeFields"),
                        "image": { "type": "array", "items": { "type": "string", "format": "binary" } }
                    }
                }
            }
        }
    });
    let json_body = |name: &str, required: bool| json!({ "required": required, "content": json_content(schema(name)) });
    let archive_params = vec![
        json!({ "name": "self", "in": "query", "schema": { "type": "string", "enum": ["1", "true"] },
                "description": "Required for employees, who may read only their own records." }),
        json!({ "name": "employee_id", "in": "query", "schema": { "type": "string" } }),
        json!({ "name": "session_id", "in": "query", "schema": { "type": "string" } }),
        json!({ "name": "from", "in": "query", "schema": { "type": "integer", "format": "int64" },
                "description": "Inclusive lower bound, epoch milliseconds." }),
        json!({ "name": "to", "in": "query", "schema": { "type": "integer", "format": "int64" },
                "description": "Exclusive upper bound, epoch milliseconds." }),
    ];

    let mut p = Map::new();
    let mut put = |path: &str, method: &str, op: Value| {
        let entry = p.entry(path.to_string()).or_insert_with(|| json!({}));
        entry[method] = op;
    };
    put("/healthz", "get", operation("Liveness probe", vec![], None, vec![ok("200", "Service is up", Some(schema("Health")))], false));
    put(
        "/tokens",
        "post",
        operation("Issue an API token (admin)", vec![], Some(json_body("TokenRequest", true)),
            with(vec![ok("201", "Token issued; shown only once", Some(schema("TokenResponse")))], &["400", "401", "403", "404"]), true),
    );
    put(
        "/employees",
        "post",
        operation("Add and enroll an employee (admin)", vec![], Some(enroll_body),
            with(vec![ok("201", "Employee created", Some(schema("EmployeeRecord")))], &["400", "401", "403", "409", "413", "503"]), true),
    );
    put(
        "/employees",
        "get",
        operation("List employees (admin)", vec![], None, with(vec![ok("200", "Employees", Some(array_of("EmployeeRecord")))], &["401", "403"]), true),
    );
    put(
        "/employees/{id}",
        "get",
        operation("Read an employee (admin, or the employee)", vec![id_param()], None,
            with(vec![ok("200", "Employee", Some(schema("EmployeeRecord")))], &["401", "403", "404"]), true),
    );
    put(
        "/employees/{id}",
        "put",
        operation("Update fields and optionally re-enroll (admin)", vec![id_param()], Some(json_body("EmployeeUpdate", true)),
            with(vec![ok("200", "Updated employee", Some(schema("EmployeeRecord")))], &["400", "401", "403", "404", "503"]), true),
    );
    put(
        "/employees/{id}",
        "delete",
        operation("Delete an employee; archive records are kept (admin)", vec![id_param()], None,
            with(vec![ok("204", "Deleted", None)], &["401", "403", "404"]), true),
    );
    put(
        "/sessions",
        "post",
        operation("Start a work session for the calling employee", vec![], Some(json_body("StartSession", false)),
            with(vec![ok("201", "Session with its check schedule", Some(schema("SessionRecord")))], &["400", "401", "403", "404", "409"]), true),
    );
    put(
        "/sessions",
        "get",
        operation("List sessions visible to the caller", vec![], None,
            with(vec![ok("200", "Sessions", Some(array_of("SessionRecord")))], &["401", "403"]), true),
    );
    put(
        "/sessions/{id}",
        "get",
        operation("Read a session", vec![id_param()], None,
            with(vec![ok("200", "Session", Some(schema("SessionRecord")))], &["401", "403", "404"]), true),
    );
    put(
        "/sessions/{id}/frames",
        "post",
        operation("Submit a webcam frame for a presence check", vec![id_param()], Some(image_body),
            with(vec![ok("200", "Recorded check", Some(schema("FrameResponse")))], &["400", "401", "403", "404", "409", "413", "503"]), true),
    );
    put(
        "/sessions/{id}/end",
        "post",
        operation("End a session", vec![id_param()], None,
            with(vec![ok("200", "Ended session", Some(schema("WorkSession")))], &["401", "403", "404", "409"]), true),
    );
    put(
        "/alerts",
        "get",
        operation("Alerts (admin: all, employee: own)", vec![], None,
            with(vec![ok("200", "Alerts", Some(array_of("AlertEvent")))], &["401", "403"]), true),
    );
    put(
        "/archive",
        "get",
        operation("Query the presence archive (auditor, or employee with self=1; never admin)", archive_params, None,
            with(vec![ok("200", "Archive records in sequence order", Some(array_of("ArchiveRecord")))], &["400", "401", "403"]), true),
    );
    Value::Object(p)
}

fn schemas() -> Value {
    let ts = json!({ "type": "integer", "format": "int64", "description": "Epoch milliseconds" });
    let opt = |v: Value| json!({ "oneOf": [v, { "type": "null" }] });
    let s = |t: &str| json!({ "type": t });
    json!({
        "Error": { "type": "object", "required": ["code", "message"], "properties": {
            "code": { "type": "string", "examples": ["permission_denied", "not_found", "validation_error"] },
            "message": s("string") } },
        "Health": { "type": "object", "required": ["status"], "properties": { "status": s("string") } },
        "Role": { "type": "string", "enum": ["admin", "employee", "auditor"] },
        "EmployeeRole": { "type": "string", "enum": ["admin", "employee"] },
        "TokenRequest": { "type": "object", "required": ["principal_id", "role"], "properties": {
            "principal_id": s("string"), "role": schema("Role") } },
        "TokenResponse": { "type": "object", "required": ["token", "principal_id", "role"], "properties": {
            "token": s("string"), "principal_id": s("string"), "role": schema("Role") } },
        "EmployeeFields": { "type": "object", "required": ["employee_id", "name", "contact"], "properties": {
            "employee_id": s("string"), "name": s("string"),
            "contact": { "type": "string", "format": "email" },
            "role": schema("EmployeeRole") } },
        "NewEmployee": { "allOf": [schema("EmployeeFields"), { "type": "object", "required": ["images"], "properties": {
            "images": { "type": "array", "minItems": 1, "items": { "type": "string", "contentEncoding": "base64" } } } }] },
        "EmployeeUpdate": { "type": "object", "properties": {
            "name": s("string"), "contact": { "type": "string", "format": "email" },
            "role": schema("EmployeeRole"), "active": s("boolean"),
            "images": { "type": "array", "items": { "type": "string", "contentEncoding": "base64" } } } },
        "EmployeeRecord": { "type": "object", "required": ["employee_id", "name", "contact", "role", "active", "enrollment_image_refs"], "properties": {
            "employee_id": s("string"), "name": s("string"), "contact": s("string"),
            "role": schema("EmployeeRole"), "active": s("boolean"),
            "enrollment_image_refs": { "type": "array", "items": s("string") } } },
        "StartSession": { "type": "object", "properties": {
            "employee_id": { "type": "string", "description": "Defaults to the caller" },
            "planned_duration_secs": { "type": "integer", "minimum": 1 },
            "seed": { "type": "integer", "description": "Schedule seed; derived from the session id when absent" } } },
        "SessionStatus": { "type": "string", "enum": ["active", "ended", "ended_by_admin"] },
        "WorkSession": { "type": "object", "required": ["session_id", "employee_id", "started_at", "status", "miss_run", "checks_done"], "properties": {
            "session_id": s("string"), "employee_id": s("string"), "started_at": ts, "ended_at": opt(ts.clone()),
            "status": schema("SessionStatus"), "miss_run": s("integer"), "checks_done": s("integer") } },
        "CheckSchedule": { "type": "object", "properties": {
            "session_id": s("string"), "check_times": { "type": "array", "items": ts },
            "segment_count": s("integer"), "rng_seed": s("integer") } },
        "SessionRecord": { "type": "object", "required": ["session", "schedule", "next_slot"], "properties": {
            "session": schema("WorkSession"), "schedule": schema("CheckSchedule"),
            "next_slot": s("integer"), "last_check": opt(schema("PresenceCheck")) } },
        "CheckOutcome": { "type": "string", "enum": ["present", "no_face", "unknown_face", "wrong_person"] },
        "PresenceCheck": { "type": "object", "properties": {
            "check_id": s("integer"), "session_id": s("string"), "at": ts, "outcome": schema("CheckOutcome"),
            "best_distance": opt(s("number")), "frame_ref": opt(s("string")), "slot": opt(s("integer")) } },
        "BoundingBox": { "type": "object", "properties": { "x": s("number"), "y": s("number"), "w": s("number"), "h": s("number") } },
        "Detection": { "type": "object", "properties": {
            "box": schema("BoundingBox"), "prob": s("number"),
            "landmarks": { "type": "array", "minItems": 5, "maxItems": 5,
                "items": { "type": "array", "minItems": 2, "maxItems": 2, "items": s("number") } } } },
        "Identification": { "type": "object", "properties": {
            "candidates": { "type": "array", "items": { "type": "object", "properties": {
                "person_id": s("string"), "distance": s("number") } } },
            "decision": { "type": "object", "required": ["kind"], "properties": {
                "kind": { "type": "string", "enum": ["person", "unknown"] }, "person_id": s("string") } } } },
        "FaceRecognition": { "type": "object", "properties": { "detection": schema("Detection"), "identification": schema("Identification") } },
        "FrameResponse": { "type": "object", "required": ["outcome", "faces", "session", "check", "archive_seq"], "properties": {
            "outcome": schema("CheckOutcome"), "alert_id": opt(s("string")),
            "faces": { "type": "array", "items": schema("FaceRecognition") },
            "session": schema("WorkSession"), "check": schema("PresenceCheck"),
            "alert": opt(schema("AlertEvent")), "archive_seq": s("integer") } },
        "AlertEvent": { "type": "object", "properties": {
            "alert_id": s("string"), "session_id": s("string"), "employee_id": s("string"),
            "triggered_at": ts, "miss_run_length": s("integer"),
            "recipients": { "type": "array", "items": { "type": "string", "enum": ["admin", "employee"] } } } },
        "ArchiveRecord": { "type": "object", "properties": {
            "seq": s("integer"), "check": schema("PresenceCheck"),
            "employee": { "type": "object", "properties": { "employee_id": s("string"), "name": s("string"), "contact": s("string") } } } }
    })
}

/// The full document.
pub fn document() -> Value {
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "presenzia",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Face-recognition attendance service. Errors are {code, message} objects."
        },
        "security": [{ "bearer": [] }],
        "paths": paths(),
        "components": {
            "securitySchemes": { "bearer": { "type": "http", "scheme": "bearer" } },
            "schemas": schemas()
        }
    })
}

/// Pretty JSON with a trailing newline, as checked in.
pub fn render() -> String {
    let mut s = serde_json::to_string_pretty(&document()).expect("document serializes");
    s.push('\n');
    s
}
