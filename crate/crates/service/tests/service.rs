use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use probe_core::manifest::{Condition, Facets};
use probe_core::{Family, StimRng, Task, TrialInfo};
use probe_service::state::ResponsePlan;
use probe_service::{select_human_subset, AppState, EventLog, ServiceConfig, ServiceError, ServiceState};

fn info(task: Task, id: String, stratum: String, answer: i64) -> TrialInfo {
    let facets = match task {
        Task::Oddball => Facets::Oddball {
            concept: stratum.clone(),
            mdl: 3,
            family: Family::Elements,
        },
        Task::Numerosity => Facets::Numerosity {
            condition: Condition::UniformDistinct,
            numerosity: answer as usize,
        },
        Task::Rotation => Facets::Rotation {
            ch: 'F',
            theta_deg: 0,
            disparity_deg: 0,
            pair_same: answer == 1,
            first_mirrored: false,
        },
    };
    TrialInfo {
        human_images: vec![format!("{task}/{id}/scene.png")],
        model_image: format!("{task}/{id}/scene.png"),
        trial_id: id,
        task,
        answer,
        stratum,
        facets,
    }
}

/// Full-size designs: 37 concepts × 100, 32 cells × 100, 72 cells × 52.
fn design(task: Task) -> Vec<TrialInfo> {
    let (cells, per) = match task {
        Task::Oddball => (37, 100),
        Task::Numerosity => (32, 100),
        Task::Rotation => (72, 52),
    };
    (0..cells)
        .flat_map(|c| {
            (0..per).map(move |k| {
                let answer = match task {
                    Task::Oddball => 1 + (k % 6) as i64,
                    Task::Numerosity => 1 + (c % 8) as i64,
                    Task::Rotation => (c % 2) as i64,
                };
                info(task, format!("{task}-{c:02}-{k:03}"), format!("cell{c:02}"), answer)
            })
        })
        .collect()
}

fn state(task: Task) -> ServiceState {
    ServiceState::from_trials(ServiceConfig::default(), BTreeMap::from([(task, design(task))]))
}

fn create(s: &mut ServiceState, task: Task) -> String {
    let e = s.plan_session(task, "t".into()).unwrap();
    s.apply(&e).unwrap();
    match e {
        probe_service::Event::SessionCreated { session_id, .. } => session_id,
        _ => unreachable!(),
    }
}

fn answer_all(s: &mut ServiceState, id: &str, rng: &mut StimRng) {
    while let Some(t) = s.next_trial(id).unwrap().cloned() {
        let rt = rng.range(150.0, 4000.0);
        let plan = s.plan_response(id, &t.trial_id, t.answer, rt, "t".into()).unwrap();
        let ResponsePlan::Record(e) = plan else { panic!("unexpected duplicate") };
        s.apply(&e).unwrap();
    }
}

#[test]
fn stratified_subset_sizes() {
    let count = |task, f| select_human_subset(&design(task), f, 1).len();
    assert_eq!(count(Task::Oddball, 0.2), 740);
    assert_eq!(count(Task::Numerosity, 0.2), 640);
    assert_eq!(count(Task::Rotation, 0.2), 72 * 11);
    assert_eq!(count(Task::Oddball, 1.0), 3700);
    let sub = select_human_subset(&design(Task::Oddball), 0.2, 1);
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &sub {
        *per.entry(&t.stratum).or_default() += 1;
    }
    assert!(per.values().all(|n| *n == 20));
    assert_eq!(sub, select_human_subset(&design(Task::Oddball), 0.2, 1));
    assert_ne!(sub, select_human_subset(&design(Task::Oddball), 0.2, 2));
}

#[test]
fn sessions_are_coverage_first_and_balanced() {
    let mut s = state(Task::Oddball);
    let subset: BTreeMap<String, String> =
        s.subset(Task::Oddball).unwrap().iter().map(|t| (t.trial_id.clone(), t.stratum.clone())).collect();
    let mut rng = StimRng::new(4);
    for k in 0..296 {
        let before = s.coverage(Task::Oddball).unwrap();
        let id = create(&mut s, Task::Oddball);
        let session = s.session(&id).unwrap().clone();
        assert_eq!(session.assigned_trials.len(), 50);
        let unique: BTreeSet<&String> = session.assigned_trials.iter().collect();
        assert_eq!(unique.len(), 50);
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &session.assigned_trials {
            *per.entry(subset[t].as_str()).or_default() += 1;
        }
        let (lo, hi) = (per.values().min().unwrap(), per.values().max().unwrap());
        assert!(per.len() == 37 && hi - lo <= 1, "{per:?}");
        if k == 0 {
            assert!(before.trials.iter().all(|t| t.judgments == 0));
        }
        answer_all(&mut s, &id, &mut rng);
        let c = s.coverage(Task::Oddball).unwrap();
        assert!(c.max_judgments - c.min_judgments <= 2, "session {k}: {} .. {}", c.min_judgments, c.max_judgments);
    }
    // 296 sessions × 50 = 740 trials × 20
    let c = s.coverage(Task::Oddball).unwrap();
    assert_eq!((c.min_judgments, c.max_judgments, c.n_below_target), (20, 20, 0));
}

#[test]
fn concurrent_sessions_spread_before_overlapping() {
    let mut s = state(Task::Numerosity);
    let mut seen = BTreeMap::<String, u32>::new();
    for _ in 0..100 {
        let id = create(&mut s, Task::Numerosity);
        for t in &s.session(&id).unwrap().assigned_trials {
            *seen.entry(t.clone()).or_default() += 1;
        }
    }
    // 100 × 50 assignments over 640 trials, nobody answered yet
    let counts: Vec<u32> = s.coverage(Task::Numerosity).unwrap().trials.iter().map(|t| t.assigned).collect();
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    assert!(hi - lo <= 2, "{lo}..{hi}");
    assert_eq!(seen.values().sum::<u32>(), 5000);
}

#[test]
fn response_semantics() {
    let mut s = state(Task::Rotation);
    let id = create(&mut s, Task::Rotation);
    let trials = s.session(&id).unwrap().assigned_trials.clone();
    assert!(matches!(
        s.plan_response("nope", &trials[0], 1, 900.0, "t".into()),
        Err(ServiceError::UnknownSession(_))
    ));
    assert!(matches!(
        s.plan_response(&id, &trials[1], 1, 900.0, "t".into()),
        Err(ServiceError::OutOfOrder { .. })
    ));
    assert!(matches!(
        s.plan_response(&id, &trials[0], 1, 0.0, "t".into()),
        Err(ServiceError::InvalidResponse(_))
    ));
    assert!(matches!(
        s.plan_response(&id, &trials[0], 7, 900.0, "t".into()),
        Err(ServiceError::InvalidResponse(_))
    ));
    let ResponsePlan::Record(e) = s.plan_response(&id, &trials[0], 1, 150.0, "t".into()).unwrap() else { panic!() };
    s.apply(&e).unwrap();
    assert_eq!(s.session(&id).unwrap().cursor, 1);
    assert!(!s.responses()[0].valid, "150 ms is below the RT floor");
    let dup = s.plan_response(&id, &trials[0], 0, 800.0, "t".into()).unwrap();
    let ResponsePlan::Duplicate(ack) = dup else { panic!() };
    assert!(ack.duplicate && ack.cursor == 1);
    assert_eq!(s.responses().len(), 1);
    assert_eq!(s.responses()[0].answer, 1, "first write kept");
    answer_all(&mut s, &id, &mut StimRng::new(1));
    assert!(s.session(&id).unwrap().is_complete());
    assert!(s.next_trial(&id).unwrap().is_none());
    assert!(matches!(
        s.plan_response(&id, "rotation-00-000-x", 1, 900.0, "t".into()),
        Err(ServiceError::SessionComplete(_))
    ));
    assert!(matches!(s.plan_response(&id, &trials[49], 1, 900.0, "t".into()), Ok(ResponsePlan::Duplicate(_))));
    assert_eq!(s.plan_session(Task::Oddball, "t".into()).unwrap_err(), ServiceError::UnknownTask(Task::Oddball));
}

#[test]
fn small_subset_cannot_fill_a_session() {
    let trials: Vec<TrialInfo> = design(Task::Oddball).into_iter().take(100).collect();
    let s = ServiceState::from_trials(ServiceConfig::default(), BTreeMap::from([(Task::Oddball, trials)]));
    assert!(matches!(s.plan_session(Task::Oddball, "t".into()), Err(ServiceError::SubsetExhausted { available: 20, .. })));
}

fn snapshot(s: &ServiceState, task: Task) -> (Vec<probe_service::Session>, BTreeMap<String, u32>, usize) {
    (s.sessions().cloned().collect(), s.judgment_counts(task), s.responses().len())
}

#[test]
fn log_replay_rebuilds_state_and_drops_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut s = state(Task::Numerosity);
    let mut rng = StimRng::new(9);
    {
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert!(events.is_empty());
        for k in 0..7 {
            let e = s.plan_session(Task::Numerosity, format!("t{k}")).unwrap();
            log.append(&e).unwrap();
            s.apply(&e).unwrap();
            let probe_service::Event::SessionCreated { session_id, .. } = &e else { unreachable!() };
            let n = 10 + 5 * k;
            for _ in 0..n {
                let Some(t) = s.next_trial(session_id).unwrap().cloned() else { break };
                let ResponsePlan::Record(r) =
                    s.plan_response(session_id, &t.trial_id, 3, rng.range(300.0, 2000.0), "t".into()).unwrap()
                else {
                    unreachable!()
                };
                log.append(&r).unwrap();
                s.apply(&r).unwrap();
            }
        }
    }
    // a crash mid-write leaves half a line behind
    use std::io::Write;
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"event\":\"respo").unwrap();
    let (_, events) = EventLog::open(&path).unwrap();
    let mut replayed = state(Task::Numerosity);
    for e in &events {
        replayed.apply(e).unwrap();
    }
    assert_eq!(snapshot(&replayed, Task::Numerosity), snapshot(&s, Task::Numerosity));
    assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));

    // the next session after replay matches the one the original would create
    assert_eq!(
        replayed.plan_session(Task::Numerosity, "x".into()).unwrap(),
        s.plan_session(Task::Numerosity, "x".into()).unwrap()
    );
}

// ---------------------------------------------------------------- HTTP

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

fn start(app: AppState) -> Server {
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            probe_service::serve_on(app, listener, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
    });
    let addr = addr_rx.recv().unwrap();
    Server {
        base: format!("http://{addr}"),
        stop: Some(tx),
        thread: Some(thread),
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(a: &ureq::Agent, url: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
    let mut r = a.post(url).header("Content-Type", "application/json").send(body.to_string()).unwrap();
    let status = r.status().as_u16();
    (status, serde_json::from_str(&r.body_mut().read_to_string().unwrap()).unwrap())
}

fn get(a: &ureq::Agent, url: &str, token: Option<&str>) -> (u16, String) {
    let mut req = a.get(url);
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut r = req.call().unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
}

fn app(dir: &Path) -> AppState {
    let stimuli = dir.join("stimuli");
    std::fs::create_dir_all(stimuli.join("oddball")).unwrap();
    std::fs::write(stimuli.join("oddball/hello.png"), b"png bytes").unwrap();
    AppState::with_state_from(state(Task::Oddball), &dir.join("log/events.jsonl"), &stimuli, Some("tok".into())).unwrap()
}

#[test]
fn http_session_flow_export_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let a = agent();
    let (session_id, counts) = {
        let server = start(app(dir.path()));
        let b = &server.base;
        let (st, created) = post(&a, &format!("{b}/api/session"), serde_json::json!({"task": "oddball"}));
        assert_eq!(st, 200);
        assert_eq!(created["n_trials"], 50);
        let sid = created["session_id"].as_str().unwrap().to_string();
        let (st, _) = post(&a, &format!("{b}/api/session"), serde_json::json!({"task": "rotation"}));
        assert_eq!(st, 400);
        let (st, _) = post(&a, &format!("{b}/api/session/zzz/response"), serde_json::json!({"trial_id": "x", "answer": 1, "rt_ms": 500.0}));
        assert_eq!(st, 404);

        for i in 0..50 {
            let (st, next) = get(&a, &format!("{b}/api/session/{sid}/next"), None);
            assert_eq!(st, 200);
            let next: serde_json::Value = serde_json::from_str(&next).unwrap();
            assert_eq!(next["done"], false);
            assert_eq!(next["index"], i);
            assert_eq!(next["answer_schema"]["options"].as_array().unwrap().len(), 6);
            assert!(next["images"][0].as_str().unwrap().starts_with("/stimuli/oddball/"));
            let tid = next["trial_id"].as_str().unwrap();
            let body = serde_json::json!({"trial_id": tid, "answer": 1 + i % 6, "rt_ms": 400.0 + i as f64});
            let (st, ack) = post(&a, &format!("{b}/api/session/{sid}/response"), body.clone());
            assert_eq!((st, &ack["duplicate"]), (200, &serde_json::json!(false)));
            assert_eq!(ack["cursor"], i + 1);
            if i == 10 {
                let (st, ack) = post(&a, &format!("{b}/api/session/{sid}/response"), body);
                assert_eq!((st, &ack["duplicate"]), (200, &serde_json::json!(true)));
            }
        }
        let (_, done) = get(&a, &format!("{b}/api/session/{sid}/next"), None);
        assert!(done.contains("\"done\":true"));
        let (st, err) = post(&a, &format!("{b}/api/session/{sid}/response"), serde_json::json!({"trial_id": "other", "answer": 1, "rt_ms": 500.0}));
        assert_eq!((st, err["error"].as_str()), (409, Some("SessionComplete")));

        assert_eq!(get(&a, &format!("{b}/api/export?task=oddball"), None).0, 401);
        assert_eq!(get(&a, &format!("{b}/api/export?task=oddball"), Some("bad")).0, 401);
        let (st, jsonl) = get(&a, &format!("{b}/api/export?task=oddball"), Some("tok"));
        assert_eq!(st, 200);
        let lines: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 50);
        let stamps: Vec<&str> = lines.iter().map(|l| l["server_received_at"].as_str().unwrap()).collect();
        assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
        assert!(stamps[0].ends_with('Z'));

        let (st, png) = get(&a, &format!("{b}/stimuli/oddball/hello.png"), None);
        assert_eq!((st, png.as_str()), (200, "png bytes"));
        let (_, cov) = get(&a, &format!("{b}/api/coverage?task=oddball"), None);
        let cov: serde_json::Value = serde_json::from_str(&cov).unwrap();
        (sid, cov["trials"].clone())
    };
    // restart on the same log
    let server = start(app(dir.path()));
    let (_, cov) = get(&a, &format!("{}/api/coverage?task=oddball", server.base), None);
    let cov: serde_json::Value = serde_json::from_str(&cov).unwrap();
    assert_eq!(cov["trials"], counts);
    let (_, session) = get(&a, &format!("{}/api/session/{session_id}", server.base), None);
    assert!(session.contains("\"cursor\":50"));
}
